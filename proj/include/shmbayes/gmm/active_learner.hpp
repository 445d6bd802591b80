#pragma once

// Online active learning over a batched stream: each batch is normalised
// point by point, scored under the current model, and a budgeted subset is
// sent to a label oracle. Only answered points enter the model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "shmbayes/eval/metrics.hpp"
#include "shmbayes/gmm/bayes_gmm.hpp"

namespace shmbayes::gmm {

// ---------------------------------------------------------------------------
// Online normaliser

class NormalizerState {
 public:
  static constexpr double kStdFloor = 1e-8;

  NormalizerState() = default;
  explicit NormalizerState(Eigen::Index d) : mean_(Vector::Zero(d)), m2_(Vector::Zero(d)) {}

  /// Accumulators primed with every row of X.
  static NormalizerState warm_start(const Matrix& X) {
    NormalizerState s(X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) s.update(X.row(i).transpose());
    return s;
  }

  Eigen::Index dim() const { return mean_.size(); }
  std::size_t count() const { return count_; }
  const Vector& mean() const { return mean_; }
  Vector variance() const {
    if (count_ < 2) return Vector::Zero(dim());
    return m2_ / static_cast<double>(count_ - 1);
  }

  void update(const Vector& x) {
    require_dim(x.size(), dim(), "NormalizerState::update");
    ++count_;
    const Vector delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(x - mean_);
  }

  /// Standardises with the current statistics without updating them. Until
  /// two observations have been seen the spread is undefined and the zero
  /// vector is returned.
  Vector transform(const Vector& x) const {
    require_dim(x.size(), dim(), "NormalizerState::transform");
    if (count_ < 2) return Vector::Zero(dim());
    const Vector sd = variance().cwiseSqrt().cwiseMax(kStdFloor);
    return (x - mean_).cwiseQuotient(sd);
  }

  Matrix transform(const Matrix& X) const {
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = transform(Vector(X.row(i).transpose())).transpose();
    return out;
  }

  /// Standardise with the statistics before x, then absorb x.
  Vector push(const Vector& x) {
    Vector z = transform(x);
    update(x);
    return z;
  }

 private:
  Vector mean_;
  Vector m2_;
  std::size_t count_ = 0;
};

inline std::pair<NormalizerState, Vector> normalize(const NormalizerState& state, const Vector& x) {
  NormalizerState next = state;
  Vector z = next.push(x);
  return {std::move(next), std::move(z)};
}

// ---------------------------------------------------------------------------
// Query selection

enum class Strategy { entropy, likelihood, split, random };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::entropy: return "entropy";
    case Strategy::likelihood: return "likelihood";
    case Strategy::split: return "split";
    case Strategy::random: return "random";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "entropy") return Strategy::entropy;
  if (s == "likelihood") return Strategy::likelihood;
  if (s == "split") return Strategy::split;
  if (s == "random") return Strategy::random;
  throw std::invalid_argument("unknown strategy '" + s + "' (expected entropy, likelihood, split or random)");
}

struct QueryBudget {
  std::size_t q_b = 0;
  Strategy strategy = Strategy::split;
};

struct BatchScores {
  std::vector<double> entropy;
  std::vector<double> log_marginal;
};

inline BatchScores score_batch(const GmmModel& model, const Matrix& Z) {
  BatchScores s;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const auto post = predict(model, Z.row(i).transpose());
    s.entropy.push_back(entropy(post));
    s.log_marginal.push_back(post.log_marginal);
  }
  return s;
}

namespace detail {

// Indices ordered by key (ascending), ties by index.
inline std::vector<std::size_t> order_by(const std::vector<double>& key, bool descending) {
  std::vector<std::size_t> idx(key.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? key[a] > key[b] : key[a] < key[b];
  });
  return idx;
}

}  // namespace detail

/// Batch-local indices to query. `rng` is consumed only by the random strategy.
inline std::vector<std::size_t> select_queries(const BatchScores& scores, const QueryBudget& budget,
                                               std::mt19937_64& rng) {
  const std::size_t b = scores.entropy.size();
  if (budget.q_b > b) throw std::invalid_argument("select_queries: q_b exceeds the batch size");
  std::vector<std::size_t> out;
  if (budget.q_b == 0) return out;
  switch (budget.strategy) {
    case Strategy::entropy: {
      auto idx = detail::order_by(scores.entropy, true);
      out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(budget.q_b));
      break;
    }
    case Strategy::likelihood: {
      auto idx = detail::order_by(scores.log_marginal, false);
      out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(budget.q_b));
      break;
    }
    case Strategy::split: {
      const std::size_t n_like = (budget.q_b + 1) / 2;
      auto by_like = detail::order_by(scores.log_marginal, false);
      out.assign(by_like.begin(), by_like.begin() + static_cast<std::ptrdiff_t>(n_like));
      std::vector<bool> taken(b, false);
      for (auto i : out) taken[i] = true;
      for (auto i : detail::order_by(scores.entropy, true)) {
        if (out.size() == budget.q_b) break;
        if (!taken[i]) out.push_back(i);
      }
      break;
    }
    case Strategy::random: {
      std::vector<std::size_t> idx(b);
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < budget.q_b; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, b - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(budget.q_b));
      break;
    }
  }
  return out;
}

inline std::vector<std::size_t> select_queries(const GmmModel& model, const Matrix& Z, const QueryBudget& budget,
                                               std::mt19937_64& rng) {
  return select_queries(score_batch(model, Z), budget, rng);
}

// ---------------------------------------------------------------------------
// Stream runner

/// Observations only; the true labels stay behind the oracle.
struct StreamBatch {
  Matrix observations;
  std::size_t index_offset = 0;
};

inline std::vector<StreamBatch> make_batches(const Matrix& X, std::size_t batch_size, std::size_t first_index = 0) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be >= 1");
  std::vector<StreamBatch> out;
  for (std::size_t start = 0; start < static_cast<std::size_t>(X.rows()); start += batch_size) {
    const auto n = std::min(batch_size, static_cast<std::size_t>(X.rows()) - start);
    out.push_back({X.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)), first_index + start});
  }
  return out;
}

/// Returns the label of the observation at a stream position.
using LabelOracle = std::function<int(std::size_t)>;

struct BatchRecord {
  std::size_t batch_index = 0;
  std::size_t index_offset = 0;
  std::vector<std::size_t> queried;  // stream positions
  std::vector<double> queried_entropy;
  std::vector<double> queried_log_marginal;
  double test_f1 = 0.0;
  std::size_t num_classes = 0;
};

struct RunHistory {
  Strategy strategy = Strategy::split;
  std::uint64_t seed = 0;
  std::vector<BatchRecord> batches;
  /// Oracle label -> batch index of its first query. Labels of the initial
  /// sample map to -1 (known before streaming).
  std::map<int, long> discovered_at;

  std::optional<long> discovery_index(int label) const {
    auto it = discovered_at.find(label);
    if (it == discovered_at.end()) return std::nullopt;
    return it->second;
  }
  double final_f1() const { return batches.empty() ? 0.0 : batches.back().test_f1; }
  std::size_t total_queries() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.queried.size();
    return n;
  }
};

inline void write_history_csv(const RunHistory& h, std::ostream& out, bool header = true) {
  if (header) out << "batch_index,n_queried,test_f1,K,strategy,seed\n";
  for (const auto& b : h.batches) {
    out << b.batch_index << ',' << b.queried.size() << ',' << eval::format_metric(b.test_f1) << ',' << b.num_classes
        << ',' << to_string(h.strategy) << ',' << h.seed << '\n';
  }
}

struct ActiveRunResult {
  RunHistory history;
  GmmModel model;
  /// Everything the model was trained on: normalised features with the
  /// model's internal labels.
  LabeledDataset training;
  /// Internal class id (1-based position) -> oracle label.
  std::vector<int> internal_to_external;
};

struct ActiveRunConfig {
  QueryBudget budget;
  GmmHyper hyper;
  /// Number of true classes used for scoring; undiscovered classes score 0.
  int num_true_classes = 1;
  std::uint64_t seed = 0;
};

/// `initial` holds raw features and oracle labels known before streaming;
/// `test` holds raw features with oracle labels in 1..num_true_classes.
inline ActiveRunResult run_stream(const std::vector<StreamBatch>& stream, const LabelOracle& oracle,
                                  const LabeledDataset& initial, const LabeledDataset& test,
                                  const ActiveRunConfig& cfg) {
  initial.validate();
  if (!initial.labelled() || initial.size() == 0) throw std::invalid_argument("run_stream: initial sample must be labelled");
  const Eigen::Index d = initial.dim();
  require_dim(cfg.hyper.dim(), d, "run_stream hyper");
  require_dim(test.dim(), d, "run_stream test set");

  ActiveRunResult res;
  res.history.strategy = cfg.budget.strategy;
  res.history.seed = cfg.seed;

  NormalizerState norm = NormalizerState::warm_start(initial.X);
  std::map<int, int> ext_to_int;
  auto internal_label = [&](int ext) {
    auto it = ext_to_int.find(ext);
    if (it != ext_to_int.end()) return it->second;
    const int id = static_cast<int>(res.internal_to_external.size()) + 1;
    ext_to_int[ext] = id;
    res.internal_to_external.push_back(ext);
    return id;
  };

  res.training.X = norm.transform(initial.X);
  for (int y : initial.y) {
    res.training.y.push_back(internal_label(y));
    res.history.discovered_at.emplace(y, -1);
  }
  res.model = fit(res.training, cfg.hyper);

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x51));
  std::vector<Vector> new_x;
  std::vector<int> new_y;
  for (std::size_t bi = 0; bi < stream.size(); ++bi) {
    const auto& batch = stream[bi];
    require_dim(batch.observations.cols(), d, "run_stream batch");
    Matrix Z(batch.observations.rows(), d);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) Z.row(i) = norm.push(batch.observations.row(i).transpose()).transpose();

    const auto scores = score_batch(res.model, Z);
    QueryBudget budget = cfg.budget;
    budget.q_b = std::min<std::size_t>(budget.q_b, static_cast<std::size_t>(Z.rows()));
    const auto picks = select_queries(scores, budget, rng);

    BatchRecord rec;
    rec.batch_index = bi;
    rec.index_offset = batch.index_offset;
    for (auto i : picks) {
      const std::size_t pos = batch.index_offset + i;
      int label = 0;
      try {
        label = oracle(pos);
      } catch (const std::exception& e) {
        throw std::runtime_error("run_stream: oracle failed on stream index " + std::to_string(pos) + ": " + e.what());
      }
      rec.queried.push_back(pos);
      rec.queried_entropy.push_back(scores.entropy[i]);
      rec.queried_log_marginal.push_back(scores.log_marginal[i]);
      res.history.discovered_at.emplace(label, static_cast<long>(bi));
      const int id = internal_label(label);
      res.model = add_labeled(res.model, Z.row(static_cast<Eigen::Index>(i)).transpose(), id);
      new_x.emplace_back(Z.row(static_cast<Eigen::Index>(i)).transpose());
      new_y.push_back(id);
    }

    const auto pred = predict_labels(res.model, norm.transform(test.X));
    std::vector<int> mapped;
    mapped.reserve(pred.size());
    for (int p : pred) mapped.push_back(res.internal_to_external[static_cast<std::size_t>(p - 1)]);
    rec.test_f1 = eval::macro_f1(test.y, mapped, cfg.num_true_classes);
    rec.num_classes = res.model.num_classes();
    res.history.batches.push_back(std::move(rec));
  }

  const auto n0 = res.training.X.rows();
  res.training.X.conservativeResize(n0 + static_cast<Eigen::Index>(new_x.size()), d);
  for (std::size_t i = 0; i < new_x.size(); ++i) res.training.X.row(n0 + static_cast<Eigen::Index>(i)) = new_x[i].transpose();
  res.training.y.insert(res.training.y.end(), new_y.begin(), new_y.end());
  return res;
}

}  // namespace shmbayes::gmm
