#pragma once

// Per-seed experiment protocols shared by the CLI harness and the
// acceptance checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "shmbayes/data/generators.hpp"
#include "shmbayes/dp/dp_cluster.hpp"
#include "shmbayes/eval/metrics.hpp"
#include "shmbayes/gmm/active_learner.hpp"
#include "shmbayes/gmm/semisup_em.hpp"
#include "shmbayes/kbtl/kbtl.hpp"

namespace shmbayes::harness {

// ---------------------------------------------------------------------------
// Active learning on a labelled stream

struct ActiveSettings {
  double budget_fraction = 0.25;
  std::size_t batch_size = 50;
};

/// Splits a labelled stream into alternating halves. Even positions are the
/// learning stream and odd positions the held-out test set; the first batch
/// of the learning stream is the initial labelled sample.
struct ActiveSplit {
  LabeledDataset initial, stream, test;
  int num_classes = 0;
};

inline ActiveSplit split_active(const LabeledDataset& all, std::size_t batch_size) {
  all.validate();
  if (!all.labelled()) throw std::invalid_argument("split_active: stream must be labelled");
  std::vector<std::size_t> learn, test;
  for (std::size_t i = 0; i < all.y.size(); ++i) (i % 2 == 0 ? learn : test).push_back(i);
  if (learn.size() <= batch_size) throw std::invalid_argument("split_active: stream shorter than two batches");
  ActiveSplit s;
  s.initial = all.subset({learn.begin(), learn.begin() + static_cast<std::ptrdiff_t>(batch_size)});
  s.stream = all.subset({learn.begin() + static_cast<std::ptrdiff_t>(batch_size), learn.end()});
  s.test = all.subset(test);
  s.num_classes = all.classes().back();
  return s;
}

inline std::size_t queries_per_batch(const ActiveSettings& a) {
  if (!(a.budget_fraction >= 0.0 && a.budget_fraction <= 1.0))
    throw std::invalid_argument("budget fraction must lie in [0, 1]");
  return static_cast<std::size_t>(std::lround(a.budget_fraction * static_cast<double>(a.batch_size)));
}

inline gmm::ActiveRunResult run_active(const ActiveSplit& s, const ActiveSettings& a, gmm::Strategy strategy,
                                       std::uint64_t seed) {
  gmm::ActiveRunConfig cfg{{queries_per_batch(a), strategy}, gmm::GmmHyper::defaults(s.stream.dim()), s.num_classes,
                           seed};
  const auto& y = s.stream.y;
  return gmm::run_stream(gmm::make_batches(s.stream.X, a.batch_size), [&](std::size_t i) { return y.at(i); },
                         s.initial, s.test, cfg);
}

/// The active run discovers `label` no later than the passive one, or
/// discovers it when the passive run never does.
inline bool discovers_no_later(const gmm::RunHistory& active, const gmm::RunHistory& passive, int label) {
  const auto a = active.discovery_index(label), p = passive.discovery_index(label);
  return a && (!p || *a <= *p);
}

// ---------------------------------------------------------------------------
// Semi-supervised versus supervised MAP

struct SemisupSeedResult {
  double f1_supervised = 0.0;
  double f1_semisupervised = 0.0;
  int iterations = 0;
  std::size_t n_labelled = 0;
  double gain() const { return f1_semisupervised - f1_supervised; }
};

/// One third of each class is held out (stratified, shuffled by seed). The
/// labelled set is `fraction` of the rest, at least one point per class,
/// features standardised with training statistics.
inline SemisupSeedResult run_semisup(const LabeledDataset& all, double fraction, const gmm::EmConfig& em,
                                     std::uint64_t seed) {
  all.validate();
  if (!all.labelled()) throw std::invalid_argument("run_semisup: data must be labelled");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("run_semisup: fraction must lie in (0, 1]");
  const auto classes = all.classes();
  const int k = classes.back();
  if (classes.front() != 1 || static_cast<int>(classes.size()) != k)
    throw std::invalid_argument("run_semisup: labels must be 1..K with every class present");

  std::mt19937_64 rng(mix_seed(seed, 3));
  std::vector<std::size_t> train, test;
  for (int c = 1; c <= k; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < all.y.size(); ++i)
      if (all.y[i] == c) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t nt = idx.size() / 3;
    test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nt));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(nt), idx.end());
  }
  std::shuffle(train.begin(), train.end(), rng);
  const LabeledDataset tr = all.subset(train), te = all.subset(test);
  const auto norm = gmm::NormalizerState::warm_start(tr.X);
  const LabeledDataset z{norm.transform(tr.X), tr.y};
  const Matrix zt = norm.transform(te.X);

  const auto n = static_cast<std::size_t>(z.size());
  const std::size_t nl =
      std::min(n, std::max<std::size_t>(static_cast<std::size_t>(k),
                                        static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)))));
  std::vector<char> is_lab(n, 0);
  std::vector<char> have(static_cast<std::size_t>(k) + 1, 0);
  std::size_t taken = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(z.y[i]);
    if (!have[c]) {
      have[c] = 1;
      is_lab[i] = 1;
      ++taken;
    }
  }
  for (std::size_t i = 0; i < n && taken < nl; ++i)
    if (!is_lab[i]) {
      is_lab[i] = 1;
      ++taken;
    }
  std::vector<std::size_t> lab, unl;
  for (std::size_t i = 0; i < n; ++i) (is_lab[i] ? lab : unl).push_back(i);

  const LabeledDataset dl = z.subset(lab);
  const Matrix xu = z.subset(unl).X;
  const auto h = gmm::GmmHyper::defaults(z.dim());
  SemisupSeedResult r;
  r.n_labelled = lab.size();
  r.f1_supervised = eval::macro_f1(te.y, gmm::predict_map(gmm::fit_supervised_map(dl, h), zt), k);
  const auto fit = gmm::fit_semisupervised(dl, xu, h, em);
  r.f1_semisupervised = eval::macro_f1(te.y, gmm::predict_map(fit.estimate, zt), k);
  r.iterations = fit.iterations;
  return r;
}

// ---------------------------------------------------------------------------
// DP streaming alarm

struct DpSeedSummary {
  std::size_t first_alarm_after_onset = 0;  // stream index; valid when hit
  bool hit = false;
  std::size_t pre_onset_alarms = 0;
  std::size_t alarms = 0;
  double purity = 0.0;  // streamed points only
};

/// A hit is an alarm whose stream index lies in [onset, onset + window].
inline DpSeedSummary summarise_dp(const dp::DpStreamResult& r, const std::vector<int>& labels, std::size_t onset,
                                  std::size_t window) {
  DpSeedSummary s;
  s.alarms = r.alarms.size();
  for (const auto& a : r.alarms) {
    if (a.stream_index < onset) ++s.pre_onset_alarms;
    if (!s.hit && a.stream_index >= onset && a.stream_index <= onset + window) {
      s.hit = true;
      s.first_alarm_after_onset = a.stream_index;
    }
  }
  if (!labels.empty() && !r.records.empty()) {
    std::vector<int> assign, truth;
    for (const auto& rec : r.records) {
      assign.push_back(rec.cluster);
      truth.push_back(labels.at(rec.index));
    }
    s.purity = eval::map_clusters(assign, truth).purity;
  }
  return s;
}

/// First index carrying the largest label, the damage class by convention.
inline std::optional<std::size_t> onset_of_last_class(const std::vector<int>& y) {
  if (y.empty()) return std::nullopt;
  const int top = *std::max_element(y.begin(), y.end());
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == top) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// KBTL transfer versus single-task

/// Standardises both matrices with the column mean and sd of `train`.
inline void standardise_domain(Matrix& train, Matrix& test) {
  const Vector mu = train.colwise().mean();
  Vector sd = ((train.rowwise() - mu.transpose()).array().square().colwise().sum() /
               static_cast<double>(std::max<Eigen::Index>(train.rows() - 1, 1)))
                  .sqrt();
  sd = sd.cwiseMax(gmm::NormalizerState::kStdFloor);
  train = (train.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
  test = (test.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
}

struct KbtlSeedResult {
  std::vector<double> f1_transfer;  // per domain
  std::vector<double> f1_single;
  kbtl::KbtlModel model;
};

inline double binary_macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  return eval::macro_f1(eval::binary_to_index(y_true), eval::binary_to_index(y_pred), 2);
}

/// Fits one model over all domains and one model per domain on the same
/// standardised data, scoring each on the domain's test set.
inline KbtlSeedResult run_kbtl(const std::vector<LabeledDataset>& train, const std::vector<LabeledDataset>& test,
                               const kbtl::KbtlConfig& cfg, std::uint64_t seed) {
  if (train.size() != test.size() || train.empty())
    throw std::invalid_argument("run_kbtl: need matching, non-empty train and test domain lists");
  std::vector<kbtl::DomainData> data;
  std::vector<Matrix> test_X;
  for (std::size_t t = 0; t < train.size(); ++t) {
    Matrix X = train[t].X, Xt = test[t].X;
    require_dim(Xt.cols(), X.cols(), "run_kbtl test features");
    standardise_domain(X, Xt);
    data.push_back({X, train[t].y});
    test_X.push_back(Xt);
  }
  KbtlSeedResult r;
  r.model = kbtl::fit(data, cfg, seed);
  for (std::size_t t = 0; t < data.size(); ++t) {
    r.f1_transfer.push_back(binary_macro_f1(test[t].y, kbtl::classify(kbtl::predict(r.model, t, test_X[t]))));
    const auto single = kbtl::fit({data[t]}, cfg, seed);
    r.f1_single.push_back(binary_macro_f1(test[t].y, kbtl::classify(kbtl::predict(single, 0, test_X[t]))));
  }
  return r;
}

}  // namespace shmbayes::harness
