#pragma once

// Dirichlet-process Gaussian mixture with a collapsed Gibbs sampler over the
// full retained history. Cluster parameters are integrated out, so each
// cluster is summarised by its sufficient statistics and the Student-t
// predictive they imply.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "shmbayes/core/conjugate.hpp"
#include "shmbayes/gmm/active_learner.hpp"
#include "shmbayes/gmm/bayes_gmm.hpp"

namespace shmbayes::dp {

/// NIW defaults with a diffuse prior mean (kappa0 = 0.01). With kappa0 = 1
/// the prior predictive is narrower than a unit-variance cloud and the
/// sampler fragments normalised data into dozens of clusters.
inline gmm::GmmHyper default_hyper(Eigen::Index d) {
  gmm::GmmHyper h = gmm::GmmHyper::defaults(d);
  h.kappa0 = 0.01;
  return h;
}

struct DpConfig {
  double alpha = 10.0;
  gmm::GmmHyper hyper;  // only the NIW part is used
  int sweeps_per_batch = 5;
  std::size_t alarm_threshold = 50;
  /// Streamed observations seated before each round of sweeps.
  int batch_size = 10;
  int init_sweeps = 20;
  /// When false the sampler sees only the CRP weights (prior-only mode).
  bool use_likelihood = true;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("DpConfig: alpha must be > 0");
    if (sweeps_per_batch < 1) throw std::invalid_argument("DpConfig: sweeps_per_batch must be >= 1");
    if (alarm_threshold < 1) throw std::invalid_argument("DpConfig: alarm_threshold must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("DpConfig: batch_size must be >= 1");
    if (init_sweeps < 0) throw std::invalid_argument("DpConfig: init_sweeps must be >= 0");
    hyper.niw().validate();
  }
};

struct AlarmEvent {
  int cluster_id = 0;
  std::size_t stream_index = 0;
  std::size_t size = 0;
};

struct Cluster {
  int id = 0;
  std::size_t n = 0;
  Vector sum;
  Matrix outer;  // sum of x x^T
  StudentT predictive;
};

class DpState {
 public:
  DpState(const DpConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    prior_ = cfg_.hyper.niw();
    prior_pred_ = niw_predictive(prior_);
  }

  const DpConfig& config() const { return cfg_; }
  Eigen::Index dim() const { return prior_.dim(); }
  std::size_t size() const { return data_.size(); }
  std::size_t num_clusters() const { return clusters_.size(); }
  const std::vector<Cluster>& clusters() const { return clusters_; }
  const std::vector<int>& assignments() const { return z_; }
  const Vector& observation(std::size_t i) const { return data_[i]; }
  const std::vector<AlarmEvent>& alarms() const { return alarms_; }
  const std::set<int>& exempt() const { return exempt_; }

  /// Posterior of a cluster recomputed from its running statistics.
  NiwParams cluster_posterior(const Cluster& c) const {
    NiwParams p;
    const double n = static_cast<double>(c.n);
    p.kappa = prior_.kappa + n;
    p.nu = prior_.nu + n;
    p.m = (prior_.kappa * prior_.m + c.sum) / p.kappa;
    p.S = symmetrize(prior_.S + c.outer + prior_.kappa * prior_.m * prior_.m.transpose() -
                     p.kappa * p.m * p.m.transpose());
    return p;
  }

  /// Normalised probabilities over existing clusters (in id order) followed
  /// by the new-cluster entry. With `exclude`, that observation's
  /// contribution is removed first.
  Vector assignment_probs(const Vector& x, std::optional<std::size_t> exclude = std::nullopt) const {
    require_dim(x.size(), dim(), "assignment_probs");
    std::vector<double> logw;
    for (const auto& c : clusters_) {
      std::size_t n = c.n;
      double lp = 0.0;
      if (exclude && z_[*exclude] == c.id) {
        if (n == 1) continue;  // the cluster would be empty
        Cluster tmp = c;
        remove_stats(tmp, data_[*exclude]);
        n = tmp.n;
        if (cfg_.use_likelihood) lp = make_predictive(tmp).logpdf(x);
      } else if (cfg_.use_likelihood) {
        lp = c.predictive.logpdf(x);
      }
      logw.push_back(std::log(static_cast<double>(n)) + lp);
    }
    logw.push_back(std::log(cfg_.alpha) + (cfg_.use_likelihood ? prior_pred_.logpdf(x) : 0.0));
    normalize_log_probs(logw);
    return Eigen::Map<const Vector>(logw.data(), static_cast<Eigen::Index>(logw.size()));
  }

  /// Adds x by a single draw from the CRP conditional, without sweeping.
  void seat(const Vector& x) {
    require_dim(x.size(), dim(), "DpState::seat");
    data_.push_back(x);
    z_.push_back(0);
    assign(data_.size() - 1, -1);
  }

  /// Adds x to cluster `id`, or to a new cluster when id is 0.
  void place(const Vector& x, int id) {
    require_dim(x.size(), dim(), "DpState::place");
    auto it = find(id);
    if (id != 0 && (it == clusters_.end() || it->id != id)) throw std::invalid_argument("DpState::place: unknown cluster id");
    data_.push_back(x);
    z_.push_back(id == 0 ? next_id_++ : id);
    if (id == 0) {
      Cluster c;
      c.id = z_.back();
      c.sum = Vector::Zero(dim());
      c.outer = Matrix::Zero(dim(), dim());
      clusters_.push_back(std::move(c));
      it = clusters_.end() - 1;
    }
    ++it->n;
    it->sum += x;
    it->outer += x * x.transpose();
    it->predictive = make_predictive(*it);
  }

  /// One collapsed Gibbs pass over every retained observation in index order.
  void gibbs_sweep() {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const int old_id = z_[i];
      auto it = find(old_id);
      int reuse = -1;
      if (it->n == 1) {
        reuse = old_id;  // a singleton that re-opens a table keeps its id
        clusters_.erase(it);
      } else {
        remove_stats(*it, data_[i]);
        it->predictive = make_predictive(*it);
      }
      assign(i, reuse);
    }
  }

  /// Marks every current cluster as part of the initial model; these never alarm.
  void freeze_initial_clusters() {
    for (const auto& c : clusters_) exempt_.insert(c.id);
  }

  /// Streams one observation: seat, sweep, then check for novelty.
  std::optional<AlarmEvent> observe(const Vector& x, std::size_t stream_index) {
    return observe_batch(Matrix(x.transpose()), stream_index);
  }

  /// Seats each row in turn, then sweeps once for the whole batch.
  /// `last_index` is the stream position of the final row.
  std::optional<AlarmEvent> observe_batch(const Matrix& rows, std::size_t last_index) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) seat(rows.row(i).transpose());
    for (int s = 0; s < cfg_.sweeps_per_batch; ++s) gibbs_sweep();
    return check_alarms(last_index);
  }

 private:
  std::optional<AlarmEvent> check_alarms(std::size_t stream_index) {
    std::optional<AlarmEvent> first;
    for (const auto& c : clusters_) {
      if (c.n < cfg_.alarm_threshold || exempt_.count(c.id) || alarmed_.count(c.id)) continue;
      alarmed_.insert(c.id);
      alarms_.push_back({c.id, stream_index, c.n});
      if (!first) first = alarms_.back();
    }
    return first;
  }

  std::vector<Cluster>::iterator find(int id) {
    return std::lower_bound(clusters_.begin(), clusters_.end(), id,
                            [](const Cluster& c, int v) { return c.id < v; });
  }

  static void remove_stats(Cluster& c, const Vector& x) {
    --c.n;
    c.sum -= x;
    c.outer -= x * x.transpose();
  }

  StudentT make_predictive(const Cluster& c) const { return niw_predictive(cluster_posterior(c)); }

  // Samples a cluster for observation i (currently unassigned) and inserts it.
  void assign(std::size_t i, int reuse_id) {
    const Vector& x = data_[i];
    std::vector<double> logw;
    logw.reserve(clusters_.size() + 1);
    for (const auto& c : clusters_) {
      logw.push_back(std::log(static_cast<double>(c.n)) + (cfg_.use_likelihood ? c.predictive.logpdf(x) : 0.0));
    }
    logw.push_back(std::log(cfg_.alpha) + (cfg_.use_likelihood ? prior_pred_.logpdf(x) : 0.0));
    normalize_log_probs(logw);

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng_), acc = 0.0;
    std::size_t pick = logw.size() - 1;
    for (std::size_t k = 0; k < logw.size(); ++k) {
      acc += logw[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }

    if (pick == clusters_.size()) {
      const int id = reuse_id >= 0 ? reuse_id : next_id_++;
      Cluster c;
      c.id = id;
      c.n = 0;
      c.sum = Vector::Zero(dim());
      c.outer = Matrix::Zero(dim(), dim());
      clusters_.insert(std::upper_bound(clusters_.begin(), clusters_.end(), c.id,
                                        [](int v, const Cluster& cl) { return v < cl.id; }),
                       std::move(c));
      pick = static_cast<std::size_t>(find(id) - clusters_.begin());
    }
    Cluster& c = clusters_[pick];
    ++c.n;
    c.sum += x;
    c.outer += x * x.transpose();
    c.predictive = make_predictive(c);
    z_[i] = c.id;
  }

  DpConfig cfg_;
  NiwParams prior_;
  StudentT prior_pred_;
  std::mt19937_64 rng_;
  std::vector<Vector> data_;
  std::vector<int> z_;
  std::vector<Cluster> clusters_;  // sorted by id, which is birth order
  int next_id_ = 1;
  std::set<int> exempt_;
  std::set<int> alarmed_;
  std::vector<AlarmEvent> alarms_;
};

/// Seats every row of X, then runs `sweeps` Gibbs sweeps.
inline DpState initialise(const Matrix& X, const DpConfig& cfg, std::uint64_t seed, int sweeps) {
  DpState s(cfg, seed);
  for (Eigen::Index i = 0; i < X.rows(); ++i) s.seat(X.row(i).transpose());
  for (int k = 0; k < sweeps; ++k) s.gibbs_sweep();
  return s;
}

struct KProfileRow {
  double alpha = 0.0;
  std::size_t k = 0;
  double frequency = 0.0;
};

/// Post-burn-in distribution of the number of clusters for each alpha.
inline std::vector<KProfileRow> k_profile(const Matrix& X, const std::vector<double>& alphas, int sweeps, int burn_in,
                                          const DpConfig& base, std::uint64_t seed) {
  if (!X.allFinite()) throw std::invalid_argument("k_profile: data must be finite");
  if (burn_in >= sweeps) throw std::invalid_argument("k_profile: burn-in must be shorter than the run");
  std::vector<KProfileRow> out;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    DpConfig cfg = base;
    cfg.alpha = alphas[a];
    DpState s = initialise(X, cfg, mix_seed(seed, a), 0);
    std::map<std::size_t, int> tally;
    for (int t = 0; t < sweeps; ++t) {
      s.gibbs_sweep();
      if (t >= burn_in) ++tally[s.num_clusters()];
    }
    const double kept = static_cast<double>(sweeps - burn_in);
    for (const auto& [k, n] : tally) out.push_back({alphas[a], k, n / kept});
  }
  return out;
}

/// Most frequent K for one alpha in a profile (ties to the smaller K).
inline std::size_t modal_k(const std::vector<KProfileRow>& rows, double alpha) {
  std::size_t best = 0;
  double best_f = -1.0;
  for (const auto& r : rows)
    if (r.alpha == alpha && r.frequency > best_f) {
      best = r.k;
      best_f = r.frequency;
    }
  return best;
}

struct StreamRecord {
  std::size_t index = 0;
  int cluster = 0;
  std::size_t k = 0;
  bool alarm = false;
};

inline void write_stream_csv(const std::vector<StreamRecord>& rows, std::ostream& out) {
  out << "index,cluster,K,alarm\n";
  for (const auto& r : rows) out << r.index << ',' << r.cluster << ',' << r.k << ',' << (r.alarm ? 1 : 0) << '\n';
}

struct DpStreamResult {
  std::vector<StreamRecord> records;  // one per streamed observation
  std::vector<AlarmEvent> alarms;
  std::size_t initial_clusters = 0;
  std::size_t final_clusters = 0;
};

/// Initialises on the first n_init rows (normaliser warm-started on them),
/// then streams the rest through the online normaliser in batches.
inline DpStreamResult run_stream(const Matrix& X, std::size_t n_init, const DpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!X.allFinite()) throw std::invalid_argument("dp::run_stream: data must be finite");
  if (n_init < 2 || n_init > static_cast<std::size_t>(X.rows()))
    throw std::invalid_argument("dp::run_stream: need 2 <= n_init <= number of rows");
  require_dim(X.cols(), cfg.hyper.dim(), "dp::run_stream");
  const auto n0 = static_cast<Eigen::Index>(n_init);
  gmm::NormalizerState norm = gmm::NormalizerState::warm_start(X.topRows(n0));
  DpState st = initialise(norm.transform(Matrix(X.topRows(n0))), cfg, seed, cfg.init_sweeps);
  st.freeze_initial_clusters();

  DpStreamResult out;
  out.initial_clusters = st.num_clusters();
  for (Eigen::Index i = n0; i < X.rows(); i += cfg.batch_size) {
    const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, X.rows() - i);
    Matrix z(m, X.cols());
    for (Eigen::Index j = 0; j < m; ++j) z.row(j) = norm.push(X.row(i + j).transpose()).transpose();
    const std::size_t before = st.alarms().size();
    st.observe_batch(z, static_cast<std::size_t>(i + m - 1));
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto idx = static_cast<std::size_t>(i + j);
      out.records.push_back({idx, st.assignments()[idx], st.num_clusters(), false});
    }
    if (st.alarms().size() > before) out.records.back().alarm = true;
  }
  out.alarms = st.alarms();
  out.final_clusters = st.num_clusters();
  return out;
}

}  // namespace shmbayes::dp
