#pragma once

// Semi-supervised MAP-EM for a Gaussian mixture: labelled points contribute
// hard counts, unlabelled points contribute responsibility-weighted soft
// counts, and each M-step takes the joint mode of the NIW and Dirichlet
// posteriors under those counts.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "shmbayes/core/conjugate.hpp"
#include "shmbayes/data/dataset.hpp"
#include "shmbayes/gmm/bayes_gmm.hpp"

namespace shmbayes::gmm {

class ClassCollapseError : public std::runtime_error {
 public:
  ClassCollapseError(int label, int iteration)
      : std::runtime_error("semi-supervised EM: class " + std::to_string(label) + " has zero total count" +
                           (iteration >= 0 ? " at iteration " + std::to_string(iteration) : std::string())),
        label_(label),
        iteration_(iteration) {}
  int label() const { return label_; }
  int iteration() const { return iteration_; }

 private:
  int label_;
  int iteration_;
};

struct EmConfig {
  double tol = 1e-6;
  int max_iters = 200;

  void validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("EmConfig: tol must be > 0");
    if (max_iters < 1) throw std::invalid_argument("EmConfig: max_iters must be >= 1");
  }
};

struct MapComponent {
  Vector mean;
  Matrix cov;
  double weight = 0.0;
  Eigen::LLT<Matrix> cov_llt;
};

struct MapEstimate {
  std::vector<MapComponent> components;  // index k holds class k + 1

  int num_classes() const { return static_cast<int>(components.size()); }

  /// log weight_k + log N(x | mean_k, cov_k) for every k.
  Vector log_joint(const Vector& x) const {
    Vector out(num_classes());
    for (int k = 0; k < num_classes(); ++k) {
      const auto& c = components[static_cast<std::size_t>(k)];
      out[k] = std::log(c.weight) + gaussian_logpdf(x, c.mean, c.cov_llt);
    }
    return out;
  }
};

/// Rows of class-membership probabilities for Xu, normalised in log space.
inline Matrix e_step(const MapEstimate& est, const Matrix& Xu) {
  const int k = est.num_classes();
  Matrix r(Xu.rows(), k);
  for (Eigen::Index i = 0; i < Xu.rows(); ++i) {
    Vector lj = est.log_joint(Xu.row(i).transpose());
    const double lse = log_sum_exp(lj);
    r.row(i) = (lj.array() - lse).exp().transpose();
  }
  return r;
}

/// MAP parameters from hard counts (Dl) plus soft counts (R over Xu). Dl
/// labels must lie in 1..K where K = hyper's class count implied by R (or by
/// Dl when Xu is empty).
inline MapEstimate m_step(const LabeledDataset& dl, const Matrix& xu, const Matrix& r, const GmmHyper& hyper,
                          int num_classes, int iteration = -1) {
  hyper.validate();
  dl.validate();
  const Eigen::Index d = hyper.dim();
  if (dl.size() > 0) require_dim(dl.dim(), d, "m_step labelled data");
  if (xu.rows() > 0) require_dim(xu.cols(), d, "m_step unlabelled data");
  require_dim(r.rows(), xu.rows(), "m_step responsibilities");
  if (xu.rows() > 0) require_dim(r.cols(), num_classes, "m_step responsibilities");
  for (int y : dl.y)
    if (y < 1 || y > num_classes) throw std::invalid_argument("m_step: label outside 1..K");

  const Eigen::Index nl = dl.size(), nu = xu.rows();
  Matrix all(nl + nu, d);
  if (nl > 0) all.topRows(nl) = dl.X;
  if (nu > 0) all.bottomRows(nu) = xu;

  const NiwParams prior = hyper.niw();
  const double alpha = hyper.alpha_per_class;
  Vector counts(num_classes);
  MapEstimate est;
  for (int k = 0; k < num_classes; ++k) {
    Vector w = Vector::Zero(nl + nu);
    for (Eigen::Index i = 0; i < nl; ++i) w[i] = dl.y[static_cast<std::size_t>(i)] == k + 1 ? 1.0 : 0.0;
    if (nu > 0) w.tail(nu) = r.col(k);
    counts[k] = w.sum();
    if (!(counts[k] > 0.0)) throw ClassCollapseError(k + 1, iteration);
    const NiwParams post = niw_update_weighted(prior, all, w);
    MapComponent c;
    c.mean = post.m;
    c.cov = post.S / (post.nu + static_cast<double>(d) + 2.0);
    c.cov_llt = robust_llt(c.cov, "MAP covariance");
    est.components.push_back(std::move(c));
  }
  const double denom = alpha * num_classes - num_classes + counts.sum();
  for (int k = 0; k < num_classes; ++k) {
    const double w = (alpha - 1.0 + counts[k]) / denom;
    if (!(w > 0.0)) throw ClassCollapseError(k + 1, iteration);
    est.components[static_cast<std::size_t>(k)].weight = w;
  }
  return est;
}

/// Penalised log-likelihood: labelled complete-data terms, unlabelled
/// marginal terms, and the log prior density of every parameter.
inline double joint_log_likelihood(const MapEstimate& est, const LabeledDataset& dl, const Matrix& xu,
                                   const GmmHyper& hyper) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < dl.size(); ++i) {
    const int y = dl.y[static_cast<std::size_t>(i)];
    const auto& c = est.components[static_cast<std::size_t>(y - 1)];
    s += std::log(c.weight) + gaussian_logpdf(dl.X.row(i).transpose(), c.mean, c.cov_llt);
  }
  for (Eigen::Index i = 0; i < xu.rows(); ++i) s += log_sum_exp(est.log_joint(xu.row(i).transpose()));
  const NiwParams prior = hyper.niw();
  Vector weights(est.num_classes());
  for (int k = 0; k < est.num_classes(); ++k) {
    const auto& c = est.components[static_cast<std::size_t>(k)];
    s += niw_log_density(prior, c.mean, c.cov);
    weights[k] = c.weight;
  }
  s += dirichlet_log_density({Vector::Constant(est.num_classes(), hyper.alpha_per_class)}, weights);
  return s;
}

struct SemisupFit {
  MapEstimate estimate;
  std::vector<double> trace;  // joint log-likelihood after initialisation and each iteration
  int iterations = 0;
  bool converged = false;
};

/// Labelled-only MAP estimate.
inline MapEstimate fit_supervised_map(const LabeledDataset& dl, const GmmHyper& hyper) {
  const auto classes = dl.classes();
  const int k = classes.empty() ? 0 : classes.back();
  return m_step(dl, Matrix(0, hyper.dim()), Matrix(0, k), hyper, k);
}

inline SemisupFit fit_semisupervised(const LabeledDataset& dl, const Matrix& xu, const GmmHyper& hyper,
                                     const EmConfig& cfg = {}) {
  cfg.validate();
  const auto classes = dl.classes();
  if (classes.empty()) throw std::invalid_argument("fit_semisupervised: no labelled data");
  const int k = static_cast<int>(classes.size());
  if (classes.front() != 1 || classes.back() != k) {
    throw std::invalid_argument("fit_semisupervised: labelled data must cover every class 1..K");
  }

  SemisupFit out;
  out.estimate = fit_supervised_map(dl, hyper);
  out.trace.push_back(joint_log_likelihood(out.estimate, dl, xu, hyper));
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Matrix r = e_step(out.estimate, xu);
    out.estimate = m_step(dl, xu, r, hyper, k, it);
    const double prev = out.trace.back();
    out.trace.push_back(joint_log_likelihood(out.estimate, dl, xu, hyper));
    out.iterations = it;
    if ((out.trace.back() - prev) / std::abs(prev) < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Plug-in MAP classification, ties to the lower label.
inline std::vector<int> predict_map(const MapEstimate& est, const Matrix& X) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector lj = est.log_joint(X.row(i).transpose());
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < lj.size(); ++k)
      if (lj[k] > lj[best]) best = k;
    out.push_back(static_cast<int>(best) + 1);
  }
  return out;
}

}  // namespace shmbayes::gmm
