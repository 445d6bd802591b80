#pragma once

// Conjugate building blocks shared by every mixture model in the library:
// Normal-Inverse-Wishart and Dirichlet-categorical updates, the posterior
// predictive densities they imply, and log-domain helpers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "shmbayes/core/linalg.hpp"

namespace shmbayes {

struct LogDensity {
  double value = 0.0;
};

/// Normal-Inverse-Wishart hyperparameters (m, kappa, nu, S) for one component.
struct NiwParams {
  Vector m;
  double kappa = 1.0;
  double nu = 3.0;
  Matrix S;

  Eigen::Index dim() const { return m.size(); }

  /// Throws std::invalid_argument if any invariant is violated.
  void validate() const {
    const auto d = dim();
    if (d < 1) throw std::invalid_argument("NiwParams: empty mean");
    if (S.rows() != d || S.cols() != d) throw DimensionError("NiwParams: S must be d x d");
    if (!(kappa > 0.0)) throw std::invalid_argument("NiwParams: kappa must be > 0");
    if (!(nu > static_cast<double>(d) - 1.0)) throw std::invalid_argument("NiwParams: nu must be > d - 1");
    if (!S.isApprox(S.transpose(), 1e-10)) throw std::invalid_argument("NiwParams: S must be symmetric");
    robust_llt(S, "NiwParams::S");
  }

  static NiwParams standard(Eigen::Index d, double kappa = 1.0, double nu = -1.0) {
    NiwParams p;
    p.m = Vector::Zero(d);
    p.kappa = kappa;
    p.nu = nu > 0.0 ? nu : static_cast<double>(d) + 2.0;
    p.S = Matrix::Identity(d, d);
    return p;
  }
};

struct DirichletParams {
  Vector alpha;

  void validate() const {
    if (alpha.size() == 0) throw std::invalid_argument("DirichletParams: empty concentration");
    if ((alpha.array() <= 0.0).any()) throw std::invalid_argument("DirichletParams: entries must be > 0");
  }
};

// ---------------------------------------------------------------------------
// log-domain helpers

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline double log_sum_exp(const Vector& values) {
  return log_sum_exp(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

/// Normalises log-weights in place into probabilities; returns the log normaliser.
inline double normalize_log_probs(std::span<double> logw) {
  const double lse = log_sum_exp(std::span<const double>(logw.data(), logw.size()));
  for (double& v : logw) v = std::exp(v - lse);
  return lse;
}

/// log of the d-variate gamma function.
inline double log_multigamma(double a, Eigen::Index d) {
  double s = 0.25 * static_cast<double>(d * (d - 1)) * kLogPi;
  for (Eigen::Index j = 0; j < d; ++j) s += std::lgamma(a - 0.5 * static_cast<double>(j));
  return s;
}

// ---------------------------------------------------------------------------
// Normal-Inverse-Wishart

/// Posterior after observing the weighted rows of `data`. Weights may be
/// fractional (soft counts); a zero total weight returns the prior.
inline NiwParams niw_update_weighted(const NiwParams& prior, const Matrix& data, const Vector& weights) {
  require_dim(data.cols(), prior.dim(), "niw_update");
  require_dim(weights.size(), data.rows(), "niw_update weights");
  const double n = weights.sum();
  if (data.rows() == 0 || n == 0.0) return prior;

  const Vector mean = (data.transpose() * weights) / n;
  const Matrix centred = data.rowwise() - mean.transpose();
  const Matrix scatter = centred.transpose() * weights.asDiagonal() * centred;
  const Vector diff = mean - prior.m;

  NiwParams post;
  post.kappa = prior.kappa + n;
  post.nu = prior.nu + n;
  post.m = (prior.kappa * prior.m + n * mean) / post.kappa;
  post.S = symmetrize(prior.S + scatter + (prior.kappa * n / post.kappa) * diff * diff.transpose());
  robust_llt(post.S, "niw_update posterior scale");
  return post;
}

inline NiwParams niw_update(const NiwParams& prior, const Matrix& data) {
  return niw_update_weighted(prior, data, Vector::Ones(data.rows()));
}

/// Single-observation update (rank-one form).
inline NiwParams niw_update_one(const NiwParams& prior, const Vector& x) {
  require_dim(x.size(), prior.dim(), "niw_update");
  const Vector diff = x - prior.m;
  NiwParams post;
  post.kappa = prior.kappa + 1.0;
  post.nu = prior.nu + 1.0;
  post.m = (prior.kappa * prior.m + x) / post.kappa;
  post.S = prior.S + (prior.kappa / post.kappa) * diff * diff.transpose();
  return post;
}

/// Multivariate Student-t with precomputed factorisation, for repeated evaluation.
class StudentT {
 public:
  StudentT() = default;

  StudentT(Vector location, const Matrix& scale, double dof) : loc_(std::move(location)), dof_(dof) {
    if (!(dof > 0.0)) throw std::invalid_argument("StudentT: degrees of freedom must be > 0");
    require_dim(scale.rows(), loc_.size(), "StudentT scale");
    llt_ = robust_llt(scale, "StudentT scale");
    const double d = static_cast<double>(loc_.size());
    log_norm_ = std::lgamma(0.5 * (dof + d)) - std::lgamma(0.5 * dof) - 0.5 * d * (std::log(dof) + kLogPi) -
                0.5 * log_det(llt_);
  }

  double logpdf(const Vector& x) const {
    Vector z = x - loc_;
    llt_.matrixL().solveInPlace(z);
    const double d = static_cast<double>(loc_.size());
    return log_norm_ - 0.5 * (dof_ + d) * std::log1p(z.squaredNorm() / dof_);
  }

  const Vector& location() const { return loc_; }
  double dof() const { return dof_; }
  Matrix scale() const { return llt_.reconstructedMatrix(); }

 private:
  Vector loc_;
  Eigen::LLT<Matrix> llt_;
  double dof_ = 1.0;
  double log_norm_ = 0.0;
};

/// The Student-t posterior predictive implied by a NIW posterior:
/// location m, dof nu - d + 1, scale S (kappa + 1) / (kappa (nu - d + 1)).
inline StudentT niw_predictive(const NiwParams& post) {
  const double d = static_cast<double>(post.dim());
  const double dof = post.nu - d + 1.0;
  if (!(dof > 0.0)) throw std::invalid_argument("niw_predictive: nu - d + 1 must be > 0");
  return StudentT(post.m, post.S * ((post.kappa + 1.0) / (post.kappa * dof)), dof);
}

inline LogDensity niw_predictive_logpdf(const NiwParams& post, const Vector& x) {
  require_dim(x.size(), post.dim(), "niw_predictive_logpdf");
  return {niw_predictive(post).logpdf(x)};
}

/// log N(x | mean, cov) given the Cholesky factor of cov.
inline double gaussian_logpdf(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& cov_llt) {
  Vector z = x - mean;
  cov_llt.matrixL().solveInPlace(z);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det(cov_llt) + z.squaredNorm());
}

/// log NIW(mu, Sigma | m, kappa, nu, S), fully normalised.
inline double niw_log_density(const NiwParams& p, const Vector& mu, const Matrix& sigma) {
  const Eigen::Index d = p.dim();
  const double dd = static_cast<double>(d);
  const auto sigma_llt = robust_llt(sigma, "niw_log_density Sigma");
  const auto s_llt = robust_llt(p.S, "niw_log_density S");
  const double log_det_sigma = log_det(sigma_llt);
  const Matrix sigma_inv_s = sigma_llt.solve(p.S);
  const double log_iw = 0.5 * p.nu * log_det(s_llt) - 0.5 * p.nu * dd * std::log(2.0) -
                        log_multigamma(0.5 * p.nu, d) - 0.5 * (p.nu + dd + 1.0) * log_det_sigma -
                        0.5 * sigma_inv_s.trace();
  Matrix mean_cov = sigma / p.kappa;
  const double log_normal = gaussian_logpdf(mu, p.m, robust_llt(mean_cov, "niw_log_density mean covariance"));
  return log_iw + log_normal;
}

/// log of the marginal likelihood ratio p(D) implied by moving from `prior` to `post`.
inline double niw_log_evidence(const NiwParams& prior, const NiwParams& post) {
  const Eigen::Index d = prior.dim();
  const double n = post.kappa - prior.kappa;
  return -0.5 * n * static_cast<double>(d) * kLogPi + log_multigamma(0.5 * post.nu, d) -
         log_multigamma(0.5 * prior.nu, d) + 0.5 * prior.nu * log_det(robust_llt(prior.S)) -
         0.5 * post.nu * log_det(robust_llt(post.S)) +
         0.5 * static_cast<double>(d) * (std::log(prior.kappa) - std::log(post.kappa));
}

// ---------------------------------------------------------------------------
// Dirichlet-categorical

inline DirichletParams dirichlet_update(const DirichletParams& prior, const Vector& counts) {
  require_dim(counts.size(), prior.alpha.size(), "dirichlet_update");
  if ((counts.array() < 0.0).any()) throw std::invalid_argument("dirichlet_update: negative count");
  return {prior.alpha + counts};
}

/// Posterior predictive of the next label: the Dirichlet mean.
inline Vector categorical_predictive(const DirichletParams& post) { return post.alpha / post.alpha.sum(); }

inline double dirichlet_log_density(const DirichletParams& p, const Vector& weights) {
  require_dim(weights.size(), p.alpha.size(), "dirichlet_log_density");
  double s = std::lgamma(p.alpha.sum());
  for (Eigen::Index k = 0; k < p.alpha.size(); ++k) {
    s -= std::lgamma(p.alpha[k]);
    if (p.alpha[k] != 1.0) s += (p.alpha[k] - 1.0) * std::log(weights[k]);
  }
  return s;
}

}  // namespace shmbayes
