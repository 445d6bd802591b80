#pragma once

// Kernelised Bayesian transfer learning for binary tasks. Each domain's
// kernel matrix is projected by A_t into a shared R-dimensional subspace,
// where a single classifier (b, w) serves every domain. Inference is mean-field
// variational; Gamma factors use the shape/rate parameterisation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shmbayes/core/json_io.hpp"
#include "shmbayes/core/linalg.hpp"

namespace shmbayes::kbtl {

class KbtlNumericError : public std::runtime_error {
 public:
  KbtlNumericError(const std::string& factor, int iteration)
      : std::runtime_error("kbtl: non-finite update of " + factor + " at iteration " + std::to_string(iteration)),
        factor_(factor),
        iteration_(iteration) {}
  const std::string& factor() const { return factor_; }
  int iteration() const { return iteration_; }

 private:
  std::string factor_;
  int iteration_;
};

struct DomainData {
  Matrix X;
  std::vector<int> y;  // -1 or +1
  double lengthscale = 0.0;  // <= 0 selects the median pairwise distance

  void validate(const char* what) const {
    if (X.rows() < 2) throw std::invalid_argument(std::string(what) + ": need at least two observations");
    if (static_cast<Eigen::Index>(y.size()) != X.rows())
      throw std::invalid_argument(std::string(what) + ": label count does not match rows");
    if (!X.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite features");
    bool neg = false, pos = false;
    for (int v : y) {
      if (v != -1 && v != 1) throw std::invalid_argument(std::string(what) + ": labels must be -1 or +1");
      (v > 0 ? pos : neg) = true;
    }
    if (!neg || !pos) throw std::invalid_argument(std::string(what) + ": both classes must be present");
  }
};

struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};

struct KbtlConfig {
  int R = 2;
  double nu_margin = 1.0;
  double sigma_h = 0.1;  // noise on H_t around A_t^T K_t
  GammaPrior lambda, gamma, eta;
  int max_iters = 200;
  double param_tol = 1e-5;

  void validate() const {
    if (R < 1) throw std::invalid_argument("KbtlConfig: R must be >= 1");
    if (!(nu_margin >= 0.0)) throw std::invalid_argument("KbtlConfig: margin must be >= 0");
    if (!(sigma_h > 0.0)) throw std::invalid_argument("KbtlConfig: sigma_h must be > 0");
    for (const auto* g : {&lambda, &gamma, &eta})
      if (!(g->shape > 0.0) || !(g->rate > 0.0))
        throw std::invalid_argument("KbtlConfig: Gamma shapes and rates must be > 0");
    if (max_iters < 1) throw std::invalid_argument("KbtlConfig: max_iters must be >= 1");
    if (!(param_tol > 0.0)) throw std::invalid_argument("KbtlConfig: param_tol must be > 0");
  }
};

/// K[i,j] = exp(-|x_i - x2_j|^2 / (2 l^2)).
inline Matrix kernel_matrix(const Matrix& X, const Matrix& X2, double lengthscale) {
  require_dim(X2.cols(), X.cols(), "kernel_matrix");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("kernel_matrix: lengthscale must be > 0");
  const Vector n1 = X.rowwise().squaredNorm();
  const Vector n2 = X2.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * X * X2.transpose()).colwise() + n1;
  d2.rowwise() += n2.transpose();
  return (-d2.cwiseMax(0.0) / (2.0 * lengthscale * lengthscale)).array().exp().matrix();
}

/// Median of the distinct-pair Euclidean distances; 1 when all rows coincide.
inline double median_lengthscale(const Matrix& X) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(X.rows() * (X.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = i + 1; j < X.rows(); ++j) d.push_back((X.row(i) - X.row(j)).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? med : 1.0;
}

/// FNV-1a over the raw bytes of X and y.
inline std::uint64_t content_hash(const Matrix& X, const std::vector<int>& y) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  const Eigen::Index r = X.rows(), c = X.cols();
  feed(&r, sizeof r);
  feed(&c, sizeof c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      const double v = X(i, j);
      feed(&v, sizeof v);
    }
  for (int v : y) feed(&v, sizeof v);
  return h;
}

struct DomainFactors {
  Matrix X;
  std::vector<int> y;
  double lengthscale = 1.0;
  Matrix K;
  Matrix lambda_shape, lambda_rate;  // n x R
  Matrix A_mean;                     // n x R
  Matrix A_var;                      // n x R, diagonal of each column's covariance
  std::vector<Matrix> A_prec_chol;   // R lower Cholesky factors of the column precisions
  Matrix H_mean;                     // R x n
  Matrix H_cov;                      // R x R, shared by all columns
  Vector f_mean, f_var;
};

struct KbtlModel {
  KbtlConfig cfg;
  std::vector<DomainFactors> domains;
  double gamma_shape = 1.0, gamma_rate = 1.0;
  Vector eta_shape, eta_rate;
  Vector bw_mean;  // entry 0 is b, then w
  Matrix bw_cov;
  int iterations = 0;
  bool converged = false;
  std::vector<double> changes;  // max parameter change per iteration

  std::size_t num_domains() const { return domains.size(); }
  double b_mean() const { return bw_mean[0]; }
  Vector w_mean() const { return bw_mean.tail(cfg.R); }
};

namespace detail {

constexpr double kSqrt2 = 1.41421356237309504880;

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - 0.5 * kLog2Pi); }

// phi(a) / (1 - Phi(a)), the mean shift of a standard normal truncated to [a, inf).
inline double inverse_mills(double a) {
  if (a > 30.0) return a + 1.0 / a - 2.0 / (a * a * a);
  return norm_pdf(a) / (0.5 * std::erfc(a / kSqrt2));
}

inline double log_norm_cdf(double x) {
  if (x < -30.0) return -0.5 * x * x - std::log(-x) - 0.5 * kLog2Pi;
  return std::log(0.5 * std::erfc(-x / kSqrt2));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline void check_finite(const Matrix& m, const char* factor, int it) {
  if (!m.allFinite()) throw KbtlNumericError(factor, it);
}

inline void update_f(DomainFactors& d, const Vector& bw_mean, double nu) {
  const Eigen::Index r = bw_mean.size() - 1;
  const Vector out = (d.H_mean.transpose() * bw_mean.tail(r)).array() + bw_mean[0];
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    // Reflect negatives so every case is a lower truncation at nu.
    const double s = d.y[static_cast<std::size_t>(i)] > 0 ? 1.0 : -1.0;
    const double o = s * out[i];
    const double a = nu - o;
    const double lam = inverse_mills(a);
    d.f_mean[i] = s * (o + lam);
    d.f_var[i] = std::max(1.0 - lam * (lam - a), 1e-12);
  }
}

}  // namespace detail

/// Coordinate ascent in the order Lambda_t, A_t, H_t (per domain), gamma, eta,
/// (b, w), then f_t (per domain).
inline KbtlModel fit(const std::vector<DomainData>& data, const KbtlConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("kbtl::fit: need at least one domain");
  const int R = cfg.R;
  const double s2 = cfg.sigma_h * cfg.sigma_h;
  const double nu = cfg.nu_margin;

  KbtlModel m;
  m.cfg = cfg;
  for (std::size_t t = 0; t < data.size(); ++t) {
    const auto& dd = data[t];
    dd.validate(("kbtl::fit domain " + std::to_string(t + 1)).c_str());
    DomainFactors d;
    d.X = dd.X;
    d.y = dd.y;
    d.lengthscale = dd.lengthscale > 0.0 ? dd.lengthscale : median_lengthscale(dd.X);
    d.K = kernel_matrix(dd.X, dd.X, d.lengthscale);
    const Eigen::Index n = dd.X.rows();
    d.lambda_shape = Matrix::Constant(n, R, cfg.lambda.shape + 0.5);
    d.lambda_rate = Matrix::Constant(n, R, cfg.lambda.rate);
    std::mt19937_64 rng(mix_seed(seed, content_hash(dd.X, dd.y)));
    std::normal_distribution<double> n01(0.0, 1.0);
    d.A_mean.resize(n, R);
    for (Eigen::Index j = 0; j < R; ++j)
      for (Eigen::Index i = 0; i < n; ++i) d.A_mean(i, j) = 1e-2 * n01(rng);
    d.A_var = Matrix::Ones(n, R);
    d.A_prec_chol.assign(static_cast<std::size_t>(R), Matrix::Identity(n, n));
    d.H_mean = d.A_mean.transpose() * d.K;
    d.H_cov = Matrix::Identity(R, R);
    d.f_mean.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.f_mean[i] = dd.y[static_cast<std::size_t>(i)] * (nu + 0.5);
    d.f_var = Vector::Ones(n);
    m.domains.push_back(std::move(d));
  }
  m.gamma_shape = cfg.gamma.shape + 0.5;
  m.gamma_rate = cfg.gamma.rate;
  m.eta_shape = Vector::Constant(R, cfg.eta.shape + 0.5);
  m.eta_rate = Vector::Constant(R, cfg.eta.rate);
  m.bw_mean = Vector::Zero(R + 1);
  m.bw_cov = Matrix::Identity(R + 1, R + 1);

  std::vector<Matrix> KKt;
  for (const auto& d : m.domains) KKt.push_back(d.K * d.K.transpose());

  for (int it = 1; it <= cfg.max_iters; ++it) {
    double change = 0.0;
    const Vector w = m.bw_mean.tail(R);
    const Matrix wwT = w * w.transpose() + m.bw_cov.bottomRightCorner(R, R);
    const Vector wb = w * m.bw_mean[0] + m.bw_cov.bottomLeftCorner(R, 1);

    for (std::size_t t = 0; t < m.domains.size(); ++t) {
      auto& d = m.domains[t];
      const Eigen::Index n = d.K.rows();

      const Matrix old_lambda = d.lambda_shape.cwiseQuotient(d.lambda_rate);
      for (Eigen::Index s = 0; s < R; ++s)
        d.lambda_rate.col(s) =
            (cfg.lambda.rate + 0.5 * (d.A_mean.col(s).array().square() + d.A_var.col(s).array()))
                .matrix();
      const Matrix e_lambda = d.lambda_shape.cwiseQuotient(d.lambda_rate);
      detail::check_finite(e_lambda, "Lambda", it);
      change = std::max(change, detail::max_abs_diff(e_lambda, old_lambda));

      const Matrix old_a = d.A_mean;
      for (Eigen::Index s = 0; s < R; ++s) {
        Matrix prec = KKt[t] / s2;
        prec.diagonal() += e_lambda.col(s);
        Eigen::LLT<Matrix> llt(prec);
        if (llt.info() != Eigen::Success) throw KbtlNumericError("A", it);
        Matrix& L = d.A_prec_chol[static_cast<std::size_t>(s)];
        L = llt.matrixL();
        Matrix linv = Matrix::Identity(n, n);
        L.triangularView<Eigen::Lower>().solveInPlace(linv);
        d.A_var.col(s) = linv.colwise().squaredNorm().transpose();
        d.A_mean.col(s) = llt.solve(d.K * d.H_mean.row(s).transpose()) / s2;
      }
      detail::check_finite(d.A_mean, "A", it);
      change = std::max(change, detail::max_abs_diff(d.A_mean, old_a));

      const Matrix old_h = d.H_mean;
      Matrix hprec = wwT;
      hprec.diagonal().array() += 1.0 / s2;
      d.H_cov = robust_llt(hprec, "kbtl H precision").solve(Matrix::Identity(R, R));
      Matrix rhs = d.A_mean.transpose() * d.K / s2 + w * d.f_mean.transpose();
      rhs.colwise() -= wb;
      d.H_mean = d.H_cov * rhs;
      detail::check_finite(d.H_mean, "H", it);
      change = std::max(change, detail::max_abs_diff(d.H_mean, old_h));
    }

    const double old_gamma = m.gamma_shape / m.gamma_rate;
    m.gamma_rate = cfg.gamma.rate + 0.5 * (m.bw_mean[0] * m.bw_mean[0] + m.bw_cov(0, 0));
    const double e_gamma = m.gamma_shape / m.gamma_rate;
    if (!std::isfinite(e_gamma)) throw KbtlNumericError("gamma", it);
    change = std::max(change, std::abs(e_gamma - old_gamma));

    const Vector old_eta = m.eta_shape.cwiseQuotient(m.eta_rate);
    m.eta_rate = (cfg.eta.rate + 0.5 * (w.array().square() + m.bw_cov.diagonal().tail(R).array())).matrix();
    const Vector e_eta = m.eta_shape.cwiseQuotient(m.eta_rate);
    detail::check_finite(e_eta, "eta", it);
    change = std::max(change, detail::max_abs_diff(e_eta, old_eta));

    Matrix prec = Matrix::Zero(R + 1, R + 1);
    Vector rhs = Vector::Zero(R + 1);
    prec(0, 0) = e_gamma;
    prec.diagonal().tail(R) += e_eta;
    for (const auto& d : m.domains) {
      const double n = static_cast<double>(d.K.rows());
      const Vector hsum = d.H_mean.rowwise().sum();
      prec(0, 0) += n;
      prec.bottomLeftCorner(R, 1) += hsum;
      prec.topRightCorner(1, R) += hsum.transpose();
      prec.bottomRightCorner(R, R) += d.H_mean * d.H_mean.transpose() + n * d.H_cov;
      rhs[0] += d.f_mean.sum();
      rhs.tail(R) += d.H_mean * d.f_mean;
    }
    const Vector old_bw = m.bw_mean;
    m.bw_cov = robust_llt(symmetrize(prec), "kbtl (b, w) precision").solve(Matrix::Identity(R + 1, R + 1));
    m.bw_mean = m.bw_cov * rhs;
    detail::check_finite(m.bw_mean, "(b, w)", it);
    change = std::max(change, detail::max_abs_diff(m.bw_mean, old_bw));

    for (auto& d : m.domains) {
      const Vector old_f = d.f_mean;
      detail::update_f(d, m.bw_mean, nu);
      detail::check_finite(d.f_mean, "f", it);
      change = std::max(change, detail::max_abs_diff(d.f_mean, old_f));
    }

    m.changes.push_back(change);
    m.iterations = it;
    if (change < cfg.param_tol) {
      m.converged = true;
      break;
    }
  }
  return m;
}

/// Full covariance of column s of A_t.
inline Matrix a_covariance(const DomainFactors& d, int s) {
  const Matrix& L = d.A_prec_chol.at(static_cast<std::size_t>(s));
  Matrix linv = Matrix::Identity(L.rows(), L.cols());
  L.triangularView<Eigen::Lower>().solveInPlace(linv);
  return linv.transpose() * linv;
}

inline const DomainFactors& domain_at(const KbtlModel& m, std::size_t t) {
  if (t >= m.domains.size()) throw std::out_of_range("kbtl: unknown domain id " + std::to_string(t));
  return m.domains[t];
}

/// E[A_t]^T K(X_t, Xnew), one column per new point.
inline Matrix project(const KbtlModel& m, std::size_t t, const Matrix& Xnew) {
  const auto& d = domain_at(m, t);
  require_dim(Xnew.cols(), d.X.cols(), "kbtl::project");
  return d.A_mean.transpose() * kernel_matrix(d.X, Xnew, d.lengthscale);
}

/// Variance of each latent coordinate of the new points, sigma_h^2 plus the
/// projection uncertainty.
inline Matrix latent_variance(const KbtlModel& m, std::size_t t, const Matrix& Xnew) {
  const auto& d = domain_at(m, t);
  require_dim(Xnew.cols(), d.X.cols(), "kbtl::latent_variance");
  const Matrix k = kernel_matrix(d.X, Xnew, d.lengthscale);
  Matrix v(m.cfg.R, Xnew.rows());
  for (Eigen::Index s = 0; s < m.cfg.R; ++s) {
    const Matrix z = d.A_prec_chol[static_cast<std::size_t>(s)].triangularView<Eigen::Lower>().solve(k);
    v.row(s) = (z.colwise().squaredNorm().array() + m.cfg.sigma_h * m.cfg.sigma_h).matrix();
  }
  return v;
}

struct Prediction {
  Vector f_mean, f_var;
  Vector p_pos;  // p(y = +1)
};

/// p(+1) from Phi((mu - nu)/sqrt(1 + var)) normalised against the mirrored
/// term for -1. Only the (b, w) covariance enters var.
inline Prediction predict_from_latent(const KbtlModel& m, const Matrix& H) {
  const int R = m.cfg.R;
  require_dim(H.rows(), R, "kbtl::predict latent");
  Prediction p;
  p.f_mean = (H.transpose() * m.bw_mean.tail(R)).array() + m.bw_mean[0];
  p.f_var.resize(H.cols());
  p.p_pos.resize(H.cols());
  for (Eigen::Index i = 0; i < H.cols(); ++i) {
    Vector g(R + 1);
    g[0] = 1.0;
    g.tail(R) = H.col(i);
    p.f_var[i] = g.dot(m.bw_cov * g);
    const double sd = std::sqrt(1.0 + p.f_var[i]);
    const double lp = detail::log_norm_cdf((p.f_mean[i] - m.cfg.nu_margin) / sd);
    const double ln = detail::log_norm_cdf((-p.f_mean[i] - m.cfg.nu_margin) / sd);
    p.p_pos[i] = 1.0 / (1.0 + std::exp(ln - lp));
  }
  return p;
}

inline Prediction predict(const KbtlModel& m, std::size_t t, const Matrix& Xnew) {
  return predict_from_latent(m, project(m, t, Xnew));
}

/// Labels in {-1, +1}; +1 when p(+1) >= 0.5.
inline std::vector<int> classify(const Prediction& p) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(p.p_pos.size()));
  for (Eigen::Index i = 0; i < p.p_pos.size(); ++i) out.push_back(p.p_pos[i] >= 0.5 ? 1 : -1);
  return out;
}

inline nlohmann::json to_json(const KbtlModel& m) {
  nlohmann::json j;
  j["R"] = m.cfg.R;
  j["margin"] = m.cfg.nu_margin;
  j["sigma_h"] = m.cfg.sigma_h;
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  j["b_mean"] = m.bw_mean[0];
  j["w_mean"] = to_json_value(Vector(m.bw_mean.tail(m.cfg.R)));
  j["bw_cov"] = to_json_value(m.bw_cov);
  j["gamma_mean"] = m.gamma_shape / m.gamma_rate;
  j["eta_mean"] = to_json_value(Vector(m.eta_shape.cwiseQuotient(m.eta_rate)));
  nlohmann::json doms = nlohmann::json::array();
  for (const auto& d : m.domains) {
    nlohmann::json o;
    o["n"] = d.X.rows();
    o["dim"] = d.X.cols();
    o["lengthscale"] = d.lengthscale;
    o["A_mean"] = to_json_value(d.A_mean);
    o["H_mean"] = to_json_value(d.H_mean);
    o["f_mean"] = to_json_value(d.f_mean);
    doms.push_back(std::move(o));
  }
  j["domains"] = std::move(doms);
  return j;
}

}  // namespace shmbayes::kbtl
