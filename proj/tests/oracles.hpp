#pragma once

// Independent numerical oracles used by the test suites. Nothing in here
// calls the library's update or predictive formulas; posteriors are formed
// by brute-force quadrature of prior x likelihood.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double digamma(double x) {
  double r = 0.0;
  while (x < 8.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))));
}

inline double normal_logpdf(double x, double mean, double var) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - mean) * (x - mean) / var);
}

/// 1-D normal / inverse-gamma prior written directly in (mu, tau = 1/sigma^2):
/// mu | tau ~ N(m0, 1 / (kappa0 tau)), tau ~ Gamma(nu0 / 2, rate S0 / 2).
struct Prior1d {
  double m0, kappa0, nu0, S0;
};

struct Moments1d {
  double m, kappa, nu, S;
  double log_evidence;
};

/// Posterior over (mu, tau) tabulated on a trapezoid grid in (z, u) with
/// tau = exp(u) and mu = centre + z / sqrt(tau).
class GridPosterior1d {
 public:
  GridPosterior1d(const Prior1d& p, const std::vector<double>& data, int nu_pts = 1600, int nz_pts = 1200)
      : prior_(p), data_(data) {
    double centre = p.m0;
    if (!data.empty()) {
      centre = 0.0;
      for (double x : data) centre += x;
      centre /= static_cast<double>(data.size());
    }
    centre_ = centre;
    const double u_lo = -30.0, u_hi = 18.0, z_lo = -45.0, z_hi = 45.0;
    du_ = (u_hi - u_lo) / (nu_pts - 1);
    dz_ = (z_hi - z_lo) / (nz_pts - 1);
    for (int a = 0; a < nu_pts; ++a) us_.push_back(u_lo + a * du_);
    for (int b = 0; b < nz_pts; ++b) zs_.push_back(z_lo + b * dz_);
    logw_.resize(us_.size() * zs_.size());
    double mx = -INFINITY;
    for (std::size_t a = 0; a < us_.size(); ++a) {
      const double tau = std::exp(us_[a]);
      const double log_gamma = 0.5 * p.nu0 * std::log(0.5 * p.S0) - std::lgamma(0.5 * p.nu0) +
                               (0.5 * p.nu0 - 1.0) * us_[a] - 0.5 * p.S0 * tau;
      // d tau = tau du, d mu = dz / sqrt(tau)
      const double log_jac = us_[a] - 0.5 * us_[a];
      for (std::size_t b = 0; b < zs_.size(); ++b) {
        const double mu = centre + zs_[b] / std::sqrt(tau);
        double lw = log_gamma + log_jac + normal_logpdf(mu, p.m0, 1.0 / (p.kappa0 * tau));
        for (double x : data) lw += normal_logpdf(x, mu, 1.0 / tau);
        logw_[a * zs_.size() + b] = lw;
        mx = std::max(mx, lw);
      }
    }
    shift_ = mx;
    double z = 0.0;
    for (double lw : logw_) z += std::exp(lw - shift_);
    norm_ = z * du_ * dz_;
  }

  /// E[g(mu, tau)] under the grid posterior.
  double expect(const std::function<double(double, double)>& g) const {
    double s = 0.0;
    for (std::size_t a = 0; a < us_.size(); ++a) {
      const double tau = std::exp(us_[a]);
      for (std::size_t b = 0; b < zs_.size(); ++b) {
        const double w = std::exp(logw_[a * zs_.size() + b] - shift_);
        if (w < 1e-300) continue;
        s += w * g(centre_ + zs_[b] / std::sqrt(tau), tau);
      }
    }
    return s * du_ * dz_ / norm_;
  }

  /// Recovers (m, kappa, nu, S) from moments that identify a normal-gamma law.
  Moments1d moments() const {
    const double e_tau = expect([](double, double t) { return t; });
    const double e_log_tau = expect([](double, double t) { return std::log(t); });
    const double e_tau_mu = expect([](double m, double t) { return t * m; });
    const double m = e_tau_mu / e_tau;
    const double inv_kappa = expect([m](double mu, double t) { return t * (mu - m) * (mu - m); });
    // digamma(a) - log(a) = c, solved by bisection on a = nu / 2
    const double c = e_log_tau - std::log(e_tau);
    double lo = 1e-6, hi = 1e7;
    for (int it = 0; it < 300; ++it) {
      const double mid = std::sqrt(lo * hi);
      if (digamma(mid) - std::log(mid) < c) lo = mid; else hi = mid;
    }
    const double nu = 2.0 * std::sqrt(lo * hi);
    return {m, 1.0 / inv_kappa, nu, nu / e_tau, std::log(norm_) + shift_};
  }

  /// Posterior predictive density p(x | data) by quadrature.
  double predictive(double x) const {
    return expect([x](double mu, double t) { return std::exp(normal_logpdf(x, mu, 1.0 / t)); });
  }

 private:
  Prior1d prior_;
  std::vector<double> data_;
  std::vector<double> us_, zs_, logw_;
  double centre_ = 0.0, du_ = 0.0, dz_ = 0.0, shift_ = 0.0, norm_ = 1.0;
};

/// 2-D oracle for mu | Sigma: brute-force grid over mu with Sigma held fixed.
/// Returns (mean, covariance) of p(mu | Sigma, data).
inline std::pair<Eigen::Vector2d, Eigen::Matrix2d> grid_mean_given_sigma(const Eigen::Vector2d& m0, double kappa0,
                                                                          const Eigen::Matrix2d& sigma,
                                                                          const std::vector<Eigen::Vector2d>& data,
                                                                          int pts = 801) {
  const Eigen::Matrix2d prec = sigma.inverse();
  Eigen::Vector2d centre = m0;
  if (!data.empty()) {
    centre.setZero();
    for (const auto& x : data) centre += x;
    centre /= static_cast<double>(data.size());
  }
  const double n_eff = static_cast<double>(data.size()) + 0.25;
  const double h0 = 14.0 * std::sqrt(sigma(0, 0) / n_eff), h1 = 14.0 * std::sqrt(sigma(1, 1) / n_eff);
  std::vector<double> lw(static_cast<std::size_t>(pts) * pts);
  double mx = -INFINITY;
  auto at = [&](int a, int b) {
    return Eigen::Vector2d(centre[0] - h0 + 2.0 * h0 * a / (pts - 1), centre[1] - h1 + 2.0 * h1 * b / (pts - 1));
  };
  for (int a = 0; a < pts; ++a)
    for (int b = 0; b < pts; ++b) {
      const Eigen::Vector2d mu = at(a, b);
      double v = -0.5 * kappa0 * (mu - m0).dot(prec * (mu - m0));
      for (const auto& x : data) v -= 0.5 * (x - mu).dot(prec * (x - mu));
      lw[static_cast<std::size_t>(a) * pts + b] = v;
      mx = std::max(mx, v);
    }
  double z = 0.0;
  Eigen::Vector2d s1 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d s2 = Eigen::Matrix2d::Zero();
  for (int a = 0; a < pts; ++a)
    for (int b = 0; b < pts; ++b) {
      const double w = std::exp(lw[static_cast<std::size_t>(a) * pts + b] - mx);
      const Eigen::Vector2d mu = at(a, b);
      z += w;
      s1 += w * mu;
      s2 += w * mu * mu.transpose();
    }
  const Eigen::Vector2d mean = s1 / z;
  return {mean, s2 / z - mean * mean.transpose()};
}

/// Trapezoid integral of f over a 2-D box.
inline double integrate_2d(const std::function<double(double, double)>& f, double lo0, double hi0, double lo1,
                           double hi1, int pts) {
  const double h0 = (hi0 - lo0) / (pts - 1), h1 = (hi1 - lo1) / (pts - 1);
  double s = 0.0;
  for (int a = 0; a < pts; ++a) {
    const double wa = (a == 0 || a == pts - 1) ? 0.5 : 1.0;
    for (int b = 0; b < pts; ++b) {
      const double wb = (b == 0 || b == pts - 1) ? 0.5 : 1.0;
      s += wa * wb * f(lo0 + a * h0, lo1 + b * h1);
    }
  }
  return s * h0 * h1;
}

}  // namespace oracle
