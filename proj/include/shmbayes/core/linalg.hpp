#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace shmbayes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a matrix that must be positive-definite is not, even after jitter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on inconsistent shapes between arguments.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kLogPi = 1.14472988584940017414;  // log(pi)
inline constexpr double kLog2Pi = 1.83787706640934548356;  // log(2 pi)

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

/// Cholesky factor of a symmetric matrix. On failure the diagonal is loaded
/// once with 1e-9 * trace/d; a second failure throws NumericalError.
inline Eigen::LLT<Matrix> robust_llt(const Matrix& a, const char* what = "matrix") {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double d = static_cast<double>(a.rows());
  const double jitter = 1e-9 * std::abs(a.trace()) / d;
  Matrix b = a;
  b.diagonal().array() += jitter;
  llt.compute(b);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + " is not positive-definite");
  }
  return llt;
}

/// log|A| from a Cholesky factorisation.
inline double log_det(const Eigen::LLT<Matrix>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// SplitMix64 finaliser; used to derive independent sub-seeds from
/// (seed, counter) pairs so every generator stream is reproducible.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace shmbayes
