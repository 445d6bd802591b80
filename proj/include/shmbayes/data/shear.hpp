#pragma once

// Lumped-mass shear-building simulator. Each storey is a rigid plate carried
// by four cantilever beams in bending, so the storey stiffness is
// 4 * 3EI / l_b^3. Features are the damped natural frequencies in Hz.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "shmbayes/core/linalg.hpp"

namespace shmbayes::datagen {

struct GaussianParam {
  double mean = 0.0;
  double variance = 0.0;
};

struct GammaParam {
  double shape = 1.0;
  double scale = 1.0;
};

struct ShearSpec {
  int dof = 1;
  double beam_length_mm = 185.0, beam_width_mm = 25.0, beam_thickness_mm = 6.35;
  double mass_length_mm = 350.0, mass_width_mm = 254.0, mass_thickness_mm = 25.0;
  GaussianParam elastic_modulus_gpa{71.0, 1.0e-9};
  GaussianParam density_kg_m3{2700.0, 10.0};
  GammaParam damping_ns_m{50.0, 0.1};
  double damage_ei_factor = 0.5;
  int damage_storey = 1;  // 1-based
  /// Relative standard deviation of multiplicative measurement noise on each
  /// frequency. Zero reproduces the noiseless simulator.
  double freq_noise = 0.0;

  void validate() const {
    if (dof < 1) throw std::invalid_argument("ShearSpec: dof must be >= 1");
    for (double v : {beam_length_mm, beam_width_mm, beam_thickness_mm, mass_length_mm, mass_width_mm, mass_thickness_mm}) {
      if (!(v > 0.0)) throw std::invalid_argument("ShearSpec: dimensions must be > 0");
    }
    if (!(damage_ei_factor > 0.0 && damage_ei_factor <= 1.0)) {
      throw std::invalid_argument("ShearSpec: damage_ei_factor must lie in (0, 1]");
    }
    if (damage_storey < 1 || damage_storey > dof) throw std::invalid_argument("ShearSpec: damage_storey out of range");
    if (freq_noise < 0.0) throw std::invalid_argument("ShearSpec: freq_noise must be >= 0");
  }

  double second_moment_m4() const {
    const double w = beam_width_mm * 1e-3, t = beam_thickness_mm * 1e-3;
    return w * t * t * t / 12.0;
  }
  double storey_mass_kg(double density) const {
    return density * mass_length_mm * mass_width_mm * mass_thickness_mm * 1e-9;
  }
};

/// One realisation of the material parameters.
struct ShearDraw {
  double elastic_modulus_gpa = 71.0;
  double density_kg_m3 = 2700.0;
  double damping_ns_m = 5.0;
};

/// Ascending damped natural frequencies (Hz) of M q'' + C q' + K q = 0, from
/// the eigenvalues of the first-order state matrix [[0, I], [-M^-1 K, -M^-1 C]].
inline Vector damped_frequencies(const Matrix& mass, const Matrix& damping, const Matrix& stiffness) {
  const Eigen::Index d = mass.rows();
  require_dim(stiffness.rows(), d, "damped_frequencies stiffness");
  require_dim(damping.rows(), d, "damped_frequencies damping");
  const Eigen::LLT<Matrix> m_llt(mass);
  if (m_llt.info() != Eigen::Success) throw NumericalError("damped_frequencies: mass matrix is not positive-definite");
  Matrix state = Matrix::Zero(2 * d, 2 * d);
  state.topRightCorner(d, d).setIdentity();
  state.bottomLeftCorner(d, d) = -m_llt.solve(stiffness);
  state.bottomRightCorner(d, d) = -m_llt.solve(damping);

  Eigen::EigenSolver<Matrix> es(state, false);
  if (es.info() != Eigen::Success) throw NumericalError("damped_frequencies: eigen-solver failed");
  std::vector<double> freqs;
  for (Eigen::Index i = 0; i < 2 * d; ++i) {
    const double im = es.eigenvalues()[i].imag();
    if (im > 0.0) freqs.push_back(im / (2.0 * std::numbers::pi));
  }
  if (static_cast<Eigen::Index>(freqs.size()) != d) {
    throw NumericalError("damped_frequencies: expected " + std::to_string(d) + " underdamped modes, found " +
                         std::to_string(freqs.size()));
  }
  std::sort(freqs.begin(), freqs.end());
  return Eigen::Map<const Vector>(freqs.data(), d);
}

struct ShearMatrices {
  Matrix mass, damping, stiffness;
};

inline ShearMatrices assemble_shear(const ShearSpec& spec, const ShearDraw& draw, bool damaged) {
  spec.validate();
  if (!(draw.elastic_modulus_gpa > 0.0 && draw.density_kg_m3 > 0.0 && draw.damping_ns_m >= 0.0)) {
    throw std::invalid_argument("shear_frequencies: draw values must be physically positive");
  }
  const Eigen::Index d = spec.dof;
  const double ei = draw.elastic_modulus_gpa * 1e9 * spec.second_moment_m4();
  const double lb = spec.beam_length_mm * 1e-3;
  Vector k = Vector::Constant(d, 4.0 * 3.0 * ei / (lb * lb * lb));
  if (damaged) k[spec.damage_storey - 1] *= spec.damage_ei_factor;

  ShearMatrices out;
  out.mass = Matrix::Identity(d, d) * spec.storey_mass_kg(draw.density_kg_m3);
  out.damping = Matrix::Identity(d, d) * draw.damping_ns_m;
  out.stiffness = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.stiffness(i, i) += k[i];
    if (i + 1 < d) {
      out.stiffness(i, i) += k[i + 1];
      out.stiffness(i, i + 1) = -k[i + 1];
      out.stiffness(i + 1, i) = -k[i + 1];
    }
  }
  return out;
}

/// Noise-free damped natural frequencies for one draw.
inline Vector shear_frequencies(const ShearSpec& spec, const ShearDraw& draw, bool damaged) {
  const auto mats = assemble_shear(spec, draw, damaged);
  return damped_frequencies(mats.mass, mats.damping, mats.stiffness);
}

template <class Rng>
ShearDraw sample_draw(const ShearSpec& spec, Rng& rng) {
  std::normal_distribution<double> e(spec.elastic_modulus_gpa.mean, std::sqrt(spec.elastic_modulus_gpa.variance));
  std::normal_distribution<double> rho(spec.density_kg_m3.mean, std::sqrt(spec.density_kg_m3.variance));
  std::gamma_distribution<double> c(spec.damping_ns_m.shape, spec.damping_ns_m.scale);
  ShearDraw draw;
  draw.elastic_modulus_gpa = e(rng);
  draw.density_kg_m3 = rho(rng);
  draw.damping_ns_m = c(rng);
  return draw;
}

/// The five laboratory-scale structures, domains 1 to 5.
inline std::vector<ShearSpec> reference_structures() {
  auto make = [](int dof, double lb, double wb, double tb, double lm, double wm, double tm, double e, double e_var,
                 double rho, double rho_var, double c_shape, double c_scale) {
    ShearSpec s;
    s.dof = dof;
    s.beam_length_mm = lb;
    s.beam_width_mm = wb;
    s.beam_thickness_mm = tb;
    s.mass_length_mm = lm;
    s.mass_width_mm = wm;
    s.mass_thickness_mm = tm;
    s.elastic_modulus_gpa = {e, e_var};
    s.density_kg_m3 = {rho, rho_var};
    s.damping_ns_m = {c_shape, c_scale};
    return s;
  };
  return {
      make(4, 185, 25, 6.35, 350, 254, 25, 71, 1.0e-9, 2700, 10, 50, 0.1),
      make(8, 200, 35, 6.25, 450, 322, 35, 70, 1.2e-9, 2800, 22, 8, 0.8),
      make(10, 177, 45, 6.15, 340, 274, 45, 72, 1.3e-9, 2550, 25, 25, 0.2),
      make(3, 193, 32, 5.55, 260, 265, 32, 75, 1.5e-9, 2600, 15, 20, 0.1),
      make(5, 165, 46, 7.45, 420, 333, 46, 73, 1.4e-9, 2650, 20, 50, 0.1),
  };
}

/// Stand-in for the three-storey aluminium test rig: nominal dimensions close
/// to the simulated structures, with measurement noise on the frequencies.
inline ShearSpec rig_spec() {
  ShearSpec s;
  s.dof = 3;
  s.beam_length_mm = 185;
  s.beam_width_mm = 25;
  s.beam_thickness_mm = 6.35;
  s.mass_length_mm = 350;
  s.mass_width_mm = 254;
  s.mass_thickness_mm = 25;
  s.elastic_modulus_gpa = {70.0, 1.0e-9};
  s.density_kg_m3 = {2700.0, 10.0};
  s.damping_ns_m = {10.0, 0.5};
  s.freq_noise = 0.01;
  return s;
}

}  // namespace shmbayes::datagen
