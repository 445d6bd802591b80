#pragma once

// Synthetic stand-ins for the three experimental data shapes: a 2-D
// three-class "AE-like" set, a 4-D natural-frequency stream with an
// environmental regime and late damage onset, and a heterogeneous population
// of shear structures for transfer learning.
//
// Seeding: every independent stream draws from mix_seed(seed, counter) where
// the counter identifies the stream (class index, domain/train-test pair).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "shmbayes/core/linalg.hpp"
#include "shmbayes/data/dataset.hpp"
#include "shmbayes/data/shear.hpp"

namespace shmbayes::datagen {

// ---------------------------------------------------------------------------
// AE-like: three crescent-shaped classes in 2-D

struct AeShape {
  double centre_radius = 2.2;  // class centres sit on a circle of this radius
  double arc_radius = 1.3;
  double arc_half_angle = 1.4;  // radians
  double noise = 0.25;
};

inline LabeledDataset gen_ae_like(std::uint64_t seed, int n_per_class, const AeShape& shape = {}) {
  if (n_per_class < 1) throw std::invalid_argument("gen_ae_like: n_per_class must be >= 1");
  LabeledDataset ds;
  ds.X.resize(3 * n_per_class, 2);
  for (int k = 0; k < 3; ++k) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
    std::uniform_real_distribution<double> arc(-shape.arc_half_angle, shape.arc_half_angle);
    std::normal_distribution<double> noise(0.0, shape.noise);
    const double phi = 2.0 * std::numbers::pi * k / 3.0 + 0.3;
    const double cx = shape.centre_radius * std::cos(phi), cy = shape.centre_radius * std::sin(phi);
    // The arc opens towards the origin; its own orientation is rotated per class.
    const double open = phi + std::numbers::pi + 0.6 * (k - 1);
    for (int i = 0; i < n_per_class; ++i) {
      const double t = open + arc(rng);
      const Eigen::Index row = k * n_per_class + i;
      ds.X(row, 0) = cx + shape.arc_radius * (std::cos(t) - std::cos(open)) + noise(rng);
      ds.X(row, 1) = cy + shape.arc_radius * (std::sin(t) - std::sin(open)) + noise(rng);
      ds.y.push_back(k + 1);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Z24-like natural-frequency stream

struct Regime {
  std::size_t start = 0;
  int label = 1;
  /// Mean shift in units of the baseline standard deviation, per feature.
  Vector shift;
  /// Additive inflation of the baseline standard deviation: sd * (1 + scale).
  Vector scale;
  /// Probability that a point inside the window belongs to this regime; the
  /// remainder are drawn from the first (baseline) regime.
  double occupancy = 1.0;
};

struct StreamSpec {
  std::size_t length = 3932;
  std::vector<Regime> schedule;
  std::size_t damage_onset = 3476;
  Vector baseline_mean;
  Vector baseline_sd;
  double correlation = 0.5;  // common-mode correlation between features

  Eigen::Index dim() const { return baseline_mean.size(); }

  void validate() const {
    if (schedule.empty() || schedule.front().start != 0) throw std::invalid_argument("StreamSpec: schedule must start at 0");
    for (std::size_t i = 1; i < schedule.size(); ++i)
      if (schedule[i].start <= schedule[i - 1].start) throw std::invalid_argument("StreamSpec: regime starts must increase");
    if (damage_onset >= length) throw std::invalid_argument("StreamSpec: damage onset must precede the end of the stream");
    for (const auto& r : schedule) {
      if (!(r.occupancy > 0.0 && r.occupancy <= 1.0)) throw std::invalid_argument("StreamSpec: occupancy must lie in (0, 1]");
      require_dim(r.shift.size(), dim(), "StreamSpec shift");
      require_dim(r.scale.size(), dim(), "StreamSpec scale");
    }
    require_dim(baseline_sd.size(), dim(), "StreamSpec baseline_sd");
    if (!(correlation > -1.0 / static_cast<double>(dim()) && correlation < 1.0)) {
      throw std::invalid_argument("StreamSpec: correlation out of range");
    }
  }

  /// Label of the regime active at stream position i.
  const Regime& regime_at(std::size_t i) const {
    const Regime* r = &schedule.front();
    for (const auto& s : schedule)
      if (s.start <= i) r = &s;
    return *r;
  }
};

/// Four frequencies around the Z24 modes. Between 1200 and 1500 a handful of
/// freezing episodes (5% of points) stiffen the deck strongly; damage from
/// 3476 lowers the first and third modes.
inline StreamSpec default_z24_spec() {
  StreamSpec s;
  s.baseline_mean = (Vector(4) << 3.95, 5.05, 9.85, 10.35).finished();
  s.baseline_sd = (Vector(4) << 0.035, 0.045, 0.09, 0.10).finished();
  const Vector zero = Vector::Zero(4);
  Regime normal{0, 1, zero, zero};
  Regime cold{1200, 2, (Vector(4) << 15.0, 10.5, 12.0, 7.5).finished(), (Vector(4) << 1.5, 1.5, 1.0, 1.0).finished(), 0.05};
  Regime thaw{1500, 1, zero, zero};
  Regime damage{3476, 3, (Vector(4) << -8.0, -3.0, -6.0, 0.0).finished(), (Vector(4) << 0.2, 0.2, 0.2, 0.2).finished()};
  s.schedule = {normal, cold, thaw, damage};
  return s;
}

inline LabeledDataset gen_z24_like(const StreamSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Eigen::Index d = spec.dim();
  Matrix corr = Matrix::Constant(d, d, spec.correlation);
  corr.diagonal().setOnes();
  const Matrix chol = Eigen::LLT<Matrix>(corr).matrixL();

  std::mt19937_64 rng(mix_seed(seed, 0));
  std::mt19937_64 occ_rng(mix_seed(seed, 1));
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  LabeledDataset ds;
  ds.X.resize(static_cast<Eigen::Index>(spec.length), d);
  ds.y.reserve(spec.length);
  Vector z(d);
  for (std::size_t i = 0; i < spec.length; ++i) {
    const Regime* rp = &spec.regime_at(i);
    if (rp->occupancy < 1.0 && u01(occ_rng) >= rp->occupancy) rp = &spec.schedule.front();
    const Regime& r = *rp;
    for (Eigen::Index j = 0; j < d; ++j) z[j] = n01(rng);
    const Vector e = chol * z;
    const Vector sd = spec.baseline_sd.cwiseProduct((Vector::Ones(d) + r.scale));
    ds.X.row(static_cast<Eigen::Index>(i)) =
        (spec.baseline_mean + spec.baseline_sd.cwiseProduct(r.shift) + sd.cwiseProduct(e)).transpose();
    ds.y.push_back(r.label);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Shear-building population

struct DomainCounts {
  int train_neg = 0, train_pos = 0, test_neg = 0, test_pos = 0;
};

inline std::vector<DomainCounts> reference_counts() {
  return {{250, 100, 500, 500}, {100, 25, 500, 500}, {120, 20, 500, 500},
          {200, 150, 500, 500}, {500, 10, 500, 500}, {3, 3, 2, 2}};
}

/// The reference structures followed by the rig stand-in as domain 6.
inline std::vector<ShearSpec> population_specs() {
  auto specs = reference_structures();
  specs.push_back(rig_spec());
  return specs;
}

struct Population {
  std::vector<LabeledDataset> train;  // labels in {-1, +1}
  std::vector<LabeledDataset> test;
};

template <class Rng>
LabeledDataset sample_domain(const ShearSpec& spec, int n_neg, int n_pos, Rng& rng) {
  LabeledDataset ds;
  ds.X.resize(n_neg + n_pos, spec.dof);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n_neg + n_pos; ++i) {
    const bool damaged = i >= n_neg;
    Vector f = shear_frequencies(spec, sample_draw(spec, rng), damaged);
    if (spec.freq_noise > 0.0)
      for (auto& v : f) v *= 1.0 + spec.freq_noise * noise(rng);
    ds.X.row(i) = f.transpose();
    ds.y.push_back(damaged ? 1 : -1);
  }
  return ds;
}

inline Population gen_population(const std::vector<ShearSpec>& specs, const std::vector<DomainCounts>& counts,
                                 std::uint64_t seed) {
  if (specs.size() != counts.size()) throw std::invalid_argument("gen_population: specs and counts differ in length");
  Population pop;
  for (std::size_t t = 0; t < specs.size(); ++t) {
    std::mt19937_64 train_rng(mix_seed(seed, 2 * t));
    std::mt19937_64 test_rng(mix_seed(seed, 2 * t + 1));
    pop.train.push_back(sample_domain(specs[t], counts[t].train_neg, counts[t].train_pos, train_rng));
    pop.test.push_back(sample_domain(specs[t], counts[t].test_neg, counts[t].test_pos, test_rng));
  }
  return pop;
}

}  // namespace shmbayes::datagen
