#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "shmbayes/data/csv.hpp"
#include "shmbayes/data/generators.hpp"
#include "shmbayes/eval/metrics.hpp"
#include "shmbayes/gmm/bayes_gmm.hpp"

using namespace shmbayes;
using namespace shmbayes::datagen;

namespace {

// Classical (mass-proportional) damping decouples the modes, so the damped
// frequencies follow from the undamped symmetric problem K phi = w^2 M phi.
Vector modal_oracle(const ShearMatrices& m) {
  const Eigen::Index d = m.mass.rows();
  const Vector inv_sqrt_m = m.mass.diagonal().cwiseSqrt().cwiseInverse();
  const Matrix kt = inv_sqrt_m.asDiagonal() * m.stiffness * inv_sqrt_m.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(kt);
  const double c_over_m = m.damping(0, 0) / m.mass(0, 0);
  Vector out(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double w = std::sqrt(es.eigenvalues()[i]);
    const double zeta = c_over_m / (2.0 * w);
    out[i] = w * std::sqrt(1.0 - zeta * zeta) / (2.0 * std::numbers::pi);
  }
  return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path tmpdir() {
  auto p = std::filesystem::temp_directory_path() / "shmbayes_test_datagen";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Shear, OneDofUndamped) {
  const Matrix m = Matrix::Identity(1, 1), c = Matrix::Zero(1, 1);
  const Matrix k = Matrix::Constant(1, 1, 4.0 * std::numbers::pi * std::numbers::pi);
  EXPECT_NEAR(damped_frequencies(m, c, k)[0], 1.0, 1e-12);
}

TEST(Shear, OneDofDampedClosedForm) {
  const double mass = 2.5, k = 900.0, zeta = 0.1;
  const Matrix m = Matrix::Constant(1, 1, mass), kk = Matrix::Constant(1, 1, k);
  const Matrix c = Matrix::Constant(1, 1, 2.0 * zeta * std::sqrt(k * mass));
  const double undamped = std::sqrt(k / mass) / (2.0 * std::numbers::pi);
  EXPECT_NEAR(damped_frequencies(m, c, kk)[0], undamped * std::sqrt(1.0 - zeta * zeta), 1e-12);
}

TEST(Shear, DomainOneNominalMatchesModalOracle) {
  const auto spec = reference_structures()[0];
  const ShearDraw nominal{71.0, 2700.0, 5.0};
  for (bool damaged : {false, true}) {
    const auto mats = assemble_shear(spec, nominal, damaged);
    const Vector f = shear_frequencies(spec, nominal, damaged);
    const Vector ref = modal_oracle(mats);
    ASSERT_EQ(f.size(), 4);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(f[i] / ref[i], 1.0, 1e-9);
  }
  // storey stiffness is four cantilevers, 4 * 3EI/l^3
  const auto mats = assemble_shear(spec, nominal, false);
  const double ei = 71e9 * 0.025 * std::pow(0.00635, 3) / 12.0;
  EXPECT_NEAR(mats.stiffness(3, 3), 12.0 * ei / std::pow(0.185, 3), 1e-6);
  EXPECT_NEAR(mats.mass(0, 0), 2700.0 * 0.350 * 0.254 * 0.025, 1e-12);
}

TEST(Shear, RandomDrawsAscendingPositiveAndDamageLowersAll) {
  std::mt19937_64 rng(8);
  for (const auto& spec : population_specs()) {
    for (int i = 0; i < 100; ++i) {
      const auto draw = sample_draw(spec, rng);
      const Vector f = shear_frequencies(spec, draw, false);
      const Vector g = shear_frequencies(spec, draw, true);
      EXPECT_GT(f[0], 0.0);
      for (Eigen::Index j = 1; j < f.size(); ++j) EXPECT_GT(f[j], f[j - 1]);
      for (Eigen::Index j = 0; j < f.size(); ++j) EXPECT_LE(g[j], f[j]);
      const Vector ref = modal_oracle(assemble_shear(spec, draw, true));
      for (Eigen::Index j = 0; j < f.size(); ++j) EXPECT_NEAR(g[j] / ref[j], 1.0, 1e-9);
    }
  }
}

TEST(Shear, InvalidInputs) {
  auto spec = reference_structures()[0];
  EXPECT_THROW(shear_frequencies(spec, {-1.0, 2700.0, 5.0}, false), std::invalid_argument);
  spec.damage_ei_factor = 0.0;
  EXPECT_THROW(shear_frequencies(spec, {71.0, 2700.0, 5.0}, true), std::invalid_argument);
}

TEST(Population, ReferenceCountsAndShapes) {
  const auto pop = gen_population(population_specs(), reference_counts(), 3);
  ASSERT_EQ(pop.train.size(), 6u);
  const auto& d5 = pop.train[4];
  EXPECT_EQ(std::count(d5.y.begin(), d5.y.end(), -1), 500);
  EXPECT_EQ(std::count(d5.y.begin(), d5.y.end(), 1), 10);
  EXPECT_EQ(pop.train[5].dim(), 3);
  EXPECT_EQ(pop.train[5].size(), 6);
  EXPECT_EQ(pop.test[5].size(), 4);
  EXPECT_EQ(pop.test[0].size(), 1000);
  for (std::size_t t = 0; t < 6; ++t) {
    const auto& ds = pop.test[t];
    EXPECT_TRUE(ds.X.allFinite());
    EXPECT_TRUE((ds.X.array() > 0.0).all());
    const Matrix neg = ds.rows_with_label(-1), pos = ds.rows_with_label(1);
    const Vector neg_mean = neg.colwise().mean(), pos_mean = pos.colwise().mean();
    for (Eigen::Index j = 0; j < neg_mean.size(); ++j) EXPECT_LE(pos_mean[j], neg_mean[j]);
  }
}

TEST(AeLike, ShapeLabelsAndDeterminism) {
  const auto one = gen_ae_like(1, 1);
  EXPECT_EQ(one.size(), 3);
  EXPECT_EQ(one.y, (std::vector<int>{1, 2, 3}));
  const auto dir = tmpdir();
  save_csv(gen_ae_like(42, 50), (dir / "a.csv").string());
  save_csv(gen_ae_like(42, 50), (dir / "b.csv").string());
  EXPECT_EQ(slurp((dir / "a.csv").string()), slurp((dir / "b.csv").string()));
  EXPECT_THROW(gen_ae_like(1, 0), std::invalid_argument);
}

TEST(AeLike, SeparationAtLeastFourSpreads) {
  const auto ds = gen_ae_like(5, 2000);
  std::vector<Vector> means;
  double spread = 0.0;
  for (int k = 1; k <= 3; ++k) {
    const Matrix rows = ds.rows_with_label(k);
    const Vector mu = rows.colwise().mean();
    means.push_back(mu);
    const double rms = std::sqrt((rows.rowwise() - mu.transpose()).rowwise().squaredNorm().mean());
    spread = std::max(spread, rms);
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) EXPECT_GE((means[a] - means[b]).norm(), 4.0 * spread);
}

TEST(AeLike, BayesianGmmSelfTest) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto train = gen_ae_like(seed, 200), test = gen_ae_like(seed + 1000, 200);
    const auto model = gmm::fit(train, gmm::GmmHyper::defaults(2));
    EXPECT_GE(eval::macro_f1(test.y, gmm::predict_labels(model, test.X), 3), 0.95);
  }
}

TEST(Z24Like, DefaultScheduleLengthAndDamageLabels) {
  const auto spec = default_z24_spec();
  const auto ds = gen_z24_like(spec, 1);
  ASSERT_EQ(ds.size(), 3932);
  EXPECT_EQ(ds.dim(), 4);
  std::size_t cold = 0;
  for (std::size_t i = 0; i < ds.y.size(); ++i) {
    if (i >= 3476) {
      ASSERT_EQ(ds.y[i], 3) << "at " << i;
    } else if (i >= 1200 && i < 1500) {
      ASSERT_TRUE(ds.y[i] == 1 || ds.y[i] == 2) << "at " << i;
      cold += ds.y[i] == 2;
    } else {
      ASSERT_EQ(ds.y[i], 1) << "at " << i;
    }
  }
  EXPECT_GT(cold, 0u);
  EXPECT_LT(cold, 60u);
}

TEST(Z24Like, EnvironmentalShiftRecovered) {
  auto spec = default_z24_spec();
  spec.schedule[1].occupancy = 1.0;
  const auto ds = gen_z24_like(spec, 2);
  const Vector base = ds.rows_with_label(1).colwise().mean();
  const Matrix env = ds.rows_with_label(2);
  const Vector env_mean = env.colwise().mean();
  const auto& cold = spec.schedule[1];
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double want = spec.baseline_sd[j] * cold.shift[j];
    const double se = spec.baseline_sd[j] * (1.0 + cold.scale[j]) / std::sqrt(static_cast<double>(env.rows()));
    EXPECT_NEAR(env_mean[j] - base[j], want, 4.0 * se);
  }
}

TEST(Z24Like, DegenerateScheduleIsExchangeable) {
  auto spec = default_z24_spec();
  for (auto& r : spec.schedule) {
    r.shift.setZero();
    r.scale.setZero();
    r.occupancy = 1.0;
  }
  const auto ds = gen_z24_like(spec, 3);
  EXPECT_EQ(ds.y[1300], 2);
  EXPECT_EQ(ds.y[3500], 3);
  for (Eigen::Index j = 0; j < 4; ++j) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < ds.y.size(); ++i) (ds.y[i] == 1 ? a : b).push_back(ds.X(static_cast<Eigen::Index>(i), j));
    // two-sample KS critical value at the 1% level
    const double crit = 1.628 * std::sqrt((a.size() + b.size()) / static_cast<double>(a.size() * b.size()));
    EXPECT_LT(ks_statistic(a, b), crit);
  }
}

TEST(Csv, RoundTripIsExact) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1e3);
  LabeledDataset ds;
  ds.X.resize(25, 4);
  for (Eigen::Index i = 0; i < ds.X.size(); ++i) ds.X.data()[i] = n(rng) * std::pow(10.0, static_cast<double>(i % 7) - 3);
  for (int i = 0; i < 25; ++i) ds.y.push_back(i % 3 + 1);
  const auto path = (tmpdir() / "rt.csv").string();
  save_csv(ds, path);
  const auto back = load_csv(path);
  EXPECT_EQ(back.X, ds.X);
  EXPECT_EQ(back.y, ds.y);
}

TEST(Csv, UnlabelledNineFeatures) {
  const auto path = (tmpdir() / "gnat.csv").string();
  {
    std::ofstream out(path);
    out << "f1,f2,f3,f4,f5,f6,f7,f8,f9\n";
    for (int i = 0; i < 5; ++i) out << "1,2,3,4,5,6,7,8," << i << "\n";
  }
  const auto ds = load_csv(path);
  EXPECT_EQ(ds.dim(), 9);
  EXPECT_EQ(ds.size(), 5);
  EXPECT_FALSE(ds.labelled());
}

TEST(Csv, ShortRowNamesLine) {
  const auto path = (tmpdir() / "bad.csv").string();
  {
    std::ofstream out(path);
    out << "f1,f2,f3,f4\n1,2,3,4\n1,2,3\n";
  }
  try {
    load_csv(path);
    FAIL() << "expected CsvError";
  } catch (const CsvError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
}
