#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "shmbayes/data/generators.hpp"
#include "shmbayes/kbtl/kbtl.hpp"

using namespace shmbayes;

namespace {

Matrix random_matrix(std::uint64_t seed, int n, int d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = n01(rng);
  return X;
}

kbtl::DomainData blobs(std::uint64_t seed, int per_class, double sep, int d = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 0.5);
  kbtl::DomainData dd;
  dd.X.resize(2 * per_class, d);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int y = i < per_class ? -1 : 1;
    for (int j = 0; j < d; ++j) dd.X(i, j) = n01(rng);
    dd.X(i, 0) += y * sep;
    dd.y.push_back(y);
  }
  return dd;
}

double std_norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Per-domain standardisation with training statistics.
void standardise(Matrix& train, Matrix& test) {
  const Vector mu = train.colwise().mean();
  const Vector sd =
      ((train.rowwise() - mu.transpose()).array().square().colwise().sum() / (train.rows() - 1)).sqrt();
  train = (train.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
  test = (test.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
}

struct PopulationFit {
  std::vector<kbtl::DomainData> train;
  std::vector<Matrix> test_X;
  std::vector<std::vector<int>> test_y;
  kbtl::KbtlModel model;
};

PopulationFit fit_population(std::uint64_t seed) {
  PopulationFit p;
  const auto pop = datagen::gen_population(datagen::population_specs(), datagen::reference_counts(), seed);
  for (std::size_t t = 0; t < pop.train.size(); ++t) {
    Matrix X = pop.train[t].X, Xt = pop.test[t].X;
    standardise(X, Xt);
    p.train.push_back({X, pop.train[t].y});
    p.test_X.push_back(Xt);
    p.test_y.push_back(pop.test[t].y);
  }
  p.model = kbtl::fit(p.train, kbtl::KbtlConfig{}, seed);
  return p;
}

}  // namespace

TEST(Kernel, DiagonalIsOne) {
  const Matrix X = random_matrix(1, 12, 3);
  const Matrix K = kbtl::kernel_matrix(X, X, 0.7);
  for (Eigen::Index i = 0; i < K.rows(); ++i) EXPECT_NEAR(K(i, i), 1.0, 1e-15);
}

TEST(Kernel, IdenticalRowsGiveIdenticalKernelRows) {
  Matrix X = random_matrix(2, 6, 2);
  X.row(4) = X.row(1);
  const Matrix K = kbtl::kernel_matrix(X, X, 1.3);
  EXPECT_LT((K.row(4) - K.row(1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Kernel, MatchesPairwiseDistanceLoop) {
  const Matrix X = random_matrix(3, 3, 2);
  const Matrix X2 = random_matrix(4, 5, 2);
  const double l = 0.9;
  const Matrix K = kbtl::kernel_matrix(X, X2, l);
  ASSERT_EQ(K.rows(), 3);
  ASSERT_EQ(K.cols(), 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 2; ++c) d2 += (X(i, c) - X2(j, c)) * (X(i, c) - X2(j, c));
      EXPECT_NEAR(K(i, j), std::exp(-d2 / (2 * l * l)), 1e-12);
    }
}

TEST(Kernel, SymmetricPsd) {
  const Matrix X = random_matrix(5, 40, 3);
  const Matrix K = kbtl::kernel_matrix(X, X, kbtl::median_lengthscale(X));
  EXPECT_LT((K - K.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es(K);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(Kernel, Errors) {
  EXPECT_THROW(kbtl::kernel_matrix(Matrix::Zero(2, 2), Matrix::Zero(2, 3), 1.0), DimensionError);
  EXPECT_THROW(kbtl::kernel_matrix(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 0.0), std::invalid_argument);
}

TEST(Kernel, MedianLengthscale) {
  Matrix X(4, 1);
  X << 0.0, 1.0, 3.0, 7.0;
  // distances 1, 3, 7, 2, 6, 4 -> sorted 1 2 3 4 6 7, median 3.5
  EXPECT_DOUBLE_EQ(kbtl::median_lengthscale(X), 3.5);
  Matrix Y(3, 1);
  Y << 0.0, 1.0, 5.0;
  EXPECT_DOUBLE_EQ(kbtl::median_lengthscale(Y), 4.0);
  EXPECT_DOUBLE_EQ(kbtl::median_lengthscale(Matrix::Constant(5, 2, 3.0)), 1.0);
}

TEST(KbtlConfig, Validation) {
  kbtl::KbtlConfig c;
  EXPECT_NO_THROW(c.validate());
  c.R = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.eta.rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.nu_margin = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Fit, RejectsBadDomains) {
  EXPECT_THROW(kbtl::fit({}, {}, 1), std::invalid_argument);
  auto d = blobs(1, 5, 2.0);
  auto bad = d;
  bad.y[0] = 0;
  EXPECT_THROW(kbtl::fit({bad}, {}, 1), std::invalid_argument);
  bad = d;
  std::fill(bad.y.begin(), bad.y.end(), 1);
  EXPECT_THROW(kbtl::fit({bad}, {}, 1), std::invalid_argument);
  bad = d;
  bad.y.pop_back();
  EXPECT_THROW(kbtl::fit({bad}, {}, 1), std::invalid_argument);
}

TEST(Fit, SeparableToyReachesFullTrainingAccuracy) {
  const auto d = blobs(7, 40, 2.0);
  const auto m = kbtl::fit({d}, {}, 7);
  const auto pred = kbtl::classify(kbtl::predict(m, 0, d.X));
  EXPECT_EQ(pred, d.y);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double s = d.y[static_cast<std::size_t>(i)];
    EXPECT_GE(s * m.domains[0].f_mean[i], m.cfg.nu_margin);  // truncation side
  }
}

TEST(Fit, DuplicatedDomainGivesMatchingFactors) {
  const auto d = blobs(8, 25, 1.5);
  const auto m = kbtl::fit({d, d}, {}, 8);
  const auto& a = m.domains[0];
  const auto& b = m.domains[1];
  EXPECT_LT((a.A_mean - b.A_mean).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.H_mean - b.H_mean).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.f_mean - b.f_mean).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Fit, DomainOrderDoesNotMatter) {
  const auto d1 = blobs(9, 20, 1.5, 2);
  const auto d2 = blobs(10, 15, 1.2, 3);
  const auto d3 = blobs(11, 10, 1.8, 4);
  const auto m = kbtl::fit({d1, d2, d3}, {}, 4);
  const auto p = kbtl::fit({d3, d1, d2}, {}, 4);
  const std::size_t map[3] = {1, 2, 0};
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_LT((m.domains[t].A_mean - p.domains[map[t]].A_mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((m.domains[t].f_mean - p.domains[map[t]].f_mean).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_LT((m.bw_mean - p.bw_mean).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Fit, BitReproducible) {
  const auto d1 = blobs(12, 20, 1.0);
  const auto d2 = blobs(13, 20, 1.0, 3);
  const auto a = kbtl::fit({d1, d2}, {}, 5);
  const auto b = kbtl::fit({d1, d2}, {}, 5);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_TRUE((a.bw_mean.array() == b.bw_mean.array()).all());
  EXPECT_TRUE((a.domains[1].A_mean.array() == b.domains[1].A_mean.array()).all());
}

TEST(Fit, ParameterChangeSettlesInFinalIterations) {
  const auto m = kbtl::fit({blobs(14, 30, 1.5)}, {}, 14);
  ASSERT_GE(m.changes.size(), 10u);
  for (std::size_t i = m.changes.size() - 9; i < m.changes.size(); ++i)
    EXPECT_LE(m.changes[i], m.changes[i - 1] * (1.0 + 1e-9)) << "iteration " << i + 1;
}

TEST(Fit, FactorsArePositive) {
  const auto m = kbtl::fit({blobs(15, 20, 1.5), blobs(16, 12, 1.0, 3)}, {}, 15);
  for (const auto& d : m.domains) {
    EXPECT_GT(d.A_var.minCoeff(), 0.0);
    EXPECT_GT(d.f_var.minCoeff(), 0.0);
    EXPECT_GT(d.lambda_shape.minCoeff(), 0.0);
    EXPECT_GT(d.lambda_rate.minCoeff(), 0.0);
    EXPECT_GT(d.H_cov.diagonal().minCoeff(), 0.0);
    EXPECT_LT((kbtl::a_covariance(d, 0).diagonal() - d.A_var.col(0)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_GT(m.eta_rate.minCoeff(), 0.0);
  EXPECT_GT(m.gamma_rate, 0.0);
  EXPECT_GT(m.bw_cov.diagonal().minCoeff(), 0.0);
  EXPECT_EQ(m.w_mean().size(), m.cfg.R);
}

TEST(Project, TrainingSetSelfConsistent) {
  const auto d = blobs(17, 15, 1.5);
  const auto m = kbtl::fit({d}, {}, 17);
  const Matrix H = kbtl::project(m, 0, d.X);
  const Matrix direct = m.domains[0].A_mean.transpose() * m.domains[0].K;
  EXPECT_LT((H - direct).cwiseAbs().maxCoeff(), 1e-9);
  const Matrix one = kbtl::project(m, 0, d.X.row(3));
  EXPECT_LT((one.col(0) - H.col(3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Project, ShapeAndErrors) {
  const auto m = kbtl::fit({blobs(18, 10, 1.5)}, {}, 18);
  const Matrix H = kbtl::project(m, 0, random_matrix(19, 7, 2));
  EXPECT_EQ(H.rows(), 2);
  EXPECT_EQ(H.cols(), 7);
  EXPECT_TRUE(H.allFinite());
  EXPECT_THROW(kbtl::project(m, 1, random_matrix(19, 7, 2)), std::out_of_range);
  EXPECT_THROW(kbtl::project(m, 0, random_matrix(19, 7, 3)), DimensionError);
}

TEST(Predict, ProbabilitiesMatchMirroredCdfs) {
  const auto m = kbtl::fit({blobs(20, 15, 1.0)}, {}, 20);
  const Matrix Xn = random_matrix(21, 30, 2) * 2.0;
  const auto p = kbtl::predict(m, 0, Xn);
  for (Eigen::Index i = 0; i < Xn.rows(); ++i) {
    const double sd = std::sqrt(1.0 + p.f_var[i]);
    const double pos = std_norm_cdf((p.f_mean[i] - m.cfg.nu_margin) / sd);
    const double neg = std_norm_cdf((-p.f_mean[i] - m.cfg.nu_margin) / sd);
    EXPECT_NEAR(p.p_pos[i], pos / (pos + neg), 1e-12);
    EXPECT_NEAR(p.p_pos[i] + neg / (pos + neg), 1.0, 1e-12);
    EXPECT_GT(p.f_var[i], 0.0);
  }
}

TEST(Predict, MonotoneInLatentMean) {
  const auto m = kbtl::fit({blobs(22, 15, 1.0)}, {}, 22);
  const Vector w = m.w_mean();
  // Moving along w raises the mean of f; moving the same distance along -w
  // mirrors the variance, so compare points at equal |H|.
  Matrix H(2, 9);
  for (int i = 0; i < 9; ++i) H.col(i) = (i - 4) * 0.5 * w / w.norm();
  auto p = kbtl::predict_from_latent(m, H);
  for (int i = 1; i < 9; ++i) EXPECT_GT(p.f_mean[i], p.f_mean[i - 1]);

  // With the variance held fixed the probability is strictly increasing.
  kbtl::KbtlModel fixed = m;
  fixed.bw_cov.setZero();
  fixed.bw_cov(0, 0) = 0.3;
  p = kbtl::predict_from_latent(fixed, H);
  for (int i = 1; i < 9; ++i) EXPECT_GT(p.p_pos[i], p.p_pos[i - 1]);
  EXPECT_EQ(kbtl::classify(p).front(), -1);
  EXPECT_EQ(kbtl::classify(p).back(), 1);
}

TEST(Predict, ExtremeLatentValuesStayFinite) {
  const auto m = kbtl::fit({blobs(23, 15, 1.0)}, {}, 23);
  Matrix H(2, 2);
  H.col(0) = 1e4 * m.w_mean();
  H.col(1) = -1e4 * m.w_mean();
  const auto p = kbtl::predict_from_latent(m, H);
  EXPECT_TRUE(p.p_pos.allFinite());
  EXPECT_NEAR(p.p_pos[0], 1.0, 1e-12);
  EXPECT_NEAR(p.p_pos[1], 0.0, 1e-12);
}

TEST(Export, JsonHasDomainsAndClassifier) {
  const auto m = kbtl::fit({blobs(24, 10, 1.5), blobs(25, 10, 1.5, 3)}, {}, 24);
  const auto j = kbtl::to_json(m);
  ASSERT_EQ(j.at("domains").size(), 2u);
  EXPECT_EQ(j.at("w_mean").size(), 2u);
  EXPECT_EQ(j.at("bw_cov").size(), 9u);
  EXPECT_EQ(j.at("domains")[1].at("dim").get<int>(), 3);
  EXPECT_EQ(j.at("domains")[0].at("f_mean").size(), 20u);
  EXPECT_DOUBLE_EQ(j.at("b_mean").get<double>(), m.b_mean());
}

TEST(Population, LatentClassesSeparateAndMinorityIsMoreUncertain) {
  double minority_var = 0.0, majority_var = 0.0;
  const int seeds = 3;
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto p = fit_population(static_cast<std::uint64_t>(seed));
    ASSERT_EQ(p.model.num_domains(), 6u);

    // Separation of the class means of the training embedding, all domains pooled.
    Vector mu[2] = {Vector::Zero(2), Vector::Zero(2)};
    double cnt[2] = {0, 0};
    for (const auto& d : p.model.domains)
      for (Eigen::Index i = 0; i < d.H_mean.cols(); ++i) {
        const int c = d.y[static_cast<std::size_t>(i)] > 0;
        mu[c] += d.H_mean.col(i);
        cnt[c] += 1;
      }
    mu[0] /= cnt[0];
    mu[1] /= cnt[1];
    double spread = 0.0;
    for (const auto& d : p.model.domains)
      for (Eigen::Index i = 0; i < d.H_mean.cols(); ++i)
        spread += (d.H_mean.col(i) - mu[d.y[static_cast<std::size_t>(i)] > 0]).norm();
    spread /= cnt[0] + cnt[1];
    EXPECT_GT((mu[1] - mu[0]).norm(), spread) << "seed " << seed;

    // Latent variance of test points by class, over the imbalanced domains.
    double s[2] = {0, 0}, n[2] = {0, 0};
    for (std::size_t t = 0; t < 5; ++t) {
      const Matrix v = kbtl::latent_variance(p.model, t, p.test_X[t]);
      for (Eigen::Index i = 0; i < v.cols(); ++i) {
        const int c = p.test_y[t][static_cast<std::size_t>(i)] > 0;
        s[c] += v.col(i).mean();
        n[c] += 1;
      }
    }
    minority_var += s[1] / n[1] / seeds;
    majority_var += s[0] / n[0] / seeds;
  }
  EXPECT_GT(minority_var, majority_var);
}
