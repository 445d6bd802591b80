#pragma once

// Supervised Bayesian Gaussian mixture classifier. Each class carries a
// Normal-Inverse-Wishart posterior over its mean and covariance, and the
// mixing proportions carry a Dirichlet posterior; prediction integrates both
// out, giving Student-t class-conditional densities.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shmbayes/core/conjugate.hpp"
#include "shmbayes/core/json_io.hpp"
#include "shmbayes/data/dataset.hpp"

namespace shmbayes::gmm {

struct GmmHyper {
  Vector m0;
  double kappa0 = 1.0;
  double nu0 = 3.0;
  Matrix S0;
  double alpha_per_class = 1.0;

  /// Zero mean, identity scale, kappa0 = 1, nu0 = d + 2, alpha = 1.
  static GmmHyper defaults(Eigen::Index d) {
    GmmHyper h;
    h.m0 = Vector::Zero(d);
    h.S0 = Matrix::Identity(d, d);
    h.kappa0 = 1.0;
    h.nu0 = static_cast<double>(d) + 2.0;
    h.alpha_per_class = 1.0;
    return h;
  }

  Eigen::Index dim() const { return m0.size(); }
  NiwParams niw() const { return {m0, kappa0, nu0, S0}; }

  void validate() const {
    niw().validate();
    if (!(alpha_per_class > 0.0)) throw std::invalid_argument("GmmHyper: alpha_per_class must be > 0");
  }
};

struct ClassPosterior {
  int label = 0;
  NiwParams posterior;
  std::size_t count = 0;
};

struct LabelPosterior {
  Vector probs;
  double log_marginal = 0.0;
};

class GmmModel {
 public:
  GmmModel() = default;

  const std::vector<ClassPosterior>& classes() const { return classes_; }
  const DirichletParams& dirichlet() const { return dirichlet_; }
  const GmmHyper& hyper() const { return hyper_; }
  Eigen::Index dim() const { return hyper_.dim(); }
  std::size_t num_classes() const { return classes_.size(); }

  /// Per-class log p(x | D_k) + log p(y = k | D), the terms whose
  /// normalisation gives the label posterior.
  Vector log_joint(const Vector& x) const {
    require_dim(x.size(), dim(), "GmmModel::predict");
    const Vector log_pi = categorical_predictive(dirichlet_).array().log();
    Vector out(static_cast<Eigen::Index>(classes_.size()));
    for (std::size_t k = 0; k < classes_.size(); ++k) {
      out[static_cast<Eigen::Index>(k)] = predictive_[k].logpdf(x) + log_pi[static_cast<Eigen::Index>(k)];
    }
    return out;
  }

  friend GmmModel fit(const LabeledDataset& data, const GmmHyper& hyper);
  friend GmmModel add_labeled(const GmmModel& model, const Vector& x, int y);
  friend GmmModel gmm_from_json(const nlohmann::json& j);

 private:
  void refresh_predictive() {
    predictive_.clear();
    for (const auto& c : classes_) predictive_.push_back(niw_predictive(c.posterior));
  }

  std::vector<ClassPosterior> classes_;
  std::vector<StudentT> predictive_;
  DirichletParams dirichlet_;
  GmmHyper hyper_;
};

/// Labels must be the dense ids 1..K, each with at least one observation.
inline GmmModel fit(const LabeledDataset& data, const GmmHyper& hyper) {
  if (data.size() == 0) throw std::invalid_argument("bayes_gmm::fit: empty dataset");
  data.validate();
  if (!data.labelled()) throw std::invalid_argument("bayes_gmm::fit: dataset is unlabelled");
  require_dim(data.dim(), hyper.dim(), "bayes_gmm::fit");
  hyper.validate();

  const auto labels = data.classes();
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != static_cast<int>(k) + 1) {
      throw std::invalid_argument("bayes_gmm::fit: labels must be dense 1..K");
    }
  }

  GmmModel model;
  model.hyper_ = hyper;
  const NiwParams prior = hyper.niw();
  Vector counts(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const Matrix rows = data.rows_with_label(labels[k]);
    model.classes_.push_back({labels[k], niw_update(prior, rows), static_cast<std::size_t>(rows.rows())});
    counts[static_cast<Eigen::Index>(k)] = static_cast<double>(rows.rows());
  }
  const DirichletParams dir_prior{Vector::Constant(counts.size(), hyper.alpha_per_class)};
  model.dirichlet_ = dirichlet_update(dir_prior, counts);
  model.refresh_predictive();
  return model;
}

/// Incremental labelled update. `y` must be an existing label or K + 1.
inline GmmModel add_labeled(const GmmModel& model, const Vector& x, int y) {
  require_dim(x.size(), model.dim(), "bayes_gmm::add_labeled");
  const int k_now = static_cast<int>(model.classes_.size());
  if (y < 1 || y > k_now + 1) {
    throw std::invalid_argument("bayes_gmm::add_labeled: label " + std::to_string(y) +
                                " is neither existing nor the next unused id " + std::to_string(k_now + 1));
  }
  GmmModel out = model;
  if (y <= k_now) {
    auto& c = out.classes_[static_cast<std::size_t>(y - 1)];
    c.posterior = niw_update_one(c.posterior, x);
    c.count += 1;
    out.dirichlet_.alpha[y - 1] += 1.0;
    out.predictive_[static_cast<std::size_t>(y - 1)] = niw_predictive(c.posterior);
  } else {
    out.classes_.push_back({y, niw_update_one(model.hyper_.niw(), x), 1});
    out.dirichlet_.alpha.conservativeResize(k_now + 1);
    out.dirichlet_.alpha[k_now] = model.hyper_.alpha_per_class + 1.0;
    out.predictive_.push_back(niw_predictive(out.classes_.back().posterior));
  }
  return out;
}

inline LabelPosterior predict(const GmmModel& model, const Vector& x) {
  if (model.num_classes() == 0) throw std::invalid_argument("bayes_gmm::predict: model has no classes");
  LabelPosterior post;
  post.probs = model.log_joint(x);
  post.log_marginal = normalize_log_probs(std::span<double>(post.probs.data(), static_cast<std::size_t>(post.probs.size())));
  return post;
}

/// Most probable label; ties go to the lower id.
inline int argmax_label(const LabelPosterior& post) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < post.probs.size(); ++k)
    if (post.probs[k] > post.probs[best]) best = k;
  return static_cast<int>(best) + 1;
}

inline std::vector<int> predict_labels(const GmmModel& model, const Matrix& X) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(argmax_label(predict(model, X.row(i).transpose())));
  return out;
}

/// Shannon entropy in nats, with 0 log 0 = 0.
inline double entropy(const LabelPosterior& post) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < post.probs.size(); ++k) {
    const double p = post.probs[k];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// ---------------------------------------------------------------------------
// JSON snapshots

inline nlohmann::json gmm_to_json(const GmmModel& model) {
  const auto& h = model.hyper();
  nlohmann::json j;
  j["d"] = model.dim();
  j["hyper"] = {{"m0", to_json_value(h.m0)},
                {"kappa0", h.kappa0},
                {"nu0", h.nu0},
                {"S0", to_json_value(h.S0)},
                {"alpha_per_class", h.alpha_per_class}};
  j["classes"] = nlohmann::json::array();
  for (const auto& c : model.classes()) {
    j["classes"].push_back({{"label", c.label},
                            {"m", to_json_value(c.posterior.m)},
                            {"kappa", c.posterior.kappa},
                            {"nu", c.posterior.nu},
                            {"S", to_json_value(c.posterior.S)},
                            {"count", c.count}});
  }
  j["dirichlet"] = to_json_value(model.dirichlet().alpha);
  return j;
}

inline GmmModel gmm_from_json(const nlohmann::json& j) {
  const Eigen::Index d = j.at("d").get<Eigen::Index>();
  GmmModel model;
  const auto& h = j.at("hyper");
  model.hyper_.m0 = vector_from_json(h.at("m0"));
  model.hyper_.kappa0 = h.at("kappa0").get<double>();
  model.hyper_.nu0 = h.at("nu0").get<double>();
  model.hyper_.S0 = matrix_from_json(h.at("S0"), d, d);
  model.hyper_.alpha_per_class = h.at("alpha_per_class").get<double>();
  for (const auto& c : j.at("classes")) {
    ClassPosterior cp;
    cp.label = c.at("label").get<int>();
    cp.posterior.m = vector_from_json(c.at("m"));
    cp.posterior.kappa = c.at("kappa").get<double>();
    cp.posterior.nu = c.at("nu").get<double>();
    cp.posterior.S = matrix_from_json(c.at("S"), d, d);
    cp.count = c.at("count").get<std::size_t>();
    model.classes_.push_back(std::move(cp));
  }
  model.dirichlet_.alpha = vector_from_json(j.at("dirichlet"));
  require_dim(model.dirichlet_.alpha.size(), static_cast<Eigen::Index>(model.classes_.size()), "gmm_from_json dirichlet");
  model.refresh_predictive();
  return model;
}

}  // namespace shmbayes::gmm
