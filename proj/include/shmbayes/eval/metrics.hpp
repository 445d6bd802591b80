#pragma once

#include <cstddef>
#include <cstdio>
#include <string>
#include <map>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace shmbayes::eval {

/// K x K counts indexed (true, predicted), labels 1..K.
class ConfusionMatrix {
 public:
  ConfusionMatrix(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k)
      : k_(k), counts_(static_cast<std::size_t>(k * k), 0) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("ConfusionMatrix: length mismatch");
    if (k < 1) throw std::invalid_argument("ConfusionMatrix: K must be >= 1");
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_true[i] < 1 || y_true[i] > k || y_pred[i] < 1 || y_pred[i] > k) {
        throw std::invalid_argument("ConfusionMatrix: label outside 1..K at position " + std::to_string(i));
      }
      ++counts_[index(y_true[i], y_pred[i])];
    }
    total_ = y_true.size();
  }

  int k() const { return k_; }
  std::size_t total() const { return total_; }
  std::size_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }

  std::size_t true_positives(int c) const { return at(c, c); }
  std::size_t false_positives(int c) const {
    std::size_t s = 0;
    for (int t = 1; t <= k_; ++t)
      if (t != c) s += at(t, c);
    return s;
  }
  std::size_t false_negatives(int c) const {
    std::size_t s = 0;
    for (int p = 1; p <= k_; ++p)
      if (p != c) s += at(c, p);
    return s;
  }

  // Zero denominators give 0.
  double precision(int c) const {
    const auto tp = true_positives(c), fp = false_positives(c);
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  double recall(int c) const {
    const auto tp = true_positives(c), fn = false_negatives(c);
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  double f1(int c) const {
    const double p = precision(c), r = recall(c);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  double macro_f1() const {
    double s = 0.0;
    for (int c = 1; c <= k_; ++c) s += f1(c);
    return s / static_cast<double>(k_);
  }

  bool diagonal() const {
    for (int t = 1; t <= k_; ++t)
      for (int p = 1; p <= k_; ++p)
        if (t != p && at(t, p) != 0) return false;
    return true;
  }

 private:
  std::size_t index(int t, int p) const { return static_cast<std::size_t>((t - 1) * k_ + (p - 1)); }

  int k_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Fixed textual form for metric values in CSV output.
inline std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Unweighted mean over classes 1..K of the per-class F1.
inline double macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
  return ConfusionMatrix(y_true, y_pred, k).macro_f1();
}

/// Maps {-1, +1} labels onto {1, 2}.
inline std::vector<int> binary_to_index(const std::vector<int>& y) {
  std::vector<int> out;
  out.reserve(y.size());
  for (int v : y) {
    if (v != -1 && v != 1) throw std::invalid_argument("binary_to_index: labels must be -1 or +1");
    out.push_back(v == 1 ? 2 : 1);
  }
  return out;
}

struct ClusterMapping {
  std::map<int, int> cluster_to_class;
  double purity = 0.0;
};

/// Each cluster maps to its majority class (ties to the lower class id);
/// purity is the fraction of points whose cluster's class equals their own.
inline ClusterMapping map_clusters(const std::vector<int>& assignments, const std::vector<int>& labels) {
  if (assignments.size() != labels.size()) throw std::invalid_argument("map_clusters: length mismatch");
  std::map<int, std::map<int, std::size_t>> tally;
  for (std::size_t i = 0; i < labels.size(); ++i) ++tally[assignments[i]][labels[i]];
  ClusterMapping out;
  std::size_t hits = 0;
  for (const auto& [cluster, by_class] : tally) {
    int best = 0;
    std::size_t best_n = 0;
    for (const auto& [cls, n] : by_class) {
      if (n > best_n) {  // std::map iterates ascending, so ties keep the lower id
        best = cls;
        best_n = n;
      }
    }
    out.cluster_to_class[cluster] = best;
    hits += best_n;
  }
  out.purity = labels.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
  return out;
}

inline nlohmann::json metrics_report(const ConfusionMatrix& cm, const ClusterMapping* mapping = nullptr) {
  nlohmann::json j;
  j["K"] = cm.k();
  j["total"] = cm.total();
  j["per_class"] = nlohmann::json::array();
  for (int c = 1; c <= cm.k(); ++c) {
    j["per_class"].push_back({{"class", c}, {"precision", cm.precision(c)}, {"recall", cm.recall(c)}, {"f1", cm.f1(c)}});
  }
  j["macro_f1"] = cm.macro_f1();
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 1; t <= cm.k(); ++t) {
    std::vector<std::size_t> row;
    for (int p = 1; p <= cm.k(); ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  if (mapping != nullptr) {
    j["purity"] = mapping->purity;
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [cl, cls] : mapping->cluster_to_class) m[std::to_string(cl)] = cls;
    j["cluster_to_class"] = m;
  }
  return j;
}

}  // namespace shmbayes::eval
