#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

#include "shmbayes/core/linalg.hpp"

namespace shmbayes {

/// Observations (one row per observation) with optional integer labels.
/// An unlabelled set carries an empty label vector.
struct LabeledDataset {
  Matrix X;
  std::vector<int> y;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  bool labelled() const { return !y.empty(); }

  void validate() const {
    if (labelled() && static_cast<Eigen::Index>(y.size()) != X.rows()) {
      throw DimensionError("LabeledDataset: label count does not match row count");
    }
  }

  /// Sorted distinct labels.
  std::vector<int> classes() const {
    std::vector<int> c(y.begin(), y.end());
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
  }

  LabeledDataset subset(const std::vector<std::size_t>& rows) const {
    LabeledDataset out;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
      if (labelled()) out.y.push_back(y[rows[i]]);
    }
    return out;
  }

  /// Rows carrying `label`, in order.
  Matrix rows_with_label(int label) const {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == label) idx.push_back(static_cast<Eigen::Index>(i));
    Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
  }
};

inline LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  require_dim(b.dim(), a.dim(), "concat");
  LabeledDataset out;
  out.X.resize(a.size() + b.size(), a.dim());
  out.X << a.X, b.X;
  out.y = a.y;
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

}  // namespace shmbayes
