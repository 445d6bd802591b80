#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "shmbayes/core/linalg.hpp"

namespace shmbayes {

inline nlohmann::json to_json_value(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Row-major flattening.
inline nlohmann::json to_json_value(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  return flat;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw DimensionError("matrix_from_json: wrong element count");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = v[static_cast<std::size_t>(i * cols + j2)];
  return m;
}

}  // namespace shmbayes
