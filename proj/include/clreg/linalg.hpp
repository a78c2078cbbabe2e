#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "clreg/error.hpp"

namespace clreg {

/// Row-major dense matrix; one example per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

/// Flat parameter-aligned vector (parameters, gradients, importances).
using FlatVector = std::vector<double>;

inline ConstVectorMap as_eigen(std::span<const double> v) {
  return ConstVectorMap(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline VectorMap as_eigen(std::span<double> v) {
  return VectorMap(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Row>
Eigen::Index argmax_lowest(const Row& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

}  // namespace clreg
