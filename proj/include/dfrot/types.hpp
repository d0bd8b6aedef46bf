#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>

namespace dfrot {

// Row-major so that a token (one row) is contiguous, matching the file layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Dtype : unsigned { f32 = 0, f64 = 1 };

// T x C activations, one token per row.
struct TokenMatrix {
  Matrix values;
  Dtype dtype = Dtype::f64;
  std::string provenance = "imported";

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

}  // namespace dfrot
