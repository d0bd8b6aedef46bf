#include "dfrot/rotations.hpp"

#include "dfrot/error.hpp"
#include "dfrot/rng.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <array>
#include <sstream>
#include <cmath>
#include <string>

namespace dfrot {

const char* to_string(RotationKind kind) {
  switch (kind) {
    case RotationKind::hadamard_randomized: return "hadamard_randomized";
    case RotationKind::orthogonal_random: return "orthogonal_random";
    case RotationKind::optimized: return "optimized";
    case RotationKind::identity: return "identity";
    case RotationKind::loaded: return "loaded";
  }
  return "unknown";
}

double orthogonality_error(const Matrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  Matrix gram = m * m.transpose();
  gram.diagonal().array() -= 1.0;
  return gram.cwiseAbs().maxCoeff();
}

int determinant_sign(const Matrix& m) {
  const double det = Eigen::PartialPivLU<Matrix>(m).determinant();
  if (!std::isfinite(det) || det == 0.0) {
    throw Error(ErrorCode::numerical, "determinant is zero or non-finite");
  }
  return det > 0.0 ? 1 : -1;
}

RotationMatrix::RotationMatrix(Matrix entries, RotationKind kind, double tolerance)
    : entries_(std::move(entries)), kind_(kind), det_sign_(1) {
  if (entries_.rows() < 1 || entries_.rows() != entries_.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "rotation must be a non-empty square matrix");
  }
  if (!entries_.allFinite()) {
    throw Error(ErrorCode::invalid_data, "rotation has non-finite entries");
  }
  const double err = orthogonality_error(entries_);
  if (!(err <= tolerance)) {
    std::ostringstream msg;
    msg << "matrix is not orthogonal: max|RR^T - I| = " << err << " > " << tolerance;
    throw Error(ErrorCode::not_orthogonal, msg.str());
  }
  det_sign_ = determinant_sign(entries_);
}

RotationMatrix RotationMatrix::identity(Eigen::Index dim) {
  return RotationMatrix(Matrix::Identity(dim, dim), RotationKind::identity);
}

RotationMatrix RotationMatrix::transposed() const {
  RotationMatrix out = *this;
  out.entries_.transposeInPlace();
  return out;
}

bool is_power_of_two(std::uint64_t n) { return n != 0 && (n & (n - 1)) == 0; }

Matrix sylvester_hadamard(Eigen::Index dim) {
  if (dim < 1 || !is_power_of_two(static_cast<std::uint64_t>(dim))) {
    throw Error(ErrorCode::unsupported_dimension,
                "Sylvester Hadamard needs a power-of-two size, got " + std::to_string(dim));
  }
  Matrix h(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      // H_ij = (-1)^{popcount(i & j)}
      h(i, j) = (__builtin_popcountll(static_cast<unsigned long long>(i & j)) & 1) ? -1.0 : 1.0;
    }
  }
  return h;
}

Matrix paley_hadamard(Eigen::Index order) {
  const Eigen::Index q = order - 1;
  auto is_prime = [](Eigen::Index n) {
    if (n < 2) return false;
    for (Eigen::Index d = 2; d * d <= n; ++d) {
      if (n % d == 0) return false;
    }
    return true;
  };
  if (!is_prime(q) || q % 4 != 3) {
    throw Error(ErrorCode::unsupported_dimension,
                "Paley construction needs order = q + 1 with prime q = 3 mod 4, got " +
                    std::to_string(order));
  }
  std::vector<int> chi(static_cast<std::size_t>(q), -1);
  chi[0] = 0;
  for (Eigen::Index x = 1; x < q; ++x) chi[static_cast<std::size_t>((x * x) % q)] = 1;

  // H = I + S, S = [[0, 1^T], [-1, Q]] with Q the (skew) Jacobsthal matrix.
  Matrix h = Matrix::Identity(order, order);
  for (Eigen::Index j = 1; j < order; ++j) {
    h(0, j) += 1.0;
    h(j, 0) -= 1.0;
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      h(i + 1, j + 1) += chi[static_cast<std::size_t>(((j - i) % q + q) % q)];
    }
  }
  return h;
}

Matrix hadamard_matrix(Eigen::Index dim) {
  if (dim >= 1 && is_power_of_two(static_cast<std::uint64_t>(dim))) {
    return sylvester_hadamard(dim);
  }
  for (Eigen::Index m : std::array<Eigen::Index, 2>{12, 20}) {
    if (dim > 0 && dim % m == 0 && is_power_of_two(static_cast<std::uint64_t>(dim / m))) {
      const Matrix outer = sylvester_hadamard(dim / m);
      const Matrix inner = paley_hadamard(m);
      Matrix h(dim, dim);
      for (Eigen::Index i = 0; i < outer.rows(); ++i) {
        for (Eigen::Index j = 0; j < outer.cols(); ++j) {
          h.block(i * m, j * m, m, m) = outer(i, j) * inner;
        }
      }
      return h;
    }
  }
  throw Error(ErrorCode::unsupported_dimension,
              "no Hadamard construction for dimension " + std::to_string(dim) +
                  " (supported: 2^k, 12*2^k, 20*2^k)");
}

std::vector<int> random_signs(Eigen::Index dim, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x4861646d61726431ULL));
  std::vector<int> signs(static_cast<std::size_t>(dim));
  for (auto& s : signs) s = rng.sign();
  return signs;
}

RotationMatrix hadamard_randomized(Eigen::Index dim, std::uint64_t seed) {
  Matrix h = hadamard_matrix(dim);
  const std::vector<int> signs = random_signs(dim, seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) {
    h.col(j) *= scale * signs[static_cast<std::size_t>(j)];
  }
  return RotationMatrix(std::move(h), RotationKind::hadamard_randomized);
}

RotationMatrix orthogonal_random(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 1) {
    throw Error(ErrorCode::unsupported_dimension, "dimension must be positive");
  }
  Rng rng(splitmix64(seed ^ 0x4f7274686f526e64ULL));
  Eigen::MatrixXd gaussian(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) gaussian(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return RotationMatrix(Matrix(q), RotationKind::orthogonal_random);
}

RotationMatrix enforce_rotation(const RotationMatrix& r) {
  if (r.det_sign() > 0) return r;
  Matrix m = r.matrix();
  m.col(m.cols() - 1) = -m.col(m.cols() - 1);
  return RotationMatrix(std::move(m), r.kind(), std::numeric_limits<double>::infinity());
}

}  // namespace dfrot
