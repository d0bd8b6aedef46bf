#pragma once

#include "dfrot/types.hpp"

#include <cstdint>
#include <vector>

namespace dfrot {

enum class RotationKind { hadamard_randomized, orthogonal_random, optimized, identity, loaded };

const char* to_string(RotationKind kind);

// C x C orthogonal matrix. Construction checks orthogonality and records the
// sign of the determinant; instances are immutable afterwards.
class RotationMatrix {
 public:
  static constexpr double kTolerance64 = 1e-10;
  static constexpr double kTolerance32 = 1e-5;

  // Throws ErrorCode::not_orthogonal if max|R R^T - I| exceeds `tolerance`.
  RotationMatrix(Matrix entries, RotationKind kind, double tolerance = kTolerance64);

  static RotationMatrix identity(Eigen::Index dim);

  Eigen::Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  RotationKind kind() const { return kind_; }
  int det_sign() const { return det_sign_; }

  RotationMatrix transposed() const;

 private:
  Matrix entries_;
  RotationKind kind_;
  int det_sign_;
};

// max_ij |(M M^T - I)_ij|
double orthogonality_error(const Matrix& m);

// Sign of det(m) computed by partial-pivot LU; m must be square and nonsingular.
int determinant_sign(const Matrix& m);

bool is_power_of_two(std::uint64_t n);

// Unnormalized Sylvester Hadamard matrix with +/-1 entries. `dim` must be a power of two.
Matrix sylvester_hadamard(Eigen::Index dim);

// Unnormalized Paley-I Hadamard matrix of order q + 1 for a prime q = 3 (mod 4).
Matrix paley_hadamard(Eigen::Index order);

// Unnormalized Hadamard matrix: Sylvester for powers of two, otherwise
// H_{2^k} (x) H_m with a Paley factor m in {12, 20}. Any other size throws
// ErrorCode::unsupported_dimension.
Matrix hadamard_matrix(Eigen::Index dim);

// The +/-1 diagonal used by hadamard_randomized for (dim, seed).
std::vector<int> random_signs(Eigen::Index dim, std::uint64_t seed);

// (1/sqrt(dim)) H diag(signs). Deterministic in (dim, seed).
RotationMatrix hadamard_randomized(Eigen::Index dim, std::uint64_t seed);

// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian
// matrix, with Q's columns sign-corrected by diag(R). det may be +1 or -1.
RotationMatrix orthogonal_random(Eigen::Index dim, std::uint64_t seed);

// Returns R unchanged if det(R) = +1, otherwise R with its last column negated.
RotationMatrix enforce_rotation(const RotationMatrix& r);

}  // namespace dfrot
