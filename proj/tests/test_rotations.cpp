#include "dfrot/rotations.hpp"

#include "test_helpers.hpp"

#include <Eigen/LU>

#include <cmath>

using namespace dfrot;
using dfrot::testing::error_code_of;
using dfrot::testing::naive_orthogonality_error;
using dfrot::testing::random_matrix;

TEST_CASE("Sylvester base cases") {
  CHECK(sylvester_hadamard(1)(0, 0) == 1.0);

  const RotationMatrix r1 = hadamard_randomized(1, 123);
  CHECK(std::abs(r1.matrix()(0, 0)) == 1.0);

  // With D = diag(+1, +1) the result is H_2 / sqrt(2).
  const Matrix h2 = sylvester_hadamard(2);
  CHECK(h2(0, 0) == 1.0);
  CHECK(h2(0, 1) == 1.0);
  CHECK(h2(1, 0) == 1.0);
  CHECK(h2(1, 1) == -1.0);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto signs = random_signs(2, seed);
    const RotationMatrix r = hadamard_randomized(2, seed);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK(r.matrix()(i, j) == doctest::Approx(h2(i, j) * signs[j] / std::sqrt(2.0)).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("randomized Hadamard dim 8 seed 7") {
  const RotationMatrix r = hadamard_randomized(8, 7);
  CHECK(r.kind() == RotationKind::hadamard_randomized);
  for (Eigen::Index i = 0; i < 8; ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) CHECK(std::abs(r.matrix()(i, j)) == 1.0 / std::sqrt(8.0));
  }
  CHECK(naive_orthogonality_error(r.matrix()) <= 1e-12);
}

TEST_CASE("Hadamard is an involution up to the sign diagonal") {
  for (Eigen::Index dim : {1, 2, 4, 16, 64}) {
    const std::uint64_t seed = 11;
    const auto signs = random_signs(dim, seed);
    Matrix h = std::sqrt(static_cast<double>(dim)) * hadamard_randomized(dim, seed).matrix();
    for (Eigen::Index j = 0; j < dim; ++j) h.col(j) *= signs[static_cast<std::size_t>(j)];
    const Matrix sq = h * h;
    CHECK((sq - static_cast<double>(dim) * Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("Paley and Kronecker Hadamard sizes") {
  for (Eigen::Index n : {12, 20, 24, 40, 48, 80}) {
    const Matrix h = hadamard_matrix(n);
    CHECK(h.cwiseAbs().minCoeff() == 1.0);
    CHECK(h.cwiseAbs().maxCoeff() == 1.0);
    CHECK((h * h.transpose() - static_cast<double>(n) * Matrix::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(naive_orthogonality_error(hadamard_randomized(n, 3).matrix()) <= 1e-12);
  }
}

TEST_CASE("unsupported Hadamard dimensions") {
  for (Eigen::Index n : {0, 3, 6, 36, 28, 100}) {
    CHECK(error_code_of([&] { hadamard_randomized(n, 0); }) == ErrorCode::unsupported_dimension);
  }
}

TEST_CASE("random orthogonal small cases") {
  const RotationMatrix r1 = orthogonal_random(1, 5);
  CHECK(std::abs(r1.matrix()(0, 0)) == 1.0);

  const Matrix r2 = orthogonal_random(2, 0).matrix();
  CHECK(r2.col(0).squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r2.col(1).squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(r2.col(0).dot(r2.col(1))) <= 1e-12);
  // [[c, -s], [s, c]] diag(1, +-1): the diagonal magnitudes agree.
  CHECK(std::abs(std::abs(r2(0, 0)) - std::abs(r2(1, 1))) <= 1e-12);
  CHECK(std::abs(std::abs(r2(0, 1)) - std::abs(r2(1, 0))) <= 1e-12);

  CHECK(naive_orthogonality_error(orthogonal_random(64, 3).matrix()) <= 1e-10);
}

TEST_CASE("random orthogonal is roughly Haar") {
  // For Haar measure on O(4): E[R_00] = 0 and E[R_00^2] = 1/4.
  double sum = 0.0, sum_sq = 0.0;
  const int draws = 2000;
  for (int s = 0; s < draws; ++s) {
    const double v = orthogonal_random(4, static_cast<std::uint64_t>(s)).matrix()(0, 0);
    sum += v;
    sum_sq += v * v;
  }
  CHECK(std::abs(sum / draws) < 0.05);
  CHECK(sum_sq / draws == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("generation is deterministic") {
  CHECK(hadamard_randomized(64, 9).matrix() == hadamard_randomized(64, 9).matrix());
  CHECK(orthogonal_random(32, 9).matrix() == orthogonal_random(32, 9).matrix());
  CHECK(orthogonal_random(32, 9).matrix() != orthogonal_random(32, 10).matrix());
}

TEST_CASE("enforce_rotation") {
  const RotationMatrix id = RotationMatrix::identity(4);
  CHECK(enforce_rotation(id).matrix() == id.matrix());

  Matrix d = Matrix::Identity(4, 4);
  d(3, 3) = -1.0;
  const RotationMatrix reflection(d, RotationKind::loaded);
  CHECK(reflection.det_sign() == -1);
  const RotationMatrix fixed = enforce_rotation(reflection);
  CHECK(fixed.matrix() == Matrix::Identity(4, 4));
  CHECK(fixed.det_sign() == 1);
  CHECK(fixed.kind() == RotationKind::loaded);

  bool saw_reflection = false;
  for (std::uint64_t seed = 0; seed < 20 && !saw_reflection; ++seed) {
    const RotationMatrix r = orthogonal_random(16, seed);
    if (r.det_sign() > 0) continue;
    saw_reflection = true;
    const RotationMatrix e = enforce_rotation(r);
    CHECK(e.det_sign() == 1);
    CHECK(naive_orthogonality_error(e.matrix()) <= 1e-12);
    CHECK(e.matrix().leftCols(15) == r.matrix().leftCols(15));
    CHECK(e.matrix().col(15) == -r.matrix().col(15));
  }
  CHECK(saw_reflection);
}

TEST_CASE("non-orthogonal input is rejected") {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 1) = 0.1;
  CHECK(error_code_of([&] { RotationMatrix(m, RotationKind::loaded); }) == ErrorCode::not_orthogonal);
  CHECK(error_code_of([&] { RotationMatrix(Matrix(2, 3), RotationKind::loaded); }) ==
        ErrorCode::dimension_mismatch);
}

TEST_CASE("det_sign matches the determinant") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RotationMatrix r = orthogonal_random(8, seed);
    const double det = Eigen::MatrixXd(r.matrix()).determinant();
    CHECK(r.det_sign() == (det > 0 ? 1 : -1));
    CHECK(std::abs(std::abs(det) - 1.0) < 1e-12);
  }
}

TEST_CASE("rotation preserves token norms") {
  const Matrix x = random_matrix(50, 64, 42, 3.0);
  for (const RotationMatrix& r : {hadamard_randomized(64, 1), orthogonal_random(64, 1)}) {
    const Matrix y = x * r.matrix();
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      CHECK(std::abs(y.row(t).norm() - x.row(t).norm()) <= 1e-9 * x.row(t).norm());
    }
  }
}
