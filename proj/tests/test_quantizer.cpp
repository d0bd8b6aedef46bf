#include "dfrot/massive.hpp"
#include "dfrot/quantizer.hpp"
#include "dfrot/rotations.hpp"

#include "test_helpers.hpp"

#include <cmath>
#include <limits>

using namespace dfrot;
using dfrot::testing::error_code_of;
using dfrot::testing::random_matrix;

namespace {

// Formula-by-formula evaluation of one token, written without the library.
struct OracleToken {
  std::vector<long long> codes;
  std::vector<double> recon;
  double scale = 0.0;
  long long zero = 0;
};

double round_away(double v) { return v < 0.0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

OracleToken oracle(const std::vector<double>& x, int bits, double alpha, double beta) {
  double mx = x[0], mn = x[0];
  for (double v : x) {
    mx = v > mx ? v : mx;
    mn = v < mn ? v : mn;
  }
  const long long top = (1LL << bits) - 1;
  OracleToken o;
  o.codes.assign(x.size(), 0);
  const double width = alpha * mx - beta * mn;
  if (width <= 0.0) {
    o.recon.assign(x.size(), width == 0.0 ? alpha * mx : 0.5 * (alpha * mx + beta * mn));
    return o;
  }
  o.scale = width / static_cast<double>(top);
  o.zero = -static_cast<long long>(round_away(beta * mn / o.scale));
  for (std::size_t i = 0; i < x.size(); ++i) {
    long long q = static_cast<long long>(round_away(x[i] / o.scale)) + o.zero;
    q = q < 0 ? 0 : (q > top ? top : q);
    o.codes[i] = q;
    o.recon.push_back(static_cast<double>(q - o.zero) * o.scale);
  }
  return o;
}

Matrix row_of(const std::vector<double>& v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

}  // namespace

TEST_CASE("rounding is half away from zero") {
  CHECK(round_half_away(2.5) == 3.0);
  CHECK(round_half_away(-2.5) == -3.0);
  CHECK(round_half_away(0.49999999999999994) == 0.0);
  CHECK(round_half_away(-7.5) == -8.0);
}

TEST_CASE("grid-aligned token quantizes exactly") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[static_cast<std::size_t>(i)] = i;
  const QuantizedTokens q = quantize_per_token(row_of(v), QuantConfig{});
  CHECK(q.scales[0] == 1.0);
  CHECK(q.zero_points[0] == 0);
  for (int i = 0; i < 16; ++i) CHECK(q.codes(0, i) == i);
  CHECK(dequantize(q) == row_of(v));
  CHECK(per_token_sq_error(row_of(v), QuantConfig{})[0] == 0.0);
}

TEST_CASE("constant token takes the sentinel path") {
  const Matrix x = Matrix::Constant(2, 7, 3.5);
  const QuantizedTokens q = quantize_per_token(x, QuantConfig{});
  CHECK(q.is_sentinel(0));
  CHECK(q.scales[1] == 0.0);
  CHECK(q.codes.cast<int>().sum() == 0);
  CHECK(dequantize(q) == x);
  CHECK(per_token_sq_error(x, QuantConfig{})[0] == 0.0);
}

TEST_CASE("two-value token matches the formula oracle") {
  const std::vector<double> v = {-1.0, 1.0};
  const QuantizedTokens q = quantize_per_token(row_of(v), QuantConfig{});
  const OracleToken o = oracle(v, 4, 1.0, 1.0);
  CHECK(q.scales[0] == o.scale);
  CHECK(q.scales[0] == doctest::Approx(2.0 / 15.0));
  CHECK(q.zero_points[0] == 8);
  CHECK(o.zero == 8);
  CHECK(q.codes(0, 0) == o.codes[0]);
  CHECK(q.codes(0, 1) == o.codes[1]);
  const Matrix recon = dequantize(q);
  CHECK(recon(0, 0) == o.recon[0]);
  CHECK(recon(0, 1) == o.recon[1]);
}

TEST_CASE("dequantize examples") {
  QuantizedTokens q;
  q.config = QuantConfig{};
  q.codes = CodeMatrix(2, 16);
  for (int i = 0; i < 16; ++i) {
    q.codes(0, i) = static_cast<std::uint8_t>(i);
    q.codes(1, i) = 0;
  }
  q.scales = {1.0, 0.0};
  q.zero_points = {0, 0};
  q.constants = {0.0, 3.5};
  const Matrix out = dequantize(q);
  for (int i = 0; i < 16; ++i) {
    CHECK(out(0, i) == i);
    CHECK(out(1, i) == 3.5);
  }
}

TEST_CASE("random tokens match the oracle bit for bit") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int len = 1 + static_cast<int>(rng.below(16));
    const int bits = 2 + static_cast<int>(rng.below(7));
    const double alpha = trial % 3 == 0 ? 1.0 : 0.5 + 0.5 * rng.uniform();
    const double beta = trial % 3 == 0 ? 1.0 : 0.5 + 0.5 * rng.uniform();
    const double shift = trial % 4 == 0 ? 3.0 : 0.0;
    std::vector<double> v(static_cast<std::size_t>(len));
    for (auto& e : v) e = shift + 2.0 * rng.normal();

    QuantConfig cfg;
    cfg.bits = bits;
    cfg.alpha = alpha;
    cfg.beta = beta;
    const QuantizedTokens q = quantize_per_token(row_of(v), cfg);
    const OracleToken o = oracle(v, bits, alpha, beta);
    const Matrix recon = dequantize(q);
    for (int i = 0; i < len; ++i) {
      CHECK(q.codes(0, i) == o.codes[static_cast<std::size_t>(i)]);
      CHECK(recon(0, i) == o.recon[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("round trip stays within half a step of the clipped value") {
  const Matrix x = random_matrix(200, 32, 5, 2.0);
  for (const double clip : {1.0, 0.8}) {
    QuantConfig cfg;
    cfg.alpha = clip;
    cfg.beta = clip;
    const QuantizedTokens q = quantize_per_token(x, cfg);
    const Matrix recon = dequantize(q);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const double lo = clip * x.row(t).minCoeff();
      const double hi = clip * x.row(t).maxCoeff();
      const double s = q.scales[static_cast<std::size_t>(t)];
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double clamped = std::clamp(x(t, c), lo, hi);
        CHECK(std::abs(clamped - recon(t, c)) <= s / 2 + 1e-12);
      }
    }
  }
}

TEST_CASE("quantization is idempotent on its own output") {
  const Matrix x = random_matrix(100, 24, 8, 1.5);
  for (int bits = 2; bits <= 8; ++bits) {
    QuantConfig cfg;
    cfg.bits = bits;
    const QuantizedTokens first = quantize_per_token(x, cfg);
    const QuantizedTokens second = quantize_per_token(dequantize(first), cfg);
    CHECK(first.codes == second.codes);
  }
}

TEST_CASE("invalid inputs") {
  Matrix x = Matrix::Zero(2, 3);
  x(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK(error_code_of([&] { quantize_per_token(x, QuantConfig{}); }) == ErrorCode::invalid_data);
  x(1, 2) = std::numeric_limits<double>::infinity();
  CHECK(error_code_of([&] { quantize_per_token(x, QuantConfig{}); }) == ErrorCode::invalid_data);

  QuantConfig bad;
  bad.bits = 9;
  CHECK(error_code_of([&] { quantize_per_token(Matrix::Ones(1, 2), bad); }) == ErrorCode::usage);
  bad.bits = 4;
  bad.alpha = 0.0;
  CHECK(error_code_of([&] { quantize_per_token(Matrix::Ones(1, 2), bad); }) == ErrorCode::usage);
}

TEST_CASE("all-positive token follows the formula literally") {
  const std::vector<double> v = {2.0, 3.0, 5.0};
  const QuantizedTokens q = quantize_per_token(row_of(v), QuantConfig{});
  CHECK(q.zero_points[0] <= 0);
  const OracleToken o = oracle(v, 4, 1.0, 1.0);
  for (int i = 0; i < 3; ++i) CHECK(q.codes(0, i) == o.codes[static_cast<std::size_t>(i)]);
}

TEST_CASE("quant_error without rotation on grid-aligned data") {
  Matrix x(3, 16);
  for (int t = 0; t < 3; ++t) {
    for (int c = 0; c < 16; ++c) x(t, c) = (c * (2 * t + 1)) % 16 - 4.0 * t;  // permutation of 0..15, shifted
  }
  const ErrorReport r = quant_error(x, nullptr, QuantConfig{}, nullptr);
  CHECK(r.mean_sq_error == 0.0);
  for (double e : r.per_token_sq_error) CHECK(e == 0.0);
}

TEST_CASE("one-hot token under Hadamard has the closed-form two-level error") {
  // x = a e_i rotated by H D / sqrt(C) has entries +-a/sqrt(C). With mixed
  // signs the grid puts one level a half step off each value, so every entry
  // is off by b / (2^N - 1) with b = a / sqrt(C): E = a^2 / (2^N - 1)^2.
  const Eigen::Index dim = 16;
  const double a = 4.0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const RotationMatrix r = hadamard_randomized(dim, seed);
    for (int bits : {2, 3, 4, 8}) {
      QuantConfig cfg;
      cfg.bits = bits;
      for (Eigen::Index i = 0; i < dim; ++i) {
        Matrix x = Matrix::Zero(1, dim);
        x(0, i) = a;
        const Matrix y = x * r.matrix();
        const bool mixed = y.maxCoeff() > 0.0 && y.minCoeff() < 0.0;
        const double top = static_cast<double>((1 << bits) - 1);
        const double expected = mixed ? a * a / (top * top) : 0.0;
        const ErrorReport rep = quant_error(x, &r, cfg, nullptr);
        CHECK(rep.per_token_sq_error[0] == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("error report splits by mask") {
  const Matrix x = random_matrix(10, 8, 3);
  const MassiveMask mask = MassiveMask::from_indices(10, {2, 7});
  const ErrorReport r = quant_error(x, nullptr, QuantConfig{}, &mask);
  double bulk = 0.0, massive = 0.0, all = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    CHECK(r.per_token_sq_error[t] >= 0.0);
    all += r.per_token_sq_error[t];
    (t == 2 || t == 7 ? massive : bulk) += r.per_token_sq_error[t];
  }
  CHECK(r.mean_sq_error == doctest::Approx(all / 10));
  CHECK(r.massive_mean_sq_error == doctest::Approx(massive / 2));
  CHECK(r.bulk_mean_sq_error == doctest::Approx(bulk / 8));
  CHECK(r.is_massive[2]);
  CHECK_FALSE(r.is_massive[3]);

  const RotationMatrix wrong = RotationMatrix::identity(4);
  CHECK(error_code_of([&] { quant_error(x, &wrong, QuantConfig{}, nullptr); }) == ErrorCode::dimension_mismatch);
}

TEST_CASE("rotation and no rotation see tokens of equal norm") {
  const Matrix x = random_matrix(20, 32, 12);
  const RotationMatrix r = orthogonal_random(32, 4);
  const Matrix y = x * r.matrix();
  for (Eigen::Index t = 0; t < x.rows(); ++t) CHECK(y.row(t).norm() == doctest::Approx(x.row(t).norm()));
}

TEST_CASE("mean error is non-increasing in bit-width") {
  const Matrix x = random_matrix(256, 64, 21, 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RotationMatrix r = hadamard_randomized(64, seed);
    double previous = std::numeric_limits<double>::infinity();
    for (int bits = 2; bits <= 8; ++bits) {
      QuantConfig cfg;
      cfg.bits = bits;
      const double e = quant_error(x, &r, cfg, nullptr).mean_sq_error;
      CHECK(e <= previous + 1e-12);
      previous = e;
    }
  }
}

TEST_CASE("RTN weight quantization") {
  Matrix w(2, 15);
  for (int i = 0; i < 15; ++i) {
    w(0, i) = i - 7;
    w(1, i) = 0.0;
  }
  const Matrix q = rtn_weight_quantize(w, 4);
  CHECK(q == w);

  const Matrix g = random_matrix(16, 64, 99);
  for (int bits : {3, 4, 8}) {
    const Matrix gq = rtn_weight_quantize(g, bits);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double s = g.row(r).cwiseAbs().maxCoeff() / static_cast<double>((1 << (bits - 1)) - 1);
      CHECK((g.row(r) - gq.row(r)).cwiseAbs().maxCoeff() <= s / 2 + 1e-12);
    }
  }
}
