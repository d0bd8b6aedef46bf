#include "dfrot/invariance.hpp"
#include "dfrot/io.hpp"
#include "dfrot/rotations.hpp"
#include "dfrot/synth.hpp"

#include "test_helpers.hpp"

#include <cstring>

using namespace dfrot;
using dfrot::testing::error_code_of;
using dfrot::testing::random_matrix;

namespace {

const std::filesystem::path kData = DFROT_TEST_DATA;

TokenMatrix tokens(const Matrix& m, Dtype dtype) {
  TokenMatrix t;
  t.values = m;
  t.dtype = dtype;
  return t;
}

}  // namespace

TEST_CASE("DFAT round trip is bit-exact") {
  Matrix m = random_matrix(7, 5, 1, 1e3);
  m(0, 0) = -0.0;
  m(1, 1) = std::numeric_limits<double>::denorm_min();
  m(2, 2) = std::numeric_limits<double>::max();
  const auto bytes = io::encode_dfat(tokens(m, Dtype::f64));
  CHECK(bytes.size() == 4 + 4 + 4 + 8 + 8 + 7 * 5 * 8);
  const TokenMatrix back = io::decode_dfat(bytes);
  CHECK(back.dtype == Dtype::f64);
  CHECK(std::memcmp(back.values.data(), m.data(), sizeof(double) * 35) == 0);
  CHECK(io::encode_dfat(back) == bytes);
}

TEST_CASE("f32 DFAT stores floats") {
  const Matrix m = random_matrix(3, 4, 2);
  const TokenMatrix back = io::decode_dfat(io::encode_dfat(tokens(m, Dtype::f32)));
  CHECK(back.dtype == Dtype::f32);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    CHECK(back.values.data()[i] == static_cast<double>(static_cast<float>(m.data()[i])));
  }
  CHECK(io::encode_dfat(back) == io::encode_dfat(tokens(m, Dtype::f32)));
}

TEST_CASE("DFRM round trip") {
  const RotationMatrix r = orthogonal_random(16, 5);
  const RotationMatrix back = io::decode_dfrm(io::encode_dfrm(r));
  CHECK(back.matrix() == r.matrix());
  CHECK(back.kind() == RotationKind::loaded);
  const RotationMatrix back32 = io::decode_dfrm(io::encode_dfrm(r, Dtype::f32));
  CHECK((back32.matrix() - r.matrix()).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("corrupt headers are rejected") {
  const auto good = io::encode_dfat(tokens(Matrix::Ones(2, 2), Dtype::f64));

  auto bad = good;
  bad[0] = 'X';
  CHECK(error_code_of([&] { io::decode_dfat(bad); }) == ErrorCode::bad_magic);

  bad = good;
  bad[4] = 2;
  CHECK(error_code_of([&] { io::decode_dfat(bad); }) == ErrorCode::version_mismatch);

  bad = good;
  bad[8] = 7;
  CHECK(error_code_of([&] { io::decode_dfat(bad); }) == ErrorCode::invalid_data);

  bad = good;
  bad.pop_back();
  CHECK(error_code_of([&] { io::decode_dfat(bad); }) == ErrorCode::truncated);
  bad.resize(10);
  CHECK(error_code_of([&] { io::decode_dfat(bad); }) == ErrorCode::truncated);

  bad = good;
  bad.push_back(0);
  CHECK(error_code_of([&] { io::decode_dfat(bad); }) == ErrorCode::invalid_data);

  CHECK(error_code_of([&] { io::decode_dfrm(good); }) == ErrorCode::bad_magic);
}

TEST_CASE("DFRM must hold an orthogonal matrix") {
  std::vector<std::uint8_t> bytes = io::encode_dfrm(RotationMatrix::identity(3));
  double v = 0.5;
  std::memcpy(bytes.data() + 4 + 4 + 4 + 8 + 8, &v, sizeof v);  // entry (0, 1)
  CHECK(error_code_of([&] { io::decode_dfrm(bytes); }) == ErrorCode::not_orthogonal);
}

TEST_CASE("golden files decode and re-encode byte for byte") {
  const auto a = io::read_file(kData / "golden_2x3_f64.dfat");
  const TokenMatrix ta = io::decode_dfat(a);
  REQUIRE(ta.rows() == 2);
  REQUIRE(ta.cols() == 3);
  for (int k = 0; k < 6; ++k) CHECK(ta.values(k / 3, k % 3) == 0.5 * k - 1.25);
  CHECK(io::encode_dfat(ta) == a);

  const auto b = io::read_file(kData / "golden_3x2_f32.dfat");
  const TokenMatrix tb = io::decode_dfat(b);
  CHECK(tb.dtype == Dtype::f32);
  const double expected[6] = {1.0, -2.0, 0.25, 1024.0, -0.125, 3.5};
  for (int k = 0; k < 6; ++k) CHECK(tb.values(k / 2, k % 2) == expected[k]);
  CHECK(io::encode_dfat(tb) == b);

  const auto c = io::read_file(kData / "golden_h4_f64.dfrm");
  const RotationMatrix h4 = io::decode_dfrm(c);
  CHECK(h4.matrix() == 0.5 * sylvester_hadamard(4));
  CHECK(io::encode_dfrm(h4) == c);
}

TEST_CASE("default synth golden") {
  const auto bytes = io::read_file(kData / "golden_synth_2048x256_f32.dfat");
  const TokenMatrix golden = io::decode_dfat(bytes);
  CHECK(io::encode_dfat(golden) == bytes);
  const SynthData d = generate(SynthSpec{});
  REQUIRE(golden.rows() == d.activations.rows());
  REQUIRE(golden.cols() == d.activations.cols());
  // Allows one f32 rounding step in case the platform's libm differs in the last bit.
  const Matrix diff = (golden.values - d.activations).cwiseAbs();
  const Matrix bound = 1e-6 * d.activations.cwiseAbs().array() + 1e-30;
  CHECK((diff.array() <= bound.array()).all());
}

TEST_CASE("files on disk") {
  const auto dir = dfrot::testing::temp_dir("io");
  const Matrix m = random_matrix(4, 4, 3);
  io::write_dfat(tokens(m, Dtype::f64), dir / "a.dfat");
  CHECK(io::read_dfat(dir / "a.dfat").values == m);
  const RotationMatrix r = hadamard_randomized(8, 1);
  io::write_dfrm(r, dir / "r.dfrm");
  CHECK(io::read_dfrm(dir / "r.dfrm").matrix() == r.matrix());
  CHECK(error_code_of([&] { io::read_dfat(dir / "missing.dfat"); }) == ErrorCode::io);
}

TEST_CASE("weight bundle round trip") {
  const ToyBlockWeights w = random_toy_weights(8, 12, 5, 7);
  const auto bytes = io::encode_weights(w);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DFAB");
  const ToyBlockWeights back = io::decode_weights(bytes);
  const auto a = w.named();
  const auto b = back.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(io::encode_weights(back) == bytes);

  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK(error_code_of([&] { io::decode_weights(cut); }) == ErrorCode::truncated);
}
