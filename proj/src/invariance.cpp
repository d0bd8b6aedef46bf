#include "dfrot/invariance.hpp"

#include "dfrot/error.hpp"
#include "dfrot/rng.hpp"
#include "dfrot/synth.hpp"

#include <cmath>
#include <string>

namespace dfrot {

namespace {

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (!m.allFinite()) {
    throw Error(ErrorCode::invalid_data, std::string(name) + " has non-finite entries");
  }
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

Matrix row_softmax(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

Matrix silu(const Matrix& m) {
  return (m.array() / (1.0 + (-m.array()).exp())).matrix();
}

// Input-side fake quantization for a linear layer.
Matrix linear_input(const Matrix& a, const BlockQuant& quant) {
  if (!quant.activations) return a;
  return dequantize(quantize_per_token(a, *quant.activations));
}

// Weights are stored input x output, so output channels are columns.
Matrix linear_weight(const Matrix& w, const BlockQuant& quant) {
  if (!quant.weight_bits) return w;
  return rtn_weight_quantize(w.transpose(), *quant.weight_bits).transpose();
}

}  // namespace

void ToyBlockWeights::validate() const {
  const Eigen::Index c = w_q.rows();
  const Eigen::Index h = w_up.cols();
  const Eigen::Index v = w_lm_head.cols();
  if (c < 1 || h < 1 || v < 1) {
    throw Error(ErrorCode::dimension_mismatch, "toy block dimensions must be positive");
  }
  expect_shape(w_q, c, c, "w_q");
  expect_shape(w_k, c, c, "w_k");
  expect_shape(w_v, c, c, "w_v");
  expect_shape(w_o, c, c, "w_o");
  expect_shape(w_up, c, h, "w_up");
  expect_shape(w_gate, c, h, "w_gate");
  expect_shape(w_down, h, c, "w_down");
  expect_shape(w_lm_head, c, v, "w_lm_head");
}

std::vector<std::pair<std::string, const Matrix*>> ToyBlockWeights::named() const {
  return {{"w_q", &w_q},       {"w_k", &w_k},         {"w_v", &w_v},       {"w_o", &w_o},
          {"w_up", &w_up},     {"w_gate", &w_gate},   {"w_down", &w_down}, {"w_lm_head", &w_lm_head}};
}

ToyBlockWeights random_toy_weights(Eigen::Index dim, Eigen::Index hidden, Eigen::Index vocab,
                                   std::uint64_t seed) {
  if (dim < 1 || hidden < 1 || vocab < 1) {
    throw Error(ErrorCode::usage, "toy block dimensions must be positive");
  }
  Rng rng(splitmix64(seed ^ 0x546f79426c6f636bULL));
  ToyBlockWeights w;
  w.w_q = gaussian(dim, dim, rng);
  w.w_k = gaussian(dim, dim, rng);
  w.w_v = gaussian(dim, dim, rng);
  w.w_o = gaussian(dim, dim, rng);
  w.w_up = gaussian(dim, hidden, rng);
  w.w_gate = gaussian(dim, hidden, rng);
  w.w_down = gaussian(hidden, dim, rng);
  w.w_lm_head = gaussian(dim, vocab, rng);
  return w;
}

Matrix rmsnorm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorCode::degenerate_input, "rmsnorm: row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) = x.row(i) / norm;
  }
  return out;
}

ToyBlockWeights fold_rotation(const ToyBlockWeights& w, const RotationMatrix& r) {
  w.validate();
  if (r.dim() != w.dim()) {
    throw Error(ErrorCode::dimension_mismatch, "rotation dim does not match block width");
  }
  const Matrix& rm = r.matrix();
  const Matrix rt = rm.transpose();
  ToyBlockWeights out;
  out.w_q = rt * w.w_q;
  out.w_k = rt * w.w_k;
  out.w_v = rt * w.w_v;
  out.w_o = w.w_o * rm;
  out.w_up = rt * w.w_up;
  out.w_gate = rt * w.w_gate;
  out.w_down = w.w_down * rm;
  out.w_lm_head = rt * w.w_lm_head;
  return out;
}

Matrix block_forward(const Matrix& x, const ToyBlockWeights& w, const BlockQuant& quant) {
  w.validate();
  if (x.cols() != w.dim()) {
    throw Error(ErrorCode::dimension_mismatch, "token width does not match block width");
  }
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(w.dim()));

  const Matrix a = linear_input(rmsnorm(x), quant);
  const Matrix q = a * linear_weight(w.w_q, quant);
  const Matrix k = a * linear_weight(w.w_k, quant);
  const Matrix v = a * linear_weight(w.w_v, quant);
  const Matrix attn = row_softmax(inv_sqrt_c * q * k.transpose()) * v;
  const Matrix h = x + linear_input(attn, quant) * linear_weight(w.w_o, quant);

  const Matrix b = linear_input(rmsnorm(h), quant);
  const Matrix gate = silu(b * linear_weight(w.w_gate, quant));
  const Matrix up = b * linear_weight(w.w_up, quant);
  const Matrix ffn = gate.cwiseProduct(up);
  return h + linear_input(ffn, quant) * linear_weight(w.w_down, quant);
}

Matrix stack_forward(const Matrix& x, const std::vector<ToyBlockWeights>& blocks, const BlockQuant& quant) {
  Matrix h = x;
  for (const auto& block : blocks) h = block_forward(h, block, quant);
  return h;
}

Matrix lm_head(const Matrix& x, const ToyBlockWeights& w) {
  if (x.cols() != w.w_lm_head.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "token width does not match lm_head");
  }
  return x * w.w_lm_head;
}

double max_relative_deviation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "deviation of differently shaped matrices");
  }
  const double denom = b.cwiseAbs().maxCoeff();
  const double diff = (a - b).cwiseAbs().maxCoeff();
  return denom > 0.0 ? diff / denom : diff;
}

InvarianceReport run_invariance(const InvarianceSettings& s) {
  const ToyBlockWeights first = random_toy_weights(s.dim, s.hidden, s.vocab, s.seed);
  const ToyBlockWeights second = random_toy_weights(s.dim, s.hidden, s.vocab, splitmix64(s.seed));

  SynthSpec spec;
  spec.tokens = static_cast<std::size_t>(s.tokens);
  spec.dim = static_cast<std::size_t>(s.dim);
  spec.outlier_channels = std::min<std::size_t>(4, spec.dim);
  spec.massive_count = std::min<std::size_t>(s.massive_tokens, spec.tokens);
  spec.seed = s.seed;
  const Matrix x = generate(spec).activations;

  // A random orthogonal matrix exercises the identity for a generic R.
  const RotationMatrix r = orthogonal_random(s.dim, s.seed);
  const Matrix& rm = r.matrix();
  const Matrix xr = x * rm;

  InvarianceReport report;
  const ToyBlockWeights first_folded = fold_rotation(first, r);
  const Matrix reference = block_forward(x, first);
  report.block_deviation = max_relative_deviation(block_forward(xr, first_folded), reference * rm);

  const Matrix stacked = stack_forward(x, {first, second});
  const Matrix stacked_folded = stack_forward(xr, {first_folded, fold_rotation(second, r)});
  report.stack_deviation = max_relative_deviation(stacked_folded, stacked * rm);

  report.lm_head_deviation =
      max_relative_deviation(lm_head(block_forward(xr, first_folded), first_folded), lm_head(reference, first));

  if (s.quant_bits) {
    BlockQuant quant;
    QuantConfig cfg;
    cfg.bits = *s.quant_bits;
    quant.activations = cfg;
    auto drift = [&](const RotationMatrix& rot) {
      const Matrix out = block_forward(x * rot.matrix(), fold_rotation(first, rot), quant);
      const Matrix expected = reference * rot.matrix();
      return (out - expected).norm() / expected.norm();
    };
    report.drift_rh = drift(hadamard_randomized(s.dim, s.seed));
    report.drift_ro = drift(r);
  }
  return report;
}

}  // namespace dfrot
