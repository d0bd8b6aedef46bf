#pragma once

#include "dfrot/quantizer.hpp"
#include "dfrot/rotations.hpp"
#include "dfrot/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dfrot {

// Weights of a single-head, position-free pre-norm block plus the LM head.
// Linear layers act on row tokens as x W.
struct ToyBlockWeights {
  Matrix w_q, w_k, w_v, w_o;  // C x C
  Matrix w_up, w_gate;        // C x H
  Matrix w_down;              // H x C
  Matrix w_lm_head;           // C x V

  Eigen::Index dim() const { return w_q.rows(); }
  Eigen::Index hidden() const { return w_up.cols(); }
  Eigen::Index vocab() const { return w_lm_head.cols(); }

  // Throws ErrorCode::dimension_mismatch or ErrorCode::invalid_data.
  void validate() const;

  std::vector<std::pair<std::string, const Matrix*>> named() const;
};

// Gaussian weights scaled by 1/sqrt(fan_in), deterministic in seed.
ToyBlockWeights random_toy_weights(Eigen::Index dim, Eigen::Index hidden, Eigen::Index vocab,
                                   std::uint64_t seed);

// x_i / ||x_i|| per row, no learnable scale. Zero rows throw ErrorCode::degenerate_input.
Matrix rmsnorm(const Matrix& x);

// {R^T W_q, R^T W_k, R^T W_v, W_o R, R^T W_up, R^T W_gate, W_down R, R^T W_lm_head}
ToyBlockWeights fold_rotation(const ToyBlockWeights& w, const RotationMatrix& r);

// Fake-quantization applied inside the block. `activations` quantizes the
// input of every linear layer per token; `weight_bits` applies per-output-
// channel symmetric RTN to every block weight.
struct BlockQuant {
  std::optional<QuantConfig> activations;
  std::optional<int> weight_bits;
};

// A = rmsnorm(X); H = X + softmax(A Wq (A Wk)^T / sqrt(C)) A Wv Wo;
// B = rmsnorm(H); out = H + (silu(B Wgate) * (B Wup)) Wdown.
Matrix block_forward(const Matrix& x, const ToyBlockWeights& w, const BlockQuant& quant = {});

// Applies the blocks in order.
Matrix stack_forward(const Matrix& x, const std::vector<ToyBlockWeights>& blocks, const BlockQuant& quant = {});

Matrix lm_head(const Matrix& x, const ToyBlockWeights& w);

// max|a - b| / max|b|
double max_relative_deviation(const Matrix& a, const Matrix& b);

struct InvarianceSettings {
  Eigen::Index dim = 64;
  Eigen::Index hidden = 128;
  Eigen::Index tokens = 32;
  Eigen::Index vocab = 96;
  std::uint64_t seed = 0;
  std::optional<int> quant_bits;  // also measure quantized drift for RH vs RO folding
  std::size_t massive_tokens = 2;
};

struct InvarianceReport {
  double block_deviation = 0.0;     // single block, folded vs unfolded (rotated back)
  double stack_deviation = 0.0;     // two stacked blocks
  double lm_head_deviation = 0.0;   // logits through one block and the head
  std::optional<double> drift_rh;   // quantized folded-RH output vs full-precision reference
  std::optional<double> drift_ro;
};

// Builds toy weights and synthetic inputs from `seed` and checks that folding
// a random orthogonal matrix into the weights leaves the output equal to the
// rotated unfolded output. With quant_bits set, also reports the relative
// Frobenius drift of the quantized folded block for RH and RO.
InvarianceReport run_invariance(const InvarianceSettings& settings);

}  // namespace dfrot
