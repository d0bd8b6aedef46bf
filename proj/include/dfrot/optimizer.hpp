#pragma once

#include "dfrot/massive.hpp"
#include "dfrot/quantizer.hpp"
#include "dfrot/rotations.hpp"
#include "dfrot/types.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace dfrot {

inline constexpr double kGammaInfinite = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultGamma = 100.0;
inline constexpr int kDefaultIterations = 100;

enum class InitKind { hadamard_randomized, orthogonal_random, from_file };

const char* to_string(InitKind kind);

struct OptimizerConfig {
  double gamma = kDefaultGamma;  // kGammaInfinite optimizes the massive tokens only
  int iterations = kDefaultIterations;
  InitKind init = InitKind::hadamard_randomized;
  std::optional<RotationMatrix> initial;  // required for InitKind::from_file
  std::uint64_t seed = 0;
  QuantConfig quant;
  bool enforce_det_plus_one = true;
  // Stop once the loss changes by less than 1e-8 (relative) for 10 rounds in a row.
  bool early_stop = false;

  void validate() const;
};

struct LossTerms {
  double weighted = 0.0;
  double bulk = 0.0;
  double massive = 0.0;
};

// bulk mean + gamma * massive mean over per-token errors. An empty subset
// contributes 0; gamma = inf keeps only the massive mean.
LossTerms combine_losses(const std::vector<double>& per_token, const MassiveMask& mask, double gamma);

double weighted_loss(const Matrix& x, const RotationMatrix& r, const MassiveMask& mask, double gamma,
                     const QuantConfig& cfg);

// Per-token weights w_t such that sum_t w_t e_t equals combine_losses(e).weighted:
// 1/n_bulk for bulk tokens and gamma/n_massive for massive tokens.
std::vector<double> token_weights(const MassiveMask& mask, double gamma);

// Quantized reconstruction of X R; the fixed centroids of the rotation step.
QuantizedTokens centroid_step(const Matrix& x, const RotationMatrix& r, const QuantConfig& cfg);

struct ProcrustesResult {
  RotationMatrix rotation;
  bool non_unique = false;     // some singular value < 1e-12 * sigma_max
  bool det_corrected = false;  // reflection was turned into a rotation
};

// argmin over orthogonal R of sum_t w_t ||x_t R - eta_t||^2, via the SVD of
// X^T diag(w) eta. With enforce_det_plus_one the minimum is taken over SO(C).
ProcrustesResult procrustes_step(const Matrix& x, const Matrix& eta, const std::vector<double>& weights,
                                 bool enforce_det_plus_one = true);

struct IterationRecord {
  int iter = 0;
  double weighted_loss_before_rotation_step = 0.0;
  double weighted_loss_after_rotation_step = 0.0;
  double bulk_loss = 0.0;
  double massive_loss = 0.0;
  bool non_unique = false;
};

struct OptimizerTrace {
  // Record k holds the true loss of R_k (before) and the fixed-centroid loss
  // of R_{k+1} (after).
  std::vector<IterationRecord> per_iteration;
  LossTerms final_loss;  // true loss of the last iterate R_K
  int best_iteration = 0;  // in [0, K]; K denotes the last iterate
  LossTerms best_loss;
  std::optional<RotationMatrix> final_R;
};

struct OptimizeResult {
  RotationMatrix rotation;  // best iterate
  OptimizerTrace trace;
};

RotationMatrix initial_rotation(Eigen::Index dim, const OptimizerConfig& cfg);

// Alternates centroid and Procrustes steps for cfg.iterations rounds on the
// calibration tokens X and returns the iterate with the lowest weighted loss.
OptimizeResult optimize(const Matrix& x, const MassiveMask& mask, const OptimizerConfig& cfg);

}  // namespace dfrot
