#pragma once

#include "dfrot/rotations.hpp"
#include "dfrot/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace dfrot {

struct MassiveMask;

enum class Rounding { half_away_from_zero };

// Dynamic asymmetric per-token quantizer settings. alpha and beta shrink each
// token's max and min before the grid is laid out.
struct QuantConfig {
  int bits = 4;
  double alpha = 1.0;
  double beta = 1.0;
  Rounding rounding = Rounding::half_away_from_zero;

  std::int64_t max_code() const { return (std::int64_t{1} << bits) - 1; }
  // Throws ErrorCode::usage for bits outside [2, 8] or clip ratios outside (0, 1].
  void validate() const;
};

double round_half_away(double v);

using CodeMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-token codes and grid. A token whose clip window has no width is stored
// with scale 0 and its value in `constants`; its codes are all zero.
struct QuantizedTokens {
  CodeMatrix codes;
  std::vector<double> scales;
  std::vector<std::int64_t> zero_points;
  std::vector<double> constants;
  QuantConfig config;

  Eigen::Index tokens() const { return codes.rows(); }
  bool is_sentinel(Eigen::Index t) const { return scales[static_cast<std::size_t>(t)] == 0.0; }
};

// s = (a*max - b*min) / (2^N - 1), z = -round(b*min / s),
// q = clamp(round(x / s) + z, 0, 2^N - 1) for every token independently.
// Throws ErrorCode::invalid_data on NaN/Inf.
QuantizedTokens quantize_per_token(const Matrix& x, const QuantConfig& cfg);

// (q - z) * s per entry; sentinel tokens reproduce their constant.
Matrix dequantize(const QuantizedTokens& q);

// Squared reconstruction error ||y_t - dequantize(quantize(y_t))||^2 per row.
std::vector<double> per_token_sq_error(const Matrix& y, const QuantConfig& cfg);

struct ErrorReport {
  std::vector<double> per_token_sq_error;
  std::vector<bool> is_massive;  // all false when no mask was supplied
  double mean_sq_error = 0.0;
  double massive_mean_sq_error = 0.0;
  double bulk_mean_sq_error = 0.0;
};

// Quantization error of X R (or of X itself when no rotation is given), split
// into massive and bulk tokens when a mask is supplied. Subset means of an
// empty subset are 0.
ErrorReport quant_error(const Matrix& x, const RotationMatrix* rotation, const QuantConfig& cfg,
                        const MassiveMask* mask);

// Per-row symmetric round-to-nearest: s = max|w| / (2^{bits-1} - 1),
// w' = round(w / s) * s. All-zero rows stay zero.
Matrix rtn_weight_quantize(const Matrix& w, int bits);

}  // namespace dfrot
