#pragma once

#include "dfrot/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace dfrot {

inline constexpr double kDefaultTauRel = 15.0;

// Tokens flagged as carrying massive activations, with the thresholds and
// statistics that produced the flags.
struct MassiveMask {
  std::vector<bool> flags;
  double tau_rel = kDefaultTauRel;
  std::optional<double> tau_abs;
  std::vector<double> linf;  // per-token max |x|; empty for ground-truth masks
  double median_linf = 0.0;

  std::size_t tokens() const { return flags.size(); }
  std::size_t count() const;
  double fraction() const;
  std::vector<std::size_t> indices() const;

  static MassiveMask from_indices(std::size_t tokens, const std::vector<std::size_t>& indices);
};

// Median of the per-token l_inf norms; the mean of the two middle values for
// an even count.
double median(std::vector<double> values);

// Flags token t iff linf(x_t) >= tau_rel * median(linf) and, when given,
// linf(x_t) >= tau_abs. Requires tau_rel > 1.
MassiveMask detect_massive(const Matrix& x, double tau_rel = kDefaultTauRel,
                           std::optional<double> tau_abs = std::nullopt);

}  // namespace dfrot
