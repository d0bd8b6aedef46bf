#include "dfrot/massive.hpp"

#include "dfrot/error.hpp"

#include <algorithm>
#include <string>

namespace dfrot {

std::size_t MassiveMask::count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

double MassiveMask::fraction() const {
  return flags.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(flags.size());
}

std::vector<std::size_t> MassiveMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < flags.size(); ++t) {
    if (flags[t]) out.push_back(t);
  }
  return out;
}

MassiveMask MassiveMask::from_indices(std::size_t tokens, const std::vector<std::size_t>& indices) {
  MassiveMask mask;
  mask.flags.assign(tokens, false);
  for (std::size_t i : indices) {
    if (i >= tokens) {
      throw Error(ErrorCode::dimension_mismatch,
                  "mask index " + std::to_string(i) + " out of range for " + std::to_string(tokens) +
                      " tokens");
    }
    mask.flags[i] = true;
  }
  return mask;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

MassiveMask detect_massive(const Matrix& x, double tau_rel, std::optional<double> tau_abs) {
  if (x.rows() < 1) {
    throw Error(ErrorCode::invalid_data, "detection needs at least one token");
  }
  if (!(tau_rel > 1.0)) {
    throw Error(ErrorCode::usage, "tau_rel must be greater than 1");
  }
  MassiveMask mask;
  mask.tau_rel = tau_rel;
  mask.tau_abs = tau_abs;
  mask.linf.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    mask.linf[static_cast<std::size_t>(t)] = x.row(t).cwiseAbs().maxCoeff();
  }
  mask.median_linf = median(mask.linf);

  const double threshold = tau_rel * mask.median_linf;
  mask.flags.resize(mask.linf.size());
  for (std::size_t t = 0; t < mask.linf.size(); ++t) {
    // An all-zero token is never massive, even when the median is 0.
    mask.flags[t] = mask.linf[t] > 0.0 && mask.linf[t] >= threshold && (!tau_abs || mask.linf[t] >= *tau_abs);
  }
  return mask;
}

}  // namespace dfrot
