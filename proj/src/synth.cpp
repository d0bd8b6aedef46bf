#include "dfrot/synth.hpp"

#include "dfrot/error.hpp"
#include "dfrot/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dfrot {

void SynthSpec::validate() const {
  if (tokens < 1 || dim < 1) throw Error(ErrorCode::usage, "synth: tokens and dim must be positive");
  if (massive_count > tokens) throw Error(ErrorCode::usage, "synth: massive_count exceeds tokens");
  if (outlier_channels > dim) throw Error(ErrorCode::usage, "synth: outlier_channels exceeds dim");
  if (!(outlier_scale > 0.0) || !(massive_scale > 0.0) || !(noise_sigma > 0.0)) {
    throw Error(ErrorCode::usage, "synth: scales must be positive");
  }
}

namespace {

// First `k` entries of a seeded Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const auto rows = static_cast<Eigen::Index>(spec.tokens);
  const auto cols = static_cast<Eigen::Index>(spec.dim);

  Rng layout(splitmix64(spec.seed ^ 0x53796e7468446174ULL));
  SynthData data;
  data.outlier_channel_indices = choose(spec.dim, spec.outlier_channels, layout);
  const std::vector<std::size_t> massive = choose(spec.tokens, spec.massive_count, layout);
  data.truth = MassiveMask::from_indices(spec.tokens, massive);
  data.truth.tau_rel = 0.0;
  for (std::size_t i = 0; i < massive.size(); ++i) {
    data.spike_channels.push_back(static_cast<std::size_t>(layout.below(spec.dim)));
  }

  Vector channel_scale = Vector::Constant(cols, spec.noise_sigma);
  for (std::size_t c : data.outlier_channel_indices) {
    channel_scale(static_cast<Eigen::Index>(c)) *= spec.outlier_scale;
  }

  data.activations.resize(rows, cols);
  std::size_t next_massive = 0;
  for (Eigen::Index t = 0; t < rows; ++t) {
    Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(t));
    auto row = data.activations.row(t);
    for (Eigen::Index c = 0; c < cols; ++c) row(c) = channel_scale(c) * rng.normal();
    if (data.truth.flags[static_cast<std::size_t>(t)]) {
      const auto c = static_cast<Eigen::Index>(data.spike_channels[next_massive++]);
      row(c) += spec.massive_scale * spec.noise_sigma;
    }
    if (spec.normalize_l2) {
      row *= std::sqrt(static_cast<double>(cols)) / row.norm();
    }
  }
  return data;
}

}  // namespace dfrot
