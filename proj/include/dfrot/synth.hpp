#pragma once

#include "dfrot/massive.hpp"
#include "dfrot/types.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dfrot {

// Synthetic activations: Gaussian bulk tokens with a few amplified channels,
// plus rare tokens carrying one huge spike.
struct SynthSpec {
  std::size_t tokens = 2048;
  std::size_t dim = 256;
  std::size_t outlier_channels = 8;
  double outlier_scale = 5.0;
  std::size_t massive_count = 3;
  double massive_scale = 1000.0;
  double noise_sigma = 1.0;
  bool normalize_l2 = false;  // rescale every row to norm sqrt(dim)
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  Matrix activations;
  MassiveMask truth;  // flags of the spiked tokens
  std::vector<std::size_t> outlier_channel_indices;
  std::vector<std::size_t> spike_channels;  // one per massive token, in token order
};

// Deterministic in spec.seed; each token draws from its own counter-derived stream.
SynthData generate(const SynthSpec& spec);

}  // namespace dfrot
