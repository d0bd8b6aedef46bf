#pragma once

#include "dfrot/invariance.hpp"
#include "dfrot/rotations.hpp"
#include "dfrot/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dfrot::io {

inline constexpr std::uint32_t kFormatVersion = 1;

// DFAT: "DFAT", u32 version, u32 dtype (0 f32, 1 f64), u64 rows, u64 cols,
// then rows*cols little-endian values in row-major order.
std::vector<std::uint8_t> encode_dfat(const TokenMatrix& m);
TokenMatrix decode_dfat(std::span<const std::uint8_t> bytes);

// DFRM: "DFRM", u32 version, u32 dtype, u64 dim, then dim*dim values.
std::vector<std::uint8_t> encode_dfrm(const RotationMatrix& r, Dtype dtype = Dtype::f64);
// Loaded rotations are re-checked for orthogonality at the tolerance of their dtype.
RotationMatrix decode_dfrm(std::span<const std::uint8_t> bytes);

TokenMatrix read_dfat(const std::filesystem::path& path);
void write_dfat(const TokenMatrix& m, const std::filesystem::path& path);

RotationMatrix read_dfrm(const std::filesystem::path& path);
void write_dfrm(const RotationMatrix& r, const std::filesystem::path& path, Dtype dtype = Dtype::f64);

// Weight bundle: "DFAB", u32 version, u64 index length, a JSON index
// {"sections": [{"name", "offset", "size"}]} and then one DFAT blob per
// named matrix. Offsets are relative to the first byte after the index.
std::vector<std::uint8_t> encode_weights(const ToyBlockWeights& w, Dtype dtype = Dtype::f64);
ToyBlockWeights decode_weights(std::span<const std::uint8_t> bytes);
ToyBlockWeights read_weights(const std::filesystem::path& path);
void write_weights(const ToyBlockWeights& w, const std::filesystem::path& path, Dtype dtype = Dtype::f64);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dfrot::io
