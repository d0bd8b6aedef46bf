#include "dfrot/io.hpp"

#include "dfrot/error.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dfrot::io {

namespace {

constexpr std::size_t kMagicSize = 4;

class Writer {
 public:
  void magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + kMagicSize); }

  template <typename T>
  void le(T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }

  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* format) : bytes_(bytes), format_(format) {}

  void expect_magic(const char (&m)[5]) {
    need(kMagicSize, "magic");
    if (std::memcmp(bytes_.data(), m, kMagicSize) != 0) {
      throw Error(ErrorCode::bad_magic, std::string(format_) + ": bad magic, expected " + m);
    }
    pos_ = kMagicSize;
  }

  template <typename T>
  T le(const char* what) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    need(sizeof(T), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::truncated, std::string(format_) + ": truncated while reading " + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

void check_version(std::uint32_t version, const char* format) {
  if (version != kFormatVersion) {
    throw Error(ErrorCode::version_mismatch,
                std::string(format) + ": unsupported version " + std::to_string(version));
  }
}

Dtype check_dtype(std::uint32_t raw, const char* format) {
  if (raw > 1) {
    throw Error(ErrorCode::invalid_data, std::string(format) + ": unknown dtype " + std::to_string(raw));
  }
  return static_cast<Dtype>(raw);
}

std::size_t value_size(Dtype dtype) { return dtype == Dtype::f32 ? 4 : 8; }

void write_values(Writer& w, const Matrix& m, Dtype dtype) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (dtype == Dtype::f32) {
        w.le(static_cast<float>(m(i, j)));
      } else {
        w.le(m(i, j));
      }
    }
  }
}

Matrix read_values(Reader& r, std::uint64_t rows, std::uint64_t cols, Dtype dtype, const char* format) {
  const std::size_t width = value_size(dtype);
  if (cols != 0 && rows > r.remaining() / width / cols) {
    throw Error(ErrorCode::truncated, std::string(format) + ": payload shorter than header declares");
  }
  const std::size_t payload = static_cast<std::size_t>(rows * cols) * width;
  if (r.remaining() != payload) {
    throw Error(r.remaining() < payload ? ErrorCode::truncated : ErrorCode::invalid_data,
                std::string(format) + ": payload size does not match header");
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = dtype == Dtype::f32 ? static_cast<double>(r.le<float>("payload")) : r.le<double>("payload");
    }
  }
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_dfat(const TokenMatrix& m) {
  Writer w;
  w.magic("DFAT");
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(m.dtype));
  w.le(static_cast<std::uint64_t>(m.rows()));
  w.le(static_cast<std::uint64_t>(m.cols()));
  write_values(w, m.values, m.dtype);
  return w.take();
}

TokenMatrix decode_dfat(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "DFAT");
  r.expect_magic("DFAT");
  check_version(r.le<std::uint32_t>("version"), "DFAT");
  TokenMatrix m;
  m.dtype = check_dtype(r.le<std::uint32_t>("dtype"), "DFAT");
  const auto rows = r.le<std::uint64_t>("rows");
  const auto cols = r.le<std::uint64_t>("cols");
  m.values = read_values(r, rows, cols, m.dtype, "DFAT");
  return m;
}

std::vector<std::uint8_t> encode_dfrm(const RotationMatrix& rot, Dtype dtype) {
  Writer w;
  w.magic("DFRM");
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(dtype));
  w.le(static_cast<std::uint64_t>(rot.dim()));
  write_values(w, rot.matrix(), dtype);
  return w.take();
}

RotationMatrix decode_dfrm(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "DFRM");
  r.expect_magic("DFRM");
  check_version(r.le<std::uint32_t>("version"), "DFRM");
  const Dtype dtype = check_dtype(r.le<std::uint32_t>("dtype"), "DFRM");
  const auto dim = r.le<std::uint64_t>("dim");
  Matrix m = read_values(r, dim, dim, dtype, "DFRM");
  return RotationMatrix(std::move(m), RotationKind::loaded,
                        dtype == Dtype::f32 ? RotationMatrix::kTolerance32 : RotationMatrix::kTolerance64);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

TokenMatrix read_dfat(const std::filesystem::path& path) {
  TokenMatrix m = decode_dfat(read_file(path));
  m.provenance = "imported";
  return m;
}

void write_dfat(const TokenMatrix& m, const std::filesystem::path& path) { write_file(path, encode_dfat(m)); }

RotationMatrix read_dfrm(const std::filesystem::path& path) { return decode_dfrm(read_file(path)); }

void write_dfrm(const RotationMatrix& r, const std::filesystem::path& path, Dtype dtype) {
  write_file(path, encode_dfrm(r, dtype));
}

std::vector<std::uint8_t> encode_weights(const ToyBlockWeights& w, Dtype dtype) {
  w.validate();
  nlohmann::json sections = nlohmann::json::array();
  std::vector<std::uint8_t> body;
  for (const auto& [name, matrix] : w.named()) {
    const std::vector<std::uint8_t> blob = encode_dfat(TokenMatrix{*matrix, dtype, "weights"});
    sections.push_back({{"name", name}, {"offset", body.size()}, {"size", blob.size()}});
    body.insert(body.end(), blob.begin(), blob.end());
  }
  const std::string index = nlohmann::json{{"sections", sections}}.dump();
  Writer out;
  out.magic("DFAB");
  out.le(kFormatVersion);
  out.le(static_cast<std::uint64_t>(index.size()));
  out.raw(std::span(reinterpret_cast<const std::uint8_t*>(index.data()), index.size()));
  out.raw(body);
  return out.take();
}

ToyBlockWeights decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "DFAB");
  r.expect_magic("DFAB");
  check_version(r.le<std::uint32_t>("version"), "DFAB");
  const auto index_len = r.le<std::uint64_t>("index length");
  if (index_len > r.remaining()) throw Error(ErrorCode::truncated, "DFAB: truncated index");
  const auto index_bytes = r.raw(static_cast<std::size_t>(index_len), "index");
  const auto body = r.raw(r.remaining(), "body");

  nlohmann::json index;
  try {
    index = nlohmann::json::parse(index_bytes.begin(), index_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_data, std::string("DFAB: bad index: ") + e.what());
  }

  ToyBlockWeights w;
  std::vector<std::pair<std::string, Matrix*>> slots = {
      {"w_q", &w.w_q},       {"w_k", &w.w_k},       {"w_v", &w.w_v},       {"w_o", &w.w_o},
      {"w_up", &w.w_up},     {"w_gate", &w.w_gate}, {"w_down", &w.w_down}, {"w_lm_head", &w.w_lm_head}};
  try {
    for (auto& [name, slot] : slots) {
      bool found = false;
      for (const auto& section : index.at("sections")) {
        if (section.at("name").get<std::string>() != name) continue;
        const auto offset = section.at("offset").get<std::uint64_t>();
        const auto size = section.at("size").get<std::uint64_t>();
        if (offset > body.size() || size > body.size() - offset) {
          throw Error(ErrorCode::truncated, "DFAB: section " + name + " exceeds file");
        }
        *slot = decode_dfat(body.subspan(static_cast<std::size_t>(offset), static_cast<std::size_t>(size))).values;
        found = true;
        break;
      }
      if (!found) throw Error(ErrorCode::invalid_data, "DFAB: missing section " + name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_data, std::string("DFAB: bad index: ") + e.what());
  }
  w.validate();
  return w;
}

ToyBlockWeights read_weights(const std::filesystem::path& path) { return decode_weights(read_file(path)); }

void write_weights(const ToyBlockWeights& w, const std::filesystem::path& path, Dtype dtype) {
  write_file(path, encode_weights(w, dtype));
}

}  // namespace dfrot::io
