#pragma once

// OMT tensor files, little-endian:
//   bytes 0-3  magic "OMT1"
//   byte  4    ndim (1..5)
//   ndim x u32 extents
//   numel x f32 values, row-major
// Values are narrowed to f32 on save (round-to-nearest) and widened on load.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "omnivox/error.hpp"
#include "omnivox/tensor.hpp"

namespace omnivox {

static_assert(std::endian::native == std::endian::little, "OMT I/O assumes a little-endian host");

enum class OmtErrorKind { BadMagic, BadRank, ZeroExtent, ExtentOverflow, Truncated, TrailingBytes, NonFinite };

inline const char* omt_error_code(OmtErrorKind kind) {
  switch (kind) {
    case OmtErrorKind::BadMagic: return "omt-bad-magic";
    case OmtErrorKind::BadRank: return "omt-bad-rank";
    case OmtErrorKind::ZeroExtent: return "omt-zero-extent";
    case OmtErrorKind::ExtentOverflow: return "omt-extent-overflow";
    case OmtErrorKind::Truncated: return "omt-truncated";
    case OmtErrorKind::TrailingBytes: return "omt-trailing-bytes";
    case OmtErrorKind::NonFinite: return "omt-non-finite";
  }
  return "omt";
}

class OmtError : public Error {
 public:
  OmtError(OmtErrorKind kind, const std::string& what)
      : Error(omt_error_code(kind), what), kind_(kind) {}
  OmtErrorKind kind() const noexcept { return kind_; }

 private:
  OmtErrorKind kind_;
};

inline constexpr char kOmtMagic[4] = {'O', 'M', 'T', '1'};
// Largest element count accepted on load (16 GiB of f32 payload).
inline constexpr std::uint64_t kOmtMaxElements = std::uint64_t{1} << 32;

inline std::vector<std::uint8_t> encode_omt(const Tensor& t) {
  if (!t.all_finite()) throw OmtError(OmtErrorKind::NonFinite, "refusing to encode non-finite tensor");
  std::vector<std::uint8_t> out;
  out.reserve(5 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kOmtMagic), std::end(kOmtMagic));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  auto put32 = [&out](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  for (auto e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) {
      throw OmtError(OmtErrorKind::ExtentOverflow, "extent " + std::to_string(e) + " exceeds u32");
    }
    put32(static_cast<std::uint32_t>(e));
  }
  for (double v : t.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) {
      throw OmtError(OmtErrorKind::NonFinite, "value " + std::to_string(v) + " overflows f32");
    }
    put32(std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Tensor decode_omt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kOmtMagic, 4) != 0) {
    throw OmtError(OmtErrorKind::BadMagic, "missing OMT1 magic");
  }
  if (bytes.size() < 5) throw OmtError(OmtErrorKind::Truncated, "header truncated before ndim");
  const std::size_t ndim = bytes[4];
  if (ndim < 1 || ndim > kMaxRank) {
    throw OmtError(OmtErrorKind::BadRank, "ndim " + std::to_string(ndim) + " outside 1..5");
  }
  const std::size_t header = 5 + 4 * ndim;
  if (bytes.size() < header) throw OmtError(OmtErrorKind::Truncated, "header truncated in extents");

  auto get32 = [&bytes](std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t{bytes[off + b]} << (8 * b);
    return v;
  };

  Shape shape(ndim);
  std::uint64_t numel = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint32_t e = get32(5 + 4 * i);
    if (e == 0) throw OmtError(OmtErrorKind::ZeroExtent, "extent " + std::to_string(i) + " is zero");
    if (numel > kOmtMaxElements / e) {
      throw OmtError(OmtErrorKind::ExtentOverflow, "declared element count exceeds limit");
    }
    numel *= e;
    shape[i] = e;
  }

  const std::uint64_t payload = numel * 4;
  const std::uint64_t available = bytes.size() - header;
  if (available < payload) {
    throw OmtError(OmtErrorKind::Truncated, "payload needs " + std::to_string(payload) +
                                                " bytes, file has " + std::to_string(available));
  }
  if (available > payload) {
    throw OmtError(OmtErrorKind::TrailingBytes,
                   std::to_string(available - payload) + " trailing bytes after payload");
  }

  std::vector<double> data(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    const float f = std::bit_cast<float>(get32(header + 4 * i));
    if (!std::isfinite(f)) {
      throw OmtError(OmtErrorKind::NonFinite, "non-finite value at element " + std::to_string(i));
    }
    data[i] = f;
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void save_omt(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_omt(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Tensor load_omt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_omt(bytes);
}

// The value a tensor element takes after an OMT round-trip.
inline double omt_narrow(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace omnivox
