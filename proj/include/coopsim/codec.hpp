#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "coopsim/errors.hpp"
#include "coopsim/feature_map.hpp"

namespace coopsim {

// Lossy feature-map codec: drop trailing channels, average-pool spatially,
// then quantize each kept channel to a fixed bit width against its own
// min/max. The decoder nearest-neighbor upsamples back to the full grid.
struct CodecSpec {
  int pool_h = 1;
  int pool_w = 1;
  int bits = 32;          // 32 means raw float payload, no quantization
  int keep_channels = 0;  // 0 keeps all channels

  void validate(int total_channels) const {
    if (pool_h < 1 || pool_h > 255 || pool_w < 1 || pool_w > 255)
      throw UsageError("codec: pool factors must be in [1, 255]");
    if (bits != 1 && bits != 2 && bits != 4 && bits != 8 && bits != 16 &&
        bits != 32)
      throw UsageError("codec: bits must be one of 1,2,4,8,16,32");
    if (keep_channels < 0 || keep_channels > total_channels)
      throw UsageError("codec: keep_channels out of range");
    if (total_channels > 0 && kept(total_channels) == 0)
      throw UsageError("codec: refusing to keep zero channels");
  }

  int kept(int total_channels) const {
    return keep_channels == 0 ? total_channels : keep_channels;
  }

  double nominal_rate(int total_channels) const {
    return static_cast<double>(pool_h) * pool_w * (32.0 / bits) *
           (static_cast<double>(total_channels) / kept(total_channels));
  }
};

// Parsed form of a transmitted feature blob. The wire layout is:
//   "CFTR" | u16 version | u16 H | u16 W | u16 C_orig | u16 C_kept |
//   u8 pool_h | u8 pool_w | u8 bits | (f32 scale, f32 offset) * C_kept |
//   payload | u32 crc32
// all little-endian, crc over everything before it.
struct CompressedBlob {
  std::uint16_t version = 1;
  std::uint16_t grid_h = 0;
  std::uint16_t grid_w = 0;
  std::uint16_t channels_orig = 0;
  std::uint16_t channels_kept = 0;
  std::uint8_t pool_h = 1;
  std::uint8_t pool_w = 1;
  std::uint8_t bits = 32;
  std::vector<float> scale;   // per kept channel
  std::vector<float> offset;  // per kept channel
  std::vector<std::uint8_t> payload;

  int pooled_h() const { return (grid_h + pool_h - 1) / pool_h; }
  int pooled_w() const { return (grid_w + pool_w - 1) / pool_w; }

  std::size_t payload_bytes() const { return payload.size(); }

  std::size_t header_bytes() const {
    return 4 + 2 * 5 + 3 + static_cast<std::size_t>(channels_kept) * 8;
  }

  std::size_t wire_bytes() const { return header_bytes() + payload.size() + 4; }

  std::vector<std::uint8_t> serialize() const;
  static CompressedBlob parse(std::span<const std::uint8_t> bytes);
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
  std::string what;

  explicit ByteReader(std::span<const std::uint8_t> d, std::string label)
      : data(d), what(std::move(label)) {}

  void need(std::size_t n) const {
    if (pos + n > data.size())
      throw TruncatedError(what + ": truncated at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    const std::uint32_t b = u32();
    float v;
    std::memcpy(&v, &b, 4);
    return v;
  }
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

inline std::vector<std::uint8_t> CompressedBlob::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(wire_bytes());
  out.insert(out.end(), {'C', 'F', 'T', 'R'});
  detail::put_u16(out, version);
  detail::put_u16(out, grid_h);
  detail::put_u16(out, grid_w);
  detail::put_u16(out, channels_orig);
  detail::put_u16(out, channels_kept);
  out.push_back(pool_h);
  out.push_back(pool_w);
  out.push_back(bits);
  for (int c = 0; c < channels_kept; ++c) {
    detail::put_f32(out, scale[c]);
    detail::put_f32(out, offset[c]);
  }
  out.insert(out.end(), payload.begin(), payload.end());
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

inline CompressedBlob CompressedBlob::parse(
    std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "feature blob");
  r.need(4);
  if (std::memcmp(bytes.data(), "CFTR", 4) != 0)
    throw DataError("feature blob: bad magic");
  r.pos = 4;
  CompressedBlob blob;
  blob.version = r.u16();
  if (blob.version != 1)
    throw VersionError("feature blob: unsupported version " +
                       std::to_string(blob.version));
  blob.grid_h = r.u16();
  blob.grid_w = r.u16();
  blob.channels_orig = r.u16();
  blob.channels_kept = r.u16();
  blob.pool_h = r.u8();
  blob.pool_w = r.u8();
  blob.bits = r.u8();
  if (blob.pool_h == 0 || blob.pool_w == 0)
    throw DataError("feature blob: zero pool factor");
  if (blob.channels_kept == 0 || blob.channels_kept > blob.channels_orig)
    throw DataError("feature blob: bad channel counts");
  blob.scale.resize(blob.channels_kept);
  blob.offset.resize(blob.channels_kept);
  for (int c = 0; c < blob.channels_kept; ++c) {
    blob.scale[c] = r.f32();
    blob.offset[c] = r.f32();
  }
  if (bytes.size() < r.pos + 4)
    throw TruncatedError("feature blob: missing checksum");
  const std::size_t payload_len = bytes.size() - r.pos - 4;
  const std::size_t expected =
      (static_cast<std::size_t>(blob.pooled_h()) * blob.pooled_w() *
           blob.channels_kept * blob.bits + 7) / 8;
  if (payload_len != expected)
    throw DataError("feature blob: payload is " + std::to_string(payload_len) +
                    " bytes, descriptor implies " + std::to_string(expected));
  blob.payload.assign(bytes.begin() + r.pos, bytes.end() - 4);
  std::uint32_t trailer = 0;
  for (int i = 0; i < 4; ++i)
    trailer |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i])
               << (8 * i);
  const std::uint32_t computed =
      detail::crc32_of(bytes.first(bytes.size() - 4));
  if (trailer != computed) throw ChecksumError("feature blob: crc mismatch");
  return blob;
}

// Average-pools over valid cells (edge blocks shorter than the pool factor
// average over what exists, so constant maps stay exactly constant), then
// quantizes. With bits == 32 the payload is raw little-endian floats.
inline CompressedBlob encode_features(const BevFeatureMap& map,
                                      const CodecSpec& spec) {
  const int channels = map.grid.channels();
  spec.validate(channels);
  const int h = map.grid.height(), w = map.grid.width();
  const int kept = spec.kept(channels);

  CompressedBlob blob;
  blob.grid_h = static_cast<std::uint16_t>(h);
  blob.grid_w = static_cast<std::uint16_t>(w);
  blob.channels_orig = static_cast<std::uint16_t>(channels);
  blob.channels_kept = static_cast<std::uint16_t>(kept);
  blob.pool_h = static_cast<std::uint8_t>(spec.pool_h);
  blob.pool_w = static_cast<std::uint8_t>(spec.pool_w);
  blob.bits = static_cast<std::uint8_t>(spec.bits);

  const int ph = blob.pooled_h(), pw = blob.pooled_w();
  std::vector<double> pooled(static_cast<std::size_t>(ph) * pw * kept, 0.0);
  for (int pi = 0; pi < ph; ++pi) {
    for (int pj = 0; pj < pw; ++pj) {
      const int i0 = pi * spec.pool_h;
      const int j0 = pj * spec.pool_w;
      const int i1 = std::min(h, i0 + spec.pool_h);
      const int j1 = std::min(w, j0 + spec.pool_w);
      const double count = static_cast<double>(i1 - i0) * (j1 - j0);
      for (int c = 0; c < kept; ++c) {
        double s = 0.0;
        for (int i = i0; i < i1; ++i)
          for (int j = j0; j < j1; ++j) s += map.at(i, j, c);
        pooled[(static_cast<std::size_t>(pi) * pw + pj) * kept + c] =
            s / count;
      }
    }
  }

  blob.scale.assign(kept, 1.0f);
  blob.offset.assign(kept, 0.0f);

  if (spec.bits == 32) {
    blob.payload.reserve(pooled.size() * 4);
    for (double v : pooled)
      detail::put_f32(blob.payload, static_cast<float>(v));
    return blob;
  }

  const std::uint32_t qmax = (1u << spec.bits) - 1u;
  std::vector<double> lo(kept, std::numeric_limits<double>::infinity());
  std::vector<double> hi(kept, -std::numeric_limits<double>::infinity());
  for (int pi = 0; pi < ph; ++pi)
    for (int pj = 0; pj < pw; ++pj)
      for (int c = 0; c < kept; ++c) {
        const double v =
            pooled[(static_cast<std::size_t>(pi) * pw + pj) * kept + c];
        lo[c] = std::min(lo[c], v);
        hi[c] = std::max(hi[c], v);
      }
  for (int c = 0; c < kept; ++c) {
    const double range = hi[c] - lo[c];
    blob.offset[c] = static_cast<float>(lo[c]);
    blob.scale[c] = range > 0.0 ? static_cast<float>(range / qmax) : 0.0f;
  }

  // Channel-major bit packing, most significant bit first.
  const std::size_t nvalues = pooled.size();
  blob.payload.assign((nvalues * spec.bits + 7) / 8, 0);
  std::size_t bitpos = 0;
  for (int c = 0; c < kept; ++c) {
    for (int pi = 0; pi < ph; ++pi) {
      for (int pj = 0; pj < pw; ++pj) {
        const double v =
            pooled[(static_cast<std::size_t>(pi) * pw + pj) * kept + c];
        std::uint32_t q = 0;
        if (blob.scale[c] > 0.0f) {
          const double t = (v - blob.offset[c]) / blob.scale[c];
          const long long r = std::llround(t);
          q = static_cast<std::uint32_t>(
              std::clamp<long long>(r, 0, static_cast<long long>(qmax)));
        }
        for (int bit = spec.bits - 1; bit >= 0; --bit) {
          if ((q >> bit) & 1u)
            blob.payload[bitpos >> 3] |=
                static_cast<std::uint8_t>(0x80u >> (bitpos & 7));
          ++bitpos;
        }
      }
    }
  }
  return blob;
}

// Inverse of encode_features: dequantize, nearest-neighbor upsample, zero
// the dropped channels. The grid argument must describe the same shape the
// encoder saw; a mismatch means the pipeline wired frames together wrong.
inline BevFeatureMap decode_features(const CompressedBlob& blob,
                                     const GridSpec& grid,
                                     std::string frame_id = "") {
  grid.validate();
  if (grid.height() != blob.grid_h || grid.width() != blob.grid_w ||
      grid.channels() != blob.channels_orig) {
    throw InternalError("decode_features: grid shape does not match blob");
  }
  const int kept = blob.channels_kept;
  const int ph = blob.pooled_h(), pw = blob.pooled_w();
  const std::size_t nvalues = static_cast<std::size_t>(ph) * pw * kept;
  std::vector<double> pooled(nvalues, 0.0);

  if (blob.bits == 32) {
    if (blob.payload.size() != nvalues * 4)
      throw DataError("feature blob: float payload size mismatch");
    for (std::size_t k = 0; k < nvalues; ++k) {
      std::uint32_t b = 0;
      for (int i = 0; i < 4; ++i)
        b |= static_cast<std::uint32_t>(blob.payload[k * 4 + i]) << (8 * i);
      float v;
      std::memcpy(&v, &b, 4);
      pooled[k] = v;
    }
  } else {
    std::size_t bitpos = 0;
    for (int c = 0; c < kept; ++c) {
      for (int pi = 0; pi < ph; ++pi) {
        for (int pj = 0; pj < pw; ++pj) {
          std::uint32_t q = 0;
          for (int bit = 0; bit < blob.bits; ++bit) {
            q <<= 1;
            q |= (blob.payload[bitpos >> 3] >> (7 - (bitpos & 7))) & 1u;
            ++bitpos;
          }
          pooled[(static_cast<std::size_t>(pi) * pw + pj) * kept + c] =
              static_cast<double>(blob.offset[c]) +
              static_cast<double>(q) * blob.scale[c];
        }
      }
    }
  }

  BevFeatureMap map(grid, std::move(frame_id));
  const int h = grid.height(), w = grid.width();
  for (int i = 0; i < h; ++i) {
    const int pi = i / blob.pool_h;
    for (int j = 0; j < w; ++j) {
      const int pj = j / blob.pool_w;
      for (int c = 0; c < kept; ++c) {
        map.at(i, j, c) = static_cast<float>(
            pooled[(static_cast<std::size_t>(pi) * pw + pj) * kept + c]);
      }
    }
  }

  // Quantization leaves rounding residue in cells that were never occupied.
  // The occupancy flag survives exactly (its range starts at zero), so use
  // it to blank vacuous cells; consumers rely on all-zero meaning absent.
  const int ch = grid.channels();
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (map.at(i, j, kChOccupancy) <= 0.0f)
        for (int c = 0; c < ch; ++c) map.at(i, j, c) = 0.0f;
  return map;
}

// Size reduction achieved on the feature payload: raw map bytes over
// quantized payload bytes. Wire framing (descriptor and checksum) is
// excluded here; it is accounted for in transmission byte counts instead.
inline double compression_rate(const BevFeatureMap& original,
                               const CompressedBlob& blob) {
  if (blob.payload.empty())
    throw InternalError("compression_rate: empty payload");
  return static_cast<double>(original.byte_size()) /
         static_cast<double>(blob.payload.size());
}

}  // namespace coopsim
