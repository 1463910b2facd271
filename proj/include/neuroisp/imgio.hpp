#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neuroisp/common.hpp"

namespace neuroisp::io {

enum class BayerPattern { rggb, bggr, grbg, gbrg };

const char* bayer_pattern_name(BayerPattern p);
BayerPattern bayer_pattern_from_name(const std::string& name);

struct FrameMeta {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8, 10 or 12
  BayerPattern bayer_pattern = BayerPattern::rggb;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> exposure_us;  // [t0, t1)

  void validate() const;
};

// Single-channel image (Bayer raw or gray), row-major.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> px;

  std::uint16_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * width + x]; }
};

// Interleaved three-channel image (RGB or YCbCr).
struct TriImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> px;  // 3 * width * height

  const std::uint16_t* at(int y, int x) const {
    return &px[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  std::uint16_t* at(int y, int x) { return &px[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

// PGM (P5) + JSON sidecar. Samples above 8 bits are stored as 16-bit
// big-endian per the PGM convention; every sample is validated against the
// sidecar bit depth.
std::pair<RawImage, FrameMeta> load_bayer(const std::string& path);
void save_bayer(const std::string& path, const RawImage& frame, const FrameMeta& meta);

// PPM (P6), binary, 8-bit, no comments, deterministic bytes.
void save_rgb(const std::string& path, const TriImage& frame);
TriImage load_rgb(const std::string& path);

// Planar YCbCr 4:4:4, one byte per sample, plus JSON sidecar.
void save_ycbcr(const std::string& path, const TriImage& frame);
TriImage load_ycbcr(const std::string& path);

// Little-endian named-tensor container; backs model checkpoints and voxel
// grid dumps. Layout: magic "NISPTEN1", u32 version, u32 tensor count,
// u32 meta length + JSON bytes, then per tensor: u32 name length + name,
// u8 dtype, u8 ndim, u32 dims[ndim], u64 byte length, raw data.
enum class Dtype : std::uint8_t { f64 = 0, f32 = 1, u8 = 2, i32 = 3 };

std::size_t dtype_size(Dtype d);

struct NamedTensor {
  std::string name;
  Dtype dtype = Dtype::f64;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;  // little-endian payload

  std::size_t element_count() const;
};

struct TensorFile {
  std::uint32_t version = 1;
  std::string meta_json;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path);

// Helpers packing host scalars into little-endian tensor payloads.
std::vector<std::uint8_t> pack_f64(const std::vector<double>& v);
std::vector<std::uint8_t> pack_f32(const std::vector<float>& v);
std::vector<double> unpack_f64(const NamedTensor& t);
std::vector<float> unpack_f32(const NamedTensor& t);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace neuroisp::io
