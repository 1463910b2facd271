#include "neuroisp/imgio.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace neuroisp::io {

using nlohmann::json;

const char* bayer_pattern_name(BayerPattern p) {
  switch (p) {
    case BayerPattern::rggb: return "RGGB";
    case BayerPattern::bggr: return "BGGR";
    case BayerPattern::grbg: return "GRBG";
    case BayerPattern::gbrg: return "GBRG";
  }
  return "RGGB";
}

BayerPattern bayer_pattern_from_name(const std::string& name) {
  if (name == "RGGB") return BayerPattern::rggb;
  if (name == "BGGR") return BayerPattern::bggr;
  if (name == "GRBG") return BayerPattern::grbg;
  if (name == "GBRG") return BayerPattern::gbrg;
  fail(Errc::schema_violation, "unknown bayer_pattern '" + name + "'");
}

void FrameMeta::validate() const {
  if (width < 1 || height < 1) fail(Errc::schema_violation, "frame dims must be >= 1");
  if (bit_depth != 8 && bit_depth != 10 && bit_depth != 12)
    fail(Errc::schema_violation, "bit_depth must be 8, 10 or 12");
  if (exposure_us && exposure_us->second <= exposure_us->first)
    fail(Errc::schema_violation, "exposure interval must be non-empty");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path);
}

namespace {

std::string sidecar_path(const std::string& path) { return path + ".json"; }

void write_binary_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path);
}

std::string read_binary_file(const std::string& path) { return read_text_file(path); }

// Reads one whitespace-delimited ASCII token from a PNM header.
std::string pnm_token(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  if (start == pos) fail(Errc::malformed_record, "truncated PNM header");
  return buf.substr(start, pos - start);
}

int parse_pnm_int(const std::string& token) {
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    fail(Errc::malformed_record, "bad PNM header field '" + token + "'");
  }
}

}  // namespace

void save_bayer(const std::string& path, const RawImage& frame, const FrameMeta& meta) {
  meta.validate();
  if (frame.width != meta.width || frame.height != meta.height)
    fail(Errc::dimension_mismatch, "frame dims disagree with metadata");
  const int maxval = (1 << meta.bit_depth) - 1;
  std::string buf = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) +
                    "\n" + std::to_string(maxval) + "\n";
  for (std::uint16_t v : frame.px) {
    if (v > maxval) fail(Errc::depth_mismatch, "sample exceeds bit depth");
    if (maxval > 255) buf.push_back(static_cast<char>(v >> 8));  // PGM 16-bit is big-endian
    buf.push_back(static_cast<char>(v & 0xff));
  }
  write_binary_file(path, buf);

  json sidecar;
  sidecar["schema_version"] = 1;
  sidecar["width"] = meta.width;
  sidecar["height"] = meta.height;
  sidecar["bit_depth"] = meta.bit_depth;
  sidecar["bayer_pattern"] = bayer_pattern_name(meta.bayer_pattern);
  if (meta.exposure_us)
    sidecar["exposure_us"] = {meta.exposure_us->first, meta.exposure_us->second};
  write_text_file(sidecar_path(path), sidecar.dump(2) + "\n");
}

std::pair<RawImage, FrameMeta> load_bayer(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) fail(Errc::missing_sidecar, "no sidecar " + sidecar_path(path));
  json sidecar;
  try {
    side >> sidecar;
  } catch (const json::exception& e) {
    fail(Errc::schema_violation, sidecar_path(path) + ": " + e.what());
  }

  FrameMeta meta;
  try {
    meta.width = sidecar.at("width").get<int>();
    meta.height = sidecar.at("height").get<int>();
    meta.bit_depth = sidecar.at("bit_depth").get<int>();
    meta.bayer_pattern = bayer_pattern_from_name(sidecar.at("bayer_pattern").get<std::string>());
    if (sidecar.contains("exposure_us")) {
      auto arr = sidecar.at("exposure_us");
      meta.exposure_us = {arr.at(0).get<std::uint64_t>(), arr.at(1).get<std::uint64_t>()};
    }
  } catch (const json::exception& e) {
    fail(Errc::schema_violation, sidecar_path(path) + ": " + e.what());
  }
  meta.validate();

  const std::string buf = read_binary_file(path);
  std::size_t pos = 0;
  if (pnm_token(buf, pos) != "P5") fail(Errc::bad_magic, path + " is not a P5 PGM");
  const int width = parse_pnm_int(pnm_token(buf, pos));
  const int height = parse_pnm_int(pnm_token(buf, pos));
  const int maxval = parse_pnm_int(pnm_token(buf, pos));
  ++pos;  // single whitespace after maxval
  if (width != meta.width || height != meta.height)
    fail(Errc::schema_violation, path + ": dims disagree with sidecar");
  if (maxval != (1 << meta.bit_depth) - 1)
    fail(Errc::depth_mismatch, path + ": maxval " + std::to_string(maxval) +
                                   " does not match bit_depth " + std::to_string(meta.bit_depth));

  RawImage frame{width, height, {}};
  const std::size_t count = static_cast<std::size_t>(width) * height;
  const int bytes_per = maxval > 255 ? 2 : 1;
  if (buf.size() - pos != count * bytes_per)
    fail(Errc::malformed_record, path + ": pixel payload has wrong size");
  frame.px.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t v;
    if (bytes_per == 2) {
      v = static_cast<std::uint16_t>((static_cast<unsigned char>(buf[pos]) << 8) |
                                     static_cast<unsigned char>(buf[pos + 1]));
      pos += 2;
    } else {
      v = static_cast<unsigned char>(buf[pos++]);
    }
    if (v > maxval) fail(Errc::depth_mismatch, path + ": sample exceeds maxval");
    frame.px[i] = v;
  }
  return {std::move(frame), meta};
}

void save_rgb(const std::string& path, const TriImage& frame) {
  std::string buf = "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) +
                    "\n255\n";
  buf.reserve(buf.size() + frame.px.size());
  for (std::uint16_t v : frame.px) {
    if (v > 255) fail(Errc::depth_mismatch, "save_rgb expects 8-bit samples");
    buf.push_back(static_cast<char>(v));
  }
  write_binary_file(path, buf);
}

TriImage load_rgb(const std::string& path) {
  const std::string buf = read_binary_file(path);
  std::size_t pos = 0;
  if (pnm_token(buf, pos) != "P6") fail(Errc::bad_magic, path + " is not a P6 PPM");
  const int width = parse_pnm_int(pnm_token(buf, pos));
  const int height = parse_pnm_int(pnm_token(buf, pos));
  const int maxval = parse_pnm_int(pnm_token(buf, pos));
  ++pos;
  if (maxval != 255) fail(Errc::depth_mismatch, path + ": only 8-bit PPM supported");
  const std::size_t count = static_cast<std::size_t>(width) * height * 3;
  if (buf.size() - pos != count) fail(Errc::malformed_record, path + ": wrong payload size");
  TriImage frame{width, height, {}};
  frame.px.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    frame.px[i] = static_cast<unsigned char>(buf[pos + i]);
  return frame;
}

void save_ycbcr(const std::string& path, const TriImage& frame) {
  const std::size_t count = static_cast<std::size_t>(frame.width) * frame.height;
  std::string buf;
  buf.reserve(count * 3);
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint16_t v = frame.px[i * 3 + ch];
      if (v > 255) fail(Errc::depth_mismatch, "save_ycbcr expects 8-bit samples");
      buf.push_back(static_cast<char>(v));
    }
  write_binary_file(path, buf);

  json sidecar;
  sidecar["schema_version"] = 1;
  sidecar["width"] = frame.width;
  sidecar["height"] = frame.height;
  sidecar["bit_depth"] = 8;
  sidecar["format"] = "ycbcr444_planar";
  write_text_file(sidecar_path(path), sidecar.dump(2) + "\n");
}

TriImage load_ycbcr(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) fail(Errc::missing_sidecar, "no sidecar " + sidecar_path(path));
  json sidecar;
  side >> sidecar;
  const int width = sidecar.at("width").get<int>();
  const int height = sidecar.at("height").get<int>();
  if (sidecar.at("format").get<std::string>() != "ycbcr444_planar")
    fail(Errc::schema_violation, path + ": unexpected format");
  const std::string buf = read_binary_file(path);
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (buf.size() != count * 3) fail(Errc::malformed_record, path + ": wrong payload size");
  TriImage frame{width, height, {}};
  frame.px.resize(count * 3);
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < count; ++i)
      frame.px[i * 3 + ch] = static_cast<unsigned char>(buf[ch * count + i]);
  return frame;
}

// ---- named-tensor container ----

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f64: return 8;
    case Dtype::f32: return 4;
    case Dtype::u8: return 1;
    case Dtype::i32: return 4;
  }
  return 1;
}

std::size_t NamedTensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

const NamedTensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

constexpr char kTensorMagic[8] = {'N', 'I', 'S', 'P', 'T', 'E', 'N', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
  const unsigned char* p;
  std::size_t left;
  std::string path;

  void need(std::size_t n) {
    if (left < n) fail(Errc::malformed_record, path + ": truncated tensor file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

}  // namespace

void save_tensor_file(const std::string& path, const TensorFile& file) {
  std::string buf;
  buf.append(kTensorMagic, 8);
  put_u32(buf, file.version);
  put_u32(buf, static_cast<std::uint32_t>(file.tensors.size()));
  put_u32(buf, static_cast<std::uint32_t>(file.meta_json.size()));
  buf.append(file.meta_json);
  for (const NamedTensor& t : file.tensors) {
    put_u32(buf, static_cast<std::uint32_t>(t.name.size()));
    buf.append(t.name);
    buf.push_back(static_cast<char>(t.dtype));
    buf.push_back(static_cast<char>(t.dims.size()));
    for (std::uint32_t d : t.dims) put_u32(buf, d);
    if (t.bytes.size() != t.element_count() * dtype_size(t.dtype))
      fail(Errc::dimension_mismatch, "tensor '" + t.name + "' payload size mismatch");
    put_u64(buf, t.bytes.size());
    buf.append(reinterpret_cast<const char*>(t.bytes.data()), t.bytes.size());
  }
  write_binary_file(path, buf);
}

TensorFile load_tensor_file(const std::string& path) {
  const std::string raw = read_binary_file(path);
  if (raw.size() < 8 || std::memcmp(raw.data(), kTensorMagic, 8) != 0)
    fail(Errc::bad_magic, path + " is not a tensor container");
  Cursor cur{reinterpret_cast<const unsigned char*>(raw.data()) + 8, raw.size() - 8, path};
  TensorFile file;
  file.version = cur.u32();
  if (file.version != 1) fail(Errc::schema_violation, path + ": unsupported container version");
  const std::uint32_t count = cur.u32();
  const std::uint32_t meta_len = cur.u32();
  file.meta_json = cur.bytes(meta_len);
  file.tensors.resize(count);
  for (NamedTensor& t : file.tensors) {
    t.name = cur.bytes(cur.u32());
    const std::uint8_t dtype = cur.u8();
    if (dtype > 3) fail(Errc::schema_violation, path + ": unknown dtype");
    t.dtype = static_cast<Dtype>(dtype);
    const std::uint8_t ndim = cur.u8();
    t.dims.resize(ndim);
    for (auto& d : t.dims) d = cur.u32();
    const std::uint64_t len = cur.u64();
    if (len != t.element_count() * dtype_size(t.dtype))
      fail(Errc::malformed_record, path + ": tensor '" + t.name + "' payload size mismatch");
    const std::string payload = cur.bytes(len);
    t.bytes.assign(payload.begin(), payload.end());
  }
  return file;
}

std::vector<std::uint8_t> pack_f64(const std::vector<double>& v) {
  std::vector<std::uint8_t> out(v.size() * 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &v[i], 8);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

std::vector<std::uint8_t> pack_f32(const std::vector<float>& v) {
  std::vector<std::uint8_t> out(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &v[i], 4);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

std::vector<double> unpack_f64(const NamedTensor& t) {
  if (t.dtype != Dtype::f64) fail(Errc::schema_violation, "tensor '" + t.name + "' is not f64");
  std::vector<double> out(t.element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(t.bytes[i * 8 + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 8);
  }
  return out;
}

std::vector<float> unpack_f32(const NamedTensor& t) {
  if (t.dtype != Dtype::f32) fail(Errc::schema_violation, "tensor '" + t.name + "' is not f32");
  std::vector<float> out(t.element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(t.bytes[i * 4 + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

}  // namespace neuroisp::io
