#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neuroisp/common.hpp"
#include "neuroisp/imgio.hpp"

namespace neuroisp::isp {

// ---- Bayer phase ----

enum class ColorClass { red, green_in_red_row, green_in_blue_row, blue };

ColorClass color_at(io::BayerPattern pattern, int y, int x);
inline bool is_green(ColorClass c) {
  return c == ColorClass::green_in_red_row || c == ColorClass::green_in_blue_row;
}

// ---- configuration ----

struct Roi {
  int x = 0, y = 0, width = 0, height = 0;

  bool contains(int px, int py) const {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
};

struct DpcConfig {
  bool enabled = true;
  int threshold = 30;  // T_dpc, in sample units
};

struct AwbConfig {
  bool enabled = true;
  bool auto_gains = true;  // gray-world state machine; false holds the configured gains
  int low = 10;            // inclusive exclusion thresholds
  int high = 245;
  std::array<std::uint16_t, 3> gains{256, 256, 256};  // U4.8 (256 = 1.0)
  std::optional<Roi> stats_roi;                       // metering window
};

struct DemosaicConfig {
  bool enabled = true;
};

struct NlmConfig {
  bool enabled = true;
  int search_radius = 3;  // s
  int patch_radius = 1;   // r
  double strength = 10.0; // h
};

struct GammaConfig {
  bool enabled = true;
  double exponent = 2.2;
  std::vector<std::uint16_t> lut;  // explicit LUT overrides the exponent when non-empty
};

struct CscConfig {
  bool enabled = true;
  // BT.601 studio swing defaults; rows Y, Cb, Cr.
  std::array<double, 9> matrix{0.257, 0.504, 0.098, -0.148, -0.291, 0.439, 0.439, -0.368, -0.071};
  std::array<int, 3> offsets{16, 128, 128};
};

struct SharpenConfig {
  bool enabled = true;
  double lambda = 1.0;  // quantized to U2.6
};

struct IspConfig {
  DpcConfig dpc;
  AwbConfig awb;
  DemosaicConfig demosaic;
  NlmConfig nlm;
  GammaConfig gamma;
  CscConfig csc;
  SharpenConfig sharpen;

  // Validates both internal invariants and feasibility for the given frame
  // geometry (window sizes vs dims, bit depth of the color stages).
  void validate(const io::FrameMeta& meta) const;
};

constexpr int kAwbGainMax = 4095;  // U4.8 ceiling, 15.996

std::uint16_t quantize_u4_8(double gain);
std::uint8_t quantize_u2_6(double lambda);

// ---- per-stage arithmetic (pure, unit-testable) ----

// 5x5 single-channel window, center at (2,2).
struct Window5 {
  std::array<std::uint16_t, 25> w{};
  std::uint16_t at(int dy, int dx) const { return w[(dy + 2) * 5 + (dx + 2)]; }
};

// A pixel is defective when it is a strict extremum of its eight same-color
// step-2 neighbors and no directional pair explains it: the minimum over
// the four pair gradients (mean absolute center-to-member difference for
// H, V and both diagonals) must exceed the threshold.
bool dpc_detect(const Window5& window, int threshold);

// Replacement value: mean (round-half-up) of the directional pair with the
// smallest internal absolute difference; ties resolved in order H,V,D1,D2.
std::uint16_t dpc_correct(const Window5& window);

// Gray-world gains from per-channel means, quantized to U4.8 and clamped.
// mean_r/mean_b of zero is a degenerate channel (caller keeps old gains).
std::array<std::uint16_t, 3> awb_gains(double mean_r, double mean_g, double mean_b);

std::uint16_t awb_apply_value(std::uint16_t v, std::uint16_t gain_u4_8, int maxval);

// Malvar-He-Cutler demosaic on a 5x5 Bayer window. Kernels are the
// published 5x5 taps held as integer numerators over 16 (DC gain exactly
// one); outputs round-half-up and clamp to [0, maxval].
io::TriImage demosaic_frame_reference(const io::RawImage& frame, io::BayerPattern pattern,
                                      int maxval);  // whole-frame helper for tests/tools

struct RgbPix {
  std::uint16_t r = 0, g = 0, b = 0;
  bool operator==(const RgbPix&) const = default;
};

RgbPix demosaic_window(const Window5& window, ColorClass center, int maxval);

// The four distinct kernel shapes (green-at-chroma, chroma-horizontal,
// chroma-vertical, chroma-diagonal) as numerators over 16.
enum class MhcKernel { green_at_chroma, chroma_row, chroma_column, chroma_diagonal };
const std::array<int, 25>& mhc_kernel(MhcKernel which);

// NLM exponential weight table: 256 entries, entry i = round(255*exp(-i/32)),
// i.e. normalized squared patch distance sampled on [0, 8).
std::array<std::uint8_t, 256> nlm_build_lut();

int nlm_weight_index(std::int64_t d2, double h, int patch_count);
std::uint8_t nlm_weight(std::int64_t d2, double h, int patch_count,
                        const std::array<std::uint8_t, 256>& lut);

struct NlmAccum {
  std::uint64_t weight_sum = 0;
  std::uint64_t weight_count = 0;
};

// Filters one channel of a (2s+2r+1)^2 window (values indexed row-major,
// stride k = 2s+2r+1). Integer accumulation, round-half-up at the division.
std::uint16_t nlm_filter_channel(const std::uint16_t* window, int s, int r, double h,
                                 const std::array<std::uint8_t, 256>& lut, NlmAccum* accum);

// Gamma LUT: entry i = round_half_up((i/max)^(1/gamma) * max).
std::vector<std::uint16_t> gamma_build_lut(double gamma, int bit_depth);

// S1.14 color-space conversion.
struct CscCoeffs {
  std::array<std::int32_t, 9> m{};  // quantized matrix, round-half-away-from-zero
  std::array<std::int32_t, 3> offsets{};
};

CscCoeffs quantize_csc(const CscConfig& cfg);

struct YccPix {
  std::uint16_t y = 0, cb = 0, cr = 0;
  bool operator==(const YccPix&) const = default;
};

YccPix rgb_to_ycbcr(const RgbPix& rgb, const CscCoeffs& coeffs);

// Unsharp mask on a 3x3 luma window (blur taps 1-2-1/2-4-2/1-2-1 over 16),
// y' = clamp(y + round_half_up(lambda*(y - blur)), 16, 235).
std::uint16_t sharpen_luma(const std::array<std::uint16_t, 9>& y_window,
                           std::uint8_t lambda_u2_6);

// ---- streaming pipeline ----

// One pixel in flight. sof marks the first pixel of a frame, eol the last
// pixel of each line.
template <typename S>
struct Token {
  S v{};
  bool sof = false;
  bool eol = false;
};

using RawTok = Token<std::uint16_t>;
using RgbTok = Token<RgbPix>;
using YccTok = Token<YccPix>;

constexpr int kMaxWindow = 11;

// Centered k x k neighborhood with replicated borders, plus the center's
// coordinates and framing flags.
template <typename S>
struct WindowTok {
  std::array<S, kMaxWindow * kMaxWindow> w{};
  int k = 0;
  std::uint16_t cx = 0, cy = 0;
  bool sof = false, eol = false;

  const S& at(int wy, int wx) const { return w[wy * k + wx]; }
  S& at(int wy, int wx) { return w[wy * k + wx]; }
};

// Bounded single-producer/single-consumer queue modeling a valid/ready
// port pair: try_push is the producer seeing ready, try_pop the consumer
// seeing valid. A full queue never overwrites an unconsumed slot.
template <typename T>
class SpscChannel {
 public:
  explicit SpscChannel(std::size_t capacity = 1) : buf_(capacity + 1) {}

  bool try_push(const T& v) {
    const std::size_t tail = tail_.load(std::memory_order_relaxed);
    const std::size_t next = (tail + 1) % buf_.size();
    if (next == head_.load(std::memory_order_acquire)) return false;
    buf_[tail] = v;
    tail_.store(next, std::memory_order_release);
    return true;
  }

  bool try_pop(T& out) {
    const std::size_t head = head_.load(std::memory_order_relaxed);
    if (head == tail_.load(std::memory_order_acquire)) return false;
    out = buf_[head];
    head_.store((head + 1) % buf_.size(), std::memory_order_release);
    return true;
  }

  bool empty() const {
    return head_.load(std::memory_order_acquire) == tail_.load(std::memory_order_acquire);
  }

  bool full() const {
    const std::size_t tail = tail_.load(std::memory_order_acquire);
    return (tail + 1) % buf_.size() == head_.load(std::memory_order_acquire);
  }

  std::size_t occupancy() const {
    const std::size_t h = head_.load(std::memory_order_acquire);
    const std::size_t t = tail_.load(std::memory_order_acquire);
    return (t + buf_.size() - h) % buf_.size();
  }

  std::size_t capacity() const { return buf_.size() - 1; }

  void close() { closed_.store(true, std::memory_order_release); }
  bool closed() const { return closed_.load(std::memory_order_acquire); }
  bool drained() const { return closed() && empty(); }

 private:
  std::vector<T> buf_;
  std::atomic<std::size_t> head_{0};
  std::atomic<std::size_t> tail_{0};
  std::atomic<bool> closed_{false};
};

class Stage {
 public:
  virtual ~Stage() = default;
  // Performs at most one token of work; returns true when progress was made.
  virtual bool step() = 0;
  virtual bool done() const = 0;
  // Lines of pixel storage held by the stage (memory audit).
  virtual std::size_t buffered_lines() const { return 0; }
  virtual const char* name() const = 0;
};

// Deterministic stall/readiness schedule for fuzzing: the sink consumes a
// token only when the seeded RNG says ready; poll order may be shuffled.
struct StallSchedule {
  std::uint64_t seed = 0;
  double stall_prob = 0.0;
  bool shuffle_polling = false;
};

enum class OutputKind { raw, rgb, ycbcr };

struct AwbFrameStats {
  bool present = false;
  bool stats_valid = false;
  std::array<double, 3> means{0, 0, 0};
  std::array<std::uint64_t, 3> included{0, 0, 0};
  std::array<std::uint16_t, 3> gains_applied{256, 256, 256};
  std::array<std::uint16_t, 3> gains_computed{256, 256, 256};
};

struct FrameStats {
  std::uint64_t dpc_corrected = 0;
  bool dpc_present = false;
  AwbFrameStats awb;
  double nlm_mean_weight = 0.0;  // of U0.8 weights, normalized to [0,1]
  bool nlm_present = false;
  std::vector<std::uint64_t> hist_pre_gamma;
  std::vector<std::uint64_t> hist_post_gamma;
  bool gamma_present = false;
  double mean_y = 0.0;
  bool csc_present = false;
  std::uint64_t output_tokens = 0;
};

std::string frame_stats_to_json(const FrameStats& stats);

struct FrameOutput {
  OutputKind kind = OutputKind::rgb;
  io::RawImage raw;
  io::TriImage rgb;
  io::TriImage ycc;
  FrameStats stats;
};

// Streaming pipeline instance bound to one frame geometry. Stage state
// (AWB gain latch, statistics) persists across frames; configuration
// changes land only at the next frame's sof.
class Pipeline {
 public:
  Pipeline(const IspConfig& config, const io::FrameMeta& meta);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  // Queues a configuration swap; it takes effect at the next run_frame.
  void update_config(const IspConfig& config);
  const IspConfig& config() const;

  FrameOutput run_frame(const io::RawImage& frame);
  FrameOutput run_frame(const io::RawImage& frame, const StallSchedule& schedule);

  OutputKind output_kind() const;
  // Total lines buffered across stages plus channel slots (memory audit).
  std::size_t buffered_lines() const;
  std::size_t channel_slots() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;

  friend std::vector<FrameOutput> run_frames_threaded(const std::vector<io::RawImage>& frames,
                                                      const io::FrameMeta& meta,
                                                      const IspConfig& config);
};

// Convenience single-frame entry point.
FrameOutput run_pipeline(const io::RawImage& frame, const io::FrameMeta& meta,
                         const IspConfig& config);

// Runs a frame sequence with one thread per stage (same results as the
// polled schedule; exercised by the concurrency equivalence tests).
std::vector<FrameOutput> run_frames_threaded(const std::vector<io::RawImage>& frames,
                                             const io::FrameMeta& meta, const IspConfig& config);

// Raster-order tokenization helpers.
std::vector<RawTok> stream_from_frame(const io::RawImage& frame);
io::RawImage frame_from_stream(const std::vector<RawTok>& tokens, int width, int height);

}  // namespace neuroisp::isp
