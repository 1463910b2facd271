#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "neuroisp/isp.hpp"

namespace neuroisp::isp {

ColorClass color_at(io::BayerPattern pattern, int y, int x) {
  const int ry = y & 1, rx = x & 1;
  switch (pattern) {
    case io::BayerPattern::rggb:
      return ry == 0 ? (rx == 0 ? ColorClass::red : ColorClass::green_in_red_row)
                     : (rx == 0 ? ColorClass::green_in_blue_row : ColorClass::blue);
    case io::BayerPattern::bggr:
      return ry == 0 ? (rx == 0 ? ColorClass::blue : ColorClass::green_in_blue_row)
                     : (rx == 0 ? ColorClass::green_in_red_row : ColorClass::red);
    case io::BayerPattern::grbg:
      return ry == 0 ? (rx == 0 ? ColorClass::green_in_red_row : ColorClass::red)
                     : (rx == 0 ? ColorClass::blue : ColorClass::green_in_blue_row);
    case io::BayerPattern::gbrg:
      return ry == 0 ? (rx == 0 ? ColorClass::green_in_blue_row : ColorClass::blue)
                     : (rx == 0 ? ColorClass::red : ColorClass::green_in_red_row);
  }
  return ColorClass::red;
}

std::uint16_t quantize_u4_8(double gain) {
  if (gain < 0.0) fail(Errc::out_of_range, "gain must be non-negative");
  const double q = round_half_up(gain * 256.0);
  return static_cast<std::uint16_t>(std::min<double>(q, kAwbGainMax));
}

std::uint8_t quantize_u2_6(double lambda) {
  if (lambda < 0.0) fail(Errc::out_of_range, "lambda must be non-negative");
  const double q = round_half_up(lambda * 64.0);
  return static_cast<std::uint8_t>(std::min<double>(q, 255.0));
}

void IspConfig::validate(const io::FrameMeta& meta) const {
  meta.validate();
  const int maxval = (1 << meta.bit_depth) - 1;
  if (dpc.enabled && dpc.threshold < 0)
    fail(Errc::schema_violation, "dpc.threshold must be non-negative");
  if (awb.enabled) {
    if (awb.low >= awb.high) fail(Errc::schema_violation, "awb.low must be below awb.high");
    if (awb.low < 0 || awb.high > maxval)
      fail(Errc::schema_violation, "awb thresholds outside sample range");
    if (awb.stats_roi) {
      const Roi& roi = *awb.stats_roi;
      if (roi.width < 1 || roi.height < 1 || roi.x < 0 || roi.y < 0 ||
          roi.x + roi.width > meta.width || roi.y + roi.height > meta.height)
        fail(Errc::schema_violation, "awb.stats_roi outside the frame");
    }
  }
  if (nlm.enabled) {
    if (nlm.patch_radius < 1 || nlm.patch_radius > 2)
      fail(Errc::schema_violation, "nlm.patch_radius must be 1 or 2");
    if (nlm.search_radius < 1 || nlm.search_radius > 3)
      fail(Errc::schema_violation, "nlm.search_radius must be in [1,3]");
    if (!(nlm.strength > 0.0)) fail(Errc::schema_violation, "nlm.strength must be positive");
    if (2 * nlm.search_radius + 2 * nlm.patch_radius + 1 > kMaxWindow)
      fail(Errc::schema_violation, "nlm window exceeds line-buffer budget");
  }
  if (!gamma.lut.empty()) {
    if (static_cast<int>(gamma.lut.size()) != maxval + 1)
      fail(Errc::schema_violation, "gamma.lut must have 2^bit_depth entries");
    for (std::size_t i = 1; i < gamma.lut.size(); ++i)
      if (gamma.lut[i] < gamma.lut[i - 1])
        fail(Errc::schema_violation, "gamma.lut must be monotone non-decreasing");
    if (gamma.lut.back() > maxval)
      fail(Errc::schema_violation, "gamma.lut entries exceed sample range");
  } else if (!(gamma.exponent > 0.0)) {
    fail(Errc::schema_violation, "gamma.exponent must be positive");
  }
  const bool color_stage = nlm.enabled || gamma.enabled || csc.enabled || sharpen.enabled;
  if (color_stage && !demosaic.enabled)
    fail(Errc::schema_violation, "color stages require demosaic");
  if ((csc.enabled || sharpen.enabled) && meta.bit_depth != 8)
    fail(Errc::schema_violation, "csc/sharpen are defined for 8-bit pipelines");
  if (sharpen.enabled && !csc.enabled)
    fail(Errc::schema_violation, "sharpen operates on luma and requires csc");
  if (sharpen.enabled && quantize_u2_6(sharpen.lambda) > 255)
    fail(Errc::schema_violation, "sharpen.lambda exceeds U2.6");
  const int min_dim = std::min(meta.width, meta.height);
  if ((dpc.enabled || demosaic_enabled()) && min_dim < 1)
    fail(Errc::schema_violation, "frame too small");
}

// ---- DPC ----

namespace {

// Same-color 8-neighborhood on the step-2 lattice.
constexpr int kStep2[8][2] = {{-2, -2}, {-2, 0}, {-2, 2}, {0, -2},
                              {0, 2},  {2, -2}, {2, 0},  {2, 2}};
// Directional pairs: H, V, D1 (main diagonal), D2 (anti-diagonal).
constexpr int kPairs[4][2][2] = {{{0, -2}, {0, 2}},
                                 {{-2, 0}, {2, 0}},
                                 {{-2, -2}, {2, 2}},
                                 {{-2, 2}, {2, -2}}};

}  // namespace

bool dpc_detect(const Window5& window, int threshold) {
  const int center = window.at(0, 0);
  int lo = 1 << 16, hi = -1;
  for (const auto& d : kStep2) {
    const int v = window.at(d[0], d[1]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (center <= hi && center >= lo) return false;
  // Mean |center - member| per directional pair, doubled to stay integral.
  int min_grad2 = 1 << 30;
  for (const auto& pair : kPairs) {
    const int a = window.at(pair[0][0], pair[0][1]);
    const int b = window.at(pair[1][0], pair[1][1]);
    const int grad2 = std::abs(center - a) + std::abs(center - b);
    min_grad2 = std::min(min_grad2, grad2);
  }
  return min_grad2 > 2 * threshold;
}

std::uint16_t dpc_correct(const Window5& window) {
  int best_diff = 1 << 30;
  std::uint16_t best = 0;
  for (const auto& pair : kPairs) {
    const int a = window.at(pair[0][0], pair[0][1]);
    const int b = window.at(pair[1][0], pair[1][1]);
    const int diff = std::abs(a - b);
    if (diff < best_diff) {
      best_diff = diff;
      best = static_cast<std::uint16_t>(div_round_half_up(a + b, 2));
    }
  }
  return best;
}

// ---- AWB ----

std::array<std::uint16_t, 3> awb_gains(double mean_r, double mean_g, double mean_b) {
  if (!(mean_r > 0.0) || !(mean_b > 0.0))
    fail(Errc::degenerate_channel, "zero-mean channel in AWB statistics");
  return {quantize_u4_8(mean_g / mean_r), std::uint16_t{256}, quantize_u4_8(mean_g / mean_b)};
}

std::uint16_t awb_apply_value(std::uint16_t v, std::uint16_t gain_u4_8, int maxval) {
  const std::int64_t scaled = div_round_half_up(static_cast<std::int64_t>(v) * gain_u4_8, 256);
  return clamp_to<std::uint16_t>(scaled, 0, maxval);
}

// ---- demosaic ----

namespace {

// Malvar-He-Cutler 5x5 taps as integer numerators over 16.
constexpr std::array<int, 25> kGreenAtChroma = {
    0, 0, -2, 0, 0,
    0, 0,  4, 0, 0,
   -2, 4,  8, 4, -2,
    0, 0,  4, 0, 0,
    0, 0, -2, 0, 0};
constexpr std::array<int, 25> kChromaRow = {
    0,  0,  1,  0, 0,
    0, -2,  0, -2, 0,
   -2,  8, 10,  8, -2,
    0, -2,  0, -2, 0,
    0,  0,  1,  0, 0};
constexpr std::array<int, 25> kChromaColumn = {
    0,  0, -2,  0, 0,
    0, -2,  8, -2, 0,
    1,  0, 10,  0, 1,
    0, -2,  8, -2, 0,
    0,  0, -2,  0, 0};
constexpr std::array<int, 25> kChromaDiagonal = {
    0, 0, -3, 0,  0,
    0, 4,  0, 4,  0,
   -3, 0, 12, 0, -3,
    0, 4,  0, 4,  0,
    0, 0, -3, 0,  0};

std::uint16_t apply_kernel(const Window5& window, const std::array<int, 25>& kernel,
                           int maxval) {
  std::int64_t acc = 0;
  for (int i = 0; i < 25; ++i) acc += static_cast<std::int64_t>(kernel[i]) * window.w[i];
  return clamp_to<std::uint16_t>(div_round_half_up(acc, 16), 0, maxval);
}

}  // namespace

const std::array<int, 25>& mhc_kernel(MhcKernel which) {
  switch (which) {
    case MhcKernel::green_at_chroma: return kGreenAtChroma;
    case MhcKernel::chroma_row: return kChromaRow;
    case MhcKernel::chroma_column: return kChromaColumn;
    case MhcKernel::chroma_diagonal: return kChromaDiagonal;
  }
  return kGreenAtChroma;
}

RgbPix demosaic_window(const Window5& window, ColorClass center, int maxval) {
  const std::uint16_t c = window.at(0, 0);
  switch (center) {
    case ColorClass::red:
      return {c, apply_kernel(window, kGreenAtChroma, maxval),
              apply_kernel(window, kChromaDiagonal, maxval)};
    case ColorClass::blue:
      return {apply_kernel(window, kChromaDiagonal, maxval),
              apply_kernel(window, kGreenAtChroma, maxval), c};
    case ColorClass::green_in_red_row:
      // Red neighbors sit left/right, blue neighbors above/below.
      return {apply_kernel(window, kChromaRow, maxval), c,
              apply_kernel(window, kChromaColumn, maxval)};
    case ColorClass::green_in_blue_row:
      return {apply_kernel(window, kChromaColumn, maxval), c,
              apply_kernel(window, kChromaRow, maxval)};
  }
  return {c, c, c};
}

io::TriImage demosaic_frame_reference(const io::RawImage& frame, io::BayerPattern pattern,
                                      int maxval) {
  io::TriImage out{frame.width, frame.height, {}};
  out.px.resize(static_cast<std::size_t>(frame.width) * frame.height * 3);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      Window5 window;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int sy = std::clamp(y + dy, 0, frame.height - 1);
          const int sx = std::clamp(x + dx, 0, frame.width - 1);
          window.w[(dy + 2) * 5 + (dx + 2)] = frame.at(sy, sx);
        }
      const RgbPix rgb = demosaic_window(window, color_at(pattern, y, x), maxval);
      std::uint16_t* px = out.at(y, x);
      px[0] = rgb.r;
      px[1] = rgb.g;
      px[2] = rgb.b;
    }
  }
  return out;
}

// ---- NLM ----

std::array<std::uint8_t, 256> nlm_build_lut() {
  std::array<std::uint8_t, 256> lut{};
  for (int i = 0; i < 256; ++i)
    lut[i] = static_cast<std::uint8_t>(round_half_up(255.0 * std::exp(-i / 32.0)));
  return lut;
}

int nlm_weight_index(std::int64_t d2, double h, int patch_count) {
  // Normalized distance x = d2 / (h^2 * P) sampled at 1/32 steps on [0, 8).
  const double x = static_cast<double>(d2) / (h * h * static_cast<double>(patch_count));
  const double idx = std::floor(x * 32.0);
  if (idx >= 255.0) return 255;
  return static_cast<int>(idx);
}

std::uint8_t nlm_weight(std::int64_t d2, double h, int patch_count,
                        const std::array<std::uint8_t, 256>& lut) {
  return lut[nlm_weight_index(d2, h, patch_count)];
}

std::uint16_t nlm_filter_channel(const std::uint16_t* window, int s, int r, double h,
                                 const std::array<std::uint8_t, 256>& lut, NlmAccum* accum) {
  const int k = 2 * s + 2 * r + 1;
  const int c = s + r;  // center index in both axes
  const int patch_count = (2 * r + 1) * (2 * r + 1);
  std::uint64_t num = 0, den = 0;
  for (int qy = -s; qy <= s; ++qy) {
    for (int qx = -s; qx <= s; ++qx) {
      std::int64_t d2 = 0;
      for (int py = -r; py <= r; ++py) {
        const std::uint16_t* ref = &window[(c + py) * k + c];
        const std::uint16_t* cand = &window[(c + qy + py) * k + c + qx];
        for (int px = -r; px <= r; ++px) {
          const std::int64_t diff =
              static_cast<std::int64_t>(ref[px]) - static_cast<std::int64_t>(cand[px]);
          d2 += diff * diff;
        }
      }
      const std::uint8_t w = lut[nlm_weight_index(d2, h, patch_count)];
      num += static_cast<std::uint64_t>(w) * window[(c + qy) * k + c + qx];
      den += w;
      if (accum != nullptr) {
        accum->weight_sum += w;
        accum->weight_count += 1;
      }
    }
  }
  if (den == 0) return window[c * k + c];  // all candidates beyond the LUT tail
  return static_cast<std::uint16_t>(
      div_round_half_up(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)));
}

// ---- gamma ----

std::vector<std::uint16_t> gamma_build_lut(double gamma, int bit_depth) {
  if (!(gamma > 0.0)) fail(Errc::out_of_range, "gamma must be positive");
  const int maxval = (1 << bit_depth) - 1;
  std::vector<std::uint16_t> lut(maxval + 1);
  for (int i = 0; i <= maxval; ++i) {
    const double normalized = static_cast<double>(i) / maxval;
    lut[i] = static_cast<std::uint16_t>(
        round_half_up(std::pow(normalized, 1.0 / gamma) * maxval));
  }
  return lut;
}

// ---- color-space conversion ----

CscCoeffs quantize_csc(const CscConfig& cfg) {
  CscCoeffs out;
  for (int i = 0; i < 9; ++i)
    out.m[i] = static_cast<std::int32_t>(std::llround(cfg.matrix[i] * 16384.0));
  for (int i = 0; i < 3; ++i) out.offsets[i] = cfg.offsets[i];
  return out;
}

YccPix rgb_to_ycbcr(const RgbPix& rgb, const CscCoeffs& coeffs) {
  const std::int64_t in[3] = {rgb.r, rgb.g, rgb.b};
  std::int64_t out[3];
  for (int row = 0; row < 3; ++row) {
    std::int64_t acc = 0;
    for (int col = 0; col < 3; ++col) acc += static_cast<std::int64_t>(coeffs.m[row * 3 + col]) * in[col];
    out[row] = coeffs.offsets[row] + div_round_half_up(acc, 16384);
  }
  YccPix ycc;
  ycc.y = clamp_to<std::uint16_t>(out[0], 16, 235);
  ycc.cb = clamp_to<std::uint16_t>(out[1], 16, 240);
  ycc.cr = clamp_to<std::uint16_t>(out[2], 16, 240);
  return ycc;
}

// ---- sharpen ----

std::uint16_t sharpen_luma(const std::array<std::uint16_t, 9>& y_window,
                           std::uint8_t lambda_u2_6) {
  constexpr int kBlur[9] = {1, 2, 1, 2, 4, 2, 1, 2, 1};
  std::int64_t blur16 = 0;  // blur scaled by 16
  for (int i = 0; i < 9; ++i) blur16 += static_cast<std::int64_t>(kBlur[i]) * y_window[i];
  const std::int64_t y = y_window[4];
  // lambda*(y - blur) with lambda in U2.6: numerator / (64 * 16).
  const std::int64_t detail = div_round_half_up(lambda_u2_6 * (16 * y - blur16), 1024);
  return clamp_to<std::uint16_t>(y + detail, 16, 235);
}

// ---- stats serialization ----

std::string frame_stats_to_json(const FrameStats& stats) {
  nlohmann::json j;
  j["output_tokens"] = stats.output_tokens;
  if (stats.dpc_present) j["dpc"] = {{"corrected", stats.dpc_corrected}};
  if (stats.awb.present) {
    j["awb"] = {{"stats_valid", stats.awb.stats_valid},
                {"means", stats.awb.means},
                {"included", stats.awb.included},
                {"gains_applied", stats.awb.gains_applied},
                {"gains_computed", stats.awb.gains_computed}};
  }
  if (stats.nlm_present) j["nlm"] = {{"mean_weight", stats.nlm_mean_weight}};
  if (stats.gamma_present) {
    j["gamma"] = {{"hist_pre", stats.hist_pre_gamma}, {"hist_post", stats.hist_post_gamma}};
  }
  if (stats.csc_present) j["csc"] = {{"mean_y", stats.mean_y}};
  return j.dump(2);
}

}  // namespace neuroisp::isp
