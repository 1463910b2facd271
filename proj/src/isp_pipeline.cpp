#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "neuroisp/isp.hpp"

namespace neuroisp::isp {

std::vector<RawTok> stream_from_frame(const io::RawImage& frame) {
  std::vector<RawTok> tokens;
  tokens.reserve(static_cast<std::size_t>(frame.width) * frame.height);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      tokens.push_back(RawTok{frame.at(y, x), y == 0 && x == 0, x == frame.width - 1});
  return tokens;
}

io::RawImage frame_from_stream(const std::vector<RawTok>& tokens, int width, int height) {
  if (tokens.size() != static_cast<std::size_t>(width) * height)
    fail(Errc::framing_error, "token count does not match frame dims");
  io::RawImage frame{width, height, {}};
  frame.px.resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int x = static_cast<int>(i) % width;
    const RawTok& t = tokens[i];
    if (t.sof != (i == 0) || t.eol != (x == width - 1))
      fail(Errc::framing_error, "inconsistent sof/eol flags");
    frame.px[i] = t.v;
  }
  return frame;
}

namespace {

// ---- window former ----
//
// Ring of k full lines. A window for center (cy,cx) is emitted once the
// pixel (min(cy+k/2,H-1), min(cx+k/2,W-1)) has been accepted; border
// windows replicate the nearest stored row/column. Input acceptance is
// gated so a line still needed by a pending window is never overwritten,
// which also bounds the stage to k lines of storage.
template <typename S>
class WindowFormerStage final : public Stage {
 public:
  WindowFormerStage(SpscChannel<Token<S>>& in, SpscChannel<WindowTok<S>>& out, int k, int width,
                    int height, const char* stage_name)
      : in_(in), out_(out), k_(k), hk_(k / 2), width_(width), height_(height),
        ring_(static_cast<std::size_t>(k) * width), name_(stage_name) {}

  bool step() override {
    if (closed_output_) return false;
    const std::size_t total = static_cast<std::size_t>(width_) * height_;

    if (window_ready() && !out_.full()) {
      emit_window();
      if (emitted_ == total) {  // frame flushed; accept the next one
        emitted_ = 0;
        accepted_ = 0;
      }
      return true;
    }

    if (accepted_ < total && accept_allowed()) {
      Token<S> tok;
      if (in_.try_pop(tok)) {
        const int row = static_cast<int>(accepted_) / width_;
        const int col = static_cast<int>(accepted_) % width_;
        if (tok.sof != (accepted_ == 0) || tok.eol != (col == width_ - 1))
          fail(Errc::framing_error, std::string(name_) + ": inconsistent sof/eol flags");
        ring_[static_cast<std::size_t>(row % k_) * width_ + col] = tok.v;
        ++accepted_;
        return true;
      }
    }

    if (in_.drained() && accepted_ == 0 && emitted_ == 0) {
      out_.close();
      closed_output_ = true;
      return true;
    }
    return false;
  }

  bool done() const override { return closed_output_; }
  std::size_t buffered_lines() const override { return static_cast<std::size_t>(k_); }
  const char* name() const override { return name_; }

 private:
  bool window_ready() const {
    const std::size_t total = static_cast<std::size_t>(width_) * height_;
    if (emitted_ >= total) return false;
    const int cy = static_cast<int>(emitted_) / width_;
    const int cx = static_cast<int>(emitted_) % width_;
    const int need_row = std::min(cy + hk_, height_ - 1);
    const int need_col = std::min(cx + hk_, width_ - 1);
    return accepted_ > static_cast<std::size_t>(need_row) * width_ + need_col;
  }

  bool accept_allowed() const {
    const int row = static_cast<int>(accepted_) / width_;
    if (row < k_) return true;
    const int next_emit_row = static_cast<int>(emitted_) / width_;
    return row - k_ < std::max(next_emit_row - hk_, 0);
  }

  void emit_window() {
    const int cy = static_cast<int>(emitted_) / width_;
    const int cx = static_cast<int>(emitted_) % width_;
    WindowTok<S> win;
    win.k = k_;
    win.cx = static_cast<std::uint16_t>(cx);
    win.cy = static_cast<std::uint16_t>(cy);
    win.sof = (cy == 0 && cx == 0);
    win.eol = (cx == width_ - 1);
    for (int wy = 0; wy < k_; ++wy) {
      const int sy = std::clamp(cy - hk_ + wy, 0, height_ - 1);
      const S* row = &ring_[static_cast<std::size_t>(sy % k_) * width_];
      for (int wx = 0; wx < k_; ++wx) {
        const int sx = std::clamp(cx - hk_ + wx, 0, width_ - 1);
        win.w[wy * k_ + wx] = row[sx];
      }
    }
    const bool pushed = out_.try_push(win);
    if (!pushed) fail(Errc::framing_error, "window push on full channel");
    ++emitted_;
  }

  SpscChannel<Token<S>>& in_;
  SpscChannel<WindowTok<S>>& out_;
  const int k_, hk_, width_, height_;
  std::vector<S> ring_;
  std::size_t accepted_ = 0;  // pixels of the current frame taken in
  std::size_t emitted_ = 0;   // windows of the current frame pushed out
  bool closed_output_ = false;
  const char* name_;
};

// ---- shared scaffolding for 1:1 stages ----

template <typename In, typename Out>
class PixelStage : public Stage {
 public:
  PixelStage(SpscChannel<In>& in, SpscChannel<Out>& out) : in_(in), out_(out) {}

  bool step() final {
    if (closed_output_) return false;
    if (!out_.full()) {
      In tok;
      if (in_.try_pop(tok)) {
        Out result = transform(tok);
        if (!out_.try_push(result)) fail(Errc::framing_error, "push on full channel");
        return true;
      }
    }
    if (in_.drained()) {
      out_.close();
      closed_output_ = true;
      return true;
    }
    return false;
  }

  bool done() const final { return closed_output_; }

 protected:
  virtual Out transform(const In& tok) = 0;

 private:
  SpscChannel<In>& in_;
  SpscChannel<Out>& out_;
  bool closed_output_ = false;
};

// Tracks raster position from framing flags for stages whose input tokens
// carry no coordinates.
struct RasterCursor {
  int row = 0, col = 0, width = 0, height = 0;

  void start_frame() { row = col = 0; }
  bool at_frame_end(bool eol) const { return eol && row == height - 1; }
  void advance(bool eol) {
    if (eol) {
      ++row;
      col = 0;
      if (row == height) row = 0;
    } else {
      ++col;
    }
  }
};

class DpcStage final : public PixelStage<WindowTok<std::uint16_t>, RawTok> {
 public:
  DpcStage(SpscChannel<WindowTok<std::uint16_t>>& in, SpscChannel<RawTok>& out,
           const DpcConfig& cfg, int width, int height)
      : PixelStage(in, out), cfg_(cfg), width_(width), height_(height) {}

  void set_config(const DpcConfig& cfg) { cfg_ = cfg; }
  const char* name() const override { return "dpc"; }

  std::vector<std::uint64_t> corrected_per_frame;

 protected:
  RawTok transform(const WindowTok<std::uint16_t>& tok) override {
    Window5 window;
    std::copy(tok.w.begin(), tok.w.begin() + 25, window.w.begin());
    std::uint16_t v = window.at(0, 0);
    if (dpc_detect(window, cfg_.threshold)) {
      v = dpc_correct(window);
      ++corrected_;
    }
    if (tok.cy == height_ - 1 && tok.cx == width_ - 1) {
      corrected_per_frame.push_back(corrected_);
      corrected_ = 0;
    }
    return RawTok{v, tok.sof, tok.eol};
  }

 private:
  DpcConfig cfg_;
  const int width_, height_;
  std::uint64_t corrected_ = 0;
};

class AwbStage final : public PixelStage<RawTok, RawTok> {
 public:
  AwbStage(SpscChannel<RawTok>& in, SpscChannel<RawTok>& out, const AwbConfig& cfg,
           io::BayerPattern pattern, int width, int height, int maxval)
      : PixelStage(in, out), cfg_(cfg), pattern_(pattern), maxval_(maxval) {
    cursor_.width = width;
    cursor_.height = height;
    active_ = cfg.gains;
    pending_ = cfg.gains;
  }

  void set_config(const AwbConfig& cfg) {
    cfg_ = cfg;
    if (!cfg_.auto_gains) pending_ = cfg_.gains;
  }
  const char* name() const override { return "awb"; }

  std::vector<AwbFrameStats> stats_per_frame;

 protected:
  RawTok transform(const RawTok& tok) override {
    if (tok.sof) {
      // Gains measured on frame N become active at frame N+1's sof.
      active_ = pending_;
      cursor_.start_frame();
      sums_ = {0, 0, 0};
      counts_ = {0, 0, 0};
    }
    const ColorClass color = color_at(pattern_, cursor_.row, cursor_.col);
    const int ch = color == ColorClass::red ? 0 : (color == ColorClass::blue ? 2 : 1);
    const bool in_roi =
        !cfg_.stats_roi || cfg_.stats_roi->contains(cursor_.col, cursor_.row);
    if (in_roi && tok.v >= cfg_.low && tok.v <= cfg_.high) {
      sums_[ch] += tok.v;
      counts_[ch] += 1;
    }
    const std::uint16_t out_v = awb_apply_value(tok.v, active_[ch], maxval_);
    const bool frame_end = cursor_.at_frame_end(tok.eol);
    cursor_.advance(tok.eol);
    if (frame_end) finish_frame();
    return RawTok{out_v, tok.sof, tok.eol};
  }

 private:
  void finish_frame() {
    AwbFrameStats s;
    s.present = true;
    s.gains_applied = active_;
    s.included = counts_;
    const bool all_channels = counts_[0] > 0 && counts_[1] > 0 && counts_[2] > 0;
    if (all_channels) {
      for (int i = 0; i < 3; ++i)
        s.means[i] = static_cast<double>(sums_[i]) / static_cast<double>(counts_[i]);
    }
    if (cfg_.auto_gains && all_channels && s.means[0] > 0.0 && s.means[2] > 0.0) {
      pending_ = awb_gains(s.means[0], s.means[1], s.means[2]);
      s.stats_valid = true;
    } else if (!cfg_.auto_gains) {
      pending_ = cfg_.gains;
      s.stats_valid = all_channels;
    } else {
      // Excluded or degenerate statistics: previous gains are retained.
      s.stats_valid = false;
    }
    s.gains_computed = pending_;
    stats_per_frame.push_back(s);
  }

  AwbConfig cfg_;
  const io::BayerPattern pattern_;
  const int maxval_;
  RasterCursor cursor_;
  std::array<std::uint16_t, 3> active_{256, 256, 256};
  std::array<std::uint16_t, 3> pending_{256, 256, 256};
  std::array<std::uint64_t, 3> sums_{0, 0, 0};
  std::array<std::uint64_t, 3> counts_{0, 0, 0};
};

class DemosaicStage final : public PixelStage<WindowTok<std::uint16_t>, RgbTok> {
 public:
  DemosaicStage(SpscChannel<WindowTok<std::uint16_t>>& in, SpscChannel<RgbTok>& out,
                io::BayerPattern pattern, int maxval)
      : PixelStage(in, out), pattern_(pattern), maxval_(maxval) {}

  const char* name() const override { return "demosaic"; }

 protected:
  RgbTok transform(const WindowTok<std::uint16_t>& tok) override {
    Window5 window;
    std::copy(tok.w.begin(), tok.w.begin() + 25, window.w.begin());
    const RgbPix rgb = demosaic_window(window, color_at(pattern_, tok.cy, tok.cx), maxval_);
    return RgbTok{rgb, tok.sof, tok.eol};
  }

 private:
  const io::BayerPattern pattern_;
  const int maxval_;
};

class NlmStage final : public PixelStage<WindowTok<RgbPix>, RgbTok> {
 public:
  NlmStage(SpscChannel<WindowTok<RgbPix>>& in, SpscChannel<RgbTok>& out, const NlmConfig& cfg,
           int width, int height)
      : PixelStage(in, out), cfg_(cfg), lut_(nlm_build_lut()), width_(width), height_(height) {}

  void set_config(const NlmConfig& cfg) { cfg_ = cfg; }
  const char* name() const override { return "nlm"; }

  std::vector<double> mean_weight_per_frame;

 protected:
  RgbTok transform(const WindowTok<RgbPix>& tok) override {
    const int k = tok.k;
    std::array<std::uint16_t, kMaxWindow * kMaxWindow> plane{};
    RgbPix out;
    for (int ch = 0; ch < 3; ++ch) {
      for (int i = 0; i < k * k; ++i)
        plane[i] = ch == 0 ? tok.w[i].r : (ch == 1 ? tok.w[i].g : tok.w[i].b);
      const std::uint16_t v = nlm_filter_channel(plane.data(), cfg_.search_radius,
                                                 cfg_.patch_radius, cfg_.strength, lut_, &accum_);
      if (ch == 0)
        out.r = v;
      else if (ch == 1)
        out.g = v;
      else
        out.b = v;
    }
    if (tok.cy == height_ - 1 && tok.cx == width_ - 1) {
      mean_weight_per_frame.push_back(
          accum_.weight_count == 0
              ? 0.0
              : static_cast<double>(accum_.weight_sum) /
                    (255.0 * static_cast<double>(accum_.weight_count)));
      accum_ = NlmAccum{};
    }
    return RgbTok{out, tok.sof, tok.eol};
  }

 private:
  NlmConfig cfg_;
  std::array<std::uint8_t, 256> lut_;
  const int width_, height_;
  NlmAccum accum_;
};

class GammaStage final : public PixelStage<RgbTok, RgbTok> {
 public:
  GammaStage(SpscChannel<RgbTok>& in, SpscChannel<RgbTok>& out, const GammaConfig& cfg,
             int width, int height, int bit_depth)
      : PixelStage(in, out), bit_depth_(bit_depth) {
    cursor_.width = width;
    cursor_.height = height;
    set_config(cfg);
    hist_pre_.assign(1u << bit_depth, 0);
    hist_post_.assign(1u << bit_depth, 0);
  }

  void set_config(const GammaConfig& cfg) {
    cfg_ = cfg;
    if (!cfg.enabled) {
      lut_.resize(1u << bit_depth_);
      for (std::size_t i = 0; i < lut_.size(); ++i) lut_[i] = static_cast<std::uint16_t>(i);
    } else if (!cfg.lut.empty()) {
      lut_ = cfg.lut;
    } else {
      lut_ = gamma_build_lut(cfg.exponent, bit_depth_);
    }
  }
  const char* name() const override { return "gamma"; }

  std::vector<std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>>> hist_per_frame;

 protected:
  RgbTok transform(const RgbTok& tok) override {
    RgbPix out;
    const std::uint16_t in[3] = {tok.v.r, tok.v.g, tok.v.b};
    std::uint16_t mapped[3];
    for (int ch = 0; ch < 3; ++ch) {
      hist_pre_[in[ch]] += 1;
      mapped[ch] = lut_[in[ch]];
      hist_post_[mapped[ch]] += 1;
    }
    out.r = mapped[0];
    out.g = mapped[1];
    out.b = mapped[2];
    const bool frame_end = cursor_.at_frame_end(tok.eol);
    cursor_.advance(tok.eol);
    if (frame_end) {
      hist_per_frame.emplace_back(hist_pre_, hist_post_);
      std::fill(hist_pre_.begin(), hist_pre_.end(), 0);
      std::fill(hist_post_.begin(), hist_post_.end(), 0);
    }
    return RgbTok{out, tok.sof, tok.eol};
  }

 private:
  GammaConfig cfg_;
  const int bit_depth_;
  std::vector<std::uint16_t> lut_;
  RasterCursor cursor_;
  std::vector<std::uint64_t> hist_pre_, hist_post_;
};

class CscStage final : public PixelStage<RgbTok, YccTok> {
 public:
  CscStage(SpscChannel<RgbTok>& in, SpscChannel<YccTok>& out, const CscConfig& cfg, int width,
           int height)
      : PixelStage(in, out), coeffs_(quantize_csc(cfg)) {
    cursor_.width = width;
    cursor_.height = height;
  }

  void set_config(const CscConfig& cfg) { coeffs_ = quantize_csc(cfg); }
  const char* name() const override { return "csc"; }

  std::vector<double> mean_y_per_frame;

 protected:
  YccTok transform(const RgbTok& tok) override {
    const YccPix ycc = rgb_to_ycbcr(tok.v, coeffs_);
    y_sum_ += ycc.y;
    ++count_;
    const bool frame_end = cursor_.at_frame_end(tok.eol);
    cursor_.advance(tok.eol);
    if (frame_end) {
      mean_y_per_frame.push_back(static_cast<double>(y_sum_) / static_cast<double>(count_));
      y_sum_ = 0;
      count_ = 0;
    }
    return YccTok{ycc, tok.sof, tok.eol};
  }

 private:
  CscCoeffs coeffs_;
  RasterCursor cursor_;
  std::uint64_t y_sum_ = 0;
  std::uint64_t count_ = 0;
};

class SharpenStage final : public PixelStage<WindowTok<YccPix>, YccTok> {
 public:
  SharpenStage(SpscChannel<WindowTok<YccPix>>& in, SpscChannel<YccTok>& out,
               const SharpenConfig& cfg)
      : PixelStage(in, out), lambda_(quantize_u2_6(cfg.lambda)) {}

  void set_config(const SharpenConfig& cfg) { lambda_ = quantize_u2_6(cfg.lambda); }
  const char* name() const override { return "sharpen"; }

 protected:
  YccTok transform(const WindowTok<YccPix>& tok) override {
    std::array<std::uint16_t, 9> ys;
    for (int i = 0; i < 9; ++i) ys[i] = tok.w[i].y;
    YccPix out = tok.w[4];  // chroma passes through
    out.y = sharpen_luma(ys, lambda_);
    return YccTok{out, tok.sof, tok.eol};
  }

 private:
  std::uint8_t lambda_;
};

// ---- sink adapters ----

class SinkBase {
 public:
  virtual ~SinkBase() = default;
  virtual bool pop_one() = 0;
  virtual std::size_t count() const = 0;
  virtual void reset() = 0;
  virtual bool upstream_drained() const = 0;
};

template <typename T>
class SinkCollector final : public SinkBase {
 public:
  explicit SinkCollector(SpscChannel<T>& ch) : ch_(ch) {}

  bool pop_one() override {
    T tok;
    if (!ch_.try_pop(tok)) return false;
    tokens.push_back(tok);
    return true;
  }
  std::size_t count() const override { return tokens.size(); }
  void reset() override { tokens.clear(); }
  bool upstream_drained() const override { return ch_.drained(); }

  std::vector<T> tokens;

 private:
  SpscChannel<T>& ch_;
};

}  // namespace

// ---- pipeline ----

struct Pipeline::Impl {
  io::FrameMeta meta;
  IspConfig config;
  IspConfig pending_config;
  bool has_pending_config = false;
  OutputKind kind = OutputKind::rgb;
  int maxval = 255;

  // channel storage (typed pools keep ownership simple)
  std::vector<std::unique_ptr<SpscChannel<RawTok>>> raw_chs;
  std::vector<std::unique_ptr<SpscChannel<RgbTok>>> rgb_chs;
  std::vector<std::unique_ptr<SpscChannel<YccTok>>> ycc_chs;
  std::vector<std::unique_ptr<SpscChannel<WindowTok<std::uint16_t>>>> rawwin_chs;
  std::vector<std::unique_ptr<SpscChannel<WindowTok<RgbPix>>>> rgbwin_chs;
  std::vector<std::unique_ptr<SpscChannel<WindowTok<YccPix>>>> yccwin_chs;

  std::vector<std::unique_ptr<Stage>> stages;
  SpscChannel<RawTok>* source_ch = nullptr;
  std::unique_ptr<SinkBase> sink;
  SinkCollector<RawTok>* sink_raw = nullptr;
  SinkCollector<RgbTok>* sink_rgb = nullptr;
  SinkCollector<YccTok>* sink_ycc = nullptr;

  // direct stage handles for config refresh and stats
  DpcStage* dpc = nullptr;
  AwbStage* awb = nullptr;
  NlmStage* nlm = nullptr;
  GammaStage* gamma = nullptr;
  CscStage* csc = nullptr;
  SharpenStage* sharpen = nullptr;

  std::size_t frames_run = 0;

  static constexpr std::size_t kChannelDepth = 2;

  template <typename T>
  SpscChannel<T>* make_channel(std::vector<std::unique_ptr<SpscChannel<T>>>& pool) {
    pool.push_back(std::make_unique<SpscChannel<T>>(kChannelDepth));
    return pool.back().get();
  }

  void build() {
    config.validate(meta);
    maxval = (1 << meta.bit_depth) - 1;
    const int w = meta.width, h = meta.height;

    source_ch = make_channel(raw_chs);
    SpscChannel<RawTok>* raw = source_ch;

    if (config.dpc.enabled) {
      auto* win = make_channel(rawwin_chs);
      stages.push_back(std::make_unique<WindowFormerStage<std::uint16_t>>(
          *raw, *win, 5, w, h, "dpc_window"));
      auto* out = make_channel(raw_chs);
      auto stage = std::make_unique<DpcStage>(*win, *out, config.dpc, w, h);
      dpc = stage.get();
      stages.push_back(std::move(stage));
      raw = out;
    }
    if (config.awb.enabled) {
      auto* out = make_channel(raw_chs);
      auto stage = std::make_unique<AwbStage>(*raw, *out, config.awb, meta.bayer_pattern, w, h,
                                              maxval);
      awb = stage.get();
      stages.push_back(std::move(stage));
      raw = out;
    }
    if (!config.demosaic.enabled) {
      kind = OutputKind::raw;
      auto collector = std::make_unique<SinkCollector<RawTok>>(*raw);
      sink_raw = collector.get();
      sink = std::move(collector);
      return;
    }

    auto* demosaic_win = make_channel(rawwin_chs);
    stages.push_back(std::make_unique<WindowFormerStage<std::uint16_t>>(
        *raw, *demosaic_win, 5, w, h, "demosaic_window"));
    SpscChannel<RgbTok>* rgb = make_channel(rgb_chs);
    stages.push_back(
        std::make_unique<DemosaicStage>(*demosaic_win, *rgb, meta.bayer_pattern, maxval));

    if (config.nlm.enabled) {
      const int k = 2 * config.nlm.search_radius + 2 * config.nlm.patch_radius + 1;
      auto* win = make_channel(rgbwin_chs);
      stages.push_back(
          std::make_unique<WindowFormerStage<RgbPix>>(*rgb, *win, k, w, h, "nlm_window"));
      auto* out = make_channel(rgb_chs);
      auto stage = std::make_unique<NlmStage>(*win, *out, config.nlm, w, h);
      nlm = stage.get();
      stages.push_back(std::move(stage));
      rgb = out;
    }

    {
      auto* out = make_channel(rgb_chs);
      auto stage =
          std::make_unique<GammaStage>(*rgb, *out, config.gamma, w, h, meta.bit_depth);
      gamma = stage.get();
      stages.push_back(std::move(stage));
      rgb = out;
    }

    if (!config.csc.enabled) {
      kind = OutputKind::rgb;
      auto collector = std::make_unique<SinkCollector<RgbTok>>(*rgb);
      sink_rgb = collector.get();
      sink = std::move(collector);
      return;
    }

    SpscChannel<YccTok>* ycc = make_channel(ycc_chs);
    {
      auto stage = std::make_unique<CscStage>(*rgb, *ycc, config.csc, w, h);
      csc = stage.get();
      stages.push_back(std::move(stage));
    }
    if (config.sharpen.enabled) {
      auto* win = make_channel(yccwin_chs);
      stages.push_back(
          std::make_unique<WindowFormerStage<YccPix>>(*ycc, *win, 3, w, h, "sharpen_window"));
      auto* out = make_channel(ycc_chs);
      auto stage = std::make_unique<SharpenStage>(*win, *out, config.sharpen);
      sharpen = stage.get();
      stages.push_back(std::move(stage));
      ycc = out;
    }
    kind = OutputKind::ycbcr;
    auto collector = std::make_unique<SinkCollector<YccTok>>(*ycc);
    sink_ycc = collector.get();
    sink = std::move(collector);
  }

  // Applies a queued configuration at a frame boundary. Stage topology is
  // fixed by the enable flags; runtime-mutable parameters refresh in place.
  void apply_pending_config() {
    if (!has_pending_config) return;
    has_pending_config = false;
    pending_config.validate(meta);
    const IspConfig& next = pending_config;
    const bool same_topology =
        next.dpc.enabled == config.dpc.enabled && next.awb.enabled == config.awb.enabled &&
        next.demosaic.enabled == config.demosaic.enabled &&
        next.nlm.enabled == config.nlm.enabled && next.csc.enabled == config.csc.enabled &&
        next.sharpen.enabled == config.sharpen.enabled &&
        next.nlm.search_radius == config.nlm.search_radius &&
        next.nlm.patch_radius == config.nlm.patch_radius;
    config = next;
    if (!same_topology) {
      // Rebuild the stage graph; per-stage statistics history is kept by
      // the caller, the AWB gain latch restarts from the configured gains.
      stages.clear();
      raw_chs.clear();
      rgb_chs.clear();
      ycc_chs.clear();
      rawwin_chs.clear();
      rgbwin_chs.clear();
      yccwin_chs.clear();
      dpc = nullptr;
      awb = nullptr;
      nlm = nullptr;
      gamma = nullptr;
      csc = nullptr;
      sharpen = nullptr;
      build();
      return;
    }
    if (dpc != nullptr) dpc->set_config(config.dpc);
    if (awb != nullptr) awb->set_config(config.awb);
    if (nlm != nullptr) nlm->set_config(config.nlm);
    if (gamma != nullptr) gamma->set_config(config.gamma);
    if (csc != nullptr) csc->set_config(config.csc);
    if (sharpen != nullptr) sharpen->set_config(config.sharpen);
  }

  FrameOutput run_one(const io::RawImage& frame, const StallSchedule* schedule) {
    if (frame.width != meta.width || frame.height != meta.height)
      fail(Errc::dimension_mismatch, "frame dims do not match the pipeline geometry");
    apply_pending_config();

    const std::size_t total = static_cast<std::size_t>(meta.width) * meta.height;
    const std::vector<RawTok> tokens = stream_from_frame(frame);
    std::size_t fed = 0;
    sink->reset();

    Rng rng(schedule != nullptr ? schedule->seed : 0);
    const double stall_prob = schedule != nullptr ? schedule->stall_prob : 0.0;
    const bool shuffle = schedule != nullptr && schedule->shuffle_polling;
    std::vector<std::size_t> order(stages.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    while (sink->count() < total) {
      bool progress = false;
      while (fed < tokens.size() && source_ch->try_push(tokens[fed])) {
        ++fed;
        progress = true;
      }
      if (shuffle) {
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng.uniform_int(i)]);
      }
      for (std::size_t idx : order) {
        while (stages[idx]->step()) progress = true;
      }
      const bool sink_ready = stall_prob <= 0.0 || !rng.bernoulli(stall_prob);
      if (sink_ready) {
        while (sink->count() < total && sink->pop_one()) progress = true;
      }
      if (!progress && sink_ready)
        fail(Errc::framing_error, "pipeline stalled without progress");
    }

    ++frames_run;
    return assemble_output();
  }

  FrameOutput assemble_output() {
    FrameOutput out;
    out.kind = kind;
    const std::size_t frame_idx = frames_run - 1;
    if (kind == OutputKind::raw) {
      out.raw = frame_from_stream(sink_raw->tokens, meta.width, meta.height);
    } else if (kind == OutputKind::rgb) {
      out.rgb = tri_from_rgb(sink_rgb->tokens);
    } else {
      out.ycc = tri_from_ycc(sink_ycc->tokens);
    }
    out.stats = gather_stats(frame_idx);
    return out;
  }

  io::TriImage tri_from_rgb(const std::vector<RgbTok>& tokens) const {
    io::TriImage img{meta.width, meta.height, {}};
    img.px.resize(tokens.size() * 3);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      img.px[i * 3] = tokens[i].v.r;
      img.px[i * 3 + 1] = tokens[i].v.g;
      img.px[i * 3 + 2] = tokens[i].v.b;
    }
    return img;
  }

  io::TriImage tri_from_ycc(const std::vector<YccTok>& tokens) const {
    io::TriImage img{meta.width, meta.height, {}};
    img.px.resize(tokens.size() * 3);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      img.px[i * 3] = tokens[i].v.y;
      img.px[i * 3 + 1] = tokens[i].v.cb;
      img.px[i * 3 + 2] = tokens[i].v.cr;
    }
    return img;
  }

  FrameStats gather_stats(std::size_t frame_idx) {
    FrameStats stats;
    stats.output_tokens = sink->count();
    if (dpc != nullptr && frame_idx < dpc->corrected_per_frame.size()) {
      stats.dpc_present = true;
      stats.dpc_corrected = dpc->corrected_per_frame[frame_idx];
    }
    if (awb != nullptr && frame_idx < awb->stats_per_frame.size())
      stats.awb = awb->stats_per_frame[frame_idx];
    if (nlm != nullptr && frame_idx < nlm->mean_weight_per_frame.size()) {
      stats.nlm_present = true;
      stats.nlm_mean_weight = nlm->mean_weight_per_frame[frame_idx];
    }
    if (gamma != nullptr && frame_idx < gamma->hist_per_frame.size()) {
      stats.gamma_present = true;
      stats.hist_pre_gamma = gamma->hist_per_frame[frame_idx].first;
      stats.hist_post_gamma = gamma->hist_per_frame[frame_idx].second;
    }
    if (csc != nullptr && frame_idx < csc->mean_y_per_frame.size()) {
      stats.csc_present = true;
      stats.mean_y = csc->mean_y_per_frame[frame_idx];
    }
    return stats;
  }
};

Pipeline::Pipeline(const IspConfig& config, const io::FrameMeta& meta)
    : impl_(std::make_unique<Impl>()) {
  impl_->meta = meta;
  impl_->config = config;
  impl_->build();
}

Pipeline::~Pipeline() = default;

void Pipeline::update_config(const IspConfig& config) {
  impl_->pending_config = config;
  impl_->has_pending_config = true;
}

const IspConfig& Pipeline::config() const { return impl_->config; }

FrameOutput Pipeline::run_frame(const io::RawImage& frame) { return impl_->run_one(frame, nullptr); }

FrameOutput Pipeline::run_frame(const io::RawImage& frame, const StallSchedule& schedule) {
  return impl_->run_one(frame, &schedule);
}

OutputKind Pipeline::output_kind() const { return impl_->kind; }

std::size_t Pipeline::buffered_lines() const {
  std::size_t lines = 0;
  for (const auto& stage : impl_->stages) lines += stage->buffered_lines();
  return lines;
}

std::size_t Pipeline::channel_slots() const {
  std::size_t slots = 0;
  for (const auto& ch : impl_->raw_chs) slots += ch->capacity();
  for (const auto& ch : impl_->rgb_chs) slots += ch->capacity();
  for (const auto& ch : impl_->ycc_chs) slots += ch->capacity();
  for (const auto& ch : impl_->rawwin_chs) slots += ch->capacity();
  for (const auto& ch : impl_->rgbwin_chs) slots += ch->capacity();
  for (const auto& ch : impl_->yccwin_chs) slots += ch->capacity();
  return slots;
}

FrameOutput run_pipeline(const io::RawImage& frame, const io::FrameMeta& meta,
                         const IspConfig& config) {
  Pipeline pipeline(config, meta);
  return pipeline.run_frame(frame);
}

std::vector<FrameOutput> run_frames_threaded(const std::vector<io::RawImage>& frames,
                                             const io::FrameMeta& meta,
                                             const IspConfig& config) {
  Pipeline pipeline(config, meta);
  Pipeline::Impl& impl = *pipeline.impl_;
  const std::size_t total = static_cast<std::size_t>(meta.width) * meta.height;

  std::thread source([&] {
    for (const io::RawImage& frame : frames) {
      if (frame.width != meta.width || frame.height != meta.height)
        fail(Errc::dimension_mismatch, "frame dims do not match the pipeline geometry");
      const auto tokens = stream_from_frame(frame);
      for (const RawTok& tok : tokens)
        while (!impl.source_ch->try_push(tok)) std::this_thread::yield();
    }
    impl.source_ch->close();
  });

  std::vector<std::thread> workers;
  workers.reserve(impl.stages.size());
  for (auto& stage : impl.stages)
    workers.emplace_back([&stage] {
      while (!stage->done())
        if (!stage->step()) std::this_thread::yield();
    });

  std::thread sink([&] {
    while (!impl.sink->upstream_drained())
      if (!impl.sink->pop_one()) std::this_thread::yield();
  });

  source.join();
  for (auto& t : workers) t.join();
  sink.join();

  if (impl.sink->count() != total * frames.size())
    fail(Errc::framing_error, "threaded run lost or duplicated tokens");

  std::vector<FrameOutput> outputs;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    FrameOutput out;
    out.kind = impl.kind;
    if (impl.kind == OutputKind::raw) {
      std::vector<RawTok> slice(impl.sink_raw->tokens.begin() + f * total,
                                impl.sink_raw->tokens.begin() + (f + 1) * total);
      out.raw = frame_from_stream(slice, meta.width, meta.height);
    } else if (impl.kind == OutputKind::rgb) {
      std::vector<RgbTok> slice(impl.sink_rgb->tokens.begin() + f * total,
                                impl.sink_rgb->tokens.begin() + (f + 1) * total);
      out.rgb = impl.tri_from_rgb(slice);
    } else {
      std::vector<YccTok> slice(impl.sink_ycc->tokens.begin() + f * total,
                                impl.sink_ycc->tokens.begin() + (f + 1) * total);
      out.ycc = impl.tri_from_ycc(slice);
    }
    out.stats = impl.gather_stats(f);
    out.stats.output_tokens = total;
    outputs.push_back(std::move(out));
  }
  return outputs;
}

}  // namespace neuroisp::isp
