#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neuroisp/events.hpp"
#include "neuroisp/isp.hpp"
#include "neuroisp/snn.hpp"

namespace neuroisp::loop {

// Rule-plus-hysteresis policy constants. The target band [luma_low,
// luma_high] is on the mean output luma; gamma/NLM direction reversals are
// rate-limited to once per hysteresis_frames.
struct PolicyConfig {
  double luma_low = 90.0;
  double luma_high = 150.0;
  double gamma_step = 0.3;
  double gamma_min = 0.5;
  double gamma_max = 4.0;
  int activity_grid = 4;            // G regions per axis
  double activity_high = 2e-4;      // spikes (or events) per microsecond per region
  double activity_low = 1e-6;
  double luma_var_high = 2500.0;
  double nlm_step = 2.0;
  double nlm_min = 1.0;
  double nlm_max = 40.0;
  int hysteresis_frames = 8;        // K
  bool freeze_awb = false;
  bool emit_roi = false;

  void validate() const;
};

// Runtime delta the NPU sends to the ISP. At least one field must be set.
struct NpuDirective {
  std::optional<std::array<std::uint16_t, 3>> awb_gains;  // U4.8
  std::optional<double> gamma_exponent;
  std::optional<double> nlm_strength;
  std::optional<isp::Roi> roi;
  std::uint64_t t_us = 0;

  bool empty() const { return !awb_gains && !gamma_exponent && !nlm_strength && !roi; }
};

std::string directive_to_json(const NpuDirective& d, std::size_t frame);
NpuDirective directive_from_json(const std::string& line, std::size_t* frame_out);

// G x G grid of per-region spike rates over the aligned window.
struct ActivityMap {
  int grid = 0;
  int sensor_width = 0, sensor_height = 0;
  std::vector<double> rates;  // row-major, events per microsecond

  double at(int gy, int gx) const { return rates[static_cast<std::size_t>(gy) * grid + gx]; }
};

struct FrameAlignment {
  std::size_t frame_index = 0;
  std::uint64_t t0 = 0, t1 = 0;
  std::size_t window_index = 0;
};

// Picks the event window with maximum overlap with [t0,t1); ties go to the
// earlier window. Throws NoOverlap when nothing intersects.
FrameAlignment align_window(std::size_t frame_index, std::uint64_t t0, std::uint64_t t1,
                            const std::vector<events::EventWindow>& windows);

ActivityMap compute_region_activity(const events::VoxelGrid& grid, std::uint64_t duration_us,
                                    int g);

struct PolicyState {
  int last_gamma_direction = 0;  // -1, 0, +1
  int frames_since_gamma = 1 << 20;
  int last_nlm_direction = 0;
  int frames_since_nlm = 1 << 20;
};

// Evaluates the policy rules against the previous frame's statistics and
// the current activity map; returns nothing while every signal sits inside
// its hysteresis band. rgb_width/height locate emitted ROIs on the RGB
// sensor.
std::optional<NpuDirective> derive_directive(const ActivityMap& activity,
                                             const isp::FrameStats& stats,
                                             const isp::IspConfig& current,
                                             const PolicyConfig& policy, PolicyState& state,
                                             int rgb_width, int rgb_height);

// Returns the patched configuration; validation failures reject the whole
// directive (InvalidDirective) leaving the input untouched. Gamma deltas
// reset the explicit LUT so it is rebuilt from the exponent.
isp::IspConfig apply_directive(const isp::IspConfig& config, const NpuDirective& directive,
                               const io::FrameMeta& meta);

struct LoopInput {
  const std::vector<events::DvsEvent>* stream = nullptr;
  events::SensorGeometry dvs_sensor;
  std::uint64_t window_us = 100000;
  int bins = 5;
  const std::vector<std::pair<io::RawImage, io::FrameMeta>>* frames = nullptr;
  const snn::SpikingNet<double>* net = nullptr;
  isp::IspConfig isp_config;
  PolicyConfig policy;
};

struct DirectiveLogEntry {
  std::size_t frame = 0;
  NpuDirective directive;
};

struct LoopResult {
  std::vector<isp::FrameOutput> outputs;
  std::vector<DirectiveLogEntry> log;
  std::vector<int> classifications;  // argmax of the SNN logits per frame
  std::string directive_log_jsonl;   // serialized form of `log`
};

// Per frame: drain queued directives at sof, align the event window,
// voxelize, run the SNN, evaluate the policy, run the ISP. Deterministic
// for fixed inputs.
LoopResult run_closed_loop(const LoopInput& input);

}  // namespace neuroisp::loop
