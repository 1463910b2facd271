#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuroisp/common.hpp"

namespace neuroisp::events {

struct SensorGeometry {
  int width = 0;
  int height = 0;
};

// One DVS brightness-change event. Within a stream t is non-decreasing.
struct DvsEvent {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t p = 0;  // polarity, 0 or 1

  bool operator==(const DvsEvent&) const = default;
};

// Half-open slice [start, start + duration) of an event stream.
struct EventWindow {
  std::uint64_t start = 0;
  std::uint64_t duration = 0;
  std::vector<DvsEvent> events;
};

// Binary occupancy tensor [bins x 2 x height x width].
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(int bins, int height, int width)
      : bins_(bins), height_(height), width_(width),
        data_(static_cast<std::size_t>(bins) * 2 * height * width, 0) {}

  int bins() const { return bins_; }
  int polarities() const { return 2; }
  int height() const { return height_; }
  int width() const { return width_; }

  std::size_t size() const { return data_.size(); }
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  std::size_t index(int bin, int pol, int y, int x) const {
    return ((static_cast<std::size_t>(bin) * 2 + pol) * height_ + y) * width_ + x;
  }
  std::uint8_t at(int bin, int pol, int y, int x) const { return data_[index(bin, pol, y, x)]; }
  void set(int bin, int pol, int y, int x) { data_[index(bin, pol, y, x)] = 1; }

  std::size_t set_cell_count() const;

  bool operator==(const VoxelGrid&) const = default;

 private:
  int bins_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// Parses one CSV record "t,x,y,p". Coordinates are validated against the
// sensor geometry, polarity against {0,1}.
DvsEvent parse_event_record(const std::string& record, const SensorGeometry& sensor);

// Inverse of parse_event_record.
std::string format_event_record(const DvsEvent& e);

// Segments a time-sorted stream into contiguous windows of fixed duration
// starting at the first event's timestamp. Windows with no events are still
// emitted so downstream consumers see silent timesteps.
std::vector<EventWindow> window_segment(const std::vector<DvsEvent>& stream,
                                        std::uint64_t duration_us);

// Encodes a window as a one-hot voxel grid: cell (b,p,y,x) = 1 iff at least
// one event with polarity p at (x,y) falls in temporal bin b. Bins are
// half-open with floor indexing, clamped to bins-1.
VoxelGrid voxelize(const EventWindow& window, int bins, int height, int width);

int voxel_bin_index(std::uint64_t t, std::uint64_t start, std::uint64_t duration, int bins);

// Event file I/O. CSV: one "t,x,y,p" record per line; '#' comments and an
// optional alphabetic header line are skipped. Binary (.evt): magic "EVT1",
// u32 width, u32 height, then little-endian u32 quadruples (t,x,y,p).
std::vector<DvsEvent> load_events_csv(const std::string& path, const SensorGeometry& sensor);
void save_events_csv(const std::string& path, const std::vector<DvsEvent>& stream);
std::vector<DvsEvent> load_events_binary(const std::string& path, SensorGeometry* sensor_out);
void save_events_binary(const std::string& path, const std::vector<DvsEvent>& stream,
                        const SensorGeometry& sensor);
// Dispatches on file extension (.csv vs .evt).
std::vector<DvsEvent> load_events(const std::string& path, const SensorGeometry& sensor);

// Synthetic moving-bar stimulus: a vertical bright bar drifting left or
// right across the sensor with wrap-around. The leading edge emits ON
// events, the trailing edge OFF events; drop_prob thins both via the RNG.
struct MovingBarParams {
  SensorGeometry sensor{24, 24};
  std::uint64_t duration_us = 100000;
  std::uint64_t step_us = 1000;      // event emission cadence
  int bar_width = 3;
  double speed_px_per_ms = 0.12;     // columns per millisecond
  double drop_prob = 0.25;
};

std::vector<DvsEvent> generate_moving_bar(const MovingBarParams& params, bool rightward,
                                          int start_col, Rng& rng);

}  // namespace neuroisp::events
