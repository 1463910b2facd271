#include "neuroisp/events.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>

namespace neuroisp::events {

std::size_t VoxelGrid::set_cell_count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

namespace {

bool parse_u64(std::string_view field, std::uint64_t& out) {
  if (field.empty()) return false;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

DvsEvent parse_event_record(const std::string& record, const SensorGeometry& sensor) {
  std::uint64_t fields[4];
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const std::size_t comma = record.find(',', pos);
    const bool last = (i == 3);
    if (last != (comma == std::string::npos))
      fail(Errc::malformed_record, "expected 4 comma-separated fields: '" + record + "'");
    const std::size_t end = last ? record.size() : comma;
    std::string_view field(record.data() + pos, end - pos);
    if (!parse_u64(field, fields[i]))
      fail(Errc::malformed_record, "non-integer field '" + std::string(field) + "'");
    pos = end + 1;
  }
  if (fields[3] > 1)
    fail(Errc::out_of_range, "polarity " + std::to_string(fields[3]) + " not in {0,1}");
  if (fields[1] >= static_cast<std::uint64_t>(sensor.width))
    fail(Errc::out_of_range, "x=" + std::to_string(fields[1]) + " >= width " +
                                 std::to_string(sensor.width));
  if (fields[2] >= static_cast<std::uint64_t>(sensor.height))
    fail(Errc::out_of_range, "y=" + std::to_string(fields[2]) + " >= height " +
                                 std::to_string(sensor.height));
  return DvsEvent{fields[0], static_cast<std::uint16_t>(fields[1]),
                  static_cast<std::uint16_t>(fields[2]), static_cast<std::uint8_t>(fields[3])};
}

std::string format_event_record(const DvsEvent& e) {
  return std::to_string(e.t) + "," + std::to_string(e.x) + "," + std::to_string(e.y) + "," +
         std::to_string(e.p);
}

std::vector<EventWindow> window_segment(const std::vector<DvsEvent>& stream,
                                        std::uint64_t duration_us) {
  if (duration_us == 0) fail(Errc::out_of_range, "window duration must be positive");
  std::vector<EventWindow> windows;
  if (stream.empty()) return windows;

  const std::uint64_t t_first = stream.front().t;
  const std::uint64_t t_last = stream.back().t;
  const std::uint64_t count = (t_last - t_first) / duration_us + 1;
  windows.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    windows[i].start = t_first + i * duration_us;
    windows[i].duration = duration_us;
  }
  std::uint64_t prev = t_first;
  for (const DvsEvent& e : stream) {
    if (e.t < prev) fail(Errc::out_of_range, "timestamps must be non-decreasing");
    prev = e.t;
    windows[(e.t - t_first) / duration_us].events.push_back(e);
  }
  return windows;
}

int voxel_bin_index(std::uint64_t t, std::uint64_t start, std::uint64_t duration, int bins) {
  const std::uint64_t offset = t - start;
  std::uint64_t b = offset * static_cast<std::uint64_t>(bins) / duration;
  if (b >= static_cast<std::uint64_t>(bins)) b = bins - 1;
  return static_cast<int>(b);
}

VoxelGrid voxelize(const EventWindow& window, int bins, int height, int width) {
  if (bins < 1) fail(Errc::out_of_range, "bins must be >= 1");
  VoxelGrid grid(bins, height, width);
  for (const DvsEvent& e : window.events) {
    if (e.t < window.start || e.t >= window.start + window.duration)
      fail(Errc::out_of_range, "event at t=" + std::to_string(e.t) + " outside window");
    if (e.x >= width || e.y >= height)
      fail(Errc::dimension_mismatch, "event coordinates exceed grid dims");
    grid.set(voxel_bin_index(e.t, window.start, window.duration, bins), e.p, e.y, e.x);
  }
  return grid;
}

std::vector<DvsEvent> load_events_csv(const std::string& path, const SensorGeometry& sensor) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_failure, "cannot open " + path);
  std::vector<DvsEvent> stream;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (std::isalpha(static_cast<unsigned char>(line[0]))) continue;  // header line
    stream.push_back(parse_event_record(line, sensor));
  }
  return stream;
}

void save_events_csv(const std::string& path, const std::vector<DvsEvent>& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path + " for writing");
  out << "t,x,y,p\n";
  for (const DvsEvent& e : stream) out << format_event_record(e) << "\n";
  if (!out) fail(Errc::io_failure, "write failed: " + path);
}

namespace {

constexpr char kEvtMagic[4] = {'E', 'V', 'T', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_events_binary(const std::string& path, const std::vector<DvsEvent>& stream,
                        const SensorGeometry& sensor) {
  std::string buf;
  buf.reserve(12 + stream.size() * 16);
  buf.append(kEvtMagic, 4);
  put_u32(buf, static_cast<std::uint32_t>(sensor.width));
  put_u32(buf, static_cast<std::uint32_t>(sensor.height));
  for (const DvsEvent& e : stream) {
    if (e.t > 0xffffffffULL)
      fail(Errc::out_of_range, "timestamp too large for 32-bit event record");
    put_u32(buf, static_cast<std::uint32_t>(e.t));
    put_u32(buf, e.x);
    put_u32(buf, e.y);
    put_u32(buf, e.p);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path);
}

std::vector<DvsEvent> load_events_binary(const std::string& path, SensorGeometry* sensor_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), kEvtMagic, 4) != 0)
    fail(Errc::bad_magic, path + " is not an EVT1 event file");
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  SensorGeometry sensor;
  sensor.width = static_cast<int>(get_u32(p + 4));
  sensor.height = static_cast<int>(get_u32(p + 8));
  if ((raw.size() - 12) % 16 != 0)
    fail(Errc::malformed_record, path + ": truncated event record");
  const std::size_t count = (raw.size() - 12) / 16;
  std::vector<DvsEvent> stream;
  stream.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* rec = p + 12 + i * 16;
    DvsEvent e;
    e.t = get_u32(rec);
    const std::uint32_t x = get_u32(rec + 4);
    const std::uint32_t y = get_u32(rec + 8);
    const std::uint32_t pol = get_u32(rec + 12);
    if (pol > 1) fail(Errc::out_of_range, "polarity not in {0,1}");
    if (x >= static_cast<std::uint32_t>(sensor.width) ||
        y >= static_cast<std::uint32_t>(sensor.height))
      fail(Errc::out_of_range, "event coordinates exceed sensor dims");
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.p = static_cast<std::uint8_t>(pol);
    stream.push_back(e);
  }
  if (sensor_out != nullptr) *sensor_out = sensor;
  return stream;
}

std::vector<DvsEvent> load_events(const std::string& path, const SensorGeometry& sensor) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".evt") == 0) {
    SensorGeometry file_sensor;
    auto stream = load_events_binary(path, &file_sensor);
    if (file_sensor.width != sensor.width || file_sensor.height != sensor.height)
      fail(Errc::dimension_mismatch, path + ": sensor dims disagree with configuration");
    return stream;
  }
  return load_events_csv(path, sensor);
}

std::vector<DvsEvent> generate_moving_bar(const MovingBarParams& params, bool rightward,
                                          int start_col, Rng& rng) {
  const int w = params.sensor.width;
  const int h = params.sensor.height;
  const double direction = rightward ? 1.0 : -1.0;
  std::vector<DvsEvent> stream;
  double prev_pos = static_cast<double>(start_col);
  for (std::uint64_t t = 0; t < params.duration_us; t += params.step_us) {
    const double pos = start_col + direction * params.speed_px_per_ms *
                                       (static_cast<double>(t) / 1000.0);
    // Edge columns, wrapped onto the sensor.
    const int base = static_cast<int>(std::floor(pos));
    const int lead = rightward ? base + params.bar_width : base - 1;
    const int trail = rightward ? base : base + params.bar_width - 1;
    auto wrap = [w](int c) { return ((c % w) + w) % w; };
    const bool moved = std::floor(pos) != std::floor(prev_pos) || t == 0;
    prev_pos = pos;
    if (!moved) continue;
    for (int y = 0; y < h; ++y) {
      if (!rng.bernoulli(params.drop_prob))
        stream.push_back(DvsEvent{t, static_cast<std::uint16_t>(wrap(lead)),
                                  static_cast<std::uint16_t>(y), 1});
      if (!rng.bernoulli(params.drop_prob))
        stream.push_back(DvsEvent{t, static_cast<std::uint16_t>(wrap(trail)),
                                  static_cast<std::uint16_t>(y), 0});
    }
  }
  return stream;
}

}  // namespace neuroisp::events
