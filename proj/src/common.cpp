#include "neuroisp/common.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>

namespace neuroisp {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::malformed_record: return "MalformedRecord";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::empty_stream: return "EmptyStream";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::non_finite_input: return "NonFiniteInput";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::framing_error: return "FramingError";
    case Errc::all_pixels_excluded: return "AllPixelsExcluded";
    case Errc::degenerate_channel: return "DegenerateChannel";
    case Errc::bad_magic: return "BadMagic";
    case Errc::depth_mismatch: return "DepthMismatch";
    case Errc::missing_sidecar: return "MissingSidecar";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::io_failure: return "IoFailure";
    case Errc::no_overlap: return "NoOverlap";
    case Errc::invalid_directive: return "InvalidDirective";
    case Errc::usage_error: return "UsageError";
  }
  return "UnknownError";
}

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("NEUROISP_LOG");
    if (env == nullptr) return LogLevel::warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

void log_msg(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* tags[] = {"error", "warn", "info", "debug"};
  std::cerr << "[" << tags[static_cast<int>(level)] << "] " << msg << "\n";
}

}  // namespace neuroisp
