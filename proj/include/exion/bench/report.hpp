#pragma once

#include <string>
#include <vector>

#include "exion/bench/experiment.hpp"

namespace exion::bench {

inline constexpr int kReportSchemaVersion = 1;

enum class Format { Json, Csv };
// Throws ConfigError on anything but json or csv.
Format parse_format(std::string_view s);

// Stable key order, no wall-clock fields.
std::string emit_json(const std::vector<RunReport>& reports);
// Header plus one row per (config, layer).
std::string emit_csv(const std::vector<RunReport>& reports);
std::string emit(const std::vector<RunReport>& reports, Format f);

// Sweep summary: one row per grid point.
std::string emit_sweep_csv(const std::vector<SweepPoint>& points);

// Writes to `path`, or stdout when path is empty or "-". Throws IoError.
void write_output(const std::string& path, const std::string& content);

// Shortest round-trip decimal form, shared by both formats.
std::string format_double(double v);

}  // namespace exion::bench
