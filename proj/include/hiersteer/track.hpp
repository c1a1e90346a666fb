#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hiersteer/errors.hpp"

namespace hiersteer {

enum class Direction : std::uint8_t { kCw = 0, kCcw = 1 };
std::string to_string(Direction d);
Direction parse_direction(const std::string& text);

enum class Shade : std::uint8_t { kLight = 0, kDark = 1 };

/// How cone shades are assigned: by side of the lane, or by a per-zone
/// pattern (both sides follow the zone's shade sequence).
enum class Shading { kSides, kZones };

/// Five-zone loop dimensions in meters / degrees. The gradual-turn radius and
/// the return straight are solved so the loop closes.
struct TrackConfig {
  double lane_width = 0.6;
  double cone_spacing = 0.3;
  double cone_radius = 0.04;
  double cone_jitter = 0.0;  // uniform positional jitter amplitude, seeded
  double straight_a = 2.2;   // zone 1, first straight
  double straight_b = 2.2;   // zone 1, between swerve and tight turn
  double swerve_radius = 1.0;
  double swerve_angle_deg = 60.0;
  double tight_radius = 0.8;
  double tight_angle_deg = 110.0;  // the gradual turn sweeps 2*tight - 180
  double chicane_radius = 0.9;
  double chicane_angle_deg = 120.0;  // outer arcs; middle arc sweeps 2*outer - 180
  Shading shading = Shading::kSides;
  std::uint64_t seed = 0;

  /// Canonical `key = value` text; parse_track_config(to_text()) round-trips.
  std::string to_text() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and
/// malformed values throw ParameterError.
TrackConfig parse_track_config(const std::string& text);
TrackConfig load_track_config(const std::filesystem::path& path);

/// Straight (curvature 0) or circular arc, parameterized by arc length.
struct Segment {
  double s0 = 0;
  double length = 0;
  double x0 = 0, y0 = 0, heading0 = 0;
  double curvature = 0;  // 1/R, positive = left turn
  int zone = 1;
};

struct Pose2 {
  double x = 0, y = 0, heading = 0;
};

struct ZoneInterval {
  double start = 0, end = 0;
  int zone = 1;
};

struct Cone {
  double x = 0, y = 0;
  Shade shade = Shade::kLight;
};

struct Track {
  TrackConfig config;
  std::vector<Segment> segments;
  std::vector<ZoneInterval> zones;
  std::vector<Cone> cones;
  double total_length = 0;
  std::uint64_t hash = 0;

  /// Centerline pose at arc length s (wrapped).
  Pose2 at(double s) const;
  /// Nearest centerline arc length and the unsigned distance to it.
  double project(double x, double y, double* distance = nullptr) const;
  double wrap(double s) const;
};

/// Builds the loop: straight (1), swerve (2), straight (1), tight (3),
/// gradual (4), tight (3), straight (1), chicane (5). Throws
/// ConstructionError when the dimensions cannot close a clear loop.
Track build_track(const TrackConfig& config);

/// Zone at arc length s (wrapped); intervals are half-open [start, end).
int zone_of(const Track& track, double s);

/// CSV of centerline samples: s,x,y,heading,zone.
void export_centerline_csv(const Track& track, const std::filesystem::path& path, double step = 0.05);
/// CSV of cones: x,y,shade.
void export_cones_csv(const Track& track, const std::filesystem::path& path);
void export_track_svg(const Track& track, const std::filesystem::path& path);

}  // namespace hiersteer
