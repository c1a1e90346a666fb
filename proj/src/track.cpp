#include "hiersteer/track.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "hiersteer/binio.hpp"
#include "hiersteer/textio.hpp"

namespace hiersteer {

namespace {

constexpr double kPi = std::numbers::pi;
double deg(double d) { return d * kPi / 180.0; }

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& key, const std::string& value) {
  double out = 0;
  const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size() || !std::isfinite(out))
    throw ParameterError("track config: " + key + " expects a number, got '" + value + "'");
  return out;
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::kCw ? "cw" : "ccw"; }

Direction parse_direction(const std::string& text) {
  if (text == "cw") return Direction::kCw;
  if (text == "ccw") return Direction::kCcw;
  throw ParameterError("direction must be cw or ccw, got '" + text + "'");
}

std::string TrackConfig::to_text() const {
  std::ostringstream os;
  auto put = [&](const char* k, double v) { os << k << " = " << format_double(v) << "\n"; };
  put("lane_width", lane_width);
  put("cone_spacing", cone_spacing);
  put("cone_radius", cone_radius);
  put("cone_jitter", cone_jitter);
  put("straight_a", straight_a);
  put("straight_b", straight_b);
  put("swerve_radius", swerve_radius);
  put("swerve_angle_deg", swerve_angle_deg);
  put("tight_radius", tight_radius);
  put("tight_angle_deg", tight_angle_deg);
  put("chicane_radius", chicane_radius);
  put("chicane_angle_deg", chicane_angle_deg);
  os << "shading = " << (shading == Shading::kSides ? "sides" : "zones") << "\n";
  os << "seed = " << seed << "\n";
  return os.str();
}

TrackConfig parse_track_config(const std::string& text) {
  TrackConfig c;
  const std::map<std::string, double*> numbers = {
      {"lane_width", &c.lane_width},         {"cone_spacing", &c.cone_spacing},
      {"cone_radius", &c.cone_radius},       {"cone_jitter", &c.cone_jitter},
      {"straight_a", &c.straight_a},         {"straight_b", &c.straight_b},
      {"swerve_radius", &c.swerve_radius},   {"swerve_angle_deg", &c.swerve_angle_deg},
      {"tight_radius", &c.tight_radius},     {"tight_angle_deg", &c.tight_angle_deg},
      {"chicane_radius", &c.chicane_radius}, {"chicane_angle_deg", &c.chicane_angle_deg},
  };
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("track config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (auto it = numbers.find(key); it != numbers.end()) {
      *it->second = parse_number(key, value);
    } else if (key == "shading") {
      if (value == "sides")
        c.shading = Shading::kSides;
      else if (value == "zones")
        c.shading = Shading::kZones;
      else
        throw ParameterError("track config: shading must be sides or zones");
    } else if (key == "seed") {
      std::uint64_t s = 0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), s);
      if (r.ec != std::errc() || r.ptr != value.data() + value.size())
        throw ParameterError("track config: seed expects an unsigned integer");
      c.seed = s;
    } else {
      throw ParameterError("track config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return c;
}

TrackConfig load_track_config(const std::filesystem::path& path) { return parse_track_config(read_text(path)); }

namespace {

Pose2 segment_pose(const Segment& g, double u) {
  if (g.curvature == 0.0)
    return {g.x0 + u * std::cos(g.heading0), g.y0 + u * std::sin(g.heading0), g.heading0};
  const double h = g.heading0 + g.curvature * u;
  return {g.x0 + (std::sin(h) - std::sin(g.heading0)) / g.curvature,
          g.y0 - (std::cos(h) - std::cos(g.heading0)) / g.curvature, h};
}

// Arc-length parameter of the closest point of `g` to (x, y), clamped to the segment.
double segment_project(const Segment& g, double x, double y) {
  if (g.curvature == 0.0) {
    const double u = (x - g.x0) * std::cos(g.heading0) + (y - g.y0) * std::sin(g.heading0);
    return std::clamp(u, 0.0, g.length);
  }
  const double r = 1.0 / g.curvature;
  const double cx = g.x0 - r * std::sin(g.heading0), cy = g.y0 + r * std::cos(g.heading0);
  // Polar angle of the start point and of the query, measured around the center.
  const double a0 = std::atan2(g.y0 - cy, g.x0 - cx);
  const double a = std::atan2(y - cy, x - cx);
  const double sweep = g.curvature > 0 ? 1.0 : -1.0;
  double d = sweep * (a - a0);
  d = std::fmod(d, 2 * kPi);
  if (d < 0) d += 2 * kPi;
  const double u = d * std::abs(r);
  if (u <= g.length) return u;
  // Outside the swept range: pick the nearer endpoint.
  const Pose2 e = segment_pose(g, g.length);
  const double d0 = std::hypot(x - g.x0, y - g.y0), d1 = std::hypot(x - e.x, y - e.y);
  return d0 <= d1 ? 0.0 : g.length;
}

struct Builder {
  std::vector<Segment> segs;
  double s = 0, x = 0, y = 0, h = 0;

  void add(double length, double curvature, int zone) {
    Segment g{s, length, x, y, h, curvature, zone};
    const Pose2 e = segment_pose(g, length);
    segs.push_back(g);
    s += length;
    x = e.x;
    y = e.y;
    h = e.heading;
  }
  void straight(double length, int zone) { add(length, 0.0, zone); }
  void arc(double radius, double angle_rad, bool left, int zone) {
    add(radius * angle_rad, (left ? 1.0 : -1.0) / radius, zone);
  }
};

// Lays out everything before the return straight; returns the builder.
Builder lay_first_half(const TrackConfig& c, double gradual_radius) {
  Builder b;
  b.straight(c.straight_a, 1);
  b.arc(c.swerve_radius, deg(c.swerve_angle_deg), false, 2);
  b.arc(c.swerve_radius, deg(c.swerve_angle_deg), true, 2);
  b.straight(c.straight_b, 1);
  b.arc(c.tight_radius, deg(c.tight_angle_deg), true, 3);
  b.arc(gradual_radius, deg(2 * c.tight_angle_deg - 180), false, 4);
  b.arc(c.tight_radius, deg(c.tight_angle_deg), true, 3);
  return b;
}

// Displacement of the chicane (left, right, left) starting at the origin heading west.
Pose2 chicane_offset(const TrackConfig& c) {
  Builder b;
  b.h = kPi;
  b.arc(c.chicane_radius, deg(c.chicane_angle_deg), true, 5);
  b.arc(c.chicane_radius, deg(2 * c.chicane_angle_deg - 180), false, 5);
  b.arc(c.chicane_radius, deg(c.chicane_angle_deg), true, 5);
  return {b.x, b.y, b.h};
}

void require(bool ok, const std::string& why) {
  if (!ok) throw ConstructionError("track: " + why);
}

}  // namespace

double Track::wrap(double s) const {
  double w = std::fmod(s, total_length);
  if (w < 0) w += total_length;
  if (w >= total_length) w = 0;
  return w;
}

Pose2 Track::at(double s) const {
  s = wrap(s);
  auto it = std::upper_bound(segments.begin(), segments.end(), s,
                             [](double v, const Segment& g) { return v < g.s0; });
  const Segment& g = *(it - 1);
  return segment_pose(g, std::min(s - g.s0, g.length));
}

double Track::project(double x, double y, double* distance) const {
  double best = std::numeric_limits<double>::infinity(), best_s = 0;
  for (const Segment& g : segments) {
    const double u = segment_project(g, x, y);
    const Pose2 p = segment_pose(g, u);
    const double d = std::hypot(x - p.x, y - p.y);
    if (d < best) {
      best = d;
      best_s = g.s0 + u;
    }
  }
  if (distance) *distance = best;
  return wrap(best_s);
}

Track build_track(const TrackConfig& c) {
  for (double v : {c.lane_width, c.cone_spacing, c.cone_radius, c.straight_a, c.straight_b, c.swerve_radius,
                   c.swerve_angle_deg, c.tight_radius, c.chicane_radius})
    if (!(v > 0)) throw ConstructionError("track: all dimensions must be positive");
  require(c.cone_jitter >= 0, "cone_jitter must be >= 0");
  require(c.swerve_angle_deg < 90, "swerve angle must be below 90 degrees");
  require(c.tight_angle_deg > 90 && c.tight_angle_deg < 180, "tight turn angle must lie in (90, 180) degrees");
  require(c.chicane_angle_deg > 90 && c.chicane_angle_deg < 180, "chicane angle must lie in (90, 180) degrees");
  require(c.cone_radius < c.lane_width / 2, "cones wider than the lane");

  // Vertical closure fixes the gradual-turn radius; solve by bisection.
  const Pose2 chicane = chicane_offset(c);
  auto closure_y = [&](double radius) { return lay_first_half(c, radius).y + chicane.y; };
  double lo = c.tight_radius * 0.25, hi = 100.0;
  require(closure_y(lo) * closure_y(hi) < 0, "no gradual-turn radius closes the loop vertically");
  for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((closure_y(lo) < 0) == (closure_y(mid) < 0) ? lo : hi) = mid;
  }
  const double gradual_radius = 0.5 * (lo + hi);
  require(gradual_radius >= 1.5 * c.tight_radius, "gradual turn radius " + format_double(gradual_radius) +
                                                       " is not gentler than the tight turns");

  Builder b = lay_first_half(c, gradual_radius);
  // Return straight heading west; its length closes the loop horizontally.
  const double return_length = b.x + chicane.x;
  require(return_length >= c.lane_width, "return straight would be shorter than a lane width");
  b.straight(return_length, 1);
  b.arc(c.chicane_radius, deg(c.chicane_angle_deg), true, 5);
  b.arc(c.chicane_radius, deg(2 * c.chicane_angle_deg - 180), false, 5);
  b.arc(c.chicane_radius, deg(c.chicane_angle_deg), true, 5);
  require(std::hypot(b.x, b.y) < 1e-6, "loop does not close");

  Track t;
  t.config = c;
  t.segments = std::move(b.segs);
  t.total_length = b.s;
  // Merge consecutive segments of one zone into intervals.
  for (const Segment& g : t.segments) {
    if (!t.zones.empty() && t.zones.back().zone == g.zone)
      t.zones.back().end = g.s0 + g.length;
    else
      t.zones.push_back({g.s0, g.s0 + g.length, g.zone});
  }
  t.zones.back().end = t.total_length;

  // Corridors of distant parts of the loop must not overlap.
  const double step = c.lane_width / 4;
  std::vector<Pose2> samples;
  std::vector<double> at_s;
  for (double s = 0; s < t.total_length; s += step) {
    samples.push_back(t.at(s));
    at_s.push_back(s);
  }
  const double min_arc = kPi * c.lane_width;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double ds = std::min(at_s[j] - at_s[i], t.total_length - (at_s[j] - at_s[i]));
      if (ds < min_arc) continue;
      const double d = std::hypot(samples[i].x - samples[j].x, samples[i].y - samples[j].y);
      require(d >= 2 * c.lane_width, "centerline comes within " + format_double(d) + " m of itself near s=" +
                                         format_double(at_s[i]) + " and s=" + format_double(at_s[j]));
    }

  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> jitter(-c.cone_jitter, c.cone_jitter);
  const auto count = static_cast<std::size_t>(std::floor(t.total_length / c.cone_spacing + 1e-9));
  for (std::size_t k = 0; k < count; ++k) {
    const double s = static_cast<double>(k) * c.cone_spacing;
    const Pose2 p = t.at(s);
    const int zone = zone_of(t, s);
    for (int side : {+1, -1}) {
      Cone cone;
      cone.x = p.x - side * std::sin(p.heading) * c.lane_width / 2;
      cone.y = p.y + side * std::cos(p.heading) * c.lane_width / 2;
      if (c.cone_jitter > 0) {
        cone.x += jitter(rng);
        cone.y += jitter(rng);
      }
      if (c.shading == Shading::kSides) {
        cone.shade = side > 0 ? Shade::kDark : Shade::kLight;
      } else {
        // Zone pattern: runs of `zone` cones of one shade, alternating.
        cone.shade = (k / static_cast<std::size_t>(zone)) % 2 == 0 ? Shade::kDark : Shade::kLight;
      }
      t.cones.push_back(cone);
    }
  }

  Fnv1a hash;
  hash.update("hiersteer-track-v1\n" + c.to_text());
  t.hash = hash.digest();
  return t;
}

int zone_of(const Track& track, double s) {
  s = track.wrap(s);
  auto it = std::upper_bound(track.zones.begin(), track.zones.end(), s,
                             [](double v, const ZoneInterval& z) { return v < z.start; });
  return (it - 1)->zone;
}

void export_centerline_csv(const Track& track, const std::filesystem::path& path, double step) {
  std::ostringstream os;
  os << "s,x,y,heading,zone\n";
  for (double s = 0; s < track.total_length; s += step) {
    const Pose2 p = track.at(s);
    os << format_double(s) << ',' << format_double(p.x) << ',' << format_double(p.y) << ','
       << format_double(p.heading) << ',' << zone_of(track, s) << '\n';
  }
  write_text(path, os.str());
}

void export_cones_csv(const Track& track, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "x,y,shade\n";
  for (const Cone& c : track.cones)
    os << format_double(c.x) << ',' << format_double(c.y) << ',' << (c.shade == Shade::kDark ? "dark" : "light")
       << '\n';
  write_text(path, os.str());
}

void export_track_svg(const Track& track, const std::filesystem::path& path) {
  double minx = 1e9, miny = 1e9, maxx = -1e9, maxy = -1e9;
  for (const Cone& c : track.cones) {
    minx = std::min(minx, c.x);
    maxx = std::max(maxx, c.x);
    miny = std::min(miny, c.y);
    maxy = std::max(maxy, c.y);
  }
  const double pad = 0.5, scale = 60.0;
  const double w = (maxx - minx + 2 * pad) * scale, h = (maxy - miny + 2 * pad) * scale;
  auto X = [&](double x) { return (x - minx + pad) * scale; };
  auto Y = [&](double y) { return (maxy - y + pad) * scale; };
  static const char* zone_colors[] = {"#000", "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f0\"/>\n";
  for (const ZoneInterval& z : track.zones) {
    os << "<polyline fill=\"none\" stroke-width=\"3\" stroke=\"" << zone_colors[z.zone] << "\" points=\"";
    for (double s = z.start; s <= z.end + 1e-9; s += 0.05) {
      const Pose2 p = track.at(std::min(s, z.end - 1e-9));
      os << X(p.x) << ',' << Y(p.y) << ' ';
    }
    os << "\"/>\n";
  }
  for (const Cone& c : track.cones)
    os << "<circle cx=\"" << X(c.x) << "\" cy=\"" << Y(c.y) << "\" r=\"" << track.config.cone_radius * scale
       << "\" fill=\"" << (c.shade == Shade::kDark ? "#c85a00" : "#ffa64d") << "\"/>\n";
  for (int zone = 1; zone <= 5; ++zone)
    os << "<text x=\"10\" y=\"" << 18 * zone << "\" font-size=\"14\" fill=\"" << zone_colors[zone] << "\">zone "
       << zone << "</text>\n";
  os << "</svg>\n";
  write_text(path, os.str());
}

}  // namespace hiersteer
