#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "hiersteer/recording.hpp"
#include "hiersteer/textio.hpp"

using namespace hiersteer;

namespace {

constexpr double kPi = std::numbers::pi;

const Track& nominal() {
  static const Track t = build_track({});
  return t;
}

VehicleState on_centerline(const Track& t, double s) {
  const Pose2 p = t.at(s);
  VehicleState st;
  st.x = p.x;
  st.y = p.y;
  st.heading = p.heading;
  st.s = s;
  return st;
}

// Track with a single cone at (x, y), used for rendering and strike probes.
Track single_cone(double x, double y) {
  Track t = nominal();
  t.cones = {Cone{x, y, Shade::kLight}};
  return t;
}

struct Blob {
  double u = 0, v = 0, mass = 0, width = 0;
};

// Centroid and horizontal extent of the cone-colored pixels of one camera.
Blob measure(const Tensor<float>& img, const Tensor<float>& bg_img, std::size_t camera, std::size_t H,
             std::size_t W) {
  Blob b;
  double umin = 1e9, umax = -1e9;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      // Blue channel: cones are far below the background in blue.
      const std::size_t idx = (camera * 3 + 2) * H * W + i * W + j;
      const float blue = img[idx], bg = bg_img[idx];
      const double a = std::clamp(static_cast<double>((bg - blue) / (bg - 0.2f)), 0.0, 1.0);
      if (a <= 0.01) continue;
      b.mass += a;
      b.u += a * (static_cast<double>(j) + 0.5);
      b.v += a * (static_cast<double>(i) + 0.5);
      umin = std::min(umin, static_cast<double>(j));
      umax = std::max(umax, static_cast<double>(j) + 1);
    }
  if (b.mass > 0) {
    b.u /= b.mass;
    b.v /= b.mass;
    b.width = umax - umin;
  }
  return b;
}

}  // namespace

TEST_CASE("track closes and partitions into zones") {
  const Track& t = nominal();
  const Pose2 a = t.at(0.0);
  const Segment& last = t.segments.back();
  // End of the last segment evaluated directly.
  const Pose2 e = [&] {
    const double u = last.length;
    const double h = last.heading0 + last.curvature * u;
    return Pose2{last.x0 + (std::sin(h) - std::sin(last.heading0)) / last.curvature,
                 last.y0 - (std::cos(h) - std::cos(last.heading0)) / last.curvature, h};
  }();
  CHECK(std::hypot(e.x - a.x, e.y - a.y) < 1e-6);
  CHECK(std::abs(std::remainder(e.heading - a.heading, 2 * kPi)) < 1e-9);

  int count[6] = {};
  double covered = 0;
  for (std::size_t i = 0; i < t.zones.size(); ++i) {
    const ZoneInterval& z = t.zones[i];
    ++count[z.zone];
    covered += z.end - z.start;
    if (i > 0) CHECK(z.start == t.zones[i - 1].end);
  }
  CHECK(t.zones.front().start == 0.0);
  CHECK(t.zones.back().end == t.total_length);
  CHECK(covered == doctest::Approx(t.total_length).epsilon(1e-12));
  for (int z = 1; z <= 5; ++z) CHECK(count[z] >= 1);
  CHECK(count[1] >= 2);
  // Tight turns flank the gradual turn.
  for (std::size_t i = 0; i < t.zones.size(); ++i)
    if (t.zones[i].zone == 4) {
      REQUIRE(i > 0);
      REQUIRE(i + 1 < t.zones.size());
      CHECK(t.zones[i - 1].zone == 3);
      CHECK(t.zones[i + 1].zone == 3);
    }
}

TEST_CASE("cones sit on both lane edges at fixed spacing") {
  const Track& t = nominal();
  const auto per_side = static_cast<std::size_t>(std::floor(t.total_length / t.config.cone_spacing));
  CHECK(t.cones.size() == 2 * per_side);
  std::size_t dark = 0;
  for (std::size_t k = 0; k < per_side; ++k) {
    const double s = static_cast<double>(k) * t.config.cone_spacing;
    const Pose2 p = t.at(s);
    for (std::size_t side = 0; side < 2; ++side) {
      const Cone& c = t.cones[2 * k + side];
      CHECK(std::hypot(c.x - p.x, c.y - p.y) == doctest::Approx(t.config.lane_width / 2).epsilon(1e-9));
      dark += c.shade == Shade::kDark;
    }
  }
  CHECK(dark == per_side);
}

TEST_CASE("track construction is deterministic and validated") {
  TrackConfig jittered;
  jittered.cone_jitter = 0.01;
  jittered.seed = 7;
  const Track a = build_track(jittered), b = build_track(jittered);
  REQUIRE(a.cones.size() == b.cones.size());
  for (std::size_t i = 0; i < a.cones.size(); ++i) {
    CHECK(a.cones[i].x == b.cones[i].x);
    CHECK(a.cones[i].y == b.cones[i].y);
  }
  CHECK(a.hash == b.hash);
  CHECK(a.hash != nominal().hash);

  TrackConfig bad;
  bad.lane_width = -1;
  CHECK_THROWS_AS(build_track(bad), ConstructionError);
  TrackConfig overlapping;
  overlapping.lane_width = 2.5;  // corridors of the two tight turns collide
  overlapping.cone_radius = 0.04;
  CHECK_THROWS_AS(build_track(overlapping), ConstructionError);
  TrackConfig longer;
  longer.straight_a = 30;
  CHECK(build_track(longer).total_length == doctest::Approx(nominal().total_length + 2 * 27.8));
  TrackConfig unclosable;
  unclosable.tight_radius = 2.0;  // tight turns alone overshoot the chicane's rise
  CHECK_THROWS_AS(build_track(unclosable), ConstructionError);
}

TEST_CASE("track config text round trip") {
  TrackConfig c;
  c.lane_width = 0.55;
  c.seed = 99;
  c.shading = Shading::kZones;
  const TrackConfig back = parse_track_config(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(parse_track_config("# comment\nlane_width = 0.7 # trailing\n").lane_width == 0.7);
  CHECK_THROWS_AS(parse_track_config("lane_wdith = 0.7\n"), ParameterError);
  CHECK_THROWS_AS(parse_track_config("lane_width = wide\n"), ParameterError);
  CHECK_THROWS_AS(parse_track_config("lane_width\n"), ParameterError);
}

TEST_CASE("zone_of follows the interval table") {
  const Track& t = nominal();
  CHECK(zone_of(t, 1.0) == 1);
  for (const ZoneInterval& z : t.zones) CHECK(zone_of(t, z.start) == z.zone);
  CHECK(zone_of(t, t.total_length + 1.0) == zone_of(t, 1.0));
  CHECK(zone_of(t, -0.5) == zone_of(t, t.total_length - 0.5));
  // Partition scan: walk the table independently.
  std::size_t idx = 0;
  for (double s = 0; s < t.total_length; s += 0.1) {
    while (s >= t.zones[idx].end) ++idx;
    CHECK(zone_of(t, s) == t.zones[idx].zone);
  }
}

TEST_CASE("projection recovers arc length") {
  const Track& t = nominal();
  for (double s = 0.05; s < t.total_length; s += 0.37) {
    const Pose2 p = t.at(s);
    double d = 1;
    const double back = t.project(p.x - 0.1 * std::sin(p.heading), p.y + 0.1 * std::cos(p.heading), &d);
    CHECK(std::abs(std::remainder(back - s, t.total_length)) < 1e-6);
    CHECK(d == doctest::Approx(0.1).epsilon(1e-6));
  }
}

TEST_CASE("step_vehicle kinematics") {
  VehicleConfig vc;
  VehicleState st;
  for (int i = 0; i < 100; ++i) st = step_vehicle(st, 0, 1.0, 0.05, vc);
  CHECK(st.heading == 0.0);
  CHECK(st.x == doctest::Approx(5.0));
  CHECK(st.y == 0.0);

  CHECK(step_vehicle({}, 250, 1, 0.1, vc).steering_cmd == 100);
  CHECK(step_vehicle({}, -250, 1, 0.1, vc).steering_cmd == -100);
  CHECK_THROWS_AS(step_vehicle({}, 0, 1, 0.0, vc), ParameterError);

  // Speed follows throttle only.
  CHECK(step_vehicle({}, 80, 0.5, 0.1, vc).speed == doctest::Approx(0.5 * vc.max_speed));

  // Analytic circle: +cmd turns right, center on the right-hand side.
  for (double cmd : {35.0, -60.0}) {
    const double delta = std::abs(cmd) / 100 * vc.max_steer_rad();
    const double radius = vc.wheelbase / std::tan(delta);
    CHECK(turning_radius(cmd, vc) == doctest::Approx(radius));
    const double side = cmd > 0 ? -1.0 : 1.0;  // center y sign
    const double cy = side * radius;
    const double dt = 1e-3, v = vc.max_speed;
    const auto steps = static_cast<int>(std::ceil(2 * kPi * radius / (v * dt)));
    VehicleState s;
    double worst = 0;
    for (int i = 1; i <= steps; ++i) {
      s = step_vehicle(s, cmd, 1.0, dt, vc);
      const double ang = v * dt * i / radius;
      const double ex = radius * std::sin(ang), ey = cy - side * radius * std::cos(ang);
      worst = std::max(worst, std::hypot(s.x - ex, s.y - ey));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("oracle steering sign and symmetry") {
  const Track& t = nominal();
  VehicleState st = on_centerline(t, 1.0);
  CHECK(std::abs(oracle_steering(t, st, Direction::kCcw)) < 1e-9);
  VehicleState left = st;
  left.y += 0.1;  // heading east, +y is left
  CHECK(oracle_steering(t, left, Direction::kCcw) > 0);
  VehicleState right = st;
  right.y -= 0.1;
  CHECK(oracle_steering(t, right, Direction::kCcw) < 0);
  // Driving west along the same straight, +y is now on the right.
  VehicleState back = left;
  back.heading = kPi;
  CHECK(oracle_steering(t, back, Direction::kCw) < 0);
}

TEST_CASE("closed-loop oracle lap in both directions") {
  const Track& t = nominal();
  const CameraRig rig = rig_for_scale(0.5);
  std::size_t frames[2];
  for (Direction d : {Direction::kCw, Direction::kCcw}) {
    const LapLog log = run_recording_lap(t, rig, d);
    double worst = 0;
    int hist[6] = {};
    for (std::size_t i = 0; i < log.frames.size(); ++i) {
      double e = 0;
      t.project(log.poses[i].x, log.poses[i].y, &e);
      worst = std::max(worst, e);
      REQUIRE(log.frames[i].zone >= 1);
      REQUIRE(log.frames[i].zone <= 5);
      ++hist[log.frames[i].zone];
      // Without perturbation the label is the oracle at the logged state.
      VehicleState st;
      st.x = log.poses[i].x;
      st.y = log.poses[i].y;
      st.heading = log.poses[i].heading;
      CHECK(log.frames[i].steering == static_cast<float>(oracle_steering(t, st, d)));
    }
    CHECK(worst < t.config.lane_width / 4);
    for (int z = 1; z <= 5; ++z) CHECK(hist[z] > 0);
    frames[static_cast<int>(d)] = log.frames.size();
  }
  CHECK(std::abs(static_cast<double>(frames[0]) - static_cast<double>(frames[1])) <= 2);

  RecordingConfig perturbed;
  perturbed.perturbation = Perturbation{};
  const LapLog p = run_recording_lap(t, rig, Direction::kCcw, perturbed);
  const LapLog q = run_recording_lap(t, rig, Direction::kCcw, perturbed);
  CHECK(p == q);
}

TEST_CASE("recording raises on a strike") {
  Track t = nominal();
  // A cone dropped onto the centerline a little way ahead.
  const Pose2 p = t.at(1.0);
  t.cones.push_back({p.x, p.y, Shade::kDark});
  CHECK_THROWS_AS(run_recording_lap(t, rig_for_scale(0.5), Direction::kCcw), RecordingError);
}

TEST_CASE("cone strike boundaries") {
  const Track& t = nominal();
  VehicleConfig vc;
  const VehicleState st = on_centerline(t, 1.0);  // heading east
  CHECK_FALSE(detect_cone_strike(t, st, vc));
  const Footprint f = footprint_of(st, vc);
  CHECK(detect_cone_strike(single_cone(f.cx, f.cy), st, vc));
  const double r = t.config.cone_radius;
  // Exactly on the inflated side boundary: not a strike.
  const double edge = f.cy + f.half_width + r;
  CHECK_FALSE(detect_cone_strike(single_cone(f.cx, edge), st, vc));
  CHECK(detect_cone_strike(single_cone(f.cx, edge - 1e-9), st, vc));
  // Rounded corner: distance r along the diagonal from the corner.
  const double cx = f.cx + f.half_length, cy = f.cy + f.half_width;
  CHECK_FALSE(detect_cone_strike(single_cone(cx + r / std::sqrt(2.0) + 1e-12, cy + r / std::sqrt(2.0) + 1e-12), st, vc));
  CHECK(detect_cone_strike(single_cone(cx + r * 0.7, cy), st, vc));
}

TEST_CASE("stereo rendering geometry") {
  const CameraRig rig = rig_for_scale(0.5);
  const std::size_t H = rig.height, W = rig.width;
  VehicleState st;  // at the origin facing +x

  Track empty = nominal();
  empty.cones.clear();
  const Tensor<float> bg = render_stereo(empty, st, rig);
  CHECK(bg.shape() == Shape{6, H, W});
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < H; ++i) CHECK(bg[(c * H + i) * W] == bg[(c * H + i) * W + W - 1]);
  for (float v : bg.data()) {
    REQUIRE(v >= 0);
    REQUIRE(v <= 1);
  }

  const double near = 0.8, far = 1.6;
  const Tensor<float> img_near = render_stereo(single_cone(near, 0), st, rig);
  const Tensor<float> img_far = render_stereo(single_cone(far, 0), st, rig);
  const Blob ln = measure(img_near, bg, 0, H, W), rn = measure(img_near, bg, 1, H, W);
  const Blob lf = measure(img_far, bg, 0, H, W), rf = measure(img_far, bg, 1, H, W);
  REQUIRE(ln.mass > 0);
  REQUIRE(lf.mass > 0);

  // Projection oracle: pinhole with the camera shifted by half the baseline.
  const double f = (W / 2.0) / std::tan(rig.hfov_deg * kPi / 360.0);
  const double pitch = rig.pitch_deg * kPi / 180.0, dz = rig.cone_height - rig.mount_height;
  auto expected_u = [&](double x, double lateral) {
    const double depth = x * std::cos(pitch) - dz * std::sin(pitch);
    return W / 2.0 - f * (-lateral) / depth;
  };
  CHECK(ln.u == doctest::Approx(expected_u(near, rig.baseline / 2)).epsilon(0.02));
  CHECK(rn.u == doctest::Approx(expected_u(near, -rig.baseline / 2)).epsilon(0.02));
  // Opposite offsets about the vertical midline; same row in both cameras.
  CHECK(ln.u > W / 2.0);
  CHECK(rn.u < W / 2.0);
  CHECK(ln.u - W / 2.0 == doctest::Approx(W / 2.0 - rn.u).epsilon(0.01));
  CHECK(ln.v == doctest::Approx(rn.v).epsilon(1e-6));
  // Disparity shrinks with depth.
  CHECK(ln.u - rn.u > lf.u - rf.u);
  CHECK(lf.u - rf.u > 0);

  // 1/depth law on the projected radius.
  const Projection pn = project_point(rig, st, 0, near, 0, rig.cone_height, rig.cone_draw_radius);
  const Projection pf = project_point(rig, st, 0, 2 * near, 0, rig.cone_height, rig.cone_draw_radius);
  const double depth_ratio = pn.depth / pf.depth;
  CHECK(pf.radius == doctest::Approx(pn.radius * depth_ratio));
  CHECK(std::abs(pf.radius - pn.radius / 2) <= 1.0);
  // Rendered widths follow within a pixel of the analytic diameters.
  CHECK(std::abs(ln.width - 2 * pn.radius) <= 2.0);

  // Behind the camera or beyond range: nothing drawn.
  CHECK(render_stereo(single_cone(-1.0, 0), st, rig) == bg);
  CHECK(render_stereo(single_cone(rig.max_range + 0.5, 0), st, rig) == bg);
}

TEST_CASE("track exports") {
  const auto dir = std::filesystem::temp_directory_path() / "hiersteer_test_track";
  std::filesystem::remove_all(dir);
  export_centerline_csv(nominal(), dir / "center.csv");
  export_cones_csv(nominal(), dir / "cones.csv");
  export_track_svg(nominal(), dir / "track.svg");
  const std::string cones = read_text(dir / "cones.csv");
  CHECK(std::count(cones.begin(), cones.end(), '\n') == static_cast<long>(nominal().cones.size() + 1));
  const std::string svg = read_text(dir / "track.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::filesystem::remove_all(dir);
}
