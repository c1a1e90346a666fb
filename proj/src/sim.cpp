#include "hiersteer/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "hiersteer/model.hpp"

namespace hiersteer {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) { return std::remainder(a, 2 * kPi); }

// Left-turn steering angle for a normalized command (+100 is full right).
double steer_angle(double cmd, const VehicleConfig& c) { return -clamp_steering(cmd) / 100.0 * c.max_steer_rad(); }

}  // namespace

double VehicleConfig::max_steer_rad() const { return max_steer_deg * kPi / 180.0; }

double clamp_steering(double cmd) {
  if (std::isnan(cmd)) return 0.0;
  return std::clamp(cmd, -kSteeringLimit, kSteeringLimit);
}

VehicleState step_vehicle(const VehicleState& state, double steering_cmd, double throttle, double dt,
                          const VehicleConfig& config) {
  if (!(dt > 0)) throw ParameterError("step_vehicle: dt must be positive");
  VehicleState next = state;
  next.steering_cmd = clamp_steering(steering_cmd);
  next.speed = throttle * config.max_speed;
  const double v = next.speed;
  const double omega = v / config.wheelbase * std::tan(steer_angle(next.steering_cmd, config));
  const double h0 = state.heading;
  if (std::abs(omega * dt) < 1e-12) {
    next.x += v * std::cos(h0) * dt;
    next.y += v * std::sin(h0) * dt;
  } else {
    const double h1 = h0 + omega * dt;
    next.x += v / omega * (std::sin(h1) - std::sin(h0));
    next.y -= v / omega * (std::cos(h1) - std::cos(h0));
    next.heading = wrap_angle(h1);
  }
  return next;
}

double turning_radius(double steering_cmd, const VehicleConfig& config) {
  const double t = std::tan(steer_angle(steering_cmd, config));
  return t == 0.0 ? std::numeric_limits<double>::infinity() : config.wheelbase / std::abs(t);
}

double oracle_steering(const Track& track, const VehicleState& state, Direction direction,
                       const VehicleConfig& config) {
  if (!(config.lookahead > 0)) throw ParameterError("oracle_steering: lookahead must be positive");
  const double s = track.project(state.x, state.y);
  const double ahead = direction == Direction::kCcw ? config.lookahead : -config.lookahead;
  const Pose2 target = track.at(s + ahead);
  const double alpha = wrap_angle(std::atan2(target.y - state.y, target.x - state.x) - state.heading);
  const double kappa = 2.0 * std::sin(alpha) / config.lookahead;
  const double delta_left = std::atan(kappa * config.wheelbase);
  return clamp_steering(-100.0 * delta_left / config.max_steer_rad());
}

Footprint footprint_of(const VehicleState& state, const VehicleConfig& config) {
  Footprint f;
  f.heading = state.heading;
  f.cx = state.x + config.wheelbase / 2 * std::cos(state.heading);
  f.cy = state.y + config.wheelbase / 2 * std::sin(state.heading);
  f.half_length = config.footprint_length / 2;
  f.half_width = config.footprint_width / 2;
  return f;
}

double distance_to_footprint(const Footprint& f, double px, double py) {
  const double dx = px - f.cx, dy = py - f.cy;
  const double c = std::cos(f.heading), s = std::sin(f.heading);
  const double along = std::abs(dx * c + dy * s) - f.half_length;
  const double across = std::abs(-dx * s + dy * c) - f.half_width;
  return std::hypot(std::max(along, 0.0), std::max(across, 0.0));
}

bool detect_cone_strike(const Track& track, const VehicleState& state, const VehicleConfig& config,
                        std::size_t* hit) {
  const Footprint f = footprint_of(state, config);
  const double reach = std::hypot(f.half_length, f.half_width) + track.config.cone_radius;
  for (std::size_t i = 0; i < track.cones.size(); ++i) {
    const Cone& cone = track.cones[i];
    if (std::abs(cone.x - f.cx) > reach || std::abs(cone.y - f.cy) > reach) continue;
    if (distance_to_footprint(f, cone.x, cone.y) < track.config.cone_radius) {
      if (hit) *hit = i;
      return true;
    }
  }
  return false;
}

double CameraRig::focal_px() const {
  return (static_cast<double>(width) / 2) / std::tan(hfov_deg * kPi / 360.0);
}

void CameraRig::validate() const {
  if (width == 0 || height == 0) throw ParameterError("camera rig: image size must be positive");
  if (!(baseline > 0)) throw ParameterError("camera rig: baseline must be positive");
  if (!(hfov_deg > 0 && hfov_deg < 180)) throw ParameterError("camera rig: hfov must lie in (0, 180)");
  if (!(max_range > near_clip && near_clip > 0)) throw ParameterError("camera rig: bad clip range");
}

CameraRig rig_for_scale(double scale) {
  const Shape s = input_shape_for_scale(scale);
  CameraRig rig;
  rig.height = s[1];
  rig.width = s[2];
  return rig;
}

Projection project_point(const CameraRig& rig, const VehicleState& state, double lateral, double wx, double wy,
                         double wz, double world_radius) {
  const double c = std::cos(state.heading), s = std::sin(state.heading);
  const double camx = state.x - lateral * s, camy = state.y + lateral * c;
  const double dx = wx - camx, dy = wy - camy;
  const double fwd = dx * c + dy * s;
  const double left = -dx * s + dy * c;
  const double pitch = rig.pitch_deg * kPi / 180.0;
  const double dz = wz - rig.mount_height;
  Projection p;
  p.depth = fwd * std::cos(pitch) - dz * std::sin(pitch);
  if (p.depth < rig.near_clip || std::hypot(fwd, left) > rig.max_range) return p;
  const double up = fwd * std::sin(pitch) + dz * std::cos(pitch);
  const double f = rig.focal_px();
  p.u = static_cast<double>(rig.width) / 2 - f * left / p.depth;
  p.v = static_cast<double>(rig.height) / 2 - f * up / p.depth;
  p.radius = f * world_radius / p.depth;
  p.visible = p.u + p.radius > 0 && p.u - p.radius < static_cast<double>(rig.width) && p.v + p.radius > 0 &&
              p.v - p.radius < static_cast<double>(rig.height);
  return p;
}

namespace {

using Rgb = std::array<float, 3>;
constexpr Rgb kSky{0.75f, 0.85f, 0.95f};
constexpr Rgb kGround{0.35f, 0.35f, 0.35f};
constexpr Rgb kLightCone{1.0f, 0.65f, 0.2f};
constexpr Rgb kDarkCone{0.8f, 0.35f, 0.05f};

struct Disc {
  Projection p;
  Shade shade;
};

void render_view(const Track& track, const VehicleState& state, const CameraRig& rig, double lateral, float* out) {
  const std::size_t W = rig.width, H = rig.height, plane = W * H;
  const double pitch = rig.pitch_deg * kPi / 180.0;
  const double horizon = static_cast<double>(H) / 2 - rig.focal_px() * std::tan(pitch);
  for (std::size_t i = 0; i < H; ++i) {
    const Rgb& c = static_cast<double>(i) + 0.5 < horizon ? kSky : kGround;
    for (int ch = 0; ch < 3; ++ch) std::fill_n(out + ch * plane + i * W, W, c[ch]);
  }
  std::vector<Disc> discs;
  for (const Cone& cone : track.cones) {
    const Projection p =
        project_point(rig, state, lateral, cone.x, cone.y, rig.cone_height, rig.cone_draw_radius);
    if (p.visible) discs.push_back({p, cone.shade});
  }
  // Painter's order: far to near; ties keep cone order.
  std::stable_sort(discs.begin(), discs.end(), [](const Disc& a, const Disc& b) { return a.p.depth > b.p.depth; });
  for (const Disc& d : discs) {
    const Rgb& color = d.shade == Shade::kDark ? kDarkCone : kLightCone;
    const double r = d.p.radius;
    const auto j0 = static_cast<std::ptrdiff_t>(std::floor(std::max(0.0, d.p.u - r - 1)));
    const auto j1 = static_cast<std::ptrdiff_t>(std::ceil(std::min<double>(W, d.p.u + r + 1)));
    const auto i0 = static_cast<std::ptrdiff_t>(std::floor(std::max(0.0, d.p.v - r - 1)));
    const auto i1 = static_cast<std::ptrdiff_t>(std::ceil(std::min<double>(H, d.p.v + r + 1)));
    for (std::ptrdiff_t i = i0; i < i1; ++i)
      for (std::ptrdiff_t j = j0; j < j1; ++j) {
        const double dist = std::hypot(static_cast<double>(j) + 0.5 - d.p.u, static_cast<double>(i) + 0.5 - d.p.v);
        // Soft edge: full coverage inside r - 0.5, none beyond r + 0.5.
        const auto a = static_cast<float>(std::clamp(r + 0.5 - dist, 0.0, 1.0));
        if (a <= 0) continue;
        const std::size_t idx = static_cast<std::size_t>(i) * W + static_cast<std::size_t>(j);
        for (int ch = 0; ch < 3; ++ch) {
          float& px = out[ch * plane + idx];
          px = px + a * (color[ch] - px);
        }
      }
  }
}

}  // namespace

Tensor<float> render_stereo(const Track& track, const VehicleState& state, const CameraRig& rig) {
  rig.validate();
  Tensor<float> image({kInputChannels, rig.height, rig.width});
  const std::size_t plane = rig.height * rig.width;
  render_view(track, state, rig, rig.baseline / 2, image.data().data());
  render_view(track, state, rig, -rig.baseline / 2, image.data().data() + 3 * plane);
  return image;
}

}  // namespace hiersteer
