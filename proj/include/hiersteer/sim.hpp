#pragma once

#include <cstddef>

#include "hiersteer/tensor.hpp"
#include "hiersteer/track.hpp"

namespace hiersteer {

/// Kinematic bicycle parameters. Steering commands are normalized to
/// [-100, 100] with +100 a full right turn.
struct VehicleConfig {
  double wheelbase = 0.33;
  double max_steer_deg = 30.0;
  double max_speed = 1.0;  // m/s at throttle 1
  double footprint_length = 0.40;
  double footprint_width = 0.20;
  double lookahead = 0.3;  // pure pursuit

  double max_steer_rad() const;
};

/// (x, y) is the rear-axle point; `s` is the nearest centerline arc length.
struct VehicleState {
  double x = 0, y = 0, heading = 0;
  double speed = 0;
  double steering_cmd = 0;
  double s = 0;
};

double clamp_steering(double cmd);

/// Advances the bicycle model by dt with constant speed = throttle * max_speed
/// and steering held over the step. Integrates the resulting arc exactly.
/// Leaves `s` untouched. Throws ParameterError when dt <= 0.
VehicleState step_vehicle(const VehicleState& state, double steering_cmd, double throttle, double dt,
                          const VehicleConfig& config = {});

/// Turning radius of the rear axle for a steering command (infinite for 0).
double turning_radius(double steering_cmd, const VehicleConfig& config = {});

/// Pure pursuit toward the centerline point `lookahead` ahead in the driving
/// direction. Returns a clamped normalized command.
double oracle_steering(const Track& track, const VehicleState& state, Direction direction,
                       const VehicleConfig& config = {});

/// Oriented footprint, centred half a wheelbase ahead of the rear axle.
struct Footprint {
  double cx = 0, cy = 0, heading = 0;
  double half_length = 0, half_width = 0;
};
Footprint footprint_of(const VehicleState& state, const VehicleConfig& config = {});

/// Distance from (px, py) to the footprint rectangle (0 inside).
double distance_to_footprint(const Footprint& f, double px, double py);

/// True iff some cone center lies strictly inside the footprint inflated by
/// the cone radius. Returns the index of the first struck cone through `hit`.
bool detect_cone_strike(const Track& track, const VehicleState& state, const VehicleConfig& config = {},
                        std::size_t* hit = nullptr);

struct CameraRig {
  std::size_t width = 168;
  std::size_t height = 94;
  double baseline = 0.12;
  double mount_height = 0.15;
  double pitch_deg = 12.0;  // downward tilt
  double hfov_deg = 120.0;
  double max_range = 4.0;
  double near_clip = 0.05;
  double cone_height = 0.06;  // height of the drawn disc center
  double cone_draw_radius = 0.06;

  double focal_px() const;
  /// Validates dimensions; throws ParameterError.
  void validate() const;
};

/// Rig matching the network input at a given scale (168x94 at 1.0).
CameraRig rig_for_scale(double scale);

/// Screen-space projection of a world point for one camera; `lateral` shifts
/// the camera to the left (+) or right (-) of the vehicle axis.
struct Projection {
  bool visible = false;
  double u = 0, v = 0, depth = 0, radius = 0;
};
Projection project_point(const CameraRig& rig, const VehicleState& state, double lateral, double wx, double wy,
                         double wz, double world_radius);

/// Six-channel image [6,H,W] in [0,1]: left camera RGB then right camera RGB.
Tensor<float> render_stereo(const Track& track, const VehicleState& state, const CameraRig& rig);

}  // namespace hiersteer
