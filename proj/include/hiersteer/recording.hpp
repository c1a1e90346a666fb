#pragma once

#include <array>
#include <optional>

#include "hiersteer/datalog.hpp"
#include "hiersteer/sim.hpp"

namespace hiersteer {

/// Throttle fraction of max speed per zone (index 0 unused).
using ThrottleMap = std::array<double, 6>;
inline constexpr ThrottleMap kDefaultThrottle = {1.0, 1.0, 0.7, 0.5, 0.7, 0.5};

/// Sinusoidal steering disturbance added to the oracle command while the
/// logged label stays the oracle's; the oracle then recovers.
struct Perturbation {
  double amplitude = 25.0;  // normalized steering units
  double period = 2.0;      // seconds
  double phase = 0.0;       // radians
};

struct RecordingConfig {
  double dt = 0.05;
  VehicleConfig vehicle;
  ThrottleMap throttle = kDefaultThrottle;
  std::optional<Perturbation> perturbation;
  std::size_t max_steps = 20000;
};

/// Vehicle placed on the centerline at s = 0 facing the driving direction.
VehicleState start_state(const Track& track, Direction direction);

/// Advances the lap progress estimate with the new arc length; progress is
/// positive along the driving direction.
double progress_delta(const Track& track, double s_prev, double s_next, Direction direction);

/// Drives one lap with the pure-pursuit oracle, logging the stereo image,
/// oracle steering, throttle, frame rate and zone of every step. Frames carry
/// the state before the step. Throws RecordingError on a cone strike.
LapLog run_recording_lap(const Track& track, const CameraRig& rig, Direction direction,
                         const RecordingConfig& config = {});

}  // namespace hiersteer
