#include "hiersteer/recording.hpp"

#include <cmath>
#include <numbers>

#include "hiersteer/textio.hpp"

namespace hiersteer {

VehicleState start_state(const Track& track, Direction direction) {
  const Pose2 p = track.at(0.0);
  VehicleState st;
  st.x = p.x;
  st.y = p.y;
  st.heading = direction == Direction::kCcw ? p.heading : std::remainder(p.heading + std::numbers::pi, 2 * std::numbers::pi);
  st.s = 0.0;
  return st;
}

double progress_delta(const Track& track, double s_prev, double s_next, Direction direction) {
  const double ds = std::remainder(s_next - s_prev, track.total_length);
  return direction == Direction::kCcw ? ds : -ds;
}

LapLog run_recording_lap(const Track& track, const CameraRig& rig, Direction direction, const RecordingConfig& config) {
  if (!(config.dt > 0)) throw ParameterError("run_recording_lap: dt must be positive");
  rig.validate();
  LapLog log;
  log.header.track_hash = track.hash;
  log.header.direction = direction;
  log.header.dt = static_cast<float>(config.dt);
  log.header.height = static_cast<std::uint16_t>(rig.height);
  log.header.width = static_cast<std::uint16_t>(rig.width);

  VehicleState st = start_state(track, direction);
  double progress = 0.0;
  for (std::size_t step = 0; progress < track.total_length; ++step) {
    if (step >= config.max_steps) throw RecordingError("recording: lap not completed within the step limit");
    const double t = static_cast<double>(step) * config.dt;
    const int zone = zone_of(track, st.s);
    const double label = oracle_steering(track, st, direction, config.vehicle);
    double applied = label;
    if (config.perturbation) {
      const Perturbation& p = *config.perturbation;
      applied += p.amplitude * std::sin(2 * std::numbers::pi * t / p.period + p.phase);
    }
    const double throttle = config.throttle[static_cast<std::size_t>(zone)];

    FrameRecord f;
    f.frame_index = static_cast<std::uint32_t>(step);
    f.timestamp = t;
    f.steering = static_cast<float>(label);
    f.throttle = static_cast<float>(throttle);
    f.frame_rate = static_cast<float>(1.0 / config.dt);
    f.zone = static_cast<std::uint8_t>(zone);
    f.image = quantize_image(render_stereo(track, st, rig));
    log.frames.push_back(std::move(f));
    log.poses.push_back({st.x, st.y, st.heading, st.s});

    VehicleState next = step_vehicle(st, applied, throttle, config.dt, config.vehicle);
    next.s = track.project(next.x, next.y);
    progress += progress_delta(track, st.s, next.s, direction);
    st = next;
    std::size_t cone = 0;
    if (detect_cone_strike(track, st, config.vehicle, &cone))
      throw RecordingError("recording: cone " + std::to_string(cone) + " struck at t=" + format_double(t) +
                           " pose (" + format_double(st.x) + ", " + format_double(st.y) + ")");
  }
  return log;
}

}  // namespace hiersteer
