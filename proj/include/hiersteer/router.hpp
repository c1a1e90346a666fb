#pragma once

#include <array>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hiersteer/model.hpp"
#include "hiersteer/recording.hpp"

namespace hiersteer {

/// MCN-to-SRN dispatch over a buffer of recent frames.
///
/// SRN windows are re-evaluated from the buffer every step; the per-frame
/// part of each recurrent SRN (everything before its RNN) is cached per
/// buffered frame because it depends on the frame alone.
class Router {
 public:
  struct Output {
    double steering = 0;  // clamped to [-100, 100]
    double raw = 0;       // SRN output before clamping
    int zone = 1;
    double throttle = 0;
  };

  explicit Router(const Shape& input_shape);

  void set_mcn(ModelWeights<float> weights);
  void set_srn(int zone, ModelWeights<float> weights);
  /// Loads mcn.ckpt and srn1..5.ckpt from a directory.
  void load(const std::filesystem::path& dir);
  bool ready() const noexcept;

  ThrottleMap throttle = kDefaultThrottle;

  /// Pushes the frame, classifies it and runs the selected SRN. Throws
  /// StateError when weights are missing and DimensionError on a frame of
  /// the wrong shape.
  Output step(const Tensor<float>& frame);
  /// Zone logits of the MCN for one frame (no buffering).
  std::vector<float> classify(const Tensor<float>& frame) const;
  void reset();

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t buffered() const noexcept { return buffer_.size(); }
  const ModelSpec& mcn_spec() const noexcept { return mcn_spec_; }
  const ModelSpec& srn_spec(int zone) const { return srn_specs_.at(static_cast<std::size_t>(zone - 1)); }

 private:
  struct Entry {
    Tensor<float> frame;
    std::map<int, std::map<std::size_t, Tensor<float>>> projections;  // zone -> layer -> [1, hidden]
  };

  double run_srn(int zone);

  Shape input_shape_;
  ModelSpec mcn_spec_;
  std::array<ModelSpec, kZoneCount> srn_specs_;
  std::optional<ModelWeights<float>> mcn_;
  std::array<std::optional<ModelWeights<float>>, kZoneCount> srns_;
  std::size_t capacity_ = 1;
  std::deque<Entry> buffer_;
};

/// Something that picks steering and throttle for the current step.
struct ControlOutput {
  double steering = 0;
  double throttle = 0;
  int zone = 0;  // selected zone, 0 if the controller has none
};
using Controller = std::function<ControlOutput(const Tensor<float>& frame, const VehicleState& state)>;

Controller oracle_controller(const Track& track, Direction direction, const VehicleConfig& vehicle = {},
                             const ThrottleMap& throttle = kDefaultThrottle);
/// Wraps a router; resets it on construction.
Controller router_controller(Router& router);

/// Per-step record of one lap; distances are normalized to [0, 1].
struct LapTrace {
  Direction direction = Direction::kCcw;
  std::vector<double> distance;
  std::vector<double> steering;
  std::vector<double> steering_truth;  // oracle reference (NaN when absent)
  std::vector<int> zone_pred, zone_truth;
  std::vector<double> x, y;

  std::size_t size() const noexcept { return distance.size(); }
};

struct StrikeEvent {
  std::size_t lap = 0, step = 0, cone = 0;
  double x = 0, y = 0, heading = 0;
};

struct DriveConfig {
  double dt = 0.05;
  VehicleConfig vehicle;
  CameraRig rig;
  std::size_t max_steps_per_lap = 4000;
  bool stop_on_strike = false;
  // The controller is queried every step but its steering is applied only
  // every `steering_decimation` steps (1: every step).
  std::size_t steering_decimation = 1;
};

struct DriveResult {
  bool success = false;
  std::size_t laps_completed = 0;
  std::size_t strikes = 0;  // contact episodes
  bool aborted = false;     // left the corridor or ran out of steps
  std::string abort_reason;
  std::vector<LapTrace> traces;
  std::vector<StrikeEvent> strike_log;
};

/// Closed loop at fixed dt: render, control, step. Success iff every lap
/// completes with zero strikes. Leaving the corridor by more than two lane
/// widths aborts the run.
DriveResult drive_autonomous(const Track& track, const Controller& controller, Direction direction,
                             std::size_t laps, const DriveConfig& config);

/// Open loop over a logged lap: router steering against the recorded label.
LapTrace predict_lap(Router& router, const LapLog& lap, double track_length);
/// Same, for a single feed-forward regressor (e.g. the baseline).
LapTrace predict_lap_single(const ModelSpec& spec, const ModelWeights<float>& weights, const LapLog& lap,
                            double track_length);

/// Mean of (pred - truth)² over a trace, optionally for one true zone.
double trace_mse(const LapTrace& trace, int zone = 0);

struct ZoneMse {
  std::array<double, kZoneCount> hier{}, base{};
  std::array<std::size_t, kZoneCount> frames{};
};
struct BaselineReport {
  double mse_hier = 0, mse_base = 0;
  ZoneMse per_zone;
  std::size_t frames = 0;
};
/// Throws DataError when the two trace sets do not line up frame for frame.
BaselineReport compare_baseline(const std::vector<LapTrace>& hier, const std::vector<LapTrace>& base);

inline constexpr double kStretchCw = 1.02;
inline constexpr double kStretchCcw = 1.03;
double stretch_preset(Direction d);
/// Scales the lap-distance axis and clamps it back into [0, 1].
LapTrace align_lap(const LapTrace& trace, double stretch);

/// distance,steering_pred,steering_truth,zone_pred,zone_truth,x,y
void write_trace_csv(const LapTrace& trace, const std::filesystem::path& path);

}  // namespace hiersteer
