#include "hiersteer/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hiersteer/plot.hpp"
#include "hiersteer/textio.hpp"
#include "hiersteer/trainer.hpp"

namespace hiersteer {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t zone_index(int zone) {
  if (zone < 1 || zone > static_cast<int>(kZoneCount)) throw ParameterError("zone must be 1..5");
  return static_cast<std::size_t>(zone - 1);
}

}  // namespace

Router::Router(const Shape& input_shape) : input_shape_(input_shape), mcn_spec_(build_mcn(input_shape)) {
  for (int z = 1; z <= static_cast<int>(kZoneCount); ++z) {
    srn_specs_[zone_index(z)] = build_srn(z, input_shape);
    capacity_ = std::max(capacity_, srn_specs_[zone_index(z)].seq_len);
  }
}

void Router::set_mcn(ModelWeights<float> weights) {
  if (weights.spec_hash != spec_hash(mcn_spec_)) throw IncompatibleCheckpointError("router: weights are not for the MCN");
  mcn_ = std::move(weights);
}

void Router::set_srn(int zone, ModelWeights<float> weights) {
  const ModelSpec& spec = srn_specs_[zone_index(zone)];
  if (weights.spec_hash != spec_hash(spec)) throw IncompatibleCheckpointError("router: weights are not for " + spec.name);
  srns_[zone_index(zone)] = std::move(weights);
  for (Entry& e : buffer_) e.projections.erase(zone);
}

void Router::load(const std::filesystem::path& dir) {
  set_mcn(load_weights(dir / "mcn.ckpt", mcn_spec_));
  for (int z = 1; z <= static_cast<int>(kZoneCount); ++z)
    set_srn(z, load_weights(dir / ("srn" + std::to_string(z) + ".ckpt"), srn_specs_[zone_index(z)]));
}

bool Router::ready() const noexcept {
  return mcn_.has_value() && std::all_of(srns_.begin(), srns_.end(), [](const auto& w) { return w.has_value(); });
}

void Router::reset() { buffer_.clear(); }

std::vector<float> Router::classify(const Tensor<float>& frame) const {
  if (!mcn_) throw StateError("router: MCN weights not loaded");
  const Tensor<float> logits = forward(mcn_spec_, *mcn_, frame);
  return {logits.data().begin(), logits.data().end()};
}

double Router::run_srn(int zone) {
  const ModelSpec& spec = srn_specs_[zone_index(zone)];
  ModelWeights<float>& w = *srns_[zone_index(zone)];
  if (!spec.recurrent()) return static_cast<double>(forward(spec, w, buffer_.back().frame)[0]);

  const std::size_t n = std::min(spec.seq_len, buffer_.size());
  const std::size_t begin = buffer_.size() - n;
  const std::size_t per = shape_volume(input_shape_);
  Tensor<float> frames(Shape{n, input_shape_[0], input_shape_[1], input_shape_[2]});
  std::map<std::size_t, Tensor<float>> stacked;
  for (std::size_t i = 0; i < n; ++i) {
    Entry& e = buffer_[begin + i];
    std::copy(e.frame.data().begin(), e.frame.data().end(), frames.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    auto it = e.projections.find(zone);
    if (it == e.projections.end())
      it = e.projections
               .emplace(zone, frame_projections(spec, w, e.frame.reshaped(Shape{1, input_shape_[0], input_shape_[1],
                                                                                 input_shape_[2]})))
               .first;
    for (const auto& [layer, row] : it->second) {
      auto& dst = stacked[layer];
      if (dst.empty()) dst = Tensor<float>(Shape{n, row.size()});
      std::copy(row.data().begin(), row.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(i * row.size()));
    }
  }
  Graph<float> g;
  std::map<std::size_t, NodeId> proj;
  for (const auto& [layer, t] : stacked) proj.emplace(layer, g.input_ref(t));
  const SamplePlan plan{{n - 1}, {0}};
  const NodeId out = forward_graph(g, spec, w, g.input_ref(frames), plan, false, &proj);
  return static_cast<double>(g.value(out)[0]);
}

Router::Output Router::step(const Tensor<float>& frame) {
  if (frame.shape() != input_shape_)
    throw DimensionError("router: frame shape " + shape_to_string(frame.shape()) + " != " +
                         shape_to_string(input_shape_));
  if (!ready()) throw StateError("router: weights not loaded");
  buffer_.push_back({frame, {}});
  while (buffer_.size() > capacity_) buffer_.pop_front();
  Output out;
  out.zone = static_cast<int>(argmax_zone(classify(frame))) + 1;
  out.raw = run_srn(out.zone);
  out.steering = clamp_steering(out.raw);
  out.throttle = throttle[static_cast<std::size_t>(out.zone)];
  return out;
}

Controller oracle_controller(const Track& track, Direction direction, const VehicleConfig& vehicle,
                             const ThrottleMap& throttle) {
  return [&track, direction, vehicle, throttle](const Tensor<float>&, const VehicleState& state) {
    ControlOutput c;
    c.zone = zone_of(track, state.s);
    c.steering = oracle_steering(track, state, direction, vehicle);
    c.throttle = throttle[static_cast<std::size_t>(c.zone)];
    return c;
  };
}

Controller router_controller(Router& router) {
  router.reset();
  return [&router](const Tensor<float>& frame, const VehicleState&) {
    const Router::Output o = router.step(frame);
    return ControlOutput{o.steering, o.throttle, o.zone};
  };
}

DriveResult drive_autonomous(const Track& track, const Controller& controller, Direction direction,
                             std::size_t laps, const DriveConfig& config) {
  if (!(config.dt > 0)) throw ParameterError("drive: dt must be positive");
  if (laps == 0) throw ParameterError("drive: laps must be >= 1");
  if (config.steering_decimation == 0) throw ParameterError("drive: steering_decimation must be >= 1");
  config.rig.validate();
  DriveResult result;
  VehicleState st = start_state(track, direction);
  const double L = track.total_length;
  double progress = 0;
  bool in_contact = false;
  std::size_t lap_steps = 0;
  double applied = 0;
  LapTrace trace;
  trace.direction = direction;
  for (std::size_t step = 0; result.laps_completed < laps; ++step) {
    const Tensor<float> frame = dequantize_image(quantize_image(render_stereo(track, st, config.rig)),
                                                 config.rig.height, config.rig.width);
    const ControlOutput c = controller(frame, st);
    if (step % config.steering_decimation == 0) applied = c.steering;
    const double lap_start = static_cast<double>(result.laps_completed) * L;
    trace.distance.push_back(std::clamp((progress - lap_start) / L, 0.0, 1.0));
    trace.steering.push_back(applied);
    trace.steering_truth.push_back(oracle_steering(track, st, direction, config.vehicle));
    trace.zone_pred.push_back(c.zone);
    trace.zone_truth.push_back(zone_of(track, st.s));
    trace.x.push_back(st.x);
    trace.y.push_back(st.y);

    VehicleState next = step_vehicle(st, applied, c.throttle, config.dt, config.vehicle);
    double err = 0;
    next.s = track.project(next.x, next.y, &err);
    progress += progress_delta(track, st.s, next.s, direction);
    st = next;
    ++lap_steps;

    std::size_t cone = 0;
    const bool contact = detect_cone_strike(track, st, config.vehicle, &cone);
    if (contact && !in_contact) {
      ++result.strikes;
      result.strike_log.push_back({result.laps_completed, step, cone, st.x, st.y, st.heading});
    }
    in_contact = contact;
    if (contact && config.stop_on_strike) {
      result.aborted = true;
      result.abort_reason = "cone strike";
      break;
    }
    if (err > 2 * track.config.lane_width) {
      result.aborted = true;
      result.abort_reason = "left the track corridor at (" + format_double(st.x) + ", " + format_double(st.y) + ")";
      break;
    }
    if (progress >= static_cast<double>(result.laps_completed + 1) * L) {
      ++result.laps_completed;
      result.traces.push_back(std::move(trace));
      trace = LapTrace{};
      trace.direction = direction;
      lap_steps = 0;
    } else if (lap_steps >= config.max_steps_per_lap) {
      result.aborted = true;
      result.abort_reason = "lap not completed within the step limit";
      break;
    }
  }
  if (trace.size() > 0) result.traces.push_back(std::move(trace));
  result.success = !result.aborted && result.strikes == 0 && result.laps_completed == laps;
  return result;
}

namespace {

// Normalized lap distance of every logged frame.
std::vector<double> lap_distances(const LapLog& lap, double track_length) {
  const std::size_t n = lap.frames.size();
  std::vector<double> d(n, 0.0);
  if (lap.poses.size() == n && n > 0 && track_length > 0) {
    double acc = 0;
    for (std::size_t i = 1; i < n; ++i) {
      const double ds = std::remainder(lap.poses[i].s - lap.poses[i - 1].s, track_length);
      acc += lap.header.direction == Direction::kCcw ? ds : -ds;
      d[i] = std::max(d[i - 1], acc / track_length);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) d[i] = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  }
  for (double& v : d) v = std::clamp(v, 0.0, 1.0);
  return d;
}

LapTrace trace_skeleton(const LapLog& lap, double track_length) {
  LapTrace t;
  t.direction = lap.header.direction;
  t.distance = lap_distances(lap, track_length);
  for (std::size_t i = 0; i < lap.frames.size(); ++i) {
    t.steering_truth.push_back(lap.frames[i].steering);
    t.zone_truth.push_back(lap.frames[i].zone);
    t.x.push_back(lap.poses.size() == lap.frames.size() ? lap.poses[i].x : kNaN);
    t.y.push_back(lap.poses.size() == lap.frames.size() ? lap.poses[i].y : kNaN);
  }
  return t;
}

}  // namespace

LapTrace predict_lap(Router& router, const LapLog& lap, double track_length) {
  LapTrace t = trace_skeleton(lap, track_length);
  router.reset();
  for (const FrameRecord& f : lap.frames) {
    const Router::Output o = router.step(dequantize_image(f.image, lap.header.height, lap.header.width));
    t.steering.push_back(o.steering);
    t.zone_pred.push_back(o.zone);
  }
  return t;
}

LapTrace predict_lap_single(const ModelSpec& spec, const ModelWeights<float>& weights, const LapLog& lap,
                            double track_length) {
  LapTrace t = trace_skeleton(lap, track_length);
  if (lap.frames.empty()) return t;
  const std::vector<ZoneSegment> whole = {{0, 0, lap.frames.size(), false}};
  const std::vector<SequenceWindow> windows = evaluation_windows(spec, whole);
  const std::vector<float> pred = predict_windows(spec, weights, std::span<const LapLog>(&lap, 1), windows);
  for (float p : pred) {
    t.steering.push_back(clamp_steering(p));
    t.zone_pred.push_back(0);
  }
  return t;
}

double trace_mse(const LapTrace& trace, int zone) {
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (zone != 0 && trace.zone_truth[i] != zone) continue;
    if (!std::isfinite(trace.steering_truth[i])) continue;
    const double d = trace.steering[i] - trace.steering_truth[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw DataError("trace_mse: no scored frames");
  return acc / static_cast<double>(n);
}

BaselineReport compare_baseline(const std::vector<LapTrace>& hier, const std::vector<LapTrace>& base) {
  if (hier.size() != base.size()) throw DataError("compare_baseline: lap counts differ");
  BaselineReport r;
  double sh = 0, sb = 0;
  std::array<double, kZoneCount> zh{}, zb{};
  for (std::size_t l = 0; l < hier.size(); ++l) {
    const LapTrace &a = hier[l], &b = base[l];
    if (a.size() != b.size()) throw DataError("compare_baseline: trace lengths differ for lap " + std::to_string(l));
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.zone_truth[i] != b.zone_truth[i] || !(a.steering_truth[i] == b.steering_truth[i]))
        throw DataError("compare_baseline: traces were not produced from the same frames");
      const double dh = a.steering[i] - a.steering_truth[i], db = b.steering[i] - b.steering_truth[i];
      sh += dh * dh;
      sb += db * db;
      const std::size_t z = zone_index(a.zone_truth[i]);
      zh[z] += dh * dh;
      zb[z] += db * db;
      ++r.per_zone.frames[z];
      ++r.frames;
    }
  }
  if (r.frames == 0) throw DataError("compare_baseline: empty traces");
  r.mse_hier = sh / static_cast<double>(r.frames);
  r.mse_base = sb / static_cast<double>(r.frames);
  for (std::size_t z = 0; z < kZoneCount; ++z) {
    const auto n = static_cast<double>(r.per_zone.frames[z]);
    r.per_zone.hier[z] = n > 0 ? zh[z] / n : kNaN;
    r.per_zone.base[z] = n > 0 ? zb[z] / n : kNaN;
  }
  return r;
}

double stretch_preset(Direction d) { return d == Direction::kCw ? kStretchCw : kStretchCcw; }

LapTrace align_lap(const LapTrace& trace, double stretch) {
  if (!(stretch > 0)) throw ParameterError("align_lap: stretch must be positive");
  LapTrace out = trace;
  for (double& d : out.distance) d = std::clamp(d * stretch, 0.0, 1.0);
  return out;
}

void write_trace_csv(const LapTrace& trace, const std::filesystem::path& path) {
  std::vector<double> zp(trace.zone_pred.begin(), trace.zone_pred.end());
  std::vector<double> zt(trace.zone_truth.begin(), trace.zone_truth.end());
  write_text(path, csv_columns({"distance", "steering_pred", "steering_truth", "zone_pred", "zone_truth", "x", "y"},
                               {trace.distance, trace.steering, trace.steering_truth, zp, zt, trace.x, trace.y}));
}

}  // namespace hiersteer
