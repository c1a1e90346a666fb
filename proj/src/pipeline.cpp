#include "hiersteer/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "hiersteer/binio.hpp"
#include "hiersteer/plot.hpp"
#include "hiersteer/textio.hpp"

namespace hiersteer {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  double v = 0;
  const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size() || !std::isfinite(v))
    throw ParameterError("manifest: " + key + " expects a number, got '" + value + "'");
  return v;
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    throw ParameterError("manifest: " + key + " expects an unsigned integer, got '" + value + "'");
  return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParameterError("manifest: " + key + " expects true or false");
}

ModelPlan& find_plan(std::vector<ModelPlan>& plans, const std::string& model) {
  for (ModelPlan& p : plans)
    if (p.model == model) return p;
  throw ParameterError("manifest: unknown model '" + model + "'");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

ModelSpec spec_for(const std::string& model, const Shape& in) {
  if (model == "mcn") return build_mcn(in);
  if (model == "baseline") return build_baseline(in);
  if (model.size() == 4 && model.starts_with("srn") && model[3] >= '1' && model[3] <= '5')
    return build_srn(model[3] - '0', in);
  throw ParameterError("unknown model '" + model + "'");
}

// Position of lap i within its direction (1-based), laps ordered cw then ccw.
std::size_t lap_number(std::span<const LapLog> laps, std::size_t i) {
  std::size_t n = 0;
  for (std::size_t j = 0; j <= i; ++j)
    if (laps[j].header.direction == laps[i].header.direction) ++n;
  return n;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::string s = "true_zone,pred1,pred2,pred3,pred4,pred5,recall\n";
  for (std::size_t r = 0; r < kZoneCount; ++r) {
    s += std::to_string(r + 1);
    for (std::size_t c = 0; c < kZoneCount; ++c) s += "," + std::to_string(m.counts[r][c]);
    s += "," + format_double(m.recall(r)) + "\n";
  }
  return s;
}

}  // namespace

std::vector<ModelPlan> desk_plan() {
  return {{"mcn", 20, 24, 1e-3},  {"srn1", 8, 80, 3e-4}, {"srn2", 20, 30, 3e-4},   {"srn3", 20, 40, 3e-4},
          {"srn4", 8, 50, 3e-4}, {"srn5", 8, 40, 3e-4}, {"baseline", 20, 8, 3e-4}};
}

std::vector<ModelPlan> full_plan() {
  std::vector<ModelPlan> plans = desk_plan();
  for (ModelPlan& p : plans) {
    const TrainingSchedule s = default_schedule(p.model);
    p.base_laps = s.base_laps;
    p.epochs = s.epochs;
  }
  return plans;
}

const ModelPlan& PipelineConfig::plan(const std::string& model) const {
  for (const ModelPlan& p : models)
    if (p.model == model) return p;
  throw ParameterError("manifest: no plan for model '" + model + "'");
}

std::string PipelineConfig::to_text() const {
  std::string s;
  s += "seed = " + std::to_string(seed) + "\n";
  s += "deterministic = " + std::string(deterministic ? "true" : "false") + "\n";
  s += "scale = " + format_double(scale) + "\n";
  s += "train_laps_per_direction = " + std::to_string(train_laps_per_direction) + "\n";
  s += "test_laps_per_direction = " + std::to_string(test_laps_per_direction) + "\n";
  s += "perturb_amplitude = " + format_double(perturb_amplitude) + "\n";
  s += "perturb_period = " + format_double(perturb_period) + "\n";
  s += "drive_laps = " + std::to_string(drive_laps) + "\n";
  s += "direction = " + drive_direction + "\n";
  s += "controller = " + controller + "\n";
  s += "recall_threshold = " + format_double(recall_threshold) + "\n";
  s += "steering_decimation = " + std::to_string(steering_decimation) + "\n";
  for (const ModelPlan& p : models) {
    s += p.model + ".base_laps = " + std::to_string(p.base_laps) + "\n";
    s += p.model + ".epochs = " + std::to_string(p.epochs) + "\n";
    s += p.model + ".lr = " + format_double(p.learning_rate) + "\n";
  }
  std::istringstream track_lines(track.to_text());
  for (std::string line; std::getline(track_lines, line);)
    if (!trim(line).empty()) s += "track." + trim(line) + "\n";
  return s;
}

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base_dir) {
  PipelineConfig c;
  std::string track_text;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("manifest line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "seed") {
      c.seed = parse_count(key, value);
    } else if (key == "deterministic") {
      c.deterministic = parse_flag(key, value);
    } else if (key == "scale") {
      c.scale = parse_real(key, value);
    } else if (key == "train_laps_per_direction") {
      c.train_laps_per_direction = parse_count(key, value);
    } else if (key == "test_laps_per_direction") {
      c.test_laps_per_direction = parse_count(key, value);
    } else if (key == "perturb_amplitude") {
      c.perturb_amplitude = parse_real(key, value);
    } else if (key == "perturb_period") {
      c.perturb_period = parse_real(key, value);
    } else if (key == "drive_laps") {
      c.drive_laps = parse_count(key, value);
    } else if (key == "direction") {
      parse_directions(value);
      c.drive_direction = value;
    } else if (key == "controller") {
      if (value != "router" && value != "oracle") throw ParameterError("manifest: controller must be router or oracle");
      c.controller = value;
    } else if (key == "recall_threshold") {
      c.recall_threshold = parse_real(key, value);
    } else if (key == "steering_decimation") {
      c.steering_decimation = parse_count(key, value);
    } else if (key == "schedule") {
      if (value == "desk")
        c.models = desk_plan();
      else if (value == "full")
        c.models = full_plan();
      else
        throw ParameterError("manifest: schedule must be desk or full");
    } else if (key == "track_config") {
      track_text += read_text(base_dir / value) + "\n";
    } else if (key.starts_with("track.")) {
      track_text += key.substr(6) + " = " + value + "\n";
    } else if (const auto dot = key.find('.'); dot != std::string::npos) {
      ModelPlan& p = find_plan(c.models, key.substr(0, dot));
      const std::string field = key.substr(dot + 1);
      if (field == "epochs")
        p.epochs = parse_count(key, value);
      else if (field == "base_laps")
        p.base_laps = parse_count(key, value);
      else if (field == "lr")
        p.learning_rate = parse_real(key, value);
      else
        throw ParameterError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } else {
      throw ParameterError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  c.track = parse_track_config(track_text);
  if (!(c.scale > 0) || c.scale > 1) throw ParameterError("manifest: scale must be in (0, 1]");
  if (c.test_laps_per_direction == 0) throw ParameterError("manifest: test_laps_per_direction must be >= 1");
  if (c.drive_laps == 0) throw ParameterError("manifest: drive_laps must be >= 1");
  if (c.steering_decimation == 0) throw ParameterError("manifest: steering_decimation must be >= 1");
  if (!(c.recall_threshold >= 0 && c.recall_threshold <= 1))
    throw ParameterError("manifest: recall_threshold must be in [0, 1]");
  for (const ModelPlan& p : c.models) {
    if (p.epochs == 0) throw ParameterError("manifest: " + p.model + ".epochs must be >= 1");
    if (!(p.learning_rate > 0)) throw ParameterError("manifest: " + p.model + ".lr must be positive");
    if (p.base_laps == 0 || p.base_laps % 2 != 0)
      throw ParameterError("manifest: " + p.model + ".base_laps must be a positive even count");
    if (p.base_laps / 2 > c.train_laps_per_direction)
      throw ParameterError("manifest: " + p.model + " needs " + std::to_string(p.base_laps / 2) +
                           " base laps per direction, only " + std::to_string(c.train_laps_per_direction) +
                           " recorded");
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return parse_pipeline_config(read_text(path), path.parent_path());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Direction> parse_directions(const std::string& text) {
  if (text == "both") return {Direction::kCw, Direction::kCcw};
  return {parse_direction(text)};
}

fs::path lap_file_name(Direction d, std::size_t n) { return "lap_" + to_string(d) + "_" + std::to_string(n) + ".hml"; }

Track stage_gen_track(const PipelineConfig& cfg, const fs::path& out) {
  const Track track = build_track(cfg.track);
  write_text(out / "track.cfg", cfg.track.to_text());
  export_centerline_csv(track, out / "centerline.csv");
  export_cones_csv(track, out / "cones.csv");
  export_track_svg(track, out / "track.svg");
  return track;
}

std::vector<fs::path> stage_record(const PipelineConfig& cfg, const Track& track, const fs::path& out,
                                   std::size_t per_direction, const Logger& log,
                                   const std::vector<Direction>& directions) {
  const CameraRig rig = rig_for_scale(cfg.scale);
  // Each lap gets its own disturbance phase so recoveries happen at different places.
  const double offset = static_cast<double>(derive_seed(cfg.seed, 1000) >> 11) * 0x1.0p-53 * 2 * kPi;
  std::vector<fs::path> paths;
  for (Direction d : directions) {
    for (std::size_t n = 1; n <= per_direction; ++n) {
      RecordingConfig rc;
      if (cfg.perturb_amplitude > 0)
        rc.perturbation = Perturbation{cfg.perturb_amplitude, cfg.perturb_period,
                                       offset + 0.7 * static_cast<double>(n - 1)};
      const LapLog lap = run_recording_lap(track, rig, d, rc);
      const fs::path p = out / "laps" / lap_file_name(d, n);
      write_lap(lap, p);
      paths.push_back(p);
      say(log, "recorded " + p.filename().string() + " (" + std::to_string(lap.frames.size()) + " frames)");
    }
  }
  return paths;
}

std::vector<LapLog> load_laps(const fs::path& out, std::size_t per_direction) {
  std::vector<LapLog> laps;
  std::vector<std::string> missing;
  for (Direction d : {Direction::kCw, Direction::kCcw})
    for (std::size_t n = 1; n <= per_direction; ++n) {
      const fs::path p = out / "laps" / lap_file_name(d, n);
      if (!fs::exists(p)) {
        missing.push_back(p.filename().string());
        continue;
      }
      laps.push_back(read_lap(p));
    }
  if (!missing.empty()) {
    std::string msg = "missing lap logs in " + (out / "laps").string() + ":";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return laps;
}

std::vector<TrainSummary> stage_train(const PipelineConfig& cfg, std::span<const LapLog> laps, const fs::path& out,
                                      const std::vector<std::string>& models, const Logger& log) {
  const Shape in = input_shape_for_scale(cfg.scale);
  const fs::path dir = out / "models";
  std::vector<TrainSummary> summaries;
  for (std::size_t m = 0; m < kModelNames.size(); ++m) {
    const std::string& name = kModelNames[m];
    if (!models.empty() && std::find(models.begin(), models.end(), name) == models.end()) continue;
    const ModelPlan& plan = cfg.plan(name);
    const ModelSpec spec = spec_for(name, in);
    const DatasetSplit split = make_split(laps, plan.base_laps, cfg.test_laps_per_direction);
    TrainConfig tc;
    tc.epochs = plan.epochs;
    tc.optimizer.learning_rate = plan.learning_rate;
    tc.seed = derive_seed(cfg.seed, m + 1);
    tc.deterministic = cfg.deterministic;
    tc.progress = [&](std::size_t e, double tr, double te) {
      say(log, name + " epoch " + std::to_string(e) + "/" + std::to_string(plan.epochs) + " train " + fixed(tr) +
                   " test " + fixed(te));
    };
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r;
    std::size_t frames = 0;
    if (name == "mcn") {
      r = train_classifier(spec, laps, split.train, split.test, tc);
      frames = split.train.size();
    } else {
      std::vector<ZoneSegment> train_segs, test_segs;
      if (name == "baseline") {
        train_segs = whole_lap_segments(laps, split.train_laps);
        test_segs = whole_lap_segments(laps, split.test_laps);
      } else {
        const int zone = name[3] - '0';
        train_segs = zone_segments(laps, split.train_laps, zone, spec.seq_len);
        test_segs = zone_segments(laps, split.test_laps, zone, spec.seq_len);
      }
      for (const ZoneSegment& s : train_segs) frames += s.size();
      r = train_regressor(spec, laps, train_segs, test_segs, tc);
    }
    save_weights(r.last, dir / (name + ".ckpt"));
    emit_curves(r.curve, dir / ("losses_" + name + ".csv"), dir / ("losses_" + name + ".svg"), name + " loss");
    TrainSummary s{name,          r.train_samples, r.test_samples, frames,
                   plan.base_laps, plan.epochs,     r.curve.train.back(), r.curve.test.back(),
                   seconds_since(t0)};
    say(log, name + " done in " + fixed(s.seconds, 1) + " s");
    summaries.push_back(s);
  }
  std::string csv = "model,base_laps,epochs,train_frames,train_samples,test_samples,final_train_loss,final_test_loss\n";
  for (const TrainSummary& s : summaries)
    csv += s.model + "," + std::to_string(s.base_laps) + "," + std::to_string(s.epochs) + "," +
           std::to_string(s.train_frames) + "," + std::to_string(s.train_samples) + "," +
           std::to_string(s.test_samples) + "," + format_double(s.final_train_loss) + "," +
           format_double(s.final_test_loss) + "\n";
  std::string timing = "model,seconds\n";
  for (const TrainSummary& s : summaries) timing += s.model + "," + fixed(s.seconds, 1) + "\n";
  if (models.empty()) {
    write_text(dir / "train_summary.csv", csv);
    // Wall-clock times vary run to run, so they live apart from the summary.
    write_text(dir / "timings.csv", timing);
  }
  return summaries;
}

double EvalReport::min_recall() const { return std::min(confusion[0].min_recall(), confusion[1].min_recall()); }

bool EvalReport::mse_ok() const {
  return std::all_of(zone_mse.begin(), zone_mse.end(), [](double m) { return std::isfinite(m) && !mse_flagged(m); });
}

bool EvalReport::recall_ok() const { return min_recall() >= recall_threshold; }

bool EvalReport::baseline_parity() const {
  for (const BaselineReport& b : baseline) {
    const double ratio = b.mse_base / b.mse_hier;
    if (!(ratio >= 0.5 && ratio <= 2.0)) return false;
  }
  return true;
}

EvalReport stage_eval(const PipelineConfig& cfg, std::span<const LapLog> laps, const Track& track, const fs::path& out,
                      const Logger& log) {
  const Shape in = input_shape_for_scale(cfg.scale);
  const fs::path models = out / "models", dir = out / "eval";
  EvalReport rep;
  rep.recall_threshold = cfg.recall_threshold;
  const DatasetSplit split = make_split(laps, 2, cfg.test_laps_per_direction);
  rep.test_laps = split.test_laps.size();

  Router router(in);
  router.load(models);
  const ModelSpec base_spec = build_baseline(in);
  const ModelWeights<float> base_w = load_weights(models / "baseline.ckpt", base_spec);
  rep.params_srn1 = param_count(router.srn_spec(1));
  rep.params_baseline = param_count(base_spec);

  const ModelWeights<float> mcn_w = load_weights(models / "mcn.ckpt", router.mcn_spec());
  for (Direction d : {Direction::kCw, Direction::kCcw}) {
    rep.confusion[static_cast<std::size_t>(d)] = evaluate_confusion(router.mcn_spec(), mcn_w, laps, split.test, d);
    write_text(dir / ("confusion_" + to_string(d) + ".csv"), confusion_csv(rep.confusion[static_cast<std::size_t>(d)]));
  }
  say(log, "confusion done, min recall " + fixed(rep.min_recall()));

  std::string zone_csv = "zone,frames,mse,flagged,in_4_12_band\n";
  for (int z = 1; z <= static_cast<int>(kZoneCount); ++z) {
    const ModelSpec& spec = router.srn_spec(z);
    const ModelWeights<float> w = load_weights(models / ("srn" + std::to_string(z) + ".ckpt"), spec);
    const auto segs = zone_segments(laps, split.test_laps, z, spec.seq_len);
    const auto windows = evaluation_windows(spec, segs);
    const std::size_t zi = static_cast<std::size_t>(z - 1);
    rep.zone_frames[zi] = windows.size();
    rep.zone_mse[zi] = evaluate_mse(spec, w, laps, windows);
    zone_csv += std::to_string(z) + "," + std::to_string(windows.size()) + "," + format_double(rep.zone_mse[zi]) + "," +
                (mse_flagged(rep.zone_mse[zi]) ? "1" : "0") + "," +
                (rep.zone_mse[zi] >= 4 && rep.zone_mse[zi] <= 12 ? "1" : "0") + "\n";
    say(log, "srn" + std::to_string(z) + " held-out MSE " + fixed(rep.zone_mse[zi]));
  }
  write_text(dir / "zone_mse.csv", zone_csv);

  std::array<std::vector<LapTrace>, 2> hier, base;
  std::array<std::size_t, 2> overlay_lap{SIZE_MAX, SIZE_MAX};
  for (std::size_t id : split.test_laps) {
    const LapLog& lap = laps[id];
    const std::size_t d = static_cast<std::size_t>(lap.header.direction);
    const std::string tag = to_string(lap.header.direction) + "_" + std::to_string(lap_number(laps, id));
    LapTrace h = predict_lap(router, lap, track.total_length);
    LapTrace b = predict_lap_single(base_spec, base_w, lap, track.total_length);
    write_trace_csv(h, dir / ("trace_" + tag + ".csv"));
    write_trace_csv(b, dir / ("baseline_trace_" + tag + ".csv"));
    if (overlay_lap[d] == SIZE_MAX) overlay_lap[d] = hier[d].size();
    hier[d].push_back(std::move(h));
    base[d].push_back(std::move(b));
    say(log, "traced " + tag);
  }

  std::string cmp = "direction,frames,mse_hier,mse_base,ratio";
  for (std::size_t z = 1; z <= kZoneCount; ++z)
    cmp += ",z" + std::to_string(z) + "_hier,z" + std::to_string(z) + "_base";
  cmp += "\n";
  for (Direction d : {Direction::kCw, Direction::kCcw}) {
    const std::size_t di = static_cast<std::size_t>(d);
    rep.baseline[di] = compare_baseline(hier[di], base[di]);
    const BaselineReport& b = rep.baseline[di];
    cmp += to_string(d) + "," + std::to_string(b.frames) + "," + format_double(b.mse_hier) + "," +
           format_double(b.mse_base) + "," + format_double(b.mse_base / b.mse_hier);
    for (std::size_t z = 0; z < kZoneCount; ++z)
      cmp += "," + format_double(b.per_zone.hier[z]) + "," + format_double(b.per_zone.base[z]);
    cmp += "\n";

    // Overlay of the first test lap in this direction, distance-aligned.
    const LapTrace h = align_lap(hier[di][overlay_lap[di]], stretch_preset(d));
    const LapTrace bl = align_lap(base[di][overlay_lap[di]], stretch_preset(d));
    write_text(dir / ("overlay_" + to_string(d) + ".svg"),
               svg_line_plot("steering, " + to_string(d) + " test lap", "lap distance", "steering",
                             {{"label", h.distance, h.steering_truth},
                              {"hierarchical", h.distance, h.steering},
                              {"baseline", bl.distance, bl.steering}},
                             "MSE hierarchical " + fixed(b.mse_hier, 2) + ", baseline " + fixed(b.mse_base, 2)));
  }
  write_text(dir / "baseline.csv", cmp);

  std::ostringstream r;
  r << "held-out laps: " << rep.test_laps << " (" << cfg.test_laps_per_direction << " per direction)\n\n";
  for (Direction d : {Direction::kCw, Direction::kCcw}) {
    const ConfusionMatrix& m = rep.confusion[static_cast<std::size_t>(d)];
    r << "MCN confusion, " << to_string(d) << " (rows true zone, columns predicted)\n";
    for (std::size_t i = 0; i < kZoneCount; ++i) {
      r << "  zone " << i + 1 << ":";
      for (std::size_t j = 0; j < kZoneCount; ++j) r << " " << m.counts[i][j];
      r << "   recall " << fixed(m.recall(i)) << "\n";
    }
  }
  r << "min per-zone recall " << fixed(rep.min_recall()) << " (threshold " << fixed(rep.recall_threshold, 2) << ")"
    << (rep.recall_ok() ? "" : "  BELOW THRESHOLD") << "\n\n";
  r << "SRN held-out MSE (flag above " << fixed(kMseFlagThreshold, 0) << ", reference band 4-12)\n";
  for (std::size_t z = 0; z < kZoneCount; ++z) {
    const ModelPlan& p = cfg.plan("srn" + std::to_string(z + 1));
    r << "  srn" << z + 1 << ": " << fixed(rep.zone_mse[z]) << " over " << rep.zone_frames[z] << " frames, "
      << p.base_laps << " base laps" << (mse_flagged(rep.zone_mse[z]) ? "  FLAGGED" : "")
      << (rep.zone_mse[z] >= 4 && rep.zone_mse[z] <= 12 ? "  in band" : "  outside band") << "\n";
  }
  r << "\nopen-loop steering MSE, hierarchical vs single baseline\n";
  for (Direction d : {Direction::kCw, Direction::kCcw}) {
    const BaselineReport& b = rep.baseline[static_cast<std::size_t>(d)];
    r << "  " << to_string(d) << ": hierarchical " << fixed(b.mse_hier) << ", baseline " << fixed(b.mse_base)
      << ", ratio " << fixed(b.mse_base / b.mse_hier, 3) << " over " << b.frames << " frames\n";
  }
  r << "baseline within a factor of 2: " << (rep.baseline_parity() ? "yes" : "no") << "\n";
  r << "\nparameters: srn1 " << rep.params_srn1 << ", baseline " << rep.params_baseline << "\n";
  r << "training base laps:";
  for (const ModelPlan& p : cfg.models) r << " " << p.model << "=" << p.base_laps;
  r << "\n\nresult: " << (rep.passed() ? "PASS" : "FAIL") << "\n";
  write_text(dir / "report.txt", r.str());
  return rep;
}

bool DriveSummary::success() const {
  return !runs.empty() && std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.second.success; });
}

DriveSummary stage_drive(const PipelineConfig& cfg, const Track& track, const fs::path& out, const Logger& log) {
  const bool oracle = cfg.controller == "oracle";
  const fs::path dir = out / (oracle ? "drive_oracle" : "drive");
  DriveConfig dc;
  dc.rig = rig_for_scale(cfg.scale);
  dc.steering_decimation = cfg.steering_decimation;
  std::optional<Router> router;
  if (!oracle) {
    router.emplace(input_shape_for_scale(cfg.scale));
    router->load(out / "models");
  }
  DriveSummary summary;
  const auto t0 = std::chrono::steady_clock::now();
  std::string strikes = "direction,lap,step,cone,x,y,heading\n";
  std::ostringstream txt;
  for (Direction d : parse_directions(cfg.drive_direction)) {
    const Controller c = oracle ? oracle_controller(track, d, dc.vehicle) : router_controller(*router);
    DriveResult res = drive_autonomous(track, c, d, cfg.drive_laps, dc);
    for (std::size_t l = 0; l < res.traces.size(); ++l)
      write_trace_csv(res.traces[l], dir / ("drive_" + to_string(d) + "_" + std::to_string(l + 1) + ".csv"));
    for (const StrikeEvent& e : res.strike_log)
      strikes += to_string(d) + "," + std::to_string(e.lap + 1) + "," + std::to_string(e.step) + "," +
                 std::to_string(e.cone) + "," + format_double(e.x) + "," + format_double(e.y) + "," +
                 format_double(e.heading) + "\n";
    txt << to_string(d) << ": " << res.laps_completed << "/" << cfg.drive_laps << " laps, " << res.strikes
        << " strikes" << (res.aborted ? ", aborted: " + res.abort_reason : "") << " -> "
        << (res.success ? "success" : "failure") << "\n";
    for (const StrikeEvent& e : res.strike_log)
      txt << "  strike lap " << e.lap + 1 << " step " << e.step << " cone " << e.cone << " at (" << fixed(e.x, 3)
          << ", " << fixed(e.y, 3) << ") heading " << fixed(e.heading, 3) << "\n";
    say(log, "drive " + to_string(d) + ": " + std::to_string(res.laps_completed) + " laps, " +
                 std::to_string(res.strikes) + " strikes" + (res.aborted ? ", " + res.abort_reason : ""));
    summary.runs.emplace_back(d, std::move(res));
  }
  summary.seconds = seconds_since(t0);
  txt << "controller " << cfg.controller << ": " << (summary.success() ? "PASS" : "FAIL") << "\n";
  write_text(dir / "strikes.csv", strikes);
  write_text(dir / "drive.txt", txt.str());
  return summary;
}

bool stage_cached(const fs::path& stamp, const std::string& key) {
  std::error_code ec;
  if (!fs::exists(stamp, ec)) return false;
  return read_text(stamp) == key;
}

void stage_mark(const fs::path& stamp, const std::string& key) { write_text(stamp, key); }

RunAllResult run_all(const PipelineConfig& cfg, const fs::path& out, const Logger& log) {
  PipelineConfig c = cfg;
  const std::size_t per_direction = c.train_laps_per_direction + c.test_laps_per_direction;
  const Track track = stage_gen_track(c, out);

  // Stage keys chain the hashes of everything upstream.
  std::ostringstream rk;
  rk << "record\n" << track.hash << "\n" << format_double(c.scale) << "\n" << per_direction << "\n"
     << format_double(c.perturb_amplitude) << "\n" << format_double(c.perturb_period) << "\n" << c.seed << "\n";
  const std::string record_key = std::to_string(fnv1a(rk.str()));
  if (stage_cached(out / ".stamp_record", record_key)) {
    say(log, "record: cached");
  } else {
    stage_record(c, track, out, per_direction, log);
    stage_mark(out / ".stamp_record", record_key);
  }
  const std::vector<LapLog> laps = load_laps(out, per_direction);

  std::string tk = "train\n" + record_key + "\n" + std::to_string(c.test_laps_per_direction) + "\n";
  for (const ModelPlan& p : c.models)
    tk += p.model + " " + std::to_string(p.base_laps) + " " + std::to_string(p.epochs) + " " +
          format_double(p.learning_rate) + "\n";
  const std::string train_key = std::to_string(fnv1a(tk));
  if (stage_cached(out / ".stamp_train", train_key)) {
    say(log, "train: cached");
  } else {
    stage_train(c, laps, out, {}, log);
    stage_mark(out / ".stamp_train", train_key);
  }

  RunAllResult r;
  r.eval = stage_eval(c, laps, track, out, log);
  r.drive = stage_drive(c, track, out, log);
  return r;
}

}  // namespace hiersteer
