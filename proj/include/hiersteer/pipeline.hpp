#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hiersteer/recording.hpp"
#include "hiersteer/router.hpp"
#include "hiersteer/trainer.hpp"

namespace hiersteer {

/// Training plan of one model: base laps (split evenly across directions),
/// epochs and Adam learning rate.
struct ModelPlan {
  std::string model;
  std::size_t base_laps = 20;
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
};

/// Model names in training order.
inline const std::array<std::string, 7> kModelNames = {"mcn",  "srn1", "srn2",    "srn3",
                                                       "srn4", "srn5", "baseline"};

/// Desk-scale plan: the schedule's base-lap counts with epochs cut to fit a
/// single CPU. `full_plan` keeps the schedule's epochs too.
std::vector<ModelPlan> desk_plan();
std::vector<ModelPlan> full_plan();

/// Everything the pipeline needs; parsed from a `key = value` manifest.
struct PipelineConfig {
  std::uint64_t seed = 1;
  bool deterministic = false;
  double scale = 0.5;
  TrackConfig track;
  // Recorded laps per direction: base laps first, then held-out test laps.
  std::size_t train_laps_per_direction = 10;
  std::size_t test_laps_per_direction = 4;
  double perturb_amplitude = 25.0;
  double perturb_period = 2.0;
  std::vector<ModelPlan> models = desk_plan();
  std::size_t drive_laps = 3;
  std::string drive_direction = "both";
  std::string controller = "router";
  double recall_threshold = 0.90;
  std::size_t steering_decimation = 1;

  const ModelPlan& plan(const std::string& model) const;
  /// Canonical manifest text; parse_pipeline_config(to_text()) round-trips.
  std::string to_text() const;
};

/// Keys: seed, scale, deterministic, train_laps_per_direction,
/// test_laps_per_direction, perturb_amplitude, perturb_period, drive_laps,
/// direction, controller, recall_threshold, steering_decimation,
/// schedule (desk|paper), <model>.epochs, <model>.base_laps,
/// <model>.lr, track_config (path, relative to `base_dir`) and track.<key>
/// for any track setting. Throws ParameterError on unknown keys or values.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Independent stream seed for `stream` derived from the manifest seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

using Logger = std::function<void(const std::string&)>;

std::filesystem::path lap_file_name(Direction d, std::size_t n);

/// Builds the track and writes track.cfg, centerline.csv, cones.csv and
/// track.svg into `out`.
Track stage_gen_track(const PipelineConfig& cfg, const std::filesystem::path& out);

/// Records `per_direction` oracle laps in each of `directions` into out/laps
/// as lap_<dir>_<n>.hml (n from 1). Returns the written paths.
std::vector<std::filesystem::path> stage_record(const PipelineConfig& cfg, const Track& track,
                                                const std::filesystem::path& out, std::size_t per_direction,
                                                const Logger& log = {},
                                                const std::vector<Direction>& directions = {Direction::kCw,
                                                                                           Direction::kCcw});

/// "cw", "ccw" or "both".
std::vector<Direction> parse_directions(const std::string& text);

/// Reads lap_<dir>_1..n for both directions (cw laps first). Throws
/// DataError naming every missing file.
std::vector<LapLog> load_laps(const std::filesystem::path& out, std::size_t per_direction);

struct TrainSummary {
  std::string model;
  std::size_t train_samples = 0, test_samples = 0, train_frames = 0, base_laps = 0, epochs = 0;
  double final_train_loss = 0, final_test_loss = 0, seconds = 0;
};

/// Trains `models` (all when empty) and writes <model>.ckpt (final weights)
/// and losses_<model>.csv/.svg into out/models.
std::vector<TrainSummary> stage_train(const PipelineConfig& cfg, std::span<const LapLog> laps,
                                      const std::filesystem::path& out,
                                      const std::vector<std::string>& models = {}, const Logger& log = {});

struct EvalReport {
  std::array<ConfusionMatrix, 2> confusion;  // indexed by Direction
  std::array<double, kZoneCount> zone_mse{};
  std::array<std::size_t, kZoneCount> zone_frames{};
  std::array<BaselineReport, 2> baseline;  // per direction
  std::size_t params_srn1 = 0, params_baseline = 0;
  std::size_t test_laps = 0;
  double recall_threshold = 0.9;

  double min_recall() const;
  bool mse_ok() const;
  bool recall_ok() const;
  bool passed() const { return mse_ok() && recall_ok(); }
  /// Baseline within a factor of two of the hierarchy, both directions.
  bool baseline_parity() const;
};

/// Held-out evaluation: confusion per direction, per-zone SRN MSE, router
/// traces (trace_<dir>_<n>.csv), baseline comparison and report.txt, all in
/// out/eval.
EvalReport stage_eval(const PipelineConfig& cfg, std::span<const LapLog> laps, const Track& track,
                      const std::filesystem::path& out, const Logger& log = {});

struct DriveSummary {
  std::vector<std::pair<Direction, DriveResult>> runs;
  double seconds = 0;  // wall clock of all runs
  bool success() const;
};

/// Closed-loop runs with the router (or the oracle) in the configured
/// directions; writes drive_<dir>_<lap>.csv, strikes.csv and drive.txt into
/// out/drive (out/drive_oracle for the oracle).
DriveSummary stage_drive(const PipelineConfig& cfg, const Track& track, const std::filesystem::path& out,
                         const Logger& log = {});

/// Stage cache: a stage whose stamp file holds `key` is skipped.
bool stage_cached(const std::filesystem::path& stamp, const std::string& key);
void stage_mark(const std::filesystem::path& stamp, const std::string& key);

struct RunAllResult {
  EvalReport eval;
  DriveSummary drive;
};

/// gen-track -> record -> train -> eval -> drive, each stage skipped when its
/// inputs hash to the stamp left by a previous run.
RunAllResult run_all(const PipelineConfig& cfg, const std::filesystem::path& out, const Logger& log = {});

}  // namespace hiersteer
