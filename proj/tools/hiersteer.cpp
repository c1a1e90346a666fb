// Command-line entry point: gen-track, record, train, eval, drive and
// pipeline run-all. Exit codes: 0 ok, 1 acceptance failure, 2 usage or
// configuration error, 3 I/O or format error.

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hiersteer/pipeline.hpp"
#include "hiersteer/textio.hpp"

namespace fs = std::filesystem;
using namespace hiersteer;

namespace {

enum Exit { kOk = 0, kFail = 1, kUsage = 2, kIo = 3 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<double> scale;
  std::string out;
  std::optional<std::size_t> laps;
  std::optional<std::string> direction;
  std::optional<std::string> controller;
  std::vector<std::string> models;
};

PipelineConfig resolve(const Globals& g) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.deterministic) c.deterministic = true;
  if (g.scale) {
    if (!(*g.scale > 0) || *g.scale > 1) throw ParameterError("--scale must be in (0, 1]");
    c.scale = *g.scale;
  }
  if (g.direction) {
    parse_directions(*g.direction);
    c.drive_direction = *g.direction;
  }
  if (g.controller) c.controller = *g.controller;
  return c;
}

fs::path out_dir(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("HIERSTEER_OUT"); env && *env) return env;
  return "hiersteer_out";
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int run(const std::string& cmd, const Globals& g) {
  const PipelineConfig cfg = resolve(g);
  const fs::path out = out_dir(g);
  const std::size_t per_direction = cfg.train_laps_per_direction + cfg.test_laps_per_direction;
  if (cmd == "gen-track") {
    const Track t = stage_gen_track(cfg, out);
    std::cout << "track length " << t.total_length << " m, " << t.cones.size() << " cones, written to " << out
              << "\n";
    return kOk;
  }
  if (cmd == "record") {
    const Track t = stage_gen_track(cfg, out);
    const auto paths = stage_record(cfg, t, out, g.laps.value_or(per_direction), log_line,
                                    parse_directions(g.direction.value_or("both")));
    std::cout << paths.size() << " laps written to " << out / "laps" << "\n";
    return kOk;
  }
  if (cmd == "train") {
    const auto laps = load_laps(out, per_direction);
    for (const auto& m : g.models)
      if (std::find(kModelNames.begin(), kModelNames.end(), m) == kModelNames.end())
        throw ParameterError("unknown model '" + m + "'");
    for (const TrainSummary& s : stage_train(cfg, laps, out, g.models, log_line))
      std::cout << s.model << ": " << s.epochs << " epochs, train " << s.final_train_loss << ", test "
                << s.final_test_loss << "\n";
    return kOk;
  }
  if (cmd == "eval") {
    const Track t = build_track(cfg.track);
    const auto laps = load_laps(out, per_direction);
    const EvalReport r = stage_eval(cfg, laps, t, out, log_line);
    std::cout << read_text(out / "eval" / "report.txt");
    return r.passed() ? kOk : kFail;
  }
  if (cmd == "drive") {
    PipelineConfig c = cfg;
    if (g.laps) c.drive_laps = *g.laps;
    if (c.drive_laps == 0) throw ParameterError("--laps must be >= 1");
    const Track t = build_track(c.track);
    const DriveSummary s = stage_drive(c, t, out, log_line);
    std::cout << read_text(out / (c.controller == "oracle" ? "drive_oracle" : "drive") / "drive.txt");
    return s.success() ? kOk : kFail;
  }
  if (cmd == "run-all") {
    const RunAllResult r = run_all(cfg, out, log_line);
    std::cout << read_text(out / "eval" / "report.txt");
    std::cout << read_text(out / (cfg.controller == "oracle" ? "drive_oracle" : "drive") / "drive.txt");
    return r.eval.passed() && r.drive.success() ? kOk : kFail;
  }
  throw ParameterError("unknown command " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical steering networks on a simulated five-zone track"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline manifest (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Global seed");
  app.add_flag("--deterministic", g.deterministic, "Serial, reproducible execution");
  app.add_option("--scale", g.scale, "Image scale factor in (0, 1]");
  app.add_option("--out", g.out, "Output directory (default $HIERSTEER_OUT)");

  std::string cmd;
  auto* gen = app.add_subcommand("gen-track", "Build the track and write cone map CSV/SVG");
  auto* rec = app.add_subcommand("record", "Record oracle laps as lap logs");
  rec->add_option("--laps", g.laps, "Laps per direction");
  rec->add_option("--direction", g.direction, "cw, ccw or both")->check(CLI::IsMember({"cw", "ccw", "both"}));
  auto* train = app.add_subcommand("train", "Train the MCN, SRN1-5 and the baseline");
  train->add_option("--model", g.models, "Train only these models");
  auto* eval = app.add_subcommand("eval", "Evaluate on held-out laps");
  auto* drive = app.add_subcommand("drive", "Closed-loop driving");
  drive->add_option("--laps", g.laps, "Consecutive laps per direction");
  drive->add_option("--direction", g.direction, "cw, ccw or both")->check(CLI::IsMember({"cw", "ccw", "both"}));
  drive->add_option("--controller", g.controller, "router or oracle")->check(CLI::IsMember({"router", "oracle"}));
  auto* pipe = app.add_subcommand("pipeline", "Whole pipeline");
  pipe->require_subcommand(1);
  auto* all = pipe->add_subcommand("run-all", "gen-track, record, train, eval and drive");
  all->add_option("--direction", g.direction, "cw, ccw or both")->check(CLI::IsMember({"cw", "ccw", "both"}));
  all->add_option("--controller", g.controller, "router or oracle")->check(CLI::IsMember({"router", "oracle"}));
  for (auto* sub : {gen, rec, train, eval, drive, all}) sub->callback([&cmd, sub] { cmd = sub->get_name(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    return run(cmd, g);
  } catch (const ParameterError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConstructionError& e) {
    std::cerr << "construction error: " << e.what() << "\n";
    return kUsage;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << "\n";
    return kUsage;
  } catch (const RecordingError& e) {
    std::cerr << "recording error: " << e.what() << "\n";
    return kFail;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
}
