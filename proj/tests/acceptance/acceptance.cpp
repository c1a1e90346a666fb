// Acceptance run: one PASS/FAIL line per criterion, then a nonzero exit if
// any criterion fails.
//
//   acceptance <run-dir> [--only N,N,...]
//
// Criteria 3-7 share one full pipeline run at scale 0.5 in <run-dir>; the
// trained stage is reused when its inputs have not changed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "../common/oracles.hpp"
#include "hiersteer/gradcheck.hpp"
#include "hiersteer/pipeline.hpp"
#include "hiersteer/plot.hpp"
#include "hiersteer/textio.hpp"

namespace fs = std::filesystem;
using namespace hiersteer;
using T = Tensor<double>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

std::string sci(double v) {
  std::ostringstream o;
  o.setf(std::ios::scientific);
  o.precision(2);
  o << v;
  return o.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
  if (!o.pass) ++failures;
}

void run(int id, const std::string& name, const std::function<Outcome()>& f) {
  try {
    report(id, name, f());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("exception: ") + e.what()});
  }
}

void note(const std::string& s) { std::cerr << "  " << s << std::endl; }

// 1: every layer type and every full spec at scale 0.5 against central differences.
Outcome gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0;
  const GradCheckOptions opt{1e-5, 16, 5};
  auto take = [&](const std::string& what, double err) {
    note(what + " max rel err " + sci(err));
    worst = std::max(worst, err);
  };

  T x = oracle::random_tensor({2, 3, 9, 8}, rng), k = oracle::random_tensor({4, 3, 3, 3}, rng),
    b = oracle::random_tensor({4}, rng);
  take("conv2d", check_gradients(std::vector<T*>{&x, &k, &b}, [&](Graph<double>& g) {
         auto y = g.conv2d(g.parameter(x), g.parameter(k), g.parameter(b), 2);
         return g.half_l2(y, g.input(T(g.value(y).shape(), 0.2)));
       }, opt));
  T r = oracle::random_tensor({3, 5}, rng);
  take("relu+flatten", check_gradients(std::vector<T*>{&r}, [&](Graph<double>& g) {
         return g.sum(g.relu(g.flatten(g.reshape(g.parameter(r), {5, 3}))));
       }, opt));
  T a = oracle::random_tensor({2, 4}, rng), c = oracle::random_tensor({2, 3}, rng);
  take("concat", check_gradients(std::vector<T*>{&a, &c}, [&](Graph<double>& g) {
         return g.half_l2(g.concat(g.parameter(a), g.parameter(c)), g.input(T({2, 7}, 0.5)));
       }, opt));
  T w = oracle::random_tensor({6, 5}, rng), fb = oracle::random_tensor({6}, rng), v = oracle::random_tensor({5}, rng);
  take("fully_connected", check_gradients(std::vector<T*>{&w, &fb, &v}, [&](Graph<double>& g) {
         return g.half_l2(g.fully_connected(g.parameter(v), g.parameter(w), g.parameter(fb)), g.input(T({6}, 0.1)));
       }, opt));
  T wx = oracle::random_tensor({3, 2}, rng), wh = oracle::random_tensor({3, 3}, rng), rb = oracle::random_tensor({3}, rng);
  T x0 = oracle::random_tensor({2}, rng), x1 = oracle::random_tensor({2}, rng), x2 = oracle::random_tensor({2}, rng);
  take("rnn (3-step BPTT)", check_gradients(std::vector<T*>{&wx, &wh, &rb, &x0, &x1, &x2}, [&](Graph<double>& g) {
         const NodeId xs[3] = {g.parameter(x0), g.parameter(x1), g.parameter(x2)};
         return g.half_l2(g.rnn_sequence(xs, g.parameter(wx), g.parameter(wh), g.parameter(rb)), g.input(T({3}, -0.3)));
       }, opt));
  T logits = oracle::random_tensor({4, 5}, rng, -2, 2);
  const std::size_t labels[4] = {0, 3, 1, 4};
  take("softmax cross-entropy", check_gradients(std::vector<T*>{&logits}, [&](Graph<double>& g) {
         return g.softmax_cross_entropy(g.parameter(logits), labels);
       }, opt));

  const Shape in = input_shape_for_scale(0.5);
  std::vector<ModelSpec> specs = {build_mcn(in), build_baseline(in)};
  for (int z = 1; z <= 5; ++z) specs.push_back(build_srn(z, in));
  for (const ModelSpec& s : specs) {
    auto wd = init_weights(s, 17).cast<double>();
    oracle::jitter_biases(wd, rng);
    const std::size_t n = s.recurrent() ? 3 : 1;
    T frames = oracle::random_tensor({n, in[0], in[1], in[2]}, rng, 0, 1);
    Graph<double> g;
    const SamplePlan plan{{n - 1}, {0}};
    const double pred = g.value(forward_graph(g, s, wd, g.input_ref(frames), plan, false))[0];
    take(s.name, gradient_check(s, wd, frames, 2, pred + 1.0, {1e-5, 4, 7}));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120,
          "max relative error " + sci(worst) + " (< 1e-4) in " + fmt(secs, 1) + " s (< 120 s)"};
}

// 2: operator oracles.
Outcome operators() {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<std::size_t> small(1, 3), side(1, 9), stride(1, 3);
  double conv_worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = small(rng), D = small(rng), H = side(rng), W = side(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min(H, W))(rng);
    const std::size_t s = stride(rng);
    T x = oracle::random_tensor({C, H, W}, rng), kern = oracle::random_tensor({D, C, k, k}, rng),
      b = oracle::random_tensor({D}, rng);
    Graph<double> g;
    const auto y = g.conv2d(g.input(x), g.input(kern), g.input(b), s);
    std::size_t oh = 0, ow = 0;
    const auto ref = oracle::conv2d(x, kern, b, s, oh, ow);
    if (g.value(y).shape() != Shape{D, oh, ow}) return {false, "conv2d output shape mismatch"};
    for (std::size_t i = 0; i < ref.size(); ++i)
      conv_worst = std::max(conv_worst, std::abs(ref[i] - g.value(y)[i]) / std::max(1.0, std::abs(ref[i])));
  }

  double rnn_worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = small(rng) + 1, N = small(rng) + 1, L = side(rng);
    T w = oracle::random_tensor({M, N}, rng), wh = oracle::random_tensor({M, M}, rng), b = oracle::random_tensor({M}, rng);
    std::vector<std::vector<double>> xs;
    Graph<double> g;
    std::vector<NodeId> nodes;
    for (std::size_t t = 0; t < L; ++t) {
      T x = oracle::random_tensor({N}, rng);
      xs.emplace_back(x.data().begin(), x.data().end());
      nodes.push_back(g.input(x));
    }
    const auto h = g.rnn_sequence(nodes, g.input(w), g.input(wh), g.input(b));
    const auto ref = oracle::rnn(xs, w, wh, b, std::vector<double>(M, 0.0));
    for (std::size_t i = 0; i < M; ++i)
      rnn_worst = std::max(rnn_worst, std::abs(ref[i] - g.value(h)[i]) / std::max(1.0, std::abs(ref[i])));
  }

  // Analytic cases: uniform softmax, CE = log K on uniform probabilities,
  // softmax gradient p - onehot, half-L2 of (2,4) vs (1,2) = 2.5.
  Graph<double> g;
  bool analytic = true;
  for (double p : g.value(g.softmax(g.input(T({5}, 0.0)))).data()) analytic &= std::abs(p - 0.2) < 1e-12;
  const std::size_t label[1] = {2};
  analytic &= std::abs(g.value(g.cross_entropy(g.input(T({4}, 0.25)), label))[0] - std::log(4.0)) < 1e-12;
  analytic &= g.value(g.half_l2(g.input(T({2}, std::vector<double>{2, 4})),
                                g.input(T({2}, std::vector<double>{1, 2}))))[0] == 2.5;
  T logits({3}, std::vector<double>{0.5, -1.0, 2.0});
  Graph<double> gg;
  gg.backward(gg.softmax_cross_entropy(gg.parameter(logits), label));
  const double z = std::exp(0.5) + std::exp(-1.0) + std::exp(2.0);
  const double expect[3] = {std::exp(0.5) / z, std::exp(-1.0) / z, std::exp(2.0) / z - 1};
  for (std::size_t i = 0; i < 3; ++i) analytic &= std::abs(logits.grad()[i] - expect[i]) < 1e-12;

  const bool pass = conv_worst <= 1e-10 && rnn_worst <= 1e-10 && analytic;
  return {pass, "conv2d 200 cases worst " + sci(conv_worst) + " (<= 1e-10), rnn unroll worst " +
                    sci(rnn_worst) + ", analytic softmax/CE/half-L2 " + (analytic ? "ok" : "WRONG")};
}

// 9: format contracts.
template <typename E, typename F>
bool throws_as(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

std::string file_bytes(const fs::path& p) { return read_text(p); }

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

Outcome formats(const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  const Track track = build_track({});
  RecordingConfig rc;
  rc.perturbation = Perturbation{};
  const LapLog lap = run_recording_lap(track, rig_for_scale(0.25), Direction::kCw, rc);
  const fs::path lp = dir / "lap.hml", lp2 = dir / "lap2.hml";
  write_lap(lap, lp);
  const LapLog back = read_lap(lp);
  expect(back.frames == lap.frames && back.header.track_hash == lap.header.track_hash &&
             back.header.height == lap.header.height && back.header.width == lap.header.width,
         "lap round trip");
  write_lap(back, lp2);
  expect(file_bytes(lp) == file_bytes(lp2), "lap rewrite bytes");

  const std::string good = file_bytes(lp);
  auto corrupt = [&](const std::string& bytes) {
    const fs::path p = dir / "corrupt.hml";
    write_bytes(p, bytes);
    fs::remove(pose_sidecar(p));
    return p;
  };
  std::string m = good;
  m[0] = 'X';
  expect(throws_as<FormatError>([&] { read_lap(corrupt(m)); }), "lap bad magic");
  m = good;
  m[4] = static_cast<char>(0x7f);
  expect(throws_as<FormatError>([&] { read_lap(corrupt(m)); }), "lap bad version");
  expect(throws_as<FormatError>([&] { read_lap(corrupt(good.substr(0, good.size() - 100))); }), "lap truncated");
  bool names_frame = false;
  try {
    read_lap(corrupt(good.substr(0, good.size() - 100)));
  } catch (const FormatError& e) {
    names_frame = std::string(e.what()).find("frame") != std::string::npos;
  }
  expect(names_frame, "truncation names the frame");
  expect(throws_as<FormatError>([&] { read_lap(corrupt(good + "xx")); }), "lap trailing bytes");
  LapLog mismatched = lap;
  mismatched.frames[3].image.pop_back();
  expect(throws_as<FormatError>([&] { write_lap(mismatched, dir / "mm.hml"); }), "lap record dims");
  TrackConfig other_cfg;
  other_cfg.straight_a = 2.4;
  const Track other = build_track(other_cfg);
  LapLog relabel = back;
  expect(throws_as<IncompatibleTrackError>([&] { label_zones(relabel, other); }), "lap other track");

  const ModelSpec spec = build_srn(4, input_shape_for_scale(0.5));
  const ModelWeights<float> w = init_weights(spec, 4);
  const fs::path cp = dir / "srn4.ckpt", cp2 = dir / "srn4b.ckpt";
  save_weights(w, cp);
  const ModelWeights<float> wb = load_weights(cp, spec);
  expect(wb.same_values(w), "checkpoint round trip");
  save_weights(wb, cp2);
  expect(file_bytes(cp) == file_bytes(cp2), "checkpoint rewrite bytes");
  const std::string ck = file_bytes(cp);
  std::string ckm = ck;
  ckm[1] = '?';
  write_bytes(dir / "c.ckpt", ckm);
  expect(throws_as<FormatError>([&] { load_weights(dir / "c.ckpt", spec); }), "checkpoint bad magic");
  write_bytes(dir / "c.ckpt", ck.substr(0, ck.size() / 2));
  expect(throws_as<FormatError>([&] { load_weights(dir / "c.ckpt", spec); }), "checkpoint truncated");
  expect(throws_as<IncompatibleCheckpointError>([&] { load_weights(cp, build_srn(5, input_shape_for_scale(0.5))); }),
         "checkpoint wrong spec");

  std::string detail = "lap log and checkpoint round trips bit-exact; bad magic, version, truncation, trailing "
                       "bytes, record dims, track and spec mismatches raise their error classes";
  if (!bad.empty()) {
    detail = "failed:";
    for (const auto& b : bad) detail += " [" + b + "]";
  }
  return {bad.empty(), detail};
}

// 8: two deterministic mini pipelines must agree byte for byte.
Outcome determinism(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.seed = 99;
  cfg.deterministic = true;
  cfg.scale = 0.5;
  cfg.train_laps_per_direction = 2;
  cfg.test_laps_per_direction = 1;
  cfg.drive_laps = 1;
  for (ModelPlan& p : cfg.models) {
    p.base_laps = 2;
    p.epochs = 2;
  }
  const fs::path a = dir / "a", b = dir / "b";
  fs::remove_all(a);
  fs::remove_all(b);
  run_all(cfg, a);
  run_all(cfg, b);
  std::size_t compared = 0;
  std::vector<std::string> differ;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const std::string ext = entry.path().extension().string();
    const bool wanted = ext == ".ckpt" || (ext == ".csv" && (name.starts_with("losses_") ||
                                                              name.starts_with("trace_") ||
                                                              name.starts_with("baseline_trace_") ||
                                                              name.starts_with("drive_")));
    if (!wanted) continue;
    const fs::path twin = b / fs::relative(entry.path(), a);
    ++compared;
    if (!fs::exists(twin) || file_bytes(entry.path()) != file_bytes(twin)) differ.push_back(name);
  }
  const bool pass = differ.empty() && compared >= 7 + 7 + 2;
  std::string detail = std::to_string(compared) + " checkpoints, loss CSVs and trace CSVs compared";
  for (const auto& d : differ) detail += ", differs: " + d;
  return {pass, detail};
}

double read_timing(const fs::path& csv, const std::string& model) {
  const std::string text = read_text(csv);
  const auto pos = text.find("\n" + model + ",");
  if (pos == std::string::npos) return NAN;
  return std::stod(text.substr(pos + model.size() + 2));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <run-dir> [--only 1,2,...]\n";
    return 2;
  }
  const fs::path root = argv[1];
  std::set<int> only;
  if (argc >= 4 && std::string(argv[2]) == "--only") {
    std::stringstream ss(argv[3]);
    for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
  }
  auto wanted = [&](int id) { return only.empty() || only.contains(id); };

  if (wanted(1)) run(1, "gradient correctness", gradients);
  if (wanted(2)) run(2, "operator oracles", operators);

  std::optional<RunAllResult> full;
  PipelineConfig cfg;
  const fs::path run_dir = root / "full";
  if (wanted(3) || wanted(4) || wanted(5) || wanted(6) || wanted(7)) {
    try {
      full = run_all(cfg, run_dir, [](const std::string& s) { note(s); });
    } catch (const std::exception& e) {
      std::cerr << "pipeline failed: " << e.what() << "\n";
    }
  }
  auto need_full = [&](const std::function<Outcome()>& f) {
    return [&, f] { return full ? f() : Outcome{false, "pipeline did not complete"}; };
  };

  if (wanted(3))
    run(3, "MCN classification", need_full([&] {
          const EvalReport& e = full->eval;
          const double secs = read_timing(run_dir / "models" / "timings.csv", "mcn");
          std::string d = "min per-zone recall cw " + fmt(e.confusion[0].min_recall()) + ", ccw " +
                          fmt(e.confusion[1].min_recall()) + " (>= 0.90) on " + std::to_string(e.test_laps) +
                          " held-out laps; training " + fmt(secs, 0) + " s (<= 600 s)";
          return Outcome{e.min_recall() >= 0.90 && secs <= 600, d};
        }));
  if (wanted(4))
    run(4, "SRN regression", need_full([&] {
          const EvalReport& e = full->eval;
          std::string d;
          bool ok = true;
          for (std::size_t z = 0; z < kZoneCount; ++z) {
            ok &= e.zone_mse[z] < 20;
            d += "srn" + std::to_string(z + 1) + " " + fmt(e.zone_mse[z], 2) +
                 (e.zone_mse[z] >= 4 && e.zone_mse[z] <= 12 ? " (in 4-12)" : " (outside 4-12)") + "; ";
          }
          return Outcome{ok, d + "all < 20 required"};
        }));
  if (wanted(5))
    run(5, "data efficiency", need_full([&] {
          const EvalReport& e = full->eval;
          bool ok = true;
          std::string d;
          for (int z : {1, 4, 5}) {
            const std::size_t base = cfg.plan("srn" + std::to_string(z)).base_laps;
            ok &= base == 8 && e.zone_mse[static_cast<std::size_t>(z - 1)] < 20;
            d += "srn" + std::to_string(z) + " " + std::to_string(base) + " base laps MSE " +
                 fmt(e.zone_mse[static_cast<std::size_t>(z - 1)], 2) + "; ";
          }
          return Outcome{ok, d + "mcn uses " + std::to_string(cfg.plan("mcn").base_laps)};
        }));
  if (wanted(6))
    run(6, "closed-loop success", need_full([&] {
          const Track track = build_track(cfg.track);
          const DriveSummary& router = full->drive;
          const double secs = router.seconds;
          PipelineConfig oc = cfg;
          oc.controller = "oracle";
          const DriveSummary oracle = stage_drive(oc, track, run_dir);
          std::string d;
          for (const auto& [dir, r] : router.runs)
            d += to_string(dir) + " " + std::to_string(r.laps_completed) + "/3 laps " + std::to_string(r.strikes) +
                 " strikes" + (r.aborted ? " (" + r.abort_reason + ")" : "") + "; ";
          d += "oracle control " + std::string(oracle.success() ? "passes" : "FAILS") + "; router drive " +
               fmt(secs, 0) + " s (<= 300 s)";
          return Outcome{router.success() && oracle.success() && secs <= 300, d};
        }));
  if (wanted(7))
    run(7, "baseline parity", need_full([&] {
          const EvalReport& e = full->eval;
          std::string d;
          for (std::size_t i = 0; i < 2; ++i) {
            const BaselineReport& b = e.baseline[i];
            d += to_string(static_cast<Direction>(i)) + " hier " + fmt(b.mse_hier, 2) + " base " + fmt(b.mse_base, 2) +
                 " ratio " + fmt(b.mse_base / b.mse_hier, 3) + "; ";
          }
          d += "params srn1 " + std::to_string(e.params_srn1) + " < baseline " + std::to_string(e.params_baseline);
          return Outcome{e.baseline_parity() && e.params_srn1 < e.params_baseline, d};
        }));
  if (wanted(8)) run(8, "determinism", [&] { return determinism(root / "determinism"); });
  if (wanted(9)) run(9, "format contracts", [&] { return formats(root / "formats"); });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
