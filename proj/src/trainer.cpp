#include "hiersteer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hiersteer/plot.hpp"
#include "hiersteer/textio.hpp"

namespace hiersteer {

std::vector<SequenceWindow> make_sequences(std::span<const ZoneSegment> segments, std::size_t seq_len,
                                           std::size_t stride, bool head) {
  if (seq_len == 0) throw ParameterError("make_sequences: seq_len must be >= 1");
  if (stride == 0) throw ParameterError("make_sequences: stride must be >= 1");
  std::vector<SequenceWindow> out;
  for (const ZoneSegment& seg : segments) {
    if (seg.size() == 0) continue;
    if (head) {
      // Anchor at the segment end so the final frame is always a target.
      std::vector<SequenceWindow> ends;
      for (std::size_t e = seg.end; e > seg.begin;) {
        ends.push_back({seg.lap, seg.begin, e - 1});
        if (e - 1 - seg.begin < stride) break;
        e -= stride;
      }
      out.insert(out.end(), ends.rbegin(), ends.rend());
    } else if (seg.size() < seq_len) {
      out.push_back({seg.lap, seg.begin, seg.end - 1});
    } else {
      for (std::size_t e = seg.begin + seq_len - 1; e < seg.end; e += stride) out.push_back({seg.lap, seg.begin, e});
    }
  }
  return out;
}

std::vector<ZoneSegment> zone_segments(std::span<const LapLog> laps, std::span<const std::size_t> lap_ids, int zone,
                                       std::size_t seq_len) {
  std::vector<ZoneSegment> out;
  for (ZoneSegment s : extract_zone_frames(laps, zone, seq_len))
    if (std::find(lap_ids.begin(), lap_ids.end(), s.lap) != lap_ids.end()) out.push_back(s);
  return out;
}

Tensor<float> gather_frames(const LapLog& lap, std::size_t begin, std::size_t end) {
  if (begin >= end || end > lap.frames.size()) throw ParameterError("gather_frames: bad frame range");
  const std::size_t H = lap.header.height, W = lap.header.width, per = lap.image_bytes();
  Tensor<float> out(Shape{end - begin, kInputChannels, H, W});
  for (std::size_t i = begin; i < end; ++i) dequantize_into(lap.frames[i].image, out.data().data() + (i - begin) * per);
  return out;
}

namespace {

Tensor<float> gather_refs(std::span<const LapLog> laps, std::span<const FrameRef> refs) {
  const LapLog& first = laps[refs.front().lap];
  const std::size_t per = first.image_bytes();
  Tensor<float> out(Shape{refs.size(), kInputChannels, first.header.height, first.header.width});
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const LapLog& lap = laps[refs[i].lap];
    if (lap.image_bytes() != per) throw DimensionError("laps disagree on image size");
    dequantize_into(lap.frames.at(refs[i].frame).image, out.data().data() + i * per);
  }
  return out;
}

// Frames and plan covering a run of windows from one lap.
struct WindowBatch {
  Tensor<float> frames;
  SamplePlan plan;
};

WindowBatch build_window_batch(const ModelSpec& spec, std::span<const LapLog> laps,
                               std::span<const SequenceWindow> windows) {
  WindowBatch b;
  if (!spec.recurrent()) {
    std::vector<FrameRef> refs;
    for (const SequenceWindow& w : windows) refs.push_back({w.lap, w.end});
    b.frames = gather_refs(laps, refs);
    return b;
  }
  const std::size_t L = spec.seq_len;
  const std::size_t lap = windows.front().lap;
  std::size_t start = std::numeric_limits<std::size_t>::max(), stop = 0;
  for (const SequenceWindow& w : windows) {
    if (w.lap != lap) throw ParameterError("window batch spans laps");
    const std::size_t lowest = w.end + 1 >= L ? std::max(w.first, w.end + 1 - L) : w.first;
    start = std::min(start, lowest);
    stop = std::max(stop, w.end + 1);
  }
  b.frames = gather_frames(laps[lap], start, stop);
  for (const SequenceWindow& w : windows) {
    b.plan.ends.push_back(w.end - start);
    b.plan.firsts.push_back(std::max(w.first, start) - start);
  }
  return b;
}

// Consecutive runs of windows sharing a lap and a frame span of bounded size.
std::vector<std::span<const SequenceWindow>> chunk_windows(const ModelSpec& spec,
                                                           std::span<const SequenceWindow> windows,
                                                           std::size_t chunk) {
  std::vector<std::span<const SequenceWindow>> out;
  std::size_t i = 0;
  while (i < windows.size()) {
    std::size_t j = i + 1;
    while (j < windows.size() && j - i < chunk) {
      if (spec.recurrent() && (windows[j].lap != windows[i].lap || windows[j].first != windows[i].first ||
                               windows[j].end < windows[i].end))
        break;
      ++j;
    }
    out.push_back(windows.subspan(i, j - i));
    i = j;
  }
  return out;
}

double cross_entropy_row(std::span<const float> logits, std::size_t label) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (float v : logits) z += std::exp(static_cast<double>(v) - m);
  return -(static_cast<double>(logits[label]) - m - std::log(z));
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  // splitmix64 of (seed, epoch)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double scheduled_lr(const TrainConfig& c, std::size_t epoch) {
  const double base = c.optimizer.learning_rate;
  if (c.epochs == 1) return base;
  const double t = static_cast<double>(epoch - 1) / static_cast<double>(c.epochs - 1);
  const double floor = base * c.final_lr_fraction;
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::acos(-1.0) * t));
}

void validate_config(const TrainConfig& c) {
  if (!(c.final_lr_fraction > 0 && c.final_lr_fraction <= 1))
    throw ParameterError("train: final_lr_fraction must lie in (0, 1]");
  if (c.epochs == 0) throw ParameterError("train: epochs must be >= 1");
  if (c.optimizer.learning_rate <= 0) throw ParameterError("train: learning rate must be positive");
  if (c.eval_chunk == 0) throw ParameterError("train: eval chunk must be >= 1");
}

struct Tracker {
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();

  void record(std::size_t epoch, double train, double test, const ModelWeights<float>& w,
              const TrainConfig& config) {
    result.curve.train.push_back(train);
    result.curve.test.push_back(test);
    if (test < best) {
      best = test;
      result.best = w;
      result.best.epochs_trained = epoch;
      result.best_epoch = epoch;
      result.best_test_loss = test;
    }
    if (config.progress) config.progress(epoch, train, test);
  }
};

void strip_grads(ModelWeights<float>& w) {
  for (auto& t : w.tensors) t.set_requires_grad(false);
}

}  // namespace

std::vector<SequenceWindow> evaluation_windows(const ModelSpec& spec, std::span<const ZoneSegment> segments) {
  return make_sequences(segments, std::max<std::size_t>(spec.seq_len, 1), 1, true);
}

std::vector<float> predict_windows(const ModelSpec& spec, const ModelWeights<float>& weights,
                                   std::span<const LapLog> laps, std::span<const SequenceWindow> windows,
                                   std::size_t chunk) {
  std::vector<float> out;
  out.reserve(windows.size() * spec.output_dim);
  auto& w = const_cast<ModelWeights<float>&>(weights);
  for (auto part : chunk_windows(spec, windows, chunk)) {
    WindowBatch b = build_window_batch(spec, laps, part);
    Graph<float> g;
    const NodeId y = forward_graph(g, spec, w, g.input_ref(b.frames), b.plan, false);
    const auto v = g.value(y).data();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

double mean_squared_error(std::span<const float> predictions, std::span<const float> targets) {
  if (predictions.size() != targets.size()) throw DimensionError("mse: length mismatch");
  if (predictions.empty()) throw DataError("mse: empty set");
  double acc = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = static_cast<double>(targets[i]) - static_cast<double>(predictions[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

double evaluate_mse(const ModelSpec& spec, const ModelWeights<float>& weights, std::span<const LapLog> laps,
                    std::span<const SequenceWindow> windows) {
  if (windows.empty()) throw DataError("evaluate_mse: empty test set");
  std::vector<float> pred = predict_windows(spec, weights, laps, windows);
  std::vector<float> target;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    pred[i] = static_cast<float>(std::clamp<double>(pred[i], -kSteeringLimit, kSteeringLimit));
    target.push_back(laps[windows[i].lap].frames[windows[i].end].steering);
  }
  return mean_squared_error(pred, target);
}

TrainResult train_regressor(const ModelSpec& spec, std::span<const LapLog> laps,
                            std::span<const ZoneSegment> train_segments, std::span<const ZoneSegment> test_segments,
                            const TrainConfig& config) {
  validate_config(config);
  if (spec.kind != ModelKind::kRegressor) throw ParameterError("train_regressor: " + spec.name + " is a classifier");
  const bool rec = spec.recurrent();
  const std::size_t L = std::max<std::size_t>(spec.seq_len, 1);
  const std::vector<SequenceWindow> train =
      rec ? make_sequences(train_segments, L, config.stride, config.head_windows) : make_sequences(train_segments, 1, 1);
  const std::vector<SequenceWindow> test = evaluation_windows(spec, test_segments);
  if (train.empty()) throw DataError("train_regressor: " + spec.name + " has no training samples");
  if (test.empty()) throw DataError("train_regressor: " + spec.name + " has no test samples");
  const std::size_t batch = config.batch_size ? config.batch_size : (rec ? 8 : 32);

  std::vector<float> test_targets;
  for (const SequenceWindow& w : test) test_targets.push_back(laps[w.lap].frames[w.end].steering);

  ModelWeights<float> weights = init_weights(spec, config.seed);
  Optimizer<float> opt(config.optimizer);
  std::vector<Tensor<float>*> params = weights.pointers();

  // Recurrent batches are runs of consecutive windows (shared frames); feed-forward batches are shuffled frames.
  std::vector<std::vector<SequenceWindow>> units;
  if (rec) {
    for (auto part : chunk_windows(spec, train, batch)) units.emplace_back(part.begin(), part.end());
  } else {
    for (const SequenceWindow& w : train) units.push_back({w});
  }

  Tracker tracker;
  tracker.result.train_samples = train.size();
  tracker.result.test_samples = test.size();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    opt.set_learning_rate(scheduled_lr(config, epoch));
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t per_step = rec ? 1 : batch;
    double loss_sum = 0;
    for (std::size_t k = 0; k < order.size(); k += per_step) {
      std::vector<SequenceWindow> ws;
      for (std::size_t q = k; q < std::min(order.size(), k + per_step); ++q)
        ws.insert(ws.end(), units[order[q]].begin(), units[order[q]].end());
      WindowBatch b = build_window_batch(spec, laps, ws);
      Tensor<float> target(Shape{ws.size(), 1});
      for (std::size_t i = 0; i < ws.size(); ++i) target[i] = laps[ws[i].lap].frames[ws[i].end].steering;
      weights.zero_grad();
      Graph<float> g;
      const NodeId y = forward_graph(g, spec, weights, g.input_ref(b.frames), b.plan, true);
      const NodeId half = g.half_l2(y, g.input_ref(target));
      const NodeId loss = g.scale(half, 1.0f / static_cast<float>(ws.size()));
      loss_sum += static_cast<double>(g.value(half)[0]);
      g.backward(loss);
      opt.step(params);
    }
    const std::vector<float> pred = predict_windows(spec, weights, laps, test, config.eval_chunk);
    const double test_loss = 0.5 * mean_squared_error(pred, test_targets);
    tracker.record(epoch, loss_sum / static_cast<double>(train.size()), test_loss, weights, config);
  }
  TrainResult result = std::move(tracker.result);
  result.last = weights;
  result.last.epochs_trained = config.epochs;
  strip_grads(result.last);
  strip_grads(result.best);
  return result;
}

TrainResult train_classifier(const ModelSpec& spec, std::span<const LapLog> laps, std::span<const FrameRef> train,
                             std::span<const FrameRef> test, const TrainConfig& config) {
  validate_config(config);
  if (spec.kind != ModelKind::kClassifier || spec.recurrent())
    throw ParameterError("train_classifier: " + spec.name + " is not a feed-forward classifier");
  if (train.empty()) throw DataError("train_classifier: empty training split");
  if (test.empty()) throw DataError("train_classifier: empty test split");
  auto label_of = [&](const FrameRef& r) -> std::size_t {
    const int z = laps[r.lap].frames.at(r.frame).zone;
    if (z < 1 || z > 5) throw DataError("train_classifier: unlabeled frame in split");
    return static_cast<std::size_t>(z - 1);
  };
  const std::size_t batch = config.batch_size ? config.batch_size : 32;
  std::vector<SequenceWindow> test_windows;
  for (const FrameRef& r : test) test_windows.push_back({r.lap, r.frame, r.frame});

  ModelWeights<float> weights = init_weights(spec, config.seed);
  Optimizer<float> opt(config.optimizer);
  std::vector<Tensor<float>*> params = weights.pointers();
  std::vector<FrameRef> samples(train.begin(), train.end());

  Tracker tracker;
  tracker.result.train_samples = train.size();
  tracker.result.test_samples = test.size();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    opt.set_learning_rate(scheduled_lr(config, epoch));
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    std::shuffle(samples.begin(), samples.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t k = 0; k < samples.size(); k += batch) {
      const std::span<const FrameRef> refs(samples.data() + k, std::min(batch, samples.size() - k));
      Tensor<float> frames = gather_refs(laps, refs);
      std::vector<std::size_t> labels;
      for (const FrameRef& r : refs) labels.push_back(label_of(r));
      weights.zero_grad();
      Graph<float> g;
      const NodeId logits = forward_graph(g, spec, weights, g.input_ref(frames), SamplePlan{}, true);
      const NodeId loss = g.softmax_cross_entropy(logits, labels);
      loss_sum += static_cast<double>(g.value(loss)[0]) * static_cast<double>(refs.size());
      const auto lv = g.value(logits).data();
      for (std::size_t i = 0; i < refs.size(); ++i)
        correct += argmax_zone(lv.subspan(i * kZoneCount, kZoneCount)) == labels[i];
      g.backward(loss);
      opt.step(params);
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    if (epoch == 1) tracker.result.initial_train_accuracy = accuracy;
    tracker.result.final_train_accuracy = accuracy;

    const std::vector<float> logits = predict_windows(spec, weights, laps, test_windows, config.eval_chunk);
    double test_loss = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
      test_loss += cross_entropy_row(std::span<const float>(logits).subspan(i * kZoneCount, kZoneCount), label_of(test[i]));
    tracker.record(epoch, loss_sum / static_cast<double>(samples.size()), test_loss / static_cast<double>(test.size()),
                   weights, config);
  }
  TrainResult result = std::move(tracker.result);
  result.last = weights;
  result.last.epochs_trained = config.epochs;
  strip_grads(result.last);
  strip_grads(result.best);
  return result;
}

std::size_t argmax_zone(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

std::size_t ConfusionMatrix::row_total(std::size_t z) const {
  return std::accumulate(counts[z].begin(), counts[z].end(), std::size_t{0});
}

double ConfusionMatrix::recall(std::size_t z) const {
  const std::size_t n = row_total(z);
  return n ? static_cast<double>(counts[z][z]) / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double ConfusionMatrix::min_recall() const {
  double m = 1.0;
  for (std::size_t z = 0; z < kZoneCount; ++z)
    if (row_total(z)) m = std::min(m, recall(z));
  return m;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t z = 0; z < kZoneCount; ++z) n += row_total(z);
  return n;
}

ConfusionMatrix evaluate_confusion(const ModelSpec& spec, const ModelWeights<float>& weights,
                                   std::span<const LapLog> laps, std::span<const FrameRef> frames,
                                   Direction direction) {
  if (spec.kind != ModelKind::kClassifier) throw ParameterError("evaluate_confusion: " + spec.name + " is not a classifier");
  std::vector<SequenceWindow> windows;
  for (const FrameRef& r : frames)
    if (laps[r.lap].header.direction == direction) windows.push_back({r.lap, r.frame, r.frame});
  ConfusionMatrix m;
  if (windows.empty()) return m;
  const std::vector<float> logits = predict_windows(spec, weights, laps, windows);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const int z = laps[windows[i].lap].frames[windows[i].end].zone;
    if (z < 1 || z > 5) throw DataError("evaluate_confusion: unlabeled frame");
    const std::size_t pred = argmax_zone(std::span<const float>(logits).subspan(i * kZoneCount, kZoneCount));
    ++m.counts[static_cast<std::size_t>(z - 1)][pred];
  }
  return m;
}

void emit_curves(const LossCurve& curve, const std::filesystem::path& csv, const std::filesystem::path& svg,
                 const std::string& title) {
  if (curve.size() == 0) throw DataError("emit_curves: empty loss curve");
  std::vector<double> epochs(curve.size());
  std::iota(epochs.begin(), epochs.end(), 1.0);
  write_text(csv, csv_columns({"epoch", "train_loss", "test_loss"}, {epochs, curve.train, curve.test}));
  const double best = *std::min_element(curve.test.begin(), curve.test.end());
  write_text(svg, svg_line_plot(title, "epoch", "loss", {{"train", epochs, curve.train}, {"test", epochs, curve.test}},
                                "final train " + format_double(curve.train.back()) + ", best test " +
                                    format_double(best)));
}

}  // namespace hiersteer
