#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hiersteer/datalog.hpp"
#include "hiersteer/model.hpp"
#include "hiersteer/optimizer.hpp"

namespace hiersteer {

/// One training sample: the window of frames (lap, end - len + 1 .. end),
/// with indices below `first` replaced by `first`.
struct SequenceWindow {
  std::size_t lap = 0;
  std::size_t first = 0;
  std::size_t end = 0;
  friend bool operator==(const SequenceWindow&, const SequenceWindow&) = default;
};

/// Sliding windows over each segment, never crossing a segment boundary.
/// Full windows end at begin + seq_len - 1, then every `stride` frames. A
/// segment shorter than seq_len yields one window ending at its last frame,
/// padded by repeating its first frame. With `head`, the frames before the
/// first full window also become (padded) window ends, so every stride-th
/// frame of a segment is a target.
std::vector<SequenceWindow> make_sequences(std::span<const ZoneSegment> segments, std::size_t seq_len,
                                           std::size_t stride, bool head = false);

/// Segments of `zone` restricted to the laps in `lap_ids`.
std::vector<ZoneSegment> zone_segments(std::span<const LapLog> laps, std::span<const std::size_t> lap_ids, int zone,
                                       std::size_t seq_len = 0);

/// Dequantized frames of one lap, [end - begin, 6, H, W].
Tensor<float> gather_frames(const LapLog& lap, std::size_t begin, std::size_t end);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 0;  // 0: 32 frames for feed-forward, 8 windows for recurrent
  OptimizerConfig optimizer;
  // Cosine decay from the base rate to base * final_lr_fraction over the run.
  double final_lr_fraction = 0.05;
  std::uint64_t seed = 1;
  std::size_t stride = 1;    // window stride for recurrent models
  bool head_windows = true;  // train on padded windows at segment starts too
  bool deterministic = true;
  std::size_t eval_chunk = 64;
  // Called after every epoch with (epoch, train loss, test loss).
  std::function<void(std::size_t, double, double)> progress;
};

struct LossCurve {
  std::vector<double> train, test;
  std::size_t size() const noexcept { return train.size(); }
  friend bool operator==(const LossCurve&, const LossCurve&) = default;
};

struct TrainResult {
  ModelWeights<float> best;  // lowest test loss
  ModelWeights<float> last;
  LossCurve curve;
  std::size_t best_epoch = 0;  // 1-based
  double best_test_loss = 0;
  std::size_t train_samples = 0, test_samples = 0;
  double initial_train_accuracy = 0, final_train_accuracy = 0;  // classifier only
};

/// Softmax cross-entropy on single frames; labels are zone - 1. Train and
/// test losses are per-frame means.
TrainResult train_classifier(const ModelSpec& spec, std::span<const LapLog> laps, std::span<const FrameRef> train,
                             std::span<const FrameRef> test, const TrainConfig& config);

/// Half-L2 regression of the last frame's steering. Feed-forward specs use
/// every frame of the segments; recurrent specs use windows from
/// make_sequences. Test windows use stride 1 with head windows, so every test
/// frame is scored. Losses are per-sample means of ½(y - ŷ)².
TrainResult train_regressor(const ModelSpec& spec, std::span<const LapLog> laps,
                            std::span<const ZoneSegment> train_segments, std::span<const ZoneSegment> test_segments,
                            const TrainConfig& config);

/// Evaluation windows: one per frame of every segment (stride 1, head windows).
std::vector<SequenceWindow> evaluation_windows(const ModelSpec& spec, std::span<const ZoneSegment> segments);

/// Raw model outputs ([windows, output_dim] flattened) for each window.
std::vector<float> predict_windows(const ModelSpec& spec, const ModelWeights<float>& weights,
                                   std::span<const LapLog> laps, std::span<const SequenceWindow> windows,
                                   std::size_t chunk = 64);

/// Mean of (y - ŷ)² over windows, predictions clamped to the steering range.
/// Throws DataError on an empty set.
double evaluate_mse(const ModelSpec& spec, const ModelWeights<float>& weights, std::span<const LapLog> laps,
                    std::span<const SequenceWindow> windows);
double mean_squared_error(std::span<const float> predictions, std::span<const float> targets);

/// Refinement threshold: an MSE above 20 (RMSE ≈ 4.47, ~10% of the 200-unit
/// steering range by the paper's reading) flags a zone model.
inline constexpr double kMseFlagThreshold = 20.0;
inline bool mse_flagged(double mse) { return mse > kMseFlagThreshold; }

/// Rows are true zones, columns predicted zones (argmax, ties to the lowest).
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kZoneCount>, kZoneCount> counts{};
  std::size_t row_total(std::size_t zone_index) const;
  double recall(std::size_t zone_index) const;
  double min_recall() const;
  std::size_t total() const;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

std::size_t argmax_zone(std::span<const float> logits);

/// Confusion counts over `frames`, keeping only laps driven in `direction`.
ConfusionMatrix evaluate_confusion(const ModelSpec& spec, const ModelWeights<float>& weights,
                                   std::span<const LapLog> laps, std::span<const FrameRef> frames,
                                   Direction direction);

/// `epoch,train_loss,test_loss` CSV and an SVG line plot.
void emit_curves(const LossCurve& curve, const std::filesystem::path& csv, const std::filesystem::path& svg,
                 const std::string& title);

}  // namespace hiersteer
