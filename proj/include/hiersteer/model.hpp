#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hiersteer/autodiff.hpp"
#include "hiersteer/gradcheck.hpp"
#include "hiersteer/tensor.hpp"

namespace hiersteer {

inline constexpr std::size_t kZoneCount = 5;
inline constexpr std::size_t kInputChannels = 6;
inline constexpr double kSteeringLimit = 100.0;

enum class ModelKind { kClassifier, kRegressor };
enum class LayerKind { kConv, kRelu, kFlatten, kRnn, kConcat, kFc };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t depth = 0;    // conv
  std::size_t kernel = 0;   // conv, square
  std::size_t stride = 1;   // conv
  std::size_t hidden = 0;   // rnn
  std::size_t seq_len = 0;  // rnn
  std::size_t out = 0;      // fc
  // Producing layer; nullopt means the previous layer, or the input frame for layer 0.
  std::optional<std::size_t> input;
  std::optional<std::size_t> second_input;  // concat

  static LayerSpec conv(std::size_t depth, std::size_t kernel, std::size_t stride);
  static LayerSpec relu();
  static LayerSpec flatten();
  static LayerSpec rnn(std::size_t hidden, std::size_t seq_len);
  static LayerSpec concat(std::size_t a, std::size_t b);
  static LayerSpec fc(std::size_t out);
  LayerSpec& from(std::size_t layer) {
    input = layer;
    return *this;
  }
};

/// Declarative layer stack. Layers before an RNN run once per frame; an RNN
/// turns a per-frame sequence into one vector per sample.
struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::kRegressor;
  Shape input_shape;  // [6, H, W]
  std::size_t output_dim = 1;
  std::size_t seq_len = 0;  // longest RNN window, 0 for feed-forward
  // Constant factor applied to the last layer; regressors emit steering in [-100, 100] units.
  double output_scale = 1.0;
  std::vector<LayerSpec> layers;

  bool recurrent() const noexcept { return seq_len > 0; }
};

/// Per-layer output shape (without the batch axis) and whether it is per-frame.
struct LayerShape {
  Shape shape;
  bool per_frame = true;
};

/// Checks shape conformance, single output head and the channel/output
/// contracts; returns the propagated per-layer shapes. Throws DimensionError.
std::vector<LayerShape> validate_spec(const ModelSpec& spec);

Shape input_shape_for_scale(double scale);

ModelSpec build_mcn(const Shape& input_shape);
/// Task-specialised steering regressor for zone 1..5.
ModelSpec build_srn(int zone, const Shape& input_shape);
/// Single-network reference regressor (5 convs + 3 fully connected layers, no recurrence).
ModelSpec build_baseline(const Shape& input_shape);

std::size_t param_count(const ModelSpec& spec);
std::uint64_t spec_hash(const ModelSpec& spec);
std::string describe(const ModelSpec& spec);

struct ParamInfo {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t layer = 0;
};
std::vector<ParamInfo> param_layout(const ModelSpec& spec);

template <typename T>
struct ModelWeights {
  std::uint64_t spec_hash = 0;
  std::uint64_t epochs_trained = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  std::vector<Tensor<T>*> pointers();
  void zero_grad();

  template <typename U>
  ModelWeights<U> cast() const {
    ModelWeights<U> out;
    out.spec_hash = spec_hash;
    out.epochs_trained = epochs_trained;
    out.seed = seed;
    out.names = names;
    for (const Tensor<T>& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }
  bool same_values(const ModelWeights& other) const { return names == other.names && tensors == other.tensors; }
};

/// Uniform fan-in scaled initialisation, deterministic in `seed`.
ModelWeights<float> init_weights(const ModelSpec& spec, std::uint64_t seed);

/// Which frames each sample reads. For recurrent specs every sample is an RNN
/// window ending at `ends[i]` and padded at `firsts[i]`; feed-forward specs
/// ignore the plan and emit one sample per frame.
struct SamplePlan {
  std::vector<std::size_t> ends;
  std::vector<std::size_t> firsts;
  std::size_t size() const noexcept { return ends.size(); }
};

/// Records a forward pass on `graph`. `frames` is [n, 6, H, W]. With
/// `trainable`, weights are registered as parameters (gradients accumulate into
/// them); otherwise they are read-only constants. `projections` optionally
/// supplies precomputed per-frame RNN input projections keyed by layer index.
/// Returns [samples, output_dim].
template <typename T>
NodeId forward_graph(Graph<T>& graph, const ModelSpec& spec, ModelWeights<T>& weights, NodeId frames,
                     const SamplePlan& plan, bool trainable,
                     const std::map<std::size_t, NodeId>* projections = nullptr);

/// Per-frame RNN input projections W·x_t for every RNN layer: layer index -> [n, hidden].
template <typename T>
std::map<std::size_t, Tensor<T>> frame_projections(const ModelSpec& spec, const ModelWeights<T>& weights,
                                                   const Tensor<T>& frames);

/// Output for the last frame of `frames` ([n,6,H,W] or a single [6,H,W]).
/// Recurrent specs require n >= spec.seq_len. Raw (unclamped) values.
template <typename T>
Tensor<T> forward(const ModelSpec& spec, const ModelWeights<T>& weights, const Tensor<T>& frames);

/// Max relative error between reverse-mode and central-difference gradients
/// for the model's training loss on one sample (classifier: softmax
/// cross-entropy against `label`; regressor: half-L2 against `target`).
double gradient_check(const ModelSpec& spec, const ModelWeights<double>& weights, const Tensor<double>& frames,
                      std::size_t label, double target, const GradCheckOptions& options = {});

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_weights(const ModelWeights<float>& weights, const std::filesystem::path& path);
/// Reads a checkpoint and verifies it against `spec` (hash, names, shapes).
ModelWeights<float> load_weights(const std::filesystem::path& path, const ModelSpec& spec);

}  // namespace hiersteer
