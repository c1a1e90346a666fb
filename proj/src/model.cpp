#include "hiersteer/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "hiersteer/binio.hpp"

namespace hiersteer {

LayerSpec LayerSpec::conv(std::size_t depth, std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.depth = depth;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}
LayerSpec LayerSpec::relu() { return LayerSpec{}; }
LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::kFlatten;
  return l;
}
LayerSpec LayerSpec::rnn(std::size_t hidden, std::size_t seq_len) {
  LayerSpec l;
  l.kind = LayerKind::kRnn;
  l.hidden = hidden;
  l.seq_len = seq_len;
  return l;
}
LayerSpec LayerSpec::concat(std::size_t a, std::size_t b) {
  LayerSpec l;
  l.kind = LayerKind::kConcat;
  l.input = a;
  l.second_input = b;
  return l;
}
LayerSpec LayerSpec::fc(std::size_t out) {
  LayerSpec l;
  l.kind = LayerKind::kFc;
  l.out = out;
  return l;
}

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kRnn: return "rnn";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kFc: return "fc";
  }
  return "?";
}

std::size_t input_of(const ModelSpec& spec, std::size_t i) {
  const LayerSpec& l = spec.layers[i];
  if (l.input) return *l.input;
  if (i == 0) return static_cast<std::size_t>(-1);
  return i - 1;
}

constexpr std::size_t kNetworkInput = static_cast<std::size_t>(-1);

}  // namespace

std::vector<LayerShape> validate_spec(const ModelSpec& spec) {
  auto fail = [&](std::size_t i, const std::string& why) {
    throw DimensionError(spec.name + " layer " + std::to_string(i) + ": " + why);
  };
  if (spec.input_shape.size() != 3 || spec.input_shape[0] != kInputChannels)
    throw DimensionError(spec.name + ": input must be [6,H,W], got " + shape_to_string(spec.input_shape));
  if (spec.kind == ModelKind::kClassifier && spec.output_dim != kZoneCount)
    throw DimensionError(spec.name + ": classifier output_dim must be 5");
  if (spec.kind == ModelKind::kRegressor && spec.output_dim != 1)
    throw DimensionError(spec.name + ": regressor output_dim must be 1");
  if (spec.layers.empty()) throw DimensionError(spec.name + ": no layers");

  const LayerShape input{spec.input_shape, true};
  std::vector<LayerShape> shapes;
  std::vector<int> consumers(spec.layers.size(), 0);
  std::size_t longest_window = 0;
  auto source = [&](std::size_t i, std::size_t src) -> const LayerShape& {
    if (src == kNetworkInput) return input;
    if (src >= i) fail(i, "input must refer to an earlier layer");
    ++consumers[src];
    return shapes[src];
  };

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerShape& in = source(i, input_of(spec, i));
    LayerShape out = in;
    switch (l.kind) {
      case LayerKind::kConv: {
        if (in.shape.size() != 3) fail(i, "conv needs a [C,H,W] input");
        if (l.depth == 0 || l.kernel == 0) fail(i, "conv depth and kernel must be positive");
        if (l.stride < 1) throw ParameterError(spec.name + ": conv stride must be >= 1");
        if (l.kernel > in.shape[1] || l.kernel > in.shape[2])
          fail(i, "input " + shape_to_string(in.shape) + " too small for " + std::to_string(l.kernel) + "x" +
                      std::to_string(l.kernel) + " kernel");
        out.shape = {l.depth, (in.shape[1] - l.kernel) / l.stride + 1, (in.shape[2] - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::kRelu: break;
      case LayerKind::kFlatten: out.shape = {shape_volume(in.shape)}; break;
      case LayerKind::kRnn:
        if (in.shape.size() != 1) fail(i, "rnn needs a flattened per-frame input");
        if (!in.per_frame) fail(i, "rnn input must be per-frame");
        if (l.hidden == 0 || l.seq_len == 0) fail(i, "rnn hidden size and sequence length must be positive");
        out.shape = {l.hidden};
        out.per_frame = false;
        longest_window = std::max(longest_window, l.seq_len);
        break;
      case LayerKind::kConcat: {
        if (!l.second_input) fail(i, "concat needs two inputs");
        const LayerShape& b = source(i, *l.second_input);
        if (in.shape.size() != 1 || b.shape.size() != 1) fail(i, "concat inputs must be rank-1");
        if (in.per_frame != b.per_frame) fail(i, "concat inputs must share a domain");
        out.shape = {in.shape[0] + b.shape[0]};
        break;
      }
      case LayerKind::kFc:
        if (in.shape.size() != 1) fail(i, "fc needs a rank-1 input");
        if (l.out == 0) fail(i, "fc width must be positive");
        out.shape = {l.out};
        break;
    }
    shapes.push_back(out);
  }
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i)
    if (consumers[i] == 0) fail(i, "output is never consumed; a spec has exactly one head");
  const LayerSpec& last = spec.layers.back();
  if (last.kind != LayerKind::kFc || last.out != spec.output_dim)
    throw DimensionError(spec.name + ": last layer must be fc(" + std::to_string(spec.output_dim) + ")");
  if (longest_window != spec.seq_len)
    throw DimensionError(spec.name + ": seq_len " + std::to_string(spec.seq_len) +
                         " does not match longest RNN window " + std::to_string(longest_window));
  return shapes;
}

Shape input_shape_for_scale(double scale) {
  if (!(scale > 0)) throw ParameterError("scale must be > 0");
  const auto h = static_cast<std::size_t>(std::lround(94 * scale));
  const auto w = static_cast<std::size_t>(std::lround(168 * scale));
  if (h == 0 || w == 0) throw ParameterError("scale too small");
  return {kInputChannels, h, w};
}

namespace {

ModelSpec finish(ModelSpec spec) {
  spec.seq_len = 0;
  for (const LayerSpec& l : spec.layers)
    if (l.kind == LayerKind::kRnn) spec.seq_len = std::max(spec.seq_len, l.seq_len);
  validate_spec(spec);
  return spec;
}

}  // namespace

ModelSpec build_mcn(const Shape& input_shape) {
  ModelSpec s;
  s.name = "mcn";
  s.kind = ModelKind::kClassifier;
  s.input_shape = input_shape;
  s.output_dim = kZoneCount;
  s.layers = {LayerSpec::conv(16, 5, 2), LayerSpec::relu(), LayerSpec::conv(24, 5, 2),
              LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::fc(kZoneCount)};
  return finish(std::move(s));
}

ModelSpec build_srn(int zone, const Shape& input_shape) {
  ModelSpec s;
  s.name = "srn" + std::to_string(zone);
  s.kind = ModelKind::kRegressor;
  s.input_shape = input_shape;
  s.output_dim = 1;
  s.output_scale = kSteeringLimit;
  using L = LayerSpec;
  switch (zone) {
    case 1:
      s.layers = {L::conv(16, 5, 2), L::relu(), L::flatten(), L::fc(1)};
      break;
    case 2:
      s.layers = {L::conv(24, 5, 4), L::relu(), L::flatten(), L::rnn(64, 20), L::fc(1)};
      break;
    case 3:
      s.layers = {L::conv(24, 5, 4), L::relu(), L::conv(32, 3, 2), L::relu(), L::flatten(), L::rnn(64, 30), L::fc(1)};
      break;
    case 4:
      s.layers = {L::conv(48, 5, 4), L::relu(), L::flatten(), L::rnn(64, 35), L::fc(1)};
      break;
    case 5:
      // 0 conv24 -> 1 relu -> {2 flatten -> 3 rnn} and {4 conv36 -> 5 relu -> 6 flatten -> 7 rnn}
      s.layers = {L::conv(24, 5, 4),         L::relu(),   L::flatten(), L::rnn(64, 40),
                  L::conv(36, 3, 2).from(1), L::relu(),   L::flatten(), L::rnn(64, 40),
                  L::concat(3, 7),           L::fc(100),  L::relu(),    L::fc(1)};
      break;
    default:
      throw ParameterError("zone must be in 1..5, got " + std::to_string(zone));
  }
  return finish(std::move(s));
}

ModelSpec build_baseline(const Shape& input_shape) {
  ModelSpec s;
  s.name = "baseline";
  s.kind = ModelKind::kRegressor;
  s.input_shape = input_shape;
  s.output_dim = 1;
  s.output_scale = kSteeringLimit;
  using L = LayerSpec;
  if (input_shape.size() != 3) throw DimensionError("baseline input must be [6,H,W]");
  auto out = [](std::size_t n, std::size_t k, std::size_t st) { return n < k ? 0 : (n - k) / st + 1; };
  const std::size_t h2 = out(out(input_shape[1], 5, 2), 5, 2);
  // The third layer keeps the 5x5/2 reference geometry when the map is large
  // enough for two further 3x3 layers, and falls back to 3x3/1 otherwise.
  const bool wide = out(h2, 5, 2) >= 5;
  s.layers = {L::conv(24, 5, 2), L::relu(), L::conv(36, 5, 2), L::relu(),
              wide ? L::conv(48, 5, 2) : L::conv(48, 3, 1), L::relu(),
              L::conv(64, 3, 1), L::relu(), L::conv(64, 3, 1), L::relu(),
              L::flatten(), L::fc(1164), L::relu(), L::fc(100), L::relu(), L::fc(1)};
  return finish(std::move(s));
}

std::vector<ParamInfo> param_layout(const ModelSpec& spec) {
  const std::vector<LayerShape> shapes = validate_spec(spec);
  std::vector<ParamInfo> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::size_t src = input_of(spec, i);
    const Shape& in = src == kNetworkInput ? spec.input_shape : shapes[src].shape;
    const std::string p = "L" + std::to_string(i) + ".";
    switch (l.kind) {
      case LayerKind::kConv: {
        const std::size_t fan = in[0] * l.kernel * l.kernel;
        out.push_back({p + "conv.kernels", {l.depth, in[0], l.kernel, l.kernel}, fan, i});
        out.push_back({p + "conv.bias", {l.depth}, fan, i});
        break;
      }
      case LayerKind::kRnn:
        out.push_back({p + "rnn.W", {l.hidden, in[0]}, in[0], i});
        out.push_back({p + "rnn.Wh", {l.hidden, l.hidden}, l.hidden, i});
        out.push_back({p + "rnn.b", {l.hidden}, in[0], i});
        break;
      case LayerKind::kFc:
        out.push_back({p + "fc.W", {l.out, in[0]}, in[0], i});
        out.push_back({p + "fc.b", {l.out}, in[0], i});
        break;
      default: break;
    }
  }
  return out;
}

std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const ParamInfo& p : param_layout(spec)) n += shape_volume(p.shape);
  return n;
}

std::string describe(const ModelSpec& spec) {
  std::ostringstream os;
  os << spec.name << (spec.kind == ModelKind::kClassifier ? " classifier " : " regressor ")
     << shape_to_string(spec.input_shape) << " out=" << spec.output_dim << " seq=" << spec.seq_len
     << " scale=" << spec.output_scale;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    os << " | " << i << ":" << kind_name(l.kind);
    if (l.kind == LayerKind::kConv) os << "(" << l.depth << "@" << l.kernel << "x" << l.kernel << "/s" << l.stride << ")";
    if (l.kind == LayerKind::kRnn) os << "(" << l.hidden << ",seq" << l.seq_len << ")";
    if (l.kind == LayerKind::kFc) os << "(" << l.out << ")";
    if (l.input) os << "<-" << *l.input;
    if (l.second_input) os << "," << *l.second_input;
  }
  return os.str();
}

std::uint64_t spec_hash(const ModelSpec& spec) { return fnv1a(describe(spec)); }

template <typename T>
Tensor<T>& ModelWeights<T>::at(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw ParameterError("no parameter named " + name);
}

template <typename T>
const Tensor<T>& ModelWeights<T>::at(const std::string& name) const {
  return const_cast<ModelWeights*>(this)->at(name);
}

template <typename T>
std::vector<Tensor<T>*> ModelWeights<T>::pointers() {
  std::vector<Tensor<T>*> out;
  for (Tensor<T>& t : tensors) out.push_back(&t);
  return out;
}

template <typename T>
void ModelWeights<T>::zero_grad() {
  for (Tensor<T>& t : tensors) t.zero_grad();
}

template struct ModelWeights<float>;
template struct ModelWeights<double>;
template struct ModelWeights<long double>;

ModelWeights<float> init_weights(const ModelSpec& spec, std::uint64_t seed) {
  ModelWeights<float> w;
  w.spec_hash = spec_hash(spec);
  w.seed = seed;
  std::mt19937_64 rng(seed);
  for (const ParamInfo& p : param_layout(spec)) {
    Tensor<float> t(p.shape);
    const bool bias = p.shape.size() == 1;
    if (!bias) {
      double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in));
      // Recurrent weights start contractive so 40-step windows stay bounded.
      if (p.name.ends_with("rnn.Wh")) bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
      if (p.name.ends_with("rnn.W")) bound = std::sqrt(3.0 / static_cast<double>(p.fan_in));
      // The output scale would otherwise blow the first predictions up by the same factor.
      if (p.layer + 1 == spec.layers.size()) bound /= spec.output_scale;
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (float& v : t.data()) v = static_cast<float>(dist(rng));
    }
    w.names.push_back(p.name);
    w.tensors.push_back(std::move(t));
  }
  return w;
}

namespace {

template <typename T>
struct Evaluator {
  Graph<T>& g;
  const ModelSpec& spec;
  ModelWeights<T>& weights;
  NodeId frames;
  const SamplePlan& plan;
  bool trainable;
  const std::map<std::size_t, NodeId>* projections;
  std::vector<std::optional<NodeId>> memo;

  NodeId param(std::size_t layer, const char* suffix) {
    Tensor<T>& t = weights.at("L" + std::to_string(layer) + "." + suffix);
    return trainable ? g.parameter(t) : g.input_ref(t);
  }

  NodeId source(std::size_t i) {
    const std::size_t src = input_of(spec, i);
    return src == kNetworkInput ? frames : eval(src);
  }

  NodeId eval(std::size_t i) {
    if (memo[i]) return *memo[i];
    const LayerSpec& l = spec.layers[i];
    NodeId out;
    switch (l.kind) {
      case LayerKind::kConv:
        out = g.conv2d(source(i), param(i, "conv.kernels"), param(i, "conv.bias"), l.stride);
        break;
      case LayerKind::kRelu: out = g.relu(source(i)); break;
      case LayerKind::kFlatten: out = g.flatten(source(i)); break;
      case LayerKind::kRnn: {
        NodeId proj;
        if (projections && projections->contains(i)) {
          proj = projections->at(i);
        } else {
          proj = g.fully_connected(source(i), param(i, "rnn.W"), std::nullopt);
        }
        std::vector<RnnWindow> windows(plan.size());
        for (std::size_t k = 0; k < plan.size(); ++k) windows[k] = {plan.ends[k], plan.firsts[k], l.seq_len};
        out = g.rnn_windows(proj, param(i, "rnn.Wh"), param(i, "rnn.b"), windows);
        break;
      }
      case LayerKind::kConcat: out = g.concat(source(i), eval(*l.second_input)); break;
      case LayerKind::kFc: out = g.fully_connected(source(i), param(i, "fc.W"), param(i, "fc.b")); break;
    }
    memo[i] = out;
    return out;
  }
};

}  // namespace

template <typename T>
NodeId forward_graph(Graph<T>& graph, const ModelSpec& spec, ModelWeights<T>& weights, NodeId frames,
                     const SamplePlan& plan, bool trainable, const std::map<std::size_t, NodeId>* projections) {
  const Tensor<T>& x = graph.value(frames);
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != spec.input_shape)
    throw DimensionError(spec.name + ": frames must be [n]+" + shape_to_string(spec.input_shape) + ", got " +
                         shape_to_string(x.shape()));
  if (weights.spec_hash != spec_hash(spec)) throw IncompatibleCheckpointError(spec.name + ": weights belong to another spec");
  if (spec.recurrent()) {
    if (plan.size() == 0) throw ParameterError(spec.name + ": recurrent forward needs at least one window");
    if (plan.firsts.size() != plan.ends.size()) throw ParameterError("sample plan ends/firsts mismatch");
  }
  Evaluator<T> ev{graph, spec, weights, frames, plan, trainable, projections, {}};
  ev.memo.assign(spec.layers.size(), std::nullopt);
  NodeId out = ev.eval(spec.layers.size() - 1);
  if (spec.output_scale != 1.0) out = graph.scale(out, static_cast<T>(spec.output_scale));
  return out;
}

template <typename T>
std::map<std::size_t, Tensor<T>> frame_projections(const ModelSpec& spec, const ModelWeights<T>& weights,
                                                   const Tensor<T>& frames) {
  Graph<T> g;
  const NodeId x = g.input_ref(frames);
  SamplePlan plan;
  auto& w = const_cast<ModelWeights<T>&>(weights);
  Evaluator<T> ev{g, spec, w, x, plan, false, nullptr, {}};
  ev.memo.assign(spec.layers.size(), std::nullopt);
  std::map<std::size_t, Tensor<T>> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind != LayerKind::kRnn) continue;
    const NodeId proj = g.fully_connected(ev.source(i), ev.param(i, "rnn.W"), std::nullopt);
    out.emplace(i, g.value(proj));
  }
  return out;
}

template <typename T>
Tensor<T> forward(const ModelSpec& spec, const ModelWeights<T>& weights, const Tensor<T>& frames) {
  const Tensor<T> batch = frames.rank() == 3 ? frames.reshaped(Shape{1, frames.dim(0), frames.dim(1), frames.dim(2)})
                                              : frames;
  const std::size_t n = batch.dim(0);
  if (spec.recurrent() && n < spec.seq_len)
    throw ParameterError(spec.name + ": needs " + std::to_string(spec.seq_len) + " frames, got " + std::to_string(n));
  Graph<T> g;
  const NodeId x = g.input_ref(batch);
  SamplePlan plan{{n - 1}, {0}};
  auto& w = const_cast<ModelWeights<T>&>(weights);
  NodeId out = forward_graph(g, spec, w, x, plan, false);
  const Tensor<T>& v = g.value(out);
  // Feed-forward specs emit one row per frame; keep the last.
  const std::size_t rows = v.dim(0);
  std::vector<T> last(v.data().begin() + static_cast<std::ptrdiff_t>((rows - 1) * spec.output_dim), v.data().end());
  return Tensor<T>(Shape{spec.output_dim}, std::move(last));
}

template NodeId forward_graph<float>(Graph<float>&, const ModelSpec&, ModelWeights<float>&, NodeId, const SamplePlan&,
                                     bool, const std::map<std::size_t, NodeId>*);
template NodeId forward_graph<long double>(Graph<long double>&, const ModelSpec&, ModelWeights<long double>&, NodeId,
                                           const SamplePlan&, bool, const std::map<std::size_t, NodeId>*);
template NodeId forward_graph<double>(Graph<double>&, const ModelSpec&, ModelWeights<double>&, NodeId,
                                      const SamplePlan&, bool, const std::map<std::size_t, NodeId>*);
template std::map<std::size_t, Tensor<float>> frame_projections<float>(const ModelSpec&, const ModelWeights<float>&,
                                                                       const Tensor<float>&);
template std::map<std::size_t, Tensor<double>> frame_projections<double>(const ModelSpec&,
                                                                         const ModelWeights<double>&,
                                                                         const Tensor<double>&);
template Tensor<float> forward<float>(const ModelSpec&, const ModelWeights<float>&, const Tensor<float>&);
template Tensor<double> forward<double>(const ModelSpec&, const ModelWeights<double>&, const Tensor<double>&);

double gradient_check(const ModelSpec& spec, const ModelWeights<double>& weights, const Tensor<double>& frames,
                      std::size_t label, double target, const GradCheckOptions& options) {
  const Tensor<double> batch =
      frames.rank() == 3 ? frames.reshaped(Shape{1, frames.dim(0), frames.dim(1), frames.dim(2)}) : frames;
  const std::size_t n = batch.dim(0);
  if (!spec.recurrent() && n > 1) throw ParameterError("feed-forward gradient check takes one frame");
  const SamplePlan plan{{n - 1}, {0}};
  const std::size_t labels[1] = {label};

  auto loss = [&]<typename T>(Graph<T>& g, ModelWeights<T>& w, const Tensor<T>& x, bool trainable) {
    const NodeId out = forward_graph(g, spec, w, g.input_ref(x), plan, trainable);
    if (spec.kind == ModelKind::kClassifier) return g.softmax_cross_entropy(out, labels);
    return g.half_l2(out, g.input(Tensor<T>(g.value(out).shape(), static_cast<T>(target))));
  };
  ModelWeights<double> w = weights;
  ModelWeights<long double> wx = weights.cast<long double>();
  const Tensor<long double> batch_x = batch.cast<long double>();
  std::vector<Tensor<double>*> params = w.pointers();
  std::vector<Tensor<long double>*> extended = wx.pointers();
  return check_gradients_extended(
      params, [&](Graph<double>& g) { return loss(g, w, batch, true); }, extended,
      [&](Graph<long double>& g) { return loss(g, wx, batch_x, false); }, options);
}

void save_weights(const ModelWeights<float>& weights, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes("HMTW", 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint64_t>(weights.spec_hash);
  for (std::size_t i = 0; i < weights.names.size(); ++i) {
    const std::string& name = weights.names[i];
    const Tensor<float>& t = weights.tensors[i];
    if (name.size() > 0xFFFF) throw ParameterError("tensor name too long");
    if (t.rank() > 0xFF) throw ParameterError("tensor rank too large");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.put<float>(v);
  }
  w.write_file(path);
}

ModelWeights<float> load_weights(const std::filesystem::path& path, const ModelSpec& spec) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::string(magic, 4) != "HMTW") {
    r.fail("bad checkpoint magic");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  ModelWeights<float> w;
  w.spec_hash = r.get<std::uint64_t>("spec hash");
  while (!r.at_end()) {
    const auto len = r.get<std::uint16_t>("tensor name length");
    std::string name(len, '\0');
    r.get_bytes(name.data(), len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    if (rank == 0) r.fail("tensor " + name + " has rank 0");
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.get<std::uint32_t>("tensor dims");
      if (d == 0) r.fail("tensor " + name + " has a zero dimension");
    }
    const std::size_t count = shape_volume(shape);
    if (r.remaining() < count * sizeof(float)) r.fail("truncated data for tensor " + name);
    std::vector<float> data(count);
    for (float& v : data) v = r.get<float>("tensor data");
    w.names.push_back(std::move(name));
    w.tensors.emplace_back(std::move(shape), std::move(data));
  }

  const std::uint64_t expected = spec_hash(spec);
  if (w.spec_hash != expected)
    throw IncompatibleCheckpointError(path.string() + ": checkpoint spec hash does not match " + spec.name);
  const std::vector<ParamInfo> layout = param_layout(spec);
  if (layout.size() != w.names.size())
    throw IncompatibleCheckpointError(path.string() + ": expected " + std::to_string(layout.size()) + " tensors, found " +
                                      std::to_string(w.names.size()));
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (layout[i].name != w.names[i] || layout[i].shape != w.tensors[i].shape())
      throw IncompatibleCheckpointError(path.string() + ": tensor " + w.names[i] + " does not match " + layout[i].name +
                                        shape_to_string(layout[i].shape));
  return w;
}

}  // namespace hiersteer
