#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hiersteer/tensor.hpp"

namespace hiersteer {

/// Handle to a value recorded on a Graph.
struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

/// One recurrent evaluation window over a per-frame tensor.
///
/// Visits frames `end - length + 1 .. end`, where any index below `first`
/// is replaced by `first` (left padding by repeating the earliest frame).
struct RnnWindow {
  std::size_t end = 0;
  std::size_t first = 0;
  std::size_t length = 1;
};

/// Tape of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order. A graph may be differentiated once; a second call to
/// backward() throws ParameterError. Parameters are referenced, not copied:
/// their gradients accumulate into the referenced tensor's grad slot, so the
/// tensor must outlive the graph.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  NodeId input(Tensor<T> value);
  /// Read-only reference to an external tensor; no gradient is tracked.
  NodeId input_ref(const Tensor<T>& value);
  NodeId parameter(Tensor<T>& param);

  /// Valid cross-correlation. `x` is [C,H,W] or [B,C,H,W], `kernels` [D,C,kh,kw], `bias` [D].
  NodeId conv2d(NodeId x, NodeId kernels, NodeId bias, std::size_t stride);
  /// `x` is [N] or [B,N], `weight` [M,N], optional `bias` [M]; computes W·x + b per row.
  NodeId fully_connected(NodeId x, NodeId weight, std::optional<NodeId> bias);
  NodeId relu(NodeId x);
  NodeId reshape(NodeId x, Shape shape);
  /// Keeps the leading (batch) axis and collapses the rest.
  NodeId flatten(NodeId x);
  /// Concatenation along the last axis; leading axes must agree.
  NodeId concat(NodeId a, NodeId b);
  /// Stacks rank-1 nodes of equal length into a [L,N] matrix.
  NodeId stack(std::span<const NodeId> rows);

  /// ReLU recurrence h_t = p_t + Whᵀ·relu(h_{t-1}) + b over each window of
  /// the precomputed input projections `projected` [n,M]. Returns [windows,M]
  /// holding the final hidden state of every window. `h0` defaults to zero.
  NodeId rnn_windows(NodeId projected, NodeId recurrent, NodeId bias, std::span<const RnnWindow> windows,
                     std::optional<NodeId> h0 = std::nullopt);
  /// Single-sequence RNN over rank-1 inputs; returns h_L with shape [M].
  NodeId rnn_sequence(std::span<const NodeId> inputs, NodeId weight, NodeId recurrent, NodeId bias,
                      std::optional<NodeId> h0 = std::nullopt);

  /// Softmax over the last axis.
  NodeId softmax(NodeId logits);
  /// Mean over rows of -log(max(p_label, 1e-12)). One label per row.
  NodeId cross_entropy(NodeId probs, std::span<const std::size_t> labels);
  /// Fused, numerically stable softmax + cross_entropy; gradient is (p - y) / rows.
  NodeId softmax_cross_entropy(NodeId logits, std::span<const std::size_t> labels);
  /// ½ Σ (target - pred)².
  NodeId half_l2(NodeId pred, NodeId target);
  NodeId sum(NodeId x);
  NodeId scale(NodeId x, T factor);

  void backward(NodeId loss);

  const Tensor<T>& value(NodeId id) const;
  /// Gradient of the last backward() w.r.t. a node. Empty before backward.
  std::span<const T> grad(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id.index).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  static constexpr T kProbabilityFloor = static_cast<T>(1e-12);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    AlignedVector<T> grad;
    T* grad_target = nullptr;
    bool needs_grad = false;
    std::function<void(Graph&)> backward;
  };

  NodeId push(Tensor<T> value, bool needs_grad, std::function<void(Graph&)> backward);
  const Node& node(NodeId id) const;
  T* grad_ptr(NodeId id);
  bool needs(NodeId id) const { return node(id).needs_grad; }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class Graph<long double>;

}  // namespace hiersteer
