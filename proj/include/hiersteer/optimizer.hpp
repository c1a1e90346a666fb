#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hiersteer/tensor.hpp"

namespace hiersteer {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// In-place first-order updates driven by each tensor's grad slot.
///
/// Adam moments are keyed by position in the parameter list, so the same
/// list (same order) must be passed on every step.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(std::span<Tensor<T>* const> params);
  const OptimizerConfig& config() const noexcept { return config_; }
  /// Schedules adjust the step size between steps; moments are kept.
  void set_learning_rate(double lr);
  std::size_t steps_taken() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace hiersteer
