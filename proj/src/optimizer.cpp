#include "hiersteer/optimizer.hpp"

#include <cmath>

namespace hiersteer {

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0)) throw ParameterError("learning rate must be > 0");
  if (config_.kind == OptimizerKind::kAdam) {
    if (config_.beta1 < 0 || config_.beta1 >= 1 || config_.beta2 < 0 || config_.beta2 >= 1)
      throw ParameterError("Adam betas must lie in [0, 1)");
    if (!(config_.epsilon > 0)) throw ParameterError("Adam epsilon must be > 0");
  }
}

template <typename T>
void Optimizer<T>::set_learning_rate(double lr) {
  if (!(lr > 0)) throw ParameterError("learning rate must be positive");
  config_.learning_rate = lr;
}

template <typename T>
void Optimizer<T>::step(std::span<Tensor<T>* const> params) {
  ++steps_;
  const T lr = static_cast<T>(config_.learning_rate);
  if (config_.kind == OptimizerKind::kSgd) {
    for (Tensor<T>* p : params) {
      if (!p->has_grad()) continue;
      auto g = p->grad();
      auto w = p->data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }
    return;
  }

  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const T c1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(steps_)));
  const T c2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(steps_)));
  const T eps = static_cast<T>(config_.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>* p = params[k];
    if (!p->has_grad()) continue;
    auto g = p->grad();
    auto w = p->data();
    if (m_[k].size() != w.size()) {
      m_[k].assign(w.size(), T(0));
      v_[k].assign(w.size(), T(0));
    }
    T* m = m_[k].data();
    T* v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = static_cast<T>(b1) * m[i] + static_cast<T>(1 - b1) * g[i];
      v[i] = static_cast<T>(b2) * v[i] + static_cast<T>(1 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace hiersteer
