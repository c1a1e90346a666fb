#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "hiersteer/autodiff.hpp"

namespace hiersteer {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates sampled per tensor; tensors smaller than this are checked exhaustively.
  std::size_t samples_per_tensor = 8;
  std::uint64_t seed = 1;
};

/// |a - n| / max(1e-8, |a| + |n|)
double relative_gradient_error(double analytic, double numeric);

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` must register every tensor in `params` with Graph::parameter and
/// return the scalar loss node. Parameters are perturbed in place and restored.
/// Each coordinate is differenced with steps 10ε, ε and ε/10 and scored by the
/// best of the three. Returns the maximum over the sampled coordinates.
double check_gradients(std::span<Tensor<double>* const> params,
                       const std::function<NodeId(Graph<double>&)>& build, const GradCheckOptions& options = {});

/// Same comparison, but the finite differences perturb `extended`, an
/// extended precision copy of `params` (same order and shapes) that
/// `build_extended` reads. Used for deep models, where double rounding in the
/// loss swamps small gradient entries.
double check_gradients_extended(std::span<Tensor<double>* const> params,
                                const std::function<NodeId(Graph<double>&)>& build,
                                std::span<Tensor<long double>* const> extended,
                                const std::function<NodeId(Graph<long double>&)>& build_extended,
                                const GradCheckOptions& options = {});

}  // namespace hiersteer
