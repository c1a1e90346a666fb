#include "hiersteer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace hiersteer {

double relative_gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

void analytic_pass(std::span<Tensor<double>* const> params, const std::function<NodeId(Graph<double>&)>& build) {
  for (Tensor<double>* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  Graph<double> g;
  const NodeId loss = build(g);
  g.backward(loss);
}

std::vector<std::size_t> sample_coords(std::size_t size, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> coords(size);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > count) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(count);
  }
  return coords;
}

// Central difference of `evaluate` along one coordinate of `p`, restoring it afterwards.
template <typename T, typename F>
double central_difference(Tensor<T>& p, std::size_t i, double epsilon, F&& evaluate) {
  const T saved = p[i];
  const T h = static_cast<T>(epsilon);
  p[i] = saved + h;
  const T up = evaluate();
  p[i] = saved - h;
  const T down = evaluate();
  p[i] = saved;
  return static_cast<double>((up - down) / (2 * h));
}

// Best agreement over steps 10ε, ε, ε/10. The wide step can straddle a ReLU
// kink and the narrow one is limited by rounding; a wrong analytic value
// disagrees at every step.
template <typename T, typename F>
double coordinate_error(Tensor<T>& p, std::size_t i, double analytic, double epsilon, F&& evaluate) {
  double best = std::numeric_limits<double>::infinity();
  for (double h : {10 * epsilon, epsilon, epsilon / 10})
    best = std::min(best, relative_gradient_error(analytic, central_difference(p, i, h, evaluate)));
  return best;
}

}  // namespace

double check_gradients(std::span<Tensor<double>* const> params, const std::function<NodeId(Graph<double>&)>& build,
                       const GradCheckOptions& options) {
  analytic_pass(params, build);
  auto evaluate = [&] {
    Graph<double> g;
    return g.value(build(g))[0];
  };
  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (Tensor<double>* p : params)
    for (std::size_t i : sample_coords(p->size(), options.samples_per_tensor, rng))
      worst = std::max(worst, coordinate_error(*p, i, p->grad()[i], options.epsilon, evaluate));
  return worst;
}

double check_gradients_extended(std::span<Tensor<double>* const> params,
                                const std::function<NodeId(Graph<double>&)>& build,
                                std::span<Tensor<long double>* const> extended,
                                const std::function<NodeId(Graph<long double>&)>& build_extended,
                                const GradCheckOptions& options) {
  if (extended.size() != params.size()) throw ParameterError("extended copies must mirror params");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (extended[k]->shape() != params[k]->shape()) throw DimensionError("extended copy shape mismatch");
  analytic_pass(params, build);
  auto evaluate = [&] {
    Graph<long double> g;
    return g.value(build_extended(g))[0];
  };
  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i : sample_coords(params[k]->size(), options.samples_per_tensor, rng))
      worst = std::max(worst, coordinate_error(*extended[k], i, params[k]->grad()[i], options.epsilon, evaluate));
  return worst;
}

}  // namespace hiersteer
