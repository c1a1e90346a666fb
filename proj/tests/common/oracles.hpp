#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. Plain loops on std::vector; nothing here touches Eigen or the tape.

#include <cmath>
#include <cstddef>
#include <random>
#include <type_traits>
#include <vector>

#include "hiersteer/tensor.hpp"

namespace oracle {

using hiersteer::Shape;
using hiersteer::Tensor;

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Quadruple-loop valid cross-correlation: x [C,H,W], k [D,C,kh,kw], b [D].
inline std::vector<double> conv2d(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b,
                                  std::size_t stride, std::size_t& out_h, std::size_t& out_w) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t D = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  out_h = (H - kh) / stride + 1;
  out_w = (W - kw) / stride + 1;
  std::vector<double> out(D * out_h * out_w);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        double acc = b[d];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t m = 0; m < kh; ++m)
            for (std::size_t n = 0; n < kw; ++n)
              acc += x[(c * H + i * stride + m) * W + j * stride + n] * k[((d * C + c) * kh + m) * kw + n];
        out[(d * out_h + i) * out_w + j] = acc;
      }
  return out;
}

// Naive W·x + b with W [M,N].
inline std::vector<double> matvec(const Tensor<double>& w, const std::vector<double>& x, const Tensor<double>* b) {
  const std::size_t M = w.dim(0), N = w.dim(1);
  std::vector<double> out(M);
  for (std::size_t i = 0; i < M; ++i) {
    double acc = b ? (*b)[i] : 0.0;
    for (std::size_t j = 0; j < N; ++j) acc += w[i * N + j] * x[j];
    out[i] = acc;
  }
  return out;
}

// Hand-unrolled h_t = W·x_t + Whᵀ·relu(h_{t-1}) + b, h_0 given.
inline std::vector<double> rnn(const std::vector<std::vector<double>>& xs, const Tensor<double>& w,
                               const Tensor<double>& wh, const Tensor<double>& b, std::vector<double> h) {
  const std::size_t M = wh.dim(0);
  for (const auto& x : xs) {
    std::vector<double> next = matvec(w, x, &b);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < M; ++j) next[i] += wh[j * M + i] * std::max(0.0, h[j]);
    h = std::move(next);
  }
  return h;
}

// Moves a weight set off the ReLU kinks that zero-initialized biases create,
// so finite differences see a differentiable point.
template <typename W>
void jitter_biases(W& weights, std::mt19937_64& rng, double amplitude = 0.1) {
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  for (auto& t : weights.tensors)
    if (t.rank() == 1)
      for (auto& v : t.data()) v = static_cast<typename std::remove_reference_t<decltype(v)>>(dist(rng));
}

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace oracle
