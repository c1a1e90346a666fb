#include "hiersteer/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace hiersteer {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Map = Eigen::Map<MatRM<T>>;
template <typename T>
using CMap = Eigen::Map<const MatRM<T>>;
template <typename T>
using VMap = Eigen::Map<VecX<T>>;
template <typename T>
using CVMap = Eigen::Map<const VecX<T>>;

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t depth, kh, kw, stride;
  std::size_t out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        const T* plane = x + c * g.height * g.width;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const T* src = plane + (oy * g.stride + i) * g.width + j;
          T* dst = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = src[ox * g.stride];
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        T* plane = dx + c * g.height * g.width;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          T* dst = plane + (oy * g.stride + i) * g.width + j;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
}

std::size_t rows_of(const Shape& s) { return s.size() == 1 ? 1 : shape_volume(s) / s.back(); }

}  // namespace

template <typename T>
NodeId Graph<T>::push(Tensor<T> value, bool needs_grad, std::function<void(Graph&)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw ParameterError("node id out of range");
  return nodes_[id.index];
}

template <typename T>
const Tensor<T>& Graph<T>::value(NodeId id) const {
  const Node& n = node(id);
  return n.external ? *n.external : n.value;
}

template <typename T>
std::span<const T> Graph<T>::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad_target) return {n.grad_target, value(id).size()};
  return n.grad;
}

template <typename T>
T* Graph<T>::grad_ptr(NodeId id) {
  Node& n = nodes_[id.index];
  return n.grad_target ? n.grad_target : n.grad.data();
}

template <typename T>
NodeId Graph<T>::input(Tensor<T> value) {
  return push(std::move(value), false, {});
}

template <typename T>
NodeId Graph<T>::input_ref(const Tensor<T>& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::parameter(Tensor<T>& param) {
  if (!param.requires_grad()) param.set_requires_grad(true);
  Node n;
  n.external = &param;
  n.grad_target = param.grad().data();
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::conv2d(NodeId xi, NodeId ki, NodeId bi, std::size_t stride) {
  if (stride < 1) throw ParameterError("conv2d stride must be >= 1");
  const Tensor<T>& x = value(xi);
  const Tensor<T>& k = value(ki);
  const Tensor<T>& b = value(bi);
  const bool batched = x.rank() == 4;
  if (!(x.rank() == 3 || batched)) throw DimensionError("conv2d input must be [C,H,W] or [B,C,H,W]");
  if (k.rank() != 4) throw DimensionError("conv2d kernels must be [D,C,kh,kw]");
  ConvGeometry g{};
  g.batch = batched ? x.dim(0) : 1;
  g.channels = x.dim(batched ? 1 : 0);
  g.height = x.dim(batched ? 2 : 1);
  g.width = x.dim(batched ? 3 : 2);
  g.depth = k.dim(0);
  g.kh = k.dim(2);
  g.kw = k.dim(3);
  g.stride = stride;
  if (k.dim(1) != g.channels)
    throw DimensionError("conv2d kernel channels " + std::to_string(k.dim(1)) + " != input channels " +
                         std::to_string(g.channels));
  if (b.rank() != 1 || b.dim(0) != g.depth) throw DimensionError("conv2d bias must be [D]");
  if (g.kh > g.height || g.kw > g.width)
    throw DimensionError("conv2d kernel " + shape_to_string(k.shape()) + " larger than input " +
                         shape_to_string(x.shape()));
  g.out_h = (g.height - g.kh) / stride + 1;
  g.out_w = (g.width - g.kw) / stride + 1;

  const std::size_t K = g.patch(), P = g.positions(), D = g.depth;
  const std::size_t in_vol = g.channels * g.height * g.width;
  Shape out_shape = batched ? Shape{g.batch, D, g.out_h, g.out_w} : Shape{D, g.out_h, g.out_w};
  Tensor<T> out(out_shape);
  auto cols = std::make_shared<AlignedVector<T>>(g.batch * K * P);
  CMap<T> W(k.data().data(), D, K);
  CVMap<T> bias(b.data().data(), D);
  for (std::size_t n = 0; n < g.batch; ++n) {
    T* col = cols->data() + n * K * P;
    im2col(x.data().data() + n * in_vol, g, col);
    Map<T> o(out.data().data() + n * D * P, D, P);
    o.noalias() = W * CMap<T>(col, K, P);
    o.colwise() += bias;
  }

  const bool ng = needs(xi) || needs(ki) || needs(bi);
  const std::size_t self = nodes_.size();
  return push(std::move(out), ng, [=](Graph& gr) {
    const T* dout = gr.grad_ptr(NodeId{self});
    const Tensor<T>& kv = gr.value(ki);
    for (std::size_t n = 0; n < g.batch; ++n) {
      CMap<T> dO(dout + n * D * P, D, P);
      const T* col = cols->data() + n * K * P;
      if (gr.needs(ki)) Map<T>(gr.grad_ptr(ki), D, K).noalias() += dO * CMap<T>(col, K, P).transpose();
      if (gr.needs(bi)) VMap<T>(gr.grad_ptr(bi), D) += dO.rowwise().sum();
      if (gr.needs(xi)) {
        MatRM<T> dcol = CMap<T>(kv.data().data(), D, K).transpose() * dO;
        col2im_add(dcol.data(), g, gr.grad_ptr(xi) + n * in_vol);
      }
    }
  });
}

template <typename T>
NodeId Graph<T>::fully_connected(NodeId xi, NodeId wi, std::optional<NodeId> bi) {
  const Tensor<T>& x = value(xi);
  const Tensor<T>& w = value(wi);
  if (w.rank() != 2) throw DimensionError("fully_connected weight must be [M,N]");
  if (x.rank() > 2) throw DimensionError("fully_connected input must be [N] or [B,N]");
  const std::size_t M = w.dim(0), N = w.dim(1);
  const std::size_t B = x.rank() == 2 ? x.dim(0) : 1;
  if (x.shape().back() != N)
    throw DimensionError("fully_connected input " + shape_to_string(x.shape()) + " vs weight " +
                         shape_to_string(w.shape()));
  if (bi && (value(*bi).rank() != 1 || value(*bi).dim(0) != M))
    throw DimensionError("fully_connected bias must be [M]");
  Tensor<T> out(x.rank() == 2 ? Shape{B, M} : Shape{M});
  Map<T> o(out.data().data(), B, M);
  o.noalias() = CMap<T>(x.data().data(), B, N) * CMap<T>(w.data().data(), M, N).transpose();
  if (bi) o.rowwise() += CVMap<T>(value(*bi).data().data(), M).transpose();

  const bool ng = needs(xi) || needs(wi) || (bi && needs(*bi));
  const std::size_t self = nodes_.size();
  return push(std::move(out), ng, [=](Graph& gr) {
    CMap<T> dO(gr.grad_ptr(NodeId{self}), B, M);
    if (gr.needs(wi))
      Map<T>(gr.grad_ptr(wi), M, N).noalias() += dO.transpose() * CMap<T>(gr.value(xi).data().data(), B, N);
    if (bi && gr.needs(*bi)) VMap<T>(gr.grad_ptr(*bi), M) += dO.colwise().sum().transpose();
    if (gr.needs(xi))
      Map<T>(gr.grad_ptr(xi), B, N).noalias() += dO * CMap<T>(gr.value(wi).data().data(), M, N);
  });
}

template <typename T>
NodeId Graph<T>::relu(NodeId xi) {
  const Tensor<T>& x = value(xi);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(xi), [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    const Tensor<T>& xv = gr.value(xi);
    T* dx = gr.grad_ptr(xi);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > T(0)) dx[i] += dO[i];
  });
}

template <typename T>
NodeId Graph<T>::reshape(NodeId xi, Shape shape) {
  Tensor<T> out = value(xi).reshaped(std::move(shape));
  const std::size_t self = nodes_.size();
  const std::size_t n = out.size();
  return push(std::move(out), needs(xi), [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    T* dx = gr.grad_ptr(xi);
    for (std::size_t i = 0; i < n; ++i) dx[i] += dO[i];
  });
}

template <typename T>
NodeId Graph<T>::flatten(NodeId xi) {
  const Tensor<T>& x = value(xi);
  if (x.rank() < 2) throw DimensionError("flatten needs a leading batch axis");
  const std::size_t lead = x.dim(0);
  return reshape(xi, Shape{lead, x.size() / lead});
}

template <typename T>
NodeId Graph<T>::concat(NodeId ai, NodeId bi) {
  const Tensor<T>& a = value(ai);
  const Tensor<T>& b = value(bi);
  if (a.rank() != b.rank() || rows_of(a.shape()) != rows_of(b.shape()) ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()))
    throw DimensionError("concat shapes " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  const std::size_t R = rows_of(a.shape()), na = a.shape().back(), nb = b.shape().back();
  Shape s = a.shape();
  s.back() = na + nb;
  Tensor<T> out(s);
  for (std::size_t r = 0; r < R; ++r) {
    std::copy_n(a.data().data() + r * na, na, out.data().data() + r * (na + nb));
    std::copy_n(b.data().data() + r * nb, nb, out.data().data() + r * (na + nb) + na);
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(ai) || needs(bi), [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    for (std::size_t r = 0; r < R; ++r) {
      if (gr.needs(ai)) {
        T* da = gr.grad_ptr(ai) + r * na;
        for (std::size_t i = 0; i < na; ++i) da[i] += dO[r * (na + nb) + i];
      }
      if (gr.needs(bi)) {
        T* db = gr.grad_ptr(bi) + r * nb;
        for (std::size_t i = 0; i < nb; ++i) db[i] += dO[r * (na + nb) + na + i];
      }
    }
  });
}

template <typename T>
NodeId Graph<T>::stack(std::span<const NodeId> rows) {
  if (rows.empty()) throw ParameterError("stack of zero rows");
  const std::size_t N = value(rows[0]).size();
  std::vector<NodeId> ids(rows.begin(), rows.end());
  Tensor<T> out(Shape{ids.size(), N});
  bool ng = false;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const Tensor<T>& v = value(ids[r]);
    if (v.rank() != 1 || v.size() != N) throw DimensionError("stack rows must be rank-1 of equal length");
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + r * N);
    ng = ng || needs(ids[r]);
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), ng, [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!gr.needs(ids[r])) continue;
      T* dx = gr.grad_ptr(ids[r]);
      for (std::size_t i = 0; i < N; ++i) dx[i] += dO[r * N + i];
    }
  });
}

template <typename T>
NodeId Graph<T>::rnn_windows(NodeId pi, NodeId whi, NodeId bi, std::span<const RnnWindow> windows_in,
                             std::optional<NodeId> h0i) {
  const Tensor<T>& p = value(pi);
  const Tensor<T>& wh = value(whi);
  const Tensor<T>& b = value(bi);
  if (p.rank() != 2) throw DimensionError("rnn projected inputs must be [n,M]");
  const std::size_t n = p.dim(0), M = p.dim(1);
  if (wh.shape() != Shape{M, M}) throw DimensionError("rnn recurrent weight must be [M,M]");
  if (b.shape() != Shape{M}) throw DimensionError("rnn bias must be [M]");
  if (h0i && value(*h0i).shape() != Shape{M}) throw DimensionError("rnn h0 must be [M]");
  if (windows_in.empty()) throw ParameterError("rnn needs at least one window");
  std::vector<RnnWindow> windows(windows_in.begin(), windows_in.end());
  std::size_t total_steps = 0;
  for (const RnnWindow& w : windows) {
    if (w.length < 1) throw ParameterError("rnn window length must be >= 1 (empty sequence)");
    if (w.end >= n || w.first > w.end) throw ParameterError("rnn window indices out of range");
    total_steps += w.length;
  }

  auto frame_at = [](const RnnWindow& w, std::size_t t) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(w.end) - static_cast<std::ptrdiff_t>(w.length) + 1 +
                               static_cast<std::ptrdiff_t>(t);
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(idx, static_cast<std::ptrdiff_t>(w.first)));
  };

  VecX<T> s0 = VecX<T>::Zero(M);
  if (h0i) s0 = CVMap<T>(value(*h0i).data().data(), M).cwiseMax(T(0));

  auto hs = std::make_shared<AlignedVector<T>>(total_steps * M);
  Tensor<T> out(Shape{windows.size(), M});
  CMap<T> Wh(wh.data().data(), M, M);
  CVMap<T> bias(b.data().data(), M);
  std::size_t offset = 0;
  VecX<T> s(M);
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const RnnWindow& w = windows[wi];
    for (std::size_t t = 0; t < w.length; ++t) {
      VMap<T> h(hs->data() + (offset + t) * M, M);
      if (t == 0)
        s = s0;
      else
        s = CVMap<T>(hs->data() + (offset + t - 1) * M, M).cwiseMax(T(0));
      h.noalias() = Wh.transpose() * s;
      h += CVMap<T>(p.data().data() + frame_at(w, t) * M, M) + bias;
    }
    std::copy_n(hs->data() + (offset + w.length - 1) * M, M, out.data().data() + wi * M);
    offset += w.length;
  }

  const bool ng = needs(pi) || needs(whi) || needs(bi) || (h0i && needs(*h0i));
  const std::size_t self = nodes_.size();
  return push(std::move(out), ng, [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    CMap<T> Whv(gr.value(whi).data().data(), M, M);
    VecX<T> dh(M), ds(M), s(M);
    VecX<T> s_init = VecX<T>::Zero(M);
    if (h0i) s_init = CVMap<T>(gr.value(*h0i).data().data(), M).cwiseMax(T(0));
    std::size_t off = 0;
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      const RnnWindow& w = windows[wi];
      dh = CVMap<T>(dO + wi * M, M);
      for (std::size_t t = w.length; t-- > 0;) {
        if (gr.needs(pi)) VMap<T>(gr.grad_ptr(pi) + frame_at(w, t) * M, M) += dh;
        if (gr.needs(bi)) VMap<T>(gr.grad_ptr(bi), M) += dh;
        if (t == 0)
          s = s_init;
        else
          s = CVMap<T>(hs->data() + (off + t - 1) * M, M).cwiseMax(T(0));
        if (gr.needs(whi)) Map<T>(gr.grad_ptr(whi), M, M).noalias() += s * dh.transpose();
        ds.noalias() = Whv * dh;
        const T* prev = t == 0 ? nullptr : hs->data() + (off + t - 1) * M;
        if (t == 0) {
          if (h0i && gr.needs(*h0i)) {
            const Tensor<T>& h0v = gr.value(*h0i);
            T* dh0 = gr.grad_ptr(*h0i);
            for (std::size_t i = 0; i < M; ++i)
              if (h0v[i] > T(0)) dh0[i] += ds[i];
          }
        } else {
          for (std::size_t i = 0; i < M; ++i) dh[i] = prev[i] > T(0) ? ds[i] : T(0);
        }
      }
      off += w.length;
    }
  });
}

template <typename T>
NodeId Graph<T>::rnn_sequence(std::span<const NodeId> inputs, NodeId wi, NodeId whi, NodeId bi,
                              std::optional<NodeId> h0i) {
  if (inputs.empty()) throw ParameterError("rnn_sequence needs a non-empty sequence");
  const NodeId xs = stack(inputs);
  const NodeId proj = fully_connected(xs, wi, std::nullopt);
  const RnnWindow window{inputs.size() - 1, 0, inputs.size()};
  const NodeId h = rnn_windows(proj, whi, bi, std::span<const RnnWindow>(&window, 1), h0i);
  return reshape(h, Shape{value(whi).dim(0)});
}

template <typename T>
NodeId Graph<T>::softmax(NodeId xi) {
  const Tensor<T>& x = value(xi);
  const std::size_t C = x.shape().back(), R = rows_of(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const T* v = x.data().data() + r * C;
    T* p = out.data().data() + r * C;
    const T mx = *std::max_element(v, v + C);
    T z = 0;
    for (std::size_t i = 0; i < C; ++i) z += (p[i] = std::exp(v[i] - mx));
    for (std::size_t i = 0; i < C; ++i) p[i] /= z;
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(xi), [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    const Tensor<T>& pv = gr.value(NodeId{self});
    T* dx = gr.grad_ptr(xi);
    for (std::size_t r = 0; r < R; ++r) {
      const T* p = pv.data().data() + r * C;
      const T* g = dO + r * C;
      T dot = 0;
      for (std::size_t i = 0; i < C; ++i) dot += g[i] * p[i];
      for (std::size_t i = 0; i < C; ++i) dx[r * C + i] += p[i] * (g[i] - dot);
    }
  });
}

template <typename T>
NodeId Graph<T>::cross_entropy(NodeId pi, std::span<const std::size_t> labels_in) {
  const Tensor<T>& p = value(pi);
  const std::size_t C = p.shape().back(), R = rows_of(p.shape());
  if (labels_in.size() != R) throw DimensionError("cross_entropy needs one label per row");
  std::vector<std::size_t> labels(labels_in.begin(), labels_in.end());
  T loss = 0;
  for (std::size_t r = 0; r < R; ++r) {
    if (labels[r] >= C) throw ParameterError("class label out of range");
    loss -= std::log(std::max(p[r * C + labels[r]], kProbabilityFloor));
  }
  const std::size_t self = nodes_.size();
  return push(Tensor<T>(Shape{1}, loss / T(R)), needs(pi), [=](Graph& gr) {
    const T g = gr.grad_ptr(NodeId{self})[0] / T(R);
    const Tensor<T>& pv = gr.value(pi);
    T* dp = gr.grad_ptr(pi);
    for (std::size_t r = 0; r < R; ++r) {
      const T v = pv[r * C + labels[r]];
      if (v > kProbabilityFloor) dp[r * C + labels[r]] -= g / v;
    }
  });
}

template <typename T>
NodeId Graph<T>::softmax_cross_entropy(NodeId xi, std::span<const std::size_t> labels_in) {
  const Tensor<T>& x = value(xi);
  const std::size_t C = x.shape().back(), R = rows_of(x.shape());
  if (labels_in.size() != R) throw DimensionError("softmax_cross_entropy needs one label per row");
  std::vector<std::size_t> labels(labels_in.begin(), labels_in.end());
  auto probs = std::make_shared<AlignedVector<T>>(R * C);
  T loss = 0;
  for (std::size_t r = 0; r < R; ++r) {
    if (labels[r] >= C) throw ParameterError("class label out of range");
    const T* v = x.data().data() + r * C;
    T* p = probs->data() + r * C;
    const T mx = *std::max_element(v, v + C);
    T z = 0;
    for (std::size_t i = 0; i < C; ++i) z += (p[i] = std::exp(v[i] - mx));
    for (std::size_t i = 0; i < C; ++i) p[i] /= z;
    loss -= std::log(std::max(p[labels[r]], kProbabilityFloor));
  }
  const std::size_t self = nodes_.size();
  return push(Tensor<T>(Shape{1}, loss / T(R)), needs(xi), [=](Graph& gr) {
    const T g = gr.grad_ptr(NodeId{self})[0] / T(R);
    T* dx = gr.grad_ptr(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t i = 0; i < C; ++i)
        dx[r * C + i] += g * ((*probs)[r * C + i] - (i == labels[r] ? T(1) : T(0)));
  });
}

template <typename T>
NodeId Graph<T>::half_l2(NodeId pi, NodeId ti) {
  const Tensor<T>& p = value(pi);
  const Tensor<T>& t = value(ti);
  if (p.shape() != t.shape())
    throw DimensionError("half_l2 shapes " + shape_to_string(p.shape()) + " and " + shape_to_string(t.shape()));
  T loss = 0;
  for (std::size_t i = 0; i < p.size(); ++i) loss += (t[i] - p[i]) * (t[i] - p[i]);
  const std::size_t self = nodes_.size();
  return push(Tensor<T>(Shape{1}, loss / T(2)), needs(pi) || needs(ti), [=](Graph& gr) {
    const T g = gr.grad_ptr(NodeId{self})[0];
    const Tensor<T>& pv = gr.value(pi);
    const Tensor<T>& tv = gr.value(ti);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const T r = pv[i] - tv[i];
      if (gr.needs(pi)) gr.grad_ptr(pi)[i] += g * r;
      if (gr.needs(ti)) gr.grad_ptr(ti)[i] -= g * r;
    }
  });
}

template <typename T>
NodeId Graph<T>::sum(NodeId xi) {
  const Tensor<T>& x = value(xi);
  T s = 0;
  for (T v : x.data()) s += v;
  const std::size_t self = nodes_.size();
  const std::size_t n = x.size();
  return push(Tensor<T>(Shape{1}, s), needs(xi), [=](Graph& gr) {
    const T g = gr.grad_ptr(NodeId{self})[0];
    T* dx = gr.grad_ptr(xi);
    for (std::size_t i = 0; i < n; ++i) dx[i] += g;
  });
}

template <typename T>
NodeId Graph<T>::scale(NodeId xi, T factor) {
  Tensor<T> out = value(xi);
  for (T& v : out.data()) v *= factor;
  const std::size_t self = nodes_.size();
  const std::size_t n = out.size();
  return push(std::move(out), needs(xi), [=](Graph& gr) {
    const T* dO = gr.grad_ptr(NodeId{self});
    T* dx = gr.grad_ptr(xi);
    for (std::size_t i = 0; i < n; ++i) dx[i] += factor * dO[i];
  });
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (consumed_) throw ParameterError("backward called twice on the same graph");
  if (value(loss).size() != 1) throw ParameterError("backward requires a scalar loss");
  consumed_ = true;
  if (!nodes_[loss.index].needs_grad) return;
  for (std::size_t i = 0; i <= loss.index; ++i) {
    Node& n = nodes_[i];
    if (n.needs_grad && !n.grad_target) n.grad.assign(n.value.size(), T(0));
  }
  grad_ptr(loss)[0] += T(1);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this);
  }
}

template class Graph<float>;
template class Graph<double>;
template class Graph<long double>;

}  // namespace hiersteer
