#pragma once

// Autodiff ops on Graph<T>. All tensors are dense row-major; feature-map
// layout is channels-last [B,H,W,C].

#include <cmath>

#include "slotlab/graph.hpp"

namespace slotlab {

namespace detail {
template <typename T>
Graph<T>& graph_of(Var<T> a) {
  SLOTLAB_REQUIRE(a.defined(), "op on undefined Var");
  return *a.g;
}
}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().same_shape(b.val()), "add shape mismatch");
  Tensor<T> out(a.val().shape());
  int64_t n = out.numel();
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(b.id));
  g.set_backprop(y.id, [&g, a, b, y]() {
    const Tensor<T>& go = g.grad(y.id);
    g.accumulate(a.id, go.data(), go.numel());
    g.accumulate(b.id, go.data(), go.numel());
  });
  return y;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().same_shape(b.val()), "sub shape mismatch");
  Tensor<T> out(a.val().shape());
  int64_t n = out.numel();
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(b.id));
  g.set_backprop(y.id, [&g, a, b, y]() {
    const Tensor<T>& go = g.grad(y.id);
    g.accumulate(a.id, go.data(), go.numel());
    if (g.needs_grad(b.id)) {
      Tensor<T> neg(go.shape());
      for (int64_t i = 0; i < go.numel(); ++i) neg[i] = -go[i];
      g.accumulate(b.id, neg.data(), neg.numel());
    }
  });
  return y;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().same_shape(b.val()), "mul shape mismatch");
  Tensor<T> out(a.val().shape());
  int64_t n = out.numel();
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(b.id));
  g.set_backprop(y.id, [&g, a, b, y]() {
    const Tensor<T>& go = g.grad(y.id);
    int64_t n2 = go.numel();
    if (g.needs_grad(a.id)) {
      Tensor<T> da(go.shape());
      const T* pb2 = g.value(b.id).data();
      for (int64_t i = 0; i < n2; ++i) da[i] = go[i] * pb2[i];
      g.accumulate(a.id, da.data(), n2);
    }
    if (g.needs_grad(b.id)) {
      Tensor<T> db(go.shape());
      const T* pa2 = g.value(a.id).data();
      for (int64_t i = 0; i < n2; ++i) db[i] = go[i] * pa2[i];
      g.accumulate(b.id, db.data(), n2);
    }
  });
  return y;
}

template <typename T>
Var<T> scalar_mul(Var<T> a, T s) {
  Graph<T>& g = detail::graph_of(a);
  Tensor<T> out(a.val().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i] * s;
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, s]() {
    const Tensor<T>& go = g.grad(y.id);
    Tensor<T> da(go.shape());
    for (int64_t i = 0; i < go.numel(); ++i) da[i] = go[i] * s;
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// 1 - x
template <typename T>
Var<T> one_minus(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  Tensor<T> out(a.val().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) - a.val()[i];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y]() {
    const Tensor<T>& go = g.grad(y.id);
    Tensor<T> da(go.shape());
    for (int64_t i = 0; i < go.numel(); ++i) da[i] = -go[i];
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

template <typename T>
Var<T> relu(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  Tensor<T> out(a.val().shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = a.val()[i] > T(0) ? a.val()[i] : T(0);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y]() {
    const Tensor<T>& go = g.grad(y.id);
    const Tensor<T>& v = g.value(a.id);
    Tensor<T> da(go.shape());
    for (int64_t i = 0; i < go.numel(); ++i)
      da[i] = v[i] > T(0) ? go[i] : T(0);
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  Tensor<T> out(a.val().shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-a.val()[i]));
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y]() {
    const Tensor<T>& go = g.grad(y.id);
    const Tensor<T>& s = g.value(y.id);
    Tensor<T> da(go.shape());
    for (int64_t i = 0; i < go.numel(); ++i)
      da[i] = go[i] * s[i] * (T(1) - s[i]);
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

template <typename T>
Var<T> tanh_op(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  Tensor<T> out(a.val().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(a.val()[i]);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y]() {
    const Tensor<T>& go = g.grad(y.id);
    const Tensor<T>& t = g.value(y.id);
    Tensor<T> da(go.shape());
    for (int64_t i = 0; i < go.numel(); ++i)
      da[i] = go[i] * (T(1) - t[i] * t[i]);
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// --- shape ops --------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Graph<T>& g = detail::graph_of(a);
  Tensor<T> out = a.val().reshaped(std::move(shape));
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y]() {
    const Tensor<T>& go = g.grad(y.id);
    g.accumulate(a.id, go.data(), go.numel());
  });
  return y;
}

// Concatenate along the last axis. All inputs share leading dims.
template <typename T>
Var<T> concat_last(const std::vector<Var<T>>& xs) {
  SLOTLAB_REQUIRE(!xs.empty(), "concat_last on empty list");
  Graph<T>& g = detail::graph_of(xs[0]);
  const Shape& s0 = xs[0].val().shape();
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < s0.size(); ++i) rows *= s0[i];
  int64_t total_c = 0;
  bool ng = false;
  for (const auto& x : xs) {
    const Shape& s = x.val().shape();
    SLOTLAB_REQUIRE(s.size() == s0.size(), "concat rank mismatch");
    for (size_t i = 0; i + 1 < s.size(); ++i)
      SLOTLAB_REQUIRE(s[i] == s0[i], "concat leading-dim mismatch");
    total_c += s.back();
    ng = ng || g.needs_grad(x.id);
  }
  Shape os = s0;
  os.back() = total_c;
  Tensor<T> out(os);
  int64_t off = 0;
  for (const auto& x : xs) {
    int64_t c = x.val().dim(-1);
    const T* src = x.val().data();
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * total_c + off, src + r * c, sizeof(T) * c);
    off += c;
  }
  Var<T> y = g.make(std::move(out), ng);
  g.set_backprop(y.id, [&g, xs, y, rows, total_c]() {
    const Tensor<T>& go = g.grad(y.id);
    int64_t off2 = 0;
    for (const auto& x : xs) {
      int64_t c = x.val().dim(-1);
      if (g.needs_grad(x.id)) {
        Tensor<T> dx(x.val().shape());
        for (int64_t r = 0; r < rows; ++r)
          std::memcpy(dx.data() + r * c, go.data() + r * total_c + off2,
                      sizeof(T) * c);
        g.accumulate(x.id, dx.data(), dx.numel());
      }
      off2 += c;
    }
  });
  return y;
}

template <typename T>
Var<T> concat_last(Var<T> a, Var<T> b) {
  return concat_last(std::vector<Var<T>>{a, b});
}
template <typename T>
Var<T> concat_last(Var<T> a, Var<T> b, Var<T> c) {
  return concat_last(std::vector<Var<T>>{a, b, c});
}

// y = x[..., start:start+len] along the last axis.
template <typename T>
Var<T> slice_last(Var<T> a, int64_t start, int64_t len) {
  Graph<T>& g = detail::graph_of(a);
  const Shape& s = a.val().shape();
  int64_t c = s.back();
  SLOTLAB_REQUIRE(start >= 0 && start + len <= c, "slice_last out of range");
  int64_t rows = a.val().numel() / c;
  Shape os = s;
  os.back() = len;
  Tensor<T> out(os);
  const T* src = a.val().data();
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * len, src + r * c + start, sizeof(T) * len);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, start, len, rows, c]() {
    const Tensor<T>& go = g.grad(y.id);
    if (!g.needs_grad(a.id)) return;
    Tensor<T>& ga = g.grad(a.id);
    for (int64_t r = 0; r < rows; ++r) {
      T* dst = ga.data() + r * c + start;
      const T* sp = go.data() + r * len;
      for (int64_t i = 0; i < len; ++i) dst[i] += sp[i];
    }
  });
  return y;
}

// Tile a tensor along a new leading batch axis: [rest...] -> [B, rest...].
template <typename T>
Var<T> tile_batch(Var<T> a, int64_t batch) {
  Graph<T>& g = detail::graph_of(a);
  int64_t n = a.val().numel();
  Shape os = a.val().shape();
  os.insert(os.begin(), batch);
  Tensor<T> out(os);
  for (int64_t b = 0; b < batch; ++b)
    std::memcpy(out.data() + b * n, a.val().data(), sizeof(T) * n);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, batch, n]() {
    const Tensor<T>& go = g.grad(y.id);
    if (!g.needs_grad(a.id)) return;
    Tensor<T> da(a.val().shape());
    for (int64_t b = 0; b < batch; ++b) {
      const T* sp = go.data() + b * n;
      for (int64_t i = 0; i < n; ++i) da[i] += sp[i];
    }
    g.accumulate(a.id, da.data(), n);
  });
  return y;
}

// [N,d] -> [N,h,w,d], each row broadcast to every spatial position.
template <typename T>
Var<T> broadcast_spatial(Var<T> a, int64_t h, int64_t w) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 2, "broadcast_spatial expects [N,d]");
  int64_t n = a.val().dim(0), d = a.val().dim(1);
  Tensor<T> out({n, h, w, d});
  for (int64_t i = 0; i < n; ++i) {
    const T* row = a.val().data() + i * d;
    T* dst = out.data() + i * h * w * d;
    for (int64_t p = 0; p < h * w; ++p)
      std::memcpy(dst + p * d, row, sizeof(T) * d);
  }
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, h, w, n, d]() {
    if (!g.needs_grad(a.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    Tensor<T> da({n, d});
    for (int64_t i = 0; i < n; ++i) {
      T* acc = da.data() + i * d;
      const T* sp = go.data() + i * h * w * d;
      for (int64_t p = 0; p < h * w; ++p)
        for (int64_t j = 0; j < d; ++j) acc[j] += sp[p * d + j];
    }
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// --- linear algebra ---------------------------------------------------------

// 2-D matmul with optional transposes: y = op(a) @ op(b).
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool ta = false, bool tb = false) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 2 && b.val().ndim() == 2,
                  "matmul expects 2-D tensors");
  int64_t m = ta ? a.val().dim(1) : a.val().dim(0);
  int64_t k = ta ? a.val().dim(0) : a.val().dim(1);
  int64_t kb = tb ? b.val().dim(1) : b.val().dim(0);
  int64_t n = tb ? b.val().dim(0) : b.val().dim(1);
  SLOTLAB_REQUIRE(k == kb, "matmul inner-dim mismatch");
  Tensor<T> out({m, n});
  gemm(ta, tb, (int)m, (int)n, (int)k, T(1), a.val().data(),
       (int)a.val().dim(1), b.val().data(), (int)b.val().dim(1), T(0),
       out.data(), (int)n);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(b.id));
  g.set_backprop(y.id, [&g, a, b, y, ta, tb, m, n, k]() {
    const Tensor<T>& go = g.grad(y.id);
    if (g.needs_grad(a.id)) {
      Tensor<T> da(a.val().shape());
      // dA = G @ op(B)^T  (then transpose if ta)
      if (!ta) {
        gemm(false, !tb, (int)m, (int)k, (int)n, T(1), go.data(), (int)n,
             b.val().data(), (int)b.val().dim(1), T(0), da.data(), (int)k);
      } else {
        gemm(tb, true, (int)k, (int)m, (int)n, T(1), b.val().data(),
             (int)b.val().dim(1), go.data(), (int)n, T(0), da.data(), (int)m);
      }
      g.accumulate(a.id, da.data(), da.numel());
    }
    if (g.needs_grad(b.id)) {
      Tensor<T> db(b.val().shape());
      if (!tb) {
        gemm(!ta, false, (int)k, (int)n, (int)m, T(1), a.val().data(),
             (int)a.val().dim(1), go.data(), (int)n, T(0), db.data(), (int)n);
      } else {
        gemm(true, ta, (int)n, (int)k, (int)m, T(1), go.data(), (int)n,
             a.val().data(), (int)a.val().dim(1), T(0), db.data(), (int)k);
      }
      g.accumulate(b.id, db.data(), db.numel());
    }
  });
  return y;
}

// Batched matmul on [B,*,*] with optional transposes applied per batch.
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool ta = false, bool tb = false) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 3 && b.val().ndim() == 3,
                  "bmm expects 3-D tensors");
  int64_t bs = a.val().dim(0);
  SLOTLAB_REQUIRE(bs == b.val().dim(0), "bmm batch mismatch");
  int64_t m = ta ? a.val().dim(2) : a.val().dim(1);
  int64_t k = ta ? a.val().dim(1) : a.val().dim(2);
  int64_t kb = tb ? b.val().dim(2) : b.val().dim(1);
  int64_t n = tb ? b.val().dim(1) : b.val().dim(2);
  SLOTLAB_REQUIRE(k == kb, "bmm inner-dim mismatch");
  int64_t sa = a.val().dim(1) * a.val().dim(2);
  int64_t sb = b.val().dim(1) * b.val().dim(2);
  Tensor<T> out({bs, m, n});
  for (int64_t i = 0; i < bs; ++i)
    gemm(ta, tb, (int)m, (int)n, (int)k, T(1), a.val().data() + i * sa,
         (int)a.val().dim(2), b.val().data() + i * sb, (int)b.val().dim(2),
         T(0), out.data() + i * m * n, (int)n);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(b.id));
  g.set_backprop(y.id, [&g, a, b, y, ta, tb, bs, m, n, k, sa, sb]() {
    const Tensor<T>& go = g.grad(y.id);
    if (g.needs_grad(a.id)) {
      Tensor<T> da(a.val().shape());
      for (int64_t i = 0; i < bs; ++i) {
        const T* gp = go.data() + i * m * n;
        const T* bp = b.val().data() + i * sb;
        T* dp = da.data() + i * sa;
        if (!ta)
          gemm(false, !tb, (int)m, (int)k, (int)n, T(1), gp, (int)n, bp,
               (int)b.val().dim(2), T(0), dp, (int)k);
        else
          gemm(tb, true, (int)k, (int)m, (int)n, T(1), bp, (int)b.val().dim(2),
               gp, (int)n, T(0), dp, (int)m);
      }
      g.accumulate(a.id, da.data(), da.numel());
    }
    if (g.needs_grad(b.id)) {
      Tensor<T> db(b.val().shape());
      for (int64_t i = 0; i < bs; ++i) {
        const T* gp = go.data() + i * m * n;
        const T* ap = a.val().data() + i * sa;
        T* dp = db.data() + i * sb;
        if (!tb)
          gemm(!ta, false, (int)k, (int)n, (int)m, T(1), ap,
               (int)a.val().dim(2), gp, (int)n, T(0), dp, (int)n);
        else
          gemm(true, ta, (int)n, (int)k, (int)m, T(1), gp, (int)n, ap,
               (int)a.val().dim(2), T(0), dp, (int)k);
      }
      g.accumulate(b.id, db.data(), db.numel());
    }
  });
  return y;
}

// x[R,C] + bias[C], bias broadcast over rows.
template <typename T>
Var<T> add_rows(Var<T> a, Var<T> bias) {
  Graph<T>& g = detail::graph_of(a);
  int64_t c = bias.val().numel();
  SLOTLAB_REQUIRE(a.val().dim(-1) == c, "add_rows width mismatch");
  int64_t rows = a.val().numel() / c;
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  const T* pb = bias.val().data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out[r * c + j] = pa[r * c + j] + pb[j];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(bias.id));
  g.set_backprop(y.id, [&g, a, bias, y, rows, c]() {
    const Tensor<T>& go = g.grad(y.id);
    g.accumulate(a.id, go.data(), go.numel());
    if (g.needs_grad(bias.id)) {
      Tensor<T> db({c});
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) db[j] += go[r * c + j];
      g.accumulate(bias.id, db.data(), c);
    }
  });
  return y;
}

// Broadcast a tensor over a leading batch axis: x[B,rest] + e[rest].
template <typename T>
Var<T> add_bcast0(Var<T> a, Var<T> e) {
  int64_t n = e.val().numel();
  int64_t b = a.val().numel() / n;
  Var<T> a2 = reshape(a, {b, n});
  Var<T> e2 = reshape(e, {n});
  Var<T> y = add_rows(a2, e2);
  return reshape(y, a.val().shape());
}

// --- normalization / attention ----------------------------------------------

template <typename T>
Var<T> softmax_last(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  int64_t c = a.val().dim(-1);
  int64_t rows = a.val().numel() / c;
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = pa + r * c;
    T* o = out.data() + r * c;
    T mx = x[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      o[j] = std::exp(x[j] - mx);
      sum += o[j];
    }
    for (int64_t j = 0; j < c; ++j) o[j] /= sum;
  }
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, rows, c]() {
    if (!g.needs_grad(a.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    const Tensor<T>& s = g.value(y.id);
    Tensor<T> da(s.shape());
    for (int64_t r = 0; r < rows; ++r) {
      const T* sp = s.data() + r * c;
      const T* gp = go.data() + r * c;
      T dot = T(0);
      for (int64_t j = 0; j < c; ++j) dot += sp[j] * gp[j];
      T* dp = da.data() + r * c;
      for (int64_t j = 0; j < c; ++j) dp[j] = sp[j] * (gp[j] - dot);
    }
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// LayerNorm over the last axis with learned gain/bias.
template <typename T>
Var<T> layer_norm(Var<T> a, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  Graph<T>& g = detail::graph_of(a);
  int64_t c = a.val().dim(-1);
  SLOTLAB_REQUIRE(gain.val().numel() == c && bias.val().numel() == c,
                  "layer_norm gain/bias width mismatch");
  int64_t rows = a.val().numel() / c;
  Tensor<T> out(a.val().shape());
  Tensor<T> xhat(a.val().shape());   // cached for backward
  Tensor<T> inv_std({rows});
  const T* pa = a.val().data();
  const T* pg = gain.val().data();
  const T* pb = bias.val().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = pa + r * c;
    T mean = T(0);
    for (int64_t j = 0; j < c; ++j) mean += x[j];
    mean /= T(c);
    T var = T(0);
    for (int64_t j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= T(c);
    T istd = T(1) / std::sqrt(var + eps);
    inv_std[r] = istd;
    T* xh = xhat.data() + r * c;
    T* o = out.data() + r * c;
    for (int64_t j = 0; j < c; ++j) {
      xh[j] = (x[j] - mean) * istd;
      o[j] = xh[j] * pg[j] + pb[j];
    }
  }
  bool ng = g.needs_grad(a.id) || g.needs_grad(gain.id) || g.needs_grad(bias.id);
  Var<T> y = g.make(std::move(out), ng);
  g.set_backprop(y.id, [&g, a, gain, bias, y, xhat, inv_std, rows, c]() {
    const Tensor<T>& go = g.grad(y.id);
    const T* pg2 = g.value(gain.id).data();
    if (g.needs_grad(gain.id)) {
      Tensor<T> dg({c});
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j)
          dg[j] += go[r * c + j] * xhat[r * c + j];
      g.accumulate(gain.id, dg.data(), c);
    }
    if (g.needs_grad(bias.id)) {
      Tensor<T> db({c});
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) db[j] += go[r * c + j];
      g.accumulate(bias.id, db.data(), c);
    }
    if (g.needs_grad(a.id)) {
      Tensor<T> da(g.value(a.id).shape());
      for (int64_t r = 0; r < rows; ++r) {
        const T* gp = go.data() + r * c;
        const T* xh = xhat.data() + r * c;
        T sum_g = T(0), sum_gx = T(0);
        for (int64_t j = 0; j < c; ++j) {
          T gj = gp[j] * pg2[j];
          sum_g += gj;
          sum_gx += gj * xh[j];
        }
        T* dp = da.data() + r * c;
        for (int64_t j = 0; j < c; ++j) {
          T gj = gp[j] * pg2[j];
          dp[j] = inv_std[r] * (gj - sum_g / T(c) - xh[j] * sum_gx / T(c));
        }
      }
      g.accumulate(a.id, da.data(), da.numel());
    }
  });
  return y;
}

// y[b,p,k] = x[b,p,k] / (sum_p x[b,p,k] + eps); used to renormalize slot
// attention weights over pixels.
template <typename T>
Var<T> normalize_axis1(Var<T> a, T eps) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 3, "normalize_axis1 expects [B,P,K]");
  int64_t bs = a.val().dim(0), p = a.val().dim(1), k = a.val().dim(2);
  Tensor<T> denom({bs, k});
  const T* pa = a.val().data();
  for (int64_t b = 0; b < bs; ++b)
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < k; ++j)
        denom[b * k + j] += pa[(b * p + i) * k + j];
  for (int64_t i = 0; i < bs * k; ++i) denom[i] += eps;
  Tensor<T> out(a.val().shape());
  for (int64_t b = 0; b < bs; ++b)
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < k; ++j)
        out[(b * p + i) * k + j] = pa[(b * p + i) * k + j] / denom[b * k + j];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, denom, bs, p, k]() {
    if (!g.needs_grad(a.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    const Tensor<T>& x = g.value(a.id);
    Tensor<T> dot({bs, k});  // sum_p g*x per (b,k)
    for (int64_t b = 0; b < bs; ++b)
      for (int64_t i = 0; i < p; ++i)
        for (int64_t j = 0; j < k; ++j)
          dot[b * k + j] += go[(b * p + i) * k + j] * x[(b * p + i) * k + j];
    Tensor<T> da(x.shape());
    for (int64_t b = 0; b < bs; ++b)
      for (int64_t i = 0; i < p; ++i)
        for (int64_t j = 0; j < k; ++j) {
          T d = denom[b * k + j];
          da[(b * p + i) * k + j] =
              go[(b * p + i) * k + j] / d - dot[b * k + j] / (d * d);
        }
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// --- reductions --------------------------------------------------------------

// [A,B,C] -> [A,C], summing over the middle axis.
template <typename T>
Var<T> sum_axis1(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 3, "sum_axis1 expects 3-D");
  int64_t A = a.val().dim(0), B = a.val().dim(1), C = a.val().dim(2);
  Tensor<T> out({A, C});
  const T* pa = a.val().data();
  for (int64_t i = 0; i < A; ++i)
    for (int64_t b = 0; b < B; ++b)
      for (int64_t j = 0; j < C; ++j)
        out[i * C + j] += pa[(i * B + b) * C + j];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, A, B, C]() {
    if (!g.needs_grad(a.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    Tensor<T> da(a.val().shape());
    for (int64_t i = 0; i < A; ++i)
      for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < C; ++j)
          da[(i * B + b) * C + j] = go[i * C + j];
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  Graph<T>& g = detail::graph_of(a);
  int64_t n = a.val().numel();
  Tensor<T> out({1});
  T sum = T(0);
  for (int64_t i = 0; i < n; ++i) sum += a.val()[i];
  out[0] = sum / T(n);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, n]() {
    if (!g.needs_grad(a.id)) return;
    T go = g.grad(y.id)[0] / T(n);
    Tensor<T> da(a.val().shape());
    da.fill(go);
    g.accumulate(a.id, da.data(), n);
  });
  return y;
}

// Mean squared error between two same-shape tensors.
template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  SLOTLAB_REQUIRE(a.val().same_shape(b.val()), "mse shape mismatch: ",
                  shape_str(a.val().shape()), " vs ", shape_str(b.val().shape()));
  Var<T> d = sub(a, b);
  return mean_all(mul(d, d));
}

// --- gather / scatter over the slot axis -------------------------------------

// x[B,K,C], idx of length L -> [B,L,C].
template <typename T>
Var<T> gather_axis1(Var<T> a, std::vector<int> idx) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 3, "gather_axis1 expects 3-D");
  int64_t B = a.val().dim(0), K = a.val().dim(1), C = a.val().dim(2);
  int64_t L = static_cast<int64_t>(idx.size());
  for (int i : idx) SLOTLAB_REQUIRE(i >= 0 && i < K, "gather index out of range");
  Tensor<T> out({B, L, C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      std::memcpy(out.data() + (b * L + l) * C,
                  a.val().data() + (b * K + idx[l]) * C, sizeof(T) * C);
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, idx = std::move(idx), B, K, C]() {
    if (!g.needs_grad(a.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    int64_t L2 = static_cast<int64_t>(idx.size());
    Tensor<T> da({B, K, C});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L2; ++l) {
        T* dst = da.data() + (b * K + idx[l]) * C;
        const T* sp = go.data() + (b * L2 + l) * C;
        for (int64_t j = 0; j < C; ++j) dst[j] += sp[j];
      }
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// x[B,L,C] with segment ids seg[L] in [0,K) -> [B,K,C], summing rows per segment.
template <typename T>
Var<T> segment_sum_axis1(Var<T> a, std::vector<int> seg, int64_t K) {
  Graph<T>& g = detail::graph_of(a);
  SLOTLAB_REQUIRE(a.val().ndim() == 3, "segment_sum_axis1 expects 3-D");
  int64_t B = a.val().dim(0), L = a.val().dim(1), C = a.val().dim(2);
  SLOTLAB_REQUIRE(static_cast<int64_t>(seg.size()) == L, "segment id count mismatch");
  for (int s : seg) SLOTLAB_REQUIRE(s >= 0 && s < K, "segment id out of range");
  Tensor<T> out({B, K, C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l) {
      T* dst = out.data() + (b * K + seg[l]) * C;
      const T* sp = a.val().data() + (b * L + l) * C;
      for (int64_t j = 0; j < C; ++j) dst[j] += sp[j];
    }
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id));
  g.set_backprop(y.id, [&g, a, y, seg = std::move(seg), B, K, C]() {
    if (!g.needs_grad(a.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    int64_t L2 = static_cast<int64_t>(seg.size());
    Tensor<T> da({B, L2, C});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L2; ++l)
        std::memcpy(da.data() + (b * L2 + l) * C,
                    go.data() + (b * K + seg[l]) * C, sizeof(T) * C);
    g.accumulate(a.id, da.data(), da.numel());
  });
  return y;
}

// x[...,C] * m[...,1]: multiply a channel vector by a per-position scalar.
template <typename T>
Var<T> mul_last_bcast(Var<T> a, Var<T> m) {
  Graph<T>& g = detail::graph_of(a);
  int64_t c = a.val().dim(-1);
  int64_t rows = a.val().numel() / c;
  SLOTLAB_REQUIRE(m.val().numel() == rows, "mul_last_bcast rows mismatch");
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  const T* pm = m.val().data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out[r * c + j] = pa[r * c + j] * pm[r];
  Var<T> y = g.make(std::move(out), g.needs_grad(a.id) || g.needs_grad(m.id));
  g.set_backprop(y.id, [&g, a, m, y, rows, c]() {
    const Tensor<T>& go = g.grad(y.id);
    if (g.needs_grad(a.id)) {
      const T* pm2 = g.value(m.id).data();
      Tensor<T> da(g.value(a.id).shape());
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) da[r * c + j] = go[r * c + j] * pm2[r];
      g.accumulate(a.id, da.data(), da.numel());
    }
    if (g.needs_grad(m.id)) {
      const T* pa2 = g.value(a.id).data();
      Tensor<T> dm(g.value(m.id).shape());
      for (int64_t r = 0; r < rows; ++r) {
        T s = T(0);
        for (int64_t j = 0; j < c; ++j) s += go[r * c + j] * pa2[r * c + j];
        dm[r] = s;
      }
      g.accumulate(m.id, dm.data(), dm.numel());
    }
  });
  return y;
}

}  // namespace slotlab
