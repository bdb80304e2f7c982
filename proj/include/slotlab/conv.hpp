#pragma once

// Channels-last conv2d (im2col + GEMM) and 2x upsampling ops.

#include "slotlab/graph.hpp"
#include "slotlab/ops.hpp"

namespace slotlab {

namespace convdet {

// Fills col[M, kh*kw*Cin] for samples [b0, b1) of x[B,H,W,Cin].
// Row r corresponds to (sample, oy, ox); K-columns are (ky, kx, cin).
template <typename T>
void im2col(const Tensor<T>& x, int b0, int b1, int H, int W, int Cin, int kh,
            int kw, int stride, int pad, int Ho, int Wo, T* col) {
  int64_t kcols = int64_t(kh) * kw * Cin;
#pragma omp parallel for schedule(static)
  for (int b = b0; b < b1; ++b) {
    const T* xb = x.data() + int64_t(b) * H * W * Cin;
    T* cb = col + int64_t(b - b0) * Ho * Wo * kcols;
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        T* row = cb + (int64_t(oy) * Wo + ox) * kcols;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy * stride - pad + ky;
          T* dst = row + int64_t(ky) * kw * Cin;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, sizeof(T) * kw * Cin);
            continue;
          }
          int ix0 = ox * stride - pad;
          int lo = std::max(0, -ix0);          // first valid kx
          int hi = std::min(kw, W - ix0);      // one past last valid kx
          if (lo > 0) std::memset(dst, 0, sizeof(T) * lo * Cin);
          if (hi < kw) std::memset(dst + int64_t(hi) * Cin, 0, sizeof(T) * (kw - hi) * Cin);
          if (lo < hi)
            std::memcpy(dst + int64_t(lo) * Cin,
                        xb + (int64_t(iy) * W + ix0 + lo) * Cin,
                        sizeof(T) * (hi - lo) * Cin);
        }
      }
    }
  }
}

// Scatter-add of col gradients back into dx; exact mirror of im2col.
template <typename T>
void col2im(const T* col, int b0, int b1, int H, int W, int Cin, int kh, int kw,
            int stride, int pad, int Ho, int Wo, Tensor<T>& dx) {
  int64_t kcols = int64_t(kh) * kw * Cin;
#pragma omp parallel for schedule(static)
  for (int b = b0; b < b1; ++b) {
    T* xb = dx.data() + int64_t(b) * H * W * Cin;
    const T* cb = col + int64_t(b - b0) * Ho * Wo * kcols;
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        const T* row = cb + (int64_t(oy) * Wo + ox) * kcols;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + int64_t(ky) * kw * Cin;
          int ix0 = ox * stride - pad;
          int lo = std::max(0, -ix0);
          int hi = std::min(kw, W - ix0);
          for (int kx = lo; kx < hi; ++kx) {
            T* dst = xb + (int64_t(iy) * W + ix0 + kx) * Cin;
            const T* sp = src + int64_t(kx) * Cin;
            for (int c = 0; c < Cin; ++c) dst[c] += sp[c];
          }
        }
      }
    }
  }
}

inline int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// chunk so the col buffer stays modest
inline int conv_chunk(int64_t rows_per_sample, int64_t kcols, size_t elem) {
  int64_t budget = 32ll * 1024 * 1024;
  int64_t per = rows_per_sample * kcols * int64_t(elem);
  return std::max<int64_t>(1, budget / std::max<int64_t>(per, 1));
}

}  // namespace convdet

// x[B,H,W,Cin] (*) w[kh,kw,Cin,Cout] + bias[Cout] -> [B,Ho,Wo,Cout]
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride, int pad) {
  Graph<T>& g = detail::graph_of(x);
  SLOTLAB_REQUIRE(x.val().ndim() == 4 && w.val().ndim() == 4,
                  "conv2d expects x[B,H,W,C], w[kh,kw,Cin,Cout]");
  int B = (int)x.val().dim(0), H = (int)x.val().dim(1), W = (int)x.val().dim(2),
      Cin = (int)x.val().dim(3);
  int kh = (int)w.val().dim(0), kw = (int)w.val().dim(1),
      Cout = (int)w.val().dim(3);
  SLOTLAB_REQUIRE(w.val().dim(2) == Cin, "conv2d channel mismatch: x has ", Cin,
                  ", w expects ", w.val().dim(2));
  SLOTLAB_REQUIRE(bias.val().numel() == Cout, "conv2d bias size mismatch");
  int Ho = convdet::conv_out(H, kh, stride, pad);
  int Wo = convdet::conv_out(W, kw, stride, pad);
  SLOTLAB_REQUIRE(Ho > 0 && Wo > 0, "conv2d output would be empty");
  int64_t kcols = int64_t(kh) * kw * Cin;
  int64_t rows = int64_t(Ho) * Wo;
  int chunk = convdet::conv_chunk(rows, kcols, sizeof(T));

  Tensor<T> out({B, Ho, Wo, Cout});
  std::vector<T> col(size_t(std::min<int64_t>(chunk, B)) * rows * kcols);
  for (int b0 = 0; b0 < B; b0 += chunk) {
    int b1 = std::min(B, b0 + chunk);
    convdet::im2col(x.val(), b0, b1, H, W, Cin, kh, kw, stride, pad, Ho, Wo,
                    col.data());
    gemm(false, false, (b1 - b0) * (int)rows, Cout, (int)kcols, T(1),
         col.data(), (int)kcols, w.val().data(), Cout, T(0),
         out.data() + int64_t(b0) * rows * Cout, Cout);
  }
  const T* pb = bias.val().data();
  int64_t orows = int64_t(B) * rows;
  for (int64_t r = 0; r < orows; ++r) {
    T* o = out.data() + r * Cout;
    for (int c = 0; c < Cout; ++c) o[c] += pb[c];
  }

  bool ng = g.needs_grad(x.id) || g.needs_grad(w.id) || g.needs_grad(bias.id);
  Var<T> y = g.make(std::move(out), ng);
  g.set_backprop(y.id, [&g, x, w, bias, y, B, H, W, Cin, kh, kw, Cout, Ho, Wo,
                        stride, pad, kcols, rows, chunk]() {
    const Tensor<T>& go = g.grad(y.id);
    if (g.needs_grad(bias.id)) {
      Tensor<T> db({Cout});
      int64_t orows2 = int64_t(B) * rows;
      for (int64_t r = 0; r < orows2; ++r)
        for (int c = 0; c < Cout; ++c) db[c] += go[r * Cout + c];
      g.accumulate(bias.id, db.data(), Cout);
    }
    bool need_w = g.needs_grad(w.id);
    bool need_x = g.needs_grad(x.id);
    if (!need_w && !need_x) return;
    Tensor<T> dw;
    if (need_w) dw = Tensor<T>(w.val().shape());
    Tensor<T> dx;
    if (need_x) dx = Tensor<T>(x.val().shape());
    std::vector<T> col(size_t(std::min<int64_t>(chunk, B)) * rows * kcols);
    std::vector<T> dcol(need_x ? col.size() : 0);
    for (int b0 = 0; b0 < B; b0 += chunk) {
      int b1 = std::min(B, b0 + chunk);
      int m = (b1 - b0) * (int)rows;
      const T* gp = go.data() + int64_t(b0) * rows * Cout;
      if (need_w) {
        convdet::im2col(x.val(), b0, b1, H, W, Cin, kh, kw, stride, pad, Ho,
                        Wo, col.data());
        // dW += col^T @ dY
        gemm(true, false, (int)kcols, Cout, m, T(1), col.data(), (int)kcols,
             gp, Cout, T(1), dw.data(), Cout);
      }
      if (need_x) {
        // dcol = dY @ W^T
        gemm(false, true, m, (int)kcols, Cout, T(1), gp, Cout, w.val().data(),
             Cout, T(0), dcol.data(), (int)kcols);
        convdet::col2im(dcol.data(), b0, b1, H, W, Cin, kh, kw, stride, pad,
                        Ho, Wo, dx);
      }
    }
    if (need_w) g.accumulate(w.id, dw.data(), dw.numel());
    if (need_x) g.accumulate(x.id, dx.data(), dx.numel());
  });
  return y;
}

// Nearest-neighbour 2x upsample of [B,H,W,C].
template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
  Graph<T>& g = detail::graph_of(x);
  SLOTLAB_REQUIRE(x.val().ndim() == 4, "upsample expects 4-D");
  int64_t B = x.val().dim(0), H = x.val().dim(1), W = x.val().dim(2),
          C = x.val().dim(3);
  Tensor<T> out({B, 2 * H, 2 * W, C});
  const T* px = x.val().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t y2 = 0; y2 < 2 * H; ++y2)
      for (int64_t x2 = 0; x2 < 2 * W; ++x2)
        std::memcpy(out.data() + ((b * 2 * H + y2) * 2 * W + x2) * C,
                    px + ((b * H + y2 / 2) * W + x2 / 2) * C, sizeof(T) * C);
  Var<T> y = g.make(std::move(out), g.needs_grad(x.id));
  g.set_backprop(y.id, [&g, x, y, B, H, W, C]() {
    if (!g.needs_grad(x.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    Tensor<T> dx({B, H, W, C});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t y2 = 0; y2 < 2 * H; ++y2)
        for (int64_t x2 = 0; x2 < 2 * W; ++x2) {
          T* dst = dx.data() + ((b * H + y2 / 2) * W + x2 / 2) * C;
          const T* sp = go.data() + ((b * 2 * H + y2) * 2 * W + x2) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += sp[c];
        }
    g.accumulate(x.id, dx.data(), dx.numel());
  });
  return y;
}

namespace convdet {
struct LerpIdx {
  int i0, i1;
  float w0, w1;
};
inline LerpIdx lerp_idx(int o, int in_size) {
  // align_corners=false convention: src = (o + 0.5)/2 - 0.5
  float src = (float(o) + 0.5f) * 0.5f - 0.5f;
  int i0 = (int)std::floor(src);
  float frac = src - float(i0);
  LerpIdx r;
  r.i0 = std::clamp(i0, 0, in_size - 1);
  r.i1 = std::clamp(i0 + 1, 0, in_size - 1);
  r.w0 = 1.0f - frac;
  r.w1 = frac;
  return r;
}
}  // namespace convdet

// Bilinear 2x upsample of [B,H,W,C].
template <typename T>
Var<T> upsample_bilinear2(Var<T> x) {
  Graph<T>& g = detail::graph_of(x);
  SLOTLAB_REQUIRE(x.val().ndim() == 4, "upsample expects 4-D");
  int B = (int)x.val().dim(0), H = (int)x.val().dim(1), W = (int)x.val().dim(2),
      C = (int)x.val().dim(3);
  Tensor<T> out({B, 2 * H, 2 * W, C});
  const T* px = x.val().data();
  for (int b = 0; b < B; ++b)
    for (int oy = 0; oy < 2 * H; ++oy) {
      auto ly = convdet::lerp_idx(oy, H);
      for (int ox = 0; ox < 2 * W; ++ox) {
        auto lx = convdet::lerp_idx(ox, W);
        const T* p00 = px + ((int64_t(b) * H + ly.i0) * W + lx.i0) * C;
        const T* p01 = px + ((int64_t(b) * H + ly.i0) * W + lx.i1) * C;
        const T* p10 = px + ((int64_t(b) * H + ly.i1) * W + lx.i0) * C;
        const T* p11 = px + ((int64_t(b) * H + ly.i1) * W + lx.i1) * C;
        T* o = out.data() + ((int64_t(b) * 2 * H + oy) * 2 * W + ox) * C;
        for (int c = 0; c < C; ++c)
          o[c] = T(ly.w0) * (T(lx.w0) * p00[c] + T(lx.w1) * p01[c]) +
                 T(ly.w1) * (T(lx.w0) * p10[c] + T(lx.w1) * p11[c]);
      }
    }
  Var<T> y = g.make(std::move(out), g.needs_grad(x.id));
  g.set_backprop(y.id, [&g, x, y, B, H, W, C]() {
    if (!g.needs_grad(x.id)) return;
    const Tensor<T>& go = g.grad(y.id);
    Tensor<T> dx({B, H, W, C});
    for (int b = 0; b < B; ++b)
      for (int oy = 0; oy < 2 * H; ++oy) {
        auto ly = convdet::lerp_idx(oy, H);
        for (int ox = 0; ox < 2 * W; ++ox) {
          auto lx = convdet::lerp_idx(ox, W);
          const T* sp = go.data() + ((int64_t(b) * 2 * H + oy) * 2 * W + ox) * C;
          T* p00 = dx.data() + ((int64_t(b) * H + ly.i0) * W + lx.i0) * C;
          T* p01 = dx.data() + ((int64_t(b) * H + ly.i0) * W + lx.i1) * C;
          T* p10 = dx.data() + ((int64_t(b) * H + ly.i1) * W + lx.i0) * C;
          T* p11 = dx.data() + ((int64_t(b) * H + ly.i1) * W + lx.i1) * C;
          for (int c = 0; c < C; ++c) {
            p00[c] += T(ly.w0) * T(lx.w0) * sp[c];
            p01[c] += T(ly.w0) * T(lx.w1) * sp[c];
            p10[c] += T(ly.w1) * T(lx.w0) * sp[c];
            p11[c] += T(ly.w1) * T(lx.w1) * sp[c];
          }
        }
      }
    g.accumulate(x.id, dx.data(), dx.numel());
  });
  return y;
}

}  // namespace slotlab
