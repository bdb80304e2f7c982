#pragma once

// Thin layer wrappers: parameter holders plus a forward() that records ops
// on a Graph. Initialization follows the usual fan-in scaling.

#include <cmath>

#include "slotlab/conv.hpp"
#include "slotlab/ops.hpp"
#include "slotlab/rng.hpp"

namespace slotlab {

template <typename T>
struct Linear {
  Parameter<T> w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, int64_t in, int64_t out, Rng& rng,
         bool bias = true)
      : w(name + ".w",
          Tensor<T>::randn({in, out}, rng, T(1) / std::sqrt(T(in)))),
        b(name + ".b", Tensor<T>({out})),
        has_bias(bias) {}

  Var<T> forward(Graph<T>& g, Var<T> x) {
    const Shape& s = x.val().shape();
    Var<T> x2 = x;
    if (s.size() != 2)
      x2 = reshape(x, {x.val().numel() / s.back(), s.back()});
    Var<T> y = matmul(x2, g.param(w));
    if (has_bias) y = add_rows(y, g.param(b));
    if (s.size() != 2) {
      Shape os = s;
      os.back() = w.value.dim(1);
      y = reshape(y, os);
    }
    return y;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

template <typename T>
struct Conv2dLayer {
  Parameter<T> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int k, int64_t cin, int64_t cout,
              int stride_, int pad_, Rng& rng)
      : w(name + ".w", Tensor<T>::randn({k, k, cin, cout}, rng,
                                        T(1) / std::sqrt(T(k * k * cin)))),
        b(name + ".b", Tensor<T>({cout})),
        stride(stride_),
        pad(pad_) {}

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return conv2d(x, g.param(w), g.param(b), stride, pad);
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct LayerNorm {
  Parameter<T> gain, bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int64_t c)
      : gain(name + ".g", Tensor<T>::full({c}, T(1))),
        bias(name + ".b", Tensor<T>({c})) {}

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return layer_norm(x, g.param(gain), g.param(bias));
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

template <typename T>
struct GruCell {
  Linear<T> wz, uz, wr, ur, wn, un;

  GruCell() = default;
  GruCell(const std::string& name, int64_t d, Rng& rng)
      : wz(name + ".wz", d, d, rng),
        uz(name + ".uz", d, d, rng, /*bias=*/false),
        wr(name + ".wr", d, d, rng),
        ur(name + ".ur", d, d, rng, false),
        wn(name + ".wn", d, d, rng),
        un(name + ".un", d, d, rng, false) {}

  // h' = (1-z)*n + z*h
  Var<T> forward(Graph<T>& g, Var<T> input, Var<T> h) {
    Var<T> z = sigmoid(add(wz.forward(g, input), uz.forward(g, h)));
    Var<T> r = sigmoid(add(wr.forward(g, input), ur.forward(g, h)));
    Var<T> n = tanh_op(add(wn.forward(g, input), un.forward(g, mul(r, h))));
    return add(mul(one_minus(z), n), mul(z, h));
  }

  void collect(ParamRefs<T>& out) {
    wz.collect(out);
    uz.collect(out);
    wr.collect(out);
    ur.collect(out);
    wn.collect(out);
    un.collect(out);
  }
};

// Two-layer perceptron with ReLU hidden activation.
template <typename T>
struct Mlp {
  Linear<T> fc1, fc2;

  Mlp() = default;
  Mlp(const std::string& name, int64_t in, int64_t hidden, int64_t out,
      Rng& rng)
      : fc1(name + ".fc1", in, hidden, rng),
        fc2(name + ".fc2", hidden, out, rng) {}

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return fc2.forward(g, relu(fc1.forward(g, x)));
  }

  void collect(ParamRefs<T>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

template <typename T>
int64_t param_count(const ParamRefs<T>& params) {
  int64_t n = 0;
  for (const auto* p : params) n += p->value.numel();
  return n;
}

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->grad.zero();
}

}  // namespace slotlab
