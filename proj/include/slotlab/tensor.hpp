#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <vector>

#include "slotlab/common.hpp"
#include "slotlab/rng.hpp"

namespace slotlab {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense contiguous row-major tensor with shared storage. Copies are shallow;
// use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}
  Tensor(Shape shape, std::shared_ptr<std::vector<T>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    SLOTLAB_REQUIRE(static_cast<int64_t>(data_->size()) == shape_numel(shape_),
                    "tensor data size does not match shape ", shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.begin(), t.end(), value);
    return t;
  }

  static Tensor from(Shape shape, std::initializer_list<T> vals) {
    Tensor t(std::move(shape));
    SLOTLAB_REQUIRE(static_cast<int64_t>(vals.size()) == t.numel(),
                    "initializer size mismatch");
    std::copy(vals.begin(), vals.end(), t.begin());
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t dim(int i) const {
    int n = static_cast<int>(shape_.size());
    if (i < 0) i += n;
    SLOTLAB_REQUIRE(i >= 0 && i < n, "dim index out of range");
    return shape_[i];
  }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return shape_numel(shape_); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T* begin() { return data(); }
  T* end() { return data() + numel(); }
  const T* begin() const { return data(); }
  const T* end() const { return data() + numel(); }

  T& operator[](int64_t i) { return (*data_)[i]; }
  const T& operator[](int64_t i) const { return (*data_)[i]; }

  // Same storage, new shape (numel must match).
  Tensor reshaped(Shape shape) const {
    SLOTLAB_REQUIRE(shape_numel(shape) == numel(), "reshape numel mismatch: ",
                    shape_str(shape_), " -> ", shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  Tensor clone() const {
    Tensor t(shape_);
    std::copy(begin(), end(), t.begin());
    return t;
  }

  void fill(T v) { std::fill(begin(), end(), v); }

  void zero() { fill(T(0)); }

  bool all_finite() const {
    for (const T& v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(T) * a.numel()) == 0;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  SLOTLAB_REQUIRE(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace slotlab
