#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "timbre/common.hpp"

namespace timbre {

// Dense NCHW tensor. Training runs in float; gradient-check oracles
// instantiate the double variant of the same kernels.
template <typename T>
struct Tensor4T {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4T() = default;
  Tensor4T(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

  static Tensor4T zeros(int n, int c, int h, int w) { return Tensor4T(n, c, h, w); }

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor4T& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }

  T& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  T at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  T* plane(int in, int ic) {
    return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }
  const T* plane(int in, int ic) const {
    return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }

  template <typename U>
  Tensor4T<U> cast() const {
    Tensor4T<U> o(n, c, h, w);
    for (size_t i = 0; i < v.size(); ++i) o.v[i] = static_cast<U>(v[i]);
    return o;
  }
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

// Plain 2-D grid (row-major), used for spectrogram magnitudes and metrics.
struct Grid {
  int rows = 0, cols = 0;
  std::vector<float> v;

  Grid() = default;
  Grid(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0f) {}

  float& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace timbre
