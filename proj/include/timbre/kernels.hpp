#pragma once

#include <cblas.h>

#include <cmath>
#include <vector>

#include "timbre/tensor.hpp"

// Differentiable-operator kernels. Templated on the scalar type: training
// runs the float instantiation, finite-difference oracles run the double one.
namespace timbre::kernels {

template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

template <>
inline void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha,
                        const float* a, int lda, const float* b, int ldb,
                        float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

template <>
inline void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha,
                         const double* a, int lda, const double* b, int ldb,
                         double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

struct ConvSpec {
  int stride = 1;
  int pad = 0;  // zero padding
};

struct ConvTSpec {
  int stride = 1;
  int pad = 0;
  int out_pad = 0;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int convt_out_dim(int in, int k, int stride, int pad, int out_pad) {
  return (in - 1) * stride - 2 * pad + k + out_pad;
}

// image C x H x W -> col (C*kh*kw) x (oh*ow), zero padding
template <typename T>
void im2col(const T* img, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, T* col) {
  const int L = oh * ow;
  int row = 0;
  for (int ic = 0; ic < c; ++ic) {
    const T* plane = img + static_cast<size_t>(ic) * h * w;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx, ++row) {
        T* out = col + static_cast<size_t>(row) * L;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) out[oy * ow + ox] = T(0);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            out[oy * ow + ox] =
                (ix < 0 || ix >= w) ? T(0) : plane[iy * w + ix];
          }
        }
      }
  }
}

// adjoint of im2col: accumulate col back into the image
template <typename T>
void col2im_acc(const T* col, int c, int h, int w, int kh, int kw, int stride,
                int pad, int oh, int ow, T* img) {
  const int L = oh * ow;
  int row = 0;
  for (int ic = 0; ic < c; ++ic) {
    T* plane = img + static_cast<size_t>(ic) * h * w;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx, ++row) {
        const T* in = col + static_cast<size_t>(row) * L;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += in[oy * ow + ox];
          }
        }
      }
  }
}

// x[N,inC,H,W], w[outC,inC,kh,kw], optional bias[1,outC,1,1]
template <typename T>
Tensor4T<T> conv2d_forward(const Tensor4T<T>& x, const Tensor4T<T>& w,
                           const Tensor4T<T>* b, const ConvSpec& spec) {
  if (x.c != w.c)
    throw ShapeError("conv2d: input channels " + std::to_string(x.c) +
                     " != kernel channels " + std::to_string(w.c));
  const int oh = conv_out_dim(x.h, w.h, spec.stride, spec.pad);
  const int ow = conv_out_dim(x.w, w.w, spec.stride, spec.pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("conv2d: kernel " + w.shape_str() +
                     " does not fit input " + x.shape_str());
  const int K = x.c * w.h * w.w;
  const int L = oh * ow;
  Tensor4T<T> y(x.n, w.n, oh, ow);
  std::vector<T> col(static_cast<size_t>(K) * L);
  for (int n = 0; n < x.n; ++n) {
    im2col(x.plane(n, 0), x.c, x.h, x.w, w.h, w.w, spec.stride, spec.pad, oh,
           ow, col.data());
    gemm<T>(false, false, w.n, L, K, T(1), w.v.data(), K, col.data(), L, T(0),
            y.plane(n, 0), L);
    if (b)
      for (int oc = 0; oc < w.n; ++oc) {
        T* p = y.plane(n, oc);
        const T bias = b->v[oc];
        for (int i = 0; i < L; ++i) p[i] += bias;
      }
  }
  return y;
}

// accumulates into dx/dw/db (any may be null)
template <typename T>
void conv2d_backward(const Tensor4T<T>& x, const Tensor4T<T>& w,
                     const Tensor4T<T>& dy, const ConvSpec& spec,
                     Tensor4T<T>* dx, Tensor4T<T>* dw, Tensor4T<T>* db) {
  const int oh = dy.h, ow = dy.w;
  const int K = x.c * w.h * w.w;
  const int L = oh * ow;
  std::vector<T> col(static_cast<size_t>(K) * L);
  std::vector<T> dcol(static_cast<size_t>(K) * L);
  for (int n = 0; n < x.n; ++n) {
    if (dw) {
      im2col(x.plane(n, 0), x.c, x.h, x.w, w.h, w.w, spec.stride, spec.pad, oh,
             ow, col.data());
      gemm<T>(false, true, w.n, K, L, T(1), dy.plane(n, 0), L, col.data(), L,
              T(1), dw->v.data(), K);
    }
    if (dx) {
      gemm<T>(true, false, K, L, w.n, T(1), w.v.data(), K, dy.plane(n, 0), L,
              T(0), dcol.data(), L);
      col2im_acc(dcol.data(), x.c, x.h, x.w, w.h, w.w, spec.stride, spec.pad,
                 oh, ow, dx->plane(n, 0));
    }
    if (db)
      for (int oc = 0; oc < w.n; ++oc) {
        const T* p = dy.plane(n, oc);
        T acc = T(0);
        for (int i = 0; i < L; ++i) acc += p[i];
        db->v[oc] += acc;
      }
  }
}

// x[N,inC,H,W], w[inC,outC,kh,kw], optional bias[1,outC,1,1]
template <typename T>
Tensor4T<T> convt_forward(const Tensor4T<T>& x, const Tensor4T<T>& w,
                          const Tensor4T<T>* b, const ConvTSpec& spec) {
  if (x.c != w.n)
    throw ShapeError("conv_transpose2d: input channels " +
                     std::to_string(x.c) + " != kernel in-channels " +
                     std::to_string(w.n));
  if (spec.out_pad >= spec.stride)
    throw ShapeError("conv_transpose2d: out_pad must be < stride");
  const int outC = w.c;
  const int oh = convt_out_dim(x.h, w.h, spec.stride, spec.pad, spec.out_pad);
  const int ow = convt_out_dim(x.w, w.w, spec.stride, spec.pad, spec.out_pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("conv_transpose2d: empty output for input " +
                     x.shape_str());
  const int K = outC * w.h * w.w;
  const int L = x.h * x.w;
  Tensor4T<T> y(x.n, outC, oh, ow);
  std::vector<T> col(static_cast<size_t>(K) * L);
  for (int n = 0; n < x.n; ++n) {
    gemm<T>(true, false, K, L, x.c, T(1), w.v.data(), K, x.plane(n, 0), L,
            T(0), col.data(), L);
    col2im_acc(col.data(), outC, oh, ow, w.h, w.w, spec.stride, spec.pad, x.h,
               x.w, y.plane(n, 0));
    if (b) {
      const int hw = oh * ow;
      for (int oc = 0; oc < outC; ++oc) {
        T* p = y.plane(n, oc);
        const T bias = b->v[oc];
        for (int i = 0; i < hw; ++i) p[i] += bias;
      }
    }
  }
  return y;
}

template <typename T>
void convt_backward(const Tensor4T<T>& x, const Tensor4T<T>& w,
                    const Tensor4T<T>& dy, const ConvTSpec& spec,
                    Tensor4T<T>* dx, Tensor4T<T>* dw, Tensor4T<T>* db) {
  const int outC = w.c;
  const int K = outC * w.h * w.w;
  const int L = x.h * x.w;
  std::vector<T> col(static_cast<size_t>(K) * L);
  for (int n = 0; n < x.n; ++n) {
    im2col(dy.plane(n, 0), outC, dy.h, dy.w, w.h, w.w, spec.stride, spec.pad,
           x.h, x.w, col.data());
    if (dx)
      gemm<T>(false, false, x.c, L, K, T(1), w.v.data(), K, col.data(), L,
              T(1), dx->plane(n, 0), L);
    if (dw)
      gemm<T>(false, true, x.c, K, L, T(1), x.plane(n, 0), L, col.data(), L,
              T(1), dw->v.data(), K);
    if (db) {
      const int hw = dy.h * dy.w;
      for (int oc = 0; oc < outC; ++oc) {
        const T* p = dy.plane(n, oc);
        T acc = T(0);
        for (int i = 0; i < hw; ++i) acc += p[i];
        db->v[oc] += acc;
      }
    }
  }
}

// No learned affine. Output is the normalized activation itself, which is
// all the backward pass needs besides the inverse stddev per plane.
template <typename T>
Tensor4T<T> instance_norm_forward(const Tensor4T<T>& x, T eps,
                                  std::vector<T>* invstd_out) {
  const int hw = x.h * x.w;
  Tensor4T<T> y(x.n, x.c, x.h, x.w);
  if (invstd_out) invstd_out->assign(static_cast<size_t>(x.n) * x.c, T(0));
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const T* p = x.plane(n, c);
      T mean = T(0);
      for (int i = 0; i < hw; ++i) mean += p[i];
      mean /= hw;
      T var = T(0);
      for (int i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= hw;
      const T invstd = T(1) / std::sqrt(var + eps);
      T* q = y.plane(n, c);
      for (int i = 0; i < hw; ++i) q[i] = (p[i] - mean) * invstd;
      if (invstd_out) (*invstd_out)[static_cast<size_t>(n) * x.c + c] = invstd;
    }
  return y;
}

template <typename T>
void instance_norm_backward(const Tensor4T<T>& y, const std::vector<T>& invstd,
                            const Tensor4T<T>& dy, Tensor4T<T>* dx) {
  const int hw = y.h * y.w;
  for (int n = 0; n < y.n; ++n)
    for (int c = 0; c < y.c; ++c) {
      const T* yh = y.plane(n, c);
      const T* g = dy.plane(n, c);
      T* out = dx->plane(n, c);
      T mean_g = T(0), mean_gy = T(0);
      for (int i = 0; i < hw; ++i) {
        mean_g += g[i];
        mean_gy += g[i] * yh[i];
      }
      mean_g /= hw;
      mean_gy /= hw;
      const T is = invstd[static_cast<size_t>(n) * y.c + c];
      for (int i = 0; i < hw; ++i)
        out[i] += is * (g[i] - mean_g - yh[i] * mean_gy);
    }
}

template <typename T>
Tensor4T<T> leaky_relu_forward(const Tensor4T<T>& x, T slope) {
  Tensor4T<T> y(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.v.size(); ++i)
    y.v[i] = x.v[i] > T(0) ? x.v[i] : slope * x.v[i];
  return y;
}

template <typename T>
void leaky_relu_backward(const Tensor4T<T>& x, const Tensor4T<T>& dy, T slope,
                         Tensor4T<T>* dx) {
  for (size_t i = 0; i < x.v.size(); ++i)
    dx->v[i] += x.v[i] > T(0) ? dy.v[i] : slope * dy.v[i];
}

template <typename T>
Tensor4T<T> reflection_pad_forward(const Tensor4T<T>& x, int pad) {
  if (pad < 0 || pad >= x.h || pad >= x.w)
    throw PadError("reflection pad " + std::to_string(pad) +
                   " too large for input " + x.shape_str());
  Tensor4T<T> y(x.n, x.c, x.h + 2 * pad, x.w + 2 * pad);
  auto reflect = [](int p, int len) {
    if (p < 0) p = -p;
    if (p >= len) p = 2 * (len - 1) - p;
    return p;
  };
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const T* in = x.plane(n, c);
      T* out = y.plane(n, c);
      for (int oy = 0; oy < y.h; ++oy) {
        const int iy = reflect(oy - pad, x.h);
        for (int ox = 0; ox < y.w; ++ox)
          out[oy * y.w + ox] = in[iy * x.w + reflect(ox - pad, x.w)];
      }
    }
  return y;
}

template <typename T>
void reflection_pad_backward(const Tensor4T<T>& dy, int pad, Tensor4T<T>* dx) {
  auto reflect = [](int p, int len) {
    if (p < 0) p = -p;
    if (p >= len) p = 2 * (len - 1) - p;
    return p;
  };
  for (int n = 0; n < dx->n; ++n)
    for (int c = 0; c < dx->c; ++c) {
      const T* g = dy.plane(n, c);
      T* out = dx->plane(n, c);
      for (int oy = 0; oy < dy.h; ++oy) {
        const int iy = reflect(oy - pad, dx->h);
        for (int ox = 0; ox < dy.w; ++ox)
          out[iy * dx->w + reflect(ox - pad, dx->w)] += g[oy * dy.w + ox];
      }
    }
}

}  // namespace timbre::kernels
