#pragma once

#include <cmath>
#include <cstddef>

#include "geoseg/numerics/tensor.hpp"

// Forward ops paired with explicit backward functions. Each backward takes
// the upstream cotangent g and accumulates (+=) into the input gradients.
// The model graph is small and static, so callers chain these by hand.

namespace geoseg::num {

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    T* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// ga += g * b^T, gb += a^T * g. b is transposed once so both accumulations
// run as row-major saxpy loops.
template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& g, Tensor<T>& ga,
                     Tensor<T>& gb) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b.data()[p * n + j];
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g.data() + i * n;
    T* garow = ga.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T gv = grow[j];
      const T* btrow = bt.data() + j * k;
      for (std::size_t p = 0; p < k; ++p) garow[p] += gv * btrow[p];
    }
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* gbrow = gb.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
    }
  }
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "hadamard");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
void axpy(Tensor<T>& y, T s, const Tensor<T>& x) {
  check_same_shape(y, x, "axpy");
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += s * x[i];
}

template <typename T>
T sum_all(const Tensor<T>& a) {
  T s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
  return s;
}

// Broadcast-add a row vector b[d] to every row of x[n×d].
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.cols() != b.numel()) {
    throw ShapeError("add_row: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(r, c) + b[c];
  return out;
}

template <typename T>
void add_row_backward(const Tensor<T>& g, Tensor<T>& gx, Tensor<T>& gb) {
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) {
      gx.at(r, c) += g.at(r, c);
      gb[c] += g.at(r, c);
    }
}

// ---------------------------------------------------------------------------
// linear layer: y = x * W + b

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, w);
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += b[c];
  return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& g, Tensor<T>& gx,
                     Tensor<T>& gw, Tensor<T>& gb) {
  matmul_backward(x, w, g, gx, gw);
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
}

// ---------------------------------------------------------------------------
// softmax with additive bias over the last axis

// bias must either match logits' shape or be a single row broadcast across
// all rows. Anything else is a shape error; broader broadcasting is not used
// by the decoder.
template <typename T>
Tensor<T> softmax_with_bias(const Tensor<T>& logits, const Tensor<T>& bias) {
  const std::size_t n = logits.rank() == 0 ? 0 : logits.shape().back();
  const std::size_t rows = n == 0 ? 0 : logits.numel() / n;
  const bool same = bias.same_shape(logits);
  const bool row_bc = bias.numel() == n;
  if (!same && !row_bc) {
    throw ShapeError("softmax_with_bias: bias " + shape_str(bias.shape()) +
                     " not broadcastable to logits " + shape_str(logits.shape()));
  }
  Tensor<T> out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* lrow = logits.data() + r * n;
    const T* brow = bias.data() + (same ? r * n : 0);
    T* orow = out.data() + r * n;
    T mx = lrow[0] + brow[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, lrow[j] + brow[j]);
    T denom = 0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(lrow[j] + brow[j] - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= denom;
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  return softmax_with_bias(logits, Tensor<T>(logits.shape()));
}

// dz_j = y_j * (g_j - sum_k g_k y_k); the same dz accumulates into both the
// logits and the bias gradients (reduced over rows when bias was broadcast).
template <typename T>
void softmax_with_bias_backward(const Tensor<T>& y, const Tensor<T>& g, Tensor<T>& glogits,
                                Tensor<T>& gbias) {
  const std::size_t n = y.shape().back();
  const std::size_t rows = y.numel() / n;
  const bool row_bc = gbias.numel() == n && !gbias.same_shape(glogits);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* yrow = y.data() + r * n;
    const T* grow = g.data() + r * n;
    T dot = 0;
    for (std::size_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
    T* glrow = glogits.data() + r * n;
    T* gbrow = gbias.data() + (row_bc ? 0 : r * n);
    for (std::size_t j = 0; j < n; ++j) {
      const T dz = yrow[j] * (grow[j] - dot);
      glrow[j] += dz;
      gbrow[j] += dz;
    }
  }
}

// ---------------------------------------------------------------------------
// unary elementwise with matching backward

enum class Unary { kGelu, kSigmoid, kRelu, kLog, kExp };

template <typename T>
inline T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

template <typename T>
inline T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
Tensor<T> elementwise(Unary op, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const std::size_t n = x.numel();
  switch (op) {
    case Unary::kGelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = gelu_scalar(x[i]);
      break;
    case Unary::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_scalar(x[i]);
      break;
    case Unary::kRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case Unary::kLog:
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= T(0)) throw DomainError("elementwise log: non-positive input");
        out[i] = std::log(x[i]);
      }
      break;
    case Unary::kExp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
      break;
  }
  return out;
}

template <typename T>
void elementwise_backward(Unary op, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& g,
                          Tensor<T>& gx) {
  const std::size_t n = x.numel();
  switch (op) {
    case Unary::kGelu:
      for (std::size_t i = 0; i < n; ++i) gx[i] += gelu_grad_scalar(x[i]) * g[i];
      break;
    case Unary::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (T(1) - y[i]) * g[i];
      break;
    case Unary::kRelu:
      for (std::size_t i = 0; i < n; ++i) gx[i] += (x[i] > T(0) ? g[i] : T(0));
      break;
    case Unary::kLog:
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / x[i];
      break;
    case Unary::kExp:
      for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * g[i];
      break;
  }
}

// ---------------------------------------------------------------------------
// layer norm over the last axis

template <typename T>
struct LayerNormTrace {
  Tensor<T> xhat;     // normalized input
  std::vector<T> inv_std;
};

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     LayerNormTrace<T>* trace, T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  if (trace) {
    trace->xhat = Tensor<T>(x.shape());
    trace->inv_std.assign(rows, T(0));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    T* orow = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (xr[j] - mean) * inv;
      orow[j] = xh * gamma[j] + beta[j];
      if (trace) trace->xhat.data()[r * d + j] = xh;
    }
    if (trace) trace->inv_std[r] = inv;
  }
  return out;
}

template <typename T>
void layer_norm_backward(const LayerNormTrace<T>& trace, const Tensor<T>& gamma,
                         const Tensor<T>& g, Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta) {
  const std::size_t d = g.shape().back();
  const std::size_t rows = g.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* grow = g.data() + r * d;
    const T* xh = trace.xhat.data() + r * d;
    T sum_gy = 0, sum_gy_xh = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T gy = grow[j] * gamma[j];
      sum_gy += gy;
      sum_gy_xh += gy * xh[j];
      ggamma[j] += grow[j] * xh[j];
      gbeta[j] += grow[j];
    }
    const T inv = trace.inv_std[r];
    for (std::size_t j = 0; j < d; ++j) {
      const T gy = grow[j] * gamma[j];
      gx.data()[r * d + j] += inv * (gy - sum_gy / T(d) - xh[j] * sum_gy_xh / T(d));
    }
  }
}

// ---------------------------------------------------------------------------
// column slicing for attention heads

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
  const std::size_t n = x.rows(), w = c1 - c0;
  Tensor<T> out({n, w});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = x.at(r, c0 + c);
  return out;
}

template <typename T>
void add_into_cols(Tensor<T>& gx, std::size_t c0, const Tensor<T>& gslice) {
  for (std::size_t r = 0; r < gslice.rows(); ++r)
    for (std::size_t c = 0; c < gslice.cols(); ++c) gx.at(r, c0 + c) += gslice.at(r, c);
}

}  // namespace geoseg::num
