#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geoseg/errors.hpp"
#include "geoseg/numerics/rng.hpp"
#include "geoseg/numerics/tensor.hpp"

namespace geoseg::gasa {

enum class KernelMode { kLearned, kRbf, kOff };

inline const char* kernel_mode_name(KernelMode m) {
  switch (m) {
    case KernelMode::kLearned: return "learned";
    case KernelMode::kRbf: return "rbf";
    case KernelMode::kOff: return "off";
  }
  return "?";
}

// phi(d) = w2 . relu(w1 d + b1) + b2, output clamped to [lo, hi].
// The kernel maps meters to a non-positive attention bias.
template <typename T>
struct DistanceKernel {
  num::DualTensor<T> w1;  // [H]
  num::DualTensor<T> b1;  // [H]
  num::DualTensor<T> w2;  // [H]
  num::DualTensor<T> b2;  // [1]
  T clamp_lo = T(-10);
  T clamp_hi = T(0);

  int hidden() const { return static_cast<int>(w1.value.numel()); }

  T eval(T d) const {
    T acc = b2.value[0];
    for (int k = 0; k < hidden(); ++k) {
      const T h = w1.value[k] * d + b1.value[k];
      if (h > T(0)) acc += w2.value[k] * h;
    }
    return std::min(clamp_hi, std::max(clamp_lo, acc));
  }

  template <typename U>
  DistanceKernel<U> cast() const {
    DistanceKernel<U> out;
    out.w1 = num::DualTensor<U>(w1.value.template cast<U>());
    out.b1 = num::DualTensor<U>(b1.value.template cast<U>());
    out.w2 = num::DualTensor<U>(w2.value.template cast<U>());
    out.b2 = num::DualTensor<U>(b2.value.template cast<U>());
    out.clamp_lo = static_cast<U>(clamp_lo);
    out.clamp_hi = static_cast<U>(clamp_hi);
    return out;
  }
};

template <typename T>
struct KernelTrace {
  num::Tensor<T> dist;    // flat distances
  num::Tensor<T> hidden;  // [n x H] post-relu
  num::Tensor<T> raw;     // pre-clamp outputs
};

template <typename T>
num::Tensor<T> kernel_phi(const DistanceKernel<T>& k, const num::Tensor<T>& dist,
                          KernelTrace<T>* trace) {
  const std::size_t n = dist.numel();
  const int hdim = k.hidden();
  num::Tensor<T> out(dist.shape());
  if (trace) {
    trace->dist = dist;
    trace->hidden = num::Tensor<T>({n, static_cast<std::size_t>(hdim)});
    trace->raw = num::Tensor<T>(dist.shape());
  }
  for (std::size_t i = 0; i < n; ++i) {
    T acc = k.b2.value[0];
    for (int h = 0; h < hdim; ++h) {
      T a = k.w1.value[h] * dist[i] + k.b1.value[h];
      if (a < T(0)) a = T(0);
      if (trace) trace->hidden.at(i, h) = a;
      acc += k.w2.value[h] * a;
    }
    if (trace) trace->raw[i] = acc;
    out[i] = std::min(k.clamp_hi, std::max(k.clamp_lo, acc));
  }
  return out;
}

template <typename T>
void kernel_phi_backward(DistanceKernel<T>& k, const KernelTrace<T>& trace,
                         const num::Tensor<T>& g) {
  const std::size_t n = trace.dist.numel();
  const int hdim = k.hidden();
  for (std::size_t i = 0; i < n; ++i) {
    const T raw = trace.raw[i];
    if (raw <= k.clamp_lo || raw >= k.clamp_hi) continue;  // clamped: no gradient
    const T go = g[i];
    if (go == T(0)) continue;
    k.b2.grad[0] += go;
    for (int h = 0; h < hdim; ++h) {
      const T act = trace.hidden.at(i, h);
      k.w2.grad[h] += go * act;
      if (act > T(0)) {
        const T gh = go * k.w2.value[h];
        k.w1.grad[h] += gh * trace.dist[i];
        k.b1.grad[h] += gh;
      }
    }
  }
}

// Fixed-form ablation alternative: phi_rbf(d) = -d^2 / (2 sigma^2), same clamp.
template <typename T>
inline T rbf_phi(T d, T sigma, T lo, T hi) {
  return std::min(hi, std::max(lo, -d * d / (T(2) * sigma * sigma)));
}

// Bias matrix beta * clamp(phi(d)). Invalid pairs get beta * clamp floor.
template <typename T>
num::Tensor<T> gasa_bias(const DistanceKernel<T>& k, T beta, const num::Tensor<T>& dist) {
  auto phi = kernel_phi(k, dist, static_cast<KernelTrace<T>*>(nullptr));
  for (std::size_t i = 0; i < phi.numel(); ++i) phi[i] *= beta;
  return phi;
}

// Fits the kernel to -log(1 + d) on a dense grid over [0, 20] by Adam on the
// squared error, starting from a piecewise-linear interpolant basis with
// b2 = -1. Throws InitError when the fit tolerance is not reached.
inline DistanceKernel<double> kernel_init(std::uint64_t seed, int hidden = 32,
                                          double clamp_lo = -10.0, double clamp_hi = 0.0,
                                          double fit_tol = 0.05, int max_iters = 8000) {
  DistanceKernel<double> k;
  k.clamp_lo = clamp_lo;
  k.clamp_hi = clamp_hi;
  const std::size_t h = static_cast<std::size_t>(hidden);
  k.w1 = num::DualTensor<double>(num::Tensor<double>({h}));
  k.b1 = num::DualTensor<double>(num::Tensor<double>({h}));
  k.w2 = num::DualTensor<double>(num::Tensor<double>({h}));
  k.b2 = num::DualTensor<double>(num::Tensor<double>({1}, {-1.0}));

  // Unit 0 is a constant that cancels the mandated b2 = -1 start; the rest
  // form a piecewise-linear interpolant on geometric knots over [0, 20],
  // which keeps the starting point monotone non-increasing.
  num::Rng rng(seed);
  auto target = [](double d) { return -std::log(1.0 + d); };
  k.w1.value[0] = 0.0;
  k.b1.value[0] = 1.0;
  k.w2.value[0] = 1.0;
  const std::size_t nk = h - 1;
  const double span = std::log(21.0);
  std::vector<double> knots(nk);
  for (std::size_t i = 0; i < nk; ++i)
    knots[i] = std::exp(span * static_cast<double>(i) / static_cast<double>(nk - 1)) - 1.0;
  std::vector<double> slope(nk);
  for (std::size_t i = 0; i < nk; ++i) {
    const double d0 = knots[i];
    const double d1 = (i + 1 < nk) ? knots[i + 1] : d0 + 1.0;
    slope[i] = (target(d1) - target(d0)) / (d1 - d0);
  }
  for (std::size_t i = 0; i < nk; ++i) {
    k.w1.value[1 + i] = 1.0;
    k.b1.value[1 + i] = -knots[i] + rng.normal(0.0, 1e-4);
    k.w2.value[1 + i] = (i == 0) ? slope[0] : slope[i] - slope[i - 1];
  }

  const int grid_n = 401;  // 0.05 spacing
  std::vector<double> grid(grid_n);
  for (int i = 0; i < grid_n; ++i) grid[i] = 20.0 * i / (grid_n - 1);

  // Adam over all kernel parameters on the unclamped output.
  const std::size_t np = 3 * h + 1;
  std::vector<double> m(np, 0.0), v(np, 0.0);
  const double lr = 3e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  auto max_err = [&]() {
    double worst = 0;
    for (double d : grid) worst = std::max(worst, std::abs(k.eval(d) - target(d)));
    return worst;
  };
  double achieved = max_err();
  for (int it = 1; it <= max_iters && achieved >= fit_tol * 0.6; ++it) {
    k.w1.zero_grad();
    k.b1.zero_grad();
    k.w2.zero_grad();
    k.b2.zero_grad();
    KernelTrace<double> tr;
    num::Tensor<double> d({static_cast<std::size_t>(grid_n)});
    for (int i = 0; i < grid_n; ++i) d[i] = grid[i];
    // fit the raw output; the clamp only tightens the error against a
    // non-positive target
    const int hdim = k.hidden();
    num::Tensor<double> raw({static_cast<std::size_t>(grid_n)});
    tr.dist = d;
    tr.hidden = num::Tensor<double>({static_cast<std::size_t>(grid_n), h});
    tr.raw = raw;
    num::Tensor<double> g({static_cast<std::size_t>(grid_n)});
    for (int i = 0; i < grid_n; ++i) {
      double acc = k.b2.value[0];
      for (int j = 0; j < hdim; ++j) {
        double a = k.w1.value[j] * d[i] + k.b1.value[j];
        if (a < 0) a = 0;
        tr.hidden.at(i, j) = a;
        acc += k.w2.value[j] * a;
      }
      tr.raw[i] = acc;
      g[i] = 2.0 * (acc - target(d[i])) / grid_n;
    }
    // reuse the kernel backward without the clamp gate
    for (int i = 0; i < grid_n; ++i) {
      const double go = g[i];
      k.b2.grad[0] += go;
      for (int j = 0; j < hdim; ++j) {
        const double act = tr.hidden.at(i, j);
        k.w2.grad[j] += go * act;
        if (act > 0) {
          const double gh = go * k.w2.value[j];
          k.w1.grad[j] += gh * d[i];
          k.b1.grad[j] += gh;
        }
      }
    }
    auto step = [&](double& p, double gr, std::size_t idx) {
      m[idx] = beta1 * m[idx] + (1 - beta1) * gr;
      v[idx] = beta2 * v[idx] + (1 - beta2) * gr * gr;
      const double mh = m[idx] / (1 - std::pow(beta1, it));
      const double vh = v[idx] / (1 - std::pow(beta2, it));
      p -= lr * mh / (std::sqrt(vh) + eps);
    };
    for (std::size_t j = 0; j < h; ++j) {
      step(k.w1.value[j], k.w1.grad[j], j);
      step(k.b1.value[j], k.b1.grad[j], h + j);
      step(k.w2.value[j], k.w2.grad[j], 2 * h + j);
    }
    step(k.b2.value[0], k.b2.grad[0], 3 * h);
    if (it % 50 == 0) achieved = max_err();
  }
  achieved = max_err();
  if (achieved >= fit_tol) {
    throw InitError("kernel_init: fit reached max error " + std::to_string(achieved) +
                    " (tolerance " + std::to_string(fit_tol) + ")");
  }
  k.w1.zero_grad();
  k.b1.zero_grad();
  k.w2.zero_grad();
  k.b2.zero_grad();
  return k;
}

}  // namespace geoseg::gasa
