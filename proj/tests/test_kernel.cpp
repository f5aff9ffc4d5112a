#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "geoseg/gasa/kernel.hpp"
#include "geoseg/numerics/grad_check.hpp"

using namespace geoseg;
using gasa::DistanceKernel;

TEST_CASE("kernel_init approximates -log(1+d) within tolerance") {
  auto k = gasa::kernel_init(0);
  double worst = 0;
  for (double d = 0.0; d <= 20.0 + 1e-9; d += 0.1) {
    worst = std::max(worst, std::abs(k.eval(d) + std::log(1.0 + d)));
  }
  CHECK(worst < 0.05);
  // phi(0) clamps against the upper bound
  CHECK(k.eval(0.0) <= 0.0);
  CHECK(k.eval(0.0) >= -0.05);
  // target -1 at d = e - 1
  CHECK(k.eval(std::exp(1.0) - 1.0) == doctest::Approx(-1.0).epsilon(0.05));
  // clamp floor is exact
  CHECK(k.eval(1e6) == -10.0);
}

TEST_CASE("kernel is non-increasing on [0, 20] after init") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto k = gasa::kernel_init(seed);
    double prev = k.eval(0.0);
    for (double d = 0.1; d <= 20.0 + 1e-9; d += 0.1) {
      const double cur = k.eval(d);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("gasa_bias oracle values") {
  auto k = gasa::kernel_init(1);

  // beta = 0 kills the bias entirely
  num::Tensor<double> d({3}, {0.0, 2.5, 19.0});
  auto zero = gasa::gasa_bias(k, 0.0, d);
  for (std::size_t i = 0; i < 3; ++i) CHECK(zero[i] == 0.0);

  // beta = 1, d = 0: roughly no penalty for coincident points
  auto b1 = gasa::gasa_bias(k, 1.0, num::Tensor<double>({1}, {0.0}));
  CHECK(std::abs(b1[0]) <= 0.05);

  // beta = 2 doubles the kernel value
  const double phi = k.eval(3.0);
  auto b2 = gasa::gasa_bias(k, 2.0, num::Tensor<double>({1}, {3.0}));
  CHECK(b2[0] == doctest::Approx(2.0 * phi).epsilon(1e-12));
}

TEST_CASE("rbf kernel form and clamp") {
  CHECK(gasa::rbf_phi(0.0, 2.0, -10.0, 0.0) == 0.0);
  CHECK(gasa::rbf_phi(2.0, 2.0, -10.0, 0.0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(gasa::rbf_phi(100.0, 2.0, -10.0, 0.0) == -10.0);
}

TEST_CASE("kernel_phi gradient check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    num::Rng rng(500 + seed);
    auto k = gasa::kernel_init(seed);
    const std::size_t n = 12;
    num::Tensor<double> dist({n});
    for (std::size_t i = 0; i < n; ++i) dist[i] = rng.uniform(0.05, 15.0);
    num::Tensor<double> weights({n});
    for (std::size_t i = 0; i < n; ++i) weights[i] = rng.normal();

    // flatten kernel params into theta
    const std::size_t h = static_cast<std::size_t>(k.hidden());
    auto pack = [&](const DistanceKernel<double>& kk) {
      num::Tensor<double> t({3 * h + 1});
      for (std::size_t i = 0; i < h; ++i) {
        t[i] = kk.w1.value[i];
        t[h + i] = kk.b1.value[i];
        t[2 * h + i] = kk.w2.value[i];
      }
      t[3 * h] = kk.b2.value[0];
      return t;
    };
    auto unpack = [&](const num::Tensor<double>& t) {
      DistanceKernel<double> kk = k;
      for (std::size_t i = 0; i < h; ++i) {
        kk.w1.value[i] = t[i];
        kk.b1.value[i] = t[h + i];
        kk.w2.value[i] = t[2 * h + i];
      }
      kk.b2.value[0] = t[3 * h];
      return kk;
    };

    num::Differentiable f;
    f.value = [&](const num::Tensor<double>& t) {
      auto kk = unpack(t);
      auto phi = gasa::kernel_phi(kk, dist, static_cast<gasa::KernelTrace<double>*>(nullptr));
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += weights[i] * phi[i];
      return s;
    };
    f.gradient = [&](const num::Tensor<double>& t) {
      auto kk = unpack(t);
      gasa::KernelTrace<double> tr;
      auto phi = gasa::kernel_phi(kk, dist, &tr);
      (void)phi;
      gasa::kernel_phi_backward(kk, tr, weights);
      num::Tensor<double> g({3 * h + 1});
      for (std::size_t i = 0; i < h; ++i) {
        g[i] = kk.w1.grad[i];
        g[h + i] = kk.b1.grad[i];
        g[2 * h + i] = kk.w2.grad[i];
      }
      g[3 * h] = kk.b2.grad[0];
      return g;
    };
    auto rep = num::grad_check(f, pack(k));
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("kernel cast between precisions") {
  auto k = gasa::kernel_init(2);
  auto kf = k.cast<float>();
  CHECK(kf.eval(3.0f) == doctest::Approx(k.eval(3.0)).epsilon(1e-5));
}
