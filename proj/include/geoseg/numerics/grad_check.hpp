#pragma once

#include <cmath>
#include <functional>

#include "geoseg/numerics/tensor.hpp"

namespace geoseg::num {

// A scalar function of a flat parameter vector together with its analytic
// gradient. Model code adapts itself to this interface by flattening its
// parameters; see harness/gradcheck_suite.
struct Differentiable {
  std::function<double(const Tensor<double>&)> value;
  std::function<Tensor<double>(const Tensor<double>&)> gradient;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences against the analytic gradient, in double precision.
// rel_i = |analytic_i - numeric_i| / (|numeric_i| + 1e-8)
inline GradCheckReport grad_check(const Differentiable& f, const Tensor<double>& theta,
                                  double h = 1e-5) {
  const Tensor<double> analytic = f.gradient(theta);
  if (!analytic.same_shape(theta)) {
    throw ShapeError("grad_check: analytic gradient shape " + shape_str(analytic.shape()) +
                     " does not match theta " + shape_str(theta.shape()));
  }
  GradCheckReport report;
  Tensor<double> probe = theta;
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f.value(probe);
    probe[i] = orig - h;
    const double fm = f.value(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvalError("grad_check: non-finite value at theta perturbation, index " +
                      std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace geoseg::num
