#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "geoseg/gasa/model.hpp"

namespace geoseg::harness {

// Cosine annealing with linear warmup, in steps.
struct LrSchedule {
  double base_lr = 1e-3;
  long warmup_steps = 0;
  long total_steps = 1;

  double at(long step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const long t = step - warmup_steps;
    const long span = std::max<long>(1, total_steps - warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(t) / static_cast<double>(span));
    return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
  }
};

// AdamW with decoupled weight decay over the model's parameter visitation
// order.
class AdamW {
 public:
  explicit AdamW(double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(gasa::GasaModel<float>& model, double lr, bool freeze_beta = false) {
    if (m_.empty()) {
      model.visit_params([&](const std::string&, num::DualTensor<float>& p) {
        m_.emplace_back(p.value.numel(), 0.0f);
        v_.emplace_back(p.value.numel(), 0.0f);
      });
    }
    ++t_;
    const float bc1 = 1.0f - std::pow(static_cast<float>(beta1_), static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(static_cast<float>(beta2_), static_cast<float>(t_));
    std::size_t slot = 0;
    model.visit_params([&](const std::string& name, num::DualTensor<float>& p) {
      auto& m = m_[slot];
      auto& v = v_[slot];
      ++slot;
      const bool frozen = freeze_beta && name.size() >= 5 &&
                          name.compare(name.size() - 5, 5, ".beta") == 0;
      if (frozen) return;
      const float flr = static_cast<float>(lr);
      for (std::size_t i = 0; i < p.value.numel(); ++i) {
        const float g = p.grad[i];
        m[i] = static_cast<float>(beta1_) * m[i] + (1.0f - static_cast<float>(beta1_)) * g;
        v[i] = static_cast<float>(beta2_) * v[i] + (1.0f - static_cast<float>(beta2_)) * g * g;
        const float mh = m[i] / bc1;
        const float vh = v[i] / bc2;
        p.value[i] -= flr * (mh / (std::sqrt(vh) + static_cast<float>(eps_)) +
                             static_cast<float>(wd_) * p.value[i]);
      }
    });
  }

 private:
  double wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace geoseg::harness
