#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "geoseg/numerics/tensor.hpp"

namespace geoseg::loss {

template <typename T>
struct LossWeights {
  T lambda_focal = T(2.0);
  T lambda_dice = T(0.5);
  T lambda_align = T(1.0);
  T lambda_contrastive = T(0.3);
  T lambda_centroid = T(0.5);
  T lambda_presence = T(0.5);

  T focal_alpha = T(0.75);
  T focal_gamma = T(2.0);
  T align_alpha = T(0.5);
  T align_tau = T(2.0);
  T align_gamma = T(2.0);
  T contrastive_margin = T(0.5);
  T dice_epsilon = T(1.0);
};

template <typename T>
struct LossReport {
  T total = 0;
  T focal = 0;
  T dice = 0;
  T align = 0;
  T contrastive = 0;
  T centroid = 0;
  T presence = 0;

  std::string line(long step) const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "step=%ld total=%.6g focal=%.6g dice=%.6g align=%.6g contrastive=%.6g "
                  "centroid=%.6g presence=%.6g",
                  step, double(total), double(focal), double(dice), double(align),
                  double(contrastive), double(centroid), double(presence));
    return buf;
  }
};

template <typename T>
inline T clamp_prob(T p) {
  return std::min(std::max(p, num::Tol<T>::prob_clamp), T(1) - num::Tol<T>::prob_clamp);
}

// ---------------------------------------------------------------------------
// focal loss: mean over pixels of -alpha_t (1 - p_t)^gamma log(p_t)

template <typename T>
T focal_loss(const num::Tensor<T>& pred_prob, const num::Tensor<T>& target, T alpha, T gamma) {
  num::check_same_shape(pred_prob, target, "focal_loss");
  const std::size_t n = pred_prob.numel();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T p = clamp_prob(pred_prob[i]);
    const bool fg = target[i] > T(0.5);
    const T pt = fg ? p : T(1) - p;
    const T at = fg ? alpha : T(1) - alpha;
    acc += -at * std::pow(T(1) - pt, gamma) * std::log(pt);
  }
  return acc / T(n);
}

template <typename T>
void focal_loss_backward(const num::Tensor<T>& pred_prob, const num::Tensor<T>& target, T alpha,
                         T gamma, T gout, num::Tensor<T>& gpred) {
  const std::size_t n = pred_prob.numel();
  const T inv_n = T(1) / T(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T p = clamp_prob(pred_prob[i]);
    if (p != pred_prob[i]) continue;  // clamped: no gradient
    const bool fg = target[i] > T(0.5);
    const T pt = fg ? p : T(1) - p;
    const T at = fg ? alpha : T(1) - alpha;
    // d/dpt of -at (1-pt)^g log(pt)
    T d = -at * (-gamma * std::pow(T(1) - pt, gamma - T(1)) * std::log(pt) +
                 std::pow(T(1) - pt, gamma) / pt);
    if (!fg) d = -d;  // dpt/dp = -1 for background
    gpred[i] += gout * inv_n * d;
  }
}

// ---------------------------------------------------------------------------
// dice loss: 1 - (2 sum(pq) + eps) / (sum(p) + sum(q) + eps)

template <typename T>
T dice_loss(const num::Tensor<T>& pred_prob, const num::Tensor<T>& target, T epsilon) {
  num::check_same_shape(pred_prob, target, "dice_loss");
  T inter = 0, psum = 0, tsum = 0;
  for (std::size_t i = 0; i < pred_prob.numel(); ++i) {
    inter += pred_prob[i] * target[i];
    psum += pred_prob[i];
    tsum += target[i];
  }
  return T(1) - (T(2) * inter + epsilon) / (psum + tsum + epsilon);
}

template <typename T>
void dice_loss_backward(const num::Tensor<T>& pred_prob, const num::Tensor<T>& target, T epsilon,
                        T gout, num::Tensor<T>& gpred) {
  T inter = 0, psum = 0, tsum = 0;
  for (std::size_t i = 0; i < pred_prob.numel(); ++i) {
    inter += pred_prob[i] * target[i];
    psum += pred_prob[i];
    tsum += target[i];
  }
  const T denom = psum + tsum + epsilon;
  const T num_ = T(2) * inter + epsilon;
  for (std::size_t i = 0; i < pred_prob.numel(); ++i) {
    // d(1 - num/denom)/dp_i = -(2 t_i denom - num) / denom^2
    gpred[i] += gout * (-(T(2) * target[i] * denom - num_) / (denom * denom));
  }
}

// ---------------------------------------------------------------------------
// align loss with detached soft target t_c = e^{-r/tau} p^alpha u^{1-alpha}

template <typename T>
T align_soft_target(T rank, T p, T u, T alpha, T tau) {
  p = clamp_prob(p);
  return std::exp(-rank / tau) * std::pow(p, alpha) * std::pow(u, T(1) - alpha);
}

template <typename T>
num::Tensor<T> align_soft_targets(const num::Tensor<T>& conf, const num::Tensor<T>& iou,
                                  const num::Tensor<T>& ranks, T alpha, T tau) {
  num::check_same_shape(conf, iou, "align_soft_targets");
  num::Tensor<T> tc(conf.shape());
  for (std::size_t i = 0; i < conf.numel(); ++i)
    tc[i] = align_soft_target(ranks[i], conf[i], iou[i], alpha, tau);
  return tc;
}

// The soft target t_c is a detached constant: the backward differentiates
// only the focal-style terms in p.
template <typename T>
T align_loss_with_targets(const num::Tensor<T>& conf, const num::Tensor<T>& tc, T gamma) {
  num::check_same_shape(conf, tc, "align_loss_with_targets");
  const std::size_t q = conf.numel();
  T acc = 0;
  for (std::size_t i = 0; i < q; ++i) {
    const T p = clamp_prob(conf[i]);
    acc += -tc[i] * std::pow(T(1) - p, gamma) * std::log(p) -
           (T(1) - tc[i]) * std::pow(p, gamma) * std::log(T(1) - p);
  }
  return acc / T(q);
}

template <typename T>
T align_loss(const num::Tensor<T>& conf, const num::Tensor<T>& iou, const num::Tensor<T>& ranks,
             T alpha, T tau, T gamma) {
  return align_loss_with_targets(conf, align_soft_targets(conf, iou, ranks, alpha, tau), gamma);
}

template <typename T>
void align_loss_backward(const num::Tensor<T>& conf, const num::Tensor<T>& tc, T gamma, T gout,
                         num::Tensor<T>& gconf) {
  const std::size_t q = conf.numel();
  const T inv_q = T(1) / T(q);
  for (std::size_t i = 0; i < q; ++i) {
    const T p = clamp_prob(conf[i]);
    if (p != conf[i]) continue;
    const T d1 = -tc[i] * (-gamma * std::pow(T(1) - p, gamma - T(1)) * std::log(p) +
                           std::pow(T(1) - p, gamma) / p);
    const T d2 = -(T(1) - tc[i]) * (gamma * std::pow(p, gamma - T(1)) * std::log(T(1) - p) -
                                    std::pow(p, gamma) / (T(1) - p));
    gconf[i] += gout * inv_q * (d1 + d2);
  }
}

// Ranks by IoU descending (best gets 0), ties broken by lower query index.
template <typename T>
num::Tensor<T> iou_ranks(const num::Tensor<T>& iou) {
  const std::size_t q = iou.numel();
  std::vector<std::size_t> order(q);
  for (std::size_t i = 0; i < q; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return iou[a] > iou[b]; });
  num::Tensor<T> ranks({q});
  for (std::size_t r = 0; r < q; ++r) ranks[order[r]] = T(r);
  return ranks;
}

// ---------------------------------------------------------------------------
// contrastive ranking: mean over ordered pairs (u_i > u_j) of
// max(0, m - (s_i - s_j))

template <typename T>
T contrastive_rank_loss(const num::Tensor<T>& scores, const num::Tensor<T>& iou, T margin) {
  num::check_same_shape(scores, iou, "contrastive_rank_loss");
  const std::size_t q = scores.numel();
  T acc = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      if (!(iou[i] > iou[j])) continue;
      ++pairs;
      acc += std::max(T(0), margin - (scores[i] - scores[j]));
    }
  return pairs ? acc / T(pairs) : T(0);
}

template <typename T>
void contrastive_rank_loss_backward(const num::Tensor<T>& scores, const num::Tensor<T>& iou,
                                    T margin, T gout, num::Tensor<T>& gscores) {
  const std::size_t q = scores.numel();
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j)
      if (iou[i] > iou[j]) ++pairs;
  if (!pairs) return;
  const T w = gout / T(pairs);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      if (!(iou[i] > iou[j])) continue;
      if (margin - (scores[i] - scores[j]) > T(0)) {
        gscores[i] -= w;
        gscores[j] += w;
      }
    }
}

// ---------------------------------------------------------------------------
// localization: smooth-L1 centroid (when present) + presence BCE

template <typename T>
inline T smooth_l1(T x) {
  const T a = std::abs(x);
  return a < T(1) ? T(0.5) * x * x : a - T(0.5);
}

template <typename T>
inline T smooth_l1_grad(T x) {
  const T a = std::abs(x);
  if (a < T(1)) return x;
  return x > T(0) ? T(1) : T(-1);
}

template <typename T>
struct LocalizationTerms {
  T centroid = 0;
  T presence = 0;
};

template <typename T>
LocalizationTerms<T> localization_loss(const std::array<T, 3>& pred_centroid,
                                       const std::array<T, 3>& gt_centroid, T presence_prob,
                                       int presence_label) {
  LocalizationTerms<T> out;
  if (presence_label == 1) {
    for (int k = 0; k < 3; ++k) out.centroid += smooth_l1(pred_centroid[k] - gt_centroid[k]);
  }
  const T p = clamp_prob(presence_prob);
  out.presence = presence_label == 1 ? -std::log(p) : -std::log(T(1) - p);
  return out;
}

template <typename T>
void localization_loss_backward(const std::array<T, 3>& pred_centroid,
                                const std::array<T, 3>& gt_centroid, T presence_prob,
                                int presence_label, T gcentroid_out, T gpresence_out,
                                std::array<T, 3>& gpred_centroid, T& gpresence_prob) {
  if (presence_label == 1) {
    for (int k = 0; k < 3; ++k)
      gpred_centroid[k] += gcentroid_out * smooth_l1_grad(pred_centroid[k] - gt_centroid[k]);
  }
  const T p = clamp_prob(presence_prob);
  if (p == presence_prob) {
    gpresence_prob += gpresence_out * (presence_label == 1 ? -T(1) / p : T(1) / (T(1) - p));
  }
}

// ---------------------------------------------------------------------------
// weighted combination

template <typename T>
LossReport<T> combine(const LossWeights<T>& w, T focal, T dice, T align, T contrastive, T centroid,
                      T presence) {
  LossReport<T> r;
  r.focal = focal;
  r.dice = dice;
  r.align = align;
  r.contrastive = contrastive;
  r.centroid = centroid;
  r.presence = presence;
  r.total = w.lambda_focal * focal + w.lambda_dice * dice + w.lambda_align * align +
            w.lambda_contrastive * contrastive + w.lambda_centroid * centroid +
            w.lambda_presence * presence;
  return r;
}

}  // namespace geoseg::loss
