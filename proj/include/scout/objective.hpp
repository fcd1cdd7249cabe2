#pragma once

// Clipped surrogate and critic regression losses with their analytic
// gradients. The actor loss is agnostic to what a "unit" is: a whole turn
// (sequence-level ratio), a single token (token-level PPO) or a
// length-normalized turn (GSPO). Callers chain the per-unit gradients back
// into the policy log-probs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "scout/error.hpp"

namespace scout {

inline constexpr double kMaxLogRatio = 20.0;

// w = exp(new - old), clamped at exp(20). `overflow` counts clamps.
inline double sequence_ratio(double new_logprob, double old_logprob, std::int64_t* overflow = nullptr) {
  if (!std::isfinite(new_logprob) || !std::isfinite(old_logprob)) throw NumericError("non-finite log-prob");
  const double d = new_logprob - old_logprob;
  if (d > kMaxLogRatio) {
    if (overflow) ++*overflow;
    return std::exp(kMaxLogRatio);
  }
  return std::exp(d);
}

struct ActorLoss {
  double loss = 0.0;
  // d loss / d log(w_i) for the surrogate term, per unit.
  std::vector<double> grad_log_ratio;
  // d loss / d kl_i for the penalty term (kl_coef / n), per unit.
  double grad_kl = 0.0;
  std::vector<bool> clipped;
  double clip_fraction = 0.0;
  double kl_mean = 0.0;
};

// True when the clipped branch of min(w A, clip(w) A) is strictly active and
// the surrogate is flat in w.
inline bool clip_active(double w, double adv, double eps_low, double eps_high) {
  return (adv > 0.0 && w > 1.0 + eps_high) || (adv < 0.0 && w < 1.0 - eps_low);
}

// loss = -mean_i min(w_i A_i, clip(w_i, 1-eps_low, 1+eps_high) A_i)
//        + kl_coef * mean_i kl_i
inline ActorLoss actor_loss(std::span<const double> ratios, std::span<const double> advantages, double eps_low,
                            double eps_high, double kl_coef, std::span<const double> kl_estimates) {
  if (ratios.size() != advantages.size()) throw InvariantError("ratios and advantages must be aligned");
  if (!kl_estimates.empty() && kl_estimates.size() != ratios.size()) {
    throw InvariantError("kl estimates must be aligned with ratios");
  }
  if (!(eps_low > 0.0) || !(eps_high > 0.0)) throw InvariantError("clip bounds must be positive");
  ActorLoss out;
  const std::size_t n = ratios.size();
  out.grad_log_ratio.assign(n, 0.0);
  out.clipped.assign(n, false);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t n_clipped = 0;
  double surrogate = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = ratios[i];
    const double a = advantages[i];
    const double unclipped = w * a;
    const double clipped = std::clamp(w, 1.0 - eps_low, 1.0 + eps_high) * a;
    surrogate += std::min(unclipped, clipped);
    if (clip_active(w, a, eps_low, eps_high)) {
      out.clipped[i] = true;
      ++n_clipped;
    } else {
      out.grad_log_ratio[i] = -a * w * inv_n;
    }
  }
  out.loss = -surrogate * inv_n;
  out.clip_fraction = static_cast<double>(n_clipped) * inv_n;
  if (!kl_estimates.empty()) {
    double kl = 0.0;
    for (double k : kl_estimates) kl += k;
    out.kl_mean = kl * inv_n;
    out.loss += kl_coef * out.kl_mean;
    out.grad_kl = kl_coef * inv_n;
  }
  return out;
}

struct CriticLoss {
  double loss = 0.0;
  std::vector<double> grad_values;  // 2 (V - R) / n
};

inline CriticLoss critic_loss(std::span<const double> values, std::span<const double> targets) {
  if (values.size() != targets.size()) throw InvariantError("values and targets must be aligned");
  CriticLoss out;
  out.grad_values.assign(values.size(), 0.0);
  if (values.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - targets[i];
    out.loss += d * d * inv_n;
    out.grad_values[i] = 2.0 * d * inv_n;
  }
  return out;
}

}  // namespace scout
