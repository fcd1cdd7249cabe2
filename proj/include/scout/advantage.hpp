#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "scout/error.hpp"

namespace scout {

// Discounted reward-to-go: R_t = r_t + gamma * R_{t+1}, R_{T-1} = r_{T-1}.
inline std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw InvariantError("compute_returns needs at least one reward");
  std::vector<double> r(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    r[i] = acc;
  }
  return r;
}

// Generalized advantage estimation. `values` holds V(x_0..x_T) with the
// terminal entry V(x_T), which is 0 for a finished episode.
inline std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                                       double lambda) {
  if (values.size() != rewards.size() + 1) throw InvariantError("compute_gae needs len(values) == len(rewards) + 1");
  std::vector<double> adv(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

// Welford accumulator with Chan's parallel merge.
struct RunningStats {
  std::int64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
  }

  void merge(const RunningStats& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const auto n = static_cast<double>(count + o.count);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.count) / n;
    m2 += o.m2 + d * d * static_cast<double>(count) * static_cast<double>(o.count) / n;
    count += o.count;
  }

  // Population variance.
  double variance() const { return count > 0 ? std::max(0.0, m2 / static_cast<double>(count)) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
};

inline constexpr double kNormEpsilon = 1e-8;

// Folds every value into the stats first, then standardizes.
inline std::vector<double> normalize_returns(RunningStats& stats, std::span<const double> returns) {
  for (double r : returns) stats.push(r);
  const double sd = stats.stddev() + kNormEpsilon;
  std::vector<double> out(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) out[i] = (returns[i] - stats.mean) / sd;
  return out;
}

inline double denormalize(const RunningStats& stats, double v) {
  return v * (stats.stddev() + kNormEpsilon) + stats.mean;
}

}  // namespace scout
