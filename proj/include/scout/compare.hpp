#pragma once

// Summaries across metrics logs: final-window mean return, area under the
// return curve and per-seed wins, for runs sharing a step grid.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "scout/error.hpp"
#include "scout/text_io.hpp"
#include "scout/trainer.hpp"

namespace scout {

struct Series {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> steps;
  std::vector<double> returns;
};

// Groups rows by (algorithm, seed), ordered by step.
inline std::vector<Series> group_series(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::uint64_t>, std::vector<const MetricsRow*>> by;
  for (const MetricsRow& r : rows) by[{r.algorithm, r.seed}].push_back(&r);
  std::vector<Series> out;
  for (auto& [key, list] : by) {
    std::sort(list.begin(), list.end(), [](const MetricsRow* a, const MetricsRow* b) { return a->step < b->step; });
    Series s{key.first, key.second, {}, {}};
    for (const MetricsRow* r : list) {
      if (!s.steps.empty() && s.steps.back() == r->step) {
        throw AlignmentError("duplicate step " + std::to_string(r->step) + " for " + key.first + " seed " +
                             std::to_string(key.second));
      }
      s.steps.push_back(r->step);
      s.returns.push_back(r->mean_return);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline double final_window_mean(const Series& s, std::size_t window) {
  if (s.returns.empty()) throw AlignmentError("empty series for " + s.algorithm);
  const std::size_t w = std::min(std::max<std::size_t>(window, 1), s.returns.size());
  double sum = 0.0;
  for (std::size_t i = s.returns.size() - w; i < s.returns.size(); ++i) sum += s.returns[i];
  return sum / static_cast<double>(w);
}

// Unit-spaced area: the plain sum of per-step returns.
inline double area_under_curve(const Series& s) {
  double sum = 0.0;
  for (double r : s.returns) sum += r;
  return sum;
}

struct AlgorithmSummary {
  std::string algorithm;
  std::size_t seeds = 0;
  double final_mean = 0.0;  // averaged over seeds
  double auc = 0.0;  // averaged over seeds
  std::size_t wins = 0;  // seeds where this algorithm beats every other
};

struct PairDelta {
  std::string a;
  std::string b;
  std::size_t a_wins = 0;  // seeds where a's final window is strictly higher
  double mean_delta = 0.0;  // final window, a - b, averaged over seeds
};

struct Comparison {
  std::vector<AlgorithmSummary> algorithms;
  std::vector<PairDelta> pairs;
  std::vector<std::uint64_t> seeds;
};

inline Comparison compare_runs(const std::vector<MetricsRow>& rows, std::size_t window = 50) {
  const std::vector<Series> series = group_series(rows);
  std::vector<std::string> algos;
  std::vector<std::uint64_t> seeds;
  for (const Series& s : series) {
    if (std::find(algos.begin(), algos.end(), s.algorithm) == algos.end()) algos.push_back(s.algorithm);
    if (std::find(seeds.begin(), seeds.end(), s.seed) == seeds.end()) seeds.push_back(s.seed);
  }
  std::sort(seeds.begin(), seeds.end());
  if (algos.size() < 2) throw AlignmentError("compare needs at least two algorithms");
  std::map<std::pair<std::string, std::uint64_t>, const Series*> at;
  for (const Series& s : series) at[{s.algorithm, s.seed}] = &s;
  for (const auto& a : algos) {
    for (auto seed : seeds) {
      const auto it = at.find({a, seed});
      if (it == at.end()) throw AlignmentError(a + " has no run for seed " + std::to_string(seed));
      if (it->second->steps != series.front().steps) {
        throw AlignmentError("step grid of " + a + " seed " + std::to_string(seed) + " differs from " +
                             series.front().algorithm + " seed " + std::to_string(series.front().seed));
      }
    }
  }

  Comparison c;
  c.seeds = seeds;
  for (const auto& a : algos) {
    AlgorithmSummary sum{a, seeds.size(), 0.0, 0.0, 0};
    for (auto seed : seeds) {
      const Series& s = *at[{a, seed}];
      const double fw = final_window_mean(s, window);
      sum.final_mean += fw;
      sum.auc += area_under_curve(s);
      bool best = true;
      for (const auto& o : algos) {
        if (o != a && !(fw > final_window_mean(*at[{o, seed}], window))) best = false;
      }
      sum.wins += best ? 1 : 0;
    }
    sum.final_mean /= static_cast<double>(seeds.size());
    sum.auc /= static_cast<double>(seeds.size());
    c.algorithms.push_back(sum);
  }
  for (std::size_t i = 0; i < algos.size(); ++i) {
    for (std::size_t j = i + 1; j < algos.size(); ++j) {
      PairDelta d{algos[i], algos[j], 0, 0.0};
      for (auto seed : seeds) {
        const double x = final_window_mean(*at[{algos[i], seed}], window);
        const double y = final_window_mean(*at[{algos[j], seed}], window);
        d.a_wins += x > y ? 1 : 0;
        d.mean_delta += x - y;
      }
      d.mean_delta /= static_cast<double>(seeds.size());
      c.pairs.push_back(d);
    }
  }
  return c;
}

inline void write_comparison(std::ostream& out, const Comparison& c) {
  out << "algorithm,seeds,final_mean,auc,wins\n";
  for (const AlgorithmSummary& a : c.algorithms) {
    out << a.algorithm << ',' << a.seeds << ',' << text::format_real(a.final_mean) << ','
        << text::format_real(a.auc) << ',' << a.wins << '\n';
  }
  out << "\na,b,a_wins,mean_delta\n";
  for (const PairDelta& d : c.pairs) {
    out << d.a << ',' << d.b << ',' << d.a_wins << ',' << text::format_real(d.mean_delta) << '\n';
  }
}

}  // namespace scout
