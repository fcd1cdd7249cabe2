#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "scout/corpus.hpp"
#include "scout/nn.hpp"

namespace scout::testing {

// Corpus from explicit 2-d angles (radians); query truth is left empty
// unless given.
inline Corpus angle_corpus(const std::vector<double>& paper_angles, const std::vector<std::vector<PaperId>>& refs,
                           const std::vector<double>& query_angles, std::vector<std::vector<PaperId>> truth = {}) {
  std::vector<Paper> papers;
  for (std::size_t i = 0; i < paper_angles.size(); ++i) {
    Paper p;
    p.id = static_cast<PaperId>(i);
    p.topic = {std::cos(paper_angles[i]), std::sin(paper_angles[i])};
    p.refs = i < refs.size() ? refs[i] : std::vector<PaperId>{};
    p.year_rank = static_cast<std::int32_t>(i);
    papers.push_back(p);
  }
  std::vector<Query> queries;
  for (std::size_t i = 0; i < query_angles.size(); ++i) {
    Query q;
    q.id = static_cast<QueryId>(i);
    q.topic = {std::cos(query_angles[i]), std::sin(query_angles[i])};
    if (i < truth.size()) q.truth = truth[i];
    queries.push_back(q);
  }
  return Corpus(2, 0, std::move(papers), std::move(queries));
}

// Angle whose relevance to angle 0 equals rho.
inline double angle_for_relevance(double rho) { return std::acos(2.0 * rho - 1.0); }

inline CorpusParams small_params(std::uint64_t seed = 7) {
  CorpusParams cp;
  cp.seed = seed;
  cp.n_papers = 300;
  cp.n_queries = 12;
  cp.dim = 8;
  cp.avg_refs = 5;
  cp.n_clusters = 6;
  return cp;
}

// Central-difference check of an analytic gradient; returns the largest
// relative error max|a - n| / max(1e-8, |a| + |n|) over coordinates whose
// magnitude is above `floor`, or the absolute error otherwise.
inline double gradient_error(std::vector<double>& x, const std::function<double()>& f,
                             const std::vector<double>& analytic, double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(numeric - analytic[i]);
    const double scale = std::abs(numeric) + std::abs(analytic[i]);
    worst = std::max(worst, scale > floor ? diff / scale : diff);
  }
  return worst;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace scout::testing
