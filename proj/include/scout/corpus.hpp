#pragma once

// Synthetic scholarly universe: clustered topic vectors, a similarity-biased
// citation DAG and a query set with ground-truth relevant papers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "scout/error.hpp"
#include "scout/text_io.hpp"

namespace scout {

using PaperId = std::int32_t;
using QueryId = std::int32_t;

inline constexpr PaperId kNoPaper = -1;

struct Paper {
  PaperId id = 0;
  std::vector<double> topic;
  std::vector<PaperId> refs;
  std::int32_t year_rank = 0;

  bool operator==(const Paper&) const = default;
};

struct Query {
  QueryId id = 0;
  std::vector<double> topic;
  std::vector<PaperId> truth;  // ascending ids

  bool operator==(const Query&) const = default;
};

struct CorpusParams {
  std::uint64_t seed = 7;
  std::int64_t n_papers = 2000;
  std::int64_t n_queries = 60;
  std::int64_t dim = 16;
  std::int64_t avg_refs = 8;
  std::int64_t n_clusters = 20;
  std::int64_t n_years = 20;
  double truth_threshold = 0.85;
  double cluster_spread = 1.0;
  double query_spread = 0.6;
  double citation_sharpness = 8.0;
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(std::int64_t dim, std::uint64_t seed, std::vector<Paper> papers, std::vector<Query> queries)
      : dim_(dim), seed_(seed), papers_(std::move(papers)), queries_(std::move(queries)) {
    validate();
  }

  std::int64_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return papers_.size(); }
  std::span<const Paper> papers() const { return papers_; }
  std::span<const Query> queries() const { return queries_; }

  const Paper& paper(PaperId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= papers_.size()) {
      throw NotFoundError("unknown paper id " + std::to_string(id));
    }
    return papers_[static_cast<std::size_t>(id)];
  }

  const Query& query(QueryId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= queries_.size()) {
      throw NotFoundError("unknown query id " + std::to_string(id));
    }
    return queries_[static_cast<std::size_t>(id)];
  }

  bool contains(PaperId id) const { return id >= 0 && static_cast<std::size_t>(id) < papers_.size(); }

  std::size_t max_out_degree() const { return max_out_degree_; }
  double topic_norm(PaperId id) const { return topic_norms_[static_cast<std::size_t>(id)]; }

  bool operator==(const Corpus& o) const {
    return dim_ == o.dim_ && seed_ == o.seed_ && papers_ == o.papers_ && queries_ == o.queries_;
  }

 private:
  void validate();

  std::int64_t dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Paper> papers_;
  std::vector<Query> queries_;
  std::size_t max_out_degree_ = 0;
  std::vector<double> topic_norms_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvariantError("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline void Corpus::validate() {
  max_out_degree_ = 0;
  topic_norms_.clear();
  for (std::size_t i = 0; i < papers_.size(); ++i) {
    const Paper& p = papers_[i];
    if (p.id != static_cast<PaperId>(i)) throw InvariantError("paper ids must be dense 0..N-1");
    if (static_cast<std::int64_t>(p.topic.size()) != dim_) throw InvariantError("paper topic has wrong dimension");
    std::vector<PaperId> sorted = p.refs;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvariantError("duplicate reference in paper " + std::to_string(p.id));
    }
    for (PaperId r : p.refs) {
      if (r == p.id) throw InvariantError("self reference in paper " + std::to_string(p.id));
      if (r < 0 || static_cast<std::size_t>(r) >= papers_.size()) {
        throw InvariantError("dangling reference in paper " + std::to_string(p.id));
      }
    }
    max_out_degree_ = std::max(max_out_degree_, p.refs.size());
    topic_norms_.push_back(norm(p.topic));
  }
  for (const Query& q : queries_) {
    if (static_cast<std::int64_t>(q.topic.size()) != dim_) throw InvariantError("query topic has wrong dimension");
  }
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double d = dot(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return d / (na * nb);
}

inline void normalize_in_place(std::vector<double>& v) {
  const double n = norm(v);
  if (n == 0.0) throw NumericError("cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

// Probability-like relevance in [0,1]: (cos + 1) / 2.
inline double relevance(std::span<const double> a, std::span<const double> b) {
  return std::clamp((cosine(a, b) + 1.0) / 2.0, 0.0, 1.0);
}

inline double relevance(const Paper& p, const Query& q) { return relevance(p.topic, q.topic); }

// Exact top-`limit` retrieval by cosine similarity, ties by ascending id.
inline std::vector<PaperId> search_backend(const Corpus& corpus, std::span<const double> probe, std::size_t limit) {
  if (limit < 1) throw InvariantError("search limit must be >= 1");
  if (static_cast<std::int64_t>(probe.size()) != corpus.dim()) throw InvariantError("probe has wrong dimension");
  const double pn = norm(probe);
  if (!(pn > 0.0) || !std::isfinite(pn)) throw InvalidProbeError("probe must have finite nonzero norm");

  struct Hit {
    double score;
    PaperId id;
  };
  std::vector<Hit> hits;
  hits.reserve(corpus.size());
  // Same expression as cosine(), with the paper norms cached.
  for (const Paper& p : corpus.papers()) {
    const double na = corpus.topic_norm(p.id);
    hits.push_back({na == 0.0 ? 0.0 : dot(p.topic, probe) / (na * pn), p.id});
  }
  const std::size_t n = std::min(limit, hits.size());
  auto better = [](const Hit& a, const Hit& b) { return a.score > b.score || (a.score == b.score && a.id < b.id); };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
  std::vector<PaperId> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = hits[i].id;
  return out;
}

inline const std::vector<PaperId>& references(const Corpus& corpus, PaperId id) { return corpus.paper(id).refs; }

namespace detail {

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::int64_t dim) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = n01(rng);
  return v;
}

// Center plus isotropic noise whose expected norm is `spread`.
inline std::vector<double> perturbed_unit(std::mt19937_64& rng, std::span<const double> center, double spread) {
  std::vector<double> v = gaussian_vector(rng, static_cast<std::int64_t>(center.size()));
  const double scale = spread / std::sqrt(static_cast<double>(center.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + scale * v[i];
  normalize_in_place(v);
  return v;
}

}  // namespace detail

inline Corpus build_corpus(const CorpusParams& cp) {
  if (cp.n_papers < 2) throw ConfigError("n_papers must be >= 2 (got " + std::to_string(cp.n_papers) + ")");
  if (cp.dim < 2) throw ConfigError("dim must be >= 2 (got " + std::to_string(cp.dim) + ")");
  if (cp.avg_refs < 0 || cp.avg_refs >= cp.n_papers) {
    throw ConfigError("avg_refs must be in [0, n_papers) (got " + std::to_string(cp.avg_refs) + ")");
  }
  if (cp.n_queries < 0) throw ConfigError("n_queries must be >= 0");
  if (cp.n_clusters < 1) throw ConfigError("n_clusters must be >= 1");
  if (cp.n_years < 1) throw ConfigError("n_years must be >= 1");
  if (!(cp.truth_threshold >= 0.0 && cp.truth_threshold <= 1.0)) throw ConfigError("truth_threshold must be in [0,1]");

  std::mt19937_64 rng(cp.seed);
  std::vector<std::vector<double>> centers;
  for (std::int64_t g = 0; g < cp.n_clusters; ++g) {
    auto c = detail::gaussian_vector(rng, cp.dim);
    normalize_in_place(c);
    centers.push_back(std::move(c));
  }
  std::uniform_int_distribution<std::size_t> pick_cluster(0, centers.size() - 1);

  const auto n = static_cast<std::size_t>(cp.n_papers);
  std::vector<Paper> papers(n);
  for (std::size_t i = 0; i < n; ++i) {
    papers[i].id = static_cast<PaperId>(i);
    papers[i].year_rank = static_cast<std::int32_t>((i * static_cast<std::size_t>(cp.n_years)) / n);
    papers[i].topic = detail::perturbed_unit(rng, centers[pick_cluster(rng)], cp.cluster_spread);
  }

  // Citations point only to strictly older papers, weighted by similarity.
  std::poisson_distribution<int> ref_count(static_cast<double>(cp.avg_refs));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> weight;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t older = 0;
    while (older < n && papers[older].year_rank < papers[i].year_rank) ++older;
    const int want = cp.avg_refs > 0 ? ref_count(rng) : 0;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(want), older);
    if (k == 0) continue;
    weight.assign(older, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < older; ++j) {
      weight[j] = std::pow(relevance(papers[i].topic, papers[j].topic), cp.citation_sharpness) + 1e-12;
      total += weight[j];
    }
    for (std::size_t r = 0; r < k; ++r) {
      double x = u01(rng) * total;
      std::size_t chosen = older - 1;
      for (std::size_t j = 0; j < older; ++j) {
        if (weight[j] <= 0.0) continue;
        x -= weight[j];
        if (x <= 0.0) {
          chosen = j;
          break;
        }
      }
      while (weight[chosen] <= 0.0) --chosen;  // rounding fallback
      papers[i].refs.push_back(static_cast<PaperId>(chosen));
      total -= weight[chosen];
      weight[chosen] = 0.0;
    }
  }

  std::vector<Query> queries(static_cast<std::size_t>(cp.n_queries));
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    Query& q = queries[qi];
    q.id = static_cast<QueryId>(qi);
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 10000) throw ConfigError("truth_threshold too strict: no query with a nonempty truth set");
      q.topic = detail::perturbed_unit(rng, centers[pick_cluster(rng)], cp.query_spread);
      q.truth.clear();
      for (const Paper& p : papers) {
        if (relevance(p.topic, q.topic) >= cp.truth_threshold) q.truth.push_back(p.id);
      }
      if (!q.truth.empty()) break;
    }
  }
  return Corpus(cp.dim, cp.seed, std::move(papers), std::move(queries));
}

inline Corpus build_corpus(std::uint64_t seed, std::int64_t n_papers, std::int64_t n_queries, std::int64_t dim,
                           std::int64_t avg_refs) {
  CorpusParams cp;
  cp.seed = seed;
  cp.n_papers = n_papers;
  cp.n_queries = n_queries;
  cp.dim = dim;
  cp.avg_refs = avg_refs;
  return build_corpus(cp);
}

// Line format:
//   corpus <dim> <n_papers> <n_queries> <seed>
//   P <id> <year_rank> <topic x dim> | <refs...>
//   Q <id> <topic x dim> | <truth...>
inline void write_corpus(std::ostream& out, const Corpus& c) {
  out << "corpus " << c.dim() << ' ' << c.size() << ' ' << c.queries().size() << ' ' << c.seed() << '\n';
  for (const Paper& p : c.papers()) {
    out << "P " << p.id << ' ' << p.year_rank;
    for (double x : p.topic) out << ' ' << text::format_real(x);
    out << " |";
    for (PaperId r : p.refs) out << ' ' << r;
    out << '\n';
  }
  for (const Query& q : c.queries()) {
    out << "Q " << q.id;
    for (double x : q.topic) out << ' ' << text::format_real(x);
    out << " |";
    for (PaperId t : q.truth) out << ' ' << t;
    out << '\n';
  }
}

inline Corpus read_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("corpus file is empty");
  auto head = text::tokens(line);
  if (head.size() != 5 || head[0] != "corpus") throw FormatError("bad corpus header: " + line);
  const auto dim = text::parse_int(head[1]);
  const auto n_papers = text::parse_int(head[2]);
  const auto n_queries = text::parse_int(head[3]);
  const auto seed = static_cast<std::uint64_t>(std::stoull(std::string(head[4])));
  if (dim < 1 || n_papers < 0 || n_queries < 0) throw FormatError("bad corpus header: " + line);

  std::vector<Paper> papers;
  std::vector<Query> queries;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto tok = text::tokens(line);
    const bool is_paper = tok[0] == "P";
    if (!is_paper && tok[0] != "Q") throw FormatError("line " + std::to_string(lineno) + ": unknown record");
    const std::size_t fixed = is_paper ? 3 : 2;
    if (tok.size() < fixed + static_cast<std::size_t>(dim) + 1 || tok[fixed + static_cast<std::size_t>(dim)] != "|") {
      throw FormatError("line " + std::to_string(lineno) + ": malformed record");
    }
    std::vector<double> topic;
    for (std::size_t i = 0; i < static_cast<std::size_t>(dim); ++i) topic.push_back(text::parse_real(tok[fixed + i]));
    std::vector<PaperId> ids;
    for (std::size_t i = fixed + static_cast<std::size_t>(dim) + 1; i < tok.size(); ++i) {
      ids.push_back(static_cast<PaperId>(text::parse_int(tok[i])));
    }
    if (is_paper) {
      Paper p;
      p.id = static_cast<PaperId>(text::parse_int(tok[1]));
      p.year_rank = static_cast<std::int32_t>(text::parse_int(tok[2]));
      p.topic = std::move(topic);
      p.refs = std::move(ids);
      papers.push_back(std::move(p));
    } else {
      Query q;
      q.id = static_cast<QueryId>(text::parse_int(tok[1]));
      q.topic = std::move(topic);
      q.truth = std::move(ids);
      queries.push_back(std::move(q));
    }
  }
  if (static_cast<std::int64_t>(papers.size()) != n_papers || static_cast<std::int64_t>(queries.size()) != n_queries) {
    throw FormatError("corpus record counts do not match header");
  }
  return Corpus(dim, seed, std::move(papers), std::move(queries));
}

inline void save_corpus(const std::string& path, const Corpus& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError("cannot open for writing: " + path);
  write_corpus(out, c);
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("corpus file not found: " + path);
  return read_corpus(in);
}

}  // namespace scout
