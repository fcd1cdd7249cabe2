#pragma once

// Retrieval-quality metrics over finished episodes: Recall@k, precision /
// recall / F1 after a relevance threshold, and recall as tool calls
// accumulate. Recall@k over several queries is macro-averaged by callers.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scout/corpus.hpp"
#include "scout/error.hpp"
#include "scout/nn.hpp"
#include "scout/policy.hpp"
#include "scout/rollout.hpp"
#include "scout/text_io.hpp"

namespace scout {

struct RankedPaper {
  PaperId id = kNoPaper;
  double score = 0.0;

  bool operator==(const RankedPaper&) const = default;
};

struct RetrievalResult {
  std::vector<RankedPaper> ranked;  // score desc, id asc
  std::vector<PaperId> truth;  // ascending
  std::vector<std::int64_t> cumulative_calls;  // after each turn

  // Sorts and validates; throws on duplicate ids.
  static RetrievalResult from(std::vector<RankedPaper> papers, std::vector<PaperId> truth,
                              std::vector<std::int64_t> cumulative_calls = {}) {
    std::sort(papers.begin(), papers.end(), [](const RankedPaper& a, const RankedPaper& b) {
      return a.score > b.score || (a.score == b.score && a.id < b.id);
    });
    for (std::size_t i = 1; i < papers.size(); ++i) {
      if (papers[i].id == papers[i - 1].id) throw InvariantError("duplicate paper in retrieval result");
    }
    std::sort(truth.begin(), truth.end());
    truth.erase(std::unique(truth.begin(), truth.end()), truth.end());
    return {std::move(papers), std::move(truth), std::move(cumulative_calls)};
  }
};

inline constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();

inline std::size_t count_in_truth(std::span<const PaperId> truth, std::span<const RankedPaper> papers) {
  std::size_t hits = 0;
  for (const RankedPaper& p : papers) {
    if (std::binary_search(truth.begin(), truth.end(), p.id)) ++hits;
  }
  return hits;
}

// |top-k ∩ truth| / |truth|; k past the end uses the whole list.
inline double recall_at_k(const RetrievalResult& r, std::size_t k) {
  if (k < 1) throw InvariantError("k must be >= 1");
  if (r.truth.empty()) throw MetricError("recall is undefined for an empty truth set");
  const std::size_t n = std::min(k, r.ranked.size());
  const std::size_t hits = count_in_truth(r.truth, std::span<const RankedPaper>(r.ranked).first(n));
  return static_cast<double>(hits) / static_cast<double>(r.truth.size());
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t retained = 0;
  std::size_t hits = 0;
};

// Retains papers with score >= threshold (ties kept).
inline PRF post_threshold_prf(const RetrievalResult& r, double threshold = 0.5) {
  if (r.truth.empty()) throw MetricError("precision/recall undefined for an empty truth set");
  PRF out;
  for (const RankedPaper& p : r.ranked) {
    if (p.score < threshold) continue;
    ++out.retained;
    if (std::binary_search(r.truth.begin(), r.truth.end(), p.id)) ++out.hits;
  }
  out.precision = out.retained == 0 ? 0.0 : static_cast<double>(out.hits) / static_cast<double>(out.retained);
  out.recall = static_cast<double>(out.hits) / static_cast<double>(r.truth.size());
  out.f1 = out.precision + out.recall == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

// What an episode contributes to its pool, turn by turn.
struct EpisodeLog {
  QueryId query = 0;
  std::vector<PaperId> seed_ids;
  std::vector<std::size_t> calls_per_turn;
  std::vector<std::vector<PaperId>> accepted_per_turn;
};

inline EpisodeLog episode_log(const Trajectory& t) {
  EpisodeLog log;
  log.query = t.query;
  log.seed_ids = t.seed_ids;
  for (const TurnRecord& r : t.turns) {
    log.calls_per_turn.push_back(r.sample.calls.size());
    log.accepted_per_turn.push_back(r.accepted);
  }
  return log;
}

// Replays the log into a final pool ranked by relevance.
inline RetrievalResult retrieval_result(const Corpus& corpus, const EpisodeLog& log) {
  const Query& q = corpus.query(log.query);
  std::set<PaperId> pool(log.seed_ids.begin(), log.seed_ids.end());
  std::vector<std::int64_t> cum;
  std::int64_t calls = 0;
  for (std::size_t t = 0; t < log.accepted_per_turn.size(); ++t) {
    pool.insert(log.accepted_per_turn[t].begin(), log.accepted_per_turn[t].end());
    calls += static_cast<std::int64_t>(log.calls_per_turn[t]);
    cum.push_back(calls);
  }
  std::vector<RankedPaper> ranked;
  for (PaperId id : pool) ranked.push_back({id, relevance(corpus.paper(id), q)});
  return RetrievalResult::from(std::move(ranked), q.truth, std::move(cum));
}

struct CurvePoint {
  std::int64_t calls = 0;
  double recall = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

// (cumulative calls, recall of the pool so far). Starts at (0, seed recall);
// turns without calls add no point.
inline std::vector<CurvePoint> efficiency_curve(const Corpus& corpus, const EpisodeLog& log) {
  const Query& q = corpus.query(log.query);
  if (q.truth.empty()) throw MetricError("recall is undefined for an empty truth set");
  std::set<PaperId> pool(log.seed_ids.begin(), log.seed_ids.end());
  auto recall = [&] {
    std::size_t hits = 0;
    for (PaperId id : q.truth) hits += pool.count(id);
    return static_cast<double>(hits) / static_cast<double>(q.truth.size());
  };
  std::vector<CurvePoint> out{{0, recall()}};
  std::int64_t calls = 0;
  for (std::size_t t = 0; t < log.accepted_per_turn.size(); ++t) {
    pool.insert(log.accepted_per_turn[t].begin(), log.accepted_per_turn[t].end());
    if (log.calls_per_turn[t] == 0) continue;
    calls += static_cast<std::int64_t>(log.calls_per_turn[t]);
    out.push_back({calls, recall()});
  }
  return out;
}

struct EvalRow {
  QueryId query_id = 0;
  std::string algorithm;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double recall_5 = 0.0;
  double recall_10 = 0.0;
  double recall_25 = 0.0;
  double recall_all = 0.0;
  std::int64_t total_calls = 0;

  bool operator==(const EvalRow&) const = default;
};

inline EvalRow eval_row(const RetrievalResult& r, QueryId query, const std::string& algorithm) {
  EvalRow row;
  row.query_id = query;
  row.algorithm = algorithm;
  const PRF prf = post_threshold_prf(r, 0.5);
  row.precision = prf.precision;
  row.recall = prf.recall;
  row.f1 = prf.f1;
  row.recall_5 = recall_at_k(r, 5);
  row.recall_10 = recall_at_k(r, 10);
  row.recall_25 = recall_at_k(r, 25);
  row.recall_all = recall_at_k(r, std::max<std::size_t>(1, r.ranked.size()));
  row.total_calls = r.cumulative_calls.empty() ? 0 : r.cumulative_calls.back();
  return row;
}

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::vector<CurvePoint>> curves;  // aligned with rows
};

// Runs one episode per query (greedy when temperature == 0) and scores it.
inline EvalReport evaluate_policy(const Corpus& corpus, const EnvConfig& env_cfg, const PolicySpec& spec,
                                  const nn::ParamSet& actor, std::span<const QueryId> queries,
                                  const std::string& algorithm, std::uint64_t seed, double temperature = 0.0) {
  EvalReport rep;
  if (queries.empty()) return rep;
  const std::vector<Trajectory> trajs =
      collect_batch(corpus, env_cfg, spec, actor, nullptr, queries, seed, temperature);
  for (const Trajectory& t : trajs) {
    const EpisodeLog log = episode_log(t);
    rep.rows.push_back(eval_row(retrieval_result(corpus, log), t.query, algorithm));
    rep.curves.push_back(efficiency_curve(corpus, log));
  }
  return rep;
}

inline constexpr const char* kEvalHeader =
    "query_id,algorithm,precision,recall,f1,recall@5,recall@10,recall@25,recall@all,total_calls";

inline void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << kEvalHeader << '\n';
  for (const EvalRow& r : rows) {
    out << r.query_id << ',' << r.algorithm << ',' << text::format_real(r.precision) << ','
        << text::format_real(r.recall) << ',' << text::format_real(r.f1) << ',' << text::format_real(r.recall_5) << ','
        << text::format_real(r.recall_10) << ',' << text::format_real(r.recall_25) << ','
        << text::format_real(r.recall_all) << ',' << r.total_calls << '\n';
  }
}

inline constexpr const char* kEfficiencyHeader = "query_id,algorithm,calls,recall";

inline void write_efficiency_csv(std::ostream& out, const EvalReport& rep) {
  out << kEfficiencyHeader << '\n';
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    for (const CurvePoint& p : rep.curves[i]) {
      out << rep.rows[i].query_id << ',' << rep.rows[i].algorithm << ',' << p.calls << ','
          << text::format_real(p.recall) << '\n';
    }
  }
}

}  // namespace scout
