#pragma once

// Paper-pool search environment: Search/Expand tool execution, novelty and
// threshold filtering of retrieved candidates, top-k relevance reward with a
// repetition penalty, dual-list observation and stagnation termination.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scout/corpus.hpp"
#include "scout/error.hpp"

namespace scout {

struct EnvConfig {
  double tau = 0.01;  // minimum relevance for acceptance
  std::int64_t k = 3;  // rewarded papers per turn
  double eta = 0.5;  // repetition penalty
  std::int64_t l_expanded = 10;
  std::int64_t l_unexpanded = 10;
  std::int64_t stagnation_limit = 3;
  std::int64_t max_turns = 12;
  std::int64_t max_calls = 3;
  std::int64_t search_limit = 10;
  std::int64_t n_seed = 5;

  void validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0,1]");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
    if (l_expanded < 0) throw ConfigError("l_expanded must be >= 0");
    if (l_unexpanded < 0) throw ConfigError("l_unexpanded must be >= 0");
    if (stagnation_limit < 1) throw ConfigError("stagnation_limit must be >= 1");
    if (max_turns < 1) throw ConfigError("max_turns must be >= 1");
    if (max_calls < 0) throw ConfigError("max_calls must be >= 0");
    if (search_limit < 1) throw ConfigError("search_limit must be >= 1");
    if (n_seed < 0) throw ConfigError("n_seed must be >= 0");
  }
};

struct PoolEntry {
  PaperId paper_id = kNoPaper;
  double score = 0.0;
  bool expanded = false;
  std::int64_t arrival_turn = 0;

  bool operator==(const PoolEntry&) const = default;
};

struct PaperPool {
  std::map<PaperId, PoolEntry> entries;
  QueryId query_id = 0;
  std::int64_t turn = 0;
  std::int64_t stagnant_turns = 0;
  double last_reward = 0.0;

  bool contains(PaperId id) const { return entries.count(id) != 0; }
  std::size_t size() const { return entries.size(); }
  bool operator==(const PaperPool&) const = default;
};

enum class ToolKind { Search, Expand };

struct ToolCall {
  ToolKind kind = ToolKind::Search;
  std::vector<double> probe;  // Search
  PaperId paper = kNoPaper;  // Expand

  static ToolCall search(std::vector<double> p) { return {ToolKind::Search, std::move(p), kNoPaper}; }
  static ToolCall expand(PaperId id) { return {ToolKind::Expand, {}, id}; }
  bool operator==(const ToolCall&) const = default;
};

struct History {
  std::vector<std::vector<double>> past_search_probes;
  std::set<PaperId> expanded_ids;
  std::int64_t expand_calls = 0;

  bool seen(const ToolCall& c) const {
    if (c.kind == ToolKind::Expand) return expanded_ids.count(c.paper) != 0;
    return std::find(past_search_probes.begin(), past_search_probes.end(), c.probe) != past_search_probes.end();
  }

  void record(const ToolCall& c) {
    if (c.kind == ToolKind::Expand) {
      expanded_ids.insert(c.paper);
      ++expand_calls;
    } else {
      past_search_probes.push_back(c.probe);
    }
  }
};

struct SlotSummary {
  PaperId paper_id = kNoPaper;
  double score = 0.0;
  std::size_t degree = 0;  // out-degree (number of references)
  std::int64_t arrival_turn = 0;

  bool operator==(const SlotSummary&) const = default;
};

struct PoolStats {
  std::size_t pool_size = 0;
  std::int64_t turn = 0;
  std::int64_t stagnant_turns = 0;
  double last_reward = 0.0;

  bool operator==(const PoolStats&) const = default;
};

struct Observation {
  std::vector<SlotSummary> expanded_list;
  std::vector<SlotSummary> unexpanded_list;
  PoolStats pool_stats;
  std::int64_t search_calls = 0;
  std::int64_t expand_calls = 0;

  bool operator==(const Observation&) const = default;
};

enum class CallOutcome { Executed, Repeated, InvalidTarget };

struct CallLog {
  CallOutcome outcome = CallOutcome::Executed;
  std::size_t raw_results = 0;

  bool operator==(const CallLog&) const = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  std::vector<PaperId> accepted;  // ascending ids
  bool done = false;
  std::vector<CallLog> info;
  std::vector<PaperId> dropped;  // unknown ids removed by the filter

  bool operator==(const StepResult&) const = default;
};

// V = { p in raw : rho(p) >= tau and p not in pool }, deduplicated, ascending.
inline std::vector<PaperId> filter_candidates(std::span<const PaperId> raw, const PaperPool& pool, const Corpus& corpus,
                                              double tau, std::vector<PaperId>* dropped = nullptr) {
  const Query& q = corpus.query(pool.query_id);
  std::set<PaperId> out;
  for (PaperId id : raw) {
    if (!corpus.contains(id)) {
      if (dropped) dropped->push_back(id);
      continue;
    }
    if (pool.contains(id)) continue;
    if (relevance(corpus.paper(id), q) >= tau) out.insert(id);
  }
  return {out.begin(), out.end()};
}

// Calls whose key was already seen, with history updated after each call.
inline std::int64_t count_repeats(std::span<const ToolCall> calls, const History& history) {
  History h = history;
  std::int64_t n = 0;
  for (const ToolCall& c : calls) {
    if (h.seen(c)) ++n;
    h.record(c);
  }
  return n;
}

// Sum of the k best accepted scores minus eta per repeated call.
// `extra_penalized` counts calls that were skipped as invalid.
inline double compute_reward(std::span<const double> accepted_scores, std::span<const ToolCall> calls,
                             const History& history, std::int64_t k, double eta, std::int64_t extra_penalized = 0) {
  if (k < 1) throw InvariantError("k must be >= 1");
  std::vector<double> s(accepted_scores.begin(), accepted_scores.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  const std::size_t take = std::min<std::size_t>(s.size(), static_cast<std::size_t>(k));
  double gain = 0.0;
  for (std::size_t i = 0; i < take; ++i) gain += s[i];
  const auto repeats = count_repeats(calls, history) + extra_penalized;
  return gain - eta * static_cast<double>(repeats);
}

inline Observation build_observation(const PaperPool& pool, const History& history, const Corpus& corpus,
                                     std::size_t l_expanded, std::size_t l_unexpanded) {
  std::vector<SlotSummary> expanded;
  std::vector<SlotSummary> unexpanded;
  for (const auto& [id, e] : pool.entries) {
    SlotSummary s{id, e.score, corpus.paper(id).refs.size(), e.arrival_turn};
    (e.expanded ? expanded : unexpanded).push_back(s);
  }
  auto by_score = [](const SlotSummary& a, const SlotSummary& b) {
    return a.score > b.score || (a.score == b.score && a.paper_id < b.paper_id);
  };
  auto top = [&](std::vector<SlotSummary>& v, std::size_t limit) {
    const std::size_t n = std::min(limit, v.size());
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), v.end(), by_score);
    v.resize(n);
  };
  top(expanded, l_expanded);
  top(unexpanded, l_unexpanded);

  Observation o;
  o.expanded_list = std::move(expanded);
  o.unexpanded_list = std::move(unexpanded);
  o.pool_stats = {pool.size(), pool.turn, pool.stagnant_turns, pool.last_reward};
  o.search_calls = static_cast<std::int64_t>(history.past_search_probes.size());
  o.expand_calls = history.expand_calls;
  return o;
}

// One episode over a shared read-only corpus. Not thread-safe; use one
// instance per rollout.
class Environment {
 public:
  Environment(const Corpus& corpus, EnvConfig cfg) : corpus_(&corpus), cfg_(cfg) { cfg_.validate(); }

  Observation reset(QueryId query_id, std::uint64_t rng_seed = 0) {
    const Query& q = corpus_->query(query_id);
    pool_ = PaperPool{};
    pool_.query_id = query_id;
    history_ = History{};
    done_ = false;
    rng_seed_ = rng_seed;
    if (cfg_.n_seed > 0) {
      for (PaperId id : search_backend(*corpus_, q.topic, static_cast<std::size_t>(cfg_.n_seed))) {
        pool_.entries[id] = PoolEntry{id, relevance(corpus_->paper(id), q), false, 0};
      }
    }
    started_ = true;
    return observe();
  }

  StepResult step(std::span<const ToolCall> calls) {
    if (!started_) throw EpisodeAbort("step before reset");
    if (done_) throw EpisodeAbort("step after episode end");
    if (static_cast<std::int64_t>(calls.size()) > cfg_.max_calls) {
      throw EpisodeAbort("too many calls in one turn: " + std::to_string(calls.size()));
    }
    for (const ToolCall& c : calls) {
      if (c.kind == ToolKind::Search && static_cast<std::int64_t>(c.probe.size()) != corpus_->dim()) {
        throw EpisodeAbort("search probe has wrong dimension");
      }
    }

    const Query& q = corpus_->query(pool_.query_id);
    const History before = history_;
    StepResult res;
    std::vector<PaperId> raw;
    std::vector<ToolCall> valid;
    std::int64_t invalid = 0;
    for (const ToolCall& c : calls) {
      CallLog log;
      if (c.kind == ToolKind::Expand && !pool_.contains(c.paper)) {
        log.outcome = CallOutcome::InvalidTarget;
        ++invalid;
        res.info.push_back(log);
        continue;
      }
      if (history_.seen(c)) log.outcome = CallOutcome::Repeated;
      std::vector<PaperId> got;
      if (c.kind == ToolKind::Search) {
        try {
          got = search_backend(*corpus_, c.probe, static_cast<std::size_t>(cfg_.search_limit));
        } catch (const InvalidProbeError& e) {
          throw EpisodeAbort(std::string("malformed search call: ") + e.what());
        }
      } else {
        got = references(*corpus_, c.paper);
        pool_.entries[c.paper].expanded = true;
      }
      log.raw_results = got.size();
      raw.insert(raw.end(), got.begin(), got.end());
      history_.record(c);
      valid.push_back(c);
      res.info.push_back(log);
    }

    res.accepted = filter_candidates(raw, pool_, *corpus_, cfg_.tau, &res.dropped);
    std::vector<double> scores;
    scores.reserve(res.accepted.size());
    for (PaperId id : res.accepted) scores.push_back(relevance(corpus_->paper(id), q));
    res.reward = compute_reward(scores, valid, before, cfg_.k, cfg_.eta, invalid);

    pool_.turn += 1;
    for (std::size_t i = 0; i < res.accepted.size(); ++i) {
      pool_.entries[res.accepted[i]] = PoolEntry{res.accepted[i], scores[i], false, pool_.turn};
    }
    pool_.stagnant_turns = res.accepted.empty() ? pool_.stagnant_turns + 1 : 0;
    pool_.last_reward = res.reward;
    done_ = pool_.stagnant_turns >= cfg_.stagnation_limit || pool_.turn >= cfg_.max_turns;
    res.done = done_;
    res.observation = observe();
    return res;
  }

  Observation observe() const {
    return build_observation(pool_, history_, *corpus_, static_cast<std::size_t>(cfg_.l_expanded),
                             static_cast<std::size_t>(cfg_.l_unexpanded));
  }

  const PaperPool& pool() const { return pool_; }
  const History& history() const { return history_; }
  const EnvConfig& config() const { return cfg_; }
  const Corpus& corpus() const { return *corpus_; }
  const Query& query() const { return corpus_->query(pool_.query_id); }
  bool done() const { return done_; }
  std::uint64_t rng_seed() const { return rng_seed_; }

 private:
  const Corpus* corpus_;
  EnvConfig cfg_;
  PaperPool pool_;
  History history_;
  bool done_ = false;
  bool started_ = false;
  std::uint64_t rng_seed_ = 0;
};

}  // namespace scout
