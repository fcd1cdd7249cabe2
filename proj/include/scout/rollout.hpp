#pragma once

// Episode rollouts over immutable actor/critic snapshots. Every episode owns
// its environment and RNG stream, so batches are reproducible regardless of
// how many worker threads run them.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "scout/corpus.hpp"
#include "scout/env.hpp"
#include "scout/error.hpp"
#include "scout/nn.hpp"
#include "scout/policy.hpp"

namespace scout {

struct TurnRecord {
  FeatureVector features;
  TurnSample sample;
  double reward = 0.0;
  double value = 0.0;
  std::vector<PaperId> accepted;
};

enum class TerminalReason { Stagnation, MaxTurns };

struct Trajectory {
  QueryId query = 0;
  std::vector<PaperId> seed_ids;
  std::vector<TurnRecord> turns;
  TerminalReason reason = TerminalReason::MaxTurns;

  std::size_t length() const { return turns.size(); }

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(turns.size());
    for (const TurnRecord& t : turns) r.push_back(t.reward);
    return r;
  }

  double total_reward() const {
    double s = 0.0;
    for (const TurnRecord& t : turns) s += t.reward;
    return s;
  }
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Runs one episode to termination. `critic` may be null (values recorded as 0).
inline Trajectory run_episode(const Corpus& corpus, const EnvConfig& env_cfg, const PolicySpec& spec,
                              const nn::ParamSet& actor, const nn::ParamSet* critic, QueryId query, std::uint64_t seed,
                              double temperature = 1.0) {
  Environment env(corpus, env_cfg);
  Observation obs = env.reset(query, seed);
  std::mt19937_64 rng(seed);
  Trajectory traj;
  traj.query = query;
  for (const auto& [id, e] : env.pool().entries) traj.seed_ids.push_back(id);
  const Query& q = corpus.query(query);
  while (!env.done()) {
    TurnRecord rec;
    rec.features = featurize(obs, spec.layout);
    rec.sample = sample_turn(actor, spec, rec.features, rng, temperature);
    rec.sample.calls = decode_calls(spec, rec.sample.tokens, obs, q.topic);
    rec.value = critic ? value_estimate(*critic, rec.features) : 0.0;
    StepResult res = env.step(rec.sample.calls);
    rec.reward = res.reward;
    rec.accepted = std::move(res.accepted);
    obs = std::move(res.observation);
    traj.turns.push_back(std::move(rec));
  }
  traj.reason = env.pool().stagnant_turns >= env_cfg.stagnation_limit ? TerminalReason::Stagnation
                                                                       : TerminalReason::MaxTurns;
  return traj;
}

// Worker count: SCOUT_SIM_THREADS if set, else the hardware concurrency.
inline std::size_t rollout_threads() {
  if (const char* s = std::getenv("SCOUT_SIM_THREADS")) {
    const long v = std::strtol(s, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// Episode i runs query `queries[i]` with seed mix_seed(base_seed, i).
inline std::vector<Trajectory> collect_batch(const Corpus& corpus, const EnvConfig& env_cfg, const PolicySpec& spec,
                                             const nn::ParamSet& actor, const nn::ParamSet* critic,
                                             std::span<const QueryId> queries, std::uint64_t base_seed,
                                             double temperature = 1.0, std::size_t threads = 0) {
  if (queries.empty()) throw InvariantError("collect_batch needs at least one episode");
  std::vector<Trajectory> out(queries.size());
  std::vector<std::exception_ptr> errors(queries.size());
  auto work = [&](std::size_t i) {
    try {
      out[i] = run_episode(corpus, env_cfg, spec, actor, critic, queries[i], mix_seed(base_seed, i), temperature);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads == 0) threads = rollout_threads();
  threads = std::min(threads, queries.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < queries.size(); i += threads) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const EpisodeAbort& e) {
      throw EpisodeAbort("episode " + std::to_string(i) + " (query " + std::to_string(queries[i]) + "): " + e.what());
    }
  }
  return out;
}

}  // namespace scout
