#pragma once

// Generative actor over a discrete tool-call language and the critic.
//
// Vocabulary: SEARCH(d) for d in [0, n_directions), EXPAND(s) for each
// unexpanded slot s, and END. A turn is sampled token by token; the input at
// position i is the observation features plus the summed embeddings of the
// tokens already emitted. After max_calls call tokens END is forced with
// probability one, so per-token log-probs sum to an exact sequence log-prob.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "scout/corpus.hpp"
#include "scout/env.hpp"
#include "scout/error.hpp"
#include "scout/nn.hpp"

namespace scout {

struct FeatureLayout {
  std::size_t l_expanded = 10;
  std::size_t l_unexpanded = 10;
  std::int64_t max_turns = 12;
  std::int64_t stagnation_limit = 3;
  std::size_t max_degree = 1;

  static constexpr std::size_t kStats = 4;
  static constexpr std::size_t kPerSlot = 3;
  static constexpr std::size_t kHistory = 2;

  std::size_t size() const { return kStats + kPerSlot * (l_unexpanded + l_expanded) + kHistory; }
};

using FeatureVector = std::vector<double>;

inline FeatureLayout layout_for(const EnvConfig& env, const Corpus& corpus) {
  return {static_cast<std::size_t>(env.l_expanded), static_cast<std::size_t>(env.l_unexpanded), env.max_turns,
          env.stagnation_limit, std::max<std::size_t>(1, corpus.max_out_degree())};
}

// Fixed-length encoding of an observation; every entry lies in [-1, 1].
inline FeatureVector featurize(const Observation& obs, const FeatureLayout& lay) {
  if (obs.expanded_list.size() > lay.l_expanded || obs.unexpanded_list.size() > lay.l_unexpanded) {
    throw InvariantError("observation exceeds feature layout limits");
  }
  FeatureVector f(lay.size(), 0.0);
  const PoolStats& s = obs.pool_stats;
  f[0] = std::tanh(static_cast<double>(s.pool_size) / 50.0);
  f[1] = std::min(1.0, static_cast<double>(s.turn) / static_cast<double>(lay.max_turns));
  f[2] = std::min(1.0, static_cast<double>(s.stagnant_turns) / static_cast<double>(lay.stagnation_limit));
  f[3] = std::tanh(s.last_reward / 3.0);

  auto put_slots = [&](const std::vector<SlotSummary>& list, std::size_t base) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const SlotSummary& e = list[i];
      double* slot = f.data() + base + FeatureLayout::kPerSlot * i;
      slot[0] = std::clamp(e.score, 0.0, 1.0);
      slot[1] = std::min(1.0, static_cast<double>(e.degree) / static_cast<double>(lay.max_degree));
      const auto age = std::max<std::int64_t>(0, s.turn - e.arrival_turn);
      slot[2] = 1.0 / (1.0 + static_cast<double>(age));
    }
  };
  put_slots(obs.unexpanded_list, FeatureLayout::kStats);
  put_slots(obs.expanded_list, FeatureLayout::kStats + FeatureLayout::kPerSlot * lay.l_unexpanded);

  const std::size_t h = lay.size() - FeatureLayout::kHistory;
  f[h] = std::tanh(static_cast<double>(obs.search_calls) / 10.0);
  f[h + 1] = std::tanh(static_cast<double>(obs.expand_calls) / 10.0);
  return f;
}

struct PolicySpec {
  FeatureLayout layout;
  std::size_t n_directions = 8;
  std::size_t hidden = 32;
  std::size_t max_calls = 3;
  double search_spread = 0.6;

  std::size_t vocab() const { return n_directions + layout.l_unexpanded + 1; }
  std::size_t end_token() const { return vocab() - 1; }
  std::size_t max_len() const { return max_calls + 1; }
  std::size_t feature_dim() const { return layout.size(); }
};

enum class TokenKind { Search, Expand, End };

struct ActionToken {
  TokenKind kind = TokenKind::End;
  std::size_t index = 0;  // direction for Search, slot for Expand
};

inline ActionToken token_meaning(const PolicySpec& spec, int token) {
  if (token < 0 || static_cast<std::size_t>(token) >= spec.vocab()) {
    throw InvariantError("token outside vocabulary: " + std::to_string(token));
  }
  const auto t = static_cast<std::size_t>(token);
  if (t < spec.n_directions) return {TokenKind::Search, t};
  if (t < spec.n_directions + spec.layout.l_unexpanded) return {TokenKind::Expand, t - spec.n_directions};
  return {TokenKind::End, 0};
}

struct TurnSample {
  std::vector<int> tokens;
  std::vector<double> token_logprobs;
  double total_logprob = 0.0;
  std::vector<ToolCall> calls;
};

inline nn::ParamSet make_actor(const PolicySpec& spec, std::uint64_t seed) {
  nn::ParamSet p;
  p.seed = seed;
  const nn::MlpShape shape{spec.feature_dim(), spec.hidden, spec.vocab()};
  nn::add_mlp_blocks(p, shape);
  p.add_block("embed", spec.vocab(), spec.feature_dim());
  std::mt19937_64 rng(seed);
  nn::init_mlp(p, shape, rng);
  nn::init_uniform(p, "embed", spec.feature_dim(), rng);
  return p;
}

inline nn::ParamSet make_critic(const PolicySpec& spec, std::uint64_t seed) {
  return nn::make_mlp({spec.feature_dim(), spec.hidden, 1}, seed);
}

namespace detail {

inline void check_actor(const nn::ParamSet& actor, const PolicySpec& spec) {
  const nn::MlpShape s = nn::mlp_shape(actor);
  const nn::Block& e = actor.find("embed");
  if (s.in != spec.feature_dim() || s.out != spec.vocab() || e.rows != spec.vocab() || e.cols != spec.feature_dim()) {
    throw InvariantError("actor parameters do not match the policy spec");
  }
}

inline void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

inline void add_embedding(const nn::ParamSet& actor, std::size_t token, std::span<double> x) {
  const nn::Block& e = actor.find("embed");
  const double* row = actor.values.data() + e.offset + token * e.cols;
  for (std::size_t c = 0; c < e.cols; ++c) x[c] += row[c];
}

}  // namespace detail

// Samples one turn. temperature == 0 selects the argmax (lowest index on
// ties); stored log-probs are those of the distribution actually sampled
// from, or of the untempered policy when decoding greedily.
inline TurnSample sample_turn(const nn::ParamSet& actor, const PolicySpec& spec, std::span<const double> features,
                              std::mt19937_64& rng, double temperature = 1.0) {
  detail::check_actor(actor, spec);
  if (features.size() != spec.feature_dim()) throw InvariantError("feature length mismatch");
  TurnSample ts;
  std::vector<double> x(features.begin(), features.end());
  std::vector<double> logp(spec.vocab());
  std::vector<double> scaled(spec.vocab());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t pos = 0; pos < spec.max_len(); ++pos) {
    if (pos == spec.max_calls) {
      ts.tokens.push_back(static_cast<int>(spec.end_token()));
      ts.token_logprobs.push_back(0.0);
      break;
    }
    const nn::Cache c = nn::forward(actor, x);
    const double t = temperature > 0.0 ? temperature : 1.0;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = c.output[i] / t;
    detail::log_softmax(scaled, logp);
    std::size_t tok = 0;
    if (temperature > 0.0) {
      double r = u01(rng);
      tok = spec.vocab() - 1;
      for (std::size_t i = 0; i < logp.size(); ++i) {
        r -= std::exp(logp[i]);
        if (r < 0.0) {
          tok = i;
          break;
        }
      }
    } else {
      tok = static_cast<std::size_t>(std::max_element(c.output.begin(), c.output.end()) - c.output.begin());
    }
    ts.tokens.push_back(static_cast<int>(tok));
    ts.token_logprobs.push_back(logp[tok]);
    if (tok == spec.end_token()) break;
    detail::add_embedding(actor, tok, x);
  }
  for (double lp : ts.token_logprobs) ts.total_logprob += lp;
  return ts;
}

struct SequenceLogprob {
  double total = 0.0;
  std::vector<double> per_token;
};

namespace detail {

inline void check_tokens(const PolicySpec& spec, std::span<const int> tokens) {
  if (tokens.empty() || tokens.size() > spec.max_len()) throw InvariantError("token sequence length out of bounds");
  for (int t : tokens) token_meaning(spec, t);
  if (static_cast<std::size_t>(tokens.back()) != spec.end_token()) {
    throw InvariantError("token sequence must end with END");
  }
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (static_cast<std::size_t>(tokens[i]) == spec.end_token()) throw InvariantError("END before end of sequence");
  }
}

}  // namespace detail

// Forward pass over a token sequence, keeping what the backward pass needs.
struct SequenceTrace {
  SequenceLogprob logprob;
  std::vector<nn::Cache> caches;  // one per sampled (non-forced) position
  std::vector<std::vector<double>> log_softmax;
};

inline SequenceTrace trace_sequence(const nn::ParamSet& actor, const PolicySpec& spec,
                                    std::span<const double> features, std::span<const int> tokens) {
  detail::check_actor(actor, spec);
  detail::check_tokens(spec, tokens);
  if (features.size() != spec.feature_dim()) throw InvariantError("feature length mismatch");
  SequenceTrace tr;
  std::vector<double> x(features.begin(), features.end());
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const auto tok = static_cast<std::size_t>(tokens[pos]);
    if (pos == spec.max_calls) {
      tr.logprob.per_token.push_back(0.0);  // forced END
      break;
    }
    tr.caches.push_back(nn::forward(actor, x));
    std::vector<double> logp(spec.vocab());
    detail::log_softmax(tr.caches.back().output, logp);
    tr.logprob.per_token.push_back(logp[tok]);
    tr.log_softmax.push_back(std::move(logp));
    if (tok != spec.end_token()) detail::add_embedding(actor, tok, x);
  }
  for (double lp : tr.logprob.per_token) tr.logprob.total += lp;
  return tr;
}

// Accumulates sum_i weights[i] * d log pi(token_i | prefix) / d theta.
inline void accumulate_sequence_grad(const nn::ParamSet& actor, const SequenceTrace& tr, std::span<const int> tokens,
                                     std::span<const double> weights, nn::ParamSet& grads) {
  if (weights.size() != tokens.size()) throw InvariantError("one weight per token required");
  const nn::Block& eb = actor.find("embed");
  std::vector<double> g;
  for (std::size_t pos = 0; pos < tr.caches.size(); ++pos) {
    if (weights[pos] == 0.0) continue;
    const auto tok = static_cast<std::size_t>(tokens[pos]);
    const std::vector<double>& logp = tr.log_softmax[pos];
    g.resize(logp.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -weights[pos] * std::exp(logp[i]);
    g[tok] += weights[pos];
    const std::vector<double> dx = nn::backward_into(actor, tr.caches[pos], g, grads);
    for (std::size_t j = 0; j < pos; ++j) {
      double* row = grads.values.data() + eb.offset + static_cast<std::size_t>(tokens[j]) * eb.cols;
      for (std::size_t k = 0; k < eb.cols; ++k) row[k] += dx[k];
    }
  }
}

// Per-token and total log-probs of `tokens`. If `grads` is given,
// accumulates sum_i weights[i] * d log pi(token_i | prefix) / d theta into it.
inline SequenceLogprob sequence_logprob(const nn::ParamSet& actor, const PolicySpec& spec,
                                        std::span<const double> features, std::span<const int> tokens,
                                        nn::ParamSet* grads = nullptr, std::span<const double> weights = {}) {
  SequenceTrace tr = trace_sequence(actor, spec, features, tokens);
  if (grads) accumulate_sequence_grad(actor, tr, tokens, weights, *grads);
  return std::move(tr.logprob);
}

// Translates tokens into tool calls against the observation the turn was
// sampled from. EXPAND on an empty slot yields an Expand of kNoPaper, which
// the environment skips and penalizes.
inline std::vector<ToolCall> decode_calls(const PolicySpec& spec, std::span<const int> tokens, const Observation& obs,
                                          std::span<const double> query_topic) {
  std::vector<ToolCall> calls;
  for (int t : tokens) {
    const ActionToken a = token_meaning(spec, t);
    if (a.kind == TokenKind::End) break;
    if (a.kind == TokenKind::Expand) {
      calls.push_back(ToolCall::expand(a.index < obs.unexpanded_list.size() ? obs.unexpanded_list[a.index].paper_id
                                                                           : kNoPaper));
      continue;
    }
    std::vector<double> probe(query_topic.begin(), query_topic.end());
    const std::size_t axis = (a.index / 2) % probe.size();
    probe[axis] += (a.index % 2 == 0 ? 1.0 : -1.0) * spec.search_spread;
    normalize_in_place(probe);
    calls.push_back(ToolCall::search(std::move(probe)));
  }
  return calls;
}

inline double value_estimate(const nn::ParamSet& critic, std::span<const double> features) {
  return nn::forward(critic, features).output.at(0);
}

}  // namespace scout
