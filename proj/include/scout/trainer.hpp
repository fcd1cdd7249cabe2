#pragma once

// Actor-critic training over turn-level trajectories.
//
//   pspo       sequence-level ratio per turn, turn-level GAE, critic on
//              running-normalized discounted returns
//   ppo_token  same advantages, broadcast to every token; per-token ratios
//              and per-token clipping, token-mean loss
//   gspo       no critic; trajectory outcome reward, group-mean baseline
//              over trajectories of the same query, length-normalized ratio
//   pspo_star  pspo with each trajectory's rewards moved to its last turn

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scout/advantage.hpp"
#include "scout/corpus.hpp"
#include "scout/env.hpp"
#include "scout/error.hpp"
#include "scout/nn.hpp"
#include "scout/objective.hpp"
#include "scout/policy.hpp"
#include "scout/rollout.hpp"
#include "scout/text_io.hpp"

namespace scout {

enum class Algorithm { Pspo, PpoToken, Gspo, PspoStar };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Pspo: return "pspo";
    case Algorithm::PpoToken: return "ppo_token";
    case Algorithm::Gspo: return "gspo";
    case Algorithm::PspoStar: return "pspo_star";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "pspo") return Algorithm::Pspo;
  if (s == "ppo_token") return Algorithm::PpoToken;
  if (s == "gspo") return Algorithm::Gspo;
  if (s == "pspo_star") return Algorithm::PspoStar;
  throw ConfigError("unknown algorithm '" + s + "' (expected pspo, ppo_token, gspo or pspo_star)");
}

struct TrainConfig {
  Algorithm algorithm = Algorithm::Pspo;
  double gamma = 0.99;
  double lambda = 0.95;
  double eps_low = 0.1;
  double eps_high = 0.2;
  double kl_coef = 0.001;
  double actor_lr = 1e-3;
  double critic_lr = 3e-3;
  std::int64_t episodes_per_step = 16;
  std::int64_t update_epochs = 1;
  std::int64_t minibatches = 1;
  std::int64_t pretrain_steps = 100;
  std::int64_t total_steps = 300;
  std::int64_t gspo_group = 8;
  std::int64_t n_train_queries = 50;
  double max_grad_norm = 0.0;  // 0 disables clipping
  std::uint64_t seed = 1;
  bool record_wall_time = false;

  // Values sized for a large pretrained model; they barely move a small network.
  static TrainConfig paper_preset() {
    TrainConfig c;
    c.eps_low = 3e-4;
    c.eps_high = 4e-4;
    c.actor_lr = 1e-6;
    c.critic_lr = 1e-5;
    return c;
  }

  // Multi-epoch clipped updates for the small MLP policy.
  static TrainConfig toy_preset() {
    TrainConfig c;
    c.actor_lr = 3e-3;
    c.episodes_per_step = 32;
    c.update_epochs = 8;
    c.minibatches = 4;
    return c;
  }

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
    if (!(eps_low > 0.0) || !(eps_high > 0.0)) throw ConfigError("eps_low and eps_high must be > 0");
    if (!(kl_coef >= 0.0)) throw ConfigError("kl_coef must be >= 0");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (episodes_per_step < 1) throw ConfigError("episodes_per_step must be >= 1");
    if (update_epochs < 1) throw ConfigError("update_epochs must be >= 1");
    if (minibatches < 1) throw ConfigError("minibatches must be >= 1");
    if (pretrain_steps < 0) throw ConfigError("pretrain_steps must be >= 0");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (gspo_group < 1) throw ConfigError("gspo_group must be >= 1");
    if (n_train_queries < 1) throw ConfigError("n_train_queries must be >= 1");
    if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be >= 0");
    if (algorithm == Algorithm::Gspo && episodes_per_step % gspo_group != 0) {
      throw ConfigError("episodes_per_step must be a multiple of gspo_group for gspo");
    }
  }
};

struct MetricsRow {
  std::int64_t step = 0;
  std::string algorithm;
  std::uint64_t seed = 0;
  double mean_return = 0.0;
  double actor_grad_norm = 0.0;
  double critic_loss = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double wall_ms = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "step,algorithm,seed,mean_return,actor_grad_norm,critic_loss,clip_fraction,kl,wall_ms";

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    out << r.step << ',' << r.algorithm << ',' << r.seed << ',' << text::format_real(r.mean_return) << ','
        << text::format_real(r.actor_grad_norm) << ',' << text::format_real(r.critic_loss) << ','
        << text::format_real(r.clip_fraction) << ',' << text::format_real(r.kl) << ',' << text::format_real(r.wall_ms)
        << '\n';
  }
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kMetricsHeader) throw FormatError("not a metrics CSV");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto f = text::split(text::trim(line), ',');
    if (f.size() != 9) throw FormatError("metrics row has wrong column count: " + line);
    MetricsRow r;
    r.step = text::parse_int(f[0]);
    r.algorithm = std::string(f[1]);
    r.seed = static_cast<std::uint64_t>(text::parse_int(f[2]));
    r.mean_return = text::parse_real(f[3]);
    r.actor_grad_norm = text::parse_real(f[4]);
    r.critic_loss = text::parse_real(f[5]);
    r.clip_fraction = text::parse_real(f[6]);
    r.kl = text::parse_real(f[7]);
    r.wall_ms = text::parse_real(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// (0, ..., 0, sum r): same total reward, no intermediate signal.
inline std::vector<double> outcome_only(std::span<const double> rewards) {
  std::vector<double> out(rewards.size(), 0.0);
  if (!out.empty()) out.back() = std::accumulate(rewards.begin(), rewards.end(), 0.0);
  return out;
}

inline std::vector<double> training_rewards(const Trajectory& t, Algorithm a) {
  const std::vector<double> r = t.rewards();
  return a == Algorithm::PspoStar ? outcome_only(r) : r;
}

// Per-turn targets and advantages for one batch.
struct BatchTargets {
  std::vector<std::vector<double>> targets;  // normalized returns
  std::vector<std::vector<double>> advantages;
};

// Folds this batch's returns into `stats`, then builds normalized critic
// targets and GAE advantages (values denormalized with the updated stats,
// terminal value 0).
inline BatchTargets batch_targets(const std::vector<Trajectory>& batch, Algorithm algo, double gamma, double lambda,
                                  RunningStats& stats) {
  BatchTargets bt;
  std::vector<std::vector<double>> returns;
  for (const Trajectory& t : batch) {
    returns.push_back(compute_returns(training_rewards(t, algo), gamma));
    for (double r : returns.back()) stats.push(r);
  }
  const double sd = stats.stddev() + kNormEpsilon;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<double> tgt(returns[i].size());
    for (std::size_t j = 0; j < tgt.size(); ++j) tgt[j] = (returns[i][j] - stats.mean) / sd;
    bt.targets.push_back(std::move(tgt));
    std::vector<double> values;
    for (const TurnRecord& r : batch[i].turns) values.push_back(denormalize(stats, r.value));
    values.push_back(0.0);
    bt.advantages.push_back(compute_gae(training_rewards(batch[i], algo), values, gamma, lambda));
  }
  return bt;
}

// Group-relative outcome advantages: consecutive groups of `group`
// trajectories share a query.
inline std::vector<double> group_advantages(const std::vector<Trajectory>& batch, std::size_t group) {
  std::vector<double> adv(batch.size(), 0.0);
  for (std::size_t g0 = 0; g0 < batch.size(); g0 += group) {
    const std::size_t g1 = std::min(batch.size(), g0 + group);
    double mean = 0.0;
    for (std::size_t i = g0; i < g1; ++i) mean += batch[i].total_reward();
    mean /= static_cast<double>(g1 - g0);
    for (std::size_t i = g0; i < g1; ++i) adv[i] = batch[i].total_reward() - mean;
  }
  return adv;
}

struct TurnRef {
  std::size_t traj = 0;
  std::size_t turn = 0;
};

inline std::size_t sampled_length(const PolicySpec& spec, const TurnSample& s) {
  return std::min(s.tokens.size(), spec.max_calls);
}

struct ActorUpdate {
  double loss = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  std::int64_t overflow = 0;
};

// Actor loss over a minibatch of turns and its gradient with respect to the
// actor parameters (accumulated into `grads`, which must be zeroed).
inline ActorUpdate actor_objective(const nn::ParamSet& actor, const PolicySpec& spec, const TrainConfig& cfg,
                                   const std::vector<Trajectory>& batch, std::span<const TurnRef> mb,
                                   const std::function<double(const TurnRef&)>& advantage, nn::ParamSet& grads) {
  ActorUpdate up;
  std::vector<SequenceTrace> traces;
  traces.reserve(mb.size());
  for (const TurnRef& r : mb) {
    const TurnRecord& rec = batch[r.traj].turns[r.turn];
    traces.push_back(trace_sequence(actor, spec, rec.features, rec.sample.tokens));
  }

  std::vector<double> ratios;
  std::vector<double> advs;
  std::vector<double> kls;
  std::vector<bool> overflowed;
  auto push_unit = [&](double log_ratio, double scale, double adv, double kl) {
    const bool over = log_ratio * scale > kMaxLogRatio;
    if (over) ++up.overflow;
    ratios.push_back(std::exp(std::min(log_ratio * scale, kMaxLogRatio)));
    advs.push_back(adv);
    kls.push_back(kl);
    overflowed.push_back(over);
  };

  const bool token_level = cfg.algorithm == Algorithm::PpoToken;
  for (std::size_t i = 0; i < mb.size(); ++i) {
    const TurnRecord& rec = batch[mb[i].traj].turns[mb[i].turn];
    const double a = advantage(mb[i]);
    if (token_level) {
      const std::size_t len = sampled_length(spec, rec.sample);
      for (std::size_t j = 0; j < len; ++j) {
        const double d = traces[i].logprob.per_token[j] - rec.sample.token_logprobs[j];
        push_unit(d, 1.0, a, -d);
      }
    } else {
      const double d = traces[i].logprob.total - rec.sample.total_logprob;
      double scale = 1.0;
      if (cfg.algorithm == Algorithm::Gspo) {
        const std::size_t len = sampled_length(spec, rec.sample);
        scale = len > 0 ? 1.0 / static_cast<double>(len) : 0.0;
      }
      push_unit(d, scale, a, -d);
    }
  }

  const ActorLoss al = actor_loss(ratios, advs, cfg.eps_low, cfg.eps_high, cfg.kl_coef, kls);
  if (!std::isfinite(al.loss)) throw NumericError("non-finite actor loss");
  up.loss = al.loss;
  up.clip_fraction = al.clip_fraction;
  up.kl = al.kl_mean;

  // Chain d loss / d log w and d loss / d kl (kl = old - new) into per-token
  // weights on d log pi(token).
  std::size_t unit = 0;
  std::vector<double> weights;
  for (std::size_t i = 0; i < mb.size(); ++i) {
    const TurnRecord& rec = batch[mb[i].traj].turns[mb[i].turn];
    const std::size_t len = sampled_length(spec, rec.sample);
    weights.assign(rec.sample.tokens.size(), 0.0);
    if (token_level) {
      for (std::size_t j = 0; j < len; ++j, ++unit) {
        const double gs = overflowed[unit] ? 0.0 : al.grad_log_ratio[unit];
        weights[j] = gs - al.grad_kl;
      }
    } else {
      const double scale = cfg.algorithm == Algorithm::Gspo ? (len > 0 ? 1.0 / static_cast<double>(len) : 0.0) : 1.0;
      const double gs = overflowed[unit] ? 0.0 : al.grad_log_ratio[unit] * scale;
      for (std::size_t j = 0; j < len; ++j) weights[j] = gs - al.grad_kl;
      ++unit;
    }
    accumulate_sequence_grad(actor, traces[i], rec.sample.tokens, weights, grads);
  }
  up.grad_norm = nn::l2_norm(grads.values);
  return up;
}

// Critic MSE against `targets` over a minibatch; gradient accumulated into
// `grads` (zeroed by the caller).
inline double critic_objective(const nn::ParamSet& critic, const std::vector<Trajectory>& batch,
                               std::span<const TurnRef> mb, const std::vector<std::vector<double>>& targets,
                               nn::ParamSet* grads) {
  std::vector<double> values;
  std::vector<double> tgt;
  std::vector<nn::Cache> caches;
  for (const TurnRef& r : mb) {
    caches.push_back(nn::forward(critic, batch[r.traj].turns[r.turn].features));
    values.push_back(caches.back().output[0]);
    tgt.push_back(targets[r.traj][r.turn]);
  }
  const CriticLoss cl = critic_loss(values, tgt);
  if (!std::isfinite(cl.loss)) throw NumericError("non-finite critic loss");
  if (grads) {
    for (std::size_t i = 0; i < mb.size(); ++i) {
      const double g = cl.grad_values[i];
      nn::backward_into(critic, caches[i], std::span<const double>(&g, 1), *grads);
    }
  }
  return cl.loss;
}

inline void clip_gradient(nn::ParamSet& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = nn::l2_norm(g.values);
  if (n > max_norm) {
    for (double& v : g.values) v *= max_norm / n;
  }
}

inline std::vector<TurnRef> all_turns(const std::vector<Trajectory>& batch) {
  std::vector<TurnRef> refs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch[i].turns.size(); ++j) refs.push_back({i, j});
  }
  return refs;
}

// Splits turns into `parts` contiguous minibatches after a seeded shuffle
// (no shuffle when parts == 1).
inline std::vector<std::vector<TurnRef>> minibatches(std::vector<TurnRef> refs, std::int64_t parts,
                                                     std::mt19937_64& rng) {
  if (parts > 1) std::shuffle(refs.begin(), refs.end(), rng);
  std::vector<std::vector<TurnRef>> out;
  const auto p = static_cast<std::size_t>(parts);
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t b = refs.size() * k / p;
    const std::size_t e = refs.size() * (k + 1) / p;
    if (e > b) out.emplace_back(refs.begin() + static_cast<std::ptrdiff_t>(b), refs.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

// Everything the trainer mutates, kept together so that a run can be
// replayed from a snapshot.
struct TrainerState {
  nn::ParamSet actor;
  nn::ParamSet critic;
  nn::OptimizerState actor_opt;
  nn::OptimizerState critic_opt;
  RunningStats return_stats;
  std::int64_t overflow_count = 0;
};

inline TrainerState init_trainer(const PolicySpec& spec, const TrainConfig& cfg) {
  TrainerState s;
  s.actor = make_actor(spec, mix_seed(cfg.seed, 11));
  s.critic = make_critic(spec, mix_seed(cfg.seed, 12));
  s.actor_opt = nn::OptimizerState::for_params(s.actor, cfg.actor_lr);
  s.critic_opt = nn::OptimizerState::for_params(s.critic, cfg.critic_lr);
  return s;
}

// Query per episode. gspo repeats each sampled query gspo_group times.
inline std::vector<QueryId> batch_queries(const TrainConfig& cfg, std::size_t n_train, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n_train - 1);
  std::vector<QueryId> q;
  const auto n = static_cast<std::size_t>(cfg.episodes_per_step);
  if (cfg.algorithm == Algorithm::Gspo) {
    const auto g = static_cast<std::size_t>(cfg.gspo_group);
    while (q.size() < n) {
      const auto id = static_cast<QueryId>(pick(rng));
      for (std::size_t i = 0; i < g; ++i) q.push_back(id);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) q.push_back(static_cast<QueryId>(pick(rng)));
  }
  return q;
}

inline std::size_t train_query_count(const Corpus& corpus, const TrainConfig& cfg) {
  const auto n = std::min<std::size_t>(corpus.queries().size(), static_cast<std::size_t>(cfg.n_train_queries));
  if (n == 0) throw ConfigError("corpus has no training queries");
  return n;
}

struct PretrainResult {
  std::vector<double> losses;  // critic loss on each step's batch before its update
};

// Critic-only training under the frozen actor. The actor is taken by const
// reference and never written.
inline PretrainResult value_pretrain(const Corpus& corpus, const EnvConfig& env_cfg, const PolicySpec& spec,
                                     const nn::ParamSet& actor, nn::ParamSet& critic, nn::OptimizerState& critic_opt,
                                     RunningStats& stats, std::int64_t steps, const TrainConfig& cfg) {
  PretrainResult res;
  const std::size_t n_train = train_query_count(corpus, cfg);
  for (std::int64_t step = 0; step < steps; ++step) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 1000000 + static_cast<std::uint64_t>(step)));
    const std::vector<QueryId> queries = batch_queries(cfg, n_train, rng);
    const std::vector<Trajectory> batch =
        collect_batch(corpus, env_cfg, spec, actor, &critic, queries, rng());
    const BatchTargets bt = batch_targets(batch, cfg.algorithm, cfg.gamma, cfg.lambda, stats);
    const std::vector<TurnRef> refs = all_turns(batch);
    res.losses.push_back(critic_objective(critic, batch, refs, bt.targets, nullptr));
    for (std::int64_t ep = 0; ep < cfg.update_epochs; ++ep) {
      for (const auto& mb : minibatches(refs, cfg.minibatches, rng)) {
        nn::ParamSet g = critic.zeros_like();
        critic_objective(critic, batch, mb, bt.targets, &g);
        clip_gradient(g, cfg.max_grad_norm);
        nn::optimizer_step(critic, g, critic_opt);
      }
    }
  }
  return res;
}

// One collect + update step. Returns the metrics row for this step.
inline MetricsRow train_step(const Corpus& corpus, const EnvConfig& env_cfg, const PolicySpec& spec,
                             const TrainConfig& cfg, TrainerState& st, std::int64_t step) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_train = train_query_count(corpus, cfg);
  std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
  const bool has_critic = cfg.algorithm != Algorithm::Gspo;
  const std::vector<QueryId> queries = batch_queries(cfg, n_train, rng);
  const std::vector<Trajectory> batch =
      collect_batch(corpus, env_cfg, spec, st.actor, has_critic ? &st.critic : nullptr, queries, rng());

  MetricsRow row;
  row.step = step;
  row.algorithm = to_string(cfg.algorithm);
  row.seed = cfg.seed;
  for (const Trajectory& t : batch) row.mean_return += t.total_reward();
  row.mean_return /= static_cast<double>(batch.size());

  BatchTargets bt;
  std::vector<double> outcome_adv;
  if (has_critic) {
    bt = batch_targets(batch, cfg.algorithm, cfg.gamma, cfg.lambda, st.return_stats);
  } else {
    outcome_adv = group_advantages(batch, static_cast<std::size_t>(cfg.gspo_group));
  }
  const std::function<double(const TurnRef&)> advantage = [&](const TurnRef& r) {
    return has_critic ? bt.advantages[r.traj][r.turn] : outcome_adv[r.traj];
  };

  const std::vector<TurnRef> refs = all_turns(batch);
  std::size_t n_actor = 0;
  std::size_t n_critic = 0;
  for (std::int64_t ep = 0; ep < cfg.update_epochs; ++ep) {
    for (const auto& mb : minibatches(refs, cfg.minibatches, rng)) {
      nn::ParamSet ga = st.actor.zeros_like();
      const ActorUpdate up = actor_objective(st.actor, spec, cfg, batch, mb, advantage, ga);
      row.actor_grad_norm += up.grad_norm;
      row.clip_fraction += up.clip_fraction;
      row.kl += up.kl;
      st.overflow_count += up.overflow;
      ++n_actor;
      clip_gradient(ga, cfg.max_grad_norm);
      try {
        nn::optimizer_step(st.actor, ga, st.actor_opt);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": actor update failed (" + e.what() + "), loss " +
                           text::format_real(up.loss));
      }
      if (has_critic) {
        nn::ParamSet gc = st.critic.zeros_like();
        row.critic_loss += critic_objective(st.critic, batch, mb, bt.targets, &gc);
        ++n_critic;
        clip_gradient(gc, cfg.max_grad_norm);
        nn::optimizer_step(st.critic, gc, st.critic_opt);
      }
    }
  }
  if (n_actor > 0) {
    row.actor_grad_norm /= static_cast<double>(n_actor);
    row.clip_fraction /= static_cast<double>(n_actor);
    row.kl /= static_cast<double>(n_actor);
  }
  if (n_critic > 0) row.critic_loss /= static_cast<double>(n_critic);
  if (cfg.record_wall_time) {
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return row;
}

struct TrainResult {
  std::vector<MetricsRow> metrics;
  PretrainResult pretrain;
  TrainerState state;
  std::uint64_t actor_checksum_before_pretrain = 0;
  std::uint64_t actor_checksum_after_pretrain = 0;
};

inline TrainResult train(const Corpus& corpus, const EnvConfig& env_cfg, const PolicySpec& spec,
                         const TrainConfig& cfg) {
  cfg.validate();
  env_cfg.validate();
  TrainResult res;
  res.state = init_trainer(spec, cfg);
  if (cfg.total_steps == 0) return res;
  res.actor_checksum_before_pretrain = nn::checksum(res.state.actor);
  if (cfg.algorithm != Algorithm::Gspo) {
    res.pretrain = value_pretrain(corpus, env_cfg, spec, res.state.actor, res.state.critic, res.state.critic_opt,
                                  res.state.return_stats, cfg.pretrain_steps, cfg);
  }
  res.actor_checksum_after_pretrain = nn::checksum(res.state.actor);
  for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
    res.metrics.push_back(train_step(corpus, env_cfg, spec, cfg, res.state, step));
  }
  return res;
}

}  // namespace scout
