// Builds a small corpus, runs one episode with an untrained policy, trains
// PSPO for a few updates and evaluates the result on held-out queries.

#include <iostream>
#include <vector>

#include "scout/config.hpp"
#include "scout/eval.hpp"
#include "scout/trainer.hpp"

int main() {
  using namespace scout;
  RunConfig cfg;
  cfg.corpus.n_papers = 400;
  cfg.corpus.n_queries = 20;
  cfg.train.n_train_queries = 15;
  cfg.train.total_steps = 20;
  cfg.train.pretrain_steps = 10;
  cfg.train.episodes_per_step = 8;
  cfg.train.update_epochs = 4;
  cfg.policy.hidden = 32;

  const Corpus corpus = build_corpus(cfg.corpus);
  const PolicySpec spec = policy_spec(cfg, corpus);
  std::cout << "corpus: " << corpus.size() << " papers, " << corpus.queries().size() << " queries\n";

  const nn::ParamSet untrained = make_actor(spec, 1);
  const Trajectory t = run_episode(corpus, cfg.env, spec, untrained, nullptr, 0, 42);
  std::cout << "untrained episode: " << t.length() << " turns, return " << t.total_reward() << '\n';

  const TrainResult r = train(corpus, cfg.env, spec, cfg.train);
  for (const MetricsRow& m : r.metrics) {
    if (m.step % 5 == 0) std::cout << "step " << m.step << " mean return " << m.mean_return << '\n';
  }

  const std::vector<QueryId> heldout = heldout_queries(cfg, corpus);
  const EvalReport rep = evaluate_policy(corpus, cfg.env, spec, r.state.actor, heldout, "pspo", cfg.eval.seed);
  double recall = 0.0;
  for (const EvalRow& row : rep.rows) recall += row.recall_all;
  std::cout << "held-out macro recall: " << recall / static_cast<double>(rep.rows.size()) << '\n';
}
