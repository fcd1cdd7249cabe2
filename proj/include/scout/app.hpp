#pragma once

// Command-line front end: gen-corpus, train, eval, plot, compare.
// Exit codes: 0 ok, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scout/compare.hpp"
#include "scout/config.hpp"
#include "scout/corpus.hpp"
#include "scout/error.hpp"
#include "scout/eval.hpp"
#include "scout/nn.hpp"
#include "scout/plot.hpp"
#include "scout/trainer.hpp"

#ifndef SCOUT_BUILD_ID
#define SCOUT_BUILD_ID "unknown"
#endif

namespace scout::app {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::string preset = "toy";
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> algos;
};

struct RunManifest {
  std::string config_path;
  RunConfig config;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::string build_id = SCOUT_BUILD_ID;
  std::string command;
};

inline void write_manifest(std::ostream& out, const RunManifest& m) {
  out << "# run manifest\n";
  out << "command = " << m.command << '\n';
  out << "config_path = " << (m.config_path.empty() ? "-" : m.config_path) << '\n';
  out << "out_dir = " << m.out_dir << '\n';
  out << "build = " << m.build_id << '\n';
  out << "seeds =";
  for (auto s : m.seeds) out << ' ' << s;
  out << "\n\n";
  write_config(out, m.config);
}

inline RunConfig resolve_config(const CommonArgs& a) {
  RunConfig c = preset_config(parse_preset(a.preset));
  if (!a.config_path.empty()) c = load_config(a.config_path, c);
  if (!a.algos.empty()) c.train.algorithm = parse_algorithm(a.algos.front());
  return c;
}

inline fs::path prepare_out(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory: " + dir);
  return fs::path(dir);
}

template <class Fn>
void write_file(const fs::path& path, Fn&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  body(out);
  if (!out) throw Error("write failed: " + path.string());
}

inline RunManifest start_run(const std::string& command, const CommonArgs& a, const RunConfig& cfg,
                             const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  RunManifest m{a.config_path, cfg, seeds, a.out_dir, SCOUT_BUILD_ID, command};
  write_file(out / ("manifest_" + command + ".txt"), [&](std::ostream& o) { write_manifest(o, m); });
  return m;
}

inline Corpus obtain_corpus(const std::string& corpus_path, const RunConfig& cfg) {
  if (!corpus_path.empty()) return load_corpus(corpus_path);
  return build_corpus(cfg.corpus);
}

inline std::vector<Algorithm> algorithms_of(const CommonArgs& a, const RunConfig& cfg) {
  if (a.algos.empty()) return {cfg.train.algorithm};
  std::vector<Algorithm> out;
  for (const auto& s : a.algos) out.push_back(parse_algorithm(s));
  return out;
}

inline std::string run_stem(Algorithm algo, std::uint64_t seed) {
  return to_string(algo) + "_s" + std::to_string(seed);
}

inline void cmd_gen_corpus(const CommonArgs& a, std::ostream& log) {
  const RunConfig cfg = resolve_config(a);
  cfg.validate();
  const fs::path out = prepare_out(a.out_dir);
  start_run("gen-corpus", a, cfg, {cfg.corpus.seed}, out);
  const Corpus c = build_corpus(cfg.corpus);
  save_corpus((out / "corpus.txt").string(), c);
  log << "wrote " << (out / "corpus.txt").string() << " (" << c.size() << " papers, " << c.queries().size()
      << " queries)\n";
}

inline void cmd_train(const CommonArgs& a, const std::string& corpus_path, std::ostream& log) {
  RunConfig cfg = resolve_config(a);
  const std::vector<Algorithm> algos = algorithms_of(a, cfg);
  const std::vector<std::uint64_t> seeds = a.seeds.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : a.seeds;
  for (Algorithm al : algos) {
    RunConfig check = cfg;
    check.train.algorithm = al;
    check.validate();
  }
  const fs::path out = prepare_out(a.out_dir);
  start_run("train", a, cfg, seeds, out);
  const Corpus corpus = obtain_corpus(corpus_path, cfg);
  const PolicySpec spec = policy_spec(cfg, corpus);
  for (Algorithm al : algos) {
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = cfg.train;
      tc.algorithm = al;
      tc.seed = seed;
      const TrainResult r = train(corpus, cfg.env, spec, tc);
      const std::string stem = run_stem(al, seed);
      write_file(out / ("metrics_" + stem + ".csv"), [&](std::ostream& o) { write_metrics_csv(o, r.metrics); });
      nn::save_checkpoint((out / ("actor_" + stem + ".ckpt")).string(), r.state.actor, tc.total_steps);
      if (al != Algorithm::Gspo) {
        nn::save_checkpoint((out / ("critic_" + stem + ".ckpt")).string(), r.state.critic, tc.total_steps);
      }
      log << stem << ": " << r.metrics.size() << " updates";
      if (!r.metrics.empty()) log << ", final return " << text::format_real(r.metrics.back().mean_return);
      log << '\n';
    }
  }
}

// "actor_pspo_s3.ckpt" -> "pspo"; anything else -> fallback.
inline std::string label_from_checkpoint(const std::string& path, const std::string& fallback) {
  std::string stem = fs::path(path).stem().string();
  if (stem.rfind("actor_", 0) != 0) return fallback;
  stem = stem.substr(6);
  const auto cut = stem.rfind("_s");
  if (cut == std::string::npos || cut == 0) return fallback;
  return stem.substr(0, cut);
}

inline void cmd_eval(const CommonArgs& a, const std::string& corpus_path, const std::vector<std::string>& actors,
                     std::ostream& log) {
  const RunConfig cfg = resolve_config(a);
  cfg.validate();
  if (actors.empty()) throw ConfigError("eval needs at least one --actor checkpoint");
  const fs::path out = prepare_out(a.out_dir);
  start_run("eval", a, cfg, {cfg.eval.seed}, out);
  const Corpus corpus = obtain_corpus(corpus_path, cfg);
  const PolicySpec spec = policy_spec(cfg, corpus);
  const std::vector<QueryId> queries = heldout_queries(cfg, corpus);
  if (queries.empty()) throw ConfigError("no held-out queries: corpus has " + std::to_string(corpus.queries().size()) +
                                         " queries and n_train_queries is " +
                                         std::to_string(cfg.train.n_train_queries));
  EvalReport all;
  for (const std::string& path : actors) {
    const nn::ParamSet actor = nn::load_checkpoint(path);
    detail::check_actor(actor, spec);
    const std::string label = label_from_checkpoint(path, to_string(cfg.train.algorithm));
    EvalReport rep = evaluate_policy(corpus, cfg.env, spec, actor, queries, label, cfg.eval.seed, cfg.eval.temperature);
    double recall = 0.0;
    for (const EvalRow& r : rep.rows) recall += r.recall_all;
    log << path << ": macro recall@all " << text::format_real(recall / static_cast<double>(rep.rows.size())) << '\n';
    all.rows.insert(all.rows.end(), rep.rows.begin(), rep.rows.end());
    all.curves.insert(all.curves.end(), rep.curves.begin(), rep.curves.end());
  }
  write_file(out / "eval.csv", [&](std::ostream& o) { write_eval_csv(o, all.rows); });
  write_file(out / "efficiency.csv", [&](std::ostream& o) { write_efficiency_csv(o, all); });
}

inline std::vector<MetricsRow> read_all_metrics(const std::vector<std::string>& paths) {
  std::vector<MetricsRow> rows;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw NotFoundError("metrics file not found: " + p);
    auto r = read_metrics_csv(in);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

inline void cmd_plot(const std::string& out_dir, const std::vector<std::string>& metrics,
                     const std::vector<std::string>& efficiency, std::ostream& log) {
  if (metrics.empty() && efficiency.empty()) throw ConfigError("plot needs --metrics or --efficiency inputs");
  const fs::path out = prepare_out(out_dir);
  if (!metrics.empty()) {
    const auto rows = read_all_metrics(metrics);
    write_file(out / "training.svg", [&](std::ostream& o) { plot::render_svg(o, plot::training_panels(rows)); });
    log << "wrote " << (out / "training.svg").string() << '\n';
  }
  if (!efficiency.empty()) {
    std::vector<plot::EfficiencyRow> rows;
    for (const auto& p : efficiency) {
      std::ifstream in(p);
      if (!in) throw NotFoundError("efficiency file not found: " + p);
      auto r = plot::read_efficiency_csv(in);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    write_file(out / "efficiency.svg", [&](std::ostream& o) { plot::render_svg(o, plot::efficiency_panels(rows)); });
    log << "wrote " << (out / "efficiency.svg").string() << '\n';
  }
}

inline void cmd_compare(const std::string& out_dir, const std::vector<std::string>& metrics, std::size_t window,
                        std::ostream& log) {
  const Comparison c = compare_runs(read_all_metrics(metrics), window);
  write_comparison(log, c);
  if (!out_dir.empty()) {
    const fs::path out = prepare_out(out_dir);
    write_file(out / "comparison.csv", [&](std::ostream& o) { write_comparison(o, c); });
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App cli{"scout: paper-search agent training and evaluation"};
  cli.require_subcommand(1);
  CommonArgs common;
  std::string corpus_path;
  std::vector<std::string> actors;
  std::vector<std::string> metrics;
  std::vector<std::string> efficiency;
  std::size_t window = 50;

  auto add_common = [&](CLI::App* sub, bool with_seeds) {
    sub->add_option("--config", common.config_path, "Config file (sectioned key = value)");
    sub->add_option("--preset", common.preset, "Base values: toy or paper")->check(CLI::IsMember({"toy", "paper"}));
    sub->add_option("--out", common.out_dir, "Output directory")->required();
    sub->add_option("--algo", common.algos, "Algorithm: pspo, ppo_token, gspo, pspo_star (repeatable)");
    if (with_seeds) sub->add_option("--seed", common.seeds, "Training seed (repeatable)");
  };
  CLI::App* gen = cli.add_subcommand("gen-corpus", "Generate a synthetic corpus file");
  add_common(gen, false);
  CLI::App* trn = cli.add_subcommand("train", "Train policies and write metrics + checkpoints");
  add_common(trn, true);
  trn->add_option("--corpus", corpus_path, "Corpus file (default: generate from [corpus])");
  CLI::App* ev = cli.add_subcommand("eval", "Evaluate actor checkpoints on held-out queries");
  add_common(ev, false);
  ev->add_option("--corpus", corpus_path, "Corpus file (default: generate from [corpus])");
  ev->add_option("--actor", actors, "Actor checkpoint (repeatable)")->required();
  CLI::App* plt = cli.add_subcommand("plot", "Render SVG charts from CSVs");
  plt->add_option("--out", common.out_dir, "Output directory")->required();
  plt->add_option("--metrics", metrics, "Metrics CSV (repeatable)");
  plt->add_option("--efficiency", efficiency, "Efficiency CSV (repeatable)");
  CLI::App* cmp = cli.add_subcommand("compare", "Summarize metrics CSVs across algorithms");
  cmp->add_option("--metrics", metrics, "Metrics CSV (repeatable)")->required();
  cmp->add_option("--window", window, "Final-window length in updates");
  cmp->add_option("--out", common.out_dir, "Also write comparison.csv here");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    cli.exit(e, out, err);
    return 2;
  }

  try {
    if (*gen) cmd_gen_corpus(common, out);
    if (*trn) cmd_train(common, corpus_path, out);
    if (*ev) cmd_eval(common, corpus_path, actors, out);
    if (*plt) cmd_plot(common.out_dir, metrics, efficiency, out);
    if (*cmp) cmd_compare(common.out_dir, metrics, window, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NotFoundError& e) {
    err << "not found: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace scout::app
