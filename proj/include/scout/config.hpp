#pragma once

// Run configuration: flat key = value text grouped in [sections].
//
//   [train]
//   algorithm = pspo
//   gamma = 0.99
//
// Lines starting with '#' are comments. Unknown sections and keys are
// configuration errors; unknown keys name the closest valid key.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scout/corpus.hpp"
#include "scout/env.hpp"
#include "scout/error.hpp"
#include "scout/policy.hpp"
#include "scout/text_io.hpp"
#include "scout/trainer.hpp"

namespace scout {

struct PolicyOptions {
  std::int64_t n_directions = 8;
  std::int64_t hidden = 32;
  double search_spread = 0.6;
};

struct EvalOptions {
  std::int64_t n_heldout = 10;  // queries after the training range
  double temperature = 0.0;  // 0 = greedy
  std::uint64_t seed = 99;
};

struct RunConfig {
  CorpusParams corpus;
  EnvConfig env;
  PolicyOptions policy;
  TrainConfig train;
  EvalOptions eval;

  void validate() const {
    env.validate();
    train.validate();
    if (policy.n_directions < 1) throw ConfigError("n_directions must be >= 1");
    if (policy.hidden < 0) throw ConfigError("hidden must be >= 0");
    if (!(policy.search_spread >= 0.0)) throw ConfigError("search_spread must be >= 0");
    if (eval.n_heldout < 0) throw ConfigError("n_heldout must be >= 0");
    if (!(eval.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  }
};

enum class Preset { Toy, Paper };

inline Preset parse_preset(const std::string& s) {
  if (s == "toy") return Preset::Toy;
  if (s == "paper") return Preset::Paper;
  throw ConfigError("unknown preset '" + s + "' (expected toy or paper)");
}

inline RunConfig preset_config(Preset p) {
  RunConfig c;
  c.train = p == Preset::Paper ? TrainConfig::paper_preset() : TrainConfig::toy_preset();
  return c;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

namespace detail {

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field int_field(std::string sec, std::string key, T RunConfig::*group, std::int64_t T::*m) {
  return {std::move(sec), std::move(key),
          [group, m](RunConfig& c, const std::string& v) { c.*group.*m = text::parse_int(v); },
          [group, m](const RunConfig& c) { return std::to_string(c.*group.*m); }};
}

template <class T>
Field seed_field(std::string sec, std::string key, T RunConfig::*group, std::uint64_t T::*m) {
  return {std::move(sec), std::move(key),
          [group, m](RunConfig& c, const std::string& v) {
            const std::int64_t x = text::parse_int(v);
            if (x < 0) throw ConfigError("seed must be >= 0");
            c.*group.*m = static_cast<std::uint64_t>(x);
          },
          [group, m](const RunConfig& c) { return std::to_string(c.*group.*m); }};
}

template <class T>
Field real_field(std::string sec, std::string key, T RunConfig::*group, double T::*m) {
  return {std::move(sec), std::move(key),
          [group, m](RunConfig& c, const std::string& v) { c.*group.*m = text::parse_real(v); },
          [group, m](const RunConfig& c) { return text::format_real(c.*group.*m); }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    using RC = RunConfig;
    std::vector<Field> v;
    v.push_back(seed_field("corpus", "seed", &RC::corpus, &CorpusParams::seed));
    v.push_back(int_field("corpus", "n_papers", &RC::corpus, &CorpusParams::n_papers));
    v.push_back(int_field("corpus", "n_queries", &RC::corpus, &CorpusParams::n_queries));
    v.push_back(int_field("corpus", "dim", &RC::corpus, &CorpusParams::dim));
    v.push_back(int_field("corpus", "avg_refs", &RC::corpus, &CorpusParams::avg_refs));
    v.push_back(int_field("corpus", "n_clusters", &RC::corpus, &CorpusParams::n_clusters));
    v.push_back(int_field("corpus", "n_years", &RC::corpus, &CorpusParams::n_years));
    v.push_back(real_field("corpus", "truth_threshold", &RC::corpus, &CorpusParams::truth_threshold));
    v.push_back(real_field("corpus", "cluster_spread", &RC::corpus, &CorpusParams::cluster_spread));
    v.push_back(real_field("corpus", "query_spread", &RC::corpus, &CorpusParams::query_spread));
    v.push_back(real_field("corpus", "citation_sharpness", &RC::corpus, &CorpusParams::citation_sharpness));

    v.push_back(real_field("env", "tau", &RC::env, &EnvConfig::tau));
    v.push_back(int_field("env", "k", &RC::env, &EnvConfig::k));
    v.push_back(real_field("env", "eta", &RC::env, &EnvConfig::eta));
    v.push_back(int_field("env", "l_expanded", &RC::env, &EnvConfig::l_expanded));
    v.push_back(int_field("env", "l_unexpanded", &RC::env, &EnvConfig::l_unexpanded));
    v.push_back(int_field("env", "stagnation_limit", &RC::env, &EnvConfig::stagnation_limit));
    v.push_back(int_field("env", "max_turns", &RC::env, &EnvConfig::max_turns));
    v.push_back(int_field("env", "max_calls", &RC::env, &EnvConfig::max_calls));
    v.push_back(int_field("env", "search_limit", &RC::env, &EnvConfig::search_limit));
    v.push_back(int_field("env", "n_seed", &RC::env, &EnvConfig::n_seed));

    v.push_back(int_field("policy", "n_directions", &RC::policy, &PolicyOptions::n_directions));
    v.push_back(int_field("policy", "hidden", &RC::policy, &PolicyOptions::hidden));
    v.push_back(real_field("policy", "search_spread", &RC::policy, &PolicyOptions::search_spread));

    v.push_back({"train", "algorithm",
                 [](RunConfig& c, const std::string& s) { c.train.algorithm = parse_algorithm(s); },
                 [](const RunConfig& c) { return to_string(c.train.algorithm); }});
    v.push_back(real_field("train", "gamma", &RC::train, &TrainConfig::gamma));
    v.push_back(real_field("train", "lambda", &RC::train, &TrainConfig::lambda));
    v.push_back(real_field("train", "eps_low", &RC::train, &TrainConfig::eps_low));
    v.push_back(real_field("train", "eps_high", &RC::train, &TrainConfig::eps_high));
    v.push_back(real_field("train", "kl_coef", &RC::train, &TrainConfig::kl_coef));
    v.push_back(real_field("train", "actor_lr", &RC::train, &TrainConfig::actor_lr));
    v.push_back(real_field("train", "critic_lr", &RC::train, &TrainConfig::critic_lr));
    v.push_back(int_field("train", "episodes_per_step", &RC::train, &TrainConfig::episodes_per_step));
    v.push_back(int_field("train", "update_epochs", &RC::train, &TrainConfig::update_epochs));
    v.push_back(int_field("train", "minibatches", &RC::train, &TrainConfig::minibatches));
    v.push_back(int_field("train", "pretrain_steps", &RC::train, &TrainConfig::pretrain_steps));
    v.push_back(int_field("train", "total_steps", &RC::train, &TrainConfig::total_steps));
    v.push_back(int_field("train", "gspo_group", &RC::train, &TrainConfig::gspo_group));
    v.push_back(int_field("train", "n_train_queries", &RC::train, &TrainConfig::n_train_queries));
    v.push_back(real_field("train", "max_grad_norm", &RC::train, &TrainConfig::max_grad_norm));
    v.push_back(seed_field("train", "seed", &RC::train, &TrainConfig::seed));

    v.push_back(int_field("eval", "n_heldout", &RC::eval, &EvalOptions::n_heldout));
    v.push_back(real_field("eval", "temperature", &RC::eval, &EvalOptions::temperature));
    v.push_back(seed_field("eval", "seed", &RC::eval, &EvalOptions::seed));
    return v;
  }();
  return f;
}

inline std::string nearest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const Field& f : fields()) {
    const std::size_t d = edit_distance(key, f.key);
    if (d < best_d) {
      best_d = d;
      best = f.key;
    }
  }
  return best;
}

}  // namespace detail

inline std::vector<std::string> config_sections() { return {"corpus", "env", "policy", "train", "eval"}; }

// Applies the file's settings on top of `base`.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  const auto sections = config_sections();
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line(text::trim(raw));
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = std::string(text::trim(std::string_view(line).substr(1, line.size() - 2)));
      if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key(text::trim(std::string_view(line).substr(0, eq)));
    const std::string value(text::trim(std::string_view(line).substr(eq + 1)));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
    const auto& fs = detail::fields();
    const auto it = std::find_if(fs.begin(), fs.end(),
                                 [&](const detail::Field& f) { return f.section == section && f.key == key; });
    if (it == fs.end()) {
      throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]; did you mean '" +
                        detail::nearest_key(key) + "'?");
    }
    try {
      it->set(base, value);
    } catch (const FormatError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig parse_config_string(const std::string& s, RunConfig base = {}) {
  std::istringstream in(s);
  return parse_config(in, std::move(base));
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config file not found: " + path);
  return parse_config(in, std::move(base));
}

// Every key, in a form parse_config reads back to the same values.
inline void write_config(std::ostream& out, const RunConfig& c) {
  std::string section;
  for (const detail::Field& f : detail::fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(c) << '\n';
  }
}

inline PolicySpec policy_spec(const RunConfig& c, const Corpus& corpus) {
  PolicySpec spec;
  spec.layout = layout_for(c.env, corpus);
  spec.n_directions = static_cast<std::size_t>(c.policy.n_directions);
  spec.hidden = static_cast<std::size_t>(c.policy.hidden);
  spec.max_calls = static_cast<std::size_t>(c.env.max_calls);
  spec.search_spread = c.policy.search_spread;
  return spec;
}

// Query ids [n_train, n_train + n_heldout), clipped to the corpus.
inline std::vector<QueryId> heldout_queries(const RunConfig& c, const Corpus& corpus) {
  std::vector<QueryId> q;
  const auto n = static_cast<std::int64_t>(corpus.queries().size());
  for (std::int64_t i = c.train.n_train_queries; i < std::min(n, c.train.n_train_queries + c.eval.n_heldout); ++i) {
    q.push_back(static_cast<QueryId>(i));
  }
  return q;
}

}  // namespace scout
