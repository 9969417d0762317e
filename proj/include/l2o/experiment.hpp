#pragma once

// Reproducible experiment stages (generate, tune, train, eval, report) over a
// single output directory. Every stage is a pure function of the resolved
// configuration and master seed.

#include "l2o/l2o.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace l2o {

namespace fs = std::filesystem;

/// Unusable config values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A required artifact from an earlier stage is absent.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int default_train_count(Family f) {
  switch (f) {
    case Family::Logistic: return 90;
    case Family::RobustReg: return 120;
    case Family::NeuralNet: return 80;
  }
  return 90;
}

struct ExperimentConfig {
  Family family = Family::Logistic;
  int train_count = 0;  // 0 selects the family default
  int test_count = 100;
  int horizon_train = 40;
  int samples_per_instance = 20;
  int horizon_eval = 100;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  std::string out = "run";

  int gps_iterations = 20;
  double gps_epsilon = 1.0;
  double gps_initial_variance = 0.01;
  double gps_dynamics_ridge = 1e-3;
  double gps_entropy_start = 1e-3;
  double gps_entropy_factor = 2.0;
  double gps_entropy_cap = 1.0;
  double gps_entropy_weight = 1.0;
  std::string gps_anchor = "controller";
  double gps_learning_rate = 1e-3;
  int gps_epochs = 200;
  int policy_hidden = 50;
  int history = 25;
  bool include_current_gradient = false;

  std::vector<double> step_sizes = default_step_sizes();
  std::vector<double> momentum_decays = default_momentum_decays();
  int lbfgs_memory = 10;

  int resolved_train_count() const { return train_count > 0 ? train_count : default_train_count(family); }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    need(train_count >= 0, "train_count must be >= 1 (or 0 for the family default)");
    need(test_count >= 1, "test_count must be >= 1");
    need(horizon_train >= 1 && horizon_eval >= 1, "horizons must be >= 1");
    need(samples_per_instance >= 2, "samples_per_instance must be >= 2");
    need(jobs >= 1, "jobs must be >= 1");
    need(gps_iterations >= 1, "gps_iterations must be >= 1");
    need(gps_epsilon > 0.0, "gps_epsilon must be > 0");
    need(gps_initial_variance > 0.0, "gps_initial_variance must be > 0");
    need(gps_dynamics_ridge >= 0.0, "gps_dynamics_ridge must be >= 0");
    need(gps_entropy_weight > 0.0, "gps_entropy_weight must be > 0");
    need(gps_anchor == "controller" || gps_anchor == "policy", "gps_anchor must be controller or policy");
    need(gps_learning_rate > 0.0 && gps_epochs >= 1, "policy training needs a positive rate and epochs");
    need(policy_hidden >= 1 && history >= 1, "policy_hidden and history must be >= 1");
    need(!step_sizes.empty() && !momentum_decays.empty(), "baseline grid must be non-empty");
    for (double s : step_sizes) need(s > 0.0, "step sizes must be > 0");
    for (double a : momentum_decays) need(a >= 0.0 && a < 1.0, "momentum decays must lie in [0, 1)");
    need(lbfgs_memory >= 1, "lbfgs_memory must be >= 1");
  }

  MdpConfig mdp() const { return {history, include_current_gradient}; }

  std::vector<BaselineConfig> grid(Method m) const {
    std::vector<BaselineConfig> g;
    for (double s : step_sizes) {
      switch (m) {
        case Method::GD: g.push_back(BaselineConfig::gd(s)); break;
        case Method::Momentum:
          for (double a : momentum_decays) g.push_back(BaselineConfig::momentum(s, a));
          break;
        case Method::CG: g.push_back(BaselineConfig::cg(s)); break;
        case Method::LBFGS: g.push_back(BaselineConfig::lbfgs(s, lbfgs_memory)); break;
      }
    }
    return g;
  }

  GpsSettings gps() const {
    GpsSettings g;
    g.iterations = gps_iterations;
    g.samples_per_instance = samples_per_instance;
    g.horizon = horizon_train;
    g.epsilon = gps_epsilon;
    g.initial_variance = gps_initial_variance;
    g.dynamics_ridge = gps_dynamics_ridge;
    g.entropy_start = gps_entropy_start;
    g.entropy_factor = gps_entropy_factor;
    g.entropy_cap = gps_entropy_cap;
    g.hidden = policy_hidden;
    g.anchor = trust_anchor_from_string(gps_anchor);
    g.mdp = mdp();
    g.train.learning_rate = gps_learning_rate;
    g.train.epochs = gps_epochs;
    g.trust_region.lqg.entropy_weight = gps_entropy_weight;
    g.momentum_grid.clear();
    for (double s : step_sizes)
      for (double a : momentum_decays) g.momentum_grid.emplace_back(s, a);
    g.seed = derive_seed(master_seed, "gps");
    g.jobs = jobs;
    return g;
  }
};

/// Everything that influences results; `out` and `jobs` are excluded.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"family", to_string(c.family)},
          {"train_count", c.resolved_train_count()},
          {"test_count", c.test_count},
          {"horizon_train", c.horizon_train},
          {"samples_per_instance", c.samples_per_instance},
          {"horizon_eval", c.horizon_eval},
          {"master_seed", c.master_seed},
          {"gps_iterations", c.gps_iterations},
          {"gps_epsilon", c.gps_epsilon},
          {"gps_initial_variance", c.gps_initial_variance},
          {"gps_dynamics_ridge", c.gps_dynamics_ridge},
          {"gps_entropy_start", c.gps_entropy_start},
          {"gps_entropy_factor", c.gps_entropy_factor},
          {"gps_entropy_cap", c.gps_entropy_cap},
          {"gps_entropy_weight", c.gps_entropy_weight},
          {"gps_anchor", c.gps_anchor},
          {"gps_learning_rate", c.gps_learning_rate},
          {"gps_epochs", c.gps_epochs},
          {"policy_hidden", c.policy_hidden},
          {"history", c.history},
          {"include_current_gradient", c.include_current_gradient},
          {"step_sizes", c.step_sizes},
          {"momentum_decays", c.momentum_decays},
          {"lbfgs_memory", c.lbfgs_memory}};
}

/// FNV-1a of the canonical JSON dump of the config.
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

inline std::string provenance(const ExperimentConfig& c) {
  return "config_hash=" + config_hash(c) + " seed=" + std::to_string(c.master_seed);
}

// ---------------------------------------------------------------------------
// Seeds. Each stage draws from derive_seed(master, tag, index).

inline std::uint64_t train_instance_seed(const ExperimentConfig& c, std::size_t i) {
  return derive_seed(c.master_seed, "train-instance", i);
}
inline std::uint64_t test_instance_seed(const ExperimentConfig& c, std::size_t i) {
  return derive_seed(c.master_seed, "test-instance", i);
}
inline std::uint64_t tune_x0_seed(const ExperimentConfig& c, std::size_t i) {
  return derive_seed(c.master_seed, "tune-x0", i);
}
inline std::uint64_t eval_x0_seed(const ExperimentConfig& c, std::size_t i) {
  return derive_seed(c.master_seed, "eval-x0", i);
}

// ---------------------------------------------------------------------------
// Artifact layout

struct Layout {
  fs::path root;
  fs::path train_dir() const { return root / "data" / "train"; }
  fs::path test_dir() const { return root / "data" / "test"; }
  fs::path tuned() const { return root / "tuned" / "baselines.json"; }
  fs::path train_out() const { return root / "train"; }
  fs::path state() const { return train_out() / "gps_state.json"; }
  fs::path policy() const { return train_out() / "policy.json"; }
  fs::path checkpoint(int iteration) const {
    char name[40];
    std::snprintf(name, sizeof name, "checkpoint_%03d.json", iteration);
    return train_out() / name;
  }
  fs::path eval_dir() const { return root / "eval"; }
};

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

inline nlohmann::json read_json(const fs::path& p, const std::string& what) {
  std::ifstream is(p);
  if (!is) throw MissingArtifact("missing " + what + ": " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw MissingArtifact("unreadable " + what + " " + p.string() + ": " + e.what());
  }
}

inline nlohmann::json with_provenance(nlohmann::json body, const ExperimentConfig& c) {
  body["config_hash"] = config_hash(c);
  body["seed"] = c.master_seed;
  return body;
}

inline std::string instance_name(std::size_t i) {
  char name[48];
  std::snprintf(name, sizeof name, "instance_%04zu.json", i);
  return name;
}

inline std::vector<ObjectiveInstance> load_set(const fs::path& dir, std::size_t count, const std::string& what) {
  std::vector<ObjectiveInstance> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(instance_from_json(read_json(dir / instance_name(i), what + " instance").at("instance")));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline void cmd_generate(const ExperimentConfig& c) {
  c.validate();
  const Layout L{c.out};
  auto dump = [&](const fs::path& dir, std::size_t count, auto seed_of) {
    for (std::size_t i = 0; i < count; ++i) {
      const ObjectiveInstance inst = generate(c.family, seed_of(c, i));
      nlohmann::json j = detail::with_provenance({{"instance", to_json(inst)}}, c);
      detail::write_text(dir / detail::instance_name(i), j.dump() + "\n");
    }
  };
  dump(L.train_dir(), static_cast<std::size_t>(c.resolved_train_count()), train_instance_seed);
  dump(L.test_dir(), static_cast<std::size_t>(c.test_count), test_instance_seed);
  detail::write_text(c.out / fs::path("config.json"), detail::with_provenance(to_json(c), c).dump(2) + "\n");
}

inline std::vector<ObjectiveInstance> load_train_set(const ExperimentConfig& c) {
  return detail::load_set(Layout{c.out}.train_dir(), static_cast<std::size_t>(c.resolved_train_count()), "train");
}

inline std::vector<ObjectiveInstance> load_test_set(const ExperimentConfig& c) {
  return detail::load_set(Layout{c.out}.test_dir(), static_cast<std::size_t>(c.test_count), "test");
}

struct TunedBaselines {
  std::vector<std::pair<std::string, BaselineConfig>> configs;  // gd, momentum, cg, lbfgs
};

/// Grid search per baseline on the training set at the evaluation horizon.
inline TunedBaselines tune_baselines(const ExperimentConfig& c, const std::vector<ObjectiveInstance>& train) {
  std::vector<ParamVector> x0s;
  for (std::size_t i = 0; i < train.size(); ++i)
    x0s.push_back(sample_initial_point(train[i].param_dim(), tune_x0_seed(c, i)));
  const std::vector<Method> methods = {Method::GD, Method::Momentum, Method::CG, Method::LBFGS};
  std::vector<BaselineConfig> best(methods.size());
  parallel_for(methods.size(), c.jobs,
               [&](std::size_t m) { best[m] = grid_search(methods[m], train, c.grid(methods[m]), c.horizon_eval, x0s); });
  TunedBaselines out;
  for (std::size_t m = 0; m < methods.size(); ++m) out.configs.emplace_back(to_string(methods[m]), best[m]);
  return out;
}

inline void cmd_tune(const ExperimentConfig& c) {
  c.validate();
  const auto train = load_train_set(c);
  const TunedBaselines tuned = tune_baselines(c, train);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, cfg] : tuned.configs) j["baselines"][name] = to_json(cfg);
  j["tuning_horizon"] = c.horizon_eval;
  detail::write_text(Layout{c.out}.tuned(), detail::with_provenance(j, c).dump(2) + "\n");
}

inline TunedBaselines load_tuned(const ExperimentConfig& c) {
  const nlohmann::json j = detail::read_json(Layout{c.out}.tuned(), "tuned baselines");
  TunedBaselines out;
  for (const auto& [name, cfg] : j.at("baselines").items()) out.configs.emplace_back(name, baseline_config_from_json(cfg));
  return out;
}

inline std::string training_log_header() {
  return "iteration,mean_cumulative_cost,mean_kl,mean_eta,entropy_coef,supervised_loss,mean_log_var,"
         "policy_cumulative_cost,policy_final_objective,mean_epsilon,regression_pairs,bracket_exhausted,restored\n";
}

inline std::string training_log_row(const GpsIterationMetrics& m) {
  std::ostringstream os;
  os << m.iteration << ',' << detail::fmt(m.mean_cumulative_cost) << ',' << detail::fmt(m.mean_kl) << ','
     << detail::fmt(m.mean_eta) << ',' << detail::fmt(m.entropy_coef) << ',' << detail::fmt(m.supervised_loss) << ','
     << detail::fmt(m.mean_log_var) << ',' << detail::fmt(m.policy_cumulative_cost) << ','
     << detail::fmt(m.policy_final_objective) << ',' << detail::fmt(m.mean_epsilon) << ',' << m.regression_pairs
     << ',' << m.bracket_exhausted << ',' << (m.restored ? 1 : 0) << '\n';
  return os.str();
}

/// Trains from scratch, or continues from train/gps_state.json when `resume`
/// is set and the state exists. `stop_after` (if > 0) ends the run once that
/// many iterations are complete, leaving a resumable state.
inline GpsState cmd_train(const ExperimentConfig& c, bool resume = false, int stop_after = 0) {
  c.validate();
  const Layout L{c.out};
  const auto train = load_train_set(c);
  const GpsSettings g = c.gps();
  const int total = g.iterations;

  GpsState st;
  if (resume && fs::exists(L.state())) {
    const nlohmann::json j = detail::read_json(L.state(), "training state");
    if (j.at("config_hash") != config_hash(c))
      throw ConfigError("training state was produced by a different configuration");
    st = gps_state_from_json(j.at("state"));
  } else {
    st = gps_initial_state(train, g);
  }

  GpsObserver obs;
  obs.on_checkpoint = [&](const GpsState& s) {
    const std::string text = detail::with_provenance({{"state", to_json(s)}}, c).dump() + "\n";
    detail::write_text(L.checkpoint(s.iteration), text);
    detail::write_text(L.state(), text);
    std::string log = "# " + provenance(c) + "\n" + training_log_header();
    for (const auto& m : s.history) log += training_log_row(m);
    detail::write_text(L.train_out() / "log.csv", log);
  };
  obs.on_metrics = [](const GpsIterationMetrics& m) {
    std::cerr << "gps iteration " << m.iteration << ": cost " << m.mean_cumulative_cost << ", kl " << m.mean_kl
              << ", loss " << m.supervised_loss << ", policy final " << m.policy_final_objective << '\n';
  };
  st = gps_continue(train, g, std::move(st), obs, stop_after);
  if (st.iteration >= total) {
    nlohmann::json meta = detail::with_provenance({{"gps_iterations", st.iteration}}, c);
    meta["mdp"] = {{"history", c.history}, {"include_current_gradient", c.include_current_gradient}};
    detail::write_text(L.policy(), l2o::to_json(st.policy, meta).dump() + "\n");
  }
  return st;
}

inline EvalReport run_evaluation(const ExperimentConfig& c, const PolicyParams& policy, const TunedBaselines& tuned,
                                 const std::vector<ObjectiveInstance>& test) {
  std::vector<Algorithm<ObjectiveInstance>> algs;
  algs.push_back(policy_algorithm<ObjectiveInstance>("autonomous", policy, c.mdp()));
  for (const auto& [name, cfg] : tuned.configs) algs.push_back(baseline_algorithm<ObjectiveInstance>(name, cfg));
  std::vector<ParamVector> x0s;
  for (std::size_t i = 0; i < test.size(); ++i)
    x0s.push_back(sample_initial_point(test[i].param_dim(), eval_x0_seed(c, i)));
  EvalSettings es;
  es.horizon = c.horizon_eval;
  es.jobs = c.jobs;
  EvalReport rep = evaluate(std::move(algs), test, x0s, es);
  rep.metadata = detail::with_provenance(nlohmann::json::object(), c);
  rep.metadata["config"] = to_json(c);
  for (const auto& [name, cfg] : tuned.configs) rep.metadata["baselines"][name] = to_json(cfg);
  return rep;
}

inline EvalReport cmd_eval(const ExperimentConfig& c) {
  c.validate();
  const Layout L{c.out};
  const PolicyParams policy = policy_from_json(detail::read_json(L.policy(), "policy checkpoint"));
  const TunedBaselines tuned = load_tuned(c);
  const auto test = load_test_set(c);
  EvalReport rep = run_evaluation(c, policy, tuned, test);
  write_report(L.eval_dir(), rep, provenance(c));
  return rep;
}

/// Plain-text summary of eval/report.json.
inline std::string cmd_report(const ExperimentConfig& c) {
  const nlohmann::json j = detail::read_json(Layout{c.out}.eval_dir() / "report.json", "evaluation report");
  std::ostringstream os;
  os << provenance(c) << '\n';
  os << "family " << j.at("metadata").at("config").at("family").get<std::string>() << ", horizon "
     << j.at("horizon") << ", instances " << j.at("instances") << ", excluded " << j.at("excluded_instances").size()
     << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %22s %22s %9s %7s\n", "algorithm", "final mean objective",
                "final mean margin", "diverged", "capped");
  os << line;
  for (const auto& [name, s] : j.at("algorithms_summary").items()) {
    std::snprintf(line, sizeof line, "%-12s %22s %22s %9d %7d\n", name.c_str(),
                  s.at("final_mean_objective").get<std::string>().c_str(),
                  s.at("final_mean_margin").get<std::string>().c_str(), s.at("diverged_runs").get<int>(),
                  s.at("capped_margin_points").get<int>());
    os << line;
  }
  const std::string text = os.str();
  detail::write_text(Layout{c.out}.eval_dir() / "report.txt", text);
  return text;
}

}  // namespace l2o
