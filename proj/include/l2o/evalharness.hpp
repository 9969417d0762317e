#pragma once

// Benchmark harness: runs every registered algorithm from a shared starting
// point on each test instance, drops instances where designated baselines
// diverge, and aggregates per-iteration margins of victory.

#include "l2o/baseline_opt.hpp"
#include "l2o/optmdp.hpp"
#include "l2o/parallel.hpp"
#include "l2o/policy_net.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace l2o {

inline constexpr double kMarginCap = 1e6;

/// MoV(A) = min_{B != A} value(B) - value(A). Non-finite inputs count as
/// +inf. The result may contain +-inf; callers cap for aggregation.
inline std::map<std::string, double> margin_of_victory(const std::map<std::string, double>& values) {
  require(values.size() >= 2, "margin_of_victory: need at least two algorithms");
  std::map<std::string, double> v;
  bool any_finite = false;
  for (const auto& [name, x] : values) {
    v[name] = std::isfinite(x) ? x : kInf;
    any_finite = any_finite || std::isfinite(x);
  }
  require(any_finite, "margin_of_victory: every value is non-finite");

  // best and second best suffice for the min over the others
  std::string best_name;
  double best = kInf, second = kInf;
  for (const auto& [name, x] : v) {
    if (best_name.empty() || x < best) {
      second = best;
      best = x;
      best_name = name;
    } else if (x < second) {
      second = x;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [name, x] : v) {
    const double others = name == best_name ? second : best;
    if (std::isinf(x) && std::isinf(others))
      out[name] = 0.0;  // unreachable when any value is finite and >= 2 entries
    else if (std::isinf(x))
      out[name] = -kInf;
    else
      out[name] = others - x;
  }
  return out;
}

inline bool detect_divergence(const std::vector<double>& values) {
  if (values.empty()) return false;
  const double f0 = values.front();
  for (double v : values)
    if (!std::isfinite(v) || v > 1e6 * std::max(1.0, f0)) return true;
  const std::size_t q = values.size() / 4;
  if (q == 0) return false;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    first += values[i];
    last += values[values.size() - q + i];
  }
  first /= static_cast<double>(q);
  last /= static_cast<double>(q);
  return last > 10.0 * first && last > first;
}

inline bool detect_divergence(const Trace& trace) { return detect_divergence(trace.objective_values); }

/// value trace of an algorithm on one instance: (instance index, x0, T)
template <class F>
using AlgorithmRunner = std::function<std::vector<double>(std::size_t, const F&, const ParamVector&, int)>;

template <class F>
struct Algorithm {
  std::string name;
  AlgorithmRunner<F> run;
};

template <Objective F>
Algorithm<F> baseline_algorithm(const std::string& name, const BaselineConfig& cfg) {
  return {name, [cfg](std::size_t, const F& f, const ParamVector& x0, int T) {
            return run_baseline(cfg, f, x0, T).objective_values;
          }};
}

/// The learned optimizer, driven by its mean action.
template <Objective F>
Algorithm<F> policy_algorithm(const std::string& name, const PolicyParams& policy, const MdpConfig& mdp) {
  return {name, [policy, mdp](std::size_t, const F& f, const ParamVector& x0, int T) {
            const ActionSampler act = [&](int, const OptState& s, Rng&) {
              return forward_mean(policy, featurize(s, mdp));
            };
            return rollout(f, act, x0, T, 0, mdp).costs;
          }};
}

struct EvalSettings {
  int horizon = 100;
  std::set<std::string> exclusion_algorithms = {"cg", "lbfgs"};
  int jobs = 1;
};

struct EvalReport {
  int horizon = 0;
  std::vector<std::string> algorithms;  // sorted
  std::size_t instances = 0;
  // [algorithm][instance] -> T+1 values
  std::map<std::string, std::vector<std::vector<double>>> traces;
  std::map<std::string, std::vector<bool>> diverged;
  std::vector<std::size_t> excluded;
  // over non-excluded instances, per iteration
  std::map<std::string, std::vector<double>> mean_margin;
  std::map<std::string, std::vector<double>> mean_objective;
  std::map<std::string, int> capped_points;
  nlohmann::json metadata = nlohmann::json::object();

  std::vector<std::size_t> included() const {
    std::vector<std::size_t> out;
    std::size_t e = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      if (e < excluded.size() && excluded[e] == i) {
        ++e;
        continue;
      }
      out.push_back(i);
    }
    return out;
  }
  double final_mean_objective(const std::string& alg) const { return mean_objective.at(alg).back(); }
};

template <Objective F>
EvalReport evaluate(std::vector<Algorithm<F>> algs, const std::vector<F>& test_set,
                    const std::vector<ParamVector>& x0s, const EvalSettings& cfg = {}) {
  require(!test_set.empty(), "evaluate: empty test set");
  require(x0s.size() == test_set.size(), "evaluate: one x0 per instance required");
  require(algs.size() >= 2, "evaluate: need at least two algorithms");
  require(cfg.horizon >= 1, "evaluate: horizon must be >= 1");
  std::sort(algs.begin(), algs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t a = 1; a < algs.size(); ++a)
    require(algs[a].name != algs[a - 1].name, "evaluate: duplicate algorithm name " + algs[a].name);

  const std::size_t I = test_set.size(), A = algs.size();
  const int T = cfg.horizon;
  EvalReport rep;
  rep.horizon = T;
  rep.instances = I;
  for (const auto& a : algs) {
    rep.algorithms.push_back(a.name);
    rep.traces[a.name].resize(I);
    rep.diverged[a.name].assign(I, false);
  }

  std::vector<std::vector<double>> runs(A * I);
  parallel_for(A * I, cfg.jobs, [&](std::size_t job) {
    const std::size_t a = job / I, i = job % I;
    runs[job] = algs[a].run(i, test_set[i], x0s[i], T);
    require(runs[job].size() == static_cast<std::size_t>(T) + 1,
            "evaluate: " + algs[a].name + " returned a trace of the wrong length");
  });
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t i = 0; i < I; ++i) {
      auto& tr = runs[a * I + i];
      rep.diverged[algs[a].name][i] = detect_divergence(tr);
      rep.traces[algs[a].name][i] = std::move(tr);
    }

  for (std::size_t i = 0; i < I; ++i) {
    bool drop = false;
    for (const auto& name : cfg.exclusion_algorithms)
      if (rep.diverged.count(name) && rep.diverged[name][i]) drop = true;
    if (drop) rep.excluded.push_back(i);
  }
  const auto keep = rep.included();
  if (keep.empty()) throw std::runtime_error("evaluate: every test instance was excluded");

  for (const auto& name : rep.algorithms) {
    rep.mean_margin[name].assign(static_cast<std::size_t>(T) + 1, 0.0);
    rep.mean_objective[name].assign(static_cast<std::size_t>(T) + 1, 0.0);
    rep.capped_points[name] = 0;
  }
  const double inv = 1.0 / static_cast<double>(keep.size());
  for (std::size_t t = 0; t <= static_cast<std::size_t>(T); ++t) {
    for (std::size_t i : keep) {
      std::map<std::string, double> vals;
      for (const auto& name : rep.algorithms) {
        vals[name] = rep.traces[name][i][t];
        rep.mean_objective[name][t] += inv * vals[name];
      }
      bool any_finite = false;
      for (const auto& [_, v] : vals) any_finite = any_finite || std::isfinite(v);
      if (!any_finite) {
        for (const auto& name : rep.algorithms) ++rep.capped_points[name];
        continue;  // every margin is undefined; contributes 0
      }
      for (const auto& [name, m] : margin_of_victory(vals)) {
        double c = m;
        if (!std::isfinite(c) || std::abs(c) > kMarginCap) {
          c = std::clamp(std::isnan(c) ? -kMarginCap : c, -kMarginCap, kMarginCap);
          ++rep.capped_points[name];
        }
        rep.mean_margin[name][t] += inv * c;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_columns(std::ostream& os, const std::string& provenance, const std::vector<std::string>& names,
                          const std::function<double(const std::string&, std::size_t)>& cell, std::size_t rows) {
  if (!provenance.empty()) os << "# " << provenance << '\n';
  os << "iteration";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t t = 0; t < rows; ++t) {
    os << t;
    for (const auto& n : names) os << ',' << fmt(cell(n, t));
    os << '\n';
  }
}

}  // namespace detail

inline void write_summary_mov_csv(std::ostream& os, const EvalReport& r, const std::string& provenance = "") {
  detail::write_columns(
      os, provenance, r.algorithms, [&](const std::string& n, std::size_t t) { return r.mean_margin.at(n)[t]; },
      static_cast<std::size_t>(r.horizon) + 1);
}

inline void write_summary_objective_csv(std::ostream& os, const EvalReport& r, const std::string& provenance = "") {
  detail::write_columns(
      os, provenance, r.algorithms, [&](const std::string& n, std::size_t t) { return r.mean_objective.at(n)[t]; },
      static_cast<std::size_t>(r.horizon) + 1);
}

inline void write_instance_trace_csv(std::ostream& os, const EvalReport& r, std::size_t instance,
                                     const std::string& provenance = "") {
  detail::write_columns(
      os, provenance, r.algorithms,
      [&](const std::string& n, std::size_t t) { return r.traces.at(n)[instance][t]; },
      static_cast<std::size_t>(r.horizon) + 1);
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["horizon"] = r.horizon;
  j["instances"] = r.instances;
  j["algorithms"] = r.algorithms;
  j["excluded_instances"] = r.excluded;
  j["excluded_fraction"] = static_cast<double>(r.excluded.size()) / static_cast<double>(r.instances);
  nlohmann::json per = nlohmann::json::object();
  for (const auto& name : r.algorithms) {
    int div = 0;
    for (bool d : r.diverged.at(name)) div += d ? 1 : 0;
    const auto& mov = r.mean_margin.at(name);
    per[name] = {{"diverged_runs", div},
                 {"capped_margin_points", r.capped_points.at(name)},
                 {"final_mean_objective", detail::fmt(r.mean_objective.at(name).back())},
                 {"final_mean_margin", detail::fmt(mov.back())}};
  }
  j["algorithms_summary"] = per;
  j["metadata"] = r.metadata;
  return j;
}

/// Writes summary_mov.csv, summary_objective.csv, traces/instance_NNNN.csv
/// and report.json under `dir`.
inline void write_report(const std::filesystem::path& dir, const EvalReport& r, const std::string& provenance = "") {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "traces");
  auto open = [](const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
  };
  {
    auto os = open(dir / "summary_mov.csv");
    write_summary_mov_csv(os, r, provenance);
  }
  {
    auto os = open(dir / "summary_objective.csv");
    write_summary_objective_csv(os, r, provenance);
  }
  for (std::size_t i = 0; i < r.instances; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "instance_%04zu.csv", i);
    auto os = open(dir / "traces" / name);
    write_instance_trace_csv(os, r, i, provenance);
  }
  auto os = open(dir / "report.json");
  os << to_json(r).dump(2) << '\n';
}

}  // namespace l2o
