#pragma once

// Hand-engineered first-order baselines and their grid-search tuning.

#include "l2o/line_search.hpp"
#include "l2o/objective.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <string>
#include <vector>

namespace l2o {

enum class Method { GD, Momentum, CG, LBFGS };
enum class LineSearch { None, Backtracking, StrongWolfe, Exact };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::GD: return "gd";
    case Method::Momentum: return "momentum";
    case Method::CG: return "cg";
    case Method::LBFGS: return "lbfgs";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "gd") return Method::GD;
  if (s == "momentum") return Method::Momentum;
  if (s == "cg") return Method::CG;
  if (s == "lbfgs") return Method::LBFGS;
  throw ContractViolation("unknown baseline method: " + s);
}

inline std::string to_string(LineSearch ls) {
  switch (ls) {
    case LineSearch::None: return "none";
    case LineSearch::Backtracking: return "backtracking";
    case LineSearch::StrongWolfe: return "strong_wolfe";
    case LineSearch::Exact: return "exact";
  }
  return "unknown";
}

inline LineSearch line_search_from_string(const std::string& s) {
  if (s == "none") return LineSearch::None;
  if (s == "backtracking") return LineSearch::Backtracking;
  if (s == "strong_wolfe") return LineSearch::StrongWolfe;
  if (s == "exact") return LineSearch::Exact;
  throw ContractViolation("unknown line search: " + s);
}

/// For GD and Momentum `step_size` is the fixed step; for CG and L-BFGS it is
/// the first trial step of the line search (L-BFGS uses 1 after the first
/// iteration, relying on its initial Hessian scaling).
struct BaselineConfig {
  Method method = Method::GD;
  double step_size = 0.1;
  double momentum_decay = 0.0;
  int lbfgs_memory = 10;
  LineSearch line_search = LineSearch::None;

  static BaselineConfig gd(double step) { return {Method::GD, step, 0.0, 10, LineSearch::None}; }
  static BaselineConfig momentum(double step, double decay) {
    return {Method::Momentum, step, decay, 10, LineSearch::None};
  }
  static BaselineConfig cg(double initial_step = 1.0, LineSearch ls = LineSearch::Backtracking) {
    return {Method::CG, initial_step, 0.0, 10, ls};
  }
  static BaselineConfig lbfgs(double initial_step = 1.0, int memory = 10,
                              LineSearch ls = LineSearch::StrongWolfe) {
    return {Method::LBFGS, initial_step, 0.0, memory, ls};
  }
};

inline nlohmann::json to_json(const BaselineConfig& c) {
  return {{"method", to_string(c.method)},
          {"step_size", c.step_size},
          {"momentum_decay", c.momentum_decay},
          {"lbfgs_memory", c.lbfgs_memory},
          {"line_search", to_string(c.line_search)}};
}

inline BaselineConfig baseline_config_from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.step_size = j.at("step_size").get<double>();
  c.momentum_decay = j.at("momentum_decay").get<double>();
  c.lbfgs_memory = j.at("lbfgs_memory").get<int>();
  c.line_search = line_search_from_string(j.at("line_search").get<std::string>());
  return c;
}

struct Trace {
  std::vector<ParamVector> points;
  std::vector<double> objective_values;
  bool diverged = false;

  double final_value() const { return objective_values.back(); }
};

/// A run counts as blown up once its objective is non-finite or exceeds
/// 1e6 * max(1, f(x0)).
inline bool blown_up(double value, double initial) {
  return !std::isfinite(value) || value > 1e6 * std::max(1.0, initial);
}

namespace detail {

// Records iterates and applies the divergence freeze: after the first
// blown-up value the last point is repeated for the remaining steps.
struct TraceRecorder {
  Trace trace;
  double initial = 0.0;
  int horizon = 0;

  bool full() const { return static_cast<int>(trace.points.size()) > horizon; }

  // Returns false once the trace is frozen (or complete).
  bool push(const Vector& x, double fx) {
    trace.points.push_back(x);
    trace.objective_values.push_back(fx);
    if (trace.points.size() == 1) initial = fx;
    if (blown_up(fx, initial)) {
      trace.diverged = true;
      while (!full()) {
        trace.points.push_back(x);
        trace.objective_values.push_back(fx);
      }
      return false;
    }
    return !full();
  }
};

// H*g via the L-BFGS two-loop recursion with H0 = gamma I.
inline Vector two_loop(const std::deque<Vector>& s, const std::deque<Vector>& y,
                       const std::deque<double>& rho, const Vector& g, double gamma) {
  const std::size_t m = s.size();
  std::vector<double> alpha(m);
  Vector q = g;
  for (std::size_t i = m; i-- > 0;) {
    alpha[i] = rho[i] * s[i].dot(q);
    q -= alpha[i] * y[i];
  }
  Vector r = gamma * q;
  for (std::size_t i = 0; i < m; ++i) {
    const double beta = rho[i] * y[i].dot(r);
    r += s[i] * (alpha[i] - beta);
  }
  return r;
}

template <Objective F>
LineSearchResult search(LineSearch kind, const F& f, const Vector& x, double fx, const Vector& g,
                        const Vector& d, double initial) {
  switch (kind) {
    case LineSearch::None: {
      LineSearchResult r;
      r.step = initial;
      r.point = x + initial * d;
      r.value = f.value(r.point);
      r.ok = true;
      r.evaluations = 1;
      return r;
    }
    case LineSearch::Backtracking: return backtracking_armijo(f, x, fx, g, d, initial);
    case LineSearch::StrongWolfe: return strong_wolfe(f, x, fx, g, d, initial);
    case LineSearch::Exact: return exact_line_search(f, x, g, d, initial);
  }
  return {};
}

}  // namespace detail

/// Runs one baseline for `horizon` iterations from `x0`. The trace holds
/// horizon+1 points; a non-finite or exploding objective freezes it.
template <Objective F>
Trace run_baseline(const BaselineConfig& cfg, const F& f, const ParamVector& x0, int horizon) {
  require(horizon >= 1, "run_baseline: horizon must be >= 1");
  require(all_finite(x0), "run_baseline: x0 must be finite");
  require(x0.size() == f.dim(), "run_baseline: x0 dimension mismatch");

  detail::TraceRecorder rec;
  rec.horizon = horizon;
  Vector x = x0;
  double fx = f.value(x);
  if (!rec.push(x, fx)) return rec.trace;
  Vector g = f.gradient(x);
  const auto n = x.size();

  switch (cfg.method) {
    case Method::GD: {
      for (int i = 0; i < horizon; ++i) {
        x = x - cfg.step_size * g;
        fx = f.value(x);
        if (!rec.push(x, fx)) break;
        g = f.gradient(x);
      }
      break;
    }
    case Method::Momentum: {
      // v_i = sum_j alpha^{i-1-j} grad f(x_j), via v <- alpha v + g.
      Vector v = Vector::Zero(n);
      for (int i = 0; i < horizon; ++i) {
        v = cfg.momentum_decay * v + g;
        x = x - cfg.step_size * v;
        fx = f.value(x);
        if (!rec.push(x, fx)) break;
        g = f.gradient(x);
      }
      break;
    }
    case Method::CG: {
      // Polak-Ribiere+ with a restart every n iterations.
      Vector d = -g;
      int since_restart = 0;
      for (int i = 0; i < horizon; ++i) {
        if (g.dot(d) >= 0.0) {
          d = -g;
          since_restart = 0;
        }
        LineSearchResult ls = detail::search(cfg.line_search, f, x, fx, g, d, cfg.step_size);
        if (!ls.ok) {
          // no acceptable step: stay put and restart along steepest descent
          d = -g;
          since_restart = 0;
          if (!rec.push(x, fx)) break;
          continue;
        }
        x = ls.point;
        fx = ls.value;
        if (!rec.push(x, fx)) break;
        Vector g_new = ls.gradient.size() == n ? ls.gradient : f.gradient(x);
        double beta = 0.0;
        if (++since_restart >= n) {
          since_restart = 0;
        } else {
          const double gg = g.squaredNorm();
          beta = gg > 0.0 ? std::max(0.0, g_new.dot(g_new - g) / gg) : 0.0;
        }
        d = -g_new + beta * d;
        g = std::move(g_new);
      }
      break;
    }
    case Method::LBFGS: {
      require(cfg.lbfgs_memory > 0, "run_baseline: lbfgs_memory must be positive");
      std::deque<Vector> s_hist, y_hist;
      std::deque<double> rho_hist;
      for (int i = 0; i < horizon; ++i) {
        Vector d;
        double initial = 1.0;
        if (s_hist.empty()) {
          d = -g;
          initial = cfg.step_size;
        } else {
          const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
          d = -detail::two_loop(s_hist, y_hist, rho_hist, g, gamma);
        }
        LineSearchResult ls = detail::search(cfg.line_search, f, x, fx, g, d, initial);
        if (!ls.ok) {
          s_hist.clear();
          y_hist.clear();
          rho_hist.clear();
          if (!rec.push(x, fx)) break;
          continue;
        }
        Vector g_new = ls.gradient.size() == n ? ls.gradient : f.gradient(ls.point);
        Vector s = ls.point - x;
        Vector y = g_new - g;
        x = ls.point;
        fx = ls.value;
        if (!rec.push(x, fx)) break;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
          s_hist.push_back(std::move(s));
          y_hist.push_back(std::move(y));
          rho_hist.push_back(1.0 / sy);
          if (static_cast<int>(s_hist.size()) > cfg.lbfgs_memory) {
            s_hist.pop_front();
            y_hist.pop_front();
            rho_hist.pop_front();
          }
        }
        g = std::move(g_new);
      }
      break;
    }
  }
  return rec.trace;
}

// ---------------------------------------------------------------------------
// Tuning

/// step_size in {10^k : k = -3..1} x {1, 3}.
inline std::vector<double> default_step_sizes() {
  std::vector<double> steps;
  for (int k = -3; k <= 1; ++k) {
    const double base = std::pow(10.0, k);
    steps.push_back(base);
    steps.push_back(3.0 * base);
  }
  return steps;
}

inline std::vector<double> default_momentum_decays() { return {0.0, 0.3, 0.6, 0.9, 0.95, 0.99}; }

inline std::vector<BaselineConfig> default_grid(Method m) {
  std::vector<BaselineConfig> grid;
  for (double step : default_step_sizes()) {
    switch (m) {
      case Method::GD: grid.push_back(BaselineConfig::gd(step)); break;
      case Method::Momentum:
        for (double a : default_momentum_decays()) grid.push_back(BaselineConfig::momentum(step, a));
        break;
      case Method::CG: grid.push_back(BaselineConfig::cg(step)); break;
      case Method::LBFGS: grid.push_back(BaselineConfig::lbfgs(step)); break;
    }
  }
  return grid;
}

class NoViableConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridScore {
  BaselineConfig config;
  double mean_final = kInf;  // +inf if any run diverged
  int diverged_runs = 0;
  double mean_final_converged = kInf;
};

namespace detail {

// Strict weak order for grid selection: lower mean final objective, then
// (when every run set contains a divergence) fewer divergences and lower mean
// over the finished runs, then smaller step, then smaller decay.
inline bool better(const GridScore& a, const GridScore& b) {
  if (a.mean_final != b.mean_final) return a.mean_final < b.mean_final;
  if (!std::isfinite(a.mean_final)) {
    if (a.diverged_runs != b.diverged_runs) return a.diverged_runs < b.diverged_runs;
    if (a.mean_final_converged != b.mean_final_converged)
      return a.mean_final_converged < b.mean_final_converged;
  }
  if (a.config.step_size != b.config.step_size) return a.config.step_size < b.config.step_size;
  return a.config.momentum_decay < b.config.momentum_decay;
}

}  // namespace detail

template <Objective F>
GridScore score_config(const BaselineConfig& cfg, const std::vector<F>& train_set,
                       const std::vector<ParamVector>& x0s, int horizon) {
  GridScore s;
  s.config = cfg;
  double sum = 0.0, sum_ok = 0.0;
  int ok = 0;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const Trace t = run_baseline(cfg, train_set[i], x0s[i], horizon);
    if (t.diverged || !std::isfinite(t.final_value())) {
      ++s.diverged_runs;
      sum = kInf;
    } else {
      sum += t.final_value();
      sum_ok += t.final_value();
      ++ok;
    }
  }
  const double n = static_cast<double>(train_set.size());
  s.mean_final = std::isfinite(sum) ? sum / n : kInf;
  s.mean_final_converged = ok > 0 ? sum_ok / ok : kInf;
  return s;
}

/// Picks the grid entry with the lowest mean final objective over the
/// training set (diverged runs count as +inf). Only configurations of
/// `method` are considered. Throws NoViableConfiguration when every run of
/// every configuration diverges.
template <Objective F>
BaselineConfig grid_search(Method method, const std::vector<F>& train_set,
                           const std::vector<BaselineConfig>& grid, int horizon,
                           const std::vector<ParamVector>& x0_per_instance) {
  require(!train_set.empty(), "grid_search: empty training set");
  require(x0_per_instance.size() == train_set.size(), "grid_search: one x0 per instance required");
  std::vector<GridScore> scores;
  for (const auto& cfg : grid) {
    if (cfg.method != method) continue;
    scores.push_back(score_config(cfg, train_set, x0_per_instance, horizon));
  }
  require(!scores.empty(), "grid_search: grid has no configuration for " + to_string(method));
  const auto best = std::min_element(scores.begin(), scores.end(), detail::better);
  if (best->diverged_runs == static_cast<int>(train_set.size()))
    throw NoViableConfiguration("grid_search: every configuration diverged on every instance for " +
                                to_string(method));
  return best->config;
}

}  // namespace l2o
