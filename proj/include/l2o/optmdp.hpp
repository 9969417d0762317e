#pragma once

// Optimizer execution as a finite-horizon MDP. The state holds the current
// location plus an H-step history of objective-value changes and gradients;
// the action is the step vector; the cost is the objective at the location.

#include "l2o/objective.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <vector>

namespace l2o {

struct MdpConfig {
  int history = 25;
  /// Append the gradient at the current location to the policy input. Off by
  /// default: the history slots only cover the 2nd..(H+1)th most recent
  /// locations.
  bool include_current_gradient = false;

  int feature_len(int param_dim) const {
    return history * (1 + param_dim) + (include_current_gradient ? param_dim : 0);
  }
  /// Length of the full state vector (location first, then the features).
  int state_len(int param_dim) const { return param_dim + feature_len(param_dim); }
};

/// Slot k of the history (k = 0..H-1) refers to the (k+2)th most recent
/// location, i.e. x_{t-1-k}. Slots beyond `filled` are zero.
struct OptState {
  ParamVector location;
  double value = 0.0;     // f(location)
  Vector gradient;        // grad f(location)
  Vector value_deltas;    // H: f(x_t) - f(x_{t-1-k})
  Matrix past_gradients;  // H x n: grad f(x_{t-1-k})
  Vector past_values;     // H: f(x_{t-1-k})
  int filled = 0;

  int param_dim() const { return static_cast<int>(location.size()); }
  int history() const { return static_cast<int>(value_deltas.size()); }
  bool finite() const { return std::isfinite(value) && location.allFinite() && gradient.allFinite(); }
};

template <Objective F>
OptState initial_state(const F& f, const ParamVector& x0, const MdpConfig& cfg) {
  require(x0.size() == f.dim(), "initial_state: x0 dimension mismatch");
  OptState s;
  s.location = x0;
  s.value = f.value(x0);
  s.gradient = f.gradient(x0);
  s.value_deltas = Vector::Zero(cfg.history);
  s.past_gradients = Matrix::Zero(cfg.history, x0.size());
  s.past_values = Vector::Zero(cfg.history);
  return s;
}

/// Policy input: [value_deltas (H), past gradients slot-major (H*n)], most
/// recent first, optionally followed by the current gradient.
inline Vector featurize(const OptState& s, const MdpConfig& cfg) {
  const int n = s.param_dim();
  const int h = s.history();
  Vector feat(cfg.feature_len(n));
  feat.head(h) = s.value_deltas;
  for (int k = 0; k < h; ++k) feat.segment(h + k * n, n) = s.past_gradients.row(k).transpose();
  if (cfg.include_current_gradient) feat.tail(n) = s.gradient;
  return feat;
}

/// Full state vector: [location, features].
inline Vector state_vector(const OptState& s, const MdpConfig& cfg) {
  const int n = s.param_dim();
  Vector v(cfg.state_len(n));
  v.head(n) = s.location;
  v.tail(cfg.feature_len(n)) = featurize(s, cfg);
  return v;
}

template <Objective F>
OptState advance(const F& f, const OptState& s, const ParamVector& action) {
  require(action.size() == s.location.size(), "advance: action dimension mismatch");
  const int h = s.history();
  OptState next;
  next.location = s.location + action;
  next.value = f.value(next.location);
  next.gradient = f.gradient(next.location);
  next.filled = std::min(s.filled + 1, h);

  next.past_values = Vector::Zero(h);
  next.past_gradients = Matrix::Zero(h, s.param_dim());
  if (h > 0) {
    next.past_values[0] = s.value;
    next.past_gradients.row(0) = s.gradient.transpose();
    for (int k = 1; k < next.filled; ++k) {
      next.past_values[k] = s.past_values[k - 1];
      next.past_gradients.row(k) = s.past_gradients.row(k - 1);
    }
  }
  next.value_deltas = Vector::Zero(h);
  for (int k = 0; k < next.filled; ++k) next.value_deltas[k] = next.value - next.past_values[k];
  return next;
}

struct Trajectory {
  std::vector<OptState> states;      // T+1
  std::vector<ParamVector> actions;  // T
  std::vector<double> costs;         // T+1
  bool diverged = false;

  int horizon() const { return static_cast<int>(actions.size()); }
  double cumulative_cost() const {
    double c = 0.0;
    for (double v : costs) c += v;
    return c;
  }
};

/// (t, state, rng) -> action.
using ActionSampler = std::function<ParamVector(int, const OptState&, Rng&)>;

/// Rolls `policy` out for T steps. A step whose result is non-finite is
/// replaced by a zero step and the trajectory stays frozen from there on.
template <Objective F>
Trajectory rollout(const F& f, const ActionSampler& policy, const ParamVector& x0, int horizon,
                   std::uint64_t seed, const MdpConfig& cfg = {}) {
  require(horizon >= 1, "rollout: horizon must be >= 1");
  Rng rng(seed);
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.states.push_back(initial_state(f, x0, cfg));
  traj.costs.push_back(traj.states.back().value);
  for (int t = 0; t < horizon; ++t) {
    const OptState& cur = traj.states.back();
    ParamVector a;
    OptState next;
    if (!traj.diverged) {
      a = policy(t, cur, rng);
      require(a.size() == cur.location.size(), "rollout: policy returned wrong action dimension");
      if (a.allFinite()) next = advance(f, cur, a);
      if (!a.allFinite() || !next.finite()) traj.diverged = true;
    }
    if (traj.diverged) {
      a = ParamVector::Zero(cur.location.size());
      next = cur;
    }
    traj.actions.push_back(std::move(a));
    traj.costs.push_back(next.value);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

/// Per-step CSV: t, cost, x_0..x_{n-1}, a_0..a_{n-1} (actions empty on the
/// final row).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int n = traj.states.front().param_dim();
  os << "t,cost";
  for (int j = 0; j < n; ++j) os << ",x" << j;
  for (int j = 0; j < n; ++j) os << ",a" << j;
  os << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    os << t << ',' << traj.costs[t];
    for (int j = 0; j < n; ++j) os << ',' << traj.states[t].location[j];
    for (int j = 0; j < n; ++j) {
      os << ',';
      if (t < traj.actions.size()) os << traj.actions[t][j];
    }
    os << '\n';
  }
}

}  // namespace l2o
