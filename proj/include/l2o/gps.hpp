#pragma once

// Guided policy search over the optimizer MDP. Each iteration draws fresh
// trajectories, improves per-instance linear-Gaussian controllers with a
// KL-constrained LQG step on local models fitted to those samples, and
// regresses the neural-net policy onto the controllers' actions. Iteration 0
// samples from and imitates the momentum initialization. Samples are
// discarded after every iteration.

#include "l2o/baseline_opt.hpp"
#include "l2o/lqg.hpp"
#include "l2o/objfn.hpp"
#include "l2o/optmdp.hpp"
#include "l2o/parallel.hpp"
#include "l2o/policy_net.hpp"

#include <json.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace l2o {

struct MomentumInit {
  LinearGaussianController controller;
  double step_size = 0.0;
  double momentum_decay = 0.0;
  bool fallback = false;  // every grid entry diverged
};

/// Open-loop controller whose offsets are the step vectors of the best
/// noiseless momentum run on this instance (lowest final objective over the
/// grid; ties go to the smaller step, then the smaller decay).
template <Objective F>
MomentumInit init_target_from_momentum(const F& f, const ParamVector& x0,
                                       const std::vector<std::pair<double, double>>& grid, int horizon,
                                       double initial_variance = 0.01, int state_dim = -1) {
  require(!grid.empty(), "init_target_from_momentum: empty grid");
  std::vector<BaselineConfig> configs;
  for (auto [step, decay] : grid) configs.push_back(BaselineConfig::momentum(step, decay));
  MomentumInit out;
  BaselineConfig chosen;
  try {
    chosen = grid_search(Method::Momentum, std::vector<F>{f}, configs, horizon, {x0});
  } catch (const NoViableConfiguration&) {
    double smallest = grid.front().first;
    for (auto [step, decay] : grid) smallest = std::min(smallest, step);
    chosen = BaselineConfig::momentum(smallest, 0.0);
    out.fallback = true;
    std::cerr << "warning: every momentum setting diverged; falling back to step " << smallest << '\n';
  }
  out.step_size = chosen.step_size;
  out.momentum_decay = chosen.momentum_decay;
  const Trace trace = run_baseline(chosen, f, x0, horizon);
  std::vector<Vector> steps;
  for (int t = 0; t < horizon; ++t)
    steps.push_back(trace.points[static_cast<std::size_t>(t) + 1] - trace.points[static_cast<std::size_t>(t)]);
  out.controller = LinearGaussianController::open_loop(steps, state_dim < 0 ? f.dim() : state_dim, initial_variance);
  return out;
}

inline std::vector<std::pair<double, double>> default_momentum_grid() {
  std::vector<std::pair<double, double>> grid;
  for (double s : default_step_sizes())
    for (double a : default_momentum_decays()) grid.emplace_back(s, a);
  return grid;
}

/// Samples a ~ N(K_t x + k_t, Sigma_t) from a controller over the location
/// block (K has n columns) or the full MDP state.
inline ActionSampler controller_sampler(const LinearGaussianController& ctrl, const MdpConfig& cfg,
                                        bool noisy = true) {
  std::vector<Matrix> chol;
  for (const Matrix& S : ctrl.Sigma) chol.push_back(S.llt().matrixL());
  return [ctrl, chol = std::move(chol), cfg, noisy](int t, const OptState& s, Rng& rng) -> ParamVector {
    const auto ut = static_cast<std::size_t>(t);
    const Vector state = ctrl.state_dim() == s.param_dim() ? s.location : state_vector(s, cfg);
    Vector a = ctrl.mean(t, state);
    if (noisy) a += chol[ut] * standard_normal(static_cast<int>(a.size()), rng);
    return a;
  };
}

/// Drives the policy with its mean action (noisy=false) or a sampled one.
inline ActionSampler policy_sampler(const PolicyParams& p, const MdpConfig& cfg, bool noisy = false) {
  return [p, cfg, noisy](int, const OptState& s, Rng& rng) -> ParamVector {
    const Vector feat = featurize(s, cfg);
    return noisy ? sample_action(p, feat, rng) : forward_mean(p, feat);
  };
}

/// Which trajectory distribution the KL trust region is measured against.
/// Controller: the previous per-instance controller; samples always come
/// from the controllers. Policy: after iteration 0 samples come from the
/// policy and the budget is measured against its local linear-Gaussian fit,
/// so the new targets stay within reach of the policy.
enum class TrustAnchor { Controller, Policy };

inline std::string to_string(TrustAnchor a) { return a == TrustAnchor::Policy ? "policy" : "controller"; }

inline TrustAnchor trust_anchor_from_string(const std::string& s) {
  if (s == "policy") return TrustAnchor::Policy;
  if (s == "controller") return TrustAnchor::Controller;
  throw ContractViolation("unknown trust anchor: " + s);
}

struct GpsSettings {
  int iterations = 20;
  int samples_per_instance = 20;
  int horizon = 40;
  double epsilon = 1.0;  // KL budget per trajectory
  double initial_variance = 0.01;
  double dynamics_ridge = 1e-3;
  double entropy_start = 1e-3;
  double entropy_factor = 2.0;
  double entropy_cap = 1.0;
  int hidden = 50;
  int max_failures = 3;
  TrustAnchor anchor = TrustAnchor::Controller;
  MdpConfig mdp;
  TrainSettings train;
  TrustRegionSettings trust_region;
  std::vector<std::pair<double, double>> momentum_grid = default_momentum_grid();
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct GpsIterationMetrics {
  int iteration = 0;
  double mean_cumulative_cost = 0.0;  // over this iteration's samples
  double mean_kl = 0.0;
  double mean_eta = 0.0;
  double entropy_coef = 0.0;
  double supervised_loss = 0.0;
  double mean_log_var = 0.0;
  double policy_cumulative_cost = 0.0;  // noiseless policy, mean over instances
  double policy_final_objective = 0.0;
  double mean_epsilon = 0.0;
  std::size_t regression_pairs = 0;
  int bracket_exhausted = 0;
  int monotonicity_violations = 0;
  bool restored = false;
};

/// Everything needed to continue training from the start of `iteration`.
struct GpsState {
  int iteration = 0;
  PolicyParams policy;
  std::vector<ParamVector> x0;
  std::vector<LinearGaussianController> controllers;  // location block
  std::vector<double> epsilon;
  double entropy_coef = 0.0;
  int failures = 0;
  std::vector<GpsIterationMetrics> history;
};

class GpsAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GpsObserver {
  /// Called with each iteration's regression set before the policy is fitted.
  std::function<void(int, const SupervisedBatch&)> on_batch;
  /// Called once the state for the next iteration is complete.
  std::function<void(const GpsState&)> on_checkpoint;
  std::function<void(const GpsIterationMetrics&)> on_metrics;
};

/// Linear-Gaussian fit of the policy in location coordinates along sampled
/// trajectories: per step, ridge regression of the policy mean on x_t, with
/// the policy's own action variance as covariance.
inline LinearGaussianController fit_policy_linearization(const std::vector<Trajectory>& trajs,
                                                         const PolicyParams& policy, const MdpConfig& cfg,
                                                         double ridge = 1e-3, double floor = 1e-6) {
  require(!trajs.empty(), "fit_policy_linearization: no trajectories");
  const int T = trajs.front().horizon();
  const int n = trajs.front().states.front().param_dim();
  const auto N = static_cast<Eigen::Index>(trajs.size());
  Matrix cov = policy.log_var.array().exp().matrix().asDiagonal();
  cov = floor_eigenvalues(cov, floor);
  LinearGaussianController out;
  for (int t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    Matrix X(N, n), U(N, n);
    for (Eigen::Index j = 0; j < N; ++j) {
      const OptState& s = trajs[static_cast<std::size_t>(j)].states[ut];
      X.row(j) = s.location.transpose();
      U.row(j) = forward_mean(policy, featurize(s, cfg)).transpose();
    }
    auto [W, off] = detail::ridge_fit(X, U, ridge);
    out.K.push_back(std::move(W));
    out.k.push_back(std::move(off));
    out.Sigma.push_back(cov);
  }
  return out;
}

template <Objective F>
GpsState gps_initial_state(const std::vector<F>& train_set, const GpsSettings& cfg) {
  require(!train_set.empty(), "gps_train: empty training set");
  GpsState st;
  const int n = train_set.front().dim();
  st.policy = init_policy(cfg.mdp.feature_len(n), n, derive_seed(cfg.seed, "policy-init"), cfg.hidden,
                          std::log(cfg.initial_variance));
  st.entropy_coef = cfg.entropy_start;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    require(train_set[i].dim() == n, "gps_train: all instances must share a dimension");
    st.x0.push_back(sample_initial_point(n, derive_seed(cfg.seed, "gps-x0", i)));
  }
  st.controllers.resize(train_set.size());
  parallel_for(train_set.size(), cfg.jobs, [&](std::size_t i) {
    st.controllers[i] =
        init_target_from_momentum(train_set[i], st.x0[i], cfg.momentum_grid, cfg.horizon, cfg.initial_variance).controller;
  });
  st.epsilon.assign(train_set.size(), cfg.epsilon);
  return st;
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

/// Runs GPS iterations [state.iteration, cfg.iterations) and returns the
/// final state; state.policy is the learned optimizer. A positive `stop_at`
/// pauses after that many iterations; continuing the returned state later is
/// identical to never having paused.
template <Objective F>
GpsState gps_continue(const std::vector<F>& train_set, const GpsSettings& cfg, GpsState st,
                      const GpsObserver& obs = {}, int stop_at = 0) {
  require(!train_set.empty(), "gps_train: empty training set");
  require(st.controllers.size() == train_set.size(), "gps_train: state does not match training set");
  const int n = train_set.front().dim();
  const int T = cfg.horizon;
  const int S = cfg.samples_per_instance;
  const std::size_t I = train_set.size();
  const int flen = cfg.mdp.feature_len(n);

  const int end = stop_at > 0 ? std::min(stop_at, cfg.iterations) : cfg.iterations;
  for (int iter = st.iteration; iter < end; ++iter) {
    GpsIterationMetrics m;
    m.iteration = iter;
    m.entropy_coef = st.entropy_coef;

    const bool on_policy = cfg.anchor == TrustAnchor::Policy && iter > 0;

    // 1. fresh samples from the current controllers, or from the policy
    std::vector<std::vector<Trajectory>> samples(I);
    parallel_for(I, cfg.jobs, [&](std::size_t i) {
      const ActionSampler sampler =
          on_policy ? policy_sampler(st.policy, cfg.mdp, true) : controller_sampler(st.controllers[i], cfg.mdp);
      for (int j = 0; j < S; ++j)
        samples[i].push_back(rollout(train_set[i], sampler, st.x0[i], T,
                                     derive_seed(cfg.seed, "gps-sample", static_cast<std::uint64_t>(iter), i,
                                                 static_cast<std::uint64_t>(j)),
                                     cfg.mdp));
    });

    // 1b. on-policy: new targets within the KL budget of the policy's fit
    std::vector<double> kls(I, 0.0), etas(I, 0.0);
    std::vector<int> exhausted(I, 0), violations(I, 0);
    auto improve = [&](std::size_t i, const LinearGaussianController& anchor) {
      const LinearDynamics full = fit_mdp_dynamics(samples[i], cfg.mdp, cfg.dynamics_ridge);
      const LinearDynamics dyn = location_subsystem(full, n);
      const QuadraticCost cost = quadraticize_location_cost(train_set[i], samples[i]);
      const Matrix cov0 = 1e-6 * Matrix::Identity(n, n);
      TrustRegionResult r = solve_trust_region(dyn, cost, anchor, st.epsilon[i], st.x0[i], cov0, cfg.trust_region);
      kls[i] = r.kl;
      etas[i] = r.eta;
      exhausted[i] = r.status == TrustRegionStatus::BracketExhausted ? 1 : 0;
      violations[i] = r.monotonicity_violations;
      st.controllers[i] = std::move(r.controller);
    };
    auto record_improvement = [&] {
      m.mean_kl = detail::mean_of(kls);
      m.mean_eta = detail::mean_of(etas);
      for (std::size_t i = 0; i < I; ++i) {
        m.bracket_exhausted += exhausted[i];
        m.monotonicity_violations += violations[i];
      }
    };
    if (on_policy) {
      parallel_for(I, cfg.jobs, [&](std::size_t i) {
        improve(i, fit_policy_linearization(samples[i], st.policy, cfg.mdp, cfg.dynamics_ridge));
      });
      record_improvement();
    }

    // 2. regression set: (features, controller mean, controller precision)
    SupervisedBatch batch;
    const auto N = static_cast<Eigen::Index>(I) * S * T;
    batch.features.resize(flen, N);
    batch.targets.resize(n, N);
    batch.precisions.reserve(static_cast<std::size_t>(N));
    std::vector<double> cumulative;
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < I; ++i) {
      const auto& ctrl = st.controllers[i];
      std::vector<Matrix> prec;
      for (const Matrix& Sg : ctrl.Sigma) {
        Matrix P = Sg.llt().solve(Matrix::Identity(n, n));
        prec.push_back(0.5 * (P + P.transpose()));
      }
      for (const Trajectory& tr : samples[i]) {
        cumulative.push_back(tr.cumulative_cost());
        for (int t = 0; t < T; ++t) {
          const OptState& s = tr.states[static_cast<std::size_t>(t)];
          batch.features.col(col) = featurize(s, cfg.mdp);
          batch.targets.col(col) = ctrl.mean(t, s.location);
          batch.precisions.push_back(prec[static_cast<std::size_t>(t)]);
          ++col;
        }
      }
    }
    m.regression_pairs = static_cast<std::size_t>(N);
    m.mean_cumulative_cost = detail::mean_of(cumulative);
    if (obs.on_batch) obs.on_batch(iter, batch);

    // 3. supervised policy update
    TrainSettings ts = cfg.train;
    ts.entropy_coef = st.entropy_coef;
    TrainResult tr = train_policy(st.policy, batch, ts);
    if (tr.aborted) {
      m.restored = true;
      ++st.failures;
      for (double& e : st.epsilon) e *= 0.5;
      std::cerr << "warning: supervised step failed at GPS iteration " << iter << " (" << tr.diagnostic
                << "); restoring previous policy and halving the trust region\n";
      if (st.failures >= cfg.max_failures)
        throw GpsAbort("gps_train: supervised regression failed " + std::to_string(st.failures) +
                       " iterations in a row; last: " + tr.diagnostic);
    } else {
      st.failures = 0;
      st.policy = tr.params;
    }
    m.supervised_loss = tr.best_loss;
    m.mean_log_var = st.policy.log_var.mean();

    // 4. controller-anchored: improve the controllers for the next iteration
    if (cfg.anchor == TrustAnchor::Controller && iter + 1 < cfg.iterations) {
      parallel_for(I, cfg.jobs, [&](std::size_t i) {
        const LinearGaussianController prev = st.controllers[i];
        improve(i, prev);
      });
      record_improvement();
    }

    // 5. diagnostics: noiseless policy on the training instances
    std::vector<double> pol_cum(I), pol_final(I);
    parallel_for(I, cfg.jobs, [&](std::size_t i) {
      const Trajectory t = rollout(train_set[i], policy_sampler(st.policy, cfg.mdp), st.x0[i], T, 0, cfg.mdp);
      pol_cum[i] = t.cumulative_cost();
      pol_final[i] = t.costs.back();
    });
    m.policy_cumulative_cost = detail::mean_of(pol_cum);
    m.policy_final_objective = detail::mean_of(pol_final);
    m.mean_epsilon = detail::mean_of(st.epsilon);

    st.entropy_coef = std::min(cfg.entropy_cap, st.entropy_coef * cfg.entropy_factor);
    st.iteration = iter + 1;
    st.history.push_back(m);
    if (obs.on_metrics) obs.on_metrics(m);
    if (obs.on_checkpoint) obs.on_checkpoint(st);
  }
  return st;
}

template <Objective F>
GpsState gps_train(const std::vector<F>& train_set, const GpsSettings& cfg, const GpsObserver& obs = {}) {
  return gps_continue(train_set, cfg, gps_initial_state(train_set, cfg), obs);
}

// ---------------------------------------------------------------------------
// State serialization

inline nlohmann::json to_json(const LinearGaussianController& c) {
  nlohmann::json steps = nlohmann::json::array();
  for (int t = 0; t < c.horizon(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    steps.push_back({{"K", detail::matrix_to_json(c.K[ut])},
                     {"k", detail::vector_to_json(c.k[ut])},
                     {"Sigma", detail::matrix_to_json(c.Sigma[ut])}});
  }
  return steps;
}

inline LinearGaussianController controller_from_json(const nlohmann::json& j) {
  LinearGaussianController c;
  for (const auto& step : j) {
    c.K.push_back(detail::matrix_from_json(step.at("K")));
    c.k.push_back(detail::vector_from_json(step.at("k")));
    c.Sigma.push_back(detail::matrix_from_json(step.at("Sigma")));
  }
  return c;
}

inline nlohmann::json to_json(const GpsIterationMetrics& m) {
  return {{"iteration", m.iteration},
          {"mean_cumulative_cost", m.mean_cumulative_cost},
          {"mean_kl", m.mean_kl},
          {"mean_eta", m.mean_eta},
          {"entropy_coef", m.entropy_coef},
          {"supervised_loss", m.supervised_loss},
          {"mean_log_var", m.mean_log_var},
          {"policy_cumulative_cost", m.policy_cumulative_cost},
          {"policy_final_objective", m.policy_final_objective},
          {"mean_epsilon", m.mean_epsilon},
          {"regression_pairs", m.regression_pairs},
          {"bracket_exhausted", m.bracket_exhausted},
          {"monotonicity_violations", m.monotonicity_violations},
          {"restored", m.restored}};
}

inline GpsIterationMetrics metrics_from_json(const nlohmann::json& j) {
  GpsIterationMetrics m;
  m.iteration = j.at("iteration");
  m.mean_cumulative_cost = j.at("mean_cumulative_cost");
  m.mean_kl = j.at("mean_kl");
  m.mean_eta = j.at("mean_eta");
  m.entropy_coef = j.at("entropy_coef");
  m.supervised_loss = j.at("supervised_loss");
  m.mean_log_var = j.at("mean_log_var");
  m.policy_cumulative_cost = j.at("policy_cumulative_cost");
  m.policy_final_objective = j.at("policy_final_objective");
  m.mean_epsilon = j.at("mean_epsilon");
  m.regression_pairs = j.at("regression_pairs");
  m.bracket_exhausted = j.at("bracket_exhausted");
  m.monotonicity_violations = j.at("monotonicity_violations");
  m.restored = j.at("restored");
  return m;
}

inline nlohmann::json to_json(const GpsState& st) {
  nlohmann::json j;
  j["iteration"] = st.iteration;
  j["policy"] = to_json(st.policy);
  j["x0"] = nlohmann::json::array();
  for (const auto& x : st.x0) j["x0"].push_back(detail::vector_to_json(x));
  j["controllers"] = nlohmann::json::array();
  for (const auto& c : st.controllers) j["controllers"].push_back(to_json(c));
  j["epsilon"] = st.epsilon;
  j["entropy_coef"] = st.entropy_coef;
  j["failures"] = st.failures;
  j["history"] = nlohmann::json::array();
  for (const auto& m : st.history) j["history"].push_back(to_json(m));
  return j;
}

inline GpsState gps_state_from_json(const nlohmann::json& j) {
  GpsState st;
  st.iteration = j.at("iteration");
  st.policy = policy_from_json(j.at("policy"));
  for (const auto& x : j.at("x0")) st.x0.push_back(detail::vector_from_json(x));
  for (const auto& c : j.at("controllers")) st.controllers.push_back(controller_from_json(c));
  st.epsilon = j.at("epsilon").get<std::vector<double>>();
  st.entropy_coef = j.at("entropy_coef");
  st.failures = j.at("failures");
  for (const auto& m : j.at("history")) st.history.push_back(metrics_from_json(m));
  return st;
}

}  // namespace l2o
