#pragma once

// Local models for trajectory optimization: time-varying linear dynamics and
// quadratic costs fitted around sampled trajectories, and the KL-constrained
// linear-quadratic-Gaussian solve that turns them into a new linear-Gaussian
// controller.

#include "l2o/objective.hpp"
#include "l2o/optmdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace l2o {

/// s_{t+1} ~ N(A_t s_t + B_t a_t + c_t, Q_t), t = 0..T-1.
struct LinearDynamics {
  std::vector<Matrix> A, B;
  std::vector<Vector> c;
  std::vector<Matrix> Q;

  int horizon() const { return static_cast<int>(A.size()); }
  int state_dim() const { return static_cast<int>(A.front().rows()); }
  int action_dim() const { return static_cast<int>(B.front().cols()); }
};

/// Per-step cost l_t(s) = e_t + d_t'(s - center_t) + 1/2 (s - center_t)' C_t (s - center_t),
/// t = 0..T.
struct QuadraticCost {
  std::vector<Matrix> C;
  std::vector<Vector> d;
  std::vector<double> e;
  std::vector<Vector> center;

  int size() const { return static_cast<int>(C.size()); }

  double eval(int t, const Vector& s) const {
    const auto ut = static_cast<std::size_t>(t);
    const Vector ds = s - center[ut];
    return e[ut] + d[ut].dot(ds) + 0.5 * ds.dot(C[ut] * ds);
  }
  /// Linear coefficient in absolute coordinates: d - C center.
  Vector absolute_linear(int t) const {
    const auto ut = static_cast<std::size_t>(t);
    return d[ut] - C[ut] * center[ut];
  }
};

/// a_t ~ N(K_t s_t + k_t, Sigma_t), t = 0..T-1.
struct LinearGaussianController {
  std::vector<Matrix> K;
  std::vector<Vector> k;
  std::vector<Matrix> Sigma;

  int horizon() const { return static_cast<int>(K.size()); }
  int state_dim() const { return static_cast<int>(K.front().cols()); }
  int action_dim() const { return static_cast<int>(K.front().rows()); }

  Vector mean(int t, const Vector& s) const {
    const auto ut = static_cast<std::size_t>(t);
    return K[ut] * s + k[ut];
  }

  static LinearGaussianController open_loop(const std::vector<Vector>& offsets, int state_dim,
                                            double variance) {
    LinearGaussianController c;
    for (const Vector& off : offsets) {
      const auto nu = off.size();
      c.K.push_back(Matrix::Zero(nu, state_dim));
      c.k.push_back(off);
      c.Sigma.push_back(variance * Matrix::Identity(nu, nu));
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Dynamics fitting

/// States (T+1) and actions (T) of one sampled path, in whatever state
/// coordinates the caller fits.
struct StateActionPath {
  std::vector<Vector> states;
  std::vector<Vector> actions;
};

namespace detail {

// Ridge regression of Y (N x m) on Z (N x p) with centering, so the offset is
// unpenalized: returns (W, offset) with y ~ W z + offset.
inline std::pair<Matrix, Vector> ridge_fit(const Matrix& Z, const Matrix& Y, double ridge) {
  const Vector zbar = Z.colwise().mean().transpose();
  const Vector ybar = Y.colwise().mean().transpose();
  const Matrix Zc = Z.rowwise() - zbar.transpose();
  const Matrix Yc = Y.rowwise() - ybar.transpose();
  Matrix gram = Zc.transpose() * Zc;
  gram.diagonal().array() += ridge;
  const Matrix W = gram.ldlt().solve(Zc.transpose() * Yc).transpose();
  const Vector offset = ybar - W * zbar;
  return {W, offset};
}

inline Matrix residual_covariance(const Matrix& residuals) {
  const Matrix centered = residuals.rowwise() - residuals.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(residuals.rows());
  cov.diagonal().array() += 1e-6;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace detail

/// Per-step ridge regression of s_{t+1} on (s_t, a_t, 1); Q_t is the residual
/// covariance plus 1e-6 I.
inline LinearDynamics fit_dynamics(const std::vector<StateActionPath>& paths, double ridge = 1e-3) {
  require(paths.size() >= 2, "fit_dynamics: at least two trajectories are required");
  const auto T = paths.front().actions.size();
  for (const auto& p : paths)
    require(p.actions.size() == T && p.states.size() == T + 1, "fit_dynamics: trajectories must have equal length");
  const auto ns = paths.front().states.front().size();
  const auto nu = paths.front().actions.front().size();
  const auto N = static_cast<Eigen::Index>(paths.size());

  LinearDynamics dyn;
  Matrix Z(N, ns + nu), Y(N, ns);
  for (std::size_t t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto& p = paths[static_cast<std::size_t>(i)];
      Z.row(i).head(ns) = p.states[t].transpose();
      Z.row(i).tail(nu) = p.actions[t].transpose();
      Y.row(i) = p.states[t + 1].transpose();
    }
    auto [W, offset] = detail::ridge_fit(Z, Y, ridge);
    const Matrix pred = (Z * W.transpose()).rowwise() + offset.transpose();
    dyn.A.push_back(W.leftCols(ns));
    dyn.B.push_back(W.rightCols(nu));
    dyn.c.push_back(offset);
    dyn.Q.push_back(detail::residual_covariance(Y - pred));
  }
  return dyn;
}

/// Dynamics of the optimizer MDP in full state coordinates (location,
/// value deltas, past gradients[, current gradient]). The location update and
/// the history shift are known exactly and written in directly; only the
/// responses that depend on the objective (the newest value change and the
/// newest gradient) are regressed on (x_t, a_t, 1).
inline LinearDynamics fit_mdp_dynamics(const std::vector<Trajectory>& trajs, const MdpConfig& cfg,
                                       double ridge = 1e-3) {
  require(trajs.size() >= 2, "fit_mdp_dynamics: at least two trajectories are required");
  const int T = trajs.front().horizon();
  for (const auto& tr : trajs) require(tr.horizon() == T, "fit_mdp_dynamics: trajectories must have equal length");
  const int n = trajs.front().states.front().param_dim();
  const int H = cfg.history;
  const int ns = cfg.state_len(n);
  const int off_dv = n, off_g = n + H, off_cur = n + H + H * n;
  const auto N = static_cast<Eigen::Index>(trajs.size());

  LinearDynamics dyn;
  Matrix Z(N, 2 * n), Y(N, 1 + n), S(N, ns), Snext(N, ns);
  for (int t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto& tr = trajs[static_cast<std::size_t>(i)];
      const OptState& s0 = tr.states[ut];
      const OptState& s1 = tr.states[ut + 1];
      Z.row(i).head(n) = s0.location.transpose();
      Z.row(i).tail(n) = tr.actions[ut].transpose();
      Y(i, 0) = s1.value - s0.value;
      Y.row(i).tail(n) = (cfg.include_current_gradient ? s1.gradient : s0.gradient).transpose();
      S.row(i) = state_vector(s0, cfg).transpose();
      Snext.row(i) = state_vector(s1, cfg).transpose();
    }
    auto [W, offset] = detail::ridge_fit(Z, Y, ridge);
    const int filled_next = std::min(t + 1, H);

    Matrix A = Matrix::Zero(ns, ns), B = Matrix::Zero(ns, n);
    Vector c = Vector::Zero(ns);
    A.topLeftCorner(n, n).setIdentity();
    B.topRows(n).setIdentity();
    // dv'[k] = delta + dv[k-1] for valid slots; delta regressed.
    for (int k = 0; k < filled_next; ++k) {
      const int row = off_dv + k;
      A.row(row).head(n) = W.row(0).head(n);
      B.row(row) = W.row(0).tail(n);
      c[row] = offset[0];
      if (k > 0) A(row, off_dv + k - 1) = 1.0;
    }
    // newest past-gradient slot
    if (H > 0) {
      if (cfg.include_current_gradient) {
        A.block(off_g, off_cur, n, n).setIdentity();
      } else {
        A.block(off_g, 0, n, n) = W.bottomRows(n).leftCols(n);
        B.block(off_g, 0, n, n) = W.bottomRows(n).rightCols(n);
        c.segment(off_g, n) = offset.tail(n);
      }
      for (int k = 1; k < filled_next; ++k) A.block(off_g + k * n, off_g + (k - 1) * n, n, n).setIdentity();
    }
    if (cfg.include_current_gradient) {
      A.block(off_cur, 0, n, n) = W.bottomRows(n).leftCols(n);
      B.block(off_cur, 0, n, n) = W.bottomRows(n).rightCols(n);
      c.segment(off_cur, n) = offset.tail(n);
    }
    Matrix U(N, n);
    for (Eigen::Index i = 0; i < N; ++i) U.row(i) = trajs[static_cast<std::size_t>(i)].actions[ut].transpose();
    const Matrix pred = ((S * A.transpose() + U * B.transpose()).rowwise() + c.transpose());
    dyn.A.push_back(std::move(A));
    dyn.B.push_back(std::move(B));
    dyn.c.push_back(std::move(c));
    dyn.Q.push_back(detail::residual_covariance(Snext - pred));
  }
  return dyn;
}

/// Restriction of MDP dynamics to the location block. Exact when the
/// location rows do not read the history columns, which holds for
/// fit_mdp_dynamics output.
inline LinearDynamics location_subsystem(const LinearDynamics& full, int n) {
  LinearDynamics dyn;
  for (int t = 0; t < full.horizon(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    require(full.A[ut].topRightCorner(n, full.state_dim() - n).cwiseAbs().maxCoeff() == 0.0,
            "location_subsystem: location rows depend on history columns");
    dyn.A.push_back(full.A[ut].topLeftCorner(n, n));
    dyn.B.push_back(full.B[ut].topRows(n));
    dyn.c.push_back(full.c[ut].head(n));
    dyn.Q.push_back(full.Q[ut].topLeftCorner(n, n));
  }
  return dyn;
}

/// Exact location dynamics x' = x + a (process noise 1e-6 I), the location
/// subsystem of every MDP transition.
inline LinearDynamics location_dynamics(int n, int horizon) {
  LinearDynamics dyn;
  for (int t = 0; t < horizon; ++t) {
    dyn.A.push_back(Matrix::Identity(n, n));
    dyn.B.push_back(Matrix::Identity(n, n));
    dyn.c.push_back(Vector::Zero(n));
    dyn.Q.push_back(1e-6 * Matrix::Identity(n, n));
  }
  return dyn;
}

/// Pads a location-block controller with zero gains on the history columns.
inline LinearGaussianController embed_controller(const LinearGaussianController& loc, int state_len) {
  LinearGaussianController full = loc;
  for (auto& K : full.K) {
    Matrix padded = Matrix::Zero(K.rows(), state_len);
    padded.leftCols(K.cols()) = K;
    K = std::move(padded);
  }
  return full;
}

// ---------------------------------------------------------------------------
// Cost expansion

namespace detail {

template <Objective F>
Matrix local_curvature(const F& f, const Vector& x) {
  if constexpr (CurvatureObjective<F>) {
    return f.curvature(x);
  } else {
    return floor_eigenvalues(finite_diff_hessian(f, x), 1e-6);
  }
}

}  // namespace detail

/// Second-order expansion of the cost around every visited state, in full
/// state coordinates; only the location block is non-zero.
template <Objective F>
QuadraticCost quadraticize_cost(const F& f, const Trajectory& traj, const MdpConfig& cfg = {}) {
  const int n = traj.states.front().param_dim();
  const int ns = cfg.state_len(n);
  QuadraticCost q;
  for (const OptState& s : traj.states) {
    Matrix C = Matrix::Zero(ns, ns);
    C.topLeftCorner(n, n) = detail::local_curvature(f, s.location);
    Vector d = Vector::Zero(ns);
    d.head(n) = s.gradient;
    q.C.push_back(std::move(C));
    q.d.push_back(std::move(d));
    q.e.push_back(s.value);
    q.center.push_back(state_vector(s, cfg));
  }
  return q;
}

/// Sample-averaged expansion over the location block, in absolute
/// coordinates (center 0).
template <Objective F>
QuadraticCost quadraticize_location_cost(const F& f, const std::vector<Trajectory>& trajs) {
  require(!trajs.empty(), "quadraticize_location_cost: no trajectories");
  const int n = trajs.front().states.front().param_dim();
  const std::size_t steps = trajs.front().states.size();
  QuadraticCost q;
  q.C.assign(steps, Matrix::Zero(n, n));
  q.d.assign(steps, Vector::Zero(n));
  q.e.assign(steps, 0.0);
  q.center.assign(steps, Vector::Zero(n));
  const double w = 1.0 / static_cast<double>(trajs.size());
  for (const auto& tr : trajs) {
    for (std::size_t t = 0; t < steps; ++t) {
      const OptState& s = tr.states[t];
      const Matrix C = detail::local_curvature(f, s.location);
      const Vector& x = s.location;
      q.C[t] += w * C;
      q.d[t] += w * (s.gradient - C * x);
      q.e[t] += w * (s.value - s.gradient.dot(x) + 0.5 * x.dot(C * x));
    }
  }
  return q;
}

/// Average of several expansions, in absolute coordinates (center 0).
inline QuadraticCost average_costs(const std::vector<QuadraticCost>& costs) {
  require(!costs.empty(), "average_costs: nothing to average");
  const int steps = costs.front().size();
  QuadraticCost avg;
  const double w = 1.0 / static_cast<double>(costs.size());
  for (int t = 0; t < steps; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const auto ns = costs.front().C[ut].rows();
    Matrix C = Matrix::Zero(ns, ns);
    Vector d = Vector::Zero(ns);
    double e = 0.0;
    for (const auto& q : costs) {
      const Vector& m = q.center[ut];
      C += w * q.C[ut];
      d += w * q.absolute_linear(t);
      e += w * (q.e[ut] - q.d[ut].dot(m) + 0.5 * m.dot(q.C[ut] * m));
    }
    avg.C.push_back(std::move(C));
    avg.d.push_back(std::move(d));
    avg.e.push_back(e);
    avg.center.push_back(Vector::Zero(ns));
  }
  return avg;
}

// ---------------------------------------------------------------------------
// KL-augmented LQG

struct LqgSettings {
  /// Weight on the controller entropy bonus. The augmented per-step cost is
  /// (l + eta * (-log p_prev)) / (eta + entropy_weight), solved with unit
  /// entropy weight, so Sigma_t = entropy_weight * Q_uu^{-1} at eta = 0.
  double entropy_weight = 1.0;
  double regularization = 1e-6;
  double covariance_floor = 1e-6;
  int max_eta_increases = 40;
};

struct LqgResult {
  LinearGaussianController controller;
  double eta = 0.0;       // eta actually used
  bool adjusted = false;  // eta was raised because Q_uu was not positive definite
};

namespace detail {

struct NotPositiveDefinite {};

inline LinearGaussianController lqg_pass(const LinearDynamics& dyn, const QuadraticCost& cost,
                                         const LinearGaussianController& prev, double eta,
                                         const LqgSettings& cfg) {
  const int T = dyn.horizon();
  const int nu = dyn.action_dim();
  const double scale = 1.0 / (eta + cfg.entropy_weight);
  const auto uT = static_cast<std::size_t>(T);

  Matrix Vss = scale * cost.C[uT];
  Vector vs = scale * cost.absolute_linear(T);

  LinearGaussianController out;
  out.K.resize(uT);
  out.k.resize(uT);
  out.Sigma.resize(uT);
  for (int t = T - 1; t >= 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    const Matrix& A = dyn.A[ut];
    const Matrix& B = dyn.B[ut];
    const Matrix VA = Vss * A;
    const Matrix VB = Vss * B;
    const Vector Vc = Vss * dyn.c[ut] + vs;

    Matrix Qss = scale * cost.C[ut] + A.transpose() * VA;
    Matrix Quu = B.transpose() * VB;
    Matrix Qus = B.transpose() * VA;
    Vector qs = scale * cost.absolute_linear(t) + A.transpose() * Vc;
    Vector qu = B.transpose() * Vc;
    if (eta > 0.0) {
      const Eigen::LLT<Matrix> prev_llt(prev.Sigma[ut]);
      if (prev_llt.info() != Eigen::Success) throw ContractViolation("lqg_backward: previous covariance not PD");
      const Matrix P = prev_llt.solve(Matrix::Identity(nu, nu));
      const Matrix& Kp = prev.K[ut];
      const Vector& kp = prev.k[ut];
      const double w = eta * scale;
      Qss += w * Kp.transpose() * P * Kp;
      Quu += w * P;
      Qus -= w * P * Kp;
      qs += w * Kp.transpose() * (P * kp);
      qu -= w * P * kp;
    }
    Quu = 0.5 * (Quu + Quu.transpose());
    Eigen::LLT<Matrix> llt(Quu);
    if (llt.info() != Eigen::Success || !Quu.allFinite()) {
      Quu.diagonal().array() += cfg.regularization;
      llt.compute(Quu);
      if (llt.info() != Eigen::Success || !Quu.allFinite()) throw NotPositiveDefinite{};
    }
    Matrix K = -llt.solve(Qus);
    Vector k = -llt.solve(qu);
    Matrix Sigma = llt.solve(Matrix::Identity(nu, nu));
    Sigma = floor_eigenvalues(Sigma, cfg.covariance_floor);

    Vss = Qss + Qus.transpose() * K;
    Vss = 0.5 * (Vss + Vss.transpose());
    vs = qs + Qus.transpose() * k;

    out.K[ut] = std::move(K);
    out.k[ut] = std::move(k);
    out.Sigma[ut] = std::move(Sigma);
  }
  return out;
}

}  // namespace detail

/// Backward Riccati recursion for the cost augmented with eta * KL(new || prev)
/// per step. If an action Hessian stays indefinite after regularization, eta is
/// raised and the pass retried; the result reports the eta used.
inline LqgResult lqg_backward(const LinearDynamics& dyn, const QuadraticCost& cost,
                              const LinearGaussianController& prev, double eta,
                              const LqgSettings& cfg = {}) {
  require(eta >= 0.0, "lqg_backward: eta must be non-negative");
  require(cost.size() == dyn.horizon() + 1, "lqg_backward: cost needs T+1 steps");
  require(prev.horizon() == dyn.horizon(), "lqg_backward: previous controller horizon mismatch");
  LqgResult res;
  res.eta = eta;
  for (int attempt = 0; attempt <= cfg.max_eta_increases; ++attempt) {
    try {
      res.controller = detail::lqg_pass(dyn, cost, prev, res.eta, cfg);
      return res;
    } catch (const detail::NotPositiveDefinite&) {
      res.adjusted = true;
      res.eta = std::max(10.0 * res.eta, 1e-4);
    }
  }
  throw std::runtime_error("lqg_backward: action Hessian not positive definite for any eta tried");
}

/// Sum over t of E_{s ~ p_new(s_t)} KL(new(.|s) || old(.|s)), with the state
/// marginals propagated through `dyn` from N(mu0, cov0).
inline double traj_kl(const LinearGaussianController& next, const LinearGaussianController& old,
                      const LinearDynamics& dyn, const Vector& mu0, const Matrix& cov0) {
  require(next.horizon() == old.horizon() && next.horizon() == dyn.horizon(), "traj_kl: horizon mismatch");
  require(mu0.size() == dyn.state_dim() && next.state_dim() == dyn.state_dim() &&
              old.state_dim() == dyn.state_dim(),
          "traj_kl: state dimension mismatch");
  Vector mu = mu0;
  Matrix cov = cov0;
  double total = 0.0;
  for (int t = 0; t < dyn.horizon(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Eigen::LLT<Matrix> old_llt(old.Sigma[ut]);
    const Eigen::LLT<Matrix> new_llt(next.Sigma[ut]);
    require(old_llt.info() == Eigen::Success && new_llt.info() == Eigen::Success,
            "traj_kl: singular controller covariance");
    const int nu = next.action_dim();
    const Matrix P = old_llt.solve(Matrix::Identity(nu, nu));
    const Matrix dK = next.K[ut] - old.K[ut];
    const Vector dm = dK * mu + next.k[ut] - old.k[ut];
    const double logdet_old = 2.0 * old_llt.matrixLLT().diagonal().array().log().sum();
    const double logdet_new = 2.0 * new_llt.matrixLLT().diagonal().array().log().sum();
    const double kl = 0.5 * ((P * next.Sigma[ut]).trace() - nu + logdet_old - logdet_new + dm.dot(P * dm) +
                             (dK.transpose() * P * dK * cov).trace());
    total += std::max(kl, 0.0);

    const Matrix& A = dyn.A[ut];
    const Matrix& B = dyn.B[ut];
    const Matrix Acl = A + B * next.K[ut];
    mu = Acl * mu + B * next.k[ut] + dyn.c[ut];
    cov = Acl * cov * Acl.transpose() + B * next.Sigma[ut] * B.transpose() + dyn.Q[ut];
    cov = 0.5 * (cov + cov.transpose());
  }
  return total;
}

enum class TrustRegionStatus { Satisfied, Inactive, BracketExhausted };

inline std::string to_string(TrustRegionStatus s) {
  switch (s) {
    case TrustRegionStatus::Satisfied: return "satisfied";
    case TrustRegionStatus::Inactive: return "inactive";
    case TrustRegionStatus::BracketExhausted: return "bracket_exhausted";
  }
  return "unknown";
}

struct TrustRegionSettings {
  double eta_min = 1e-6;
  double eta_max = 1e6;
  double tolerance = 0.1;  // accept KL in [(1-tol) eps, (1+tol) eps]
  int max_iterations = 60;
  LqgSettings lqg;
};

struct TrustRegionResult {
  LinearGaussianController controller;
  double eta = 0.0;
  double kl = 0.0;
  TrustRegionStatus status = TrustRegionStatus::Satisfied;
  int iterations = 0;
  int monotonicity_violations = 0;  // KL increased with eta during bisection
  bool eta_adjusted = false;
};

/// Geometric bisection on eta so that traj_kl(new, prev) lands in
/// [0.9 eps, 1.1 eps]. Returns the unconstrained (eta_min) solution when it
/// already satisfies the budget, and the eta_max solution with
/// BracketExhausted status when even that exceeds it.
inline TrustRegionResult solve_trust_region(const LinearDynamics& dyn, const QuadraticCost& cost,
                                            const LinearGaussianController& prev, double epsilon,
                                            const Vector& mu0, const Matrix& cov0,
                                            const TrustRegionSettings& cfg = {}) {
  require(epsilon > 0.0, "solve_trust_region: epsilon must be positive");
  TrustRegionResult res;
  auto solve = [&](double eta) {
    LqgResult r = lqg_backward(dyn, cost, prev, eta, cfg.lqg);
    res.eta_adjusted = res.eta_adjusted || r.adjusted;
    const double kl = traj_kl(r.controller, prev, dyn, mu0, cov0);
    ++res.iterations;
    return std::make_pair(std::move(r), kl);
  };
  auto take = [&](std::pair<LqgResult, double>& s, TrustRegionStatus status) {
    res.controller = std::move(s.first.controller);
    res.eta = s.first.eta;
    res.kl = s.second;
    res.status = status;
    return res;
  };

  double lo = cfg.eta_min, hi = cfg.eta_max;
  auto at_lo = solve(lo);
  if (at_lo.second <= epsilon) return take(at_lo, TrustRegionStatus::Inactive);
  auto at_hi = solve(hi);
  if (at_hi.second > epsilon) return take(at_hi, TrustRegionStatus::BracketExhausted);
  double kl_lo = at_lo.second, kl_hi = at_hi.second;
  const double slack = 1e-9;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const double mid = std::sqrt(lo * hi);
    auto at_mid = solve(mid);
    const double kl = at_mid.second;
    if (kl > kl_lo * (1.0 + slack) + slack || kl < kl_hi * (1.0 - slack) - slack) ++res.monotonicity_violations;
    if (kl >= (1.0 - cfg.tolerance) * epsilon && kl <= (1.0 + cfg.tolerance) * epsilon)
      return take(at_mid, TrustRegionStatus::Satisfied);
    if (kl > epsilon) {
      lo = mid;
      kl_lo = kl;
    } else {
      hi = mid;
      kl_hi = kl;
      at_hi = std::move(at_mid);
    }
  }
  // Out of iterations: the hi side satisfies the budget.
  return take(at_hi, TrustRegionStatus::Satisfied);
}

}  // namespace l2o
