#include "l2o/baseline_opt.hpp"
#include "l2o/objfn.hpp"

#include <gtest/gtest.h>

using namespace l2o;

namespace {

Quadratic random_spd_quadratic(int n, std::uint64_t seed, double min_eig = 0.5) {
  Rng rng(seed);
  Matrix m(n, n);
  for (int r = 0; r < n; ++r) m.row(r) = standard_normal(n, rng).transpose();
  Matrix a = m * m.transpose() + min_eig * Matrix::Identity(n, n);
  return Quadratic(a, standard_normal(n, rng));
}

// Dense BFGS inverse-Hessian updates from H0 = gamma I.
Matrix dense_bfgs_inverse(const std::vector<Vector>& s, const std::vector<Vector>& y, double gamma) {
  const auto n = s.front().size();
  Matrix h = gamma * Matrix::Identity(n, n);
  const Matrix id = Matrix::Identity(n, n);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double rho = 1.0 / s[i].dot(y[i]);
    h = (id - rho * s[i] * y[i].transpose()) * h * (id - rho * y[i] * s[i].transpose()) +
        rho * s[i] * s[i].transpose();
  }
  return h;
}

}  // namespace

TEST(LineSearch, ArmijoAcceptsFullStepOnWellScaledQuadratic) {
  const auto q = Quadratic::isotropic(3);
  const Vector x = Vector::Ones(3);
  const auto r = backtracking_armijo(q, x, q.value(x), q.gradient(x), -q.gradient(x), 1.0);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.step, 1.0);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
}

TEST(LineSearch, ArmijoHalvesUntilDecrease) {
  const auto q = Quadratic::isotropic(1, 4.0);  // unit step overshoots 4x
  const Vector x = Vector::Ones(1);
  const auto r = backtracking_armijo(q, x, q.value(x), q.gradient(x), -q.gradient(x), 1.0);
  EXPECT_TRUE(r.ok);
  EXPECT_LE(r.step, 0.5);
  EXPECT_LT(r.value, q.value(x));
}

TEST(LineSearch, ArmijoFailsOnAscentDirection) {
  const auto q = Quadratic::isotropic(2);
  const Vector x = Vector::Ones(2);
  const auto r = backtracking_armijo(q, x, q.value(x), q.gradient(x), q.gradient(x), 1.0);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.step, 0.0);
  EXPECT_EQ(r.point, x);
}

TEST(LineSearch, ExactSearchIsExactOnQuadratics) {
  const auto q = random_spd_quadratic(4, 3);
  const Vector x = Vector::Ones(4);
  const Vector g = q.gradient(x), d = -g;
  const auto r = exact_line_search(q, x, g, d, 1.0);
  EXPECT_NEAR(r.step, g.squaredNorm() / d.dot(q.A * d), 1e-12);
}

TEST(LineSearch, StrongWolfeConditionsHold) {
  const auto inst = gen_robustreg(3);
  const Vector x = sample_initial_point(4, 5);
  const double fx = inst.value(x);
  const Vector g = inst.gradient(x), d = -g;
  const auto r = strong_wolfe(inst, x, fx, g, d, 1.0);
  ASSERT_TRUE(r.ok);
  EXPECT_LE(r.value, fx + 1e-4 * r.step * g.dot(d));
  EXPECT_LE(std::abs(inst.gradient(r.point).dot(d)), 0.9 * std::abs(g.dot(d)));
}

TEST(LineSearch, CubicInterpolationStaysInside) {
  const double t = detail::cubic_interpolate(0.0, 1.0, -1.0, 1.0, 5.0, 10.0);
  EXPECT_GT(t, 0.0);
  EXPECT_LT(t, 1.0);
}

TEST(Baselines, GradientDescentMatchesRecurrence) {
  const auto q = random_spd_quadratic(3, 1);
  const Vector x0 = Vector::Ones(3);
  const Trace t = run_baseline(BaselineConfig::gd(0.05), q, x0, 10);
  ASSERT_EQ(t.points.size(), 11u);
  Vector x = x0;
  for (int i = 0; i < 10; ++i) {
    x = x - 0.05 * q.gradient(x);
    EXPECT_EQ(t.points[static_cast<std::size_t>(i) + 1], x);
  }
}

TEST(Baselines, GradientDescentOnHalfSquaredNormHitsZero) {
  const Trace t = run_baseline(BaselineConfig::gd(1.0), Quadratic::isotropic(2), Vector::Constant(2, 3.0), 1);
  EXPECT_EQ(t.points.back(), Vector::Zero(2));
}

TEST(Baselines, MomentumWithZeroDecayIsGradientDescentBitForBit) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = gen_nn(s);
    const Vector x0 = sample_initial_point(inst.param_dim(), s);
    const Trace gd = run_baseline(BaselineConfig::gd(0.3), inst, x0, 30);
    const Trace mo = run_baseline(BaselineConfig::momentum(0.3, 0.0), inst, x0, 30);
    for (std::size_t i = 0; i < gd.points.size(); ++i) EXPECT_EQ(gd.points[i], mo.points[i]);
    EXPECT_EQ(gd.objective_values, mo.objective_values);
  }
}

TEST(Baselines, MomentumMatchesGeometricSumOfGradients) {
  const auto q = random_spd_quadratic(2, 4);
  const double step = 0.02, alpha = 0.7;
  const Trace t = run_baseline(BaselineConfig::momentum(step, alpha), q, Vector::Ones(2), 6);
  std::vector<Vector> grads;
  Vector x = Vector::Ones(2);
  for (int i = 0; i < 6; ++i) {
    grads.push_back(q.gradient(x));
    Vector v = Vector::Zero(2);
    for (int j = 0; j <= i; ++j) v += std::pow(alpha, i - j) * grads[static_cast<std::size_t>(j)];
    x = x - step * v;
    EXPECT_LE((t.points[static_cast<std::size_t>(i) + 1] - x).norm(), 1e-14);
  }
}

TEST(Baselines, ConjugateGradientSolvesQuadraticInDimSteps) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto q = random_spd_quadratic(4, 100 + s);
    const Vector xstar = q.minimizer();
    const Trace t = run_baseline(BaselineConfig::cg(1.0, LineSearch::Exact), q, Vector::Zero(4), 4);
    EXPECT_LE((t.points.back() - xstar).norm(), 1e-8 * std::max(1.0, xstar.norm())) << "seed " << s;
  }
}

TEST(Baselines, ConjugateGradientWithBacktrackingDecreases) {
  const auto inst = gen_logistic(2);
  const Vector x0 = sample_initial_point(4, 2);
  const Trace t = run_baseline(BaselineConfig::cg(), inst, x0, 50);
  for (std::size_t i = 1; i < t.objective_values.size(); ++i)
    EXPECT_LE(t.objective_values[i], t.objective_values[i - 1] + 1e-15);
  EXPECT_FALSE(t.diverged);
}

TEST(Baselines, LbfgsFirstStepFollowsNegativeGradient) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto inst = gen_robustreg(s);
    const Vector x0 = sample_initial_point(4, s + 50);
    const Trace t = run_baseline(BaselineConfig::lbfgs(), inst, x0, 1);
    const Vector step = t.points[1] - t.points[0];
    const Vector g = inst.gradient(x0);
    EXPECT_NEAR(step.dot(-g) / (step.norm() * g.norm()), 1.0, 1e-12);
  }
}

TEST(Baselines, TwoLoopMatchesDenseBfgsInverse) {
  Rng rng(9);
  const auto q = random_spd_quadratic(5, 9);
  std::deque<Vector> s, y;
  std::deque<double> rho;
  std::vector<Vector> sv, yv;
  for (int i = 0; i < 4; ++i) {
    const Vector si = standard_normal(5, rng);
    const Vector yi = q.A * si;  // curvature pairs of an SPD quadratic
    s.push_back(si);
    y.push_back(yi);
    rho.push_back(1.0 / si.dot(yi));
    sv.push_back(si);
    yv.push_back(yi);
  }
  const Vector g = standard_normal(5, rng);
  const double gamma = 0.37;
  const Vector ref = dense_bfgs_inverse(sv, yv, gamma) * g;
  EXPECT_LE((detail::two_loop(s, y, rho, g, gamma) - ref).norm(), 1e-10 * ref.norm());
}

TEST(Baselines, LbfgsConvergesOnConvexQuadratic) {
  const auto q = random_spd_quadratic(4, 21);
  const Trace t = run_baseline(BaselineConfig::lbfgs(), q, Vector::Zero(4), 30);
  EXPECT_LE((t.points.back() - q.minimizer()).norm(), 1e-6);
}

TEST(Baselines, DivergenceFreezesTrace) {
  // step far beyond 2/L on a quadratic: |x| grows by 9x per step
  const auto q = Quadratic::isotropic(1, 1.0);
  const Trace t = run_baseline(BaselineConfig::gd(10.0), q, Vector::Ones(1), 40);
  EXPECT_TRUE(t.diverged);
  ASSERT_EQ(t.points.size(), 41u);
  EXPECT_EQ(t.points.back(), t.points[30]);
  EXPECT_GT(t.final_value(), 1e6 * 0.5);
}

TEST(Baselines, TraceLengthIsHorizonPlusOne) {
  const auto inst = gen_logistic(1);
  for (Method m : {Method::GD, Method::Momentum, Method::CG, Method::LBFGS}) {
    BaselineConfig cfg = default_grid(m).front();
    const Trace t = run_baseline(cfg, inst, Vector::Zero(4), 17);
    EXPECT_EQ(t.points.size(), 18u);
    EXPECT_EQ(t.objective_values.size(), 18u);
  }
}

TEST(Baselines, RejectsBadInputs) {
  const auto q = Quadratic::isotropic(2);
  EXPECT_THROW(run_baseline(BaselineConfig::gd(0.1), q, Vector::Zero(2), 0), ContractViolation);
  EXPECT_THROW(run_baseline(BaselineConfig::gd(0.1), q, Vector::Zero(3), 5), ContractViolation);
  Vector bad = Vector::Zero(2);
  bad[0] = std::nan("");
  EXPECT_THROW(run_baseline(BaselineConfig::gd(0.1), q, bad, 5), ContractViolation);
}

TEST(Baselines, ConfigJsonRoundTrip) {
  for (Method m : {Method::GD, Method::Momentum, Method::CG, Method::LBFGS})
    for (const auto& c : default_grid(m)) {
      const auto back = baseline_config_from_json(to_json(c));
      EXPECT_EQ(back.method, c.method);
      EXPECT_EQ(back.step_size, c.step_size);
      EXPECT_EQ(back.momentum_decay, c.momentum_decay);
      EXPECT_EQ(back.line_search, c.line_search);
    }
}

TEST(Tuning, SingleEntryGridReturnsThatEntry) {
  const std::vector<Quadratic> set = {Quadratic::isotropic(2)};
  const auto cfg = grid_search(Method::GD, set, {BaselineConfig::gd(0.7)}, 10, {Vector::Ones(2)});
  EXPECT_EQ(cfg.step_size, 0.7);
}

TEST(Tuning, MomentumMatchesBruteForceEnumeration) {
  std::vector<Quadratic> set;
  std::vector<ParamVector> x0s;
  for (std::uint64_t s = 0; s < 3; ++s) {
    set.push_back(random_spd_quadratic(3, 300 + s));
    x0s.push_back(Vector::Constant(3, 2.0));
  }
  const auto grid = default_grid(Method::Momentum);
  const auto best = grid_search(Method::Momentum, set, grid, 50, x0s);

  // enumeration: mean final objective, ties to smaller step then decay
  double best_mean = kInf;
  BaselineConfig ref;
  for (const auto& c : grid) {
    double mean = 0.0;
    bool any_div = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Trace t = run_baseline(c, set[i], x0s[i], 50);
      any_div = any_div || t.diverged;
      mean += t.final_value() / 3.0;
    }
    if (any_div) continue;
    if (mean < best_mean) {
      best_mean = mean;
      ref = c;
    }
  }
  EXPECT_EQ(best.step_size, ref.step_size);
  EXPECT_EQ(best.momentum_decay, ref.momentum_decay);
}

TEST(Tuning, GridIgnoresOtherMethods) {
  const std::vector<Quadratic> set = {Quadratic::isotropic(2)};
  auto grid = default_grid(Method::GD);
  grid.push_back(BaselineConfig::momentum(0.5, 0.5));
  EXPECT_EQ(grid_search(Method::GD, set, grid, 5, {Vector::Ones(2)}).method, Method::GD);
  EXPECT_THROW(grid_search(Method::CG, set, grid, 5, {Vector::Ones(2)}), ContractViolation);
}

TEST(Tuning, AllDivergingGridThrows) {
  const std::vector<Quadratic> set = {Quadratic::isotropic(1)};
  EXPECT_THROW(grid_search(Method::GD, set, {BaselineConfig::gd(50.0)}, 30, {Vector::Ones(1)}),
               NoViableConfiguration);
}

TEST(Tuning, PartialDivergencePrefersFewerDivergences) {
  // curvature 1 and 100: step 0.015 is stable on both, 0.5 diverges on one
  std::vector<Quadratic> set = {Quadratic::isotropic(1, 1.0), Quadratic::isotropic(1, 100.0)};
  const auto cfg =
      grid_search(Method::GD, set, {BaselineConfig::gd(0.5), BaselineConfig::gd(0.015)}, 60,
                  {Vector::Ones(1), Vector::Ones(1)});
  EXPECT_EQ(cfg.step_size, 0.015);
}

TEST(Tuning, DefaultGridSizes) {
  EXPECT_EQ(default_step_sizes().size(), 10u);
  EXPECT_EQ(default_grid(Method::GD).size(), 10u);
  EXPECT_EQ(default_grid(Method::Momentum).size(), 60u);
}
