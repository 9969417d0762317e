#pragma once

#include "l2o/core.hpp"

#include <concepts>

namespace l2o {

/// Anything the optimizers and the MDP can drive: a dimension, a value and an
/// analytic gradient.
template <class F>
concept Objective = requires(const F& f, const Vector& x) {
  { f.dim() } -> std::convertible_to<int>;
  { f.value(x) } -> std::convertible_to<double>;
  { f.gradient(x) } -> std::convertible_to<Vector>;
};

/// Objectives that can also hand out a positive semi-definite local curvature
/// model (exact Hessian, Gauss-Newton, or a floored finite-difference Hessian).
template <class F>
concept CurvatureObjective = Objective<F> && requires(const F& f, const Vector& x) {
  { f.curvature(x) } -> std::convertible_to<Matrix>;
};

/// Central differences, one coordinate at a time.
template <Objective F>
Vector finite_diff_gradient(const F& f, const Vector& x, double eps) {
  require(eps > 0.0, "finite_diff_gradient: eps must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    probe[j] = xj + eps;
    const double fp = f.value(probe);
    probe[j] = xj - eps;
    const double fm = f.value(probe);
    probe[j] = xj;
    g[j] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Finite-difference Hessian built from the analytic gradient, symmetrized.
template <Objective F>
Matrix finite_diff_hessian(const F& f, const Vector& x, double eps = 1e-5) {
  const auto n = x.size();
  Matrix h(n, n);
  Vector probe = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double xj = x[j];
    probe[j] = xj + eps;
    const Vector gp = f.gradient(probe);
    probe[j] = xj - eps;
    const Vector gm = f.gradient(probe);
    probe[j] = xj;
    h.col(j) = (gp - gm) / (2.0 * eps);
  }
  return 0.5 * (h + h.transpose());
}

/// f(x) = 1/2 x'Ax - b'x + offset. Used as a test objective and as an oracle
/// problem with a closed-form minimizer.
struct Quadratic {
  Matrix A;
  Vector b;
  double offset = 0.0;

  Quadratic(Matrix a, Vector bb, double off = 0.0)
      : A(std::move(a)), b(std::move(bb)), offset(off) {
    require(A.rows() == A.cols() && A.rows() == b.size(), "Quadratic: shape mismatch");
  }

  /// 1/2 |x|^2 in n dimensions.
  static Quadratic isotropic(int n, double curvature = 1.0) {
    return Quadratic(curvature * Matrix::Identity(n, n), Vector::Zero(n));
  }

  int dim() const { return static_cast<int>(b.size()); }
  double value(const Vector& x) const {
    require(x.size() == b.size(), "Quadratic::value: dimension mismatch");
    return 0.5 * x.dot(A * x) - b.dot(x) + offset;
  }
  Vector gradient(const Vector& x) const {
    require(x.size() == b.size(), "Quadratic::gradient: dimension mismatch");
    return A * x - b;
  }
  Matrix curvature(const Vector&) const { return 0.5 * (A + A.transpose()); }
  Vector minimizer() const { return A.ldlt().solve(b); }
};

}  // namespace l2o
