#pragma once

#include "l2o/objective.hpp"

#include <algorithm>
#include <cmath>

namespace l2o {

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;
  Vector point;
  Vector gradient;  // empty unless the search evaluated it at `point`
  bool ok = false;
  int evaluations = 0;
};

/// Armijo backtracking: shrink from `initial` until
/// f(x + a d) <= f(x) + c1 a g'd. Returns ok=false and step 0 when no
/// acceptable step is found within `max_trials` shrinks.
template <Objective F>
LineSearchResult backtracking_armijo(const F& f, const Vector& x, double fx, const Vector& g,
                                     const Vector& d, double initial, double c1 = 1e-4,
                                     double shrink = 0.5, int max_trials = 50) {
  LineSearchResult res;
  const double slope = g.dot(d);
  double a = initial;
  for (int i = 0; i < max_trials; ++i) {
    Vector trial = x + a * d;
    const double ft = f.value(trial);
    ++res.evaluations;
    if (std::isfinite(ft) && ft <= fx + c1 * a * slope) {
      res.step = a;
      res.value = ft;
      res.point = std::move(trial);
      res.ok = true;
      return res;
    }
    a *= shrink;
  }
  res.point = x;
  res.value = fx;
  return res;
}

/// Minimizes phi(a) = f(x + a d) by secant iterations on phi'(a). Exact in a
/// single secant step for quadratics.
template <Objective F>
LineSearchResult exact_line_search(const F& f, const Vector& x, const Vector& g, const Vector& d,
                                   double initial = 1.0, int max_iter = 50) {
  LineSearchResult res;
  const double slope0 = g.dot(d);
  double a0 = 0.0, s0 = slope0;
  double a1 = initial;
  Vector g1 = f.gradient(x + a1 * d);
  double s1 = g1.dot(d);
  ++res.evaluations;
  for (int it = 0; it < max_iter && std::abs(s1) > 1e-14 * std::abs(slope0); ++it) {
    const double denom = s1 - s0;
    if (denom == 0.0 || !std::isfinite(denom)) break;
    const double a2 = a1 - s1 * (a1 - a0) / denom;
    a0 = a1;
    s0 = s1;
    a1 = a2;
    g1 = f.gradient(x + a1 * d);
    s1 = g1.dot(d);
    ++res.evaluations;
  }
  res.step = a1;
  res.point = x + a1 * d;
  res.value = f.value(res.point);
  res.gradient = std::move(g1);
  res.ok = std::isfinite(res.value);
  return res;
}

namespace detail {

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), clamped
// into the safeguarded interior of [a, b].
inline double cubic_interpolate(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double cand = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if (std::isfinite(cand)) t = cand;
  }
  const double margin = 0.1 * (hi - lo);
  return std::clamp(t, lo + margin, hi - margin);
}

}  // namespace detail

/// Strong-Wolfe line search (bracketing followed by zoom with cubic
/// interpolation). On failure returns the best sufficient-decrease point seen,
/// or ok=false with step 0 if there is none.
template <Objective F>
LineSearchResult strong_wolfe(const F& f, const Vector& x, double fx, const Vector& g,
                              const Vector& d, double initial, double c1 = 1e-4, double c2 = 0.9,
                              int max_evals = 30, double max_step = 1e10) {
  LineSearchResult res;
  const double slope0 = g.dot(d);
  LineSearchResult best;
  best.point = x;
  best.value = fx;

  struct Eval {
    double a, f, s;
    Vector p, g;
  };
  auto eval = [&](double a) {
    Eval e{a, 0.0, 0.0, x + a * d, Vector()};
    e.f = f.value(e.p);
    e.g = f.gradient(e.p);
    e.s = e.g.dot(d);
    ++res.evaluations;
    if (std::isfinite(e.f) && e.f <= fx + c1 * a * slope0 && e.f < best.value) {
      best.step = a;
      best.value = e.f;
      best.point = e.p;
      best.gradient = e.g;
      best.ok = true;
    }
    return e;
  };
  auto accept = [&](Eval& e) {
    res.step = e.a;
    res.value = e.f;
    res.point = std::move(e.p);
    res.gradient = std::move(e.g);
    res.ok = true;
    return res;
  };

  auto zoom = [&](Eval lo, Eval hi) -> LineSearchResult {
    while (res.evaluations < max_evals) {
      double a = detail::cubic_interpolate(lo.a, lo.f, lo.s, hi.a, hi.f, hi.s);
      if (!std::isfinite(a) || std::abs(hi.a - lo.a) < 1e-16) break;
      Eval e = eval(a);
      if (!std::isfinite(e.f) || e.f > fx + c1 * a * slope0 || e.f >= lo.f) {
        hi = std::move(e);
      } else {
        if (std::abs(e.s) <= -c2 * slope0) return accept(e);
        if (e.s * (hi.a - lo.a) >= 0.0) hi = lo;
        lo = std::move(e);
      }
    }
    return LineSearchResult{};
  };

  Eval prev{0.0, fx, slope0, x, g};
  double a = std::min(initial, max_step);
  bool first = true;
  while (res.evaluations < max_evals) {
    Eval cur = eval(a);
    if (!std::isfinite(cur.f) || cur.f > fx + c1 * a * slope0 || (!first && cur.f >= prev.f)) {
      LineSearchResult z = zoom(prev, cur);
      if (z.ok) return z;
      break;
    }
    if (std::abs(cur.s) <= -c2 * slope0) return accept(cur);
    if (cur.s >= 0.0) {
      LineSearchResult z = zoom(cur, prev);
      if (z.ok) return z;
      break;
    }
    prev = std::move(cur);
    first = false;
    a = std::min(2.0 * a, max_step);
  }
  best.evaluations = res.evaluations;
  return best;
}

}  // namespace l2o
