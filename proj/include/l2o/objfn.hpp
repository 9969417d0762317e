#pragma once

// Randomized objective families: l2-regularized logistic regression,
// Geman-McClure robust linear regression, and a two-layer ReLU/softmax
// classifier. Each instance owns its dataset and evaluates full-batch.

#include "l2o/core.hpp"
#include "l2o/objective.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

namespace l2o {

enum class Family { Logistic, RobustReg, NeuralNet };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Logistic: return "logistic";
    case Family::RobustReg: return "robustreg";
    case Family::NeuralNet: return "neuralnet";
  }
  return "unknown";
}

inline Family family_from_string(const std::string& s) {
  if (s == "logistic") return Family::Logistic;
  if (s == "robustreg") return Family::RobustReg;
  if (s == "neuralnet") return Family::NeuralNet;
  throw ContractViolation("unknown objective family: " + s);
}

namespace detail {

// log(1 + e^z) without overflow.
inline double log1pexp(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

struct ObjectiveInstance {
  Family family = Family::Logistic;
  std::uint64_t seed = 0;
  Matrix features;  // n_samples x d
  Vector labels;    // n_samples; {0,1} for Logistic, class index for NeuralNet
  double lambda = 0.0;
  double c_shape = 1.0;
  int hidden = 2;   // NeuralNet only
  int classes = 2;  // NeuralNet only

  int n_samples() const { return static_cast<int>(features.rows()); }
  int input_dim() const { return static_cast<int>(features.cols()); }

  int param_dim() const {
    const int d = input_dim();
    if (family == Family::NeuralNet) return hidden * d + hidden + classes * hidden + classes;
    return d + 1;
  }
  int dim() const { return param_dim(); }

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  /// PSD curvature model used for LQG cost expansion: exact Hessian for
  /// Logistic (equal to Gauss-Newton there), Gauss-Newton for NeuralNet, and a
  /// finite-difference Hessian with eigenvalues floored at 1e-6 for RobustReg.
  Matrix curvature(const Vector& x) const;

 private:
  void check_dim(const Vector& x, const char* where) const {
    require(x.size() == param_dim(),
            std::string(where) + ": parameter dimension " + std::to_string(x.size()) +
                " does not match instance dimension " + std::to_string(param_dim()));
  }

  // NeuralNet forward pieces for one sample.
  struct NetSample {
    Vector pre, hid, logits, prob;
  };
  NetSample net_forward(const Vector& x, int i) const;
  Eigen::Map<const Matrix, 0, Eigen::Stride<1, Eigen::Dynamic>> W(const Vector& x) const {
    return {x.data(), hidden, input_dim(), Eigen::Stride<1, Eigen::Dynamic>(1, input_dim())};
  }
  Eigen::Map<const Matrix, 0, Eigen::Stride<1, Eigen::Dynamic>> U(const Vector& x) const {
    const int off = hidden * input_dim() + hidden;
    return {x.data() + off, classes, hidden, Eigen::Stride<1, Eigen::Dynamic>(1, hidden)};
  }
};

// ---------------------------------------------------------------------------
// Evaluation

inline ObjectiveInstance::NetSample ObjectiveInstance::net_forward(const Vector& x, int i) const {
  const int d = input_dim();
  NetSample s;
  const Vector xi = features.row(i).transpose();
  s.pre = W(x) * xi + x.segment(hidden * d, hidden);
  s.hid = s.pre.cwiseMax(0.0);
  s.logits = U(x) * s.hid + x.tail(classes);
  const double m = s.logits.maxCoeff();
  s.prob = (s.logits.array() - m).exp();
  s.prob /= s.prob.sum();
  return s;
}

inline double ObjectiveInstance::value(const Vector& x) const {
  check_dim(x, "value");
  const int n = n_samples();
  const int d = input_dim();
  switch (family) {
    case Family::Logistic: {
      const Vector z = features * x.head(d) + Vector::Constant(n, x[d]);
      double loss = 0.0;
      for (int i = 0; i < n; ++i) loss += detail::log1pexp(z[i]) - labels[i] * z[i];
      return loss / n + 0.5 * lambda * x.head(d).squaredNorm();
    }
    case Family::RobustReg: {
      const Vector r = labels - features * x.head(d) - Vector::Constant(n, x[d]);
      const double c2 = c_shape * c_shape;
      double loss = 0.0;
      for (int i = 0; i < n; ++i) {
        const double r2 = r[i] * r[i];
        loss += r2 / (c2 + r2);
      }
      return loss / n;
    }
    case Family::NeuralNet: {
      double loss = 0.0;
      for (int i = 0; i < n; ++i) {
        const NetSample s = net_forward(x, i);
        const double m = s.logits.maxCoeff();
        const double lse = m + std::log((s.logits.array() - m).exp().sum());
        loss += lse - s.logits[static_cast<int>(labels[i])];
      }
      const double reg = W(x).squaredNorm() + U(x).squaredNorm();
      return loss / n + 0.5 * lambda * reg;
    }
  }
  return 0.0;
}

inline Vector ObjectiveInstance::gradient(const Vector& x) const {
  check_dim(x, "gradient");
  const int n = n_samples();
  const int d = input_dim();
  Vector g = Vector::Zero(param_dim());
  switch (family) {
    case Family::Logistic: {
      const Vector z = features * x.head(d) + Vector::Constant(n, x[d]);
      Vector resid(n);
      for (int i = 0; i < n; ++i) resid[i] = detail::sigmoid(z[i]) - labels[i];
      g.head(d) = features.transpose() * resid / n + lambda * x.head(d);
      g[d] = resid.sum() / n;
      return g;
    }
    case Family::RobustReg: {
      const Vector r = labels - features * x.head(d) - Vector::Constant(n, x[d]);
      const double c2 = c_shape * c_shape;
      Vector dr(n);  // d loss_i / d r_i
      for (int i = 0; i < n; ++i) {
        const double denom = c2 + r[i] * r[i];
        dr[i] = 2.0 * r[i] * c2 / (denom * denom);
      }
      g.head(d) = -features.transpose() * dr / n;
      g[d] = -dr.sum() / n;
      return g;
    }
    case Family::NeuralNet: {
      const int h = hidden;
      const int p = classes;
      const int off_b = h * d, off_u = off_b + h, off_c = off_u + p * h;
      const auto u = U(x);
      for (int i = 0; i < n; ++i) {
        const NetSample s = net_forward(x, i);
        Vector dz = s.prob;
        dz[static_cast<int>(labels[i])] -= 1.0;
        const Vector dh = u.transpose() * dz;
        for (int r = 0; r < h; ++r) {
          // subgradient 0 at the kink
          const double dpre = s.pre[r] > 0.0 ? dh[r] : 0.0;
          for (int col = 0; col < d; ++col) g[r * d + col] += dpre * features(i, col);
          g[off_b + r] += dpre;
        }
        for (int j = 0; j < p; ++j) {
          for (int r = 0; r < h; ++r) g[off_u + j * h + r] += dz[j] * s.hid[r];
          g[off_c + j] += dz[j];
        }
      }
      g /= n;
      g.head(h * d) += lambda * x.head(h * d);
      g.segment(off_u, p * h) += lambda * x.segment(off_u, p * h);
      return g;
    }
  }
  return g;
}

inline Matrix ObjectiveInstance::curvature(const Vector& x) const {
  check_dim(x, "curvature");
  const int n = n_samples();
  const int d = input_dim();
  const int dim = param_dim();
  switch (family) {
    case Family::Logistic: {
      const Vector z = features * x.head(d) + Vector::Constant(n, x[d]);
      Matrix aug(n, d + 1);
      aug.leftCols(d) = features;
      aug.col(d).setOnes();
      Vector w(n);
      for (int i = 0; i < n; ++i) {
        const double s = detail::sigmoid(z[i]);
        w[i] = s * (1.0 - s);
      }
      Matrix hess = aug.transpose() * w.asDiagonal() * aug / n;
      hess.topLeftCorner(d, d).diagonal().array() += lambda;
      return floor_eigenvalues(hess, 1e-6);
    }
    case Family::RobustReg:
      return floor_eigenvalues(finite_diff_hessian(*this, x), 1e-6);
    case Family::NeuralNet: {
      const int h = hidden;
      const int p = classes;
      const int off_b = h * d, off_u = off_b + h, off_c = off_u + p * h;
      const auto u = U(x);
      Matrix gn = Matrix::Zero(dim, dim);
      Matrix jac(p, dim);
      for (int i = 0; i < n; ++i) {
        const NetSample s = net_forward(x, i);
        jac.setZero();
        for (int r = 0; r < h; ++r) {
          if (s.pre[r] <= 0.0) continue;
          for (int j = 0; j < p; ++j) {
            for (int col = 0; col < d; ++col) jac(j, r * d + col) = u(j, r) * features(i, col);
            jac(j, off_b + r) = u(j, r);
          }
        }
        for (int j = 0; j < p; ++j) {
          for (int r = 0; r < h; ++r) jac(j, off_u + j * h + r) = s.hid[r];
          jac(j, off_c + j) = 1.0;
        }
        const Matrix hz = Matrix(s.prob.asDiagonal()) - s.prob * s.prob.transpose();
        gn.noalias() += jac.transpose() * hz * jac;
      }
      gn /= n;
      for (int k = 0; k < h * d; ++k) gn(k, k) += lambda;
      for (int k = off_u; k < off_c; ++k) gn(k, k) += lambda;
      return floor_eigenvalues(gn, 1e-6);
    }
  }
  return Matrix::Identity(dim, dim);
}

inline double value(const ObjectiveInstance& inst, const Vector& x) { return inst.value(x); }
inline Vector gradient(const ObjectiveInstance& inst, const Vector& x) { return inst.gradient(x); }

// ---------------------------------------------------------------------------
// Dataset generators

namespace detail {

inline Vector uniform_vector(int d, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = u(rng);
  return v;
}

// Lower Cholesky factor of A A' + 0.1 I with A standard normal.
inline Matrix random_covariance_factor(int d, Rng& rng) {
  Matrix a(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) a(r, c) = normal(rng);
  Matrix cov = a * a.transpose() + 0.1 * Matrix::Identity(d, d);
  return cov.llt().matrixL();
}

inline void fill_gaussian_rows(Matrix& out, int first, int count, const Vector& mean,
                               const Matrix& factor, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    const Vector z = standard_normal(static_cast<int>(mean.size()), rng);
    out.row(first + i) = (mean + factor * z).transpose();
  }
}

}  // namespace detail

constexpr double kMeanBox = 3.0;
constexpr double kRobustNoiseStd = 0.1;

inline ObjectiveInstance gen_logistic(std::uint64_t seed) {
  constexpr int d = 3, per = 50;
  Rng rng(seed);
  ObjectiveInstance inst;
  inst.family = Family::Logistic;
  inst.seed = seed;
  inst.lambda = 0.0005;
  inst.features.resize(2 * per, d);
  inst.labels.resize(2 * per);
  for (int g = 0; g < 2; ++g) {
    const Vector mean = detail::uniform_vector(d, -kMeanBox, kMeanBox, rng);
    const Matrix factor = detail::random_covariance_factor(d, rng);
    detail::fill_gaussian_rows(inst.features, g * per, per, mean, factor, rng);
    inst.labels.segment(g * per, per).setConstant(g);
  }
  return inst;
}

inline ObjectiveInstance gen_robustreg(std::uint64_t seed, double noise_std = kRobustNoiseStd) {
  constexpr int d = 3, groups = 4, per = 25;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ObjectiveInstance inst;
  inst.family = Family::RobustReg;
  inst.seed = seed;
  inst.c_shape = 1.0;
  inst.features.resize(groups * per, d);
  inst.labels.resize(groups * per);
  const Matrix identity = Matrix::Identity(d, d);
  for (int g = 0; g < groups; ++g) {
    const Vector mean = detail::uniform_vector(d, -kMeanBox, kMeanBox, rng);
    const Vector proj = standard_normal(d, rng);
    const double bias = normal(rng);
    detail::fill_gaussian_rows(inst.features, g * per, per, mean, identity, rng);
    for (int i = g * per; i < (g + 1) * per; ++i) {
      const double eps = normal(rng);
      inst.labels[i] = inst.features.row(i).dot(proj) + bias + noise_std * eps;
    }
  }
  return inst;
}

/// Draws one label per cluster from `draw()` until both classes appear. After
/// `max_attempts` single-class draws the first cluster's label is flipped.
template <class Draw>
std::vector<int> draw_cluster_labels(int clusters, Draw&& draw, int max_attempts = 100) {
  std::vector<int> labels(static_cast<std::size_t>(clusters));
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    for (auto& l : labels) l = draw();
    const bool mixed = std::any_of(labels.begin(), labels.end(),
                                   [&](int l) { return l != labels.front(); });
    if (mixed) return labels;
  }
  labels.front() = 1 - labels.front();
  return labels;
}

inline ObjectiveInstance gen_nn(std::uint64_t seed) {
  constexpr int d = 2, groups = 4, per = 25;
  Rng rng(seed);
  ObjectiveInstance inst;
  inst.family = Family::NeuralNet;
  inst.seed = seed;
  inst.lambda = 0.0005;
  inst.hidden = 2;
  inst.classes = 2;
  inst.features.resize(groups * per, d);
  inst.labels.resize(groups * per);
  for (int g = 0; g < groups; ++g) {
    const Vector mean = detail::uniform_vector(d, -kMeanBox, kMeanBox, rng);
    const Matrix factor = detail::random_covariance_factor(d, rng);
    detail::fill_gaussian_rows(inst.features, g * per, per, mean, factor, rng);
  }
  std::uniform_int_distribution<int> coin(0, 1);
  const auto cluster_labels = draw_cluster_labels(groups, [&] { return coin(rng); });
  for (int g = 0; g < groups; ++g)
    inst.labels.segment(g * per, per).setConstant(cluster_labels[static_cast<std::size_t>(g)]);
  return inst;
}

inline ObjectiveInstance generate(Family family, std::uint64_t seed) {
  switch (family) {
    case Family::Logistic: return gen_logistic(seed);
    case Family::RobustReg: return gen_robustreg(seed);
    case Family::NeuralNet: return gen_nn(seed);
  }
  return gen_logistic(seed);
}

/// Initial iterate: standard normal per coordinate.
inline ParamVector sample_initial_point(int dim, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(dim, rng);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const ObjectiveInstance& inst) {
  nlohmann::json j;
  j["family"] = to_string(inst.family);
  j["seed"] = inst.seed;
  j["n_samples"] = inst.n_samples();
  j["input_dim"] = inst.input_dim();
  std::vector<double> feats;
  feats.reserve(static_cast<std::size_t>(inst.features.size()));
  for (int r = 0; r < inst.features.rows(); ++r)
    for (int c = 0; c < inst.features.cols(); ++c) feats.push_back(inst.features(r, c));
  j["features"] = feats;
  j["labels"] = std::vector<double>(inst.labels.data(), inst.labels.data() + inst.labels.size());
  j["lambda"] = inst.lambda;
  j["c_shape"] = inst.c_shape;
  if (inst.family == Family::NeuralNet) {
    j["hidden"] = inst.hidden;
    j["classes"] = inst.classes;
  }
  return j;
}

inline ObjectiveInstance instance_from_json(const nlohmann::json& j) {
  ObjectiveInstance inst;
  inst.family = family_from_string(j.at("family").get<std::string>());
  inst.seed = j.at("seed").get<std::uint64_t>();
  const int n = j.at("n_samples").get<int>();
  const int d = j.at("input_dim").get<int>();
  const auto feats = j.at("features").get<std::vector<double>>();
  const auto labels = j.at("labels").get<std::vector<double>>();
  require(static_cast<int>(feats.size()) == n * d, "instance record: feature count mismatch");
  require(static_cast<int>(labels.size()) == n, "instance record: label count mismatch");
  inst.features.resize(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) inst.features(r, c) = feats[static_cast<std::size_t>(r * d + c)];
  inst.labels = Eigen::Map<const Vector>(labels.data(), n);
  inst.lambda = j.at("lambda").get<double>();
  inst.c_shape = j.at("c_shape").get<double>();
  inst.hidden = j.value("hidden", 2);
  inst.classes = j.value("classes", 2);
  return inst;
}

}  // namespace l2o
