#pragma once

// Gaussian policy: one softplus hidden layer, linear output for the mean and
// a state-independent per-dimension log-variance.

#include "l2o/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace l2o {

constexpr double kLogVarFloor = -40.0;
constexpr double kLogVarCeil = 4.0;

inline double softplus(double z) {
  if (z > 30.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

inline double softplus_derivative(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct PolicyParams {
  Matrix W1;  // hidden x feature_len
  Vector b1;
  Matrix W2;  // param_dim x hidden
  Vector b2;
  Vector log_var;

  int feature_len() const { return static_cast<int>(W1.cols()); }
  int hidden() const { return static_cast<int>(W1.rows()); }
  int param_dim() const { return static_cast<int>(W2.rows()); }

  static PolicyParams zeros(int feature_len, int param_dim, int hidden = 50) {
    return {Matrix::Zero(hidden, feature_len), Vector::Zero(hidden),
            Matrix::Zero(param_dim, hidden), Vector::Zero(param_dim), Vector::Zero(param_dim)};
  }

  bool all_finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite() &&
           log_var.allFinite();
  }

  /// Number of scalar parameters, in the order used by flatten().
  Eigen::Index size() const { return W1.size() + b1.size() + W2.size() + b2.size() + log_var.size(); }
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero, log-variance `log_var0`.
inline PolicyParams init_policy(int feature_len, int param_dim, std::uint64_t seed,
                                int hidden = 50, double log_var0 = std::log(0.01)) {
  Rng rng(seed);
  PolicyParams p = PolicyParams::zeros(feature_len, param_dim, hidden);
  std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(feature_len), 1.0 / std::sqrt(feature_len));
  std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(hidden), 1.0 / std::sqrt(hidden));
  for (Eigen::Index i = 0; i < p.W1.size(); ++i) p.W1.data()[i] = u1(rng);
  for (Eigen::Index i = 0; i < p.W2.size(); ++i) p.W2.data()[i] = u2(rng);
  p.log_var.setConstant(log_var0);
  return p;
}

inline Vector flatten(const PolicyParams& p) {
  Vector v(p.size());
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    v.segment(o, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    o += m.size();
  };
  put(p.W1);
  put(p.b1);
  put(p.W2);
  put(p.b2);
  put(p.log_var);
  return v;
}

inline void unflatten(const Vector& v, PolicyParams& p) {
  require(v.size() == p.size(), "unflatten: size mismatch");
  Eigen::Index o = 0;
  auto get = [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = v.segment(o, m.size());
    o += m.size();
  };
  get(p.W1);
  get(p.b1);
  get(p.W2);
  get(p.b2);
  get(p.log_var);
}

inline Vector forward_mean(const PolicyParams& p, const Vector& feat) {
  require(feat.size() == p.feature_len(),
          "forward_mean: feature length " + std::to_string(feat.size()) + " != " +
              std::to_string(p.feature_len()));
  const Vector pre = p.W1 * feat + p.b1;
  const Vector hid = pre.unaryExpr([](double z) { return softplus(z); });
  return p.W2 * hid + p.b2;
}

/// Column-wise forward pass over a feature matrix (feature_len x N).
inline Matrix forward_mean_batch(const PolicyParams& p, const Matrix& feats) {
  require(feats.rows() == p.feature_len(), "forward_mean_batch: feature length mismatch");
  Matrix pre = p.W1 * feats;
  pre.colwise() += p.b1;
  const Matrix hid = pre.unaryExpr([](double z) { return softplus(z); });
  Matrix out = p.W2 * hid;
  out.colwise() += p.b2;
  return out;
}

/// Gradient of upstream' * mean(feat) with respect to every parameter, packed
/// like PolicyParams (log_var entry is zero).
inline PolicyParams mean_vjp(const PolicyParams& p, const Vector& feat, const Vector& upstream) {
  const Vector pre = p.W1 * feat + p.b1;
  const Vector hid = pre.unaryExpr([](double z) { return softplus(z); });
  const Vector dpre =
      (p.W2.transpose() * upstream).cwiseProduct(pre.unaryExpr([](double z) { return softplus_derivative(z); }));
  PolicyParams g;
  g.W2 = upstream * hid.transpose();
  g.b2 = upstream;
  g.W1 = dpre * feat.transpose();
  g.b1 = dpre;
  g.log_var = Vector::Zero(p.param_dim());
  return g;
}

inline Vector action_stddev(const PolicyParams& p) {
  return (0.5 * p.log_var.cwiseMax(kLogVarFloor).cwiseMin(kLogVarCeil)).array().exp();
}

inline Vector sample_action(const PolicyParams& p, const Vector& feat, Rng& rng) {
  const Vector mean = forward_mean(p, feat);
  if (p.log_var.maxCoeff() <= kLogVarFloor) return mean;
  return mean + action_stddev(p).cwiseProduct(standard_normal(p.param_dim(), rng));
}

// ---------------------------------------------------------------------------
// Supervised objective

/// One regression pair per column: features (feature_len x N), target means
/// (param_dim x N), and one target precision per pair.
struct SupervisedBatch {
  Matrix features;
  Matrix targets;
  std::vector<Matrix> precisions;

  Eigen::Index size() const { return features.cols(); }
};

/// Throws unless every precision is symmetric positive semi-definite.
inline void check_precisions(const SupervisedBatch& batch) {
  require(batch.targets.cols() == batch.features.cols() &&
              static_cast<Eigen::Index>(batch.precisions.size()) == batch.features.cols(),
          "supervised batch: inconsistent sizes");
  for (const Matrix& prec : batch.precisions) {
    const double scale = std::max(1.0, prec.cwiseAbs().maxCoeff());
    require((prec - prec.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale,
            "supervised batch: precision is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(prec, Eigen::EigenvaluesOnly);
    require(es.eigenvalues().minCoeff() >= -1e-9 * scale,
            "supervised batch: precision is not positive semi-definite");
  }
}

struct LossTerms {
  double mahalanobis = 0.0;  // mean of 1/2 r'Pr
  double variance = 0.0;     // mean of 1/2 tr(P diag(exp lv)) - 1/2 sum lv
  double entropy = 0.0;      // Gaussian entropy 1/2 sum lv + n/2 log(2 pi e)
  double total = 0.0;
};

inline double gaussian_entropy(const Vector& log_var) {
  const double n = static_cast<double>(log_var.size());
  return 0.5 * log_var.sum() + 0.5 * n * std::log(2.0 * M_PI * M_E);
}

/// Mean over the batch of the Mahalanobis distance to the target action plus
/// the variance terms of the KL to the target Gaussian, plus
/// entropy_coef * entropy. There is no weight-magnitude penalty.
inline LossTerms supervised_loss_terms(const PolicyParams& p, const SupervisedBatch& batch,
                                       double entropy_coef, PolicyParams* grad = nullptr) {
  const Eigen::Index N = batch.size();
  require(N > 0, "supervised_loss: empty batch");
  require(batch.features.rows() == p.feature_len() && batch.targets.rows() == p.param_dim(),
          "supervised_loss: dimension mismatch");
  Matrix pre = p.W1 * batch.features;
  pre.colwise() += p.b1;
  const Matrix hid = pre.unaryExpr([](double z) { return softplus(z); });
  Matrix mean = p.W2 * hid;
  mean.colwise() += p.b2;
  const Matrix resid = mean - batch.targets;

  LossTerms terms;
  Matrix dmean(p.param_dim(), N);
  Vector mean_diag = Vector::Zero(p.param_dim());
  for (Eigen::Index i = 0; i < N; ++i) {
    const Matrix& prec = batch.precisions[static_cast<std::size_t>(i)];
    const Vector pr = prec * resid.col(i);
    terms.mahalanobis += 0.5 * resid.col(i).dot(pr);
    dmean.col(i) = pr / static_cast<double>(N);
    mean_diag += prec.diagonal();
  }
  terms.mahalanobis /= static_cast<double>(N);
  mean_diag /= static_cast<double>(N);
  const Vector var = p.log_var.array().exp();
  terms.variance = 0.5 * mean_diag.dot(var) - 0.5 * p.log_var.sum();
  terms.entropy = gaussian_entropy(p.log_var);
  terms.total = terms.mahalanobis + terms.variance + entropy_coef * terms.entropy;

  if (grad) {
    grad->W2 = dmean * hid.transpose();
    grad->b2 = dmean.rowwise().sum();
    const Matrix dpre = (p.W2.transpose() * dmean)
                            .cwiseProduct(pre.unaryExpr([](double z) { return softplus_derivative(z); }));
    grad->W1 = dpre * batch.features.transpose();
    grad->b1 = dpre.rowwise().sum();
    grad->log_var = 0.5 * mean_diag.cwiseProduct(var) - Vector::Constant(p.param_dim(), 0.5) +
                    Vector::Constant(p.param_dim(), 0.5 * entropy_coef);
  }
  return terms;
}

inline double supervised_loss(const PolicyParams& p, const SupervisedBatch& batch, double entropy_coef) {
  check_precisions(batch);
  return supervised_loss_terms(p, batch, entropy_coef).total;
}

struct TrainSettings {
  double learning_rate = 1e-3;
  int epochs = 200;
  double entropy_coef = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  PolicyParams params;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

/// Full-batch Adam for a fixed number of epochs. Returns the lowest-loss
/// parameters visited, so the loss never ends above its value at entry. A
/// non-finite loss aborts and returns the best parameters so far.
inline TrainResult train_policy(const PolicyParams& start, const SupervisedBatch& batch,
                                const TrainSettings& cfg) {
  require(batch.size() > 0, "train_policy: empty dataset");
  check_precisions(batch);
  TrainResult out;
  PolicyParams p = start;
  Vector theta = flatten(p);
  Vector m = Vector::Zero(theta.size());
  Vector v = Vector::Zero(theta.size());
  PolicyParams grad = p;

  out.params = p;
  out.initial_loss = supervised_loss_terms(p, batch, cfg.entropy_coef).total;
  out.best_loss = out.initial_loss;
  if (!std::isfinite(out.initial_loss)) {
    out.aborted = true;
    out.diagnostic = "non-finite loss at entry";
    return out;
  }
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double loss = supervised_loss_terms(p, batch, cfg.entropy_coef, &grad).total;
    if (!std::isfinite(loss)) {
      out.aborted = true;
      out.diagnostic = "non-finite loss at epoch " + std::to_string(epoch);
      return out;
    }
    if (loss < out.best_loss) {
      out.best_loss = loss;
      out.params = p;
    }
    const Vector g = flatten(grad);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.beta1, epoch);
    const double c2 = 1.0 - std::pow(cfg.beta2, epoch);
    theta.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
    theta.tail(p.param_dim()) = theta.tail(p.param_dim()).cwiseMax(kLogVarFloor).cwiseMin(kLogVarCeil);
    unflatten(theta, p);
  }
  const double last = supervised_loss_terms(p, batch, cfg.entropy_coef).total;
  if (!std::isfinite(last)) {
    out.aborted = true;
    out.diagnostic = "non-finite loss after final epoch";
  } else if (last < out.best_loss) {
    out.best_loss = last;
    out.params = p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(flat.size()) == rows * cols, "matrix record: size mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto flat = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const PolicyParams& p, const nlohmann::json& metadata = nlohmann::json::object()) {
  return {{"feature_len", p.feature_len()},
          {"param_dim", p.param_dim()},
          {"hidden", p.hidden()},
          {"W1", detail::matrix_to_json(p.W1)},
          {"b1", detail::vector_to_json(p.b1)},
          {"W2", detail::matrix_to_json(p.W2)},
          {"b2", detail::vector_to_json(p.b2)},
          {"log_var", detail::vector_to_json(p.log_var)},
          {"metadata", metadata}};
}

inline PolicyParams policy_from_json(const nlohmann::json& j) {
  PolicyParams p;
  p.W1 = detail::matrix_from_json(j.at("W1"));
  p.b1 = detail::vector_from_json(j.at("b1"));
  p.W2 = detail::matrix_from_json(j.at("W2"));
  p.b2 = detail::vector_from_json(j.at("b2"));
  p.log_var = detail::vector_from_json(j.at("log_var"));
  require(p.feature_len() == j.at("feature_len").get<int>() && p.param_dim() == j.at("param_dim").get<int>(),
          "policy record: header does not match weights");
  require(p.b1.size() == p.hidden() && p.W2.cols() == p.hidden() && p.b2.size() == p.param_dim() &&
              p.log_var.size() == p.param_dim(),
          "policy record: inconsistent shapes");
  return p;
}

}  // namespace l2o
