#include "l2o/policy_net.hpp"

#include <gtest/gtest.h>

using namespace l2o;

namespace {

SupervisedBatch random_batch(int feat, int n, int count, std::uint64_t seed) {
  Rng rng(seed);
  SupervisedBatch b;
  b.features.resize(feat, count);
  b.targets.resize(n, count);
  for (int i = 0; i < count; ++i) {
    b.features.col(i) = standard_normal(feat, rng);
    b.targets.col(i) = standard_normal(n, rng);
    Matrix m(n, n);
    for (int r = 0; r < n; ++r) m.row(r) = standard_normal(n, rng).transpose();
    b.precisions.push_back(m * m.transpose() + 0.1 * Matrix::Identity(n, n));
  }
  return b;
}

double naive_loss(const PolicyParams& p, const SupervisedBatch& b, double coef) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Vector h(p.hidden());
    for (int k = 0; k < p.hidden(); ++k) h[k] = std::log(1.0 + std::exp(p.W1.row(k).dot(b.features.col(i)) + p.b1[k]));
    const Vector r = p.W2 * h + p.b2 - b.targets.col(i);
    const Matrix& P = b.precisions[static_cast<std::size_t>(i)];
    double tr = 0.0;
    for (int j = 0; j < p.param_dim(); ++j) tr += P(j, j) * std::exp(p.log_var[j]);
    s += 0.5 * r.dot(P * r) + 0.5 * tr - 0.5 * p.log_var.sum();
  }
  const double n = p.param_dim();
  return s / b.size() + coef * (0.5 * p.log_var.sum() + 0.5 * n * std::log(2 * M_PI * M_E));
}

}  // namespace

TEST(PolicyNet, SoftplusIsStable) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(100.0), 100.0, 1e-12);
  EXPECT_NEAR(softplus(-100.0), std::exp(-100.0), 1e-50);
  EXPECT_NEAR(softplus_derivative(0.0), 0.5, 1e-15);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
  EXPECT_NEAR(softplus_derivative(-800.0), 0.0, 1e-300);
}

TEST(PolicyNet, ShapesAndInit) {
  const PolicyParams p = init_policy(125, 4, 1);
  EXPECT_EQ(p.W1.rows(), 50);
  EXPECT_EQ(p.W1.cols(), 125);
  EXPECT_EQ(p.W2.rows(), 4);
  EXPECT_EQ(p.size(), 50 * 125 + 50 + 4 * 50 + 4 + 4);
  EXPECT_LE(p.W1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(125.0));
  EXPECT_EQ(p.log_var, Vector::Constant(4, std::log(0.01)));
  EXPECT_EQ(init_policy(125, 4, 1).W1, p.W1);
}

TEST(PolicyNet, FlattenRoundTrip) {
  const PolicyParams p = init_policy(7, 3, 2, 5);
  PolicyParams q = PolicyParams::zeros(7, 3, 5);
  unflatten(flatten(p), q);
  EXPECT_EQ(flatten(q), flatten(p));
  EXPECT_EQ(q.W1, p.W1);
}

TEST(PolicyNet, ZeroWeightsGiveBiasOutput) {
  PolicyParams p = PolicyParams::zeros(6, 2, 4);
  p.b2 << 0.5, -1.0;
  EXPECT_EQ(forward_mean(p, Vector::Random(6)), p.b2);
}

TEST(PolicyNet, BatchForwardMatchesSingle) {
  const PolicyParams p = init_policy(9, 3, 3, 8);
  const Matrix feats = Matrix::Random(9, 5);
  const Matrix out = forward_mean_batch(p, feats);
  for (int i = 0; i < 5; ++i) EXPECT_LE((out.col(i) - forward_mean(p, feats.col(i))).norm(), 1e-14);
}

TEST(PolicyNet, LossMatchesNaiveReference) {
  PolicyParams p = init_policy(6, 3, 4, 7);
  p.log_var << -1.0, 0.2, -3.0;
  const SupervisedBatch b = random_batch(6, 3, 11, 4);
  EXPECT_NEAR(supervised_loss(p, b, 0.3), naive_loss(p, b, 0.3), 1e-12);
}

TEST(PolicyNet, LossGradientMatchesFiniteDifferences) {
  PolicyParams p = init_policy(5, 2, 5, 6);
  p.log_var << -0.5, 0.3;
  const SupervisedBatch b = random_batch(5, 2, 9, 5);
  PolicyParams g = p;
  supervised_loss_terms(p, b, 0.7, &g);
  const Vector theta = flatten(p), ga = flatten(g);
  Vector gf(theta.size());
  PolicyParams q = p;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector t = theta;
    t[i] += 1e-6;
    unflatten(t, q);
    const double fp = supervised_loss_terms(q, b, 0.7).total;
    t[i] -= 2e-6;
    unflatten(t, q);
    const double fm = supervised_loss_terms(q, b, 0.7).total;
    gf[i] = (fp - fm) / 2e-6;
  }
  EXPECT_LE((ga - gf).norm() / gf.norm(), 1e-6);
}

TEST(PolicyNet, MeanVjpMatchesFiniteDifferences) {
  const PolicyParams p = init_policy(4, 3, 7, 6);
  const Vector feat = Vector::Random(4), up = Vector::Random(3);
  const PolicyParams g = mean_vjp(p, feat, up);
  const Vector theta = flatten(p), ga = flatten(g);
  PolicyParams q = p;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector t = theta;
    t[i] += 1e-6;
    unflatten(t, q);
    const double fp = up.dot(forward_mean(q, feat));
    t[i] -= 2e-6;
    unflatten(t, q);
    const double fm = up.dot(forward_mean(q, feat));
    EXPECT_NEAR(ga[i], (fp - fm) / 2e-6, 1e-7);
  }
}

TEST(PolicyNet, MahalanobisZeroIffMeansMatchTargets) {
  PolicyParams p = PolicyParams::zeros(3, 2, 4);
  p.b2 << 0.25, -0.5;
  SupervisedBatch b;
  b.features = Matrix::Random(3, 4);
  b.targets = p.b2.replicate(1, 4);
  b.precisions.assign(4, Matrix::Identity(2, 2));
  EXPECT_EQ(supervised_loss_terms(p, b, 0.0).mahalanobis, 0.0);
  b.targets(0, 1) += 0.1;
  EXPECT_GT(supervised_loss_terms(p, b, 0.0).mahalanobis, 0.0);

  // residual in the null space of a singular precision costs nothing
  b.targets = p.b2.replicate(1, 4);
  b.targets.row(1).array() += 1.0;
  b.precisions.assign(4, Vector(Eigen::Vector2d(1.0, 0.0)).asDiagonal());
  EXPECT_EQ(supervised_loss_terms(p, b, 0.0).mahalanobis, 0.0);
}

TEST(PolicyNet, OverfitsSingleSample) {
  PolicyParams p = init_policy(8, 3, 8, 10);
  SupervisedBatch b;
  b.features = Matrix::Random(8, 1);
  b.targets = Matrix::Random(3, 1);
  b.precisions = {Matrix::Identity(3, 3) * 2.0};
  TrainSettings ts;
  ts.learning_rate = 1e-2;
  ts.epochs = 3000;
  const TrainResult r = train_policy(p, b, ts);
  EXPECT_LT(supervised_loss_terms(r.params, b, 0.0).mahalanobis, 1e-6);
}

TEST(PolicyNet, TrainingNeverIncreasesLoss) {
  const SupervisedBatch b = random_batch(6, 2, 30, 9);
  const PolicyParams p = init_policy(6, 2, 9, 12);
  TrainSettings ts;
  ts.learning_rate = 0.5;  // deliberately unstable
  ts.epochs = 50;
  const TrainResult r = train_policy(p, b, ts);
  EXPECT_LE(supervised_loss(r.params, b, 0.0), supervised_loss(p, b, 0.0));
  EXPECT_EQ(r.best_loss, supervised_loss(r.params, b, 0.0));
}

TEST(PolicyNet, VarianceOptimumIsInverseMeanPrecisionDiagonal) {
  // with no entropy term the variance terms are minimized at exp(lv) = 1 / mean diag(P)
  SupervisedBatch b;
  b.features = Matrix::Zero(1, 2);
  b.targets = Matrix::Zero(1, 2);
  b.precisions = {Matrix::Constant(1, 1, 4.0), Matrix::Constant(1, 1, 16.0)};
  PolicyParams p = PolicyParams::zeros(1, 1, 1);
  TrainSettings ts;
  ts.learning_rate = 0.05;
  ts.epochs = 2000;
  const TrainResult r = train_policy(p, b, ts);
  EXPECT_NEAR(std::exp(r.params.log_var[0]), 0.1, 1e-4);
}

TEST(PolicyNet, EntropyPenaltyLowersVariance) {
  SupervisedBatch b;
  b.features = Matrix::Zero(1, 1);
  b.targets = Matrix::Zero(1, 1);
  b.precisions = {Matrix::Constant(1, 1, 10.0)};
  TrainSettings ts;
  ts.learning_rate = 0.05;
  ts.epochs = 2000;
  double prev = kInf;
  for (double coef : {0.0, 0.25, 0.5, 0.9}) {
    ts.entropy_coef = coef;
    const TrainResult r = train_policy(PolicyParams::zeros(1, 1, 1), b, ts);
    // optimum: exp(lv) = (1 - coef) / P
    EXPECT_NEAR(std::exp(r.params.log_var[0]), (1.0 - coef) / 10.0, 1e-3);
    EXPECT_LT(r.params.log_var[0], prev);
    prev = r.params.log_var[0];
  }
}

TEST(PolicyNet, RejectsInvalidPrecisions) {
  SupervisedBatch b = random_batch(3, 2, 2, 10);
  b.precisions[1](0, 1) += 1.0;
  EXPECT_THROW(check_precisions(b), ContractViolation);
  b = random_batch(3, 2, 2, 10);
  b.precisions[0] = -Matrix::Identity(2, 2);
  EXPECT_THROW(check_precisions(b), ContractViolation);
}

TEST(PolicyNet, RejectsEmptyDataset) {
  SupervisedBatch b;
  b.features.resize(3, 0);
  b.targets.resize(2, 0);
  EXPECT_THROW(train_policy(init_policy(3, 2, 1, 4), b, {}), ContractViolation);
}

TEST(PolicyNet, SamplingUsesPolicyVariance) {
  PolicyParams p = PolicyParams::zeros(2, 1, 3);
  p.log_var[0] = std::log(4.0);
  Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double a = sample_action(p, Vector::Zero(2), rng)[0];
    s += a;
    s2 += a * a;
  }
  EXPECT_NEAR(s / n, 0.0, 0.05);
  EXPECT_NEAR(s2 / n, 4.0, 0.15);
}

TEST(PolicyNet, JsonRoundTripIsExact) {
  const PolicyParams p = init_policy(10, 3, 12, 6);
  const auto j = nlohmann::json::parse(to_json(p, {{"note", "x"}}).dump());
  const PolicyParams q = policy_from_json(j);
  EXPECT_EQ(flatten(q), flatten(p));
  EXPECT_EQ(j.at("metadata").at("note"), "x");
}
