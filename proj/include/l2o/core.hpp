#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace l2o {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flattened optimizee parameters.
using ParamVector = Vector;

using Rng = std::mt19937_64;

/// Raised when a caller breaks a documented precondition (dimension
/// mismatch, non-finite input, empty set where one is required).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Seed derivation. Every random stream in the pipeline is seeded by mixing a
// master seed with a stage tag and up to three indices through splitmix64, so
// results do not depend on scheduling order.

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t i = 0, std::uint64_t j = 0,
                                 std::uint64_t k = 0) {
  std::uint64_t h = splitmix64(master ^ fnv1a(tag));
  h = splitmix64(h ^ i);
  h = splitmix64(h ^ (j + 0x51ed27ULL));
  h = splitmix64(h ^ (k + 0x3c6ef372ULL));
  return h;
}

inline Vector standard_normal(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

/// Symmetrize and raise every eigenvalue to at least `floor`.
inline Matrix floor_eigenvalues(const Matrix& m, double floor) {
  Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace l2o
