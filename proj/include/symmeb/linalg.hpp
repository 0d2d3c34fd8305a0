#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "symmeb/errors.hpp"
#include "symmeb/rng.hpp"

namespace symmeb::linalg {

// Dense symmetric matrix. Entries are mirrored on construction so the stored
// matrix is bitwise symmetric.
struct SymMatrix {
  Eigen::MatrixXd m;

  explicit SymMatrix(Eigen::MatrixXd mat) : m(std::move(mat)) {
    if (m.rows() != m.cols() || m.rows() < 1)
      throw DimensionMismatch("SymMatrix: matrix must be square and nonempty");
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        if (m(i, j) != m(j, i) &&
            std::fabs(m(i, j) - m(j, i)) > 1e-12 * (1.0 + std::fabs(m(i, j))))
          throw DimensionMismatch("SymMatrix: input is not symmetric");
        m(j, i) = m(i, j);
      }
  }

  // Mirrors the lower triangle, no tolerance check.
  static SymMatrix from_lower(Eigen::MatrixXd mat) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j) mat(j, i) = mat(i, j);
    return SymMatrix(std::move(mat));
  }

  Eigen::Index dim() const { return m.rows(); }
};

struct CholFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;

  Eigen::Index dim() const { return lower.rows(); }
};

inline const std::vector<double>& default_jitter_schedule() {
  static const std::vector<double> s = {0.0, 1e-10, 1e-8, 1e-6};
  return s;
}

// Attempts M + jitter*I for each jitter in the schedule, returning the first
// factor whose pivots are all strictly positive.
inline CholFactor cholesky(const SymMatrix& m,
                           const std::vector<double>& jitter_schedule = default_jitter_schedule()) {
  if (jitter_schedule.empty())
    throw std::invalid_argument("cholesky: jitter schedule must be nonempty");
  if (jitter_schedule.front() != 0.0)
    throw std::invalid_argument("cholesky: jitter schedule must start at 0");
  for (std::size_t i = 0; i < jitter_schedule.size(); ++i) {
    if (jitter_schedule[i] < 0.0 || (i > 0 && jitter_schedule[i] < jitter_schedule[i - 1]))
      throw std::invalid_argument("cholesky: jitter schedule must be nonnegative and nondecreasing");
  }
  const Eigen::Index n = m.dim();
  for (double jitter : jitter_schedule) {
    Eigen::MatrixXd a = m.m;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd lower = llt.matrixL();
    bool ok = true;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) ok = false;
    if (ok) return CholFactor{std::move(lower), jitter};
  }
  throw NotPositiveDefinite("cholesky: matrix not positive definite under the jitter schedule");
}

inline double logdet(const CholFactor& f) {
  return 2.0 * f.lower.diagonal().array().log().sum();
}

// Solves (M + jitter*I) x = b via the two triangular systems; b may be a
// vector or a matrix of right-hand sides.
inline Eigen::MatrixXd solve(const CholFactor& f, const Eigen::MatrixXd& b) {
  if (b.rows() != f.dim())
    throw DimensionMismatch("solve: right-hand side has wrong number of rows");
  Eigen::MatrixXd y = f.lower.triangularView<Eigen::Lower>().solve(b);
  return f.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const CholFactor& f, Rng& rng) {
  if (mean.size() != f.dim())
    throw DimensionMismatch("mvn_sample: mean length does not match factor dimension");
  Eigen::VectorXd eps(mean.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  return mean + f.lower * eps;
}

}  // namespace symmeb::linalg
