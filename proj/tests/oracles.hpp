#pragma once

// Brute-force reference computations for the test suites. Everything here is
// deliberately naive and independent of the library's linear-algebra paths:
// cofactor determinants, adjugate/Gauss-Jordan inverses, and textbook
// Gaussian conditioning with explicit inverses.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "symmeb/rng.hpp"

namespace oracle {

inline Eigen::MatrixXd minor_matrix(const Eigen::MatrixXd& m, Eigen::Index row,
                                    Eigen::Index col) {
  Eigen::MatrixXd out(m.rows() - 1, m.cols() - 1);
  Eigen::Index rr = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r == row) continue;
    Eigen::Index cc = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c == col) continue;
      out(rr, cc++) = m(r, c);
    }
    ++rr;
  }
  return out;
}

inline double det_cofactor(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  if (n == 1) return m(0, 0);
  if (n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  double det = 0.0, sign = 1.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    det += sign * m(0, c) * det_cofactor(minor_matrix(m, 0, c));
    sign = -sign;
  }
  return det;
}

inline Eigen::MatrixXd inverse_adjugate(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  const double det = det_cofactor(m);
  if (det == 0.0) throw std::runtime_error("inverse_adjugate: singular");
  Eigen::MatrixXd adj(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      const double cof = det_cofactor(minor_matrix(m, r, c));
      adj(c, r) = (((r + c) % 2) ? -1.0 : 1.0) * cof;
    }
  return adj / det;
}

inline Eigen::MatrixXd inverse_gauss_jordan(Eigen::MatrixXd m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::fabs(m(r, col)) > std::fabs(m(piv, col))) piv = r;
    if (m(piv, col) == 0.0) throw std::runtime_error("inverse_gauss_jordan: singular");
    m.row(col).swap(m.row(piv));
    inv.row(col).swap(inv.row(piv));
    const double d = m(col, col);
    m.row(col) /= d;
    inv.row(col) /= d;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m(r, col);
      m.row(r) -= f * m.row(col);
      inv.row(r) -= f * inv.row(col);
    }
  }
  return inv;
}

inline Eigen::MatrixXd random_spd(Eigen::Index n, symmeb::Rng& rng, double diag_boost = 0.5) {
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::MatrixXd m = a * a.transpose() / static_cast<double>(n);
  m.diagonal().array() += diag_boost;
  return 0.5 * (m + m.transpose());
}

// Conditioning of a joint Gaussian (u, w) with explicit inverses:
// u | w = y  ~  N(mu_u + C uw Vw^{-1} (y - mu_w), Vu - C uw Vw^{-1} C wu).
struct Conditioned {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline Conditioned condition_gaussian(const Eigen::VectorXd& mu_u, const Eigen::VectorXd& mu_w,
                                      const Eigen::MatrixXd& var_u, const Eigen::MatrixXd& cov_uw,
                                      const Eigen::MatrixXd& var_w, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd w_inv = inverse_gauss_jordan(var_w);
  Conditioned out;
  out.mean = mu_u + cov_uw * w_inv * (y - mu_w);
  out.cov = var_u - cov_uw * w_inv * cov_uw.transpose();
  return out;
}

// Relative error with an absolute floor, the usual gradient-check metric.
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

}  // namespace oracle
