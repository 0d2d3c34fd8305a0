#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "symmeb/ebmr.hpp"
#include "symmeb/errors.hpp"
#include "symmeb/linalg.hpp"
#include "symmeb/rng.hpp"
#include "symmeb/spatial.hpp"

namespace symmeb::simgen {

enum class Family { ebmr, caeb, spatial };

inline Family family_from_name(const std::string& s) {
  if (s == "ebmr") return Family::ebmr;
  if (s == "caeb") return Family::caeb;
  if (s == "spatial") return Family::spatial;
  throw UnknownGenerator("unknown family: " + s);
}

inline std::string family_name(Family f) {
  switch (f) {
    case Family::ebmr: return "ebmr";
    case Family::caeb: return "caeb";
    default: return "spatial";
  }
}

struct SimSpec {
  Family family = Family::ebmr;
  std::string t0_id = "linear";
  int n = 20;
  int p = 20;
  double tau = 1.0;
  std::uint64_t seed = 0;
};

struct SimDataset {
  Eigen::MatrixXd z_star;  // n x p (n x 1 for spatial)
  Eigen::MatrixXd x;
  Eigen::MatrixXd tau;
  std::optional<ebmr::CovariateArrays> cov;       // caeb
  std::optional<spatial::SpatialData> spatial;    // spatial family
  Eigen::VectorXd beta_star;                      // spatial family
};

namespace detail {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double t0_ebmr(const std::string& id, double u, double v, double w) {
  constexpr double pi = 3.14159265358979323846;
  if (id == "linear") return u + v + w;
  if (id == "sine-log") return std::sin(pi * u * v) + std::log1p(w);
  if (id == "sine-cos") return std::sin(pi * u) * std::cos(pi * v) / (1.0 + w * w);
  if (id == "tanh") return std::tanh(u + v + w);
  if (id == "reciprocal") return 1.0 / (1.0 + std::fabs(u + v + w));
  throw UnknownGenerator("unknown ebmr generator: " + id);
}

inline double t0_caeb(const std::string& id, const Eigen::VectorXd& y, const Eigen::VectorXd& a,
                      double u, double v, double w) {
  constexpr double pi = 3.14159265358979323846;
  const double covsum = y.sum() + a.sum();
  if (id == "linear") return covsum + u * v + w;
  if (id == "nonlinear") return covsum + std::sin(pi * u) * std::cos(pi * v) + 0.5 * w * w;
  if (id == "logistic") return covsum + sigmoid(u + v) + w;
  throw UnknownGenerator("unknown caeb generator: " + id);
}

}  // namespace detail

// Latent draws u_i, v_j, u_ij then entrywise Gaussian noise, all consumed from
// a single stream in a fixed order (rows of u, rows of v, u_ij row-major,
// noise row-major).
inline SimDataset gen_ebmr(const SimSpec& spec) {
  if (spec.n < 1 || spec.p < 1 || !(spec.tau > 0.0))
    throw DataError("gen_ebmr: need positive dims and tau");
  detail::t0_ebmr(spec.t0_id, 0.0, 0.0, 0.0);  // validate the name up front
  Rng rng(spec.seed);
  Eigen::VectorXd u(spec.n), v(spec.p);
  for (int i = 0; i < spec.n; ++i) u[i] = rng.uniform();
  for (int j = 0; j < spec.p; ++j) v[j] = rng.uniform();
  SimDataset out;
  out.z_star.resize(spec.n, spec.p);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.p; ++j)
      out.z_star(i, j) = detail::t0_ebmr(spec.t0_id, u[i], v[j], rng.uniform());
  out.x.resize(spec.n, spec.p);
  const double sd = 1.0 / std::sqrt(spec.tau);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.p; ++j) out.x(i, j) = out.z_star(i, j) + sd * rng.normal();
  out.tau = Eigen::MatrixXd::Constant(spec.n, spec.p, spec.tau);
  return out;
}

// Row covariates are iid t5 in R^3, column covariates iid Beta(2,5) in R^4.
// Noise precision is fixed at 1. A `zero_covariates` hook keeps the latent
// core reachable in tests.
inline SimDataset gen_caeb(const SimSpec& spec, bool zero_covariates = false) {
  if (spec.n < 1 || spec.p < 1) throw DataError("gen_caeb: need positive dims");
  detail::t0_caeb(spec.t0_id, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4), 0, 0, 0);
  Rng rng(spec.seed);
  ebmr::CovariateArrays cov;
  cov.row_cov.resize(spec.n, 3);
  cov.col_cov.resize(spec.p, 4);
  for (int i = 0; i < spec.n; ++i)
    for (int q = 0; q < 3; ++q) cov.row_cov(i, q) = rng.student_t5();
  for (int j = 0; j < spec.p; ++j)
    for (int q = 0; q < 4; ++q) cov.col_cov(j, q) = rng.beta_2_5();
  if (zero_covariates) {
    cov.row_cov.setZero();
    cov.col_cov.setZero();
  }
  Eigen::VectorXd u(spec.n), v(spec.p);
  for (int i = 0; i < spec.n; ++i) u[i] = rng.uniform();
  for (int j = 0; j < spec.p; ++j) v[j] = rng.uniform();
  SimDataset out;
  out.z_star.resize(spec.n, spec.p);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.p; ++j)
      out.z_star(i, j) = detail::t0_caeb(spec.t0_id, cov.row_cov.row(i), cov.col_cov.row(j), u[i],
                                         v[j], rng.uniform());
  out.x.resize(spec.n, spec.p);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.p; ++j) out.x(i, j) = out.z_star(i, j) + rng.normal();
  out.tau = Eigen::MatrixXd::Ones(spec.n, spec.p);
  out.cov = std::move(cov);
  return out;
}

// The reference three-component mixture used by the spatial benchmark.
inline spatial::SpectralMixture benchmark_spectral_mixture() {
  Eigen::VectorXd w(3);
  w << 0.5, 0.3, 0.2;
  Eigen::MatrixXd mu(3, 1), sigma(3, 1);
  mu << 0.0, 0.15, -0.25;
  sigma << 1.0, 0.2, 0.35;
  return spatial::SpectralMixture(w, mu, sigma);
}

inline Eigen::VectorXd benchmark_beta_star() {
  Eigen::VectorXd b(3);
  b << 0.5, -1.2, 0.3;
  return b;
}

// Evenly spaced 1-D grid on [-10, 10]; covariates (1, xi) with xi standard
// normal; z* a single GP draw under the benchmark kernel.
inline SimDataset gen_spatial(const SimSpec& spec) {
  if (spec.n < 2) throw DataError("gen_spatial: need n >= 2");
  if (!(spec.tau > 0.0)) throw DataError("gen_spatial: tau must be positive");
  const int n = spec.n;
  const int p = 3;
  Rng rng(spec.seed);
  Eigen::MatrixXd sites = Eigen::VectorXd::LinSpaced(n, -10.0, 10.0);
  Eigen::MatrixXd a(n, p);
  a.col(0).setOnes();
  for (int i = 0; i < n; ++i)
    for (int q = 1; q < p; ++q) a(i, q) = rng.normal();

  const auto theta = benchmark_spectral_mixture();
  auto chol = linalg::cholesky(spatial::gram(theta, sites));
  const Eigen::VectorXd z = linalg::mvn_sample(Eigen::VectorXd::Zero(n), chol, rng);

  const Eigen::VectorXd beta = benchmark_beta_star();
  Eigen::VectorXd x(n);
  const double sd = 1.0 / std::sqrt(spec.tau);
  for (int i = 0; i < n; ++i) x[i] = a.row(i).dot(beta) + z[i] + sd * rng.normal();

  SimDataset out;
  out.z_star = z;
  out.x = x;
  out.tau = Eigen::MatrixXd::Constant(n, 1, spec.tau);
  out.beta_star = beta;
  out.spatial = spatial::SpatialData(sites, a, x, Eigen::VectorXd::Constant(n, spec.tau));
  return out;
}

inline SimDataset generate(const SimSpec& spec) {
  switch (spec.family) {
    case Family::ebmr: return gen_ebmr(spec);
    case Family::caeb: return gen_caeb(spec);
    default: return gen_spatial(spec);
  }
}

// Estimator MSE as a percentage of the MLE's: mean of tau * (zhat - z*)^2 * 100.
inline double r_mse(const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& z_star,
                    const Eigen::MatrixXd& tau) {
  if (z_hat.rows() != z_star.rows() || z_hat.cols() != z_star.cols() ||
      tau.rows() != z_star.rows() || tau.cols() != z_star.cols())
    throw ShapeMismatch("r_mse: shapes differ");
  if (z_star.size() == 0) throw EmptyData("r_mse: empty input");
  const Eigen::ArrayXXd diff = (z_hat - z_star).array();
  return (diff.square() * tau.array()).mean() * 100.0;
}

inline double r_mse(const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& z_star, double tau) {
  return r_mse(z_hat, z_star, Eigen::MatrixXd::Constant(z_star.rows(), z_star.cols(), tau));
}

}  // namespace symmeb::simgen
