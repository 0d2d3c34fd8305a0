#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "symmeb/errors.hpp"
#include "symmeb/linalg.hpp"
#include "symmeb/rng.hpp"

namespace symmeb::spatial {

// Gaussian-mixture spectral density with diagonal per-component scales. The
// induced stationary kernel is a weighted product of cosine and squared-
// exponential factors in each coordinate.
struct SpectralMixture {
  Eigen::VectorXd weights;  // simplex, length K
  Eigen::MatrixXd means;    // K x d
  Eigen::MatrixXd scales;   // K x d, positive

  SpectralMixture(Eigen::VectorXd w, Eigen::MatrixXd mu, Eigen::MatrixXd sigma)
      : weights(std::move(w)), means(std::move(mu)), scales(std::move(sigma)) {
    if (weights.size() < 1 || means.rows() != weights.size() || scales.rows() != weights.size() ||
        means.cols() != scales.cols() || means.cols() < 1)
      throw DimensionMismatch("SpectralMixture: inconsistent shapes");
    double s = 0.0;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      if (!(weights[k] > 0.0)) throw DataError("SpectralMixture: weights must be positive");
      s += weights[k];
    }
    if (std::fabs(s - 1.0) > 1e-10) throw DataError("SpectralMixture: weights must sum to 1");
    for (Eigen::Index k = 0; k < scales.rows(); ++k)
      for (Eigen::Index j = 0; j < scales.cols(); ++j)
        if (!(scales(k, j) > 0.0)) throw DataError("SpectralMixture: scales must be positive");
  }

  Eigen::Index K() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct SpatialData {
  Eigen::MatrixXd sites;       // n x d
  Eigen::MatrixXd covariates;  // n x p
  Eigen::VectorXd x;
  Eigen::VectorXd tau;

  SpatialData(Eigen::MatrixXd s, Eigen::MatrixXd a, Eigen::VectorXd x_, Eigen::VectorXd t)
      : sites(std::move(s)), covariates(std::move(a)), x(std::move(x_)), tau(std::move(t)) {
    const Eigen::Index n = sites.rows();
    if (n < 1 || sites.cols() < 1 || covariates.cols() < 1)
      throw DimensionMismatch("SpatialData: need n >= 1, d >= 1, p >= 1");
    if (covariates.rows() != n || x.size() != n || tau.size() != n)
      throw DimensionMismatch("SpatialData: inconsistent row counts");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isfinite(x[i]) || !(tau[i] > 0.0))
        throw DataError("SpatialData: x must be finite and tau positive");
  }

  Eigen::Index n() const { return sites.rows(); }
  Eigen::Index d() const { return sites.cols(); }
  Eigen::Index p() const { return covariates.cols(); }
};

struct GaussianPosterior {
  Eigen::VectorXd mean;
  linalg::CholFactor cov_chol;

  Eigen::VectorXd sd() const {
    return cov_chol.lower.rowwise().norm();
  }
};

inline double kernel_eval(const SpectralMixture& theta, const Eigen::VectorXd& delta) {
  if (delta.size() != theta.dim()) throw DimensionMismatch("kernel_eval: delta has wrong dim");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
  double val = 0.0;
  for (Eigen::Index k = 0; k < theta.K(); ++k) {
    double term = theta.weights[k];
    for (Eigen::Index j = 0; j < theta.dim(); ++j) {
      const double dj = delta[j];
      term *= std::cos(two_pi * theta.means(k, j) * dj) *
              std::exp(-two_pi_sq * theta.scales(k, j) * theta.scales(k, j) * dj * dj);
    }
    val += term;
  }
  return val;
}

inline linalg::SymMatrix gram(const SpectralMixture& theta, const Eigen::MatrixXd& sites) {
  if (sites.rows() < 1) throw EmptyData("gram: no sites");
  if (sites.cols() != theta.dim()) throw DimensionMismatch("gram: site dim mismatch");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
  const Eigen::Index n = sites.rows(), d = sites.cols(), K = theta.K();
  Eigen::MatrixXd g(n, n);
  const double diag = theta.weights.sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = diag;
    for (Eigen::Index j = 0; j < i; ++j) {
      double val = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) {
        double term = theta.weights[k];
        for (Eigen::Index q = 0; q < d; ++q) {
          const double dq = sites(i, q) - sites(j, q);
          term *= std::cos(two_pi * theta.means(k, q) * dq) *
                  std::exp(-two_pi_sq * theta.scales(k, q) * theta.scales(k, q) * dq * dq);
        }
        val += term;
      }
      g(i, j) = val;
    }
  }
  return linalg::SymMatrix::from_lower(std::move(g));
}

// Gaussian density of the mixture at frequency s (the spectral density).
inline double spectral_density(const SpectralMixture& theta, const Eigen::VectorXd& s) {
  if (s.size() != theta.dim()) throw DimensionMismatch("spectral_density: wrong dim");
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  double val = 0.0;
  for (Eigen::Index k = 0; k < theta.K(); ++k) {
    double term = theta.weights[k];
    for (Eigen::Index j = 0; j < theta.dim(); ++j) {
      const double z = (s[j] - theta.means(k, j)) / theta.scales(k, j);
      term *= inv_sqrt_2pi / theta.scales(k, j) * std::exp(-0.5 * z * z);
    }
    val += term;
  }
  return val;
}

namespace detail {

// Shared pieces of the profiled-likelihood computations: S = Sigma + D_tau^{-1}
// factored once, with the weighted least-squares block reused downstream.
struct Workspace {
  Eigen::MatrixXd sigma;
  linalg::CholFactor chol_s;
  Eigen::MatrixXd wa;        // S^{-1} A
  Eigen::LLT<Eigen::MatrixXd> chol_m;  // A^T S^{-1} A
  Eigen::VectorXd wx;        // S^{-1} x
  Eigen::VectorXd beta_hat;
};

inline Workspace make_workspace(const SpectralMixture& theta, const SpatialData& data) {
  Workspace ws;
  ws.sigma = gram(theta, data.sites).m;
  Eigen::MatrixXd s = ws.sigma;
  s.diagonal() += data.tau.cwiseInverse();
  ws.chol_s = linalg::cholesky(linalg::SymMatrix::from_lower(std::move(s)));
  ws.wa = linalg::solve(ws.chol_s, data.covariates);
  Eigen::MatrixXd m = data.covariates.transpose() * ws.wa;
  ws.chol_m.compute(0.5 * (m + m.transpose()));
  if (ws.chol_m.info() != Eigen::Success)
    throw RankDeficientDesign("spatial: A^T W A is not positive definite");
  ws.wx = linalg::solve(ws.chol_s, Eigen::MatrixXd(data.x));
  ws.beta_hat = ws.chol_m.solve(data.covariates.transpose() * ws.wx);
  return ws;
}

inline double objective_from_workspace(const SpatialData& data, const Workspace& ws) {
  const double logdet_s = linalg::logdet(ws.chol_s);
  double logdet_m = 0.0;
  const Eigen::MatrixXd lm = ws.chol_m.matrixL();
  for (Eigen::Index i = 0; i < lm.rows(); ++i) logdet_m += 2.0 * std::log(lm(i, i));
  const double quad = data.x.dot(ws.wx) - (data.covariates.transpose() * ws.wx).dot(ws.beta_hat);
  return logdet_s + logdet_m + quad;
}

// Derivative matrices of Sigma in the natural parameters (weights, means,
// scales), flattened as [w_k, mu_{k,j}, sigma_{k,j}] blocks of size 1, d, d
// per component.
inline std::vector<Eigen::MatrixXd> sigma_derivs(const SpectralMixture& theta,
                                                 const Eigen::MatrixXd& sites) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
  const Eigen::Index n = sites.rows(), d = sites.cols(), K = theta.K();
  std::vector<Eigen::MatrixXd> out(K * (1 + 2 * d), Eigen::MatrixXd::Zero(n, n));
  std::vector<double> c(d), e(d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      for (Eigen::Index k = 0; k < K; ++k) {
        double prod = 1.0;
        for (Eigen::Index q = 0; q < d; ++q) {
          const double dq = sites(i, q) - sites(j, q);
          c[q] = std::cos(two_pi * theta.means(k, q) * dq);
          e[q] = std::exp(-two_pi_sq * theta.scales(k, q) * theta.scales(k, q) * dq * dq);
          prod *= c[q] * e[q];
        }
        auto set = [&](Eigen::Index which, double v) {
          out[which](i, j) = v;
          out[which](j, i) = v;
        };
        const Eigen::Index base = k * (1 + 2 * d);
        set(base, prod);  // d/dw_k
        for (Eigen::Index q = 0; q < d; ++q) {
          const double dq = sites(i, q) - sites(j, q);
          double rest = 1.0;
          for (Eigen::Index r = 0; r < d; ++r)
            if (r != q) rest *= c[r] * e[r];
          const double dmu = -two_pi * dq * std::sin(two_pi * theta.means(k, q) * dq) * e[q];
          set(base + 1 + q, theta.weights[k] * rest * dmu);
          const double dsig =
              c[q] * e[q] * (-2.0 * two_pi_sq * theta.scales(k, q) * dq * dq);
          set(base + 1 + d + q, theta.weights[k] * rest * dsig);
        }
      }
    }
  return out;
}

}  // namespace detail

// Profiled marginal objective: log det S + log|A^T W A| + x^T W x - x^T W A beta_hat,
// with W = S^{-1} applied through Cholesky solves.
inline double mmle_objective(const SpectralMixture& theta, const SpatialData& data) {
  auto ws = detail::make_workspace(theta, data);
  return detail::objective_from_workspace(data, ws);
}

// Unconstrained packing: [log-weights (K), means (K*d row-major), log-scales
// (K*d row-major)]. softmax recovers the simplex, exp the scales.
inline Eigen::VectorXd pack(const SpectralMixture& theta) {
  const Eigen::Index K = theta.K(), d = theta.dim();
  Eigen::VectorXd v(K * (1 + 2 * d));
  for (Eigen::Index k = 0; k < K; ++k) v[k] = std::log(theta.weights[k]);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < d; ++j) v[K + k * d + j] = theta.means(k, j);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < d; ++j) v[K + K * d + k * d + j] = std::log(theta.scales(k, j));
  return v;
}

inline SpectralMixture unpack(Eigen::Index K, Eigen::Index d, const Eigen::VectorXd& v) {
  if (v.size() != K * (1 + 2 * d)) throw DimensionMismatch("unpack: wrong length");
  Eigen::VectorXd logits = v.head(K);
  const double m = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - m).exp();
  w /= w.sum();
  Eigen::MatrixXd mu(K, d), sigma(K, d);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      mu(k, j) = v[K + k * d + j];
      sigma(k, j) = std::exp(v[K + K * d + k * d + j]);
    }
  return SpectralMixture(std::move(w), std::move(mu), std::move(sigma));
}

namespace detail {

// Objective and its REML-form gradient from one shared workspace: with
// P = W - WA (A^T W A)^{-1} A^T W, each natural coordinate contributes
// tr(P dS) - x^T P dS P x, chained through softmax / exp.
inline std::pair<double, Eigen::VectorXd> objective_and_gradient(const SpectralMixture& theta,
                                                                 const SpatialData& data) {
  auto ws = make_workspace(theta, data);
  const double obj = objective_from_workspace(data, ws);
  const Eigen::Index n = data.n(), K = theta.K(), d = theta.dim();
  const Eigen::MatrixXd w_full = linalg::solve(ws.chol_s, Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd p_mat = w_full - ws.wa * ws.chol_m.solve(ws.wa.transpose());
  const Eigen::VectorXd px = p_mat * data.x;

  const auto derivs = sigma_derivs(theta, data.sites);
  Eigen::VectorXd g_nat(derivs.size());
  for (std::size_t q = 0; q < derivs.size(); ++q) {
    const Eigen::MatrixXd& ds = derivs[q];
    g_nat[q] = p_mat.cwiseProduct(ds).sum() - px.dot(ds * px);
  }

  Eigen::VectorXd g(K * (1 + 2 * d));
  // softmax chain rule for the weight block
  double dot = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) dot += g_nat[k * (1 + 2 * d)] * theta.weights[k];
  for (Eigen::Index k = 0; k < K; ++k)
    g[k] = theta.weights[k] * (g_nat[k * (1 + 2 * d)] - dot);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      g[K + k * d + j] = g_nat[k * (1 + 2 * d) + 1 + j];
      g[K + K * d + k * d + j] = g_nat[k * (1 + 2 * d) + 1 + d + j] * theta.scales(k, j);
    }
  return {obj, std::move(g)};
}

}  // namespace detail

inline Eigen::VectorXd mmle_gradient(const SpectralMixture& theta, const SpatialData& data) {
  return detail::objective_and_gradient(theta, data).second;
}

struct SpectralFitConfig {
  int steps = 200;
  double lr = 0.1;
  std::uint64_t seed = 0;
  int restarts = 3;
};

struct SpectralFit {
  SpectralMixture mixture;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // objective per step for the winning restart
};

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double median_nn_spacing(const Eigen::MatrixXd& sites) {
  const Eigen::Index n = sites.rows();
  if (n < 2) return 1.0;
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      nn[i] = std::min(nn[i], (sites.row(i) - sites.row(j)).norm());
    }
  const double med = median_of(nn);
  return med > 0.0 ? med : 1.0;
}

}  // namespace detail

// Adam descent on the unconstrained parameters, full-batch gradient, best of
// `restarts` seeded initializations. Frequency means initialize uniformly up
// to the Nyquist bound implied by the median site spacing.
inline SpectralFit fit_spectral(const SpatialData& data, int K, const SpectralFitConfig& config) {
  if (K < 1) throw std::invalid_argument("fit_spectral: K must be >= 1");
  const Eigen::Index d = data.d();
  const double f_max = 0.5 / detail::median_nn_spacing(data.sites);
  Rng root(config.seed);

  std::optional<SpectralFit> best;
  for (int r = 0; r < std::max(1, config.restarts); ++r) {
    Rng rng = root.split(static_cast<std::uint64_t>(r));
    Eigen::VectorXd v(K * (1 + 2 * d));
    v.head(K).setZero();
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index j = 0; j < d; ++j) {
        v[K + k * d + j] = rng.uniform(0.0, f_max);
        v[K + K * d + k * d + j] = std::log(0.1 * f_max);
      }

    Eigen::VectorXd m = Eigen::VectorXd::Zero(v.size()), s = Eigen::VectorXd::Zero(v.size());
    std::vector<double> trace;
    Eigen::VectorXd v_best = v;
    double obj_best = std::numeric_limits<double>::infinity();
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int step = 0; step < config.steps; ++step) {
      double obj;
      Eigen::VectorXd grad;
      try {
        std::tie(obj, grad) = detail::objective_and_gradient(unpack(K, d, v), data);
      } catch (const NumericalError&) {
        break;  // abandon a restart that walked out of the feasible region
      }
      if (!std::isfinite(obj) || !grad.allFinite()) break;
      trace.push_back(obj);
      if (obj < obj_best) {
        obj_best = obj;
        v_best = v;
      }
      m = b1 * m + (1.0 - b1) * grad;
      s = b2 * s + (1.0 - b2) * grad.cwiseProduct(grad).eval();
      const double bc1 = 1.0 - std::pow(b1, step + 1), bc2 = 1.0 - std::pow(b2, step + 1);
      v.array() -= config.lr * (m.array() / bc1) / ((s.array() / bc2).sqrt() + eps);
    }
    // objective at the best parameters seen
    if (std::isfinite(obj_best) && (!best || obj_best < best->objective))
      best = SpectralFit{unpack(K, d, v_best), obj_best, std::move(trace)};
  }
  if (!best) throw NumericalError("fit_spectral: no restart produced a finite objective");
  return *best;
}

inline GaussianPosterior posterior_beta(const SpectralMixture& theta, const SpatialData& data) {
  auto ws = detail::make_workspace(theta, data);
  const Eigen::Index p = data.p();
  const Eigen::MatrixXd cov = ws.chol_m.solve(Eigen::MatrixXd::Identity(p, p));
  auto chol = linalg::cholesky(linalg::SymMatrix::from_lower(0.5 * (cov + cov.transpose())));
  return GaussianPosterior{ws.beta_hat, std::move(chol)};
}

// z | beta, x  ~  N(Sigma W (x - A beta), Sigma - Sigma W Sigma); algebraically
// identical to the precision form (Sigma^{-1} + D_tau)^{-1} without factoring
// Sigma itself.
inline GaussianPosterior posterior_z(const SpectralMixture& theta, const SpatialData& data,
                                     const Eigen::VectorXd& beta) {
  if (beta.size() != data.p()) throw DimensionMismatch("posterior_z: beta has wrong length");
  auto ws = detail::make_workspace(theta, data);
  const Eigen::VectorXd resid = data.x - data.covariates * beta;
  const Eigen::VectorXd mean = ws.sigma * linalg::solve(ws.chol_s, Eigen::MatrixXd(resid));
  const Eigen::MatrixXd ws_sigma = linalg::solve(ws.chol_s, ws.sigma);
  Eigen::MatrixXd cov = ws.sigma - ws.sigma * ws_sigma;
  auto chol = linalg::cholesky(linalg::SymMatrix::from_lower(0.5 * (cov + cov.transpose())));
  return GaussianPosterior{mean, std::move(chol)};
}

struct JointSamples {
  Eigen::MatrixXd beta;  // n_samples x p
  Eigen::MatrixXd z;     // n_samples x n
  Eigen::VectorXd beta_mean;
  Eigen::VectorXd z_mean;
};

// beta draw from its marginal, then z from the conditional given that beta.
// The conditional mean is linear in beta, so the expensive factors are shared.
inline JointSamples sample_joint(const SpectralMixture& theta, const SpatialData& data,
                                 int n_samples, Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("sample_joint: need n_samples >= 1");
  auto post_beta = posterior_beta(theta, data);
  auto post_z0 = posterior_z(theta, data, Eigen::VectorXd::Zero(data.p()));
  auto ws = detail::make_workspace(theta, data);
  // mean(beta) = mean0 - Sigma W A beta
  const Eigen::MatrixXd shift = ws.sigma * ws.wa;

  JointSamples out;
  out.beta.resize(n_samples, data.p());
  out.z.resize(n_samples, data.n());
  for (int s = 0; s < n_samples; ++s) {
    const Eigen::VectorXd beta_s = linalg::mvn_sample(post_beta.mean, post_beta.cov_chol, rng);
    const Eigen::VectorXd mean_z = post_z0.mean - shift * beta_s;
    const Eigen::VectorXd z_s = linalg::mvn_sample(mean_z, post_z0.cov_chol, rng);
    out.beta.row(s) = beta_s.transpose();
    out.z.row(s) = z_s.transpose();
  }
  out.beta_mean = out.beta.colwise().mean();
  out.z_mean = out.z.colwise().mean();
  return out;
}

// Maps each observed site to a row of `all_sites` by exact coordinate match.
inline std::vector<Eigen::Index> match_observed_sites(const SpatialData& data,
                                                      const Eigen::MatrixXd& all_sites) {
  if (all_sites.cols() != data.d()) throw DimensionMismatch("match_observed_sites: dim mismatch");
  std::vector<bool> claimed(all_sites.rows(), false);
  std::vector<Eigen::Index> idx(data.n(), -1);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index r = 0; r < all_sites.rows(); ++r) {
      if (claimed[r]) continue;
      if ((all_sites.row(r).array() == data.sites.row(i).array()).all()) {
        idx[i] = r;
        claimed[r] = true;
        break;
      }
    }
    if (idx[i] < 0)
      throw DataError("krige: prediction sites must include every observed site");
  }
  return idx;
}

// Precision-form prediction over a site superset: Q = Sigma'^{-1} plus tau on
// the observed diagonal, mean Q^{-1} L with L = D_tau (x - A beta) on observed
// coordinates.
inline GaussianPosterior krige(const SpectralMixture& theta, const SpatialData& data,
                               const Eigen::VectorXd& beta, const Eigen::MatrixXd& all_sites) {
  if (beta.size() != data.p()) throw DimensionMismatch("krige: beta has wrong length");
  const auto obs_idx = match_observed_sites(data, all_sites);
  const Eigen::Index m = all_sites.rows();
  auto chol_sigma = linalg::cholesky(gram(theta, all_sites));
  Eigen::MatrixXd q = linalg::solve(chol_sigma, Eigen::MatrixXd::Identity(m, m));
  Eigen::VectorXd l = Eigen::VectorXd::Zero(m);
  const Eigen::VectorXd resid = data.x - data.covariates * beta;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    q(obs_idx[i], obs_idx[i]) += data.tau[i];
    l[obs_idx[i]] = data.tau[i] * resid[i];
  }
  auto chol_q = linalg::cholesky(linalg::SymMatrix::from_lower(0.5 * (q + q.transpose())));
  const Eigen::VectorXd mean = linalg::solve(chol_q, Eigen::MatrixXd(l));
  Eigen::MatrixXd cov = linalg::solve(chol_q, Eigen::MatrixXd::Identity(m, m));
  auto chol_cov = linalg::cholesky(linalg::SymMatrix::from_lower(0.5 * (cov + cov.transpose())));
  return GaussianPosterior{mean, std::move(chol_cov)};
}

inline nlohmann::json to_json(const SpectralMixture& theta) {
  nlohmann::json j;
  j["K"] = theta.K();
  j["weights"] =
      std::vector<double>(theta.weights.data(), theta.weights.data() + theta.weights.size());
  auto mat = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    return rows;
  };
  j["means"] = mat(theta.means);
  j["scales"] = mat(theta.scales);
  return j;
}

inline SpectralMixture mixture_from_json(const nlohmann::json& j) {
  auto w = j.at("weights").get<std::vector<double>>();
  auto rows_to_mat = [](const nlohmann::json& rows) {
    Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = rows[i].get<std::vector<double>>();
      m.row(i) = Eigen::Map<Eigen::VectorXd>(r.data(), r.size()).transpose();
    }
    return m;
  };
  return SpectralMixture(Eigen::Map<Eigen::VectorXd>(w.data(), w.size()),
                         rows_to_mat(j.at("means")), rows_to_mat(j.at("scales")));
}

}  // namespace symmeb::spatial
