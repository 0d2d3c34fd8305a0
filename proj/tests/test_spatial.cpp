#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "symmeb/errors.hpp"
#include "symmeb/linalg.hpp"
#include "symmeb/rng.hpp"
#include "symmeb/spatial.hpp"

using namespace symmeb;
using spatial::SpatialData;
using spatial::SpectralMixture;

namespace {

SpectralMixture mix1(double mu, double sigma, double w = 1.0) {
  Eigen::VectorXd ws(1);
  ws << w;
  Eigen::MatrixXd m(1, 1), s(1, 1);
  m << mu;
  s << sigma;
  return SpectralMixture(ws, m, s);
}

SpectralMixture paper_mix() {
  Eigen::VectorXd w(3);
  w << 0.5, 0.3, 0.2;
  Eigen::MatrixXd mu(3, 1), sigma(3, 1);
  mu << 0.0, 0.15, -0.25;
  sigma << 1.0, 0.2, 0.35;
  return SpectralMixture(w, mu, sigma);
}

SpectralMixture random_mix(Eigen::Index K, Eigen::Index d, Rng& rng) {
  Eigen::VectorXd w(K);
  double t = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    w[k] = 0.2 + rng.uniform();
    t += w[k];
  }
  w /= t;
  w[K - 1] += 1.0 - w.sum();
  Eigen::MatrixXd mu(K, d), sigma(K, d);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      mu(k, j) = rng.uniform(-0.6, 0.6);
      sigma(k, j) = 0.2 + rng.uniform();
    }
  return SpectralMixture(w, mu, sigma);
}

SpatialData random_spatial(Eigen::Index n, Eigen::Index d, Eigen::Index p, Rng& rng,
                           double tau_lo = 0.5, double tau_hi = 2.0) {
  Eigen::MatrixXd sites(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) sites(i, j) = rng.uniform(-2.0, 2.0);
  Eigen::MatrixXd a(n, p);
  a.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index q = 1; q < p; ++q) a(i, q) = rng.normal();
  Eigen::VectorXd x(n), tau(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = rng.normal() * 1.5;
    tau[i] = rng.uniform(tau_lo, tau_hi);
  }
  return SpatialData(sites, a, x, tau);
}

Eigen::VectorXd delta1(double v) {
  Eigen::VectorXd d(1);
  d << v;
  return d;
}

// objective via explicit dense inverses, mirroring the definition term by term
double objective_dense(const SpectralMixture& theta, const SpatialData& data) {
  const Eigen::MatrixXd sigma = spatial::gram(theta, data.sites).m;
  Eigen::MatrixXd s = sigma;
  s.diagonal() += data.tau.cwiseInverse();
  const Eigen::MatrixXd w = oracle::inverse_gauss_jordan(s);
  const Eigen::MatrixXd m = data.covariates.transpose() * w * data.covariates;
  const Eigen::VectorXd beta =
      oracle::inverse_gauss_jordan(m) * data.covariates.transpose() * w * data.x;
  const double quad = data.x.dot(w * data.x) - data.x.dot(w * data.covariates * beta);
  return std::log(oracle::det_cofactor(s)) + std::log(oracle::det_cofactor(m)) + quad;
}

}  // namespace

TEST_CASE("kernel at zero lag is the total mixture weight") {
  Rng rng(1);
  auto theta = random_mix(3, 2, rng);
  CHECK(std::fabs(spatial::kernel_eval(theta, Eigen::VectorXd::Zero(2)) - 1.0) < 1e-14);
  CHECK(std::fabs(spatial::kernel_eval(paper_mix(), delta1(0.0)) - 1.0) < 1e-14);
}

TEST_CASE("single zero-mean component reduces to a squared exponential") {
  const double s = 0.3;
  auto theta = mix1(0.0, s);
  for (double d : {0.1, 0.5, 2.0}) {
    const double want = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * s * s * d * d);
    CHECK(std::fabs(spatial::kernel_eval(theta, delta1(d)) - want) < 1e-14);
  }
}

TEST_CASE("benchmark kernel matches its term-by-term expansion") {
  auto theta = paper_mix();
  constexpr double pi = std::numbers::pi;
  for (double d : {0.07, 0.4, 1.3}) {
    const double want = 0.5 * std::cos(2 * pi * 0.0 * d) * std::exp(-2 * pi * pi * 1.0 * d * d) +
                        0.3 * std::cos(2 * pi * 0.15 * d) * std::exp(-2 * pi * pi * 0.04 * d * d) +
                        0.2 * std::cos(2 * pi * -0.25 * d) * std::exp(-2 * pi * pi * 0.1225 * d * d);
    CHECK(std::fabs(spatial::kernel_eval(theta, delta1(d)) - want) < 1e-14);
  }
}

TEST_CASE("kernel is even and bounded by the total weight") {
  Rng rng(2);
  auto theta = random_mix(4, 3, rng);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd d(3);
    for (int j = 0; j < 3; ++j) d[j] = rng.uniform(-3.0, 3.0);
    const double a = spatial::kernel_eval(theta, d);
    const double b = spatial::kernel_eval(theta, (-d).eval());
    CHECK(a == b);
    CHECK(std::fabs(a) <= 1.0 + 1e-14);
  }
}

TEST_CASE("gram: single site, duplicated sites, random PSD probe") {
  auto theta = paper_mix();
  Eigen::MatrixXd one(1, 1);
  one << 0.7;
  CHECK(spatial::gram(theta, one).m(0, 0) == 1.0);

  Eigen::MatrixXd dup(2, 1);
  dup << 1.0, 1.0;
  const auto g = spatial::gram(theta, dup).m;
  CHECK(g(0, 0) == g(1, 0));
  CHECK(g(0, 1) == g(1, 1));
  auto f = linalg::cholesky(spatial::gram(theta, dup));  // jitter handles the tie
  CHECK(f.jitter_used <= 1e-6);

  Rng rng(3);
  Eigen::MatrixXd sites(5, 1);
  for (int i = 0; i < 5; ++i) sites(i, 0) = rng.uniform(-2.0, 2.0);
  auto fr = linalg::cholesky(spatial::gram(theta, sites));
  CHECK(fr.jitter_used <= 1e-8);
  const Eigen::VectorXd diag = spatial::gram(theta, sites).m.diagonal();
  CHECK((diag.array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("objective: scalar case agrees with a hand computation") {
  auto theta = mix1(0.2, 0.4);
  Eigen::MatrixXd sites(1, 1), a(1, 1);
  sites << 0.0;
  a << 1.0;
  Eigen::VectorXd x(1), tau(1);
  x << 1.3;
  tau << 2.0;
  SpatialData data(sites, a, x, tau);
  // n=1: S = 1 + 1/tau, W = 1/S, beta_hat = x, quadratic term vanishes
  const double S = 1.0 + 0.5;
  const double want = std::log(S) + std::log(1.0 / S) + x[0] * x[0] / S - x[0] * (1.0 / S) * x[0];
  CHECK(std::fabs(spatial::mmle_objective(theta, data) - want) < 1e-12);
}

TEST_CASE("objective is invariant to shifting x when an intercept is present") {
  Rng rng(5);
  auto theta = random_mix(2, 1, rng);
  auto data = random_spatial(7, 1, 2, rng);
  const double base = spatial::mmle_objective(theta, data);
  SpatialData shifted(data.sites, data.covariates, data.x.array() + 3.7, data.tau);
  CHECK(std::fabs(spatial::mmle_objective(theta, shifted) - base) < 1e-8);
}

TEST_CASE("objective matches the dense-inverse oracle on n=5") {
  Rng rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    auto theta = random_mix(2, 1, rng);
    auto data = random_spatial(5, 1, 2, rng);
    CHECK(std::fabs(spatial::mmle_objective(theta, data) - objective_dense(theta, data)) < 1e-9);
  }
}

TEST_CASE("duplicate covariate column raises RankDeficientDesign") {
  Rng rng(9);
  auto theta = random_mix(1, 1, rng);
  Eigen::MatrixXd sites(4, 1);
  sites << 0.0, 0.5, 1.0, 1.5;
  Eigen::MatrixXd a(4, 2);
  a.col(0).setOnes();
  a.col(1).setOnes();
  SpatialData data(sites, a, Eigen::VectorXd::Ones(4), Eigen::VectorXd::Ones(4));
  CHECK_THROWS_AS(spatial::mmle_objective(theta, data), RankDeficientDesign);
  CHECK_THROWS_AS(spatial::posterior_beta(theta, data), RankDeficientDesign);
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(11);
  for (int rep = 0; rep < 6; ++rep) {
    const int K = 1 + static_cast<int>(rng.uniform() * 3);
    const int d = 1 + static_cast<int>(rng.uniform() * 2);
    auto theta = random_mix(K, d, rng);
    auto data = random_spatial(6, d, 2, rng);
    const Eigen::VectorXd g = spatial::mmle_gradient(theta, data);
    const Eigen::VectorXd v0 = spatial::pack(theta);
    const double h = 1e-5;
    for (Eigen::Index q = 0; q < v0.size(); ++q) {
      Eigen::VectorXd vp = v0, vm = v0;
      vp[q] += h;
      vm[q] -= h;
      const double fp = spatial::mmle_objective(spatial::unpack(K, d, vp), data);
      const double fm = spatial::mmle_objective(spatial::unpack(K, d, vm), data);
      CHECK(oracle::rel_err(g[q], (fp - fm) / (2 * h)) < 1e-4);
    }
  }
}

TEST_CASE("single-component weight logit has exactly zero gradient") {
  Rng rng(13);
  auto theta = random_mix(1, 1, rng);
  auto data = random_spatial(6, 1, 2, rng);
  const Eigen::VectorXd g = spatial::mmle_gradient(theta, data);
  CHECK(g[0] == 0.0);
}

TEST_CASE("mean gradient vanishes at zero frequency means") {
  Rng rng(15);
  Eigen::VectorXd w(2);
  w << 0.6, 0.4;
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(2, 1), sigma(2, 1);
  sigma << 0.3, 0.8;
  SpectralMixture theta(w, mu, sigma);
  auto data = random_spatial(6, 1, 2, rng);
  const Eigen::VectorXd g = spatial::mmle_gradient(theta, data);
  CHECK(std::fabs(g[2]) < 1e-14);  // mean block starts after the two logits
  CHECK(std::fabs(g[3]) < 1e-14);
}

TEST_CASE("posterior_beta: OLS limit for a vanishing kernel, dense oracle at n=5") {
  Rng rng(17);
  auto data = random_spatial(6, 1, 2, rng, 1.0, 1.0);
  // scale the kernel variance down via a huge frequency scale: entries decay
  // to zero off the diagonal, diagonal stays 1, so W approaches (1 + 1)^{-1} I
  // and the weighted LS estimate equals OLS.
  auto tiny = mix1(0.0, 1e6);
  auto post = spatial::posterior_beta(tiny, data);
  const Eigen::MatrixXd ata = data.covariates.transpose() * data.covariates;
  const Eigen::VectorXd ols =
      oracle::inverse_gauss_jordan(ata) * data.covariates.transpose() * data.x;
  CHECK((post.mean - ols).cwiseAbs().maxCoeff() < 1e-8);

  auto theta = random_mix(2, 1, rng);
  auto post2 = spatial::posterior_beta(theta, data);
  const Eigen::MatrixXd sigma = spatial::gram(theta, data.sites).m;
  Eigen::MatrixXd s = sigma;
  s.diagonal() += data.tau.cwiseInverse();
  const Eigen::MatrixXd w = oracle::inverse_gauss_jordan(s);
  const Eigen::MatrixXd m = data.covariates.transpose() * w * data.covariates;
  const Eigen::VectorXd want =
      oracle::inverse_gauss_jordan(m) * data.covariates.transpose() * w * data.x;
  CHECK((post2.mean - want).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::MatrixXd cov = post2.cov_chol.lower * post2.cov_chol.lower.transpose();
  CHECK((cov - oracle::inverse_gauss_jordan(m)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("posterior_z: no-data limit, half shrinkage, and the conditioning oracle") {
  Rng rng(19);
  auto theta = random_mix(2, 1, rng);

  // tau -> 0: posterior mean collapses to the prior mean 0
  auto data0 = random_spatial(5, 1, 2, rng);
  SpatialData weak(data0.sites, data0.covariates, data0.x,
                   Eigen::VectorXd::Constant(5, 1e-12));
  auto post0 = spatial::posterior_z(theta, weak, Eigen::VectorXd::Zero(2));
  CHECK(post0.mean.cwiseAbs().maxCoeff() < 1e-9);

  // Sigma = I (huge scales), D_tau = I: mean = (x - A beta)/2
  auto white = mix1(0.0, 1e6);
  auto data1 = random_spatial(4, 1, 2, rng, 1.0, 1.0);
  Eigen::VectorXd beta(2);
  beta << 0.3, -0.7;
  auto post1 = spatial::posterior_z(white, data1, beta);
  const Eigen::VectorXd resid = data1.x - data1.covariates * beta;
  CHECK((post1.mean - 0.5 * resid).cwiseAbs().maxCoeff() < 1e-8);

  // brute-force joint-Gaussian conditioning on n=4
  auto data2 = random_spatial(4, 1, 2, rng);
  Eigen::VectorXd beta2(2);
  beta2 << -0.2, 1.1;
  auto post2 = spatial::posterior_z(theta, data2, beta2);
  const Eigen::MatrixXd sigma = spatial::gram(theta, data2.sites).m;
  Eigen::MatrixXd var_x = sigma;
  var_x.diagonal() += data2.tau.cwiseInverse();
  auto cond = oracle::condition_gaussian(Eigen::VectorXd::Zero(4),
                                         data2.covariates * beta2, sigma, sigma, var_x, data2.x);
  CHECK((post2.mean - cond.mean).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::MatrixXd cov = post2.cov_chol.lower * post2.cov_chol.lower.transpose();
  CHECK((cov - cond.cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sample_joint: huge precision pins z to the residuals; moments check out") {
  Rng rng(23);
  auto theta = random_mix(2, 1, rng);
  auto base = random_spatial(4, 1, 2, rng);
  SpatialData sharp(base.sites, base.covariates, base.x, Eigen::VectorXd::Constant(4, 1e10));
  Rng s1(7);
  auto samp = spatial::sample_joint(theta, sharp, 20, s1);
  auto post_b = spatial::posterior_beta(theta, sharp);
  for (int s = 0; s < 20; ++s) {
    const Eigen::VectorXd beta_s = samp.beta.row(s).transpose();
    const Eigen::VectorXd want = sharp.x - sharp.covariates * beta_s;
    CHECK((samp.z.row(s).transpose() - want).cwiseAbs().maxCoeff() < 1e-3);
  }

  Rng s2(12);
  auto many = spatial::sample_joint(theta, base, 10000, s2);
  auto pb = spatial::posterior_beta(theta, base);
  const Eigen::VectorXd sd = pb.sd();
  for (int q = 0; q < 2; ++q)
    CHECK(std::fabs(many.beta_mean[q] - pb.mean[q]) < 3.0 * sd[q] / std::sqrt(10000.0) + 1e-12);

  Rng s3(99), s4(99);
  auto a = spatial::sample_joint(theta, base, 3, s3);
  auto b = spatial::sample_joint(theta, base, 3, s4);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("krige on the observed sites equals posterior_z") {
  Rng rng(29);
  auto theta = random_mix(2, 1, rng);
  auto data = random_spatial(5, 1, 2, rng);
  Eigen::VectorXd beta(2);
  beta << 0.4, -0.9;
  auto direct = spatial::posterior_z(theta, data, beta);
  auto kriged = spatial::krige(theta, data, beta, data.sites);
  CHECK((direct.mean - kriged.mean).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd ca = direct.cov_chol.lower * direct.cov_chol.lower.transpose();
  const Eigen::MatrixXd cb = kriged.cov_chol.lower * kriged.cov_chol.lower.transpose();
  CHECK((ca - cb).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("krige far from the data returns the prior") {
  Rng rng(31);
  auto theta = mix1(0.0, 1.0);  // fast-decaying, strictly positive spectrum
  Eigen::MatrixXd sites(3, 1);
  sites << 0.0, 0.1, 0.2;
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXd x(3);
  x << 1.0, 1.2, 0.8;
  SpatialData data(sites, a, x, Eigen::VectorXd::Ones(3));
  Eigen::MatrixXd all(4, 1);
  all << 0.0, 0.1, 0.2, 500.0;
  auto post = spatial::krige(theta, data, Eigen::VectorXd::Zero(1), all);
  CHECK(std::fabs(post.mean[3]) < 1e-6);
  CHECK(std::fabs(post.sd()[3] - 1.0) < 1e-5);  // prior variance = total weight
}

TEST_CASE("krige requires every observed site to appear") {
  Rng rng(33);
  auto theta = random_mix(1, 1, rng);
  auto data = random_spatial(3, 1, 1, rng);
  Eigen::MatrixXd missing = data.sites.topRows(2);
  CHECK_THROWS_AS(spatial::krige(theta, data, Eigen::VectorXd::Zero(1), missing), DataError);
}

TEST_CASE("held-out kriging beats predicting zero on a GP draw") {
  auto theta = paper_mix();
  int wins = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    Eigen::MatrixXd all(4, 1);
    all << -0.1, 0.05, 0.25, 0.1;  // last one held out, inside a tight cluster
    auto chol = linalg::cholesky(spatial::gram(theta, all));
    const Eigen::VectorXd z = linalg::mvn_sample(Eigen::VectorXd::Zero(4), chol, rng);
    Eigen::MatrixXd obs_sites = all.topRows(3);
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd tau = Eigen::VectorXd::Constant(3, 100.0);
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = z[i] + rng.normal() / 10.0;
    SpatialData data(obs_sites, a, x, tau);
    auto post = spatial::krige(theta, data, Eigen::VectorXd::Zero(1), all);
    if (std::fabs(post.mean[3] - z[3]) < std::fabs(z[3])) ++wins;
  }
  CHECK(wins >= 80);
}

TEST_CASE("translating all sites changes nothing") {
  Rng rng(37);
  auto theta = random_mix(2, 1, rng);
  auto data = random_spatial(6, 1, 2, rng);
  const double base_obj = spatial::mmle_objective(theta, data);
  auto post = spatial::posterior_z(theta, data, Eigen::VectorXd::Zero(2));
  SpatialData moved(data.sites.array() + 13.5, data.covariates, data.x, data.tau);
  CHECK(std::fabs(spatial::mmle_objective(theta, moved) - base_obj) < 1e-10);
  auto post_m = spatial::posterior_z(theta, moved, Eigen::VectorXd::Zero(2));
  CHECK((post.mean - post_m.mean).cwiseAbs().maxCoeff() < 1e-10);
  const auto ga = spatial::gram(theta, data.sites).m;
  const auto gb = spatial::gram(theta, moved.sites).m;
  CHECK((ga - gb).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fit_spectral recovers a single-component scale within 25%") {
  std::vector<double> rel;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const int n = 400;
    const double true_sigma = 0.5;
    auto truth = mix1(0.0, true_sigma);
    Rng rng(seed);
    Eigen::MatrixXd sites = Eigen::VectorXd::LinSpaced(n, -10.0, 10.0);
    auto chol = linalg::cholesky(spatial::gram(truth, sites));
    const Eigen::VectorXd z = linalg::mvn_sample(Eigen::VectorXd::Zero(n), chol, rng);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = z[i] + 0.5 * rng.normal();
    SpatialData data(sites, Eigen::MatrixXd::Ones(n, 1), x, Eigen::VectorXd::Constant(n, 4.0));
    spatial::SpectralFitConfig cfg;
    cfg.steps = 150;
    cfg.restarts = 3;
    cfg.seed = seed;
    auto fit = spatial::fit_spectral(data, 1, cfg);
    rel.push_back(std::fabs(fit.mixture.scales(0, 0) - true_sigma) / true_sigma);
  }
  std::sort(rel.begin(), rel.end());
  CHECK(rel[2] < 0.25);  // median over 5 seeds
}

TEST_CASE("fit_spectral: pure noise keeps the objective near the no-signal value") {
  Rng rng(41);
  const int n = 60;
  Eigen::MatrixXd sites = Eigen::VectorXd::LinSpaced(n, 0.0, 6.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = 1e-3 * rng.normal();
  SpatialData data(sites, Eigen::MatrixXd::Ones(n, 1), x, Eigen::VectorXd::Constant(n, 1e6));
  spatial::SpectralFitConfig cfg;
  cfg.steps = 60;
  cfg.restarts = 1;
  cfg.seed = 2;
  auto fit = spatial::fit_spectral(data, 1, cfg);
  // with tau huge and z* = 0, S ~ Sigma + 1e-6 I and the quadratic term is tiny;
  // check the fitted objective is finite and the trace moved downhill
  REQUIRE(!fit.trace.empty());
  CHECK(fit.objective <= fit.trace.front() + 1e-9);
  CHECK(std::isfinite(fit.objective));
}

TEST_CASE("spectral density integrates to one and json round-trips") {
  auto theta = paper_mix();
  double acc = 0.0;
  const int grid = 20000;
  for (int i = 0; i < grid; ++i) {
    const double s = -8.0 + 16.0 * (i + 0.5) / grid;
    acc += spatial::spectral_density(theta, delta1(s)) * (16.0 / grid);
  }
  CHECK(std::fabs(acc - 1.0) < 1e-6);

  auto j = spatial::to_json(theta);
  auto back = spatial::mixture_from_json(j);
  CHECK((back.weights - theta.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.means - theta.means).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.scales - theta.scales).cwiseAbs().maxCoeff() == 0.0);
}
