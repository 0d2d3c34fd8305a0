#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "symmeb/rng.hpp"

using symmeb::Rng;

TEST_CASE("same seed reproduces the stream, different seeds diverge") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u32();
    all_equal = all_equal && (va == b.next_u32());
    any_diff = any_diff || (va != c.next_u32());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("split streams are independent of parent consumption") {
  Rng a(7), b(7);
  b.next_u64();
  b.next_u64();
  Rng ca = a.split(3), cb = b.split(3);
  for (int i = 0; i < 10; ++i) CHECK(ca.next_u32() == cb.next_u32());
  Rng other = a.split(4);
  bool differs = false;
  Rng ca2 = a.split(3);
  for (int i = 0; i < 10; ++i) differs = differs || (ca2.next_u32() != other.next_u32());
  CHECK(differs);
}

TEST_CASE("uniform stays strictly inside (0,1) and has mean 1/2") {
  Rng rng(1);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.005);
}

static double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

TEST_CASE("normal quantile inverts the erfc-based cdf") {
  for (double p : {1e-12, 1e-6, 0.001, 0.025, 0.2, 0.5, 0.8, 0.975, 0.999, 1.0 - 1e-9}) {
    const double q = symmeb::dist::normal_quantile(p);
    CHECK(std::fabs(normal_cdf(q) - p) < 1e-12 * std::max(1.0, p) + 1e-15);
  }
  CHECK(std::fabs(symmeb::dist::normal_quantile(0.975) - 1.959963984540054) < 1e-12);
  CHECK(symmeb::dist::normal_quantile(0.5) == 0.0);
}

TEST_CASE("normal draws match moments") {
  Rng rng(5);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("t5 quantile round-trips its cdf and hits known points") {
  using symmeb::dist::student_t5_quantile;
  using symmeb::dist::student_t_cdf;
  for (double p : {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    CHECK(std::fabs(student_t_cdf(student_t5_quantile(p), 5.0) - p) < 1e-10);
  }
  // symmetry and a tabulated two-sided 95% point for 5 dof
  CHECK(std::fabs(student_t5_quantile(0.975) - 2.570581835636197) < 1e-6);
  CHECK(std::fabs(student_t5_quantile(0.025) + student_t5_quantile(0.975)) < 1e-9);
}

TEST_CASE("beta(2,5) cdf/quantile agree and match the density's moments") {
  using symmeb::dist::beta_2_5_cdf;
  using symmeb::dist::beta_2_5_quantile;
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    CHECK(std::fabs(beta_2_5_cdf(beta_2_5_quantile(p)) - p) < 1e-10);
  }
  Rng rng(11);
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += rng.beta_2_5();
  CHECK(std::fabs(s / n - 2.0 / 7.0) < 0.005);  // mean a/(a+b)
}

TEST_CASE("incomplete beta matches a trapezoid quadrature") {
  // independent check of the continued fraction on a modest case
  const double a = 2.5, b = 0.5, x = 0.7;
  const int steps = 2000000;
  double acc = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t0 = x * i / steps, t1 = x * (i + 1) / steps;
    auto f = [&](double t) { return std::pow(t, a - 1.0) * std::pow(1.0 - t, b - 1.0); };
    acc += 0.5 * (f(t0 + 1e-300) + f(t1)) * (t1 - t0);
  }
  const double norm = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  CHECK(std::fabs(symmeb::dist::incomplete_beta(a, b, x) - acc / norm) < 1e-6);
}
