#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace symmeb {

// Counter-based generator (Philox 4x32-10). Every stochastic routine in the
// library draws from one of these, so a run is a pure function of its seed.
// split(t) derives an independent substream keyed on (seed, t); the child
// stream does not depend on how much of the parent has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed),
                                          static_cast<std::uint32_t>(seed >> 32)} {}

  Rng split(std::uint64_t substream) const {
    std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(substream),
                                        static_cast<std::uint32_t>(substream >> 32),
                                        0x53504c49u, 0x54535452u};
    auto out = block(ctr, key_);
    return Rng((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
  }

  std::uint32_t next_u32() {
    if (have_ == 0) {
      std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(counter_),
                                          static_cast<std::uint32_t>(counter_ >> 32),
                                          0u, 0u};
      buf_ = block(ctr, key_);
      ++counter_;
      have_ = 4;
    }
    return buf_[4 - have_--];
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Strictly inside (0,1); 52 bits of resolution.
  double uniform() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();     // inverse-CDF, one uniform per draw
  double student_t5(); // inverse-CDF
  double beta_2_5();   // inverse-CDF of Beta(2,5)

 private:
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
      std::array<std::uint32_t, 4> next = {
          static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
          static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
          static_cast<std::uint32_t>(p0)};
      ctr = next;
      key[0] += w0;
      key[1] += w1;
    }
    return ctr;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int have_ = 0;
};

namespace dist {

// Wichura's PPND16 rational approximation to the standard normal quantile,
// accurate to ~1e-16 over (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -val : val;
}

// Regularized incomplete beta I_x(a,b), continued fraction (modified Lentz).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  auto contfrac = [](double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      double m2 = 2.0 * m;
      double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::fabs(del - 1.0) < 3e-16) break;
    }
    return h;
  };
  const double ln_pre = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_pre) * contfrac(a, b, x) / a;
  return 1.0 - std::exp(ln_pre) * contfrac(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, double nu) {
  const double x = nu / (nu + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * nu, 0.5, x);
  return (t >= 0.0) ? 1.0 - half_tail : half_tail;
}

inline double student_t5_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("student_t5_quantile: p outside (0,1)");
  double lo = -1e5, hi = 1e5;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, 5.0) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Beta(2,5) has a closed-form CDF; invert by bisection.
inline double beta_2_5_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double om = 1.0 - x;
  const double om4 = om * om * om * om;
  return 1.0 - om4 * om * om - 6.0 * x * om4 * om;
}

inline double beta_2_5_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("beta_2_5_quantile: p outside (0,1)");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (beta_2_5_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace dist

inline double Rng::normal() { return dist::normal_quantile(uniform()); }
inline double Rng::student_t5() { return dist::student_t5_quantile(uniform()); }
inline double Rng::beta_2_5() { return dist::beta_2_5_quantile(uniform()); }

}  // namespace symmeb
