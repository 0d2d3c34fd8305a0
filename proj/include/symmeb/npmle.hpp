#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include <json.hpp>

#include "symmeb/errors.hpp"

namespace symmeb::npmle {

// Heteroskedastic normal observations: x_i ~ N(z_i, sd_i^2) with known sd.
struct SequenceData {
  Eigen::VectorXd x;
  Eigen::VectorXd sd;

  SequenceData(Eigen::VectorXd x_, Eigen::VectorXd sd_) : x(std::move(x_)), sd(std::move(sd_)) {
    if (x.size() != sd.size()) throw DimensionMismatch("SequenceData: x and sd lengths differ");
    if (x.size() == 0) throw EmptyData("SequenceData: empty");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || !std::isfinite(sd[i]) || sd[i] <= 0.0)
        throw DataError("SequenceData: entries must be finite with sd > 0");
    }
  }
  Eigen::Index n() const { return x.size(); }
};

// Discrete prior on a fixed support grid.
struct GridPrior {
  Eigen::VectorXd atoms;
  Eigen::VectorXd weights;

  GridPrior(Eigen::VectorXd atoms_, Eigen::VectorXd weights_)
      : atoms(std::move(atoms_)), weights(std::move(weights_)) {
    if (atoms.size() != weights.size() || atoms.size() == 0)
      throw DimensionMismatch("GridPrior: atoms/weights size mismatch");
    for (Eigen::Index g = 1; g < atoms.size(); ++g)
      if (!(atoms[g] > atoms[g - 1])) throw DataError("GridPrior: atoms must increase strictly");
    double s = 0.0;
    for (Eigen::Index g = 0; g < weights.size(); ++g) {
      if (weights[g] < 0.0) throw DataError("GridPrior: negative weight");
      s += weights[g];
    }
    if (std::fabs(s - 1.0) > 1e-10) throw DataError("GridPrior: weights must sum to 1");
  }
};

// Equally spaced support over the data range; degenerate range collapses to a
// single atom. `extend_sd` widens both ends by that many max-sd units.
inline Eigen::VectorXd build_grid(const SequenceData& data, int grid_size, double extend_sd = 0.0) {
  if (grid_size < 1) throw std::invalid_argument("build_grid: grid_size must be >= 1");
  double lo = data.x.minCoeff(), hi = data.x.maxCoeff();
  if (extend_sd > 0.0) {
    const double pad = extend_sd * data.sd.maxCoeff();
    lo -= pad;
    hi += pad;
  }
  if (lo == hi || grid_size == 1) return Eigen::VectorXd::Constant(1, lo == hi ? lo : 0.5 * (lo + hi));
  return Eigen::VectorXd::LinSpaced(grid_size, lo, hi);
}

namespace detail {

constexpr double kLogUnderflow = -708.0;  // exp() underflows to exactly 0 below this

// Row-shifted likelihood table: entry (i,g) = exp(log phi_i(atom_g) - rowmax_i),
// with rowmax returned separately. Rows whose every likelihood underflows to 0
// signal a grid/data mismatch.
struct LikelihoodTable {
  Eigen::MatrixXd shifted;  // n x G, row maximum is always 1
  Eigen::VectorXd rowmax;   // log-domain shifts
};

inline LikelihoodTable likelihood_table(const SequenceData& data, const Eigen::VectorXd& atoms) {
  const Eigen::Index n = data.n(), G = atoms.size();
  LikelihoodTable t;
  t.shifted.resize(n, G);
  t.rowmax.resize(n);
  constexpr double half_log_2pi = 0.9189385332046727;
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < G; ++g) {
      const double z = (data.x[i] - atoms[g]) / data.sd[i];
      const double lp = -0.5 * z * z - std::log(data.sd[i]) - half_log_2pi;
      t.shifted(i, g) = lp;
      m = std::max(m, lp);
    }
    if (m < kLogUnderflow)
      throw NumericalUnderflow("npmle: all grid likelihoods underflow for observation " +
                               std::to_string(i));
    for (Eigen::Index g = 0; g < G; ++g) t.shifted(i, g) = std::exp(t.shifted(i, g) - m);
    t.rowmax[i] = m;
  }
  return t;
}

}  // namespace detail

inline double marginal_loglik(const SequenceData& data, const GridPrior& prior) {
  auto t = detail::likelihood_table(data, prior.atoms);
  const Eigen::VectorXd f = t.shifted * prior.weights;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!(f[i] > 0.0))
      throw NumericalUnderflow("marginal_loglik: zero marginal density at observation " +
                               std::to_string(i));
    ll += std::log(f[i]) + t.rowmax[i];
  }
  return ll;
}

// EM fixed point on the weights from uniform initialization. Stops when the
// log-likelihood improves by less than tol. Optionally records the per-iteration
// log-likelihood trace (entry 0 is the initial value).
inline GridPrior fit_npmle(const SequenceData& data, const Eigen::VectorXd& atoms,
                           double tol = 1e-8, int max_iter = 2000,
                           std::vector<double>* loglik_trace = nullptr) {
  if (atoms.size() == 0) throw EmptyData("fit_npmle: empty grid");
  if (!(tol > 0.0)) throw std::invalid_argument("fit_npmle: tol must be positive");
  const Eigen::Index n = data.n(), G = atoms.size();
  auto t = detail::likelihood_table(data, atoms);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(G, 1.0 / static_cast<double>(G));

  auto loglik_of = [&](const Eigen::VectorXd& f) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += std::log(f[i]) + t.rowmax[i];
    return ll;
  };

  Eigen::VectorXd f = t.shifted * w;
  double ll = loglik_of(f);
  if (loglik_trace) {
    loglik_trace->clear();
    loglik_trace->push_back(ll);
  }
  for (int it = 0; it < max_iter; ++it) {
    // w_g <- (1/n) sum_i w_g A_ig / f_i
    Eigen::VectorXd ratio = f.cwiseInverse();
    w = w.cwiseProduct(t.shifted.transpose() * ratio) / static_cast<double>(n);
    w /= w.sum();  // guard accumulated rounding; sum is 1 up to fp error
    f = t.shifted * w;
    const double ll_new = loglik_of(f);
    if (loglik_trace) loglik_trace->push_back(ll_new);
    const double gain = ll_new - ll;
    ll = ll_new;
    if (gain < tol) break;
  }
  return GridPrior(atoms, w);
}

// Rows are the posterior distributions over atoms for each observation.
inline Eigen::MatrixXd posterior_weights(const SequenceData& data, const GridPrior& prior) {
  auto t = detail::likelihood_table(data, prior.atoms);
  Eigen::MatrixXd r = t.shifted.array().rowwise() * prior.weights.transpose().array();
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double s = r.row(i).sum();
    if (!(s > 0.0))
      throw NumericalUnderflow("posterior_weights: zero marginal density at observation " +
                               std::to_string(i));
    r.row(i) /= s;
  }
  return r;
}

inline Eigen::VectorXd posterior_mean(const SequenceData& data, const GridPrior& prior) {
  return posterior_weights(data, prior) * prior.atoms;
}

inline nlohmann::json to_json(const GridPrior& prior) {
  nlohmann::json j;
  j["atoms"] = std::vector<double>(prior.atoms.data(), prior.atoms.data() + prior.atoms.size());
  j["weights"] =
      std::vector<double>(prior.weights.data(), prior.weights.data() + prior.weights.size());
  return j;
}

inline GridPrior prior_from_json(const nlohmann::json& j) {
  auto a = j.at("atoms").get<std::vector<double>>();
  auto w = j.at("weights").get<std::vector<double>>();
  return GridPrior(Eigen::Map<Eigen::VectorXd>(a.data(), a.size()),
                   Eigen::Map<Eigen::VectorXd>(w.data(), w.size()));
}

}  // namespace symmeb::npmle
