#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "symmeb/errors.hpp"
#include "symmeb/nnet.hpp"
#include "symmeb/rng.hpp"

namespace symmeb::ebmr {

enum class Flavor { separate, joint, relative };

inline std::string flavor_name(Flavor f) {
  switch (f) {
    case Flavor::separate: return "separate";
    case Flavor::joint: return "joint";
    default: return "relative";
  }
}

inline Flavor flavor_from_name(const std::string& s) {
  if (s == "separate") return Flavor::separate;
  if (s == "joint") return Flavor::joint;
  if (s == "relative") return Flavor::relative;
  throw DataError("unknown flavor: " + s);
}

struct NoisyMatrix {
  Eigen::MatrixXd x;
  Eigen::MatrixXd tau;

  NoisyMatrix(Eigen::MatrixXd x_, Eigen::MatrixXd tau_) : x(std::move(x_)), tau(std::move(tau_)) {
    if (x.rows() != tau.rows() || x.cols() != tau.cols())
      throw DimensionMismatch("NoisyMatrix: x and tau shapes differ");
    if (x.rows() == 0 || x.cols() == 0) throw EmptyData("NoisyMatrix: empty");
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (!std::isfinite(x(i, j)) || !std::isfinite(tau(i, j)) || tau(i, j) <= 0.0)
          throw DataError("NoisyMatrix: entries must be finite with tau > 0");
  }
  NoisyMatrix(Eigen::MatrixXd x_, double tau_scalar)
      : NoisyMatrix(x_, Eigen::MatrixXd::Constant(x_.rows(), x_.cols(), tau_scalar)) {}

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }
};

struct CovariateArrays {
  Eigen::MatrixXd row_cov;  // n x q_r
  Eigen::MatrixXd col_cov;  // p x q_c
};

// Discretized variational marginals: each row is a simplex over the grid
// u_k = k/K, k = 0..K. col_weights is empty for the joint flavor.
struct VariationalWeights {
  Eigen::MatrixXd row_weights;
  Eigen::MatrixXd col_weights;
  int grid_size = 1;  // K

  static VariationalWeights uniform(Eigen::Index n, Eigen::Index p, int K, Flavor flavor) {
    VariationalWeights w;
    w.grid_size = K;
    const double u = 1.0 / (K + 1);
    w.row_weights = Eigen::MatrixXd::Constant(n, K + 1, u);
    if (flavor != Flavor::joint) w.col_weights = Eigen::MatrixXd::Constant(p, K + 1, u);
    return w;
  }
};

// Per-column z-scoring applied to covariates before they enter the network.
struct CovScaler {
  Eigen::VectorXd row_mean, row_sd, col_mean, col_sd;
  bool active = false;

  CovariateArrays apply(const CovariateArrays& cov) const {
    if (!active) return cov;
    CovariateArrays out = cov;
    for (Eigen::Index c = 0; c < out.row_cov.cols(); ++c)
      out.row_cov.col(c) = (out.row_cov.col(c).array() - row_mean[c]) / row_sd[c];
    for (Eigen::Index c = 0; c < out.col_cov.cols(); ++c)
      out.col_cov.col(c) = (out.col_cov.col(c).array() - col_mean[c]) / col_sd[c];
    return out;
  }
};

inline CovScaler fit_scaler(const CovariateArrays& cov) {
  auto stats = [](const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    mean = m.colwise().mean();
    sd.resize(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = (m.col(c).array() - mean[c]).square().sum() / m.rows();
      sd[c] = v > 0.0 ? std::sqrt(v) : 1.0;
    }
  };
  CovScaler s;
  stats(cov.row_cov, s.row_mean, s.row_sd);
  stats(cov.col_cov, s.col_mean, s.col_sd);
  s.active = true;
  return s;
}

struct EbmrFit {
  nnet::GNetwork network;
  VariationalWeights weights;
  Flavor flavor = Flavor::separate;
  std::vector<double> elbo_trace;
  CovScaler scaler;  // identity unless flavor == relative
  bool fitted = false;
};

namespace detail {

inline Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - m).exp();
  return e / e.sum();
}

// log(1/(K+1) * sum_k exp(-(tau/2)(x - g_k)^2)) with max-shift stabilization.
inline double lse_from_outputs(double x, double tau, const Eigen::Ref<const Eigen::VectorXd>& g) {
  const Eigen::ArrayXd a = -0.5 * tau * (x - g.array()).square();
  const double m = a.maxCoeff();
  return m + std::log((a - m).exp().sum()) - std::log(static_cast<double>(g.size()));
}

// Inputs covering the full grid (k1,k2,k3), row index = (k1*(K+1)+k2)*(K+1)+k3.
inline Eigen::MatrixXd grid_inputs(int K) {
  const int K1 = K + 1;
  Eigen::MatrixXd in(K1 * K1 * K1, 3);
  int r = 0;
  for (int k1 = 0; k1 < K1; ++k1)
    for (int k2 = 0; k2 < K1; ++k2)
      for (int k3 = 0; k3 < K1; ++k3, ++r) {
        in(r, 0) = static_cast<double>(k1) / K;
        in(r, 1) = static_cast<double>(k2) / K;
        in(r, 2) = static_cast<double>(k3) / K;
      }
  return in;
}

// lse values for every cell and grid pair: cell(i,j) is a (K+1)x(K+1) matrix
// over (k1,k2). The table depends on the network but not on the weights, so one
// build serves both weight sweeps of an epoch.
struct LseTable {
  Eigen::Index n = 0, p = 0;
  int K = 1;
  std::vector<Eigen::MatrixXd> cells;

  const Eigen::MatrixXd& at(Eigen::Index i, Eigen::Index j) const { return cells[i * p + j]; }
  Eigen::MatrixXd& at(Eigen::Index i, Eigen::Index j) { return cells[i * p + j]; }
};

inline void reduce_cell(const NoisyMatrix& data, Eigen::Index i, Eigen::Index j,
                        const Eigen::VectorXd& outputs, int K, Eigen::MatrixXd& cell) {
  const int K1 = K + 1;
  cell.resize(K1, K1);
  const double x = data.x(i, j), tau = data.tau(i, j);
  for (int k1 = 0; k1 < K1; ++k1)
    for (int k2 = 0; k2 < K1; ++k2)
      cell(k1, k2) = lse_from_outputs(x, tau, outputs.segment((k1 * K1 + k2) * K1, K1));
}

inline LseTable build_lse_table(const NoisyMatrix& data, const nnet::GNetwork& net, Flavor flavor,
                                const CovariateArrays* cov, int K) {
  const Eigen::Index n = data.n(), p = data.p();
  const int K1 = K + 1;
  LseTable t;
  t.n = n;
  t.p = p;
  t.K = K;
  t.cells.resize(n * p);
  const Eigen::MatrixXd grid = grid_inputs(K);
  if (flavor != Flavor::relative) {
    const Eigen::VectorXd g = nnet::forward(net, grid);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) reduce_cell(data, i, j, g, K, t.at(i, j));
    return t;
  }
  if (!cov) throw FlavorMismatch("relative flavor requires covariates");
  const Eigen::Index qr = cov->row_cov.cols(), qc = cov->col_cov.cols();
  const int rows_per_cell = K1 * K1 * K1;
  const Eigen::Index block = std::max<Eigen::Index>(1, 32768 / rows_per_cell);
  Eigen::MatrixXd in(block * rows_per_cell, qr + qc + 3);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pending;
  auto flush = [&]() {
    if (pending.empty()) return;
    const Eigen::VectorXd g =
        nnet::forward(net, in.topRows(static_cast<Eigen::Index>(pending.size()) * rows_per_cell));
    for (std::size_t c = 0; c < pending.size(); ++c)
      reduce_cell(data, pending[c].first, pending[c].second,
                  g.segment(c * rows_per_cell, rows_per_cell), K,
                  t.at(pending[c].first, pending[c].second));
    pending.clear();
  };
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index base = static_cast<Eigen::Index>(pending.size()) * rows_per_cell;
      in.block(base, 0, rows_per_cell, qr).rowwise() = cov->row_cov.row(i);
      in.block(base, qr, rows_per_cell, qc).rowwise() = cov->col_cov.row(j);
      in.block(base, qr + qc, rows_per_cell, 3) = grid;
      pending.emplace_back(i, j);
      if (static_cast<Eigen::Index>(pending.size()) == block) flush();
    }
  flush();
  return t;
}

inline Eigen::MatrixXd update_rows_from_table(const LseTable& t, const VariationalWeights& w,
                                              Flavor flavor) {
  const int K1 = t.K + 1;
  Eigen::MatrixXd out(t.n, K1);
  if (flavor == Flavor::joint) {
    for (Eigen::Index i = 0; i < t.n; ++i) {
      Eigen::VectorXd rho = t.at(i, i).diagonal();
      for (Eigen::Index j = 0; j < t.p; ++j) {
        if (j == i) continue;
        rho += t.at(i, j) * w.row_weights.row(j).transpose();
      }
      out.row(i) = softmax(rho).transpose();
    }
    return out;
  }
  for (Eigen::Index i = 0; i < t.n; ++i) {
    Eigen::VectorXd rho = Eigen::VectorXd::Zero(K1);
    for (Eigen::Index j = 0; j < t.p; ++j) rho += t.at(i, j) * w.col_weights.row(j).transpose();
    out.row(i) = softmax(rho).transpose();
  }
  return out;
}

inline Eigen::MatrixXd update_cols_from_table(const LseTable& t, const VariationalWeights& w) {
  const int K1 = t.K + 1;
  Eigen::MatrixXd out(t.p, K1);
  for (Eigen::Index j = 0; j < t.p; ++j) {
    Eigen::VectorXd rho = Eigen::VectorXd::Zero(K1);
    for (Eigen::Index i = 0; i < t.n; ++i)
      rho += t.at(i, j).transpose() * w.row_weights.row(i).transpose();
    out.row(j) = softmax(rho).transpose();
  }
  return out;
}

inline double entropy(const Eigen::MatrixXd& weights) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index k = 0; k < weights.cols(); ++k) {
      const double w = weights(i, k);
      if (w > 0.0) h -= w * std::log(w);
    }
  return h;
}

inline double elbo_from_table(const LseTable& t, const VariationalWeights& w, Flavor flavor) {
  double val = 0.0;
  if (flavor == Flavor::joint) {
    for (Eigen::Index i = 0; i < t.n; ++i) {
      val += w.row_weights.row(i).dot(t.at(i, i).diagonal());
      for (Eigen::Index j = 0; j < t.p; ++j) {
        if (j == i) continue;
        const Eigen::VectorXd tv = t.at(i, j) * w.row_weights.row(j).transpose();
        val += w.row_weights.row(i).dot(tv);
      }
    }
    return val + entropy(w.row_weights);
  }
  for (Eigen::Index i = 0; i < t.n; ++i)
    for (Eigen::Index j = 0; j < t.p; ++j) {
      const Eigen::VectorXd tv = t.at(i, j) * w.col_weights.row(j).transpose();
      val += w.row_weights.row(i).dot(tv);
    }
  return val + entropy(w.row_weights) + entropy(w.col_weights);
}

inline void check_shapes(const NoisyMatrix& data, const VariationalWeights& w, Flavor flavor,
                         const CovariateArrays* cov) {
  const int K1 = w.grid_size + 1;
  if (w.row_weights.rows() != data.n() || w.row_weights.cols() != K1)
    throw DimensionMismatch("row weights shape does not match data/grid");
  if (flavor == Flavor::joint) {
    if (data.n() != data.p()) throw NonSquareJoint("joint flavor requires a square matrix");
  } else if (w.col_weights.rows() != data.p() || w.col_weights.cols() != K1) {
    throw DimensionMismatch("col weights shape does not match data/grid");
  }
  if (flavor == Flavor::relative) {
    if (!cov) throw FlavorMismatch("relative flavor requires covariates");
    if (cov->row_cov.rows() != data.n() || cov->col_cov.rows() != data.p())
      throw DimensionMismatch("covariate row counts do not match data");
  }
}

}  // namespace detail

// Stabilized log-mean-exp of the per-grid-point Gaussian log-likelihood,
// log sum_k exp(-(tau/2)(x - g(u,v,k/K))^2) - log(K+1). For the relative
// flavor the network sees (row_cov, col_cov, u, v, k/K).
inline double lse_hat(double x, double tau, double u, double v, const nnet::GNetwork& net, int K,
                      const Eigen::VectorXd* row_cov = nullptr,
                      const Eigen::VectorXd* col_cov = nullptr) {
  if (K < 1) throw std::invalid_argument("lse_hat: K must be >= 1");
  const int K1 = K + 1;
  const Eigen::Index qr = row_cov ? row_cov->size() : 0;
  const Eigen::Index qc = col_cov ? col_cov->size() : 0;
  Eigen::MatrixXd in(K1, qr + qc + 3);
  for (int k = 0; k < K1; ++k) {
    Eigen::Index c = 0;
    for (Eigen::Index q = 0; q < qr; ++q) in(k, c++) = (*row_cov)[q];
    for (Eigen::Index q = 0; q < qc; ++q) in(k, c++) = (*col_cov)[q];
    in(k, c++) = u;
    in(k, c++) = v;
    in(k, c) = static_cast<double>(k) / K;
  }
  return detail::lse_from_outputs(x, tau, nnet::forward(net, in));
}

inline VariationalWeights update_row_weights(const NoisyMatrix& data, const VariationalWeights& w,
                                             const nnet::GNetwork& net, Flavor flavor,
                                             const CovariateArrays* cov = nullptr) {
  detail::check_shapes(data, w, flavor, cov);
  auto t = detail::build_lse_table(data, net, flavor, cov, w.grid_size);
  VariationalWeights out = w;
  out.row_weights = detail::update_rows_from_table(t, w, flavor);
  return out;
}

inline VariationalWeights update_col_weights(const NoisyMatrix& data, const VariationalWeights& w,
                                             const nnet::GNetwork& net, Flavor flavor,
                                             const CovariateArrays* cov = nullptr) {
  if (flavor == Flavor::joint)
    throw FlavorMismatch("update_col_weights is undefined for the joint flavor");
  detail::check_shapes(data, w, flavor, cov);
  auto t = detail::build_lse_table(data, net, flavor, cov, w.grid_size);
  VariationalWeights out = w;
  out.col_weights = detail::update_cols_from_table(t, w);
  return out;
}

inline double elbo(const NoisyMatrix& data, const VariationalWeights& w,
                   const nnet::GNetwork& net, Flavor flavor,
                   const CovariateArrays* cov = nullptr) {
  detail::check_shapes(data, w, flavor, cov);
  auto t = detail::build_lse_table(data, net, flavor, cov, w.grid_size);
  return detail::elbo_from_table(t, w, flavor);
}

using CellList = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

inline CellList all_cells(const NoisyMatrix& data) {
  CellList cells;
  cells.reserve(data.n() * data.p());
  for (Eigen::Index i = 0; i < data.n(); ++i)
    for (Eigen::Index j = 0; j < data.p(); ++j) cells.emplace_back(i, j);
  return cells;
}

// Weighted lse_hat sum over the minibatch and its exact gradient in the
// network parameters. The softargmax weighting over the inner grid is folded
// into the upstream signal fed to reverse mode.
inline std::pair<double, nnet::ParamGrads> network_objective_and_grad(
    const NoisyMatrix& data, const VariationalWeights& w, const nnet::GNetwork& net, Flavor flavor,
    const CovariateArrays* cov, const CellList& minibatch) {
  detail::check_shapes(data, w, flavor, cov);
  if (minibatch.empty()) throw EmptyBatch("network_objective_and_grad: empty minibatch");
  const int K = w.grid_size, K1 = K + 1;
  const Eigen::MatrixXd grid = detail::grid_inputs(K);
  double obj = 0.0;

  // Shared inner loop over (k1,k2) for one cell; g holds the (K+1)^3 outputs
  // for that cell's inputs, ups the matching per-row upstream gradient.
  const double log_k1 = std::log(static_cast<double>(K1));
  Eigen::ArrayXd diff(K1), act(K1), ex(K1);
  auto cell_terms = [&](Eigen::Index i, Eigen::Index j, const Eigen::VectorXd& g,
                        Eigen::VectorXd& ups) {
    const double x = data.x(i, j), tau = data.tau(i, j);
    auto pair_term = [&](int k1, int k2, double coef) {
      const int base = (k1 * K1 + k2) * K1;
      diff = x - g.segment(base, K1).array();
      act = -0.5 * tau * diff.square();
      const double m = act.maxCoeff();
      ex = (act - m).exp();
      const double se = ex.sum();
      obj += coef * (m + std::log(se) - log_k1);
      ups.segment(base, K1).array() += (coef * tau / se) * ex * diff;
    };
    if (flavor == Flavor::joint) {
      if (i == j) {
        for (int k = 0; k < K1; ++k) pair_term(k, k, w.row_weights(i, k));
      } else {
        for (int k1 = 0; k1 < K1; ++k1)
          for (int k2 = 0; k2 < K1; ++k2)
            pair_term(k1, k2, w.row_weights(i, k1) * w.row_weights(j, k2));
      }
    } else {
      for (int k1 = 0; k1 < K1; ++k1)
        for (int k2 = 0; k2 < K1; ++k2)
          pair_term(k1, k2, w.row_weights(i, k1) * w.col_weights(j, k2));
    }
  };

  if (flavor != Flavor::relative) {
    // All cells share the same grid inputs, so upstream signals accumulate
    // into one (K+1)^3 batch.
    const Eigen::VectorXd g = nnet::forward(net, grid);
    Eigen::VectorXd ups = Eigen::VectorXd::Zero(grid.rows());
    for (const auto& [i, j] : minibatch) cell_terms(i, j, g, ups);
    return {obj, nnet::grad_scalar_loss(net, grid, ups)};
  }

  const Eigen::Index qr = cov->row_cov.cols(), qc = cov->col_cov.cols();
  const int rows_per_cell = K1 * K1 * K1;
  const std::size_t block = std::max<std::size_t>(1, 32768 / rows_per_cell);
  Eigen::MatrixXd in(static_cast<Eigen::Index>(block) * rows_per_cell, qr + qc + 3);
  Eigen::VectorXd ups(in.rows());
  nnet::ParamGrads grads = nnet::zero_grads(net);
  std::size_t filled = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pending;
  auto flush = [&]() {
    if (pending.empty()) return;
    const Eigen::Index rows = static_cast<Eigen::Index>(pending.size()) * rows_per_cell;
    const Eigen::VectorXd g = nnet::forward(net, in.topRows(rows));
    ups.head(rows).setZero();
    for (std::size_t c = 0; c < pending.size(); ++c) {
      Eigen::VectorXd cell_ups = Eigen::VectorXd::Zero(rows_per_cell);
      cell_terms(pending[c].first, pending[c].second, g.segment(c * rows_per_cell, rows_per_cell),
                 cell_ups);
      ups.segment(c * rows_per_cell, rows_per_cell) = cell_ups;
    }
    nnet::accumulate(grads, nnet::grad_scalar_loss(net, in.topRows(rows), ups.head(rows)));
    pending.clear();
    filled = 0;
  };
  for (const auto& [i, j] : minibatch) {
    const Eigen::Index base = static_cast<Eigen::Index>(filled) * rows_per_cell;
    in.block(base, 0, rows_per_cell, qr).rowwise() = cov->row_cov.row(i);
    in.block(base, qr, rows_per_cell, qc).rowwise() = cov->col_cov.row(j);
    in.block(base, qr + qc, rows_per_cell, 3) = grid;
    pending.emplace_back(i, j);
    if (++filled == block) flush();
  }
  flush();
  return {obj, std::move(grads)};
}

struct FitConfig {
  int K = 10;
  int epochs = 500;
  int sgd_steps_per_epoch = 50;
  double lr = 0.01;
  std::uint64_t seed = 0;
  std::vector<int> hidden;  // empty -> {5,5} for separate/joint, {10,10} for relative
  int sgd_batch = 0;        // 0 = every cell each step
};

// Block-coordinate loop: row-weight sweep, column-weight sweep (separate and
// relative flavors), then Adam ascent on the network objective. The ELBO is
// recorded after each weight sweep.
inline EbmrFit fit(const NoisyMatrix& data, Flavor flavor, const CovariateArrays* cov,
                   const FitConfig& config) {
  if (config.K < 1) throw std::invalid_argument("fit: K must be >= 1");
  if (flavor == Flavor::joint && data.n() != data.p())
    throw NonSquareJoint("joint flavor requires a square matrix");
  if (flavor == Flavor::relative && !cov)
    throw FlavorMismatch("relative flavor requires covariates");
  if (flavor != Flavor::relative && cov)
    throw FlavorMismatch("covariates are only used by the relative flavor");

  EbmrFit fitres;
  fitres.flavor = flavor;
  CovariateArrays cov_std;
  const CovariateArrays* cov_ptr = nullptr;
  if (flavor == Flavor::relative) {
    if (cov->row_cov.rows() != data.n() || cov->col_cov.rows() != data.p())
      throw DimensionMismatch("fit: covariate row counts do not match data");
    fitres.scaler = fit_scaler(*cov);
    cov_std = fitres.scaler.apply(*cov);
    cov_ptr = &cov_std;
  }

  std::vector<int> hidden = config.hidden;
  if (hidden.empty()) hidden = (flavor == Flavor::relative) ? std::vector<int>{10, 10}
                                                            : std::vector<int>{5, 5};
  std::vector<int> dims;
  dims.push_back(flavor == Flavor::relative
                     ? static_cast<int>(cov->row_cov.cols() + cov->col_cov.cols()) + 3
                     : 3);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);

  Rng rng(config.seed);
  fitres.network = nnet::init_network(dims, rng.split(0));
  Rng batch_rng = rng.split(1);
  fitres.weights = VariationalWeights::uniform(data.n(), data.p(), config.K, flavor);
  auto adam = nnet::adam_init(fitres.network, config.lr);

  const CellList full = all_cells(data);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto table = detail::build_lse_table(data, fitres.network, flavor, cov_ptr, config.K);
    fitres.weights.row_weights = detail::update_rows_from_table(table, fitres.weights, flavor);
    fitres.elbo_trace.push_back(detail::elbo_from_table(table, fitres.weights, flavor));
    if (flavor != Flavor::joint) {
      fitres.weights.col_weights = detail::update_cols_from_table(table, fitres.weights);
      fitres.elbo_trace.push_back(detail::elbo_from_table(table, fitres.weights, flavor));
    }
    for (int step = 0; step < config.sgd_steps_per_epoch; ++step) {
      CellList batch;
      if (config.sgd_batch <= 0 || config.sgd_batch >= static_cast<int>(full.size())) {
        batch = full;
      } else {
        batch.reserve(config.sgd_batch);
        for (int b = 0; b < config.sgd_batch; ++b) {
          const auto idx = static_cast<std::size_t>(batch_rng.uniform() * full.size());
          batch.push_back(full[std::min(idx, full.size() - 1)]);
        }
      }
      auto [obj, grads] = network_objective_and_grad(data, fitres.weights, fitres.network, flavor,
                                                     cov_ptr, batch);
      (void)obj;
      nnet::scale(grads, -1.0);  // ascent
      nnet::adam_step(fitres.network, grads, adam);
    }
  }
  fitres.fitted = true;
  return fitres;
}

namespace detail {

inline int draw_categorical(const Eigen::VectorXd& w, Rng& rng) {
  const double u = rng.uniform() * w.sum();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    acc += w[k];
    if (u <= acc) return static_cast<int>(k);
  }
  return static_cast<int>(w.size() - 1);
}

// Network outputs over the inner grid for every cell, given per-row and
// per-column grid picks. For separate/joint these come from the shared cube.
struct CellOutputs {
  // out(i*p+j, k3) = g(inputs for cell (i,j) with chosen u_i, v_j, k3/K)
  Eigen::MatrixXd out;
};

inline CellOutputs cell_outputs(const EbmrFit& fit, const NoisyMatrix& data,
                                const CovariateArrays* cov_std, const std::vector<int>& ki,
                                const std::vector<int>& kj, const Eigen::VectorXd& cube) {
  const int K = fit.weights.grid_size, K1 = K + 1;
  const Eigen::Index n = data.n(), p = data.p();
  CellOutputs c;
  c.out.resize(n * p, K1);
  if (fit.flavor != Flavor::relative) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) {
        const int base = (ki[i] * K1 + kj[j]) * K1;
        c.out.row(i * p + j) = cube.segment(base, K1).transpose();
      }
    return c;
  }
  const Eigen::Index qr = cov_std->row_cov.cols(), qc = cov_std->col_cov.cols();
  Eigen::MatrixXd in(n * p * K1, qr + qc + 3);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      for (int k3 = 0; k3 < K1; ++k3, ++r) {
        in.block(r, 0, 1, qr) = cov_std->row_cov.row(i);
        in.block(r, qr, 1, qc) = cov_std->col_cov.row(j);
        in(r, qr + qc) = static_cast<double>(ki[i]) / K;
        in(r, qr + qc + 1) = static_cast<double>(kj[j]) / K;
        in(r, qr + qc + 2) = static_cast<double>(k3) / K;
      }
  const Eigen::VectorXd g = nnet::forward(fit.network, in);
  for (Eigen::Index cell = 0; cell < n * p; ++cell)
    c.out.row(cell) = g.segment(cell * K1, K1).transpose();
  return c;
}

inline void check_sample_inputs(const EbmrFit& fit, const NoisyMatrix& data,
                                const CovariateArrays* cov) {
  if (!fit.fitted) throw NotFitted("posterior sampling requires a fitted state");
  if (fit.weights.row_weights.rows() != data.n())
    throw DimensionMismatch("fit/data row count mismatch");
  if (fit.flavor != Flavor::joint && fit.weights.col_weights.rows() != data.p())
    throw DimensionMismatch("fit/data col count mismatch");
  if (fit.flavor == Flavor::relative && !cov)
    throw FlavorMismatch("relative flavor requires covariates for sampling");
}

}  // namespace detail

struct PosteriorSamples {
  std::vector<Eigen::MatrixXd> z;  // one n x p draw per sample
  Eigen::MatrixXd mean;
};

// Draws from the fitted variational surrogate: grid atoms for u_i (and v_j),
// then the closed-form conditional over the inner grid for each cell.
// Per-sample substreams split from `rng`, so results do not depend on
// evaluation order across samples.
inline PosteriorSamples surrogate_posterior_sample(const EbmrFit& fit, const NoisyMatrix& data,
                                                   int n_samples, Rng& rng,
                                                   const CovariateArrays* cov = nullptr) {
  detail::check_sample_inputs(fit, data, cov);
  const int K = fit.weights.grid_size, K1 = K + 1;
  const Eigen::Index n = data.n(), p = data.p();
  CovariateArrays cov_std;
  if (fit.flavor == Flavor::relative) cov_std = fit.scaler.apply(*cov);
  Eigen::VectorXd cube;
  if (fit.flavor != Flavor::relative)
    cube = nnet::forward(fit.network, detail::grid_inputs(K));

  PosteriorSamples res;
  res.mean = Eigen::MatrixXd::Zero(n, p);
  res.z.reserve(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    Rng rs = rng.split(static_cast<std::uint64_t>(s));
    std::vector<int> ki(n), kj(p);
    for (Eigen::Index i = 0; i < n; ++i)
      ki[i] = detail::draw_categorical(fit.weights.row_weights.row(i), rs);
    if (fit.flavor == Flavor::joint) {
      kj.assign(ki.begin(), ki.end());
    } else {
      for (Eigen::Index j = 0; j < p; ++j)
        kj[j] = detail::draw_categorical(fit.weights.col_weights.row(j), rs);
    }
    auto outs = detail::cell_outputs(fit, data, &cov_std, ki, kj, cube);
    Eigen::MatrixXd zs(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::VectorXd g = outs.out.row(i * p + j).transpose();
        Eigen::VectorXd logp(K1);
        for (int k3 = 0; k3 < K1; ++k3) {
          const double d = data.x(i, j) - g[k3];
          logp[k3] = -0.5 * data.tau(i, j) * d * d;
        }
        const int k3 = detail::draw_categorical(detail::softmax(logp), rs);
        zs(i, j) = g[k3];
      }
    res.mean += zs;
    res.z.push_back(std::move(zs));
  }
  res.mean /= static_cast<double>(n_samples);
  return res;
}

// Variance-reduced posterior mean: the inner-grid conditional expectation is
// taken exactly, only (u_i, v_j) are sampled.
inline Eigen::MatrixXd rao_blackwell_posterior_mean(const EbmrFit& fit, const NoisyMatrix& data,
                                                    int n_samples, Rng& rng,
                                                    const CovariateArrays* cov = nullptr) {
  detail::check_sample_inputs(fit, data, cov);
  const int K = fit.weights.grid_size, K1 = K + 1;
  const Eigen::Index n = data.n(), p = data.p();
  CovariateArrays cov_std;
  if (fit.flavor == Flavor::relative) cov_std = fit.scaler.apply(*cov);
  Eigen::VectorXd cube;
  if (fit.flavor != Flavor::relative)
    cube = nnet::forward(fit.network, detail::grid_inputs(K));

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, p);
  for (int s = 0; s < n_samples; ++s) {
    Rng rs = rng.split(static_cast<std::uint64_t>(s));
    std::vector<int> ki(n), kj(p);
    for (Eigen::Index i = 0; i < n; ++i)
      ki[i] = detail::draw_categorical(fit.weights.row_weights.row(i), rs);
    if (fit.flavor == Flavor::joint) {
      kj.assign(ki.begin(), ki.end());
    } else {
      for (Eigen::Index j = 0; j < p; ++j)
        kj[j] = detail::draw_categorical(fit.weights.col_weights.row(j), rs);
    }
    auto outs = detail::cell_outputs(fit, data, &cov_std, ki, kj, cube);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::VectorXd g = outs.out.row(i * p + j).transpose();
        Eigen::VectorXd logp(K1);
        for (int k3 = 0; k3 < K1; ++k3) {
          const double d = data.x(i, j) - g[k3];
          logp[k3] = -0.5 * data.tau(i, j) * d * d;
        }
        mean(i, j) += detail::softmax(logp).dot(g);
      }
  }
  return mean / static_cast<double>(n_samples);
}

inline nlohmann::json to_json(const EbmrFit& fit) {
  nlohmann::json j;
  j["flavor"] = flavor_name(fit.flavor);
  j["K"] = fit.weights.grid_size;
  j["network"] = nnet::to_json(fit.network);
  auto mat_to_json = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    return rows;
  };
  j["row_weights"] = mat_to_json(fit.weights.row_weights);
  j["col_weights"] = mat_to_json(fit.weights.col_weights);
  j["elbo_trace"] = fit.elbo_trace;
  if (fit.scaler.active) {
    auto vec = [](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    j["cov_scaler"] = {{"row_mean", vec(fit.scaler.row_mean)},
                       {"row_sd", vec(fit.scaler.row_sd)},
                       {"col_mean", vec(fit.scaler.col_mean)},
                       {"col_sd", vec(fit.scaler.col_sd)}};
  }
  return j;
}

inline EbmrFit fit_from_json(const nlohmann::json& j) {
  EbmrFit f;
  f.flavor = flavor_from_name(j.at("flavor").get<std::string>());
  f.weights.grid_size = j.at("K").get<int>();
  f.network = nnet::network_from_json(j.at("network"));
  auto mat_from_json = [](const nlohmann::json& rows) {
    if (rows.empty()) return Eigen::MatrixXd();
    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = rows[i].get<std::vector<double>>();
      m.row(i) = Eigen::Map<Eigen::VectorXd>(r.data(), r.size()).transpose();
    }
    return m;
  };
  f.weights.row_weights = mat_from_json(j.at("row_weights"));
  f.weights.col_weights = mat_from_json(j.at("col_weights"));
  f.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
  if (j.contains("cov_scaler")) {
    auto vec = [](const nlohmann::json& v) {
      auto s = v.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(s.data(), s.size()));
    };
    f.scaler.row_mean = vec(j["cov_scaler"]["row_mean"]);
    f.scaler.row_sd = vec(j["cov_scaler"]["row_sd"]);
    f.scaler.col_mean = vec(j["cov_scaler"]["col_mean"]);
    f.scaler.col_sd = vec(j["cov_scaler"]["col_sd"]);
    f.scaler.active = true;
  }
  f.fitted = true;
  return f;
}

}  // namespace symmeb::ebmr
