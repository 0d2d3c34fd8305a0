#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "symmeb/errors.hpp"
#include "symmeb/rng.hpp"

namespace symmeb::nnet {

// Feed-forward ReLU network with a single linear output unit. Layer l maps
// activations a_{l-1} to relu(W_l a_{l-1} + b_l); the last layer is affine.
struct GNetwork {
  std::vector<int> layer_dims;            // [d_in, hidden..., 1]
  std::vector<Eigen::MatrixXd> weights;   // per layer, out x in
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return layer_dims.front(); }
  int n_layers() const { return static_cast<int>(weights.size()); }
};

struct ParamGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

inline ParamGrads zero_grads(const GNetwork& net) {
  ParamGrads g;
  for (const auto& w : net.weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : net.biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

inline void accumulate(ParamGrads& into, const ParamGrads& from) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += from.weights[l];
    into.biases[l] += from.biases[l];
  }
}

inline void scale(ParamGrads& g, double s) {
  for (auto& w : g.weights) w *= s;
  for (auto& b : g.biases) b *= s;
}

// Weights uniform on +-sqrt(6/fan_in), biases zero.
inline GNetwork init_network(const std::vector<int>& layer_dims, Rng rng) {
  if (layer_dims.size() < 2) throw std::invalid_argument("init_network: need at least two layer dims");
  for (int d : layer_dims)
    if (d < 1) throw std::invalid_argument("init_network: layer dims must be positive");
  if (layer_dims.back() != 1) throw std::invalid_argument("init_network: output dimension must be 1");
  GNetwork net;
  net.layer_dims = layer_dims;
  for (std::size_t l = 1; l < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l - 1], fan_out = layer_dims[l];
    const double bound = std::sqrt(6.0 / fan_in);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

namespace detail {

// Forward pass keeping pre-activations; acts[0] is the input batch.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;  // batch x dim, per layer boundary
  std::vector<Eigen::MatrixXd> pre;   // batch x out, hidden layers only
};

inline ForwardCache forward_cached(const GNetwork& net, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != net.input_dim())
    throw DimensionMismatch("forward: input width does not match network input dim");
  ForwardCache c;
  c.acts.push_back(inputs);
  const int L = net.n_layers();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = c.acts.back() * net.weights[l].transpose();
    z.rowwise() += net.biases[l].transpose();
    if (l + 1 < L) {
      c.pre.push_back(z);
      c.acts.push_back(z.cwiseMax(0.0));
    } else {
      c.acts.push_back(std::move(z));
    }
  }
  return c;
}

}  // namespace detail

inline Eigen::VectorXd forward(const GNetwork& net, const Eigen::MatrixXd& inputs) {
  return detail::forward_cached(net, inputs).acts.back().col(0);
}

inline double forward_one(const GNetwork& net, const Eigen::VectorXd& input) {
  return forward(net, input.transpose())[0];
}

// Exact reverse-mode gradient of sum_b upstream[b] * forward(net, inputs.row(b)).
// The ReLU subgradient at 0 is taken as 0.
inline ParamGrads grad_scalar_loss(const GNetwork& net, const Eigen::MatrixXd& inputs,
                                   const Eigen::VectorXd& upstream) {
  if (upstream.size() != inputs.rows())
    throw DimensionMismatch("grad_scalar_loss: upstream length must equal batch size");
  auto cache = detail::forward_cached(net, inputs);
  const int L = net.n_layers();
  ParamGrads g = zero_grads(net);
  Eigen::MatrixXd delta = upstream;  // batch x 1 at the output layer
  for (int l = L - 1; l >= 0; --l) {
    g.weights[l] = delta.transpose() * cache.acts[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = delta * net.weights[l];
      delta.array() *= (cache.pre[l - 1].array() > 0.0).cast<double>();
    }
  }
  return g;
}

struct AdamState {
  ParamGrads first_moment;
  ParamGrads second_moment;
  long step_count = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState adam_init(const GNetwork& net, double lr = 0.01, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8) {
  return AdamState{zero_grads(net), zero_grads(net), 0, lr, beta1, beta2, eps};
}

// Descent step; callers negate grads for ascent.
inline void adam_step(GNetwork& net, const ParamGrads& grads, AdamState& st) {
  st.step_count += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto update = [&](Eigen::MatrixXd& param, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                      const Eigen::MatrixXd& g) {
      m = st.beta1 * m + (1.0 - st.beta1) * g;
      v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
      param.array() -= st.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps);
    };
    update(net.weights[l], st.first_moment.weights[l], st.second_moment.weights[l],
           grads.weights[l]);
    Eigen::MatrixXd bm = st.first_moment.biases[l], bv = st.second_moment.biases[l],
                    bp = net.biases[l];
    update(bp, bm, bv, Eigen::MatrixXd(grads.biases[l]));
    net.biases[l] = bp;
    st.first_moment.biases[l] = bm;
    st.second_moment.biases[l] = bv;
  }
}

inline nlohmann::json to_json(const GNetwork& net) {
  nlohmann::json j;
  j["layer_dims"] = net.layer_dims;
  nlohmann::json ws = nlohmann::json::array(), bs = nlohmann::json::array();
  for (const auto& w : net.weights) {
    std::vector<double> flat(w.size());
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat[r * w.cols() + c] = w(r, c);
    ws.push_back(flat);
  }
  for (const auto& b : net.biases) bs.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j["weights"] = ws;
  j["biases"] = bs;
  return j;
}

inline GNetwork network_from_json(const nlohmann::json& j) {
  GNetwork net;
  net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  if (ws.size() + 1 != net.layer_dims.size() || bs.size() != ws.size())
    throw DataError("network_from_json: layer counts do not chain");
  for (std::size_t l = 0; l < ws.size(); ++l) {
    const int in = net.layer_dims[l], out = net.layer_dims[l + 1];
    auto flat = ws[l].get<std::vector<double>>();
    auto bias = bs[l].get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != in * out || static_cast<int>(bias.size()) != out)
      throw DataError("network_from_json: parameter block has wrong size");
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = flat[r * in + c];
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::Map<Eigen::VectorXd>(bias.data(), out));
  }
  return net;
}

}  // namespace symmeb::nnet
