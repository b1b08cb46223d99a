#pragma once

// Small dense feed-forward networks: affine layers with optional layer
// normalization and ReLU, batched forward/backward passes over column-major
// sample matrices, and Adam. Everything is templated on the scalar type;
// the rest of the library instantiates it with double.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vinslab/errors.hpp"
#include "vinslab/rng.hpp"

namespace vinslab {

enum class Activation { identity, relu };

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

inline constexpr double kLayerNormEpsilon = 1e-5;

/// One affine map, optionally followed by layer normalization, then an
/// elementwise activation: act(LN(W x + b)).
template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weight;  // out x in
  VectorX<Scalar> bias;
  bool layer_norm = false;
  VectorX<Scalar> gain;  // empty unless layer_norm
  VectorX<Scalar> offset;
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

template <typename Scalar>
struct Network {
  std::vector<DenseLayer<Scalar>> layers;

  Eigen::Index in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) {
      n += l.weight.size() + l.bias.size() + l.gain.size() + l.offset.size();
    }
    return n;
  }
};

using NetworkParams = Network<double>;
// Gradients share the parameter layout of the network they differentiate.
using Gradient = Network<double>;

/// Calls f on every parameter block of `first`, paired with the matching
/// blocks of `rest` (which must have the same layout).
template <typename F, typename First, typename... Rest>
void visit_blocks(F&& f, First& first, Rest&... rest) {
  for (std::size_t i = 0; i < first.layers.size(); ++i) {
    f(first.layers[i].weight, rest.layers[i].weight...);
    f(first.layers[i].bias, rest.layers[i].bias...);
    if (first.layers[i].layer_norm) {
      f(first.layers[i].gain, rest.layers[i].gain...);
      f(first.layers[i].offset, rest.layers[i].offset...);
    }
  }
}

template <typename Scalar>
bool same_shape(const Network<Scalar>& a, const Network<Scalar>& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
        x.bias.size() != y.bias.size() || x.layer_norm != y.layer_norm ||
        x.gain.size() != y.gain.size() || x.offset.size() != y.offset.size()) {
      return false;
    }
  }
  return true;
}

template <typename Scalar>
void require_same_shape(const Network<Scalar>& a, const Network<Scalar>& b, const char* what) {
  if (!same_shape(a, b)) throw ShapeError(std::string(what) + ": parameter layouts differ");
}

template <typename Scalar>
bool all_finite(const Network<Scalar>& net) {
  bool ok = true;
  visit_blocks([&](const auto& block) { ok = ok && block.allFinite(); }, net);
  return ok;
}

/// Checks that consecutive layers chain and that layer-norm blocks are sized.
template <typename Scalar>
void validate(const Network<Scalar>& net) {
  if (net.layers.empty()) throw ArchitectureError("network has no layers");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    if (l.bias.size() != l.out_dim()) throw ShapeError("bias size differs from layer output");
    if (l.layer_norm && (l.gain.size() != l.out_dim() || l.offset.size() != l.out_dim())) {
      throw ShapeError("layer-norm parameters differ from layer output");
    }
    if (i > 0 && net.layers[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError("layer " + std::to_string(i) + " does not chain with its predecessor");
    }
  }
}

template <typename Scalar>
Network<Scalar> zeros_like(const Network<Scalar>& net) {
  Network<Scalar> out = net;
  visit_blocks([](auto& block) { block.setZero(); }, out);
  return out;
}

/// acc += scale * other
template <typename Scalar>
void add_scaled(Network<Scalar>& acc, const Network<Scalar>& other, Scalar scale) {
  require_same_shape(acc, other, "add_scaled");
  visit_blocks([scale](auto& a, const auto& b) { a += scale * b; }, acc, other);
}

/// Layer sizes [in, h1, ..., out]; layer_norm[i] enables normalization after
/// affine layer i (may be empty for none). Hidden layers use ReLU, the output
/// layer is linear. Weights ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar = double>
Network<Scalar> init_params(const std::vector<int>& sizes, const std::vector<bool>& layer_norm,
                            std::uint64_t seed) {
  if (sizes.size() < 2) throw ArchitectureError("need at least input and output sizes");
  for (int s : sizes) {
    if (s <= 0) throw ArchitectureError("layer sizes must be positive");
  }
  const std::size_t n_layers = sizes.size() - 1;
  if (!layer_norm.empty() && layer_norm.size() != n_layers) {
    throw ArchitectureError("layer-norm flags must match the number of affine layers");
  }
  Rng rng = make_stream(seed, 0x1417);
  Network<Scalar> net;
  net.layers.resize(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto& l = net.layers[i];
    const int fan_in = sizes[i];
    const int fan_out = sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    l.weight.resize(fan_out, fan_in);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = static_cast<Scalar>(dist(rng));
    }
    l.bias = VectorX<Scalar>::Zero(fan_out);
    l.layer_norm = !layer_norm.empty() && layer_norm[i];
    if (l.layer_norm) {
      l.gain = VectorX<Scalar>::Ones(fan_out);
      l.offset = VectorX<Scalar>::Zero(fan_out);
    }
    l.activation = (i + 1 < n_layers) ? Activation::relu : Activation::identity;
  }
  return net;
}

/// Intermediates of one layer, kept for the backward pass.
template <typename Scalar>
struct LayerTrace {
  MatrixX<Scalar> input;
  MatrixX<Scalar> normalized;   // x-hat, layer-norm layers only
  RowVectorX<Scalar> inv_std;   // per sample, layer-norm layers only
  MatrixX<Scalar> pre_activation;
};

template <typename Scalar>
using ForwardTrace = std::vector<LayerTrace<Scalar>>;

/// Batched evaluation; each column of `input` is one sample.
template <typename Scalar>
MatrixX<Scalar> forward(const Network<Scalar>& net, const MatrixX<Scalar>& input,
                        ForwardTrace<Scalar>* trace = nullptr) {
  if (net.layers.empty()) throw ArchitectureError("network has no layers");
  if (input.rows() != net.in_dim()) {
    throw ShapeError("input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(net.in_dim()));
  }
  if (trace) trace->assign(net.layers.size(), {});
  MatrixX<Scalar> x = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    MatrixX<Scalar> z = l.weight * x;
    z.colwise() += l.bias;
    if (l.layer_norm) {
      const RowVectorX<Scalar> mean = z.colwise().mean();
      z.rowwise() -= mean;
      const RowVectorX<Scalar> var = z.array().square().colwise().mean().matrix();
      const RowVectorX<Scalar> inv_std =
          (var.array() + static_cast<Scalar>(kLayerNormEpsilon)).sqrt().inverse().matrix();
      MatrixX<Scalar> xhat = (z.array().rowwise() * inv_std.array()).matrix();
      z = ((xhat.array().colwise() * l.gain.array()).colwise() + l.offset.array()).matrix();
      if (trace) {
        (*trace)[i].normalized = std::move(xhat);
        (*trace)[i].inv_std = inv_std;
      }
    }
    if (trace) {
      (*trace)[i].input = std::move(x);
      (*trace)[i].pre_activation = z;
    }
    if (l.activation == Activation::relu) z = z.cwiseMax(Scalar(0));
    x = std::move(z);
  }
  return x;
}

template <typename Scalar>
VectorX<Scalar> forward(const Network<Scalar>& net, const VectorX<Scalar>& input) {
  return forward(net, MatrixX<Scalar>(input)).col(0);
}

/// Gradient of sum_j upstream(:, j) . output(:, j) with respect to the
/// parameters, from a trace recorded by forward().
template <typename Scalar>
Network<Scalar> backward_from_trace(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                    const MatrixX<Scalar>& upstream) {
  if (trace.size() != net.layers.size()) throw ShapeError("trace does not match network");
  if (upstream.rows() != net.out_dim() || upstream.cols() != trace.front().input.cols()) {
    throw ShapeError("upstream shape does not match network output");
  }
  Network<Scalar> grad = zeros_like(net);
  MatrixX<Scalar> delta = upstream;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& l = net.layers[k];
    const auto& t = trace[k];
    auto& g = grad.layers[k];
    if (l.activation == Activation::relu) {
      delta = delta.cwiseProduct((t.pre_activation.array() > Scalar(0)).template cast<Scalar>().matrix());
    }
    if (l.layer_norm) {
      g.gain = (delta.cwiseProduct(t.normalized)).rowwise().sum();
      g.offset = delta.rowwise().sum();
      const MatrixX<Scalar> dxhat = (delta.array().colwise() * l.gain.array()).matrix();
      const RowVectorX<Scalar> m1 = dxhat.colwise().mean();
      const RowVectorX<Scalar> m2 = dxhat.cwiseProduct(t.normalized).colwise().mean();
      MatrixX<Scalar> centered = dxhat;
      centered.rowwise() -= m1;
      centered -= (t.normalized.array().rowwise() * m2.array()).matrix();
      delta = (centered.array().rowwise() * t.inv_std.array()).matrix();
    }
    g.weight.noalias() = delta * t.input.transpose();
    g.bias = delta.rowwise().sum();
    if (k > 0) delta = (l.weight.transpose() * delta).eval();
  }
  return grad;
}

template <typename Scalar>
Network<Scalar> backward(const Network<Scalar>& net, const MatrixX<Scalar>& input,
                         const MatrixX<Scalar>& upstream) {
  ForwardTrace<Scalar> trace;
  forward(net, input, &trace);
  return backward_from_trace(net, trace, upstream);
}

template <typename Scalar>
Network<Scalar> backward(const Network<Scalar>& net, const VectorX<Scalar>& input,
                         const VectorX<Scalar>& upstream) {
  return backward(net, MatrixX<Scalar>(input), MatrixX<Scalar>(upstream));
}

template <typename Scalar>
struct AdamState {
  Network<Scalar> first_moment;
  Network<Scalar> second_moment;
  std::int64_t step = 0;
  Scalar learning_rate = Scalar(3e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

template <typename Scalar>
AdamState<Scalar> make_adam(const Network<Scalar>& params, Scalar learning_rate = Scalar(3e-4)) {
  AdamState<Scalar> opt;
  opt.first_moment = zeros_like(params);
  opt.second_moment = zeros_like(params);
  opt.learning_rate = learning_rate;
  return opt;
}

/// One bias-corrected Adam update. Throws NumericError (and changes nothing)
/// if the gradient has a non-finite entry.
template <typename Scalar>
std::pair<Network<Scalar>, AdamState<Scalar>> adam_step(const Network<Scalar>& params,
                                                        const Network<Scalar>& grad,
                                                        const AdamState<Scalar>& opt) {
  require_same_shape(params, grad, "adam_step");
  require_same_shape(params, opt.first_moment, "adam_step");
  if (!all_finite(grad)) throw NumericError("non-finite gradient entry; update aborted");
  Network<Scalar> next = params;
  AdamState<Scalar> state = opt;
  state.step += 1;
  const Scalar b1 = state.beta1;
  const Scalar b2 = state.beta2;
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  const Scalar lr = state.learning_rate;
  const Scalar eps = state.epsilon;
  visit_blocks(
      [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      },
      next, grad, state.first_moment, state.second_moment);
  return {std::move(next), std::move(state)};
}

/// target + tau * (online - target), elementwise.
template <typename Scalar>
Network<Scalar> polyak_mix(const Network<Scalar>& target, const Network<Scalar>& online, Scalar tau) {
  require_same_shape(target, online, "polyak_mix");
  Network<Scalar> out = target;
  visit_blocks([tau](auto& t, const auto& o) { t += tau * (o - t); }, out, online);
  return out;
}

template <typename Scalar>
bool operator==(const Network<Scalar>& a, const Network<Scalar>& b) {
  if (!same_shape(a, b)) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].activation != b.layers[i].activation) return false;
  }
  bool eq = true;
  visit_blocks([&](const auto& x, const auto& y) { eq = eq && (x.array() == y.array()).all(); }, a, b);
  return eq;
}

}  // namespace vinslab
