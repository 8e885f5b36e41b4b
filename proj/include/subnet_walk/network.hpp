#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subnet_walk/dataset.hpp"
#include "subnet_walk/error.hpp"
#include "subnet_walk/mask.hpp"
#include "subnet_walk/rng.hpp"

namespace subnet_walk {

enum class Activation { Linear, Rectified };
enum class LossKind { CrossEntropy, SquaredError };

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
};

/// Dense feed-forward network f_theta.
///
/// The parameter vector theta is the concatenation, layer by layer, of the
/// weight matrix in row-major order followed by the bias vector. Mask bit i
/// addresses theta_i under this ordering.
template <typename Scalar>
class Network {
 public:
  Network() = default;
  Network(std::vector<Layer<Scalar>> layers, Activation activation)
      : layers_(std::move(layers)), activation_(activation) {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.bias.size() != layer.weight.rows())
        throw ShapeError("layer " + std::to_string(l) + ": bias length " +
                         std::to_string(layer.bias.size()) + " != output width " +
                         std::to_string(layer.weight.rows()));
      if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())
        throw ShapeError("layer " + std::to_string(l) + " expects input width " +
                         std::to_string(layer.weight.cols()) + " but previous layer emits " +
                         std::to_string(layers_[l - 1].weight.rows()));
    }
    if (!all_finite()) throw NumericError("network parameters are not finite");
  }

  /// Fan-based uniform init in +-sqrt(6 / (in + out)); biases start at zero.
  static Network initialized(std::span<const int> sizes, Activation activation,
                             SeededRng& rng) {
    if (sizes.size() < 2) throw ShapeError("need at least input and output sizes");
    std::vector<Layer<Scalar>> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int in = sizes[l];
      const int out = sizes[l + 1];
      if (in < 1 || out < 1) throw ShapeError("layer sizes must be positive");
      const double limit = std::sqrt(6.0 / (in + out));
      Layer<Scalar> layer{Matrix<Scalar>(out, in), Vector<Scalar>::Zero(out)};
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c)
          layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
      layers.push_back(std::move(layer));
    }
    return Network(std::move(layers), activation);
  }

  const std::vector<Layer<Scalar>>& layers() const noexcept { return layers_; }
  Activation activation() const noexcept { return activation_; }
  Eigen::Index input_dim() const { return layers_.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers_.back().weight.rows(); }

  std::size_t param_count() const noexcept {
    std::size_t d = 0;
    for (const auto& layer : layers_)
      d += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return d;
  }

  bool all_finite() const {
    for (const auto& layer : layers_)
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    return true;
  }

  /// Visits every parameter as f(index, value&) in canonical order.
  template <typename F>
  void for_each_parameter(F&& f) {
    std::size_t i = 0;
    for (auto& layer : layers_) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) f(i++, layer.weight(r, c));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) f(i++, layer.bias(r));
    }
  }

  template <typename F>
  void for_each_parameter(F&& f) const {
    std::size_t i = 0;
    for (const auto& layer : layers_) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) f(i++, layer.weight(r, c));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) f(i++, layer.bias(r));
    }
  }

  Vector<Scalar> flatten() const {
    Vector<Scalar> theta(static_cast<Eigen::Index>(param_count()));
    for_each_parameter([&](std::size_t i, const Scalar& v) {
      theta(static_cast<Eigen::Index>(i)) = v;
    });
    return theta;
  }

  /// Copy of this network with parameters replaced by `theta`.
  Network with_parameters(const Vector<Scalar>& theta) const {
    if (static_cast<std::size_t>(theta.size()) != param_count())
      throw ShapeError("parameter vector has length " + std::to_string(theta.size()) +
                       ", network has d=" + std::to_string(param_count()));
    Network out = *this;
    out.for_each_parameter([&](std::size_t i, Scalar& v) {
      v = theta(static_cast<Eigen::Index>(i));
    });
    return out;
  }

 private:
  std::vector<Layer<Scalar>> layers_;
  Activation activation_ = Activation::Linear;
};

/// theta (.) m: parameters at zero bits are set to zero.
template <typename Scalar>
Network<Scalar> apply_mask(const Network<Scalar>& net, const Mask& m) {
  if (m.size() != net.param_count())
    throw ShapeError("mask length " + std::to_string(m.size()) +
                     " != parameter count " + std::to_string(net.param_count()));
  Network<Scalar> out = net;
  out.for_each_parameter([&](std::size_t i, Scalar& v) {
    if (!m.test(i)) v = Scalar(0);
  });
  return out;
}

/// f_{p * theta}: every parameter multiplied by p.
template <typename Scalar>
Network<Scalar> scale_parameters(const Network<Scalar>& net, Scalar p) {
  Network<Scalar> out = net;
  out.for_each_parameter([&](std::size_t, Scalar& v) { v *= p; });
  return out;
}

namespace detail {

template <typename Scalar>
void require_input(const Network<Scalar>& net, Eigen::Index cols) {
  if (cols != net.input_dim())
    throw ShapeError("input has dimension " + std::to_string(cols) +
                     ", network expects " + std::to_string(net.input_dim()));
}

}  // namespace detail

/// Logits for a batch of inputs, one example per row. No finiteness check of
/// the parameters; callers that evaluate many masks validate once.
template <typename Scalar, typename Derived>
Matrix<Scalar> forward_batch_unchecked(const Network<Scalar>& net,
                                       const Eigen::MatrixBase<Derived>& inputs) {
  Matrix<Scalar> h = inputs;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix<Scalar> z = h * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (net.activation() == Activation::Rectified && l + 1 < layers.size())
      z = z.cwiseMax(Scalar(0));
    h = std::move(z);
  }
  return h;
}

template <typename Scalar, typename Derived>
Matrix<Scalar> forward_batch(const Network<Scalar>& net,
                             const Eigen::MatrixBase<Derived>& inputs) {
  detail::require_input(net, inputs.cols());
  if (!net.all_finite()) throw NumericError("network parameters are not finite");
  if (!inputs.allFinite()) throw NumericError("input is not finite");
  return forward_batch_unchecked(net, inputs);
}

template <typename Scalar, typename Derived>
Matrix<Scalar> forward_batch(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& inputs,
                             const Mask& mask) {
  return forward_batch(apply_mask(net, mask), inputs);
}

template <typename Scalar>
Vector<Scalar> forward(const Network<Scalar>& net, const Vector<Scalar>& x) {
  return forward_batch(net, x.transpose()).row(0).transpose();
}

template <typename Scalar>
Vector<Scalar> forward(const Network<Scalar>& net, const Vector<Scalar>& x, const Mask& mask) {
  return forward(apply_mask(net, mask), x);
}

// ---------------------------------------------------------------------------
// Losses

template <typename Scalar, typename Derived>
Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z) {
  const Scalar m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& z) {
  Vector<Scalar> e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Loss against a class index. SquaredError compares to the one-hot target.
template <typename Scalar>
Scalar loss(const Vector<Scalar>& logits, int target, LossKind kind) {
  if (target < 0 || target >= logits.size())
    throw DomainError("target class " + std::to_string(target) + " outside [0, " +
                      std::to_string(logits.size()) + ")");
  if (!logits.allFinite()) throw NumericError("logits are not finite");
  if (kind == LossKind::CrossEntropy)
    return log_sum_exp<Scalar>(logits) - logits(target);
  Vector<Scalar> diff = logits;
  diff(target) -= Scalar(1);
  return diff.squaredNorm() / static_cast<Scalar>(logits.size());
}

/// Mean squared difference to a real-valued target.
template <typename Scalar>
Scalar loss(const Vector<Scalar>& logits, const Vector<Scalar>& target) {
  if (target.size() != logits.size())
    throw ShapeError("target length does not match logits");
  if (!logits.allFinite()) throw NumericError("logits are not finite");
  return (logits - target).squaredNorm() / static_cast<Scalar>(logits.size());
}

/// Per-example losses for a batch of logits (rows) against class labels.
template <typename Scalar>
Vector<Scalar> batch_losses(const Matrix<Scalar>& logits, std::span<const int> labels,
                            LossKind kind) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw ShapeError("logit rows do not match label count");
  const Eigen::Index k = logits.cols();
  Vector<Scalar> out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw DomainError("label outside logit range");
    const auto row = logits.row(i);
    if (kind == LossKind::CrossEntropy) {
      out(i) = log_sum_exp<Scalar>(row) - row(y);
    } else {
      Scalar s(0);
      for (Eigen::Index j = 0; j < k; ++j) {
        const Scalar t = j == y ? Scalar(1) : Scalar(0);
        s += (row(j) - t) * (row(j) - t);
      }
      out(i) = s / static_cast<Scalar>(k);
    }
  }
  if (!out.allFinite()) throw NumericError("loss is not finite");
  return out;
}

/// d(mean loss)/d(logits) for a batch; rows already divided by batch size.
template <typename Scalar>
Matrix<Scalar> batch_loss_gradient(const Matrix<Scalar>& logits, std::span<const int> labels,
                                   LossKind kind) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  Matrix<Scalar> g(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (kind == LossKind::CrossEntropy) {
      const auto row = logits.row(i);
      const Scalar m = row.maxCoeff();
      auto e = (row.array() - m).exp();
      g.row(i) = (e / e.sum()).matrix();
      g(i, y) -= Scalar(1);
    } else {
      g.row(i) = logits.row(i) * (Scalar(2) / static_cast<Scalar>(k));
      g(i, y) -= Scalar(2) / static_cast<Scalar>(k);
    }
  }
  return g / static_cast<Scalar>(n);
}

template <typename Scalar>
struct LossGradient {
  Scalar loss;
  Vector<Scalar> gradient;  // canonical parameter order
};

/// Mean batch loss and its gradient with respect to every parameter.
template <typename Scalar, typename Derived>
LossGradient<Scalar> loss_and_gradient(const Network<Scalar>& net,
                                       const Eigen::MatrixBase<Derived>& inputs,
                                       std::span<const int> labels, LossKind kind) {
  detail::require_input(net, inputs.cols());
  const auto& layers = net.layers();
  const bool relu = net.activation() == Activation::Rectified;

  // activations[l] is the input to layer l; pre[l] its pre-activation output.
  std::vector<Matrix<Scalar>> activations;
  std::vector<Matrix<Scalar>> pre;
  activations.emplace_back(inputs);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix<Scalar> z = activations.back() * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    pre.push_back(z);
    if (relu && l + 1 < layers.size()) z = z.cwiseMax(Scalar(0));
    activations.push_back(std::move(z));
  }
  const Matrix<Scalar>& logits = activations.back();
  const Scalar mean_loss = batch_losses<Scalar>(logits, labels, kind).mean();

  std::vector<Layer<Scalar>> grads(layers.size());
  Matrix<Scalar> delta = batch_loss_gradient<Scalar>(logits, labels, kind);
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l].weight = delta.transpose() * activations[l];
    grads[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    delta = delta * layers[l].weight;
    if (relu) delta = delta.cwiseProduct((pre[l - 1].array() > Scalar(0)).matrix().template cast<Scalar>());
  }

  Vector<Scalar> flat(static_cast<Eigen::Index>(net.param_count()));
  Eigen::Index i = 0;
  for (const auto& g : grads) {
    for (Eigen::Index r = 0; r < g.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < g.weight.cols(); ++c) flat(i++) = g.weight(r, c);
    for (Eigen::Index r = 0; r < g.bias.size(); ++r) flat(i++) = g.bias(r);
  }
  return {mean_loss, std::move(flat)};
}

// ---------------------------------------------------------------------------
// Evaluation and training

/// Mean loss over a dataset. A positive `clip` caps every per-example loss.
template <typename Scalar>
Scalar mean_loss(const Network<Scalar>& net, const LabeledDataset<Scalar>& data, LossKind kind,
                 Scalar clip = Scalar(0)) {
  Vector<Scalar> losses = batch_losses<Scalar>(forward_batch(net, data.inputs), data.labels, kind);
  if (clip > Scalar(0)) losses = losses.cwiseMin(clip);
  return losses.mean();
}

template <typename Scalar>
std::vector<int> predict(const Network<Scalar>& net, const Matrix<Scalar>& inputs) {
  const Matrix<Scalar> logits = forward_batch(net, inputs);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

template <typename Scalar>
double accuracy(const Network<Scalar>& net, const LabeledDataset<Scalar>& data) {
  const auto pred = predict(net, data.inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct TrainConfig {
  double learning_rate = 0.1;
  int batch_size = 128;
  int epochs = 10;
  double retain_p = 0.8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::CrossEntropy;

  void validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be > 0");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (epochs < 0) throw DomainError("epochs must be >= 0");
    if (!(retain_p > 0.0 && retain_p <= 1.0))
      throw DomainError("retain_p must lie in (0, 1]");
  }
};

inline constexpr double kDivergenceThreshold = 1e6;

/// Called after every SGD step with the step index, the sampled mask and the
/// parameters before and after the update.
template <typename Scalar>
using StepObserver = std::function<void(std::size_t step, const Mask& mask,
                                        const Network<Scalar>& before,
                                        const Network<Scalar>& after)>;

/// Visiting order of the examples for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, SeededRng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return order;
}

/// Mini-batch SGD where every step walks to a fresh hypercube vertex: one mask
/// M ~ Bernoulli(retain_p)^d per step, used for the forward pass and applied
/// to the gradient, so dropped parameters are left untouched by that step.
///
/// Two child streams of `rng` are used: derive(1) orders the examples and
/// derive(2) draws masks. No 1/p rescaling is applied.
template <typename Scalar>
Network<Scalar> train(Network<Scalar> net, const LabeledDataset<Scalar>& data,
                      const TrainConfig& cfg, const SeededRng& rng,
                      const StepObserver<Scalar>& observer = {}) {
  cfg.validate();
  data.validate();
  detail::require_input(net, data.dim());
  if (data.num_classes > net.output_dim())
    throw ShapeError("network emits fewer logits than the dataset has classes");

  SeededRng order_rng = rng.derive(1);
  SeededRng mask_rng = rng.derive(2);
  const std::size_t d = net.param_count();
  const std::size_t n = data.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto lr = static_cast<Scalar>(cfg.learning_rate);

  Matrix<Scalar> xb;
  std::vector<int> yb;
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, order_rng);
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t stop = std::min(n, start + batch);
      xb.resize(static_cast<Eigen::Index>(stop - start), data.dim());
      yb.resize(stop - start);
      for (std::size_t r = start; r < stop; ++r) {
        xb.row(static_cast<Eigen::Index>(r - start)) =
            data.inputs.row(static_cast<Eigen::Index>(order[r]));
        yb[r - start] = data.labels[order[r]];
      }

      const Mask mask = sample_mask(d, cfg.retain_p, mask_rng);
      const Network<Scalar> masked = apply_mask(net, mask);
      LossGradient<Scalar> lg;
      try {
        lg = loss_and_gradient(masked, xb, yb, cfg.loss);
      } catch (const NumericError&) {
        throw TrainingDiverged(step, std::numeric_limits<double>::infinity());
      }
      if (!std::isfinite(static_cast<double>(lg.loss)) ||
          static_cast<double>(lg.loss) > kDivergenceThreshold || !lg.gradient.allFinite())
        throw TrainingDiverged(step, static_cast<double>(lg.loss));

      Vector<Scalar> theta = net.flatten();
      for (std::size_t i = 0; i < d; ++i)
        if (mask.test(i)) theta(static_cast<Eigen::Index>(i)) -= lr * lg.gradient(static_cast<Eigen::Index>(i));
      Network<Scalar> next = net.with_parameters(theta);
      if (!next.all_finite()) throw TrainingDiverged(step, static_cast<double>(lg.loss));
      if (observer) observer(step, mask, net, next);
      net = std::move(next);
    }
  }
  return net;
}

}  // namespace subnet_walk
