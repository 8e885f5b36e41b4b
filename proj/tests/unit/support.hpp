#pragma once

#include <doctest.h>

#include <vector>

#include "subnet_walk/dataset.hpp"
#include "subnet_walk/network.hpp"
#include "subnet_walk/rng.hpp"

namespace test_support {

using namespace subnet_walk;

inline Network<double> random_net(std::vector<int> sizes, Activation act, std::uint64_t seed) {
  SeededRng rng(seed, 77);
  return Network<double>::initialized(sizes, act, rng);
}

/// Network whose parameters are i.i.d. N(0, scale^2), biases included.
inline Network<double> gaussian_net(std::vector<int> sizes, Activation act, std::uint64_t seed,
                                    double scale = 0.5) {
  auto net = random_net(sizes, act, seed);
  SeededRng rng(seed, 78);
  net.for_each_parameter([&](std::size_t, double& v) { v = scale * rng.normal(); });
  return net;
}

inline Eigen::MatrixXd random_inputs(Eigen::Index n, Eigen::Index dim, std::uint64_t seed) {
  SeededRng rng(seed, 79);
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  return x;
}

/// Central differences of the mean loss, h = 1e-5, evaluated in long double
/// so that round-off stays far below the gradient of near-flat directions.
inline Eigen::VectorXd central_differences(const Network<double>& net, const Eigen::MatrixXd& x,
                                           const std::vector<int>& y, LossKind kind) {
  using LD = long double;
  std::vector<Layer<LD>> layers;
  for (const auto& l : net.layers()) layers.push_back({l.weight.cast<LD>(), l.bias.cast<LD>()});
  const Network<LD> wide(layers, net.activation());
  const Matrix<LD> xw = x.cast<LD>();
  const Vector<LD> theta = wide.flatten();
  const LD h = 1e-5L;
  Eigen::VectorXd out(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector<LD> tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    const LD fp = batch_losses<LD>(forward_batch(wide.with_parameters(tp), xw), y, kind).mean();
    const LD fm = batch_losses<LD>(forward_batch(wide.with_parameters(tm), xw), y, kind).mean();
    out(i) = static_cast<double>((fp - fm) / (2 * h));
  }
  return out;
}

/// Small trained classifier on two well-separated blobs.
struct TrainedBlobs {
  TrainTestSplit<double> data;
  Network<double> net;
};

inline TrainedBlobs trained_blobs(Activation act, std::uint64_t seed = 0, int n_per_class = 300) {
  auto data = make_gaussian_blobs<double>(n_per_class, 2, 2, 4.0, seed);
  TrainConfig cfg;
  cfg.seed = seed;
  const std::vector<int> sizes{2, 16, 2};
  auto net = random_net(sizes, act, seed);
  net = train(std::move(net), data.train, cfg, SeededRng(seed, 2));
  return {std::move(data), std::move(net)};
}

}  // namespace test_support
