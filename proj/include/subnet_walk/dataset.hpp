#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "subnet_walk/error.hpp"
#include "subnet_walk/rng.hpp"

namespace subnet_walk {

enum class Split { Train, Test };

/// Labeled classification data; one example per row of `inputs`.
template <typename Scalar>
struct LabeledDataset {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix inputs;
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::Train;

  LabeledDataset() = default;
  LabeledDataset(Matrix x, std::vector<int> y, int classes, Split s)
      : inputs(std::move(x)), labels(std::move(y)), num_classes(classes), split(s) {
    validate();
  }

  std::size_t size() const noexcept { return labels.size(); }
  Eigen::Index dim() const noexcept { return inputs.cols(); }

  void validate() const {
    if (labels.empty()) throw DomainError("dataset is empty");
    if (static_cast<std::size_t>(inputs.rows()) != labels.size())
      throw ShapeError("dataset has " + std::to_string(inputs.rows()) +
                       " inputs but " + std::to_string(labels.size()) +
                       " labels");
    if (num_classes < 1) throw DomainError("num_classes must be >= 1");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw DomainError("label " + std::to_string(y) +
                          " outside [0, num_classes)");
    if (!inputs.allFinite()) throw NumericError("dataset input is not finite");
  }

  /// First `n` examples (or all of them when n exceeds the size).
  LabeledDataset head(std::size_t n) const {
    n = std::min(n, size());
    return LabeledDataset(inputs.topRows(static_cast<Eigen::Index>(n)),
                          std::vector<int>(labels.begin(), labels.begin() + static_cast<long>(n)),
                          num_classes, split);
  }

  LabeledDataset rows(const std::vector<std::size_t>& idx, Split s) const {
    Matrix x(static_cast<Eigen::Index>(idx.size()), inputs.cols());
    std::vector<int> y;
    y.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(idx[r]));
      y.push_back(labels[idx[r]]);
    }
    return LabeledDataset(std::move(x), std::move(y), num_classes, s);
  }
};

template <typename Scalar>
struct TrainTestSplit {
  LabeledDataset<Scalar> train;
  LabeledDataset<Scalar> test;
};

/// Randomly partitions `all` into a train half (ceil(n/2)) and a test half.
template <typename Scalar>
TrainTestSplit<Scalar> split_half(const LabeledDataset<Scalar>& all, SeededRng& rng) {
  if (all.size() < 2) throw DomainError("need at least two examples to split");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t n_train = (all.size() + 1) / 2;
  std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> te(order.begin() + static_cast<long>(n_train), order.end());
  return {all.rows(tr, Split::Train), all.rows(te, Split::Test)};
}

/// Isotropic unit-variance Gaussian classes; class c is centred at
/// separation * e_(c mod dim). The pooled points are split 50/50 at random.
template <typename Scalar = double>
TrainTestSplit<Scalar> make_gaussian_blobs(int n_per_class, int num_classes, int dim,
                                           Scalar separation, std::uint64_t seed) {
  if (dim < 1) throw DomainError("blob dimension must be >= 1");
  if (n_per_class < 1 || num_classes < 1)
    throw DomainError("blob counts must be >= 1");
  if (!(separation > Scalar(0))) throw DomainError("blob separation must be > 0");
  const long total = static_cast<long>(n_per_class) * num_classes;
  if (total < 2) throw DomainError("need at least two blob points to split");

  SeededRng rng(seed, 0x0b10b5);
  typename LabeledDataset<Scalar>::Matrix x(total, dim);
  std::vector<int> y(static_cast<std::size_t>(total));
  long row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (int j = 0; j < dim; ++j) x(row, j) = static_cast<Scalar>(rng.normal());
      x(row, c % dim) += separation;
      y[static_cast<std::size_t>(row)] = c;
    }
  }
  LabeledDataset<Scalar> all(std::move(x), std::move(y), num_classes, Split::Train);
  SeededRng split_rng = rng.derive(1);
  return split_half(all, split_rng);
}

/// Replaces the label of round(fraction * n) randomly chosen examples with a
/// different, uniformly chosen class.
template <typename Scalar>
LabeledDataset<Scalar> with_label_noise(LabeledDataset<Scalar> data, double fraction,
                                        SeededRng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DomainError("label noise fraction must lie in [0, 1]");
  if (data.num_classes < 2 || fraction == 0.0) return data;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_noisy =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  for (std::size_t i = 0; i < n_noisy; ++i) {
    int& y = data.labels[order[i]];
    const auto shift = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(data.num_classes - 1)));
    y = (y + shift) % data.num_classes;
  }
  return data;
}

}  // namespace subnet_walk
