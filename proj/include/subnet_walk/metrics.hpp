#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "subnet_walk/dataset.hpp"
#include "subnet_walk/error.hpp"
#include "subnet_walk/mask.hpp"
#include "subnet_walk/network.hpp"

namespace subnet_walk {

/// Generalization record of one subnetwork: C(f) = test loss - train loss.
struct ContributionRecord {
  Mask mask;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double score = 0.0;
};

struct EnsembleStats {
  double mse_logits = 0.0;
  double kl_softmax = 0.0;
  double match_rate = 0.0;
};

namespace detail {

template <typename Scalar, typename Derived>
void check_batch(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& inputs) {
  require_input(net, inputs.cols());
  if (!net.all_finite()) throw NumericError("network parameters are not finite");
  if (!inputs.allFinite()) throw NumericError("input is not finite");
}

/// Calls visit(t, logits) with the batch logits of every masked subnetwork,
/// in list order.
template <typename Scalar, typename Derived, typename Visit>
void for_each_subnetwork(const Network<Scalar>& net, std::span<const Mask> masks,
                         const Eigen::MatrixBase<Derived>& inputs, Visit&& visit) {
  check_batch(net, inputs);
  for (std::size_t t = 0; t < masks.size(); ++t)
    visit(t, forward_batch_unchecked(apply_mask(net, masks[t]), inputs));
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

/// Shannon entropy in nats; 0 * log 0 := 0.
template <typename Derived>
typename Derived::Scalar entropy_nats(const Eigen::MatrixBase<Derived>& probs) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    const Scalar q = probs(j);
    if (q > Scalar(0)) h -= q * std::log(q);
  }
  return h;
}

inline void require_masks(std::size_t n) {
  if (n == 0) throw DomainError("at least one mask is required");
}

}  // namespace detail

/// C(f) for the subnetwork theta (.) m, with full-pass mean losses.
template <typename Scalar>
ContributionRecord contribution_score(const Network<Scalar>& net, const Mask& m,
                                      const LabeledDataset<Scalar>& train,
                                      const LabeledDataset<Scalar>& test,
                                      LossKind kind = LossKind::CrossEntropy) {
  const Network<Scalar> sub = apply_mask(net, m);
  ContributionRecord r;
  r.mask = m;
  r.train_loss = static_cast<double>(mean_loss(sub, train, kind));
  r.test_loss = static_cast<double>(mean_loss(sub, test, kind));
  r.score = r.test_loss - r.train_loss;
  return r;
}

template <typename Scalar>
std::vector<ContributionRecord> contribution_scores(const Network<Scalar>& net,
                                                    std::span<const Mask> masks,
                                                    const LabeledDataset<Scalar>& train,
                                                    const LabeledDataset<Scalar>& test,
                                                    LossKind kind = LossKind::CrossEntropy) {
  std::vector<ContributionRecord> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(contribution_score(net, m, train, test, kind));
  return out;
}

/// Mean logits of the masked subnetworks for each row of `inputs`.
template <typename Scalar, typename Derived>
Matrix<Scalar> ensemble_average_batch(const Network<Scalar>& net, std::span<const Mask> masks,
                                      const Eigen::MatrixBase<Derived>& inputs) {
  detail::require_masks(masks.size());
  Matrix<Scalar> sum = Matrix<Scalar>::Zero(inputs.rows(), net.output_dim());
  detail::for_each_subnetwork(net, masks, inputs,
                              [&](std::size_t, const Matrix<Scalar>& z) { sum += z; });
  return sum / static_cast<Scalar>(masks.size());
}

template <typename Scalar>
Vector<Scalar> ensemble_average_output(const Network<Scalar>& net, std::span<const Mask> masks,
                                       const Vector<Scalar>& x) {
  return ensemble_average_batch(net, masks, x.transpose()).row(0).transpose();
}

/// sum_t w_t f_{theta (.) M_t}(x) for each row of `inputs`; used with exact
/// Bernoulli weights when all masks of a small network are enumerated.
template <typename Scalar, typename Derived>
Matrix<Scalar> weighted_ensemble_batch(const Network<Scalar>& net, std::span<const Mask> masks,
                                       std::span<const Scalar> weights,
                                       const Eigen::MatrixBase<Derived>& inputs) {
  detail::require_masks(masks.size());
  if (weights.size() != masks.size()) throw ShapeError("one weight per mask is required");
  Matrix<Scalar> sum = Matrix<Scalar>::Zero(inputs.rows(), net.output_dim());
  detail::for_each_subnetwork(net, masks, inputs, [&](std::size_t t, const Matrix<Scalar>& z) {
    sum += weights[t] * z;
  });
  return sum;
}

/// Probability of every mask in `masks` under Bernoulli(p)^d.
template <typename Scalar>
std::vector<Scalar> bernoulli_mask_weights(std::span<const Mask> masks, Scalar p) {
  std::vector<Scalar> w;
  w.reserve(masks.size());
  for (const auto& m : masks) {
    const auto on = static_cast<Scalar>(m.popcount());
    const auto off = static_cast<Scalar>(m.size()) - on;
    w.push_back(std::pow(p, on) * std::pow(Scalar(1) - p, off));
  }
  return w;
}

/// f_{p * theta}(x), the weight-scaled full model.
template <typename Scalar>
Vector<Scalar> scaled_output(const Network<Scalar>& net, Scalar p, const Vector<Scalar>& x) {
  if (!(p >= Scalar(0) && p <= Scalar(1))) throw DomainError("p must lie in [0, 1]");
  return forward(scale_parameters(net, p), x);
}

struct Lemma1Gap {
  std::vector<double> per_example;  // mean over output coordinates of |avg - scaled|
  double mean = 0.0;
};

namespace detail {

template <typename Scalar>
Lemma1Gap gap_against_scaled(const Network<Scalar>& net, Scalar p, const Matrix<Scalar>& avg,
                             const Matrix<Scalar>& inputs) {
  const Matrix<Scalar> scaled = forward_batch(scale_parameters(net, p), inputs);
  Lemma1Gap g;
  g.per_example.reserve(static_cast<std::size_t>(inputs.rows()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const double v = static_cast<double>((avg.row(i) - scaled.row(i)).cwiseAbs().mean());
    g.per_example.push_back(v);
    total += v;
  }
  g.mean = g.per_example.empty() ? 0.0 : total / static_cast<double>(g.per_example.size());
  return g;
}

template <typename Scalar>
void require_linear(const Network<Scalar>& net) {
  if (net.activation() != Activation::Linear)
    throw PreconditionError("the mask-average identity requires a linear-activation network");
}

}  // namespace detail

/// Per-example |mean_t f_{theta (.) M_t}(x) - f_{p theta}(x)| for a linear net.
template <typename Scalar>
Lemma1Gap lemma1_gap(const Network<Scalar>& net, std::span<const Mask> masks, Scalar p,
                     const Matrix<Scalar>& inputs) {
  detail::require_linear(net);
  return detail::gap_against_scaled(net, p, ensemble_average_batch(net, masks, inputs), inputs);
}

/// Same gap with explicit mask weights (e.g. the exact Bernoulli law).
template <typename Scalar>
Lemma1Gap lemma1_gap(const Network<Scalar>& net, std::span<const Mask> masks,
                     std::span<const Scalar> weights, Scalar p, const Matrix<Scalar>& inputs) {
  detail::require_linear(net);
  return detail::gap_against_scaled(net, p, weighted_ensemble_batch(net, masks, weights, inputs),
                                    inputs);
}

struct MaskedNormStats {
  double empirical_mean = 0.0;
  double theoretical = 0.0;
};

/// Monte Carlo mean of ||theta (.) M||^2 against p ||theta||^2.
template <typename Scalar>
MaskedNormStats masked_norm_stats(const Vector<Scalar>& theta, double p, std::size_t n_samples,
                                  SeededRng& rng) {
  if (n_samples < 1) throw DomainError("n_samples must be >= 1");
  const auto d = static_cast<std::size_t>(theta.size());
  std::vector<double> sq(d);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    sq[i] = static_cast<double>(theta(static_cast<Eigen::Index>(i)) *
                                theta(static_cast<Eigen::Index>(i)));
    norm2 += sq[i];
  }
  double total = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Mask m = sample_mask(d, p, rng);
    double v = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      if (m.test(i)) v += sq[i];
    total += v;
  }
  return {total / static_cast<double>(n_samples), p * norm2};
}

/// Full model against the mask-averaged logits: logit MSE, KL between the
/// softmax outputs (full || ensemble) and argmax agreement.
template <typename Scalar>
EnsembleStats ensemble_stats(const Network<Scalar>& net, std::span<const Mask> masks,
                             const LabeledDataset<Scalar>& data) {
  const Matrix<Scalar> avg = ensemble_average_batch(net, masks, data.inputs);
  const Matrix<Scalar> full = forward_batch(net, data.inputs);
  const Matrix<Scalar> p_full = detail::softmax_rows<Scalar>(full);
  const Eigen::Index n = full.rows();

  EnsembleStats s;
  s.mse_logits = static_cast<double>((full - avg).squaredNorm() /
                                     static_cast<Scalar>(full.size()));
  double kl = 0.0;
  std::size_t agree = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto zf = full.row(i);
    const auto za = avg.row(i);
    const Scalar lse_f = log_sum_exp<Scalar>(zf);
    const Scalar lse_a = log_sum_exp<Scalar>(za);
    Scalar row_kl(0);
    for (Eigen::Index j = 0; j < full.cols(); ++j) {
      const Scalar q = p_full(i, j);
      if (q > Scalar(0)) row_kl += q * ((zf(j) - lse_f) - (za(j) - lse_a));
    }
    kl += std::max(0.0, static_cast<double>(row_kl));
    Eigen::Index af = 0, aa = 0;
    zf.maxCoeff(&af);
    za.maxCoeff(&aa);
    agree += af == aa;
  }
  s.kl_softmax = kl / static_cast<double>(n);
  s.match_rate = static_cast<double>(agree) / static_cast<double>(n);
  return s;
}

struct PredictiveEntropy {
  double mean_softmax_entropy = 0.0;   // H of the mask-averaged softmax
  double per_mask_entropy_mean = 0.0;  // mean over masks of each softmax entropy
};

/// Predictive entropies (nats) for every row of `inputs`.
template <typename Scalar, typename Derived>
std::vector<PredictiveEntropy> predictive_entropy_batch(const Network<Scalar>& net,
                                                        std::span<const Mask> masks,
                                                        const Eigen::MatrixBase<Derived>& inputs) {
  detail::require_masks(masks.size());
  const Eigen::Index n = inputs.rows();
  Matrix<Scalar> prob_sum = Matrix<Scalar>::Zero(n, net.output_dim());
  std::vector<double> per_mask(static_cast<std::size_t>(n), 0.0);
  detail::for_each_subnetwork(net, masks, inputs, [&](std::size_t, const Matrix<Scalar>& z) {
    const Matrix<Scalar> probs = detail::softmax_rows<Scalar>(z);
    prob_sum += probs;
    for (Eigen::Index i = 0; i < n; ++i)
      per_mask[static_cast<std::size_t>(i)] += static_cast<double>(detail::entropy_nats(probs.row(i)));
  });
  const auto t = static_cast<double>(masks.size());
  std::vector<PredictiveEntropy> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector<Scalar> mean_probs = prob_sum.row(i).transpose() / static_cast<Scalar>(t);
    out[static_cast<std::size_t>(i)] = {static_cast<double>(detail::entropy_nats(mean_probs)),
                                        per_mask[static_cast<std::size_t>(i)] / t};
  }
  return out;
}

template <typename Scalar>
PredictiveEntropy predictive_entropy(const Network<Scalar>& net, std::span<const Mask> masks,
                                     const Vector<Scalar>& x) {
  return predictive_entropy_batch(net, masks, x.transpose()).front();
}

/// Entropy of a probability vector that is already averaged; exposed for
/// callers that assemble the ensemble distribution themselves.
template <typename Scalar>
double softmax_entropy(const Vector<Scalar>& probs) {
  return static_cast<double>(detail::entropy_nats(probs));
}

struct EntropySplit {
  std::optional<double> correct;    // absent when no input is correct
  std::optional<double> incorrect;  // absent when no input is incorrect
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
};

/// Mean predictive entropy over inputs the full (unmasked) model classifies
/// correctly versus incorrectly.
template <typename Scalar>
EntropySplit entropy_split_by_correctness(const Network<Scalar>& net, std::span<const Mask> masks,
                                          const LabeledDataset<Scalar>& data) {
  data.validate();
  const auto entropies = predictive_entropy_batch(net, masks, data.inputs);
  const auto pred = predict(net, data.inputs);
  double sum_c = 0.0, sum_i = 0.0;
  EntropySplit s;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (pred[i] == data.labels[i]) {
      sum_c += entropies[i].mean_softmax_entropy;
      ++s.n_correct;
    } else {
      sum_i += entropies[i].mean_softmax_entropy;
      ++s.n_incorrect;
    }
  }
  if (s.n_correct > 0) s.correct = sum_c / static_cast<double>(s.n_correct);
  if (s.n_incorrect > 0) s.incorrect = sum_i / static_cast<double>(s.n_incorrect);
  return s;
}

/// Variance of the raw logits across masks, averaged over output coordinates,
/// for each row of `inputs`. A proxy for the entropy of the raw subnetwork
/// output distribution, which is not directly estimable for continuous outputs.
template <typename Scalar, typename Derived>
std::vector<double> output_variance_batch(const Network<Scalar>& net, std::span<const Mask> masks,
                                          const Eigen::MatrixBase<Derived>& inputs) {
  detail::require_masks(masks.size());
  const Matrix<Scalar> mean = ensemble_average_batch(net, masks, inputs);
  Matrix<Scalar> sq = Matrix<Scalar>::Zero(inputs.rows(), net.output_dim());
  detail::for_each_subnetwork(net, masks, inputs, [&](std::size_t, const Matrix<Scalar>& z) {
    sq += (z - mean).cwiseAbs2();
  });
  const auto t = static_cast<Scalar>(masks.size());
  std::vector<double> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<double>(sq.row(i).mean() / t);
  return out;
}

}  // namespace subnet_walk
