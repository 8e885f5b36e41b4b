#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subnet_walk/dataset.hpp"
#include "subnet_walk/error.hpp"
#include "subnet_walk/mask.hpp"
#include "subnet_walk/metrics.hpp"
#include "subnet_walk/network.hpp"

namespace subnet_walk {

/// KL(Bern(q)^d || Bern(prior)^d) in nats, in closed form.
template <typename Scalar = double>
Scalar kl_bernoulli_masks(Scalar q, Scalar prior, std::size_t d) {
  if (!(q >= Scalar(0) && q <= Scalar(1)) || !(prior >= Scalar(0) && prior <= Scalar(1)))
    throw DomainError("Bernoulli parameters must lie in [0, 1]");
  if (q == prior) return Scalar(0);
  if (prior == Scalar(0) || prior == Scalar(1))
    throw InfiniteKlError("KL against a degenerate prior is infinite");
  Scalar per_bit(0);
  if (q > Scalar(0)) per_bit += q * std::log(q / prior);
  if (q < Scalar(1)) per_bit += (Scalar(1) - q) * std::log((Scalar(1) - q) / (Scalar(1) - prior));
  return static_cast<Scalar>(d) * per_bit;
}

struct PacBayesReport {
  double train_loss_mean = 0.0;
  double test_loss_mean = 0.0;
  double kl_nats = 0.0;
  double delta = 0.05;
  std::size_t n_train = 1;
  double slack = 0.0;  // sqrt((KL + ln(1/delta)) / (2n))
  double bound = 0.0;  // train_loss_mean + slack
  bool satisfied = false;
};

inline PacBayesReport pac_bayes_bound(double train_loss_mean, double test_loss_mean,
                                      double kl_nats, std::size_t n_train, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (n_train < 1) throw DomainError("n_train must be >= 1");
  if (!(kl_nats >= 0.0)) throw DomainError("KL must be non-negative");
  PacBayesReport r;
  r.train_loss_mean = train_loss_mean;
  r.test_loss_mean = test_loss_mean;
  r.kl_nats = kl_nats;
  r.delta = delta;
  r.n_train = n_train;
  r.slack = std::sqrt((kl_nats + std::log(1.0 / delta)) / (2.0 * static_cast<double>(n_train)));
  r.bound = train_loss_mean + r.slack;
  r.satisfied = test_loss_mean <= r.bound;
  return r;
}

/// PAC-Bayes bound for the dropout posterior, with the train/test means taken
/// over the sampled subnetworks.
inline PacBayesReport pac_bayes_bound(std::span<const ContributionRecord> records, double kl_nats,
                                      std::size_t n_train, double delta) {
  if (records.empty()) throw DomainError("pac_bayes_bound needs at least one record");
  double train = 0.0, test = 0.0;
  for (const auto& r : records) {
    train += r.train_loss;
    test += r.test_loss;
  }
  const auto n = static_cast<double>(records.size());
  return pac_bayes_bound(train / n, test / n, kl_nats, n_train, delta);
}

/// Fraction of records with score < eps, for every eps in an ascending grid.
inline std::vector<std::pair<double, double>> epsilon_decay(
    std::span<const ContributionRecord> records, std::span<const double> eps_grid) {
  if (eps_grid.empty()) throw DomainError("epsilon grid is empty");
  if (records.empty()) throw DomainError("epsilon_decay needs at least one record");
  if (!std::is_sorted(eps_grid.begin(), eps_grid.end()))
    throw DomainError("epsilon grid must be sorted ascending");
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& r : records) scores.push_back(r.score);
  std::sort(scores.begin(), scores.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(eps_grid.size());
  for (double eps : eps_grid) {
    const auto below = std::lower_bound(scores.begin(), scores.end(), eps) - scores.begin();
    out.emplace_back(eps, static_cast<double>(below) / static_cast<double>(scores.size()));
  }
  return out;
}

struct NeighborDensity {
  double fraction = 0.0;
  std::size_t n_with_neighbor = 0;
  std::size_t n_records = 0;
};

/// For each record, samples r distinct one-flip neighbours of its mask and
/// checks whether any of them scores below eps. Scoring stops at the first
/// generalizing neighbour.
template <typename Scalar>
NeighborDensity neighbor_density_check(const Network<Scalar>& net,
                                       std::span<const ContributionRecord> records,
                                       const LabeledDataset<Scalar>& train,
                                       const LabeledDataset<Scalar>& test, double eps,
                                       std::size_t r, SeededRng& rng,
                                       LossKind kind = LossKind::CrossEntropy) {
  if (r < 1) throw DomainError("neighbor sample size r must be >= 1");
  NeighborDensity out;
  out.n_records = records.size();
  for (const auto& rec : records) {
    const auto neighbours = flip_neighbors(rec.mask, 1, std::min(r, rec.mask.size()), rng);
    for (const auto& m : neighbours)
      if (contribution_score(net, m, train, test, kind).score < eps) {
        ++out.n_with_neighbor;
        break;
      }
  }
  out.fraction = out.n_records
                     ? static_cast<double>(out.n_with_neighbor) / static_cast<double>(out.n_records)
                     : 0.0;
  return out;
}

/// H(p) in bits, with 0 log 0 := 0.
template <typename Scalar = double>
Scalar binary_entropy(Scalar p) {
  if (!(p >= Scalar(0) && p <= Scalar(1))) throw DomainError("binary_entropy needs p in [0, 1]");
  Scalar h(0);
  if (p > Scalar(0)) h -= p * std::log2(p);
  if (p < Scalar(1)) h -= (Scalar(1) - p) * std::log2(Scalar(1) - p);
  return h;
}

struct Log2Binomial {
  double exact = 0.0;           // log2 C(d, k)
  double entropy_approx = 0.0;  // d * H(k / d)
};

/// log2 C(d, k) through log-gamma, alongside the d H(k/d) growth exponent.
inline Log2Binomial log2_binomial(std::uint64_t d, std::uint64_t k) {
  if (k > d) throw DomainError("log2_binomial needs 0 <= k <= d");
  Log2Binomial out;
  if (k != 0 && k != d) {
    const auto dd = static_cast<double>(d);
    const auto kk = static_cast<double>(k);
    out.exact = (std::lgamma(dd + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(dd - kk + 1.0)) /
                std::numbers::ln2;
  }
  out.entropy_approx = static_cast<double>(d) *
                       binary_entropy(static_cast<double>(k) / static_cast<double>(d));
  return out;
}

struct GrowthPoint {
  int width = 0;
  int depth = 0;
  std::size_t d = 0;
  std::size_t n_sampled = 0;
  std::size_t n_generalizing = 0;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::string> error;  // set when training diverged
};

/// Input, `depth` hidden layers of `width` units, output.
inline std::vector<int> mlp_sizes(int input, int width, int depth, int output) {
  std::vector<int> sizes{input};
  for (int i = 0; i < depth; ++i) sizes.push_back(width);
  sizes.push_back(output);
  return sizes;
}

/// Trains one MLP per (width, depth) cell and records the fraction of
/// n_masks Bernoulli(retain_p) subnetworks with score < eps. Each cell has its
/// own random stream keyed by (seed, width, depth); a diverged cell is recorded
/// with its error and does not stop the sweep. Output is ordered by
/// (width, depth).
template <typename Scalar>
std::vector<GrowthPoint> width_depth_sweep(std::span<const int> widths, std::span<const int> depths,
                                           const TrainConfig& base_cfg,
                                           const LabeledDataset<Scalar>& train,
                                           const LabeledDataset<Scalar>& test, double eps,
                                           std::size_t n_masks,
                                           Activation activation = Activation::Rectified) {
  if (widths.empty() || depths.empty()) throw DomainError("sweep grids must be non-empty");
  if (n_masks < 1) throw DomainError("n_masks must be >= 1");
  std::vector<int> w_sorted(widths.begin(), widths.end());
  std::vector<int> d_sorted(depths.begin(), depths.end());
  std::sort(w_sorted.begin(), w_sorted.end());
  std::sort(d_sorted.begin(), d_sorted.end());

  std::vector<GrowthPoint> out;
  for (int width : w_sorted) {
    for (int depth : d_sorted) {
      if (width < 1 || depth < 0) throw DomainError("widths must be >= 1 and depths >= 0");
      const auto tag = (static_cast<std::uint64_t>(width) << 20) ^ static_cast<std::uint64_t>(depth);
      const SeededRng cell(base_cfg.seed, 0x5eeb);
      SeededRng init_rng = cell.derive(tag * 3 + 0);
      const SeededRng train_rng = cell.derive(tag * 3 + 1);
      SeededRng mask_rng = cell.derive(tag * 3 + 2);

      const auto sizes = mlp_sizes(static_cast<int>(train.dim()), width, depth,
                                   train.num_classes);
      auto net = Network<Scalar>::initialized(sizes, activation, init_rng);
      GrowthPoint gp;
      gp.width = width;
      gp.depth = depth;
      gp.d = net.param_count();
      gp.seed = base_cfg.seed;
      try {
        net = subnet_walk::train(std::move(net), train, base_cfg, train_rng);
        for (std::size_t t = 0; t < n_masks; ++t) {
          const Mask m = sample_mask(gp.d, base_cfg.retain_p, mask_rng);
          if (contribution_score(net, m, train, test, base_cfg.loss).score < eps)
            ++gp.n_generalizing;
        }
        gp.n_sampled = n_masks;
        gp.fraction = static_cast<double>(gp.n_generalizing) / static_cast<double>(n_masks);
      } catch (const TrainingDiverged& e) {
        gp.error = e.what();
      }
      out.push_back(gp);
    }
  }
  return out;
}

}  // namespace subnet_walk
