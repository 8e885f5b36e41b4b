#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "subnet_walk/network.hpp"

namespace subnet_walk::harness {

enum class ExperimentId {
  Lemma1,
  Lemma2,
  Theorem1,
  Theorem2,
  Theorem3,
  Corollary31,
  Lemma3,
  Theorem4,
  Theorem5,
  Theorem6,
};

const std::vector<ExperimentId>& all_experiments();
std::string to_string(ExperimentId id);
/// Throws UsageError listing the valid ids when `name` is unknown.
ExperimentId parse_experiment_id(std::string_view name);

/// Flat "key = value" document. Blank lines and lines starting with '#' are
/// ignored; later assignments override earlier ones.
class RawConfig {
 public:
  static RawConfig parse(std::string_view text, std::string_view origin = "<config>");
  static RawConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  /// Applies a "key=value" override.
  void set_assignment(std::string_view assignment);
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

enum class PriorKind { BernoulliP, Uniform };

/// Fully resolved settings of one experiment run. Which keys an experiment
/// accepts, and their defaults, depend on the experiment id.
struct ExperimentConfig {
  ExperimentId id = ExperimentId::Lemma2;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  // dropout and generalization threshold
  double retain_p = 0.8;
  double eps = 0.02;

  // training
  double learning_rate = 0.1;
  int batch_size = 128;
  int epochs = 10;
  std::vector<int> hidden{32, 32};
  Activation activation = Activation::Rectified;
  LossKind loss = LossKind::CrossEntropy;

  // synthetic data
  int n_per_class = 3000;
  int num_classes = 2;
  int dim = 2;
  double separation = 6.0;
  double label_noise = 0.0;

  // optional IDX data
  std::string mnist_images;
  std::string mnist_labels;
  int mnist_limit = 2000;

  // per-experiment sizes
  int n_masks = 1000;
  int masks_large = 4000;
  std::vector<int> exact_layers{2, 2, 1};
  int d = 1000;
  int n_inputs = 200;
  double delta = 0.05;
  PriorKind prior = PriorKind::BernoulliP;
  std::string flip_bits = "1";
  int n_neighbors = 100;
  int r_neighbors = 8;
  std::vector<double> eps_grid{0.0, 0.005, 0.01, 0.015, 0.02, 0.03, 0.05, 0.1};
  std::vector<int> widths{4, 8, 16, 32, 64};
  std::vector<int> depths{1, 2, 3};
  int max_pairs = 10000;

  bool uses_mnist() const { return !mnist_images.empty(); }
  TrainConfig train_config(std::uint64_t seed) const;
};

/// Validates `raw` against the schema of `id` and fills in defaults. Errors
/// are ConfigError with a "<experiment>.<key>" field path.
ExperimentConfig resolve_config(ExperimentId id, const RawConfig& raw);

/// Keys accepted by `id`, in schema order.
std::vector<std::string> config_keys(ExperimentId id);

/// Current value of every schema key as text (the config echo).
std::map<std::string, std::string> echo_config(const ExperimentConfig& cfg);

}  // namespace subnet_walk::harness
