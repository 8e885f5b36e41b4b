#include "subnet_walk/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <thread>

#include "subnet_walk/bounds.hpp"
#include "subnet_walk/dataset.hpp"
#include "subnet_walk/error.hpp"
#include "subnet_walk/graph.hpp"
#include "subnet_walk/idx.hpp"
#include "subnet_walk/metrics.hpp"
#include "subnet_walk/network.hpp"
#include "subnet_walk/stats.hpp"

namespace subnet_walk::harness {

namespace {

using json = nlohmann::json;
using Data = TrainTestSplit<double>;

// Stream ids of the per-seed random streams.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kTrainStream = 2,
  kMaskStream = 3,
  kAuxStream = 4,
  kNoiseStream = 5,
  kSplitStream = 6,
};

struct SeedResult {
  json metrics = json::object();
  std::vector<Table> tables;
  std::vector<Document> documents;
  bool pass = false;
};

struct Context {
  const ExperimentConfig& cfg;
  std::optional<LabeledDataset<double>> idx_data;  // loaded once when IDX paths are set
};

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string seed_file(const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return stem + "_seed" + std::to_string(seed) + "." + ext;
}

Data load_data(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  Data data = [&] {
    if (ctx.idx_data) {
      SeededRng rng(seed, kSplitStream);
      return split_half(*ctx.idx_data, rng);
    }
    return make_gaussian_blobs<double>(cfg.n_per_class, cfg.num_classes, cfg.dim, cfg.separation,
                                       seed);
  }();
  if (cfg.label_noise > 0.0) {
    SeededRng rng(seed, kNoiseStream);
    data.train = with_label_noise(std::move(data.train), cfg.label_noise, rng);
    data.test = with_label_noise(std::move(data.test), cfg.label_noise, rng);
  }
  return data;
}

Network<double> train_network(const ExperimentConfig& cfg, const Data& data, std::uint64_t seed,
                              Activation activation) {
  std::vector<int> sizes{static_cast<int>(data.train.dim())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(data.train.num_classes);
  SeededRng init(seed, kInitStream);
  auto net = Network<double>::initialized(sizes, activation, init);
  return train(std::move(net), data.train, cfg.train_config(seed), SeededRng(seed, kTrainStream));
}

std::vector<Mask> sample_masks(std::size_t d, double p, std::size_t n, SeededRng& rng) {
  std::vector<Mask> masks;
  masks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) masks.push_back(sample_mask(d, p, rng));
  return masks;
}

Table records_table(const std::string& name, const std::vector<ContributionRecord>& records) {
  Table t{name, columns::kContribution, {}};
  for (const auto& r : records)
    t.rows.push_back({r.mask.to_string(), format_real(r.train_loss), format_real(r.test_loss),
                      format_real(r.score)});
  return t;
}

/// Base mask followed by its flipped neighbours, scored.
std::vector<ContributionRecord> neighborhood_records(const ExperimentConfig& cfg,
                                                     const Network<double>& net, const Data& data,
                                                     SeededRng& rng) {
  const std::size_t d = net.param_count();
  const Mask base = sample_mask(d, cfg.retain_p, rng);
  std::vector<Mask> masks{base};
  const auto n = static_cast<std::size_t>(cfg.n_neighbors);
  auto add = [&](std::size_t k, std::size_t count) {
    if (count == 0) return;
    auto more = flip_neighbors(base, k, count, rng);
    masks.insert(masks.end(), more.begin(), more.end());
  };
  if (cfg.flip_bits == "1") {
    add(1, n);
  } else if (cfg.flip_bits == "2") {
    add(2, n);
  } else {
    add(1, (n + 1) / 2);
    add(2, n / 2);
  }
  return contribution_scores<double>(net, masks, data.train, data.test, cfg.loss);
}

// ---------------------------------------------------------------------------
// Per-seed bodies

SeedResult lemma2_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  SeededRng theta_rng(seed, kAuxStream);
  Eigen::VectorXd theta(cfg.d);
  for (int i = 0; i < cfg.d; ++i) theta(i) = theta_rng.normal();
  SeededRng mask_rng(seed, kMaskStream);
  const auto stats = masked_norm_stats(theta, cfg.retain_p, static_cast<std::size_t>(cfg.n_masks),
                                       mask_rng);
  SeedResult r;
  const double abs_error = std::abs(stats.empirical_mean - stats.theoretical);
  const double rel_error = abs_error / stats.theoretical;
  r.metrics = {{"empirical_mean", stats.empirical_mean},
               {"theoretical", stats.theoretical},
               {"abs_error", abs_error},
               {"rel_error", rel_error}};
  r.pass = rel_error < 0.01;
  return r;
}

SeedResult lemma1_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  SeedResult r;

  // Exact check: every mask of a tiny linear net, weighted by its Bernoulli law.
  SeededRng toy_rng(seed, kAuxStream);
  const auto toy = Network<double>::initialized(cfg.exact_layers, Activation::Linear, toy_rng);
  const std::size_t toy_d = toy.param_count();
  if (toy_d > 20)
    throw ConfigError("lemma1.exact_layers", "exact enumeration needs d <= 20, got d=" +
                                                  std::to_string(toy_d));
  std::vector<Mask> all;
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << toy_d); ++i)
    all.push_back(Mask::from_index(toy_d, i));
  const auto weights = bernoulli_mask_weights<double>(all, cfg.retain_p);
  Eigen::MatrixXd toy_inputs(16, toy.input_dim());
  for (Eigen::Index i = 0; i < toy_inputs.size(); ++i) toy_inputs(i) = toy_rng.normal();
  const double exact_gap =
      lemma1_gap<double>(toy, all, weights, cfg.retain_p, toy_inputs).mean;

  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, Activation::Linear);
  SeededRng mask_rng(seed, kMaskStream);
  const auto d = net.param_count();
  const auto small = sample_masks(d, cfg.retain_p, static_cast<std::size_t>(cfg.n_masks), mask_rng);
  const auto large =
      sample_masks(d, cfg.retain_p, static_cast<std::size_t>(cfg.masks_large), mask_rng);
  const auto gap_small = lemma1_gap<double>(net, small, cfg.retain_p, data.test.inputs);
  const auto gap_large = lemma1_gap<double>(net, large, cfg.retain_p, data.test.inputs);

  r.metrics = {{"exact_enumeration_d", toy_d},
               {"exact_gap", exact_gap},
               {"gap_n_masks", gap_small.mean},
               {"gap_masks_large", gap_large.mean},
               {"gap_ratio", gap_large.mean / gap_small.mean},
               {"test_accuracy", accuracy(net, data.test)}};
  Table t{seed_file("gaps", seed, "csv"), {"example", "gap_n_masks", "gap_masks_large"}, {}};
  for (std::size_t i = 0; i < gap_small.per_example.size(); ++i)
    t.rows.push_back({std::to_string(i), format_real(gap_small.per_example[i]),
                      format_real(gap_large.per_example[i])});
  r.tables.push_back(std::move(t));
  r.pass = exact_gap <= 1e-10 && gap_small.mean < 0.05;
  return r;
}

SeedResult theorem1_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  SeededRng mask_rng(seed, kMaskStream);
  const auto masks =
      sample_masks(net.param_count(), cfg.retain_p, static_cast<std::size_t>(cfg.n_masks), mask_rng);
  const auto s = ensemble_stats<double>(net, masks, data.test);
  SeedResult r;
  r.metrics = {{"mse_logits", s.mse_logits},
               {"kl_softmax", s.kl_softmax},
               {"match_rate", s.match_rate},
               {"test_accuracy", accuracy(net, data.test)}};
  r.pass = s.match_rate >= 0.99 && s.kl_softmax < 3.0;
  return r;
}

SeedResult theorem2_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  const auto d = net.param_count();
  const auto full = contribution_score(net, Mask::ones(d), data.train, data.test, cfg.loss);
  SeededRng mask_rng(seed, kMaskStream);
  const auto masks = sample_masks(d, cfg.retain_p, static_cast<std::size_t>(cfg.n_masks), mask_rng);
  const auto records = contribution_scores<double>(net, masks, data.train, data.test, cfg.loss);
  const double at_eps = epsilon_decay(records, std::vector<double>{cfg.eps}).front().second;
  const auto decay = epsilon_decay(records, cfg.eps_grid);
  SeededRng flip_rng(seed, kAuxStream);
  const auto density = neighbor_density_check(net, records, data.train, data.test, cfg.eps,
                                              static_cast<std::size_t>(cfg.r_neighbors), flip_rng,
                                              cfg.loss);
  SeedResult r;
  r.metrics = {{"full_model_score", full.score},
               {"fraction_generalizing", at_eps},
               {"neighbor_fraction", density.fraction},
               {"n_records", records.size()}};
  r.tables.push_back(records_table(seed_file("contributions", seed, "csv"), records));
  Table t{seed_file("epsilon_decay", seed, "csv"), {"eps", "fraction"}, {}};
  for (const auto& [eps, frac] : decay) t.rows.push_back({format_real(eps), format_real(frac)});
  r.tables.push_back(std::move(t));
  r.pass = full.score < cfg.eps / 2 && at_eps >= 0.95 && density.fraction == 1.0;
  return r;
}

SeedResult theorem3_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  SeededRng rng(seed, kMaskStream);
  const auto records = neighborhood_records(cfg, net, data, rng);
  const auto g = build_graph(records);
  const auto e = dirichlet_energy(g);
  const double mismatch = std::abs(e.raw - e.quadratic_form);
  const bool consistent = mismatch <= 1e-9 * std::max(1.0, std::abs(e.raw));
  SeedResult r;
  r.metrics = {{"energy_raw", e.raw},
               {"energy_per_edge", e.per_edge},
               {"energy_quadratic_form", e.quadratic_form},
               {"energy_mismatch", mismatch},
               {"n_nodes", e.n_nodes},
               {"n_edges", e.n_edges}};
  r.tables.push_back(records_table(seed_file("contributions", seed, "csv"), records));
  r.documents.push_back({seed_file("energy", seed, "json"),
                         {{"raw", e.raw},
                          {"per_edge", e.per_edge},
                          {"n_nodes", e.n_nodes},
                          {"n_edges", e.n_edges}}});
  r.pass = e.per_edge < 1e-3 && consistent;
  return r;
}

SeedResult corollary31_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  SeededRng rng(seed, kMaskStream);
  const auto records = neighborhood_records(cfg, net, data, rng);
  const auto g = build_graph(records);
  const auto c = generalizing_clusters(g, cfg.eps);
  std::size_t largest = 0;
  for (const auto& cl : c.clusters) largest = std::max(largest, cl.size());
  SeedResult r;
  r.metrics = {{"n_nodes", g.node_count()},
               {"n_edges", g.edge_count()},
               {"n_generalizing", c.n_generalizing},
               {"n_clusters", c.clusters.size()},
               {"largest_cluster", largest},
               {"largest_fraction", optional_json(c.largest_fraction)}};
  r.tables.push_back(records_table(seed_file("contributions", seed, "csv"), records));
  r.pass = c.largest_fraction && *c.largest_fraction == 1.0;
  return r;
}

SeedResult theorem5_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  SeededRng rng(seed, kMaskStream);
  const auto records = neighborhood_records(cfg, net, data, rng);
  const auto g = build_graph(records);
  const auto pinv = laplacian_pseudoinverse<double>(g);
  const auto res = resistance_score_correlation(g, pinv, seed, static_cast<std::size_t>(cfg.max_pairs));

  // Spot-check the pseudoinverse route against direct circuit analysis.
  double oracle_diff = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, res.pairs.size() / 32);
  for (std::size_t k = 0; k < res.pairs.size(); k += stride) {
    const auto& p = res.pairs[k];
    oracle_diff = std::max(oracle_diff, std::abs(p.rho - resistance_oracle(g, p.i, p.j)));
  }

  SeedResult r;
  r.metrics = {{"pearson_r", optional_json(res.pearson_r)},
               {"n_pairs", res.pairs.size()},
               {"n_nodes", g.node_count()},
               {"n_edges", g.edge_count()},
               {"oracle_max_abs_diff", oracle_diff},
               {"condition_estimate", pinv.condition_estimate}};
  if (pinv.warning) r.metrics["warning"] = *pinv.warning;
  Table t{seed_file("resistance", seed, "csv"), columns::kResistance, {}};
  for (const auto& p : res.pairs)
    t.rows.push_back({std::to_string(p.i), std::to_string(p.j), format_real(p.rho),
                      format_real(p.score_gap)});
  r.tables.push_back(std::move(t));
  r.pass = res.pearson_r && *res.pearson_r >= -0.2 && *res.pearson_r <= 0.3 && oracle_diff <= 1e-8;
  return r;
}

SeedResult lemma3_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  SeededRng mask_rng(seed, kMaskStream);
  const auto masks =
      sample_masks(net.param_count(), cfg.retain_p, static_cast<std::size_t>(cfg.n_masks), mask_rng);
  const auto inputs = data.test.head(static_cast<std::size_t>(cfg.n_inputs));
  const auto split = entropy_split_by_correctness(net, masks, inputs);
  const auto variance = output_variance_batch(net, masks, inputs.inputs);
  double mean_var = 0.0;
  for (double v : variance) mean_var += v;
  mean_var /= static_cast<double>(variance.size());

  SeedResult r;
  const bool ordered = split.correct && split.incorrect && *split.correct < *split.incorrect;
  r.metrics = {{"entropy_correct", optional_json(split.correct)},
               {"entropy_incorrect", optional_json(split.incorrect)},
               {"n_correct", split.n_correct},
               {"n_incorrect", split.n_incorrect},
               {"ordered", ordered},
               {"mean_output_variance", mean_var}};
  r.pass = ordered;
  return r;
}

SeedResult theorem4_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto net = train_network(cfg, data, seed, cfg.activation);
  const auto d = net.param_count();
  SeededRng mask_rng(seed, kMaskStream);
  const auto masks = sample_masks(d, cfg.retain_p, static_cast<std::size_t>(cfg.n_masks), mask_rng);
  const auto records = contribution_scores<double>(net, masks, data.train, data.test, cfg.loss);

  // Bounded variant: per-example losses clipped to [0, 1].
  double clipped_train = 0.0, clipped_test = 0.0;
  for (const auto& m : masks) {
    const auto sub = apply_mask(net, m);
    clipped_train += mean_loss(sub, data.train, cfg.loss, 1.0);
    clipped_test += mean_loss(sub, data.test, cfg.loss, 1.0);
  }
  clipped_train /= static_cast<double>(masks.size());
  clipped_test /= static_cast<double>(masks.size());

  const double kl_p = kl_bernoulli_masks(cfg.retain_p, cfg.retain_p, d);
  const double kl_uniform = kl_bernoulli_masks(cfg.retain_p, 0.5, d);
  const double kl = cfg.prior == PriorKind::BernoulliP ? kl_p : kl_uniform;
  const auto n_train = data.train.size();
  const auto raw = pac_bayes_bound(records, kl, n_train, cfg.delta);
  const auto normalized = pac_bayes_bound(clipped_train, clipped_test, kl, n_train, cfg.delta);
  const auto raw_uniform = pac_bayes_bound(records, kl_uniform, n_train, cfg.delta);

  auto report_json = [](const PacBayesReport& p) {
    return json{{"train_loss_mean", p.train_loss_mean}, {"test_loss_mean", p.test_loss_mean},
                {"kl_nats", p.kl_nats},                 {"delta", p.delta},
                {"n_train", p.n_train},                 {"slack", p.slack},
                {"bound", p.bound},                     {"satisfied", p.satisfied}};
  };

  SeedResult r;
  r.metrics = {{"d", d},
               {"kl_nats", kl},
               {"kl_prior_p", kl_p},
               {"kl_prior_uniform", kl_uniform},
               {"train_loss_mean", raw.train_loss_mean},
               {"test_loss_mean", raw.test_loss_mean},
               {"bound", raw.bound},
               {"bound_prior_uniform", raw_uniform.bound},
               {"normalized_bound", normalized.bound},
               {"normalized_test_loss_mean", normalized.test_loss_mean},
               {"satisfied", raw.satisfied}};
  r.documents.push_back(
      {seed_file("pac_bayes", seed, "json"),
       {{"prior", cfg.prior == PriorKind::BernoulliP ? "bernoulli_p" : "uniform"},
        {"raw", report_json(raw)},
        {"normalized", report_json(normalized)}}});
  r.tables.push_back(records_table(seed_file("contributions", seed, "csv"), records));
  const double expected_kl =
      cfg.prior == PriorKind::BernoulliP ? 0.0 : kl_bernoulli_masks(cfg.retain_p, 0.5, d);
  r.pass = kl == expected_kl && raw.satisfied;
  return r;
}

SeedResult theorem6_seed(const Context& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const Data data = load_data(ctx, seed);
  const auto points = width_depth_sweep<double>(cfg.widths, cfg.depths, cfg.train_config(seed),
                                                data.train, data.test, cfg.eps,
                                                static_cast<std::size_t>(cfg.n_masks), cfg.activation);
  SeedResult r;
  Table t{seed_file("sweep", seed, "csv"), columns::kSweep, {}};
  bool monotone = true, saturated = true;
  std::size_t diverged = 0;
  const int max_width = *std::max_element(cfg.widths.begin(), cfg.widths.end());
  for (int depth : cfg.depths) {
    double prev = -1.0;
    for (const auto& p : points) {
      if (p.depth != depth) continue;
      if (p.error) {
        ++diverged;
        monotone = false;
        continue;
      }
      if (p.fraction < prev) monotone = false;
      prev = p.fraction;
      if (p.width == max_width && p.fraction != 1.0) saturated = false;
    }
  }
  json cells = json::array();
  for (const auto& p : points) {
    t.rows.push_back({std::to_string(p.width), std::to_string(p.depth), std::to_string(p.d),
                      std::to_string(p.n_sampled), std::to_string(p.n_generalizing),
                      p.error ? std::string() : format_real(p.fraction), std::to_string(p.seed)});
    cells.push_back({{"width", p.width},
                     {"depth", p.depth},
                     {"fraction", p.error ? json(nullptr) : json(p.fraction)},
                     {"error", p.error ? json(*p.error) : json(nullptr)}});
  }
  r.tables.push_back(std::move(t));
  double total = 0.0;
  for (const auto& p : points) total += p.error ? 0.0 : p.fraction;
  r.metrics = {{"monotone_in_width", monotone},
               {"saturated_at_max_width", saturated},
               {"n_diverged", diverged},
               {"mean_fraction", total / static_cast<double>(points.size())},
               {"cells", cells}};
  r.pass = monotone && saturated && diverged == 0;
  return r;
}

std::function<SeedResult(const Context&, std::uint64_t)> seed_body(ExperimentId id) {
  switch (id) {
    case ExperimentId::Lemma1: return lemma1_seed;
    case ExperimentId::Lemma2: return lemma2_seed;
    case ExperimentId::Theorem1: return theorem1_seed;
    case ExperimentId::Theorem2: return theorem2_seed;
    case ExperimentId::Theorem3: return theorem3_seed;
    case ExperimentId::Corollary31: return corollary31_seed;
    case ExperimentId::Lemma3: return lemma3_seed;
    case ExperimentId::Theorem4: return theorem4_seed;
    case ExperimentId::Theorem5: return theorem5_seed;
    case ExperimentId::Theorem6: return theorem6_seed;
  }
  throw UsageError("unhandled experiment id");
}

std::string claim_of(ExperimentId id) {
  switch (id) {
    case ExperimentId::Lemma1:
      return "linear nets: the mask-averaged output equals the output of the p-scaled network";
    case ExperimentId::Lemma2:
      return "the expected squared norm of masked parameters is p times the full squared norm";
    case ExperimentId::Theorem1:
      return "the full model approximates the average prediction of its dropout subnetworks";
    case ExperimentId::Theorem2:
      return "generalizing subnetworks are abundant and every one has a generalizing Hamming-1 "
             "neighbour";
    case ExperimentId::Theorem3:
      return "the contribution score is smooth on the subnetwork graph (low Dirichlet energy)";
    case ExperimentId::Corollary31:
      return "generalizing subnetworks form a single connected cluster";
    case ExperimentId::Lemma3:
      return "mask-ensemble predictive entropy is lower on correctly classified inputs";
    case ExperimentId::Theorem4:
      return "the dropout posterior satisfies the PAC-Bayes bound";
    case ExperimentId::Theorem5:
      return "effective resistance is only weakly related to contribution-score gaps";
    case ExperimentId::Theorem6:
      return "the share of generalizing subnetworks grows with width and saturates";
  }
  return {};
}

std::vector<std::string> notes_of(ExperimentId id) {
  std::vector<std::string> notes{"aggregates are computed over per-seed values"};
  switch (id) {
    case ExperimentId::Lemma1:
      notes.push_back("pass: exact_gap <= 1e-10 and gap_n_masks < 0.05 for every seed, and "
                      "median(gap_masks_large) <= 0.5 * median(gap_n_masks)");
      break;
    case ExperimentId::Theorem2:
      notes.push_back("neighbor_fraction is a Monte Carlo surrogate over r sampled one-flip "
                      "neighbours");
      break;
    case ExperimentId::Theorem3:
      notes.push_back("energy is reported both raw and per edge");
      break;
    case ExperimentId::Lemma3:
      notes.push_back("correctness is judged by the full (unmasked) model");
      notes.push_back("label noise is injected into both train and test labels");
      notes.push_back("mean_output_variance is a proxy for the entropy of the raw outputs");
      notes.push_back("pass: entropy_correct < entropy_incorrect in at least 80% of seeds");
      break;
    case ExperimentId::Theorem4:
      notes.push_back("raw bound uses unbounded cross-entropy; normalized bound clips each "
                      "per-example loss to [0, 1]");
      notes.push_back("KL is exact between product Bernoulli distributions");
      break;
    case ExperimentId::Theorem5:
      notes.push_back("pairs across components are absent from the resistance table");
      break;
    default:
      break;
  }
  return notes;
}

void aggregate_metrics(ExperimentReport& report) {
  if (report.per_seed.empty()) return;
  for (const auto& [name, value] : report.per_seed.front().items()) {
    if (name == "seed" || !value.is_number()) continue;
    std::vector<double> values;
    for (const auto& m : report.per_seed)
      if (m.contains(name) && m[name].is_number()) values.push_back(m[name].get<double>());
    if (!values.empty()) report.aggregates[name] = aggregate_seeds(values);
  }
  // Metrics that are null in the first seed but numeric elsewhere.
  for (const auto& m : report.per_seed)
    for (const auto& [name, value] : m.items()) {
      if (name == "seed" || !value.is_number() || report.aggregates.count(name)) continue;
      std::vector<double> values;
      for (const auto& other : report.per_seed)
        if (other.contains(name) && other[name].is_number())
          values.push_back(other[name].get<double>());
      report.aggregates[name] = aggregate_seeds(values);
    }
}

}  // namespace

std::size_t worker_threads() {
  if (const char* env = std::getenv("SUBNET_WALK_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  Context ctx{cfg, std::nullopt};
  if (cfg.uses_mnist())
    ctx.idx_data = load_idx(cfg.mnist_images, cfg.mnist_labels,
                            static_cast<std::size_t>(cfg.mnist_limit));

  const auto body = seed_body(cfg.id);
  const std::size_t n = cfg.seeds.size();
  std::vector<std::optional<SeedResult>> results(n);
  std::vector<std::string> failures(n);
  std::vector<std::exception_ptr> errors(n);

  auto run_one = [&](std::size_t k) {
    try {
      results[k] = body(ctx, cfg.seeds[k]);
    } catch (const TrainingDiverged& e) {
      failures[k] = e.what();
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) run_one(k);
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  report.experiment_id = to_string(cfg.id);
  report.claim = claim_of(cfg.id);
  report.config_echo = echo_config(cfg);
  report.notes = notes_of(cfg.id);

  bool all_pass = true;
  for (std::size_t k = 0; k < n; ++k) {
    json m;
    if (results[k]) {
      m = results[k]->metrics;
      m["pass"] = results[k]->pass;
      all_pass = all_pass && results[k]->pass;
      for (auto& t : results[k]->tables) report.tables.push_back(std::move(t));
      for (auto& d : results[k]->documents) report.documents.push_back(std::move(d));
    } else {
      m = {{"pass", false}, {"training_error", failures[k]}};
      all_pass = false;
    }
    m["seed"] = cfg.seeds[k];
    report.per_seed.push_back(std::move(m));
  }
  aggregate_metrics(report);

  // Cross-seed predicates.
  if (cfg.id == ExperimentId::Lemma1 && all_pass) {
    std::vector<double> small, large;
    for (const auto& m : report.per_seed) {
      small.push_back(m["gap_n_masks"].get<double>());
      large.push_back(m["gap_masks_large"].get<double>());
    }
    all_pass = median(large) <= 0.5 * median(small);
  }
  if (cfg.id == ExperimentId::Lemma3) {
    std::size_t ordered = 0;
    for (const auto& m : report.per_seed) ordered += m.value("ordered", false) ? 1 : 0;
    all_pass = static_cast<double>(ordered) >= std::ceil(0.8 * static_cast<double>(n));
  }
  report.pass = all_pass;
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                const std::set<Format>& formats) {
  auto report = run_experiment(cfg);
  emit_report(report, out_dir, formats);
  return report;
}

}  // namespace subnet_walk::harness
