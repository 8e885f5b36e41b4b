// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
// Usage: acceptance <output-dir>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "subnet_walk/bounds.hpp"
#include "subnet_walk/graph.hpp"
#include "subnet_walk/harness/experiments.hpp"
#include "subnet_walk/network.hpp"

using namespace subnet_walk;
using namespace subnet_walk::harness;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path g_out;

struct Outcome {
  bool pass = false;
  std::string observed;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

ExperimentReport run(ExperimentId id, const fs::path& dir, const RawConfig& raw = {}) {
  return run_experiment(resolve_config(id, raw), dir, {Format::Csv, Format::Json});
}

ExperimentReport run(ExperimentId id) { return run(id, g_out / to_string(id)); }

double max_of(const ExperimentReport& r, const std::string& key) {
  double m = -INFINITY;
  for (const auto& s : r.per_seed) m = std::max(m, s.at(key).get<double>());
  return m;
}

double min_of(const ExperimentReport& r, const std::string& key) {
  double m = INFINITY;
  for (const auto& s : r.per_seed) m = std::min(m, s.at(key).get<double>());
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Graphs with at most 64 nodes used by the resistance and numerics checks.
SubnetGraph graph_of(std::size_t n, std::vector<Edge> edges) {
  std::vector<SubnetNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i].mask = Mask::from_index(64, i);
  return SubnetGraph(std::move(nodes), std::move(edges));
}

SubnetGraph cube3() {
  std::vector<ContributionRecord> recs;
  for (std::uint64_t i = 0; i < 8; ++i) recs.push_back({Mask::from_index(3, i), 0, 0, 0});
  return build_graph(recs);
}

std::vector<SubnetGraph> small_graphs() {
  std::vector<SubnetGraph> out{cube3()};
  std::vector<Edge> path, cycle;
  for (std::size_t i = 0; i + 1 < 12; ++i) path.emplace_back(i, i + 1);
  for (std::size_t i = 0; i < 9; ++i) cycle.emplace_back(i, (i + 1) % 9);
  out.push_back(graph_of(12, path));
  out.push_back(graph_of(9, cycle));
  // 6-cube: 64 nodes.
  std::vector<ContributionRecord> hc;
  for (std::uint64_t i = 0; i < 64; ++i) hc.push_back({Mask::from_index(6, i), 0, 0, 0});
  out.push_back(build_graph(hc));
  SeededRng rng(2024, 1);
  for (std::size_t n : {10, 24, 40, 64}) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.bernoulli(4.0 / static_cast<double>(n))) e.emplace_back(i, j);
    out.push_back(graph_of(n, e));
  }
  // Base mask plus one-flip neighbours: a star, as in the trained experiments.
  const Mask base = sample_mask(500, 0.8, rng);
  std::vector<ContributionRecord> star{{base, 0, 0, 0}};
  for (const auto& m : flip_neighbors(base, 1, 40, rng)) star.push_back({m, 0, 0, rng.uniform()});
  out.push_back(build_graph(star));
  return out;
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run(ExperimentId::Lemma2);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double worst = max_of(r, "rel_error");
  return {r.pass && worst < 0.01 && r.per_seed.size() == 5,
          fmt("max rel_error=%.3g over %zu seeds, %.2fs", worst, r.per_seed.size(), secs)};
}

Outcome criterion2() {
  const auto r = run(ExperimentId::Lemma1);
  std::vector<double> small, large;
  for (const auto& s : r.per_seed) {
    small.push_back(s.at("gap_n_masks").get<double>());
    large.push_back(s.at("gap_masks_large").get<double>());
  }
  const double exact = max_of(r, "exact_gap");
  const double d = max_of(r, "exact_enumeration_d");
  const double ratio = median(large) / median(small);
  const bool ok = r.pass && exact <= 1e-10 && d <= 12 && max_of(r, "gap_n_masks") < 0.05 &&
                  ratio <= 0.5;
  return {ok, fmt("exact d=%g gap=%.3g; max MC gap=%.4f; median ratio 4000/1000=%.3f", d, exact,
                  max_of(r, "gap_n_masks"), ratio)};
}

Outcome criterion3() {
  const auto r = run(ExperimentId::Theorem1);
  return {r.pass && min_of(r, "match_rate") >= 0.99 && max_of(r, "kl_softmax") < 3.0,
          fmt("min match_rate=%.4f, max kl_softmax=%.4g", min_of(r, "match_rate"),
              max_of(r, "kl_softmax"))};
}

Outcome criterion4() {
  const auto r = run(ExperimentId::Theorem2);
  const double full = max_of(r, "full_model_score");
  const bool ok = r.pass && full < 0.01 && min_of(r, "fraction_generalizing") >= 0.95 &&
                  min_of(r, "neighbor_fraction") == 1.0;
  return {ok, fmt("max full-model C=%.4g, min fraction=%.3f, min neighbor fraction=%.3f", full,
                  min_of(r, "fraction_generalizing"), min_of(r, "neighbor_fraction"))};
}

Outcome criterion5() {
  const auto e = run(ExperimentId::Theorem3);
  const auto c = run(ExperimentId::Corollary31);
  bool fractions = true;
  for (const auto& s : c.per_seed)
    fractions = fractions && s.at("largest_fraction").is_number() &&
                s.at("largest_fraction").get<double>() == 1.0;
  const bool ok = e.pass && c.pass && max_of(e, "energy_per_edge") < 1e-3 &&
                  max_of(e, "energy_mismatch") <= 1e-9 && min_of(e, "n_nodes") == 101 && fractions;
  return {ok, fmt("max per-edge energy=%.3g, max |edge sum - CtLC|=%.3g, min cluster fraction=%g",
                  max_of(e, "energy_per_edge"), max_of(e, "energy_mismatch"),
                  min_of(c, "largest_fraction"))};
}

Outcome criterion6() {
  const auto r = run(ExperimentId::Lemma3);
  int ordered = 0;
  for (const auto& s : r.per_seed) ordered += s.at("ordered").get<bool>() ? 1 : 0;
  return {r.pass && ordered >= 4, fmt("entropy(correct) < entropy(incorrect) in %d of %zu seeds",
                                      ordered, r.per_seed.size())};
}

Outcome criterion7() {
  const auto r = run(ExperimentId::Theorem4);
  // Independent closed form of the per-bit KL(Bern(0.8) || Bern(0.5)).
  const double per_bit = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
  bool ok = r.pass;
  double worst_rel = 0.0;
  for (const auto& s : r.per_seed) {
    const double d = s.at("d").get<double>();
    const double kl_u = s.at("kl_prior_uniform").get<double>();
    worst_rel = std::max(worst_rel, std::abs(kl_u - d * per_bit) / (d * per_bit));
    ok = ok && s.at("kl_nats").get<double>() == 0.0 &&
         s.at("test_loss_mean").get<double>() <= s.at("bound").get<double>() &&
         s.at("bound_prior_uniform").get<double>() > s.at("bound").get<double>();
  }
  ok = ok && worst_rel <= 1e-9;

  RawConfig uniform;
  uniform.set("prior", "uniform");
  uniform.set("seeds", "0");
  const auto u = run(ExperimentId::Theorem4, g_out / "theorem4_uniform_prior", uniform);
  const double d0 = u.per_seed[0].at("d").get<double>();
  const double kl0 = u.per_seed[0].at("kl_nats").get<double>();
  ok = ok && std::abs(kl0 - d0 * per_bit) <= 1e-9 * d0 * per_bit;
  return {ok, fmt("prior p: kl=0 and test<=bound in all seeds=%s; prior 0.5: kl=%.6f (d=%g), "
                  "rel err vs d*%.6f=%.2g",
                  r.pass ? "yes" : "no", kl0, d0, per_bit, worst_rel)};
}

Outcome criterion8() {
  double worst = 0.0;
  std::size_t n_graphs = 0, n_pairs = 0;
  for (const auto& g : small_graphs()) {
    if (g.node_count() > 64) continue;
    ++n_graphs;
    const auto P = laplacian_pseudoinverse<double>(g);
    for (std::size_t i = 0; i < g.node_count(); ++i)
      for (std::size_t j = i + 1; j < g.node_count(); ++j) {
        const auto rho = effective_resistance(g, i, j, P);
        if (!rho) continue;
        worst = std::max(worst, std::abs(*rho - resistance_oracle(g, i, j)));
        ++n_pairs;
      }
  }
  const auto cube = cube3();
  const double cube_adj = resistance_oracle(cube, 0, 1);
  const double cube_pinv = *effective_resistance(cube, 0, 1, laplacian_pseudoinverse<double>(cube));
  const bool cube_ok = std::abs(cube_adj - 7.0 / 12.0) < 1e-12 && std::abs(cube_pinv - cube_adj) < 1e-8;

  const auto r = run(ExperimentId::Theorem5);
  const bool ok = worst <= 1e-8 && cube_ok && r.pass && min_of(r, "pearson_r") >= -0.2 &&
                  max_of(r, "pearson_r") <= 0.3;
  return {ok, fmt("max |pinv - oracle|=%.3g over %zu pairs in %zu graphs; 3-cube adjacent=%.12f; "
                  "pearson r in [%.4f, %.4f]",
                  worst, n_pairs, n_graphs, cube_pinv, min_of(r, "pearson_r"),
                  max_of(r, "pearson_r"))};
}

Outcome criterion9() {
  const auto r = run(ExperimentId::Theorem6);
  bool ok = r.pass;
  double min_at_max = 1.0;
  for (const auto& s : r.per_seed) {
    ok = ok && s.at("monotone_in_width").get<bool>() && s.at("saturated_at_max_width").get<bool>();
    for (const auto& cell : s.at("cells"))
      if (cell.at("width") == 64)
        min_at_max = std::min(min_at_max, cell.at("fraction").is_number()
                                              ? cell.at("fraction").get<double>()
                                              : -1.0);
  }
  return {ok, fmt("monotone and saturated in all seeds=%s, min fraction at width 64=%.3f",
                  ok ? "yes" : "no", min_at_max)};
}

Outcome criterion10() {
  // Exact binomials by Pascal's rule in 64-bit integers.
  std::vector<std::vector<std::uint64_t>> c(61);
  for (std::size_t d = 0; d <= 60; ++d) {
    c[d].assign(d + 1, 1);
    for (std::size_t k = 1; k < d; ++k) c[d][k] = c[d - 1][k - 1] + c[d - 1][k];
  }
  double worst = 0.0;
  for (std::size_t d = 1; d <= 60; ++d)
    for (std::size_t k = 0; k <= d; ++k)
      worst = std::max(worst, std::abs(log2_binomial(d, k).exact -
                                       std::log2(static_cast<double>(c[d][k]))));
  std::vector<double> ratios;
  for (std::uint64_t d : {10, 100, 1000}) {
    const auto k = static_cast<std::uint64_t>(std::llround(0.8 * static_cast<double>(d)));
    ratios.push_back(log2_binomial(d, k).exact / (static_cast<double>(d) * binary_entropy(0.8)));
  }
  const bool ok = worst <= 1e-9 && ratios[0] < ratios[1] && ratios[1] < ratios[2] && ratios[2] < 1.0;
  return {ok, fmt("max |lgamma - exact|=%.3g; ratios %.4f, %.4f, %.4f", worst, ratios[0],
                  ratios[1], ratios[2])};
}

Outcome criterion11() {
  // Gradient check on a small rectified network.
  SeededRng rng(11, 1);
  auto net = Network<double>::initialized(std::vector<int>{3, 6, 5, 3}, Activation::Rectified, rng);
  net.for_each_parameter([&](std::size_t, double& v) { v = 0.7 * rng.normal(); });
  Eigen::MatrixXd x(9, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 2, 1, 0};
  double worst_grad = 0.0;
  for (auto kind : {LossKind::CrossEntropy, LossKind::SquaredError}) {
    const auto lg = loss_and_gradient(net, x, y, kind);
    // Differences in long double keep round-off below near-flat gradients.
    using LD = long double;
    std::vector<Layer<LD>> wide_layers;
    for (const auto& l : net.layers())
      wide_layers.push_back({l.weight.cast<LD>(), l.bias.cast<LD>()});
    const Network<LD> wide(wide_layers, net.activation());
    const Matrix<LD> xw = x.cast<LD>();
    const Vector<LD> theta = wide.flatten();
    const LD h = 1e-5L;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector<LD> tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      const LD fp = batch_losses<LD>(forward_batch(wide.with_parameters(tp), xw), y, kind).mean();
      const LD fm = batch_losses<LD>(forward_batch(wide.with_parameters(tm), xw), y, kind).mean();
      const double fd = static_cast<double>((fp - fm) / (2 * h));
      const double denom = std::max({std::abs(fd), std::abs(lg.gradient(i)), 1e-8});
      worst_grad = std::max(worst_grad, std::abs(lg.gradient(i) - fd) / denom);
    }
  }

  double min_eig = INFINITY, worst_pinv = 0.0;
  for (const auto& g : small_graphs()) {
    const Eigen::MatrixXd L = laplacian(g);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    const auto P = laplacian_pseudoinverse<double>(g);
    worst_pinv = std::max(worst_pinv, (L * P.matrix * L - L).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_grad < 1e-4 && min_eig >= -1e-9 && worst_pinv < 1e-8;
  return {ok, fmt("max gradient rel err=%.3g, min Laplacian eigenvalue=%.3g, max |LL+L - L|=%.3g",
                  worst_grad, min_eig, worst_pinv)};
}

Outcome criterion12() {
  // Re-run the graph experiment of criterion 5 into a fresh directory.
  const auto first = g_out / to_string(ExperimentId::Theorem3);
  const auto second = g_out / "theorem3_rerun";
  run(ExperimentId::Theorem3, second);
  auto a = json::parse(slurp(first / "report.json"));
  auto b = json::parse(slurp(second / "report.json"));
  a.erase("metadata");
  b.erase("metadata");
  bool ok = a.dump() == b.dump();
  std::size_t files = 1;
  for (const auto& entry : fs::directory_iterator(first)) {
    if (entry.path().filename() == "report.json") continue;
    ok = ok && slurp(entry.path()) == slurp(second / entry.path().filename());
    ++files;
  }
  return {ok, fmt("%zu artifacts compared, identical=%s", files, ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <output-dir>\n");
    return 2;
  }
  g_out = argv[1];
  fs::remove_all(g_out);
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"mask-norm identity at d=1000, 10000 masks", criterion1},
      {"linear mask-average: exact oracle and Monte Carlo halving", criterion2},
      {"full model matches the mask ensemble", criterion3},
      {"generalizing subnetworks abundant, each with a generalizing neighbour", criterion4},
      {"low Dirichlet energy and one generalizing cluster", criterion5},
      {"entropy lower on correct predictions under label noise", criterion6},
      {"PAC-Bayes bound and closed-form KL", criterion7},
      {"effective resistance oracle and weak score correlation", criterion8},
      {"generalizing fraction monotone in width and saturated", criterion9},
      {"log-binomial accuracy and entropy exponent", criterion10},
      {"gradients, Laplacian PSD, pseudoinverse identity", criterion11},
      {"byte-identical reruns", criterion12},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %zu %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.observed.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
