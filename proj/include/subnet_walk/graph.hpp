#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subnet_walk/error.hpp"
#include "subnet_walk/mask.hpp"
#include "subnet_walk/metrics.hpp"
#include "subnet_walk/rng.hpp"
#include "subnet_walk/stats.hpp"
#include "subnet_walk/union_find.hpp"

namespace subnet_walk {

struct SubnetNode {
  Mask mask;
  double score = 0.0;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Sampled masks as vertices, joined when they differ in exactly one bit.
class SubnetGraph {
 public:
  SubnetGraph() = default;
  SubnetGraph(std::vector<SubnetNode> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)), adjacency_(nodes_.size()) {
    for (auto& [i, j] : edges_) {
      if (i == j) throw DomainError("self-loop in subnet graph");
      if (i > j) std::swap(i, j);
      if (j >= nodes_.size()) throw DomainError("edge endpoint out of range");
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw DomainError("duplicate edge in subnet graph");
    for (const auto& [i, j] : edges_) {
      adjacency_[i].push_back(j);
      adjacency_[j].push_back(i);
    }
    for (auto& a : adjacency_) std::sort(a.begin(), a.end());
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<SubnetNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_.at(i); }

  Eigen::VectorXd scores() const {
    Eigen::VectorXd c(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) c(static_cast<Eigen::Index>(i)) = nodes_[i].score;
    return c;
  }

 private:
  std::vector<SubnetNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Exactly the Hamming-1 edge set of `masks`. Masks are bucketed by popcount;
/// only buckets whose popcounts differ by one can hold adjacent masks.
inline std::vector<Edge> hamming1_edges(std::span<const Mask> masks) {
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < masks.size(); ++i) buckets[masks[i].popcount()].push_back(i);
  std::vector<Edge> edges;
  for (const auto& [count, members] : buckets) {
    const auto next = buckets.find(count + 1);
    if (next == buckets.end()) continue;
    for (auto a : members)
      for (auto b : next->second)
        if (hamming(masks[a], masks[b]) == 1) edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

inline SubnetGraph build_graph(std::span<const ContributionRecord> records) {
  std::vector<Mask> masks;
  masks.reserve(records.size());
  for (const auto& r : records) {
    if (!masks.empty() && r.mask.size() != masks.front().size())
      throw ShapeError("all masks in a subnet graph must share d");
    masks.push_back(r.mask);
  }
  {
    std::vector<Mask> sorted = masks;
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw DuplicateNodeError("duplicate mask " + dup->to_string());
  }
  auto edges = hamming1_edges(masks);
  std::vector<SubnetNode> nodes;
  nodes.reserve(records.size());
  for (const auto& r : records) nodes.push_back({r.mask, r.score});
  return SubnetGraph(std::move(nodes), std::move(edges));
}

/// L = D - A.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> laplacian(const SubnetGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> L =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  for (const auto& [i, j] : g.edges()) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    L(a, b) -= Scalar(1);
    L(b, a) -= Scalar(1);
    L(a, a) += Scalar(1);
    L(b, b) += Scalar(1);
  }
  return L;
}

struct DirichletEnergy {
  double raw = 0.0;             // sum over edges of (C_i - C_j)^2
  double per_edge = 0.0;        // raw / |E|, 0 without edges
  double quadratic_form = 0.0;  // C^T L C, computed independently of `raw`
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
};

inline DirichletEnergy dirichlet_energy(const SubnetGraph& g) {
  DirichletEnergy e;
  e.n_nodes = g.node_count();
  e.n_edges = g.edge_count();
  for (const auto& [i, j] : g.edges()) {
    const double diff = g.nodes()[i].score - g.nodes()[j].score;
    e.raw += diff * diff;
  }
  e.per_edge = e.n_edges ? e.raw / static_cast<double>(e.n_edges) : 0.0;
  const Eigen::VectorXd c = g.scores();
  e.quadratic_form = c.dot(laplacian<double>(g) * c);
  return e;
}

/// Connected components, each sorted, ordered by their smallest node.
inline std::vector<std::vector<std::size_t>> connected_components(const SubnetGraph& g) {
  UnionFind uf(g.node_count());
  for (const auto& [i, j] : g.edges()) uf.unite(i, j);
  return uf.groups();
}

struct GeneralizingClusters {
  std::vector<std::vector<std::size_t>> clusters;  // node indices into the full graph
  std::size_t n_generalizing = 0;
  std::optional<double> largest_fraction;  // absent when no node generalizes
};

/// Components of the subgraph induced by nodes with score < eps.
inline GeneralizingClusters generalizing_clusters(const SubnetGraph& g, double eps) {
  if (std::isnan(eps)) throw DomainError("eps must not be NaN");
  std::vector<std::size_t> members;
  std::vector<std::size_t> local(g.node_count(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (g.nodes()[i].score < eps) {
      local[i] = members.size();
      members.push_back(i);
    }
  GeneralizingClusters out;
  out.n_generalizing = members.size();
  if (members.empty()) return out;
  UnionFind uf(members.size());
  for (const auto& [i, j] : g.edges())
    if (local[i] != static_cast<std::size_t>(-1) && local[j] != static_cast<std::size_t>(-1))
      uf.unite(local[i], local[j]);
  std::size_t largest = 0;
  for (auto& group : uf.groups()) {
    for (auto& v : group) v = members[v];
    largest = std::max(largest, group.size());
    out.clusters.push_back(std::move(group));
  }
  out.largest_fraction = static_cast<double>(largest) / static_cast<double>(members.size());
  return out;
}

template <typename Scalar = double>
struct PseudoInverse {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix;
  std::vector<std::size_t> component_of;  // component index per node
  double condition_estimate = 1.0;        // worst over components
  std::optional<std::string> warning;
};

inline constexpr double kConditionWarning = 1e12;

/// Moore-Penrose pseudoinverse of a graph Laplacian, one connected component
/// at a time: L+ = (L_c + J/n)^-1 - J/n, zero between components.
template <typename Derived>
PseudoInverse<typename Derived::Scalar> laplacian_pseudoinverse(
    const Eigen::MatrixBase<Derived>& L, const std::vector<std::vector<std::size_t>>& components) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (L.rows() != L.cols()) throw ShapeError("Laplacian must be square");
  const auto n = static_cast<std::size_t>(L.rows());

  PseudoInverse<Scalar> out;
  out.matrix = Mat::Zero(L.rows(), L.cols());
  out.component_of.assign(n, static_cast<std::size_t>(-1));
  for (std::size_t c = 0; c < components.size(); ++c)
    for (auto v : components[c]) {
      if (v >= n || out.component_of[v] != static_cast<std::size_t>(-1))
        throw DomainError("components must partition the nodes");
      out.component_of[v] = c;
    }
  if (std::find(out.component_of.begin(), out.component_of.end(), static_cast<std::size_t>(-1)) !=
      out.component_of.end())
    throw DomainError("components must cover every node");

  for (const auto& comp : components) {
    const auto m = static_cast<Eigen::Index>(comp.size());
    const Scalar inv_m = Scalar(1) / static_cast<Scalar>(m);
    Mat shifted(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b)
        shifted(a, b) = L(static_cast<Eigen::Index>(comp[static_cast<std::size_t>(a)]),
                          static_cast<Eigen::Index>(comp[static_cast<std::size_t>(b)])) + inv_m;
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() != Eigen::Success)
      throw NumericError("component Laplacian is not positive semidefinite");
    const double rcond = static_cast<double>(llt.rcond());
    const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    out.condition_estimate = std::max(out.condition_estimate, cond);
    Mat inv = llt.solve(Mat::Identity(m, m));
    inv.array() -= inv_m;
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b)
        out.matrix(static_cast<Eigen::Index>(comp[static_cast<std::size_t>(a)]),
                   static_cast<Eigen::Index>(comp[static_cast<std::size_t>(b)])) = inv(a, b);
  }
  if (out.condition_estimate > kConditionWarning)
    out.warning = "ill-conditioned Laplacian solve (condition estimate " +
                  std::to_string(out.condition_estimate) + ")";
  return out;
}

template <typename Scalar = double>
PseudoInverse<Scalar> laplacian_pseudoinverse(const SubnetGraph& g) {
  return laplacian_pseudoinverse(laplacian<Scalar>(g), connected_components(g));
}

/// rho(i, j) = L+_ii + L+_jj - 2 L+_ij; absent across components.
template <typename Scalar>
std::optional<Scalar> effective_resistance(const SubnetGraph& g, std::size_t i, std::size_t j,
                                           const PseudoInverse<Scalar>& pinv) {
  if (i >= g.node_count() || j >= g.node_count()) throw DomainError("node index out of range");
  if (pinv.component_of.size() != g.node_count())
    throw ShapeError("pseudoinverse does not match the graph");
  if (pinv.component_of[i] != pinv.component_of[j]) return std::nullopt;
  if (i == j) return Scalar(0);
  const auto a = static_cast<Eigen::Index>(i);
  const auto b = static_cast<Eigen::Index>(j);
  const Scalar rho = pinv.matrix(a, a) + pinv.matrix(b, b) - Scalar(2) * pinv.matrix(a, b);
  return std::max(rho, Scalar(0));
}

/// Effective resistance by direct circuit analysis: node j is grounded, one
/// unit of current enters at i, and the reduced Kirchhoff system of j's
/// component is solved. Independent of the pseudoinverse route.
inline double resistance_oracle(const SubnetGraph& g, std::size_t i, std::size_t j) {
  if (i >= g.node_count() || j >= g.node_count()) throw DomainError("node index out of range");
  if (i == j) return 0.0;

  std::vector<long> index(g.node_count(), -1);
  std::vector<std::size_t> members;
  std::deque<std::size_t> queue{j};
  index[j] = 0;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    members.push_back(v);
    for (auto w : g.neighbors(v))
      if (index[w] < 0) {
        index[w] = 0;
        queue.push_back(w);
      }
  }
  if (index[i] < 0)
    throw DisconnectedError("nodes " + std::to_string(i) + " and " + std::to_string(j) +
                            " are not connected");

  // Unknown potentials: every member except the grounded node j.
  std::vector<std::size_t> unknowns;
  for (auto v : members)
    if (v != j) {
      index[v] = static_cast<long>(unknowns.size());
      unknowns.push_back(v);
    }
  const auto m = static_cast<Eigen::Index>(unknowns.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto v = unknowns[static_cast<std::size_t>(r)];
    for (auto w : g.neighbors(v)) {
      K(r, r) += 1.0;  // unit conductance per incident edge
      if (w != j) K(r, index[w]) -= 1.0;
    }
  }
  Eigen::VectorXd current = Eigen::VectorXd::Zero(m);
  current(index[i]) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) throw DisconnectedError("reduced Kirchhoff system is singular");
  const Eigen::VectorXd potential = lu.solve(current);
  return potential(index[i]);
}

struct ResistancePair {
  std::size_t i = 0;
  std::size_t j = 0;
  double rho = 0.0;
  double score_gap = 0.0;
};

struct ResistanceResult {
  std::vector<ResistancePair> pairs;
  std::optional<double> pearson_r;
};

inline constexpr std::size_t kMaxResistancePairs = 10000;

/// Effective resistance against |C_i - C_j| over connected node pairs. When
/// there are more than `max_pairs` pairs, a seeded sample of that many is used.
template <typename Scalar>
ResistanceResult resistance_score_correlation(const SubnetGraph& g,
                                              const PseudoInverse<Scalar>& pinv,
                                              std::uint64_t sample_seed = 0,
                                              std::size_t max_pairs = kMaxResistancePairs) {
  std::vector<Edge> candidates;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (std::size_t j = i + 1; j < g.node_count(); ++j)
      if (pinv.component_of.at(i) == pinv.component_of.at(j)) candidates.emplace_back(i, j);
  if (candidates.size() < 3)
    throw InsufficientDataError("need at least 3 connected pairs, found " +
                                std::to_string(candidates.size()));
  if (candidates.size() > max_pairs) {
    SeededRng rng(sample_seed, 0x9a125);
    rng.shuffle(candidates);
    candidates.resize(max_pairs);
    std::sort(candidates.begin(), candidates.end());
  }
  ResistanceResult out;
  out.pairs.reserve(candidates.size());
  std::vector<double> rho, gap;
  for (const auto& [i, j] : candidates) {
    const double r = static_cast<double>(*effective_resistance(g, i, j, pinv));
    const double dc = std::abs(g.nodes()[i].score - g.nodes()[j].score);
    out.pairs.push_back({i, j, r, dc});
    rho.push_back(r);
    gap.push_back(dc);
  }
  out.pearson_r = pearson(rho, gap);
  return out;
}

}  // namespace subnet_walk
