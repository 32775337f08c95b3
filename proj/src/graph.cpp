#include "graphbandit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "graphbandit/error.hpp"
#include "graphbandit/parallel.hpp"
#include "graphbandit/rng.hpp"

namespace graphbandit {

Graph::Graph(BoolMatrix adjacency, Eigen::MatrixXd features, std::vector<bool> mask)
    : adjacency_(std::move(adjacency)), features_(std::move(features)), mask_(std::move(mask)) {
  const auto n = features_.rows();
  if (n < 1) throw InvalidArgument("graph must have at least one node");
  if (adjacency_.rows() != n || adjacency_.cols() != n)
    throw DimensionMismatch("adjacency must be N x N with N = feature rows");
  if (mask_.empty()) mask_.assign(static_cast<std::size_t>(n), true);
  if (mask_.size() != static_cast<std::size_t>(n)) throw LengthMismatch("mask length != N");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency_(i, i)) throw InvalidArgument("self-loops are not stored");
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (adjacency_(i, j) != adjacency_(j, i)) throw InvalidArgument("adjacency not symmetric");
  }
  if (!features_.allFinite()) throw InvalidArgument("features must be finite");
}

Graph Graph::from_edges(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                        Eigen::MatrixXd features) {
  BoolMatrix adj = BoolMatrix::Constant(num_nodes, num_nodes, false);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= num_nodes || j >= num_nodes)
      throw IndexOutOfRange("edge endpoint out of range");
    if (i == j) throw InvalidArgument("self-loops are not stored");
    adj(i, j) = adj(j, i) = true;
  }
  return Graph(std::move(adj), std::move(features));
}

int Graph::num_effective_nodes() const {
  return static_cast<int>(std::count(mask_.begin(), mask_.end(), true));
}

std::size_t Graph::edge_count() const {
  return static_cast<std::size_t>(adjacency_.count()) / 2;
}

std::vector<int> Graph::degrees() const {
  std::vector<int> deg(static_cast<std::size_t>(num_nodes()));
  for (int i = 0; i < num_nodes(); ++i)
    deg[static_cast<std::size_t>(i)] = static_cast<int>(adjacency_.row(i).count());
  return deg;
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < num_nodes(); ++i)
    for (int j = i + 1; j < num_nodes(); ++j)
      if (adjacency_(i, j)) out.emplace_back(i, j);
  return out;
}

bool Graph::operator==(const Graph& other) const {
  return adjacency_.rows() == other.adjacency_.rows() &&
         features_.cols() == other.features_.cols() && adjacency_ == other.adjacency_ &&
         features_ == other.features_ && mask_ == other.mask_;
}

AggregatedGraph::AggregatedGraph(Eigen::MatrixXd hbar) : hbar_(std::move(hbar)) {
  if (hbar_.rows() < 1) throw InvalidArgument("aggregated graph needs at least one node");
  for (Eigen::Index j = 0; j < hbar_.rows(); ++j)
    if (std::abs(hbar_.row(j).norm() - 1.0) > 1e-12)
      throw NotUnitNorm("aggregated row " + std::to_string(j) + " is not unit norm");
}

Eigen::RowVectorXd AggregatedGraph::concatenated() const {
  Eigen::RowVectorXd v(hbar_.size());
  for (Eigen::Index j = 0; j < hbar_.rows(); ++j)
    v.segment(j * hbar_.cols(), hbar_.cols()) = hbar_.row(j);
  return v / std::sqrt(static_cast<double>(hbar_.rows()));
}

Permutation::Permutation(std::vector<int> mapping) : mapping_(std::move(mapping)) {
  std::vector<bool> seen(mapping_.size(), false);
  for (int v : mapping_) {
    if (v < 0 || static_cast<std::size_t>(v) >= mapping_.size() || seen[static_cast<std::size_t>(v)])
      throw InvalidArgument("permutation must be a bijection on 0..N-1");
    seen[static_cast<std::size_t>(v)] = true;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::random(int n, std::uint64_t seed, std::uint64_t index) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  KeyedRng rng(seed, "permutation", index);
  for (std::size_t i = m.size(); i > 1; --i) std::swap(m[i - 1], m[rng.below(i)]);
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(mapping_.size());
  for (std::size_t j = 0; j < mapping_.size(); ++j)
    inv[static_cast<std::size_t>(mapping_[j])] = static_cast<int>(j);
  return Permutation(std::move(inv));
}

GraphDomain::GraphDomain(std::vector<Graph> graphs, std::optional<DomainMeta> meta)
    : graphs_(std::move(graphs)), meta_(meta) {
  if (graphs_.empty()) throw InvalidArgument("domain must be nonempty");
  for (const auto& g : graphs_)
    if (g.num_nodes() != num_nodes() || g.feature_dim() != feature_dim())
      throw DimensionMismatch("all graphs in a domain share N and d");
}

double GraphDomain::mean_edge_count() const {
  double total = 0.0;
  for (const auto& g : graphs_) total += static_cast<double>(g.edge_count());
  return total / static_cast<double>(graphs_.size());
}

AggregatedGraph aggregate(const Graph& g) {
  const int n = g.num_nodes();
  std::vector<int> effective;
  for (int j = 0; j < n; ++j)
    if (g.is_effective(j)) effective.push_back(j);
  if (effective.empty()) throw InvalidArgument("graph has no effective nodes");

  Eigen::MatrixXd hbar(static_cast<Eigen::Index>(effective.size()), g.feature_dim());
  for (std::size_t r = 0; r < effective.size(); ++r) {
    const int j = effective[r];
    // Summation order follows feature values, not node labels, so relabelled
    // graphs aggregate to bit-identical rows.
    std::vector<int> terms{j};
    for (int i = 0; i < n; ++i)
      if (i != j && g.adjacency()(i, j) && g.is_effective(i)) terms.push_back(i);
    std::sort(terms.begin(), terms.end(), [&](int a, int b) {
      const auto ra = g.features().row(a), rb = g.features().row(b);
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(g.feature_dim());
    for (int i : terms) sum += g.features().row(i);
    const double norm = sum.norm();
    if (!(norm >= kZeroAggregateTolerance)) throw ZeroAggregateNorm(j);
    hbar.row(static_cast<Eigen::Index>(r)) = sum / norm;
  }
  return AggregatedGraph(std::move(hbar));
}

std::vector<AggregatedGraph> aggregate(const GraphDomain& domain) {
  std::vector<AggregatedGraph> out;
  out.reserve(domain.size());
  for (const auto& g : domain.graphs()) out.push_back(aggregate(g));
  return out;
}

Graph permute(const Graph& g, const Permutation& c) {
  const int n = g.num_nodes();
  if (c.size() != n) throw LengthMismatch("permutation length != number of nodes");
  BoolMatrix adj(n, n);
  Eigen::MatrixXd feats(n, g.feature_dim());
  std::vector<bool> mask(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    feats.row(i) = g.features().row(c(i));
    mask[static_cast<std::size_t>(i)] = g.is_effective(c(i));
    for (int j = 0; j < n; ++j) adj(i, j) = g.adjacency()(c(i), c(j));
  }
  return Graph(std::move(adj), std::move(feats), std::move(mask));
}

AggregatedGraph permute(const AggregatedGraph& g, const Permutation& c) {
  if (c.size() != g.num_nodes()) throw LengthMismatch("permutation length != number of nodes");
  Eigen::MatrixXd h(g.num_nodes(), g.feature_dim());
  for (int i = 0; i < g.num_nodes(); ++i) h.row(i) = g.hbar().row(c(i));
  return AggregatedGraph(std::move(h));
}

Graph pad_to(const Graph& g, int num_nodes) {
  const int n = g.num_nodes();
  if (num_nodes < n) throw ShrinkNotAllowed("pad_to target is smaller than the graph");
  BoolMatrix adj = BoolMatrix::Constant(num_nodes, num_nodes, false);
  adj.topLeftCorner(n, n) = g.adjacency();
  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(num_nodes, g.feature_dim());
  feats.topRows(n) = g.features();
  std::vector<bool> mask(static_cast<std::size_t>(num_nodes), false);
  std::copy(g.mask().begin(), g.mask().end(), mask.begin());
  return Graph(std::move(adj), std::move(feats), std::move(mask));
}

GraphDomain gen_erdos_renyi(std::size_t count, int num_nodes, double edge_prob, int dim,
                            std::uint64_t seed) {
  if (count < 1 || num_nodes < 1 || dim < 1)
    throw InvalidArgument("count, nodes and dim must be positive");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0))
    throw InvalidArgument("edge probability must lie in [0, 1]");

  std::vector<std::optional<Graph>> slots(count);
  parallel_for(count, [&](std::size_t gi) {
    KeyedRng edge_rng(seed, "er-edges", gi);
    BoolMatrix adj = BoolMatrix::Constant(num_nodes, num_nodes, false);
    for (int i = 0; i < num_nodes; ++i)
      for (int j = i + 1; j < num_nodes; ++j)
        if (edge_rng.uniform() < edge_prob) adj(i, j) = adj(j, i) = true;
    KeyedRng feat_rng(seed, "er-features", gi);
    Eigen::MatrixXd feats(num_nodes, dim);
    for (int i = 0; i < num_nodes; ++i)
      for (int k = 0; k < dim; ++k) feats(i, k) = feat_rng.normal();
    slots[gi].emplace(std::move(adj), std::move(feats));
  });

  std::vector<Graph> graphs;
  graphs.reserve(count);
  for (auto& s : slots) graphs.push_back(std::move(*s));
  return GraphDomain(std::move(graphs), DomainMeta{edge_prob, seed});
}

}  // namespace graphbandit
