#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace graphbandit {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Undirected graph with node features. Self-loops are never stored; every
// node is implicitly part of its own neighbourhood. Nodes with a false mask
// entry are padding: they carry zero features and are skipped by
// aggregation.
class Graph {
 public:
  Graph(BoolMatrix adjacency, Eigen::MatrixXd features, std::vector<bool> mask = {});

  static Graph from_edges(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                          Eigen::MatrixXd features);

  int num_nodes() const { return static_cast<int>(features_.rows()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  int num_effective_nodes() const;
  std::size_t edge_count() const;
  std::vector<int> degrees() const;
  std::vector<std::pair<int, int>> edges() const;  // i < j, lexicographic

  const BoolMatrix& adjacency() const { return adjacency_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<bool>& mask() const { return mask_; }
  bool is_effective(int node) const { return mask_[static_cast<std::size_t>(node)]; }

  bool operator==(const Graph& other) const;

 private:
  BoolMatrix adjacency_;
  Eigen::MatrixXd features_;
  std::vector<bool> mask_;
};

// Unit-norm aggregated features, one row per effective node.
class AggregatedGraph {
 public:
  explicit AggregatedGraph(Eigen::MatrixXd hbar);

  int num_nodes() const { return static_cast<int>(hbar_.rows()); }
  int feature_dim() const { return static_cast<int>(hbar_.cols()); }
  const Eigen::MatrixXd& hbar() const { return hbar_; }
  auto row(int j) const { return hbar_.row(j); }

  // Rows stacked into one vector and divided by sqrt(N); unit norm.
  Eigen::RowVectorXd concatenated() const;

 private:
  Eigen::MatrixXd hbar_;
};

class Permutation {
 public:
  explicit Permutation(std::vector<int> mapping);
  static Permutation identity(int n);
  static Permutation random(int n, std::uint64_t seed, std::uint64_t index = 0);

  int size() const { return static_cast<int>(mapping_.size()); }
  int operator()(int j) const { return mapping_[static_cast<std::size_t>(j)]; }
  const std::vector<int>& mapping() const { return mapping_; }
  Permutation inverse() const;

 private:
  std::vector<int> mapping_;
};

struct DomainMeta {
  double edge_prob = 0.0;
  std::uint64_t seed = 0;
};

class GraphDomain {
 public:
  explicit GraphDomain(std::vector<Graph> graphs, std::optional<DomainMeta> meta = std::nullopt);

  std::size_t size() const { return graphs_.size(); }
  int num_nodes() const { return graphs_.front().num_nodes(); }
  int feature_dim() const { return graphs_.front().feature_dim(); }
  const Graph& operator[](std::size_t i) const { return graphs_[i]; }
  const std::vector<Graph>& graphs() const { return graphs_; }
  const std::optional<DomainMeta>& meta() const { return meta_; }

  double mean_edge_count() const;

 private:
  std::vector<Graph> graphs_;
  std::optional<DomainMeta> meta_;
};

inline constexpr double kZeroAggregateTolerance = 1e-12;

// Row j = normalised sum of features over N(j) and j itself, effective nodes
// only. Throws ZeroAggregateNorm when that sum vanishes.
AggregatedGraph aggregate(const Graph& g);
std::vector<AggregatedGraph> aggregate(const GraphDomain& domain);

// Output node j is input node c(j).
Graph permute(const Graph& g, const Permutation& c);
AggregatedGraph permute(const AggregatedGraph& g, const Permutation& c);

// Appends isolated, zero-feature, masked-out nodes.
Graph pad_to(const Graph& g, int num_nodes);

GraphDomain gen_erdos_renyi(std::size_t count, int num_nodes, double edge_prob, int dim,
                            std::uint64_t seed);

}  // namespace graphbandit
