#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "graphbandit/graph.hpp"
#include "graphbandit/kernels.hpp"

namespace graphbandit {

// Width m, depth L (hidden ReLU layers), input dimension d.
//
// Flat parameter layout, every block row-major:
//   W1   m x d     at 0
//   Wl   m x m     at m d + (l - 2) m^2      for l = 2..L
//   Wout 1 x m     at m d + (L - 1) m^2
struct NetworkShape {
  int width = 0;
  int depth = 0;
  int input_dim = 0;

  NetworkShape() = default;
  NetworkShape(int m, int l, int d);

  Eigen::Index num_params() const;
  Eigen::Index block_offset(int layer) const;  // layer in 1..L+1, L+1 is the readout
  int block_rows(int layer) const;
  int block_cols(int layer) const;
  bool operator==(const NetworkShape&) const = default;
};

template <typename Scalar>
class NetworkParams {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstBlock = Eigen::Map<const RowMatrix>;

  // The initial snapshot is taken from theta.
  NetworkParams(NetworkShape shape, Vector theta, std::uint64_t seed = 0);

  // Explicit weights and frozen snapshot, e.g. when loading from disk.
  static NetworkParams restore(NetworkShape shape, Vector theta, Vector init, std::uint64_t seed);

  // Same shape and frozen snapshot, new weights.
  NetworkParams with_theta(Vector theta) const;

  const NetworkShape& shape() const { return shape_; }
  int width() const { return shape_.width; }
  int depth() const { return shape_.depth; }
  int input_dim() const { return shape_.input_dim; }
  std::uint64_t seed() const { return seed_; }

  const Vector& theta() const { return *theta_; }
  const Vector& frozen_init() const { return *init_; }
  ConstBlock layer(int l) const;
  ConstBlock init_layer(int l) const;

 private:
  NetworkParams(NetworkShape shape, std::shared_ptr<const Vector> theta,
                std::shared_ptr<const Vector> init, std::uint64_t seed);

  NetworkShape shape_;
  std::shared_ptr<const Vector> theta_;
  std::shared_ptr<const Vector> init_;
  std::uint64_t seed_;
};

// Entries i.i.d. N(0, 1), keyed by seed.
template <typename Scalar>
NetworkParams<Scalar> init_params(int width, int depth, int input_dim, std::uint64_t seed);

// Node rows of many graphs stacked into one matrix; graph g owns rows
// [offsets[g], offsets[g + 1]).
template <typename Scalar>
struct GraphBatch {
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMatrix rows;
  std::vector<Eigen::Index> offsets{0};

  std::size_t num_graphs() const { return offsets.size() - 1; }
  Eigen::Index graph_size(std::size_t g) const { return offsets[g + 1] - offsets[g]; }
};

template <typename Scalar>
GraphBatch<Scalar> make_batch(std::span<const Eigen::MatrixXd> node_rows);
template <typename Scalar>
GraphBatch<Scalar> make_batch(std::span<const AggregatedGraph> graphs);

// f(x) = sqrt(2) Wout relu(f^(L)), f^(1) = W1 x, f^(l) = sqrt(2/m) Wl relu(f^(l-1)).
template <typename Scalar>
Scalar nn_forward(const Eigen::VectorXd& x, const NetworkParams<Scalar>& params);

// Mean of nn_forward over node rows, at the current weights.
template <typename Scalar>
Scalar gnn_forward_raw(const Eigen::MatrixXd& node_rows, const NetworkParams<Scalar>& params);
template <typename Scalar>
Scalar gnn_forward_raw(const AggregatedGraph& g, const NetworkParams<Scalar>& params) {
  return gnn_forward_raw(g.hbar(), params);
}

// gnn_forward_raw minus its value at the frozen initial weights.
template <typename Scalar>
Scalar gnn_forward(const Eigen::MatrixXd& node_rows, const NetworkParams<Scalar>& params);
template <typename Scalar>
Scalar gnn_forward(const AggregatedGraph& g, const NetworkParams<Scalar>& params) {
  return gnn_forward(g.hbar(), params);
}

// Per-graph raw outputs of a whole batch.
template <typename Scalar>
typename NetworkParams<Scalar>::Vector forward_raw_batch(const GraphBatch<Scalar>& batch,
                                                         const NetworkParams<Scalar>& params);

// d gnn_forward_raw / d theta in the flat layout. ReLU'(0) = 0.
template <typename Scalar>
typename NetworkParams<Scalar>::Vector gnn_gradient(const Eigen::MatrixXd& node_rows,
                                                    const NetworkParams<Scalar>& params);
template <typename Scalar>
typename NetworkParams<Scalar>::Vector gnn_gradient(const AggregatedGraph& g,
                                                    const NetworkParams<Scalar>& params) {
  return gnn_gradient(g.hbar(), params);
}

// Gradient of sum_g weight[g] * raw_g(theta) over a batch.
template <typename Scalar>
typename NetworkParams<Scalar>::Vector weighted_gradient(const GraphBatch<Scalar>& batch,
                                                         const Eigen::VectorXd& graph_weights,
                                                         const NetworkParams<Scalar>& params);

// Tangent kernel normaliser m (L + 1): the tangent kernel of a depth-L
// network at width m tends to (L + 1) times the unit-diagonal NTK of depth
// L + 1.
template <typename Scalar>
double tangent_scale(const NetworkParams<Scalar>& params) {
  return static_cast<double>(params.width()) * (params.depth() + 1);
}

// <g(a), g(b)> / (m (L + 1)) with explicit gradients.
template <typename Scalar>
double tangent_kernel_finite(const AggregatedGraph& a, const AggregatedGraph& b,
                             const NetworkParams<Scalar>& params);

// Gram matrix of the same kernel without materialising gradients: each
// weight block's gradient is a sum of rank-one node terms, so block inner
// products reduce to node-level Gram products.
template <typename Scalar>
KernelMatrix tangent_gram(std::span<const AggregatedGraph> graphs,
                          const NetworkParams<Scalar>& params);

enum class Optimizer { plain_gd, adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double eta = 1e-3;
  double lambda = 0.0;   // weight of m * ||theta - theta0||^2
  int max_steps = 1000;
  double stop_loss = 1e-4;
  double stop_rel_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct TrainStats {
  int steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // loss after each step
};

// Regression data over a batch: graph g has `counts[g]` observations with
// mean `targets[g]`; `residual` is the within-graph sum of squares, so the
// loss equals the per-observation mean squared error exactly.
struct TrainingSet {
  std::vector<int> counts;
  Eigen::VectorXd targets;
  double residual = 0.0;
  double total() const;
};

template <typename Scalar>
struct TrainResult {
  NetworkParams<Scalar> params;
  TrainStats stats;
};

// Minimises (1/t) sum_i (f(G_i) - y_i)^2 + m lambda ||theta - theta0||^2
// starting from `start`. Stops after max_steps, or once the loss is below
// stop_loss, or once its relative change is below stop_rel_decay.
template <typename Scalar>
TrainResult<Scalar> train(const GraphBatch<Scalar>& batch, const TrainingSet& data,
                          const NetworkParams<Scalar>& start, const TrainConfig& cfg);

template <typename Scalar>
double training_loss(const GraphBatch<Scalar>& batch, const TrainingSet& data,
                     const NetworkParams<Scalar>& params, double lambda);

// Groups repeated graphs of a history into a TrainingSet.
TrainingSet make_training_set(std::span<const int> graph_of_sample, std::span<const double> y,
                              std::size_t num_graphs);

template <typename Scalar>
NetworkParams<Scalar> train_gnn(std::span<const std::pair<AggregatedGraph, double>> history,
                                const NetworkParams<Scalar>& params, const TrainConfig& cfg);

}  // namespace graphbandit
