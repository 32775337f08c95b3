#include "graphbandit/network.hpp"

#include <cmath>
#include <map>

#include "graphbandit/error.hpp"
#include "graphbandit/parallel.hpp"
#include "graphbandit/rng.hpp"

namespace graphbandit {

NetworkShape::NetworkShape(int m, int l, int d) : width(m), depth(l), input_dim(d) {
  if (m < 1 || l < 1 || d < 1) throw InvalidArgument("network width, depth and input dim must be >= 1");
}

Eigen::Index NetworkShape::num_params() const {
  const Eigen::Index m = width;
  return m * input_dim + (depth - 1) * m * m + m;
}

Eigen::Index NetworkShape::block_offset(int layer) const {
  const Eigen::Index m = width;
  if (layer == 1) return 0;
  return m * input_dim + (layer - 2) * m * m;
}

int NetworkShape::block_rows(int layer) const { return layer == depth + 1 ? 1 : width; }
int NetworkShape::block_cols(int layer) const { return layer == 1 ? input_dim : width; }

template <typename Scalar>
NetworkParams<Scalar>::NetworkParams(NetworkShape shape, Vector theta, std::uint64_t seed)
    : shape_(shape), seed_(seed) {
  if (theta.size() != shape_.num_params())
    throw LengthMismatch("parameter vector length does not match network shape");
  if (!theta.allFinite()) throw InvalidArgument("parameters must be finite");
  init_ = std::make_shared<const Vector>(theta);
  theta_ = std::make_shared<const Vector>(std::move(theta));
}

template <typename Scalar>
NetworkParams<Scalar>::NetworkParams(NetworkShape shape, std::shared_ptr<const Vector> theta,
                                     std::shared_ptr<const Vector> init, std::uint64_t seed)
    : shape_(shape), theta_(std::move(theta)), init_(std::move(init)), seed_(seed) {}

template <typename Scalar>
NetworkParams<Scalar> NetworkParams<Scalar>::restore(NetworkShape shape, Vector theta, Vector init,
                                                     std::uint64_t seed) {
  NetworkParams p(shape, std::move(init), seed);
  return p.with_theta(std::move(theta));
}

template <typename Scalar>
NetworkParams<Scalar> NetworkParams<Scalar>::with_theta(Vector theta) const {
  if (theta.size() != shape_.num_params())
    throw LengthMismatch("parameter vector length does not match network shape");
  return NetworkParams(shape_, std::make_shared<const Vector>(std::move(theta)), init_, seed_);
}

template <typename Scalar>
typename NetworkParams<Scalar>::ConstBlock NetworkParams<Scalar>::layer(int l) const {
  return ConstBlock(theta_->data() + shape_.block_offset(l), shape_.block_rows(l),
                    shape_.block_cols(l));
}

template <typename Scalar>
typename NetworkParams<Scalar>::ConstBlock NetworkParams<Scalar>::init_layer(int l) const {
  return ConstBlock(init_->data() + shape_.block_offset(l), shape_.block_rows(l),
                    shape_.block_cols(l));
}

template <typename Scalar>
NetworkParams<Scalar> init_params(int width, int depth, int input_dim, std::uint64_t seed) {
  const NetworkShape shape(width, depth, input_dim);
  typename NetworkParams<Scalar>::Vector theta(shape.num_params());
  KeyedRng rng(seed, "network-init");
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = static_cast<Scalar>(rng.normal());
  return NetworkParams<Scalar>(shape, std::move(theta), seed);
}

template <typename Scalar>
GraphBatch<Scalar> make_batch(std::span<const Eigen::MatrixXd> node_rows) {
  GraphBatch<Scalar> batch;
  Eigen::Index total = 0;
  const Eigen::Index d = node_rows.empty() ? 0 : node_rows.front().cols();
  for (const auto& r : node_rows) {
    if (r.cols() != d) throw DimensionMismatch("batch: mixed input dimensions");
    if (r.rows() < 1) throw InvalidArgument("batch: graph without nodes");
    total += r.rows();
    batch.offsets.push_back(total);
  }
  batch.rows.resize(total, d);
  for (std::size_t g = 0; g < node_rows.size(); ++g)
    batch.rows.middleRows(batch.offsets[g], node_rows[g].rows()) = node_rows[g].cast<Scalar>();
  return batch;
}

template <typename Scalar>
GraphBatch<Scalar> make_batch(std::span<const AggregatedGraph> graphs) {
  std::vector<Eigen::MatrixXd> rows;
  rows.reserve(graphs.size());
  for (const auto& g : graphs) rows.push_back(g.hbar());
  return make_batch<Scalar>(std::span<const Eigen::MatrixXd>(rows));
}

namespace {

template <typename Scalar>
using RowMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Post-ReLU activations of every layer; act[l - 1] belongs to layer l.
template <typename Scalar>
struct ForwardPass {
  std::vector<RowMatrixT<Scalar>> act;
  VectorT<Scalar> row_out;
};

template <typename Scalar>
ForwardPass<Scalar> run_forward(const RowMatrixT<Scalar>& x, const NetworkParams<Scalar>& p) {
  if (x.cols() != p.input_dim()) throw DimensionMismatch("network input dimension mismatch");
  const Scalar hidden_scale = std::sqrt(Scalar(2) / static_cast<Scalar>(p.width()));
  ForwardPass<Scalar> fp;
  fp.act.reserve(static_cast<std::size_t>(p.depth()));
  fp.act.emplace_back((x * p.layer(1).transpose()).cwiseMax(Scalar(0)));
  for (int l = 2; l <= p.depth(); ++l) {
    RowMatrixT<Scalar> z = fp.act.back() * p.layer(l).transpose();
    fp.act.emplace_back((hidden_scale * z).cwiseMax(Scalar(0)));
  }
  fp.row_out = std::sqrt(Scalar(2)) * (fp.act.back() * p.layer(p.depth() + 1).transpose());
  return fp;
}

template <typename Scalar>
RowMatrixT<Scalar> relu_mask(const RowMatrixT<Scalar>& act) {
  return (act.array() > Scalar(0)).template cast<Scalar>();
}

// One weight block's gradient is scale * delta^T input.
template <typename Scalar>
struct BlockFactor {
  RowMatrixT<Scalar> delta;
  RowMatrixT<Scalar> input;
  Scalar scale;
};

// Reverse pass for the seed d(objective)/d(row output). Calls
// visit(layer, scale, delta, input) for every block, readout first.
template <typename Scalar, typename Visit>
void run_backward(const RowMatrixT<Scalar>& x, const ForwardPass<Scalar>& fp,
                  const VectorT<Scalar>& seed, const NetworkParams<Scalar>& p, Visit&& visit) {
  const int depth = p.depth();
  const Scalar sqrt2 = std::sqrt(Scalar(2));
  const Scalar hidden_scale = std::sqrt(Scalar(2) / static_cast<Scalar>(p.width()));

  visit(depth + 1, sqrt2, RowMatrixT<Scalar>(seed), fp.act.back());
  RowMatrixT<Scalar> delta = (sqrt2 * seed * p.layer(depth + 1)).cwiseProduct(relu_mask(fp.act.back()));
  for (int l = depth; l >= 2; --l) {
    const auto& input = fp.act[static_cast<std::size_t>(l - 2)];
    visit(l, hidden_scale, delta, input);
    delta = (hidden_scale * (delta * p.layer(l))).cwiseProduct(relu_mask(input));
  }
  visit(1, Scalar(1), delta, x);
}

template <typename Scalar>
VectorT<Scalar> backward_gradient(const RowMatrixT<Scalar>& x, const ForwardPass<Scalar>& fp,
                                  const VectorT<Scalar>& seed, const NetworkParams<Scalar>& p) {
  VectorT<Scalar> grad(p.shape().num_params());
  const auto& shape = p.shape();
  run_backward(x, fp, seed, p,
               [&](int l, Scalar scale, const RowMatrixT<Scalar>& delta, const RowMatrixT<Scalar>& input) {
                 Eigen::Map<RowMatrixT<Scalar>> block(grad.data() + shape.block_offset(l),
                                                      shape.block_rows(l), shape.block_cols(l));
                 block.noalias() = scale * (delta.transpose() * input);
               });
  return grad;
}

template <typename Scalar>
RowMatrixT<Scalar> to_scalar_rows(const Eigen::MatrixXd& rows) {
  return rows.cast<Scalar>();
}

// Row seeds that average each graph's rows, scaled by graph_weights.
template <typename Scalar>
VectorT<Scalar> row_seeds(const GraphBatch<Scalar>& batch, const Eigen::VectorXd& graph_weights) {
  VectorT<Scalar> seed(batch.rows.rows());
  for (std::size_t g = 0; g < batch.num_graphs(); ++g) {
    const auto n = batch.graph_size(g);
    seed.segment(batch.offsets[g], n).setConstant(
        static_cast<Scalar>(graph_weights(static_cast<Eigen::Index>(g)) / static_cast<double>(n)));
  }
  return seed;
}

// Node readouts are summed in sorted order so the mean ignores node labels.
template <typename Derived>
double sorted_mean(const Eigen::DenseBase<Derived>& values) {
  std::vector<double> v(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(values(i));
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

template <typename Scalar>
Eigen::VectorXd graph_means(const GraphBatch<Scalar>& batch, const VectorT<Scalar>& row_out) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(batch.num_graphs()));
  for (std::size_t g = 0; g < batch.num_graphs(); ++g)
    out(static_cast<Eigen::Index>(g)) = sorted_mean(row_out.segment(batch.offsets[g], batch.graph_size(g)));
  return out;
}

}  // namespace

template <typename Scalar>
Scalar nn_forward(const Eigen::VectorXd& x, const NetworkParams<Scalar>& params) {
  return gnn_forward_raw(Eigen::MatrixXd(x.transpose()), params);
}

template <typename Scalar>
Scalar gnn_forward_raw(const Eigen::MatrixXd& node_rows, const NetworkParams<Scalar>& params) {
  // Rows go through the network one at a time: a node's readout must not
  // depend on where it sits in the matrix.
  const auto x = to_scalar_rows<Scalar>(node_rows);
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index j = 0; j < x.rows(); ++j)
    out(j) = static_cast<double>(run_forward(RowMatrixT<Scalar>(x.row(j)), params).row_out(0));
  return static_cast<Scalar>(sorted_mean(out));
}

template <typename Scalar>
Scalar gnn_forward(const Eigen::MatrixXd& node_rows, const NetworkParams<Scalar>& params) {
  const auto init = params.with_theta(params.frozen_init());
  return gnn_forward_raw(node_rows, params) - gnn_forward_raw(node_rows, init);
}

template <typename Scalar>
typename NetworkParams<Scalar>::Vector forward_raw_batch(const GraphBatch<Scalar>& batch,
                                                         const NetworkParams<Scalar>& params) {
  const auto fp = run_forward(batch.rows, params);
  return graph_means(batch, fp.row_out).template cast<Scalar>();
}

template <typename Scalar>
typename NetworkParams<Scalar>::Vector gnn_gradient(const Eigen::MatrixXd& node_rows,
                                                    const NetworkParams<Scalar>& params) {
  const auto x = to_scalar_rows<Scalar>(node_rows);
  const auto fp = run_forward(x, params);
  const VectorT<Scalar> seed =
      VectorT<Scalar>::Constant(x.rows(), Scalar(1) / static_cast<Scalar>(x.rows()));
  return backward_gradient(x, fp, seed, params);
}

template <typename Scalar>
typename NetworkParams<Scalar>::Vector weighted_gradient(const GraphBatch<Scalar>& batch,
                                                         const Eigen::VectorXd& graph_weights,
                                                         const NetworkParams<Scalar>& params) {
  const auto fp = run_forward(batch.rows, params);
  return backward_gradient(batch.rows, fp, row_seeds(batch, graph_weights), params);
}

template <typename Scalar>
double tangent_kernel_finite(const AggregatedGraph& a, const AggregatedGraph& b,
                             const NetworkParams<Scalar>& params) {
  const auto ga = gnn_gradient(a, params);
  const auto gb = gnn_gradient(b, params);
  return static_cast<double>(ga.template cast<double>().dot(gb.template cast<double>())) /
         tangent_scale(params);
}

template <typename Scalar>
KernelMatrix tangent_gram(std::span<const AggregatedGraph> graphs,
                          const NetworkParams<Scalar>& params) {
  using Factors = std::vector<BlockFactor<double>>;
  std::vector<Factors> factors(graphs.size());
  parallel_for(graphs.size(), [&](std::size_t i) {
    const auto x = to_scalar_rows<Scalar>(graphs[i].hbar());
    const auto fp = run_forward(x, params);
    const VectorT<Scalar> seed =
        VectorT<Scalar>::Constant(x.rows(), Scalar(1) / static_cast<Scalar>(x.rows()));
    run_backward(x, fp, seed, params,
                 [&](int, Scalar scale, const RowMatrixT<Scalar>& delta, const RowMatrixT<Scalar>& input) {
                   factors[i].push_back({delta.template cast<double>(), input.template cast<double>(),
                                         static_cast<double>(scale)});
                 });
  });
  const auto n = static_cast<Eigen::Index>(graphs.size());
  Eigen::MatrixXd k(n, n);
  const double norm = tangent_scale(params);
  parallel_for(graphs.size(), [&](std::size_t i) {
    for (std::size_t j = i; j < graphs.size(); ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < factors[i].size(); ++b) {
        const auto& fa = factors[i][b];
        const auto& fb = factors[j][b];
        const Eigen::MatrixXd dd = fa.delta * fb.delta.transpose();
        const Eigen::MatrixXd aa = fa.input * fb.input.transpose();
        s += fa.scale * fb.scale * dd.cwiseProduct(aa).sum();
      }
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s / norm;
    }
  });
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i);
  return KernelMatrix(std::move(k), KernelTag::tangent_finite);
}

void TrainConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(lambda >= 0.0)) throw InvalidArgument("regulariser must be nonnegative");
  if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
}

double TrainingSet::total() const {
  double t = 0.0;
  for (int c : counts) t += c;
  return t;
}

TrainingSet make_training_set(std::span<const int> graph_of_sample, std::span<const double> y,
                              std::size_t num_graphs) {
  if (graph_of_sample.size() != y.size()) throw LengthMismatch("history: indices vs values");
  TrainingSet set;
  set.counts.assign(num_graphs, 0);
  set.targets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_graphs));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto g = static_cast<std::size_t>(graph_of_sample[i]);
    if (g >= num_graphs) throw IndexOutOfRange("history: graph index out of range");
    set.counts[g] += 1;
    set.targets(static_cast<Eigen::Index>(g)) += y[i];
  }
  for (std::size_t g = 0; g < num_graphs; ++g)
    if (set.counts[g] > 0) set.targets(static_cast<Eigen::Index>(g)) /= set.counts[g];
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - set.targets(graph_of_sample[i]);
    set.residual += r * r;
  }
  return set;
}

namespace {

template <typename Scalar>
struct LossEval {
  double loss;
  VectorT<Scalar> grad;
};

template <typename Scalar>
LossEval<Scalar> loss_and_gradient(const GraphBatch<Scalar>& batch, const TrainingSet& data,
                                   const Eigen::VectorXd& init_out, const NetworkParams<Scalar>& p,
                                   double lambda, bool with_gradient) {
  const auto fp = run_forward(batch.rows, p);
  const Eigen::VectorXd f = graph_means(batch, fp.row_out) - init_out;
  const double t = data.total();
  Eigen::VectorXd dloss(f.size());
  double sse = data.residual;
  for (Eigen::Index g = 0; g < f.size(); ++g) {
    const double n = data.counts[static_cast<std::size_t>(g)];
    const double r = f(g) - data.targets(g);
    sse += n * r * r;
    dloss(g) = 2.0 * n * r / t;
  }
  const VectorT<Scalar> diff = p.theta() - p.frozen_init();
  const double m = p.width();
  const double reg = m * lambda * static_cast<double>(diff.template cast<double>().squaredNorm());
  LossEval<Scalar> out{sse / t + reg, {}};
  if (with_gradient) {
    out.grad = backward_gradient(batch.rows, fp, row_seeds(batch, dloss), p);
    if (lambda > 0.0) out.grad += static_cast<Scalar>(2.0 * m * lambda) * diff;
  }
  return out;
}

}  // namespace

template <typename Scalar>
double training_loss(const GraphBatch<Scalar>& batch, const TrainingSet& data,
                     const NetworkParams<Scalar>& params, double lambda) {
  const auto init = params.with_theta(params.frozen_init());
  const Eigen::VectorXd init_out = forward_raw_batch(batch, init).template cast<double>();
  return loss_and_gradient(batch, data, init_out, params, lambda, false).loss;
}

template <typename Scalar>
TrainResult<Scalar> train(const GraphBatch<Scalar>& batch, const TrainingSet& data,
                          const NetworkParams<Scalar>& start, const TrainConfig& cfg) {
  cfg.validate();
  if (data.counts.size() != batch.num_graphs()) throw LengthMismatch("training set vs batch size");
  if (!(data.total() > 0)) throw InvalidArgument("training needs a nonempty history");

  const auto init = start.with_theta(start.frozen_init());
  const Eigen::VectorXd init_out = forward_raw_batch(batch, init).template cast<double>();

  VectorT<Scalar> theta = start.theta();
  auto eval = loss_and_gradient(batch, data, init_out, start, cfg.lambda, true);
  TrainStats stats;
  stats.initial_loss = eval.loss;
  if (!std::isfinite(eval.loss)) throw NonFiniteLoss("training loss is not finite");

  VectorT<Scalar> m1, m2;
  if (cfg.optimizer == Optimizer::adam) {
    m1 = VectorT<Scalar>::Zero(theta.size());
    m2 = VectorT<Scalar>::Zero(theta.size());
  }
  double prev = eval.loss;
  double b1t = 1.0, b2t = 1.0;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    if (cfg.optimizer == Optimizer::plain_gd) {
      theta -= static_cast<Scalar>(cfg.eta) * eval.grad;
    } else {
      const auto b1 = static_cast<Scalar>(cfg.beta1);
      const auto b2 = static_cast<Scalar>(cfg.beta2);
      m1 = b1 * m1 + (Scalar(1) - b1) * eval.grad;
      m2 = b2 * m2 + (Scalar(1) - b2) * eval.grad.cwiseAbs2();
      b1t *= cfg.beta1;
      b2t *= cfg.beta2;
      const auto c1 = static_cast<Scalar>(1.0 / (1.0 - b1t));
      const auto c2 = static_cast<Scalar>(1.0 / (1.0 - b2t));
      const auto lr = static_cast<Scalar>(cfg.eta);
      const auto eps = static_cast<Scalar>(cfg.eps);
      theta.array() -= lr * (c1 * m1.array()) / ((c2 * m2.array()).sqrt() + eps);
    }
    const auto current = start.with_theta(theta);
    const bool last = step == cfg.max_steps;
    eval = loss_and_gradient(batch, data, init_out, current, cfg.lambda, !last);
    if (!std::isfinite(eval.loss)) throw NonFiniteLoss("training loss diverged");
    stats.steps = step;
    stats.loss_trace.push_back(eval.loss);
    if (eval.loss <= cfg.stop_loss) break;
    if (std::abs(eval.loss - prev) <= cfg.stop_rel_decay * prev) break;
    if (last) break;
    prev = eval.loss;
  }
  stats.final_loss = eval.loss;
  return {start.with_theta(std::move(theta)), std::move(stats)};
}

template <typename Scalar>
NetworkParams<Scalar> train_gnn(std::span<const std::pair<AggregatedGraph, double>> history,
                                const NetworkParams<Scalar>& params, const TrainConfig& cfg) {
  if (history.empty()) throw InvalidArgument("train_gnn: empty history");
  std::vector<Eigen::MatrixXd> rows;
  std::vector<int> idx;
  std::vector<double> y;
  for (std::size_t i = 0; i < history.size(); ++i) {
    rows.push_back(history[i].first.hbar());
    idx.push_back(static_cast<int>(i));
    y.push_back(history[i].second);
  }
  const auto batch = make_batch<Scalar>(std::span<const Eigen::MatrixXd>(rows));
  const auto data = make_training_set(idx, y, rows.size());
  return train(batch, data, params, cfg).params;
}

#define GRAPHBANDIT_INSTANTIATE(S)                                                             \
  template class NetworkParams<S>;                                                             \
  template NetworkParams<S> init_params<S>(int, int, int, std::uint64_t);                      \
  template GraphBatch<S> make_batch<S>(std::span<const Eigen::MatrixXd>);                      \
  template GraphBatch<S> make_batch<S>(std::span<const AggregatedGraph>);                      \
  template S nn_forward<S>(const Eigen::VectorXd&, const NetworkParams<S>&);                   \
  template S gnn_forward_raw<S>(const Eigen::MatrixXd&, const NetworkParams<S>&);              \
  template S gnn_forward<S>(const Eigen::MatrixXd&, const NetworkParams<S>&);                  \
  template NetworkParams<S>::Vector forward_raw_batch<S>(const GraphBatch<S>&,                 \
                                                         const NetworkParams<S>&);             \
  template NetworkParams<S>::Vector gnn_gradient<S>(const Eigen::MatrixXd&,                    \
                                                    const NetworkParams<S>&);                  \
  template NetworkParams<S>::Vector weighted_gradient<S>(                                      \
      const GraphBatch<S>&, const Eigen::VectorXd&, const NetworkParams<S>&);                  \
  template double tangent_kernel_finite<S>(const AggregatedGraph&, const AggregatedGraph&,     \
                                           const NetworkParams<S>&);                           \
  template KernelMatrix tangent_gram<S>(std::span<const AggregatedGraph>,                      \
                                        const NetworkParams<S>&);                              \
  template double training_loss<S>(const GraphBatch<S>&, const TrainingSet&,                   \
                                   const NetworkParams<S>&, double);                           \
  template TrainResult<S> train<S>(const GraphBatch<S>&, const TrainingSet&,                   \
                                   const NetworkParams<S>&, const TrainConfig&);               \
  template NetworkParams<S> train_gnn<S>(std::span<const std::pair<AggregatedGraph, double>>,  \
                                         const NetworkParams<S>&, const TrainConfig&);

GRAPHBANDIT_INSTANTIATE(float)
GRAPHBANDIT_INSTANTIATE(double)

#undef GRAPHBANDIT_INSTANTIATE

}  // namespace graphbandit
