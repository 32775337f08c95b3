#include "graphbandit/gp.hpp"

#include <cmath>
#include <numeric>

#include "graphbandit/error.hpp"
#include "graphbandit/rng.hpp"

namespace graphbandit {

Observations::Observations(std::vector<int> idx, Eigen::VectorXd y)
    : indices(std::move(idx)), values(std::move(y)) {
  if (indices.size() != static_cast<std::size_t>(values.size()))
    throw LengthMismatch("observations: indices and values differ in length");
  if (!values.allFinite()) throw InvalidArgument("observations must be finite");
}

GpPosterior posterior(const Eigen::MatrixXd& k_train, const Eigen::MatrixXd& k_cross,
                      const Eigen::VectorXd& k_diag, const Eigen::VectorXd& y, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("posterior: lambda must be positive");
  const auto t = k_train.rows();
  if (k_train.cols() != t || k_cross.rows() != t || y.size() != t ||
      k_cross.cols() != k_diag.size())
    throw DimensionMismatch("posterior: inconsistent dimensions");

  GpPosterior out;
  out.lambda = lambda;
  if (t == 0) {
    out.mean = Eigen::VectorXd::Zero(k_diag.size());
    out.variance = k_diag;
    return out;
  }
  Eigen::MatrixXd reg = k_train;
  reg.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("posterior: K + lambda I not PD");

  out.mean = k_cross.transpose() * llt.solve(y);
  const Eigen::MatrixXd v = llt.matrixL().solve(k_cross);
  out.variance = k_diag - v.colwise().squaredNorm().transpose();
  for (Eigen::Index q = 0; q < out.variance.size(); ++q) {
    if (out.variance(q) < -1e-10) throw NumericalFailure("posterior: negative variance");
    out.variance(q) = std::max(out.variance(q), 0.0);
  }
  return out;
}

double information_gain(const Eigen::MatrixXd& k_seq, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("information_gain: lambda must be positive");
  if (k_seq.rows() == 0) return 0.0;
  Eigen::MatrixXd a = k_seq / lambda;
  a.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("information_gain: not PD");
  const Eigen::MatrixXd l = llt.matrixL();
  return l.diagonal().array().log().sum();
}

MigCurve greedy_mig_curve(const KernelMatrix& domain_kernel, std::size_t horizon, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("greedy_mig_curve: lambda must be positive");
  const auto& k = domain_kernel.entries;
  const auto n = k.rows();
  Eigen::VectorXd var = k.diagonal();
  Eigen::MatrixXd factor(n, static_cast<Eigen::Index>(horizon));
  MigCurve curve;
  double total = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    Eigen::Index s = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (var(i) > var(s)) s = i;
    const double vs = std::max(var(s), 0.0);
    total += 0.5 * std::log1p(vs / lambda);
    curve.gain.push_back(total);
    curve.selected.push_back(static_cast<int>(s));

    const auto tt = static_cast<Eigen::Index>(t);
    Eigen::VectorXd col = k.col(s);
    if (tt > 0) col -= factor.leftCols(tt) * factor.row(s).head(tt).transpose();
    col /= std::sqrt(vs + lambda);
    factor.col(tt) = col;
    var -= col.cwiseAbs2();
  }
  return curve;
}

MigCurve greedy_mig_curve(const GraphDomain& domain, KernelTag tag, NtkDepth depth,
                          std::size_t horizon, double lambda) {
  const auto agg = aggregate(domain);
  return greedy_mig_curve(kernel_matrix(agg, tag, depth), horizon, lambda);
}

double loglog_slope(std::span<const double> curve, std::size_t t_lo, std::size_t t_hi) {
  if (t_lo < 1 || t_hi > curve.size() || t_hi <= t_lo)
    throw InvalidArgument("loglog_slope: bad range");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t t = t_lo; t <= t_hi; ++t) {
    const double x = std::log(static_cast<double>(t));
    const double y = std::log(curve[t - 1]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

RewardTable::RewardTable(Eigen::VectorXd v, RewardMeta m) : values(std::move(v)), meta(m) {
  if (values.size() == 0) throw InvalidArgument("reward table is empty");
  if (!values.allFinite()) throw InvalidArgument("reward values must be finite");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i)
    if (values(i) > values(best)) best = i;
  argmax = static_cast<int>(best);
}

std::pair<Eigen::MatrixXd, double> jittered_cholesky(const Eigen::MatrixXd& a) {
  const double scale = std::max(a.diagonal().mean(), 1e-300);
  for (double rel = 1e-10; rel <= 1e-4 * (1 + 1e-9); rel *= 10) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      if (l.allFinite()) return {std::move(l), rel * scale};
    }
  }
  throw CholeskyFailure("Cholesky failed after jitter escalation to 1e-4 * mean(diag)");
}

RewardPosterior reward_posterior(const KernelMatrix& domain_kernel, int anchors,
                                 std::uint64_t seed, double lambda) {
  const auto& k = domain_kernel.entries;
  const auto n = static_cast<int>(k.rows());
  if (anchors < 0 || anchors > n) throw InvalidArgument("anchors must lie in [0, |domain|]");

  RewardPosterior post;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  KeyedRng pick(seed, "reward-anchors");
  for (int i = 0; i < anchors; ++i) {
    const auto j = static_cast<std::size_t>(i) + pick.below(static_cast<std::uint64_t>(n - i));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  post.anchor_indices.assign(order.begin(), order.begin() + anchors);
  KeyedRng vals(seed, "reward-anchor-values");
  post.anchor_values.resize(anchors);
  for (int i = 0; i < anchors; ++i) post.anchor_values(i) = vals.normal();

  if (anchors == 0) {
    post.mean = Eigen::VectorXd::Zero(n);
    post.covariance = k;
    return post;
  }
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  Eigen::MatrixXd kaa = submatrix(k, post.anchor_indices, post.anchor_indices);
  kaa.diagonal().array() += lambda;
  const Eigen::MatrixXd kax = submatrix(k, post.anchor_indices, all);
  Eigen::LLT<Eigen::MatrixXd> llt(kaa);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("reward posterior: anchor block not PD");
  post.mean = kax.transpose() * llt.solve(post.anchor_values);
  const Eigen::MatrixXd v = llt.matrixL().solve(kax);
  post.covariance = k - v.transpose() * v;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

RewardTable sample_reward(const KernelMatrix& domain_kernel, int anchors, std::uint64_t seed,
                          double lambda) {
  auto post = reward_posterior(domain_kernel, anchors, seed, lambda);
  auto [l, jitter] = jittered_cholesky(post.covariance);
  KeyedRng z_rng(seed, "reward-mvn");
  Eigen::VectorXd z(post.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = z_rng.normal();
  Eigen::VectorXd f = post.mean + l.triangularView<Eigen::Lower>() * z;
  return RewardTable(std::move(f), RewardMeta{anchors, seed, lambda, jitter});
}

RewardTable sample_reward(const GraphDomain& domain, KernelTag tag, NtkDepth depth, int anchors,
                          std::uint64_t seed, double lambda) {
  const auto agg = aggregate(domain);
  return sample_reward(kernel_matrix(agg, tag, depth), anchors, seed, lambda);
}

double observe(const RewardTable& table, int index, double noise_sigma, std::uint64_t seed,
               std::uint64_t step) {
  if (index < 0 || index >= table.values.size()) throw IndexOutOfRange("observe: bad index");
  if (noise_sigma == 0.0) return table.values(index);
  KeyedRng rng(seed, "observation-noise", step);
  return table.values(index) + noise_sigma * rng.normal();
}

}  // namespace graphbandit
