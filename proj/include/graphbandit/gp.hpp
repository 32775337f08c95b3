#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "graphbandit/graph.hpp"
#include "graphbandit/kernels.hpp"

namespace graphbandit {

struct Observations {
  std::vector<int> indices;
  Eigen::VectorXd values;

  Observations() = default;
  Observations(std::vector<int> idx, Eigen::VectorXd y);
  std::size_t size() const { return indices.size(); }
};

struct GpPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  double lambda = 0.0;
};

// mean = k_cross^T (K + lambda I)^{-1} y
// var  = k_diag - diag(k_cross^T (K + lambda I)^{-1} k_cross)
// k_cross is T x Q, one column per query point.
GpPosterior posterior(const Eigen::MatrixXd& k_train, const Eigen::MatrixXd& k_cross,
                      const Eigen::VectorXd& k_diag, const Eigen::VectorXd& y, double lambda);

// 1/2 log det(I + K / lambda) by Cholesky.
double information_gain(const Eigen::MatrixXd& k_seq, double lambda);

struct MigCurve {
  std::vector<double> gain;      // gain[t-1]: information after t selections
  std::vector<int> selected;
};

// Greedy maximisation of the marginal gain 1/2 log(1 + sigma^2_{t-1}(G) / lambda)
// over the domain (repeats allowed). Ties go to the lowest index.
MigCurve greedy_mig_curve(const KernelMatrix& domain_kernel, std::size_t horizon, double lambda);
MigCurve greedy_mig_curve(const GraphDomain& domain, KernelTag tag, NtkDepth depth,
                          std::size_t horizon, double lambda);

// Least-squares slope of log(gain) against log(t) over t in [t_lo, t_hi].
double loglog_slope(std::span<const double> curve, std::size_t t_lo, std::size_t t_hi);

struct RewardMeta {
  int anchors = 5;
  std::uint64_t seed = 0;
  double lambda = 1e-4;
  double jitter = 0.0;  // jitter actually used in the sampling Cholesky
};

struct RewardTable {
  Eigen::VectorXd values;
  int argmax = 0;
  RewardMeta meta;

  RewardTable() = default;
  RewardTable(Eigen::VectorXd v, RewardMeta m);
  double best() const { return values(argmax); }
};

inline constexpr double kRewardLambda = 1e-4;

// Cholesky of a PSD matrix with jitter escalation 1e-10 .. 1e-4 times the
// mean diagonal. Returns the factor and the jitter used.
std::pair<Eigen::MatrixXd, double> jittered_cholesky(const Eigen::MatrixXd& a);

// One draw from the GP posterior conditioned on `anchors` random domain
// points with N(0, 1) values.
RewardTable sample_reward(const KernelMatrix& domain_kernel, int anchors, std::uint64_t seed,
                          double lambda = kRewardLambda);
RewardTable sample_reward(const GraphDomain& domain, KernelTag tag, NtkDepth depth, int anchors,
                          std::uint64_t seed, double lambda = kRewardLambda);

// Posterior mean and covariance used by sample_reward (exposed for checks).
struct RewardPosterior {
  std::vector<int> anchor_indices;
  Eigen::VectorXd anchor_values;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};
RewardPosterior reward_posterior(const KernelMatrix& domain_kernel, int anchors,
                                 std::uint64_t seed, double lambda = kRewardLambda);

// f*(G_index) plus N(0, noise_sigma^2) noise keyed by (seed, step).
double observe(const RewardTable& table, int index, double noise_sigma, std::uint64_t seed,
               std::uint64_t step);

}  // namespace graphbandit
