#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "graphbandit/error.hpp"
#include "graphbandit/graph.hpp"

namespace graphbandit {

// Number of layers in the arc-cosine recursion. A network with L hidden
// ReLU layers (plus its linear readout) has a tangent kernel of depth L + 1;
// see kernel_depth_for_network.
class NtkDepth {
 public:
  explicit NtkDepth(int layers) : layers_(layers) {
    if (layers < 1) throw InvalidArgument("NTK depth must be >= 1");
  }
  int layers() const { return layers_; }

 private:
  int layers_;
};

inline NtkDepth kernel_depth_for_network(int network_depth) { return NtkDepth(network_depth + 1); }

enum class KernelTag { gntk, ntk_vanilla, tangent_finite };

std::string_view to_string(KernelTag tag);
KernelTag parse_kernel_tag(std::string_view name);

namespace detail {
template <typename Scalar>
Scalar clamp_cosine(Scalar u) {
  if (!(std::abs(u) <= Scalar(1) + Scalar(1e-9)))
    throw DomainError("cosine outside [-1, 1]: " + std::to_string(static_cast<double>(u)));
  return std::clamp(u, Scalar(-1), Scalar(1));
}
}  // namespace detail

// (pi - arccos u) / pi
template <typename Scalar>
Scalar kappa0(Scalar u) {
  u = detail::clamp_cosine(u);
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return (pi - std::acos(u)) / pi;
}

// (u (pi - arccos u) + sqrt(1 - u^2)) / pi
template <typename Scalar>
Scalar kappa1(Scalar u) {
  u = detail::clamp_cosine(u);
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return (u * (pi - std::acos(u)) + std::sqrt(std::max(Scalar(0), Scalar(1) - u * u))) / pi;
}

// Unnormalised recursion: kappa_nn(1, L) = L.
template <typename Scalar>
Scalar kappa_nn(Scalar u, NtkDepth depth) {
  u = detail::clamp_cosine(u);
  Scalar sigma = u;  // kappa^(l)
  Scalar theta = u;  // kappa_NN^(l)
  for (int l = 2; l <= depth.layers(); ++l) {
    const Scalar next_sigma = kappa1(sigma);
    theta = theta * kappa0(sigma) + next_sigma;
    sigma = next_sigma;
  }
  return theta;
}

// NTK evaluated from the cosine u and the angle between the inputs. The
// recursion tracks each layer's angle through 1 - cos, which stays accurate
// for nearly parallel inputs where arccos of a rounded cosine does not.
template <typename Scalar>
Scalar ntk_from_angle(Scalar u, Scalar angle, NtkDepth depth) {
  const Scalar pi = std::numbers::pi_v<Scalar>;
  Scalar theta_nn = u;
  Scalar a = angle;
  for (int l = 2; l <= depth.layers(); ++l) {
    const Scalar c = std::cos(a), s = std::sin(a);
    const Scalar half = std::sin(a / 2);
    const Scalar one_minus_next = (Scalar(2) * pi * half * half + a * c - s) / pi;
    const Scalar next = (s + (pi - a) * c) / pi;
    theta_nn = theta_nn * ((pi - a) / pi) + next;
    a = Scalar(2) * std::asin(std::sqrt(std::clamp(one_minus_next / Scalar(2), Scalar(0), Scalar(1))));
  }
  return theta_nn / static_cast<Scalar>(depth.layers());
}

// NTK on the unit sphere as a function of the cosine, scaled so that the
// value at u = 1 is exactly 1.
template <typename Scalar>
Scalar ntk_cosine(Scalar u, NtkDepth depth) {
  u = detail::clamp_cosine(u);
  return ntk_from_angle(u, std::acos(u), depth);
}

// Inner product with a fixed left-to-right summation order, so that
// dot(x, y) == dot(y, x) bit for bit.
template <typename X, typename Y>
typename X::Scalar ordered_dot(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<Y>& y) {
  typename X::Scalar s(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x(i) * y(i);
  return s;
}

// Angle between unit vectors as 2 atan2(|x - y|, |x + y|); symmetric bit for bit.
template <typename X, typename Y>
typename X::Scalar unit_angle(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<Y>& y) {
  typename X::Scalar diff(0), sum(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto dm = x(i) - y(i), dp = x(i) + y(i);
    diff += dm * dm;
    sum += dp * dp;
  }
  return typename X::Scalar(2) * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

template <typename X, typename Y>
typename X::Scalar ntk(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<Y>& y,
                       NtkDepth depth) {
  using Scalar = typename X::Scalar;
  if (x.size() != y.size()) throw DimensionMismatch("ntk inputs differ in dimension");
  if (std::abs(x.norm() - Scalar(1)) > Scalar(1e-9) || std::abs(y.norm() - Scalar(1)) > Scalar(1e-9))
    throw NotUnitNorm("ntk inputs must lie on the unit sphere");
  return ntk_from_angle(detail::clamp_cosine(ordered_dot(x, y)), unit_angle(x, y), depth);
}

// Mean over all node pairs of the base NTK. The pairwise values are summed
// in sorted order, which makes the result exactly invariant to node
// reordering of either argument and exactly symmetric.
double gntk(const AggregatedGraph& a, const AggregatedGraph& b, NtkDepth depth);

// Average over all pairs of node orderings of the additive base kernel.
// Enumerates (N!)^2 permutation pairs; N <= 6.
double kbar_bruteforce(const AggregatedGraph& a, const AggregatedGraph& b, NtkDepth depth);

inline constexpr int kBruteforceMaxNodes = 6;

// Base NTK on the unit-normalised concatenation of aggregated rows.
double ntk_vanilla(const AggregatedGraph& a, const AggregatedGraph& b, NtkDepth depth);

struct KernelMatrix {
  Eigen::MatrixXd entries;
  KernelTag tag = KernelTag::gntk;

  KernelMatrix() = default;
  KernelMatrix(Eigen::MatrixXd k, KernelTag t);
  Eigen::Index size() const { return entries.rows(); }
};

KernelMatrix kernel_matrix(std::span<const AggregatedGraph> seq, KernelTag tag, NtkDepth depth);

// Entries K(rows[i], cols[j]) for index subsets of an already computed matrix.
Eigen::MatrixXd submatrix(const Eigen::MatrixXd& k, std::span<const int> rows,
                          std::span<const int> cols);

double min_eigenvalue(const KernelMatrix& k);
double max_eigenvalue(const KernelMatrix& k);

}  // namespace graphbandit
