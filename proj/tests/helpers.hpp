#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "graphbandit/graph.hpp"
#include "graphbandit/rng.hpp"

namespace testing {

using namespace graphbandit;

inline Graph random_graph(int n, int d, double p, std::uint64_t seed) {
  return gen_erdos_renyi(1, n, p, d, seed)[0];
}

inline AggregatedGraph random_agg(int n, int d, double p, std::uint64_t seed) {
  return aggregate(random_graph(n, d, p, seed));
}

inline Eigen::VectorXd random_unit(int d, std::uint64_t seed) {
  KeyedRng rng(seed, "test-unit");
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.normal();
  return v.normalized();
}

// Direct neighbourhood sums with explicit loops.
inline Eigen::MatrixXd aggregate_oracle(const Graph& g) {
  std::vector<int> eff;
  for (int i = 0; i < g.num_nodes(); ++i)
    if (g.is_effective(i)) eff.push_back(i);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(eff.size()), g.feature_dim());
  for (std::size_t r = 0; r < eff.size(); ++r) {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(g.feature_dim());
    for (int k : eff)
      if (k == eff[r] || g.adjacency()(eff[r], k)) s += g.features().row(k);
    out.row(static_cast<Eigen::Index>(r)) = s / s.norm();
  }
  return out;
}

}  // namespace testing
