#include "graphbandit/kernels.hpp"

#include <algorithm>
#include <numeric>

#include "graphbandit/parallel.hpp"

namespace graphbandit {

std::string_view to_string(KernelTag tag) {
  switch (tag) {
    case KernelTag::gntk: return "gntk";
    case KernelTag::ntk_vanilla: return "ntk-vanilla";
    case KernelTag::tangent_finite: return "tangent-finite";
  }
  return "?";
}

KernelTag parse_kernel_tag(std::string_view name) {
  if (name == "gntk") return KernelTag::gntk;
  if (name == "ntk-vanilla") return KernelTag::ntk_vanilla;
  if (name == "tangent-finite") return KernelTag::tangent_finite;
  throw InvalidArgument("unknown kernel tag: " + std::string(name));
}

double gntk(const AggregatedGraph& a, const AggregatedGraph& b, NtkDepth depth) {
  if (a.feature_dim() != b.feature_dim()) throw DimensionMismatch("gntk: feature dims differ");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(a.num_nodes()) * static_cast<std::size_t>(b.num_nodes()));
  for (int j = 0; j < a.num_nodes(); ++j)
    for (int k = 0; k < b.num_nodes(); ++k)
      values.push_back(ntk(a.row(j), b.row(k), depth));
  std::sort(values.begin(), values.end());
  const double sum = std::accumulate(values.begin(), values.end(), 0.0);
  return sum / (static_cast<double>(a.num_nodes()) * static_cast<double>(b.num_nodes()));
}

double kbar_bruteforce(const AggregatedGraph& a, const AggregatedGraph& b, NtkDepth depth) {
  const int n = a.num_nodes();
  if (b.num_nodes() != n) throw DimensionMismatch("kbar: graphs need equal node counts");
  if (a.feature_dim() != b.feature_dim()) throw DimensionMismatch("kbar: feature dims differ");
  if (n > kBruteforceMaxNodes) throw TooManyNodes("kbar_bruteforce supports N <= 6");

  Eigen::MatrixXd base(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) base(j, k) = ntk(a.row(j).transpose(), b.row(k).transpose(), depth);

  std::vector<int> c(static_cast<std::size_t>(n));
  std::iota(c.begin(), c.end(), 0);
  double total = 0.0;
  double pairs = 0.0;
  do {
    std::vector<int> cp(static_cast<std::size_t>(n));
    std::iota(cp.begin(), cp.end(), 0);
    do {
      double additive = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) additive += base(c[j], cp[j]);
      total += additive / n;
      pairs += 1.0;
    } while (std::next_permutation(cp.begin(), cp.end()));
  } while (std::next_permutation(c.begin(), c.end()));
  return total / pairs;
}

double ntk_vanilla(const AggregatedGraph& a, const AggregatedGraph& b, NtkDepth depth) {
  if (a.num_nodes() != b.num_nodes() || a.feature_dim() != b.feature_dim())
    throw DimensionMismatch("ntk_vanilla: graphs need equal N and d");
  return ntk(a.concatenated(), b.concatenated(), depth);
}

KernelMatrix::KernelMatrix(Eigen::MatrixXd k, KernelTag t) : entries(std::move(k)), tag(t) {
  if (entries.rows() != entries.cols()) throw DimensionMismatch("kernel matrix must be square");
  if (!entries.allFinite()) throw NumericalFailure("kernel matrix has non-finite entries");
  if ((entries - entries.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidArgument("kernel matrix must be symmetric");
}

KernelMatrix kernel_matrix(std::span<const AggregatedGraph> seq, KernelTag tag, NtkDepth depth) {
  if (seq.empty()) throw InvalidArgument("kernel_matrix: empty sequence");
  if (tag == KernelTag::tangent_finite)
    throw InvalidArgument("tangent-finite kernel needs network parameters (see tangent_gram)");
  const auto n = static_cast<Eigen::Index>(seq.size());
  for (const auto& g : seq) {
    if (g.feature_dim() != seq[0].feature_dim()) throw DimensionMismatch("mixed feature dims");
    if (tag == KernelTag::ntk_vanilla && g.num_nodes() != seq[0].num_nodes())
      throw DimensionMismatch("ntk-vanilla needs equal node counts");
  }
  Eigen::MatrixXd k(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (std::size_t j = i; j < seq.size(); ++j) {
      const double v = tag == KernelTag::gntk ? gntk(seq[i], seq[j], depth)
                                              : ntk_vanilla(seq[i], seq[j], depth);
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  });
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i);
  return KernelMatrix(std::move(k), tag);
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& k, std::span<const int> rows,
                          std::span<const int> cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k(rows[i], cols[j]);
  return out;
}

namespace {
Eigen::VectorXd eigenvalues(const KernelMatrix& k) {
  if (k.size() == 0) throw InvalidArgument("empty kernel matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k.entries, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalFailure("symmetric eigensolve failed");
  return solver.eigenvalues();
}
}  // namespace

double min_eigenvalue(const KernelMatrix& k) { return eigenvalues(k).minCoeff(); }
double max_eigenvalue(const KernelMatrix& k) { return eigenvalues(k).maxCoeff(); }

}  // namespace graphbandit
