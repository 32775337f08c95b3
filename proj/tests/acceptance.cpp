// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "graphbandit/bandit.hpp"
#include "graphbandit/error.hpp"
#include "graphbandit/gp.hpp"
#include "graphbandit/graph.hpp"
#include "graphbandit/io.hpp"
#include "graphbandit/kernels.hpp"
#include "graphbandit/network.hpp"
#include "graphbandit/rng.hpp"

using namespace graphbandit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << x;
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double stderr_of(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
}

Eigen::VectorXd unit(int d, KeyedRng& rng) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.normal();
  return v.normalized();
}

// 1. gntk equals the brute-force permutation average.
Outcome kernel_oracle() {
  constexpr double tol = 1e-10, budget = 10.0;
  const auto t0 = Clock::now();
  double worst = 0.0;
  KeyedRng sizes(1, "acceptance-sizes");
  for (std::uint64_t pair = 0; pair < 50; ++pair) {
    const int n = 1 + static_cast<int>(sizes.below(4));
    const auto a = aggregate(gen_erdos_renyi(1, n, 0.5, 5, 1000 + pair)[0]);
    const auto b = aggregate(gen_erdos_renyi(1, n, 0.5, 5, 2000 + pair)[0]);
    worst = std::max(worst, std::abs(gntk(a, b, NtkDepth(2)) - kbar_bruteforce(a, b, NtkDepth(2))));
  }
  const double dt = seconds_since(t0);
  return {worst < tol && dt < budget,
          "50 pairs, N<=4, d=5, L=2: max|gntk-kbar|=" + fmt(worst) + " (tol 1e-10), " + fmt(dt) + " s"};
}

// 2. NTK golden values.
Outcome ntk_golden() {
  constexpr double tol = 1e-12;
  KeyedRng rng(2, "acceptance-ntk");
  double self = 0.0, linear = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = unit(8, rng), y = unit(8, rng);
    for (int l = 1; l <= 3; ++l) self = std::max(self, std::abs(ntk(x, x, NtkDepth(l)) - 1.0));
    linear = std::max(linear, std::abs(ntk(x, y, NtkDepth(1)) - x.dot(y)));
  }
  const Eigen::Vector2d e1(1, 0), e2(0, 1);
  const double orth = ntk(e1, e2, NtkDepth(2));
  const double target = 1.0 / std::numbers::pi;
  const bool self_ok = self < tol, linear_ok = linear < tol, orth_ok = std::abs(orth - target) < tol;
  std::string detail = "ntk(x,x,L)=1 for L=1..3: max dev " + fmt(self) + (self_ok ? " ok" : " FAIL") +
                       "; L=1 inner product: max dev " + fmt(linear) + (linear_ok ? " ok" : " FAIL") +
                       "; L=2 orthogonal: " + fmt(orth, 17) + " vs 1/pi=" + fmt(target, 17) +
                       (orth_ok ? " ok" : " FAIL") + " (unnormalised recursion at 0 gives " +
                       fmt(kappa_nn(0.0, NtkDepth(2)), 17) + " but then equals 2 at u=1)";
  return {self_ok && linear_ok && orth_ok, detail};
}

// 3. Permutation invariance of the GNN side, and its absence on the NN side.
Outcome permutation_invariance() {
  constexpr double float_tol = 1e-6, diff_min = 1e-3, budget = 30.0;
  const auto t0 = Clock::now();
  const int n = 5, d = 10, m = 256;

  // Trained float networks for both models.
  const auto domain = gen_erdos_renyi(20, n, 0.3, d, 31);
  const auto agg = aggregate(domain);
  KeyedRng yr(3, "acceptance-targets");
  std::vector<int> idx;
  std::vector<double> y;
  for (int i = 0; i < 20; ++i) {
    idx.push_back(i);
    y.push_back(yr.normal());
  }
  const auto data = make_training_set(idx, y, 20);
  TrainConfig cfg;
  cfg.max_steps = 300;

  const auto gin = model_inputs(agg, ModelKind::gnn);
  const auto gnn0 = init_params<float>(m, 2, d, 5);
  const auto gnn = train(make_batch<float>(std::span<const Eigen::MatrixXd>(gin)), data, gnn0, cfg).params;
  const auto nin = model_inputs(agg, ModelKind::nn);
  const auto nn0 = init_params<float>(m, 2, n * d, 5);
  const auto nn = train(make_batch<float>(std::span<const Eigen::MatrixXd>(nin)), data, nn0, cfg).params;

  bool kernel_exact = true;
  double forward_dev = 0.0, vanilla_diff = 0.0, nn_diff = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const std::size_t i = k % 20, j = (k * 7 + 3) % 20;
    const auto c = Permutation::random(n, 77, k);
    const auto moved_graph = permute(domain[i], c);
    const auto moved = aggregate(moved_graph);
    kernel_exact = kernel_exact && gntk(moved, agg[j], NtkDepth(3)) == gntk(agg[i], agg[j], NtkDepth(3)) &&
                   gntk(agg[j], moved, NtkDepth(3)) == gntk(agg[j], agg[i], NtkDepth(3));
    forward_dev = std::max(forward_dev, double(std::abs(gnn_forward(moved, gnn) - gnn_forward(agg[i], gnn))));
    vanilla_diff = std::max(vanilla_diff, std::abs(ntk_vanilla(moved, agg[j], NtkDepth(3)) -
                                                   ntk_vanilla(agg[i], agg[j], NtkDepth(3))));
    const Eigen::MatrixXd xm = moved.concatenated(), xo = agg[i].concatenated();
    nn_diff = std::max(nn_diff, double(std::abs(gnn_forward(xm, nn) - gnn_forward(xo, nn))));
  }
  const double dt = seconds_since(t0);
  const bool pass = kernel_exact && forward_dev < float_tol && vanilla_diff > diff_min &&
                    nn_diff > diff_min && dt < budget;
  return {pass, std::string("100 permutations, N=5: gntk ") + (kernel_exact ? "bit-identical" : "NOT identical") +
                    ", float gnn_forward max dev " + fmt(forward_dev) + " (tol 1e-6), ntk_vanilla max diff " +
                    fmt(vanilla_diff) + ", nn mu max diff " + fmt(nn_diff) + " (need > 1e-3), " + fmt(dt) + " s"};
}

// 4. Finite-width tangent kernel approaches the GNTK.
Outcome width_convergence() {
  constexpr double tol = 0.1, budget = 300.0;
  const auto t0 = Clock::now();
  const int depth = 2;
  const auto graphs = aggregate(gen_erdos_renyi(10, 5, 0.3, 10, 41));
  const auto limit = kernel_matrix(graphs, KernelTag::gntk, kernel_depth_for_network(depth));
  std::vector<double> medians;
  std::string detail = "10 graphs N=5 d=10, network L=2 vs gntk depth 3, median over 5 seeds:";
  for (int m : {256, 1024, 4096}) {
    std::vector<double> devs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto p = init_params<double>(m, depth, 10, 100 + seed);
      const auto k = tangent_gram(std::span<const AggregatedGraph>(graphs), p);
      devs.push_back((k.entries - limit.entries).cwiseAbs().maxCoeff());
    }
    medians.push_back(median(devs));
    detail += " m=" + std::to_string(m) + ": " + fmt(medians.back());
  }
  const double dt = seconds_since(t0);
  const bool pass = medians[0] > medians[1] && medians[1] > medians[2] && medians[2] < tol && dt < budget;
  return {pass, detail + " (need strictly decreasing, < 0.1 at 4096), " + fmt(dt) + " s"};
}

// 5. Backprop against central differences.
Outcome gradient_check() {
  constexpr double tol = 1e-4, h = 1e-5, budget = 60.0;
  const auto t0 = Clock::now();
  const auto p = init_params<double>(64, 2, 5, 51);
  const auto g = aggregate(gen_erdos_renyi(1, 6, 0.4, 5, 52)[0]);
  const auto grad = gnn_gradient(g, p);
  KeyedRng rng(5, "acceptance-coords");
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grad.size())));
    Eigen::VectorXd up = p.theta(), down = p.theta();
    up(i) += h;
    down(i) -= h;
    const double fd = (gnn_forward_raw(g, p.with_theta(up)) - gnn_forward_raw(g, p.with_theta(down))) / (2 * h);
    const double scale = std::max(std::abs(fd), std::abs(grad(i)));
    const double rel = scale < 1e-12 ? 0.0 : std::abs(fd - grad(i)) / scale;
    worst = std::max(worst, rel);
  }
  const double dt = seconds_since(t0);
  return {worst < tol && dt < budget,
          "m=64 L=2, 20 coordinates: max relative error " + fmt(worst) + " (tol 1e-4), " + fmt(dt) + " s"};
}

// 6. Posterior and confidence-width oracles.
Outcome posterior_oracles() {
  constexpr double gp_tol = 1e-10, sigma_tol = 1e-8, budget = 60.0;
  const auto t0 = Clock::now();
  const auto dom = gen_erdos_renyi(60, 5, 0.3, 5, 61);
  const auto agg = aggregate(dom);
  const auto k = kernel_matrix(agg, KernelTag::gntk, NtkDepth(3));
  double gp_dev = 0.0;
  KeyedRng rng(6, "acceptance-gp");
  std::vector<int> query(60);
  for (int i = 0; i < 60; ++i) query[std::size_t(i)] = i;
  for (int t : {1, 2, 5, 10, 20, 30}) {
    std::vector<int> train;
    for (int i = 0; i < t; ++i) train.push_back(static_cast<int>(rng.below(60)));
    Eigen::VectorXd y(t);
    for (int i = 0; i < t; ++i) y(i) = rng.normal();
    const double lambda = 0.01;
    const Eigen::MatrixXd kt = submatrix(k.entries, train, train), kx = submatrix(k.entries, train, query);
    const auto post = posterior(kt, kx, k.entries.diagonal(), y, lambda);
    const Eigen::MatrixXd inv = (kt + lambda * Eigen::MatrixXd::Identity(t, t)).inverse();
    const Eigen::VectorXd mu = kx.transpose() * inv * y;
    const Eigen::VectorXd var = k.entries.diagonal() - (kx.transpose() * inv * kx).diagonal();
    gp_dev = std::max({gp_dev, (post.mean - mu).cwiseAbs().maxCoeff(),
                       (post.variance - var.cwiseMax(0.0)).cwiseAbs().maxCoeff()});
  }

  const auto inputs = model_inputs(agg, ModelKind::gnn);
  const auto phi = tangent_features(std::span<const Eigen::MatrixXd>(inputs), init_params<double>(64, 2, 5, 62));
  const double lambda = 0.01;
  double sigma_dev = 0.0;
  const std::vector<int> checkpoints = {0, 1, 2, 5, 10, 20};
  std::vector<int> history;
  ConfidenceState st(phi, lambda, DesignScaling::averaged, false);
  for (int t = 0; t <= 20; ++t) {
    if (std::find(checkpoints.begin(), checkpoints.end(), t) != checkpoints.end()) {
      Eigen::MatrixXd design = lambda * Eigen::MatrixXd::Identity(phi.cols(), phi.cols());
      for (int g : history) design.noalias() += phi.row(g).transpose() * phi.row(g) / double(t);
      const Eigen::LLT<Eigen::MatrixXd> llt(design);
      for (int q = 0; q < 60; q += 3) {
        const Eigen::VectorXd x = phi.row(q).transpose();
        const double primal = std::sqrt(x.dot(llt.solve(x)));
        sigma_dev = std::max(sigma_dev, std::abs(std::sqrt(st.variance(q)) - primal));
      }
    }
    const int g = static_cast<int>(rng.below(60));
    history.push_back(g);
    st.add(g);
  }
  const double dt = seconds_since(t0);
  return {gp_dev < gp_tol && sigma_dev < sigma_tol && dt < budget,
          "GP posterior vs dense inverse (T<=30): max dev " + fmt(gp_dev) + " (tol 1e-10); sigma_hat dual vs primal " +
              std::to_string(phi.cols()) + "x" + std::to_string(phi.cols()) + " (m=64, t<=20): max dev " +
              fmt(sigma_dev) + " (tol 1e-8), " + fmt(dt) + " s"};
}

// 7. Information gain grows more slowly under the GNTK.
Outcome mig_ordering() {
  constexpr double budget = 600.0;
  const std::size_t horizon = 500;
  const double lambda = 1.0;
  const auto t0 = Clock::now();
  const auto dom = gen_erdos_renyi(200, 20, 0.2, 10, 71);
  const auto depth = kernel_depth_for_network(2);
  const auto g = greedy_mig_curve(dom, KernelTag::gntk, depth, horizon, lambda);
  const auto v = greedy_mig_curve(dom, KernelTag::ntk_vanilla, depth, horizon, lambda);
  const double sg = loglog_slope(g.gain, horizon / 2, horizon), sv = loglog_slope(v.gain, horizon / 2, horizon);
  const double dt = seconds_since(t0);
  return {sg < sv && sg < 1.0 && sv < 1.0 && dt < budget,
          "N=20 p=0.2 |G|=200 d=10, T=500, lambda=1, slope over [250,500]: gntk " + fmt(sg) + ", ntk-vanilla " +
              fmt(sv) + ", " + fmt(dt) + " s"};
}

// lambda and constant beta per algorithm, picked by a grid search over
// lambda in {1e-3, 1e-2, 1e-1} and beta in {1e-2, 1e-1, 1} on N=5, p=0.05
// domains with seeds 100 and 101 (disjoint from the seeds below).
RunConfig bandit_config(Algorithm a, std::uint64_t seed) {
  RunConfig cfg;
  cfg.width = 256;
  cfg.steps = 300;
  cfg.noise_sigma = 1e-2;
  cfg.seed = seed;
  switch (a) {
    case Algorithm::gnn_pe: cfg.confidence.lambda = 1e-2; cfg.confidence.beta_override = 0.1; break;
    case Algorithm::nn_pe: cfg.confidence.lambda = 1e-3; cfg.confidence.beta_override = 0.1; break;
    case Algorithm::gnn_ucb: cfg.confidence.lambda = 1e-3; cfg.confidence.beta_override = 1.0; break;
    case Algorithm::nn_ucb: cfg.confidence.lambda = 1e-3; cfg.confidence.beta_override = 0.1; break;
  }
  return cfg;
}

struct Experiment {
  GraphDomain domain;
  RewardTable reward;
};

Experiment make_experiment(double p, std::uint64_t seed) {
  auto dom = gen_erdos_renyi(200, 20, p, 10, derive_seed(seed, "acceptance-domain", 0));
  auto reward = sample_reward(dom, KernelTag::gntk, kernel_depth_for_network(2), 5,
                              derive_seed(seed, "acceptance-reward", 0));
  return {std::move(dom), std::move(reward)};
}

// 8. GNN-PE beats NN-PE and its inference regret is sublinear.
Outcome regret_reproduction() {
  constexpr double budget = 3600.0;
  const auto t0 = Clock::now();
  std::vector<double> gnn300, nn300, gnn50;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ex = make_experiment(0.2, seed);
    const auto g = run_algorithm(Algorithm::gnn_pe, ex.domain, ex.reward, bandit_config(Algorithm::gnn_pe, seed));
    const auto n = run_algorithm(Algorithm::nn_pe, ex.domain, ex.reward, bandit_config(Algorithm::nn_pe, seed));
    gnn300.push_back(g.regret.inference[299]);
    nn300.push_back(n.regret.inference[299]);
    gnn50.push_back(g.regret.inference[49]);
    std::cerr << "  [8] seed " << seed << ": gnn-pe " << fmt(gnn300.back()) << " nn-pe " << fmt(nn300.back())
              << " (gnn-pe at 50: " << fmt(gnn50.back()) << ")" << " (" << fmt(seconds_since(t0)) << " s)\n";
  }
  const double gm = mean(gnn300), nm = mean(nn300);
  const double pooled = std::sqrt(stderr_of(gnn300) * stderr_of(gnn300) + stderr_of(nn300) * stderr_of(nn300));
  const double mean_ratio = (gm / 300.0) / (mean(gnn50) / 50.0);
  const double dt = seconds_since(t0);
  return {nm - gm > pooled && mean_ratio < 0.5 && dt < budget,
          "5 seeds, T=300, m=256, tuned lambda/beta: mean inf regret gnn-pe " + fmt(gm) + " vs nn-pe " + fmt(nm) + " (gap " +
              fmt(nm - gm) + ", pooled stderr " + fmt(pooled) + "); gnn-pe (R/T at 300)/(R/T at 50) = " +
              fmt(mean_ratio) + " (need < 0.5), " + fmt(dt) + " s"};
}

// 9. Denser graphs shrink the GNN-UCB advantage.
Outcome density_effect() {
  constexpr double budget = 3600.0;
  const auto t0 = Clock::now();
  std::string detail = "5 seeds, T=300, N=20:";
  std::vector<double> gaps;
  for (double p : {0.05, 0.95}) {
    std::vector<double> g, n;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto ex = make_experiment(p, seed);
      g.push_back(run_algorithm(Algorithm::gnn_ucb, ex.domain, ex.reward, bandit_config(Algorithm::gnn_ucb, seed))
                      .regret.inference[299]);
      n.push_back(run_algorithm(Algorithm::nn_ucb, ex.domain, ex.reward, bandit_config(Algorithm::nn_ucb, seed))
                      .regret.inference[299]);
      std::cerr << "  [9] p=" << p << " seed " << seed << ": gnn-ucb " << fmt(g.back()) << " nn-ucb "
                << fmt(n.back()) << " (" << fmt(seconds_since(t0)) << " s)\n";
    }
    gaps.push_back(mean(n) - mean(g));
    detail += " p=" + fmt(p) + ": gnn-ucb " + fmt(mean(g)) + ", nn-ucb " + fmt(mean(n)) + ", gap " + fmt(gaps.back()) + ";";
  }
  const double dt = seconds_since(t0);
  return {gaps[1] < gaps[0] && dt < budget, detail + " need gap(0.95) < gap(0.05), " + fmt(dt) + " s"};
}

// 10. CLI outputs do not depend on reruns or thread count.
Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("graphbandit-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = GRAPHBANDIT_CLI_PATH;
  const std::string dom = (root / "domain.json").string(), rew = (root / "reward.json").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"gen-domain --count 30 --nodes 6 --edge-prob 0.3 --dim 4 --seed 5 --out " + dom, {}},
      {"gen-domain --count 30 --nodes 6 --edge-prob 0.3 --dim 4 --seed 5 --out OUT/d.json", {"d.json"}},
      {"sample-reward --domain " + dom + " --anchors 5 --seed 3 --out OUT/r.json", {"r.json"}},
      {"sample-reward --domain " + dom + " --anchors 5 --seed 3 --out " + rew, {}},
      {"kernel --domain " + dom + " --out OUT/k.csv", {"k.csv"}},
      {"kernel --domain " + dom + " --kernel ntk-vanilla --out OUT/kv.csv", {"kv.csv"}},
      {"mig --domain " + dom + " --horizon 60 --out OUT/m.csv", {"m.csv"}},
      {"run --domain " + dom + " --reward " + rew + " --algorithm gnn-pe --steps 25 --width 32 --repeats 2 "
       "--warmup-steps 5 --retrain-every-until 10 --retrain-batch 5 --elimination-start 15 --out OUT/run --svg OUT/run.svg",
       {"run/run_0.csv", "run/run_1.csv", "run/summary_0.json", "run/summary_1.json", "run/aggregate.csv", "run.svg"}},
      {"run --domain " + dom + " --reward " + rew + " --algorithm nn-ucb --steps 25 --width 32 --practical=false "
       "--precision float64 --out OUT/run2", {"run2/run_0.csv", "run2/summary_0.json", "run2/aggregate.csv"}},
  };
  int compared = 0;
  std::string first_bad;
  for (const auto& [cmd, files] : commands) {
    std::vector<std::string> seen;
    for (const char* threads : {"1", "4", "1", "3"}) {
      const fs::path out = root / "out";
      fs::remove_all(out);
      fs::create_directories(out);
      std::string line = cmd;
      for (std::size_t pos; (pos = line.find("OUT")) != std::string::npos;) line.replace(pos, 3, out.string());
      const std::string stdout_path = (root / "stdout.txt").string();
      const std::string full = "GRAPHBANDIT_THREADS=" + std::string(threads) + " " + cli + " " + line + " > " +
                               stdout_path + " 2> /dev/null";
      const int rc = std::system(full.c_str());
      std::string blob = "rc=" + std::to_string(rc) + "\n" + read_text_file(stdout_path);
      for (const auto& f : files) blob += "\n--" + f + "--\n" + read_text_file(out / f);
      if (rc != 0 && first_bad.empty()) first_bad = "exit " + std::to_string(rc) + ": " + line;
      seen.push_back(blob);
    }
    for (std::size_t i = 1; i < seen.size(); ++i)
      if (seen[i] != seen[0] && first_bad.empty()) first_bad = "differs: " + cmd;
    compared += static_cast<int>(files.size()) + 1;
  }
  fs::remove_all(root);
  return {first_bad.empty(), std::to_string(commands.size()) + " commands x 4 runs (threads 1,4,1,3), " +
                                 std::to_string(compared) + " outputs compared byte for byte" +
                                 (first_bad.empty() ? "" : "; " + first_bad)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"kernel oracle", kernel_oracle},
      {"NTK golden values", ntk_golden},
      {"permutation invariance", permutation_invariance},
      {"width convergence", width_convergence},
      {"gradient correctness", gradient_check},
      {"posterior / sigma_hat oracles", posterior_oracles},
      {"MIG ordering", mig_ordering},
      {"regret reproduction", regret_reproduction},
      {"density effect", density_effect},
      {"CLI determinism", cli_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
