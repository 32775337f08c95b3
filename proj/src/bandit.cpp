#include "graphbandit/bandit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "graphbandit/error.hpp"
#include "graphbandit/parallel.hpp"
#include "graphbandit/rng.hpp"

namespace graphbandit {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::gnn ? "gnn" : "nn"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gnn") return ModelKind::gnn;
  if (name == "nn") return ModelKind::nn;
  throw InvalidArgument("unknown model: " + std::string(name));
}

void ConfidenceConfig::validate() const {
  if (!(B > 0.0)) throw InvalidArgument("B must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
  if (!(elimination_slack >= 0.0)) throw InvalidArgument("elimination slack must be nonnegative");
}

double beta(const ConfidenceConfig& cfg, std::size_t domain_size) {
  if (cfg.beta_override) return *cfg.beta_override;
  cfg.validate();
  return std::sqrt(2.0) * cfg.B +
         cfg.sigma / std::sqrt(cfg.lambda) *
             std::sqrt(2.0 * std::log(2.0 * static_cast<double>(domain_size) / cfg.delta));
}

ConfidenceState::ConfidenceState(Eigen::MatrixXd features, double lambda, DesignScaling scaling,
                                 bool diagonal)
    : features_(std::move(features)), lambda_(lambda), scaling_(scaling), diagonal_(diagonal) {
  if (!(lambda_ > 0.0)) throw InvalidArgument("confidence: lambda must be positive");
  if (diagonal_) {
    feature_sq_sum_ = Eigen::VectorXd::Zero(features_.cols());
  } else {
    gram_ = features_ * features_.transpose();
  }
}

double ConfidenceState::design_weight() const {
  if (history_.empty()) return 0.0;
  return scaling_ == DesignScaling::averaged ? 1.0 / static_cast<double>(history_.size()) : 1.0;
}

void ConfidenceState::add(int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= domain_size())
    throw IndexOutOfRange("confidence: index out of range");
  history_.push_back(index);
  if (diagonal_) {
    feature_sq_sum_ += features_.row(index).transpose().cwiseAbs2();
  } else {
    refactor();
  }
}

void ConfidenceState::reset() {
  history_.clear();
  if (diagonal_) feature_sq_sum_.setZero();
}

void ConfidenceState::refactor() {
  // lambda I + w Phi^T Phi  <->  dual  Phi Phi^T + (lambda / w) I
  const Eigen::MatrixXd kss = submatrix(gram_, history_, history_);
  Eigen::MatrixXd a = kss;
  a.diagonal().array() += lambda_ / design_weight();
  dual_.compute(a);
  if (dual_.info() != Eigen::Success) throw SingularDesign("dual design matrix is not PD");
}

Eigen::VectorXd ConfidenceState::variances(std::span<const int> candidates) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(candidates.size()));
  if (diagonal_) {
    const Eigen::VectorXd inv =
        (lambda_ + design_weight() * feature_sq_sum_.array()).inverse().matrix();
    for (std::size_t c = 0; c < candidates.size(); ++c)
      out(static_cast<Eigen::Index>(c)) = features_.row(candidates[c]).cwiseAbs2().dot(inv.transpose());
    return out;
  }
  for (std::size_t c = 0; c < candidates.size(); ++c)
    out(static_cast<Eigen::Index>(c)) = gram_(candidates[c], candidates[c]);
  if (!history_.empty()) {
    const Eigen::MatrixXd ks = submatrix(gram_, history_, candidates);
    const Eigen::MatrixXd v = dual_.matrixL().solve(ks);
    out -= v.colwise().squaredNorm().transpose();
  }
  out /= lambda_;
  return out.cwiseMax(0.0);
}

Eigen::VectorXd ConfidenceState::variances() const {
  std::vector<int> all(domain_size());
  std::iota(all.begin(), all.end(), 0);
  return variances(all);
}

double ConfidenceState::variance(int index) const {
  const int idx[1] = {index};
  return variances(idx)(0);
}

double ConfidenceState::variance_of(const Eigen::VectorXd& phi) const {
  if (phi.size() != features_.cols()) throw DimensionMismatch("confidence: feature length");
  if (diagonal_) {
    const Eigen::ArrayXd d = lambda_ + design_weight() * feature_sq_sum_.array();
    return (phi.array().square() / d).sum();
  }
  double k = phi.squaredNorm();
  if (!history_.empty()) {
    Eigen::VectorXd ks(static_cast<Eigen::Index>(history_.size()));
    for (std::size_t i = 0; i < history_.size(); ++i)
      ks(static_cast<Eigen::Index>(i)) = features_.row(history_[i]).dot(phi);
    k -= dual_.matrixL().solve(ks).squaredNorm();
  }
  return std::max(k / lambda_, 0.0);
}

double sigma_hat_primal(const Eigen::VectorXd& phi, const Eigen::MatrixXd& history_features,
                        double lambda, DesignScaling scaling) {
  const auto p = phi.size();
  Eigen::MatrixXd design = Eigen::MatrixXd::Identity(p, p) * lambda;
  const auto t = history_features.rows();
  if (t > 0) {
    const double w = scaling == DesignScaling::averaged ? 1.0 / static_cast<double>(t) : 1.0;
    design.noalias() += w * history_features.transpose() * history_features;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(design);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("primal design not PD");
  return phi.dot(llt.solve(phi));
}

int argmax_lowest(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw InvalidArgument("argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

int pe_step(std::span<const int> plausible, const Eigen::VectorXd& variance_all) {
  if (plausible.empty()) throw EmptyPlausibleSet("plausible set is empty");
  int best = plausible[0];
  for (int g : plausible)
    if (variance_all(g) > variance_all(best) || (variance_all(g) == variance_all(best) && g < best))
      best = g;
  return best;
}

std::vector<int> pe_eliminate(std::span<const int> plausible, const Eigen::VectorXd& mu_all,
                              const Eigen::VectorXd& sigma_all, double beta, double epsilon) {
  if (plausible.empty()) throw EmptyPlausibleSet("plausible set is empty");
  double best_lcb = -std::numeric_limits<double>::infinity();
  for (int g : plausible) best_lcb = std::max(best_lcb, mu_all(g) - beta * sigma_all(g));
  std::vector<int> kept;
  for (int g : plausible)
    if (mu_all(g) + beta * sigma_all(g) + 2.0 * epsilon >= best_lcb) kept.push_back(g);
  return kept;
}

bool PracticalFlags::should_retrain(std::size_t t) const {
  const auto t1 = static_cast<std::size_t>(retrain_every_until);
  if (t <= t1) return true;
  return retrain_batch <= 1 || (t - t1) % static_cast<std::size_t>(retrain_batch) == 0;
}

RegretTraces regret_metrics(std::span<const StepRecord> steps, const RewardTable& reward) {
  RegretTraces r;
  const double best = reward.best();
  double cum = 0.0, inf = 0.0, lit = 0.0;
  for (const auto& s : steps) {
    cum += best - reward.values(s.chosen);
    inf += best - reward.values(s.recommended);
    lit += best - s.max_mu;
    r.cumulative.push_back(cum);
    r.inference.push_back(inf);
    r.inference_literal.push_back(lit);
  }
  return r;
}

std::vector<Eigen::MatrixXd> model_inputs(std::span<const AggregatedGraph> domain, ModelKind kind) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(domain.size());
  for (const auto& g : domain) {
    if (kind == ModelKind::gnn)
      out.push_back(g.hbar());
    else
      out.emplace_back(g.concatenated());
  }
  return out;
}

template <typename Scalar>
Eigen::MatrixXd tangent_features(std::span<const Eigen::MatrixXd> inputs,
                                 const NetworkParams<Scalar>& init) {
  const auto p = init.shape().num_params();
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(inputs.size()), p);
  const double scale = 1.0 / std::sqrt(tangent_scale(init));
  parallel_for(inputs.size(), [&](std::size_t i) {
    phi.row(static_cast<Eigen::Index>(i)) =
        (gnn_gradient(inputs[i], init).template cast<double>() * scale).transpose();
  });
  return phi;
}

template Eigen::MatrixXd tangent_features<float>(std::span<const Eigen::MatrixXd>,
                                                 const NetworkParams<float>&);
template Eigen::MatrixXd tangent_features<double>(std::span<const Eigen::MatrixXd>,
                                                  const NetworkParams<double>&);

namespace {

// Network estimate of the reward over the whole domain.
template <typename Scalar>
class Learner {
 public:
  Learner(std::vector<Eigen::MatrixXd> inputs, const RunConfig& cfg)
      : inputs_(std::move(inputs)),
        init_(init_params<Scalar>(cfg.width, cfg.depth, static_cast<int>(inputs_.front().cols()),
                                  derive_seed(cfg.seed, "network-init", 0))),
        current_(init_),
        all_(make_batch<Scalar>(std::span<const Eigen::MatrixXd>(inputs_))),
        init_out_(forward_raw_batch(all_, init_).template cast<double>()),
        mu_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inputs_.size()))) {}

  Eigen::MatrixXd features() const {
    return tangent_features(std::span<const Eigen::MatrixXd>(inputs_), init_);
  }

  void fit(std::span<const int> graphs, std::span<const double> y, const TrainConfig& train_cfg,
           bool warm_start) {
    std::map<int, int> slot;
    for (int g : graphs) slot.emplace(g, 0);
    std::vector<Eigen::MatrixXd> rows;
    int next = 0;
    for (auto& [g, s] : slot) {
      s = next++;
      rows.push_back(inputs_[static_cast<std::size_t>(g)]);
    }
    std::vector<int> local;
    local.reserve(graphs.size());
    for (int g : graphs) local.push_back(slot[g]);
    const auto batch = make_batch<Scalar>(std::span<const Eigen::MatrixXd>(rows));
    const auto data = make_training_set(local, y, rows.size());
    auto result = train(batch, data, warm_start ? current_ : init_, train_cfg);
    current_ = std::move(result.params);
    mu_ = forward_raw_batch(all_, current_).template cast<double>() - init_out_;
  }

  const Eigen::VectorXd& mu() const { return mu_; }

 private:
  std::vector<Eigen::MatrixXd> inputs_;
  NetworkParams<Scalar> init_;
  NetworkParams<Scalar> current_;
  GraphBatch<Scalar> all_;
  Eigen::VectorXd init_out_;
  Eigen::VectorXd mu_;
};

struct History {
  std::vector<int> graphs;
  std::vector<double> y;
  void clear() {
    graphs.clear();
    y.clear();
  }
};

std::vector<int> full_domain(std::size_t n) {
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

class Recorder {
 public:
  Recorder(RunRecord& rec, double beta) : rec_(rec), beta_(beta) {}

  StepRecord& begin(const Eigen::VectorXd& mu) {
    StepRecord s;
    s.beta = beta_;
    s.recommended = argmax_lowest(mu);
    s.max_mu = mu(s.recommended);
    rec_.steps.push_back(s);
    return rec_.steps.back();
  }

 private:
  RunRecord& rec_;
  double beta_;
};

template <typename Scalar>
RunRecord run_pe_impl(const GraphDomain& domain, const RewardTable& reward, const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.confidence.validate();
  if (cfg.steps < 1) throw InvalidArgument("run_pe: T must be >= 1");
  if (static_cast<std::size_t>(reward.values.size()) != domain.size())
    throw DimensionMismatch("reward table does not match domain");

  const auto agg = aggregate(domain);
  Learner<Scalar> learner(model_inputs(agg, cfg.model), cfg);
  ConfidenceState conf(learner.features(), cfg.confidence.lambda, cfg.confidence.scaling,
                       cfg.confidence.use_diagonal_approx);
  const std::uint64_t noise_seed = derive_seed(cfg.seed, "noise", 0);
  KeyedRng explore(cfg.seed, "warmup-exploration");
  const auto& practical = cfg.practical;

  RunRecord rec;
  rec.seed = cfg.seed;
  const double b = beta(cfg.confidence, domain.size());
  const double eps = cfg.confidence.elimination_slack;
  Recorder recorder(rec, b);
  const std::vector<int> everything = full_domain(domain.size());
  std::vector<int> plausible = everything;
  History history;

  if (practical.enabled) {
    // One-step episodes over the full history.
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
      const Eigen::VectorXd var = conf.variances();
      auto& step = recorder.begin(learner.mu());
      const bool warmup = t <= static_cast<std::size_t>(practical.warmup_steps);
      step.chosen = warmup ? static_cast<int>(explore.below(domain.size())) : pe_step(plausible, var);
      step.plausible_size = warmup ? static_cast<int>(domain.size()) : static_cast<int>(plausible.size());
      step.mu = learner.mu()(step.chosen);
      step.sigma = std::sqrt(var(step.chosen));
      step.reward = observe(reward, step.chosen, cfg.noise_sigma, noise_seed, t);
      history.graphs.push_back(step.chosen);
      history.y.push_back(step.reward);
      conf.add(step.chosen);
      if (practical.should_retrain(t))
        learner.fit(history.graphs, history.y, cfg.train, practical.warm_start);

      const Eigen::VectorXd sigma = conf.variances().cwiseSqrt();
      const bool intersect = t >= static_cast<std::size_t>(practical.elimination_start);
      plausible = pe_eliminate(intersect ? plausible : everything, learner.mu(), sigma, b, eps);
    }
  } else {
    // Doubling episodes; each episode only sees its own data.
    std::size_t t = 0;
    std::size_t episode_length = 1;
    while (t < cfg.steps) {
      conf.reset();
      history.clear();
      for (std::size_t s = 0; s < episode_length && t < cfg.steps; ++s) {
        ++t;
        const Eigen::VectorXd var = conf.variances();
        auto& step = recorder.begin(learner.mu());
        step.chosen = pe_step(plausible, var);
        step.plausible_size = static_cast<int>(plausible.size());
        step.mu = learner.mu()(step.chosen);
        step.sigma = std::sqrt(var(step.chosen));
        step.reward = observe(reward, step.chosen, cfg.noise_sigma, noise_seed, t);
        history.graphs.push_back(step.chosen);
        history.y.push_back(step.reward);
        conf.add(step.chosen);
      }
      learner.fit(history.graphs, history.y, cfg.train, practical.warm_start);
      const Eigen::VectorXd sigma = conf.variances().cwiseSqrt();
      plausible = pe_eliminate(plausible, learner.mu(), sigma, b, eps);
      episode_length *= 2;
    }
  }

  rec.final_recommendation = argmax_lowest(learner.mu());
  rec.regret = regret_metrics(rec.steps, reward);
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

template <typename Scalar>
RunRecord run_ucb_impl(const GraphDomain& domain, const RewardTable& reward, const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.confidence.validate();
  if (cfg.steps < 1) throw InvalidArgument("run_ucb: T must be >= 1");
  if (static_cast<std::size_t>(reward.values.size()) != domain.size())
    throw DimensionMismatch("reward table does not match domain");

  const auto agg = aggregate(domain);
  Learner<Scalar> learner(model_inputs(agg, cfg.model), cfg);
  ConfidenceState conf(learner.features(), cfg.confidence.lambda, cfg.confidence.scaling,
                       cfg.confidence.use_diagonal_approx);
  const std::uint64_t noise_seed = derive_seed(cfg.seed, "noise", 0);
  KeyedRng explore(cfg.seed, "warmup-exploration");
  const auto& practical = cfg.practical;

  RunRecord rec;
  rec.seed = cfg.seed;
  const double b = beta(cfg.confidence, domain.size());
  Recorder recorder(rec, b);
  History history;

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const Eigen::VectorXd sigma = conf.variances().cwiseSqrt();
    auto& step = recorder.begin(learner.mu());
    const bool warmup = practical.enabled && t <= static_cast<std::size_t>(practical.warmup_steps);
    step.chosen = warmup ? static_cast<int>(explore.below(domain.size()))
                         : argmax_lowest(learner.mu() + b * sigma);
    step.plausible_size = static_cast<int>(domain.size());
    step.mu = learner.mu()(step.chosen);
    step.sigma = sigma(step.chosen);
    step.reward = observe(reward, step.chosen, cfg.noise_sigma, noise_seed, t);
    history.graphs.push_back(step.chosen);
    history.y.push_back(step.reward);
    conf.add(step.chosen);
    if (!practical.enabled || practical.should_retrain(t))
      learner.fit(history.graphs, history.y, cfg.train, practical.warm_start);
  }

  rec.final_recommendation = argmax_lowest(learner.mu());
  rec.regret = regret_metrics(rec.steps, reward);
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace

RunRecord run_pe(const GraphDomain& domain, const RewardTable& reward, const RunConfig& cfg) {
  return cfg.precision == Precision::float32 ? run_pe_impl<float>(domain, reward, cfg)
                                             : run_pe_impl<double>(domain, reward, cfg);
}

RunRecord run_ucb(const GraphDomain& domain, const RewardTable& reward, const RunConfig& cfg) {
  return cfg.precision == Precision::float32 ? run_ucb_impl<float>(domain, reward, cfg)
                                             : run_ucb_impl<double>(domain, reward, cfg);
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::gnn_pe: return "gnn-pe";
    case Algorithm::nn_pe: return "nn-pe";
    case Algorithm::gnn_ucb: return "gnn-ucb";
    case Algorithm::nn_ucb: return "nn-ucb";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "gnn-pe") return Algorithm::gnn_pe;
  if (name == "nn-pe") return Algorithm::nn_pe;
  if (name == "gnn-ucb") return Algorithm::gnn_ucb;
  if (name == "nn-ucb") return Algorithm::nn_ucb;
  throw InvalidArgument("unknown algorithm: " + std::string(name));
}

RunRecord run_algorithm(Algorithm a, const GraphDomain& domain, const RewardTable& reward,
                        RunConfig cfg) {
  cfg.model = (a == Algorithm::gnn_pe || a == Algorithm::gnn_ucb) ? ModelKind::gnn : ModelKind::nn;
  if (a == Algorithm::gnn_pe || a == Algorithm::nn_pe) return run_pe(domain, reward, cfg);
  return run_ucb(domain, reward, cfg);
}

}  // namespace graphbandit
