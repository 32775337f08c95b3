#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "graphbandit/gp.hpp"
#include "graphbandit/graph.hpp"
#include "graphbandit/network.hpp"

namespace graphbandit {

enum class ModelKind { gnn, nn };
enum class Precision { float32, float64 };

// How past gradient features enter the design matrix: the averaged form
// lambda I + (1/t) sum phi phi^T, or the plain GP-posterior form
// lambda I + sum phi phi^T.
enum class DesignScaling { averaged, summed };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ConfidenceConfig {
  double B = 1.0;
  double sigma = 0.01;
  double lambda = 0.01;
  double delta = 0.05;
  std::optional<double> beta_override;
  bool use_diagonal_approx = false;
  double elimination_slack = 0.0;
  DesignScaling scaling = DesignScaling::averaged;

  void validate() const;
};

// sqrt(2) B + sigma / sqrt(lambda) * sqrt(2 log(2 |G| / delta)), or the override.
double beta(const ConfidenceConfig& cfg, std::size_t domain_size);

// Uncertainty over a finite domain from gradient features at initialisation.
// Row i of `features` is phi(G_i) = g(G_i; theta0) / sqrt(m (L + 1)).
class ConfidenceState {
 public:
  ConfidenceState(Eigen::MatrixXd features, double lambda, DesignScaling scaling,
                  bool diagonal);

  void add(int index);
  void reset();
  std::size_t t() const { return history_.size(); }
  const std::vector<int>& history() const { return history_; }
  std::size_t domain_size() const { return static_cast<std::size_t>(features_.rows()); }
  const Eigen::MatrixXd& features() const { return features_; }

  // sigma_hat^2 at a domain graph, a candidate list, or an arbitrary feature.
  double variance(int index) const;
  Eigen::VectorXd variances(std::span<const int> candidates) const;
  Eigen::VectorXd variances() const;
  double variance_of(const Eigen::VectorXd& phi) const;

 private:
  double design_weight() const;
  void refactor();

  Eigen::MatrixXd features_;
  double lambda_;
  DesignScaling scaling_;
  bool diagonal_;
  std::vector<int> history_;
  Eigen::MatrixXd gram_;              // exact mode: phi_i . phi_j over the domain
  Eigen::LLT<Eigen::MatrixXd> dual_;  // exact mode: K_SS + lambda / w I
  Eigen::VectorXd feature_sq_sum_;    // diagonal mode: sum over history of phi^2
};

// Primal form phi^T (lambda I + w sum phi_i phi_i^T)^{-1} phi by a dense
// p x p solve. Test oracle for small networks.
double sigma_hat_primal(const Eigen::VectorXd& phi, const Eigen::MatrixXd& history_features,
                        double lambda, DesignScaling scaling);

// Index in `plausible` with the largest variance; ties to the lowest index.
int pe_step(std::span<const int> plausible, const Eigen::VectorXd& variance_all);

// Keeps G with mu + beta sigma + 2 eps >= max over the set of (mu - beta sigma).
// mu_all and sigma_all are indexed by domain graph.
std::vector<int> pe_eliminate(std::span<const int> plausible, const Eigen::VectorXd& mu_all,
                              const Eigen::VectorXd& sigma_all, double beta, double epsilon);

// Argmax with lowest-index tie-break.
int argmax_lowest(const Eigen::VectorXd& v);

struct PracticalFlags {
  bool enabled = true;
  int warmup_steps = 40;          // uniformly random actions first
  int retrain_every_until = 100;  // retrain after every step up to here ...
  int retrain_batch = 20;         // ... then every this many steps
  int elimination_start = 80;     // before this step the plausible set is rebuilt from the full domain
  bool warm_start = false;        // start each retrain from the previous weights instead of theta0

  bool should_retrain(std::size_t t) const;
};

struct RunConfig {
  ModelKind model = ModelKind::gnn;
  int width = 256;
  int depth = 2;
  ConfidenceConfig confidence;
  TrainConfig train;
  PracticalFlags practical;
  std::size_t steps = 100;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
  Precision precision = Precision::float32;
};

struct StepRecord {
  int chosen = 0;
  double reward = 0.0;       // observed y_t
  double mu = 0.0;           // mu_hat_{t-1}(chosen)
  double sigma = 0.0;        // sigma_hat_{t-1}(chosen)
  double beta = 0.0;
  int recommended = 0;       // argmax_G mu_hat_{t-1}(G)
  double max_mu = 0.0;       // max_G mu_hat_{t-1}(G)
  int plausible_size = 0;    // size of the set the action was selected from

  bool operator==(const StepRecord&) const = default;
};

struct RegretTraces {
  std::vector<double> cumulative;         // sum f* - f*(G_s)
  std::vector<double> inference;          // sum f* - f*(argmax mu_hat_{s-1})
  std::vector<double> inference_literal;  // sum f* - max mu_hat_{s-1}
};

struct RunRecord {
  std::vector<StepRecord> steps;
  RegretTraces regret;
  int final_recommendation = 0;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;  // not part of equality

  bool operator==(const RunRecord& o) const {
    return steps == o.steps && regret.cumulative == o.regret.cumulative &&
           regret.inference == o.regret.inference &&
           regret.inference_literal == o.regret.inference_literal &&
           final_recommendation == o.final_recommendation && seed == o.seed;
  }
};

RegretTraces regret_metrics(std::span<const StepRecord> steps, const RewardTable& reward);

// Bandit inputs for one model kind: aggregated rows (gnn) or the single
// normalised concatenation row (nn) per domain graph.
std::vector<Eigen::MatrixXd> model_inputs(std::span<const AggregatedGraph> domain, ModelKind kind);

// Gradient features at initialisation, one row per input, scaled to phi.
template <typename Scalar>
Eigen::MatrixXd tangent_features(std::span<const Eigen::MatrixXd> inputs,
                                 const NetworkParams<Scalar>& init);

RunRecord run_pe(const GraphDomain& domain, const RewardTable& reward, const RunConfig& cfg);
RunRecord run_ucb(const GraphDomain& domain, const RewardTable& reward, const RunConfig& cfg);

enum class Algorithm { gnn_pe, nn_pe, gnn_ucb, nn_ucb };
std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);
RunRecord run_algorithm(Algorithm a, const GraphDomain& domain, const RewardTable& reward,
                        RunConfig cfg);

}  // namespace graphbandit
