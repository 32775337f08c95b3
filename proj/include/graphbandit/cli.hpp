#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graphbandit/bandit.hpp"

namespace graphbandit {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitNumerical = 4,
  kExitNonFiniteLoss = 5,
};

// Every setting of the tool. JSON config files use these field names;
// command-line flags use the same names with dashes.
struct ExperimentConfig {
  // domain: a file, or generated from the fields below when empty
  std::string domain;
  int count = 200;
  int nodes = 20;
  double edge_prob = 0.2;
  int dim = 10;
  std::uint64_t domain_seed = 0;

  // reward: a file, or sampled when empty
  std::string reward;
  int anchors = 5;
  std::uint64_t reward_seed = 0;
  double reward_lambda = kRewardLambda;

  std::string kernel = "gntk";
  int kernel_depth = 0;  // 0: matched to the network depth

  std::string algorithm = "gnn-pe";
  int width = 256;
  int depth = 2;
  int steps = 100;
  int repeats = 1;
  double noise = 0.01;
  bool noise_is_variance = false;
  std::uint64_t seed = 0;
  std::string precision = "float32";

  double B = 1.0;
  double sigma = 0.01;
  double lambda = 0.01;
  double delta = 0.05;
  std::optional<double> beta;
  bool diagonal = false;
  double eps = 0.0;
  std::string design = "averaged";

  std::string optimizer = "adam";
  double eta = 1e-3;
  double train_lambda = 0.0;
  int max_steps = 1000;
  double stop_loss = 1e-4;
  double stop_rel_decay = 1e-3;

  bool practical = true;
  int warmup_steps = 40;
  int retrain_every_until = 100;
  int retrain_batch = 20;
  int elimination_start = 80;
  bool warm_start = false;

  int horizon = 500;
  double mig_lambda = 1.0;
  std::string kernels = "gntk,ntk-vanilla";

  std::string out;
  std::string svg;

  void validate() const;
};

// Applies the fields present in a JSON object; unknown fields are an error.
void apply_config_json(ExperimentConfig& cfg, std::string_view json_text);
std::string config_to_json(const ExperimentConfig& cfg);

int resolved_kernel_depth(const ExperimentConfig& cfg);
RunConfig to_run_config(const ExperimentConfig& cfg);

// Seed of repeat r under a master seed.
std::uint64_t repeat_seed(std::uint64_t master, int repeat);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace graphbandit
