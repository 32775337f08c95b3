#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "graphbandit/bandit.hpp"
#include "graphbandit/gp.hpp"
#include "graphbandit/graph.hpp"
#include "graphbandit/kernels.hpp"
#include "graphbandit/network.hpp"

namespace graphbandit {

// Scientific notation with 17 significant digits, e.g. 1.0000000000000000e+00.
// Parses back to the identical double.
std::string format_real(double x);

// Minimal streaming JSON writer; numbers go through format_real.
class JsonWriter {
 public:
  explicit JsonWriter(std::ostream& os) : os_(os) {}

  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(std::string_view k);
  JsonWriter& value(double x);
  JsonWriter& value(std::int64_t x);
  JsonWriter& value(std::uint64_t x);
  JsonWriter& value(int x) { return value(static_cast<std::int64_t>(x)); }
  JsonWriter& value(bool b);
  JsonWriter& value(std::string_view s);
  JsonWriter& value(const char* s) { return value(std::string_view(s)); }
  JsonWriter& null();
  // Inserts already-serialised JSON.
  JsonWriter& raw(std::string_view json);

 private:
  void separate();

  std::ostream& os_;
  std::vector<bool> first_;
  bool after_key_ = false;
};

void write_domain_json(std::ostream& os, const GraphDomain& domain);
GraphDomain read_domain_json(std::istream& is);
void save_domain(const std::filesystem::path& path, const GraphDomain& domain);
GraphDomain load_domain(const std::filesystem::path& path);

void write_reward_json(std::ostream& os, const RewardTable& table);
RewardTable read_reward_json(std::istream& is);
void save_reward(const std::filesystem::path& path, const RewardTable& table);
RewardTable load_reward(const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Numeric CSV. The kernel CSV has no header.
void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(std::istream& is);
CsvTable read_csv(std::istream& is, bool has_header = true);

// step,chosen,reward,mu,sigma,beta,cum_regret,inf_regret,inf_regret_literal
void write_run_csv(std::ostream& os, const RunRecord& record);

struct AggregateTrace {
  std::size_t repeats = 0;
  std::vector<double> mean_cumulative, stderr_cumulative;
  std::vector<double> mean_inference, stderr_inference;
  std::vector<double> mean_inference_literal, stderr_inference_literal;
};

// Mean and standard error (sample sd / sqrt(n)) across repeats, per step.
AggregateTrace aggregate_runs(std::span<const RunRecord> runs);
void write_aggregate_csv(std::ostream& os, const AggregateTrace& agg);

// Final recommendation, R_T, inference regret, seed and a config echo.
void write_summary_json(std::ostream& os, const RunRecord& record, std::string_view config_json);

// Header {m, L, d, seed} as little-endian uint64, then theta and the frozen
// initial weights, each in the flat layout, little-endian float64.
void save_params(const std::filesystem::path& path, const NetworkParams<double>& params);
NetworkParams<double> load_params(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace graphbandit
