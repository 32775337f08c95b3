#include "graphbandit/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "graphbandit/error.hpp"

namespace graphbandit {

namespace {

using nlohmann::json;

json parse_json(std::istream& is, std::string_view what) {
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

template <typename T>
T get_field(const json& j, const char* name, std::string_view what) {
  if (!j.contains(name)) throw IoError(std::string(what) + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": bad field '" + name + "': " + e.what());
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

double parse_real(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IoError("not a number: '" + std::string(s) + "'");
  return x;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(buf, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw IoError("params file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

std::string format_real(double x) {
  if (!std::isfinite(x)) throw IoError("cannot serialise a non-finite value");
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific, 16);
  if (ec != std::errc()) throw IoError("number formatting failed");
  return std::string(buf, ptr);
}

void JsonWriter::separate() {
  if (after_key_) {
    after_key_ = false;
    return;
  }
  if (!first_.empty()) {
    if (!first_.back()) os_ << ',';
    first_.back() = false;
  }
}

JsonWriter& JsonWriter::begin_object() {
  separate();
  os_ << '{';
  first_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  first_.pop_back();
  os_ << '}';
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  separate();
  os_ << '[';
  first_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  first_.pop_back();
  os_ << ']';
  return *this;
}

JsonWriter& JsonWriter::key(std::string_view k) {
  separate();
  os_ << json(std::string(k)).dump() << ':';
  after_key_ = true;
  return *this;
}

JsonWriter& JsonWriter::value(double x) {
  separate();
  os_ << format_real(x);
  return *this;
}

JsonWriter& JsonWriter::value(std::int64_t x) {
  separate();
  os_ << x;
  return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t x) {
  separate();
  os_ << x;
  return *this;
}

JsonWriter& JsonWriter::value(bool b) {
  separate();
  os_ << (b ? "true" : "false");
  return *this;
}

JsonWriter& JsonWriter::value(std::string_view s) {
  separate();
  os_ << json(std::string(s)).dump();
  return *this;
}

JsonWriter& JsonWriter::null() {
  separate();
  os_ << "null";
  return *this;
}

JsonWriter& JsonWriter::raw(std::string_view text) {
  separate();
  os_ << text;
  return *this;
}

void write_domain_json(std::ostream& os, const GraphDomain& domain) {
  JsonWriter w(os);
  w.begin_object().key("meta").begin_object();
  w.key("N").value(domain.num_nodes());
  w.key("d").value(domain.feature_dim());
  if (domain.meta()) {
    w.key("p").value(domain.meta()->edge_prob);
    w.key("seed").value(domain.meta()->seed);
  } else {
    w.key("p").null();
    w.key("seed").null();
  }
  w.key("count").value(static_cast<std::uint64_t>(domain.size()));
  w.end_object();
  os << '\n';
  w.key("graphs").begin_array();
  for (const auto& g : domain.graphs()) {
    os << '\n';
    w.begin_object().key("edges").begin_array();
    for (const auto& [i, j] : g.edges()) w.begin_array().value(i).value(j).end_array();
    w.end_array().key("features").begin_array();
    for (int r = 0; r < g.num_nodes(); ++r) {
      w.begin_array();
      for (int c = 0; c < g.feature_dim(); ++c) w.value(g.features()(r, c));
      w.end_array();
    }
    w.end_array();
    if (g.num_effective_nodes() != g.num_nodes()) {
      w.key("mask").begin_array();
      for (bool b : g.mask()) w.value(b);
      w.end_array();
    }
    w.end_object();
  }
  w.end_array().end_object();
  os << '\n';
}

GraphDomain read_domain_json(std::istream& is) {
  const json j = parse_json(is, "domain");
  const json meta = get_field<json>(j, "meta", "domain");
  const int n = get_field<int>(meta, "N", "domain meta");
  const int d = get_field<int>(meta, "d", "domain meta");
  std::vector<Graph> graphs;
  for (const auto& gj : get_field<json>(j, "graphs", "domain")) {
    const auto edges = get_field<std::vector<std::pair<int, int>>>(gj, "edges", "graph");
    const auto rows = get_field<std::vector<std::vector<double>>>(gj, "features", "graph");
    if (static_cast<int>(rows.size()) != n) throw IoError("graph: feature row count differs from N");
    Eigen::MatrixXd x(n, d);
    for (int r = 0; r < n; ++r) {
      if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d)
        throw IoError("graph: feature length differs from d");
      for (int c = 0; c < d; ++c) x(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    BoolMatrix adj = BoolMatrix::Constant(n, n, false);
    for (const auto& [a, b] : edges) {
      if (a < 0 || b < 0 || a >= n || b >= n || a == b) throw IoError("graph: bad edge");
      adj(a, b) = adj(b, a) = true;
    }
    std::vector<bool> mask;
    if (gj.contains("mask")) mask = get_field<std::vector<bool>>(gj, "mask", "graph");
    graphs.emplace_back(std::move(adj), std::move(x), std::move(mask));
  }
  if (graphs.empty()) throw IoError("domain has no graphs");
  std::optional<DomainMeta> dm;
  if (meta.contains("p") && !meta.at("p").is_null())
    dm = DomainMeta{get_field<double>(meta, "p", "domain meta"),
                    get_field<std::uint64_t>(meta, "seed", "domain meta")};
  return GraphDomain(std::move(graphs), dm);
}

void save_domain(const std::filesystem::path& path, const GraphDomain& domain) {
  auto out = open_out(path);
  write_domain_json(out, domain);
  finish(out, path);
}

GraphDomain load_domain(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_domain_json(in);
}

void write_reward_json(std::ostream& os, const RewardTable& table) {
  JsonWriter w(os);
  w.begin_object().key("values").begin_array();
  for (Eigen::Index i = 0; i < table.values.size(); ++i) w.value(table.values(i));
  w.end_array();
  w.key("argmax").value(table.argmax);
  w.key("meta").begin_object();
  w.key("anchors").value(table.meta.anchors);
  w.key("seed").value(table.meta.seed);
  w.key("lambda").value(table.meta.lambda);
  w.key("jitter").value(table.meta.jitter);
  w.end_object().end_object();
  os << '\n';
}

RewardTable read_reward_json(std::istream& is) {
  const json j = parse_json(is, "reward");
  const auto v = get_field<std::vector<double>>(j, "values", "reward");
  const json meta = get_field<json>(j, "meta", "reward");
  RewardMeta m;
  m.anchors = get_field<int>(meta, "anchors", "reward meta");
  m.seed = get_field<std::uint64_t>(meta, "seed", "reward meta");
  m.lambda = get_field<double>(meta, "lambda", "reward meta");
  if (meta.contains("jitter")) m.jitter = get_field<double>(meta, "jitter", "reward meta");
  RewardTable t(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())), m);
  if (j.contains("argmax") && get_field<int>(j, "argmax", "reward") != t.argmax)
    throw IoError("reward: stored argmax disagrees with values");
  return t;
}

void save_reward(const std::filesystem::path& path, const RewardTable& table) {
  auto out = open_out(path);
  write_reward_json(out, table);
  finish(out, path);
}

RewardTable load_reward(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_reward_json(in);
}

void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << format_real(m(r, c));
    }
    os << '\n';
  }
}

CsvTable read_csv(std::istream& is, bool has_header) {
  CsvTable t;
  std::string line;
  if (has_header) {
    if (!std::getline(is, line)) throw IoError("csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    for (auto f : split(line)) t.header.emplace_back(f);
  }
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (auto f : split(line)) row.push_back(parse_real(f));
    if (has_header && row.size() != t.header.size()) throw IoError("csv: row width differs from header");
    if (!t.rows.empty() && row.size() != t.rows.front().size()) throw IoError("csv: ragged rows");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Eigen::MatrixXd read_matrix_csv(std::istream& is) {
  const auto t = read_csv(is, false);
  const auto rows = static_cast<Eigen::Index>(t.rows.size());
  const auto cols = rows ? static_cast<Eigen::Index>(t.rows.front().size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

void write_run_csv(std::ostream& os, const RunRecord& record) {
  os << "step,chosen,reward,mu,sigma,beta,cum_regret,inf_regret,inf_regret_literal\n";
  for (std::size_t t = 0; t < record.steps.size(); ++t) {
    const auto& s = record.steps[t];
    os << (t + 1) << ',' << s.chosen << ',' << format_real(s.reward) << ',' << format_real(s.mu)
       << ',' << format_real(s.sigma) << ',' << format_real(s.beta) << ','
       << format_real(record.regret.cumulative[t]) << ',' << format_real(record.regret.inference[t])
       << ',' << format_real(record.regret.inference_literal[t]) << '\n';
  }
}

AggregateTrace aggregate_runs(std::span<const RunRecord> runs) {
  if (runs.empty()) throw InvalidArgument("aggregate_runs: no runs");
  const std::size_t steps = runs.front().steps.size();
  for (const auto& r : runs)
    if (r.steps.size() != steps) throw LengthMismatch("aggregate_runs: runs differ in length");
  AggregateTrace a;
  a.repeats = runs.size();
  const double n = static_cast<double>(runs.size());
  auto stat = [&](auto pick, std::vector<double>& mean, std::vector<double>& se) {
    for (std::size_t t = 0; t < steps; ++t) {
      double s = 0.0;
      for (const auto& r : runs) s += pick(r)[t];
      const double m = s / n;
      double ss = 0.0;
      for (const auto& r : runs) ss += (pick(r)[t] - m) * (pick(r)[t] - m);
      mean.push_back(m);
      se.push_back(runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0);
    }
  };
  stat([](const RunRecord& r) -> const std::vector<double>& { return r.regret.cumulative; },
       a.mean_cumulative, a.stderr_cumulative);
  stat([](const RunRecord& r) -> const std::vector<double>& { return r.regret.inference; },
       a.mean_inference, a.stderr_inference);
  stat([](const RunRecord& r) -> const std::vector<double>& { return r.regret.inference_literal; },
       a.mean_inference_literal, a.stderr_inference_literal);
  return a;
}

void write_aggregate_csv(std::ostream& os, const AggregateTrace& a) {
  os << "step,mean_cum_regret,stderr_cum_regret,mean_inf_regret,stderr_inf_regret,"
        "mean_inf_regret_literal,stderr_inf_regret_literal\n";
  for (std::size_t t = 0; t < a.mean_cumulative.size(); ++t) {
    os << (t + 1) << ',' << format_real(a.mean_cumulative[t]) << ','
       << format_real(a.stderr_cumulative[t]) << ',' << format_real(a.mean_inference[t]) << ','
       << format_real(a.stderr_inference[t]) << ',' << format_real(a.mean_inference_literal[t])
       << ',' << format_real(a.stderr_inference_literal[t]) << '\n';
  }
}

void write_summary_json(std::ostream& os, const RunRecord& record, std::string_view config_json) {
  JsonWriter w(os);
  const bool any = !record.steps.empty();
  w.begin_object();
  w.key("seed").value(record.seed);
  w.key("steps").value(static_cast<std::uint64_t>(record.steps.size()));
  w.key("final_recommendation").value(record.final_recommendation);
  w.key("cum_regret").value(any ? record.regret.cumulative.back() : 0.0);
  w.key("inf_regret").value(any ? record.regret.inference.back() : 0.0);
  w.key("inf_regret_literal").value(any ? record.regret.inference_literal.back() : 0.0);
  w.key("config").raw(config_json.empty() ? std::string_view("{}") : config_json);
  w.end_object();
  os << '\n';
}

void save_params(const std::filesystem::path& path, const NetworkParams<double>& params) {
  auto out = open_out(path);
  put_u64(out, static_cast<std::uint64_t>(params.width()));
  put_u64(out, static_cast<std::uint64_t>(params.depth()));
  put_u64(out, static_cast<std::uint64_t>(params.input_dim()));
  put_u64(out, params.seed());
  for (Eigen::Index i = 0; i < params.theta().size(); ++i) put_f64(out, params.theta()(i));
  for (Eigen::Index i = 0; i < params.frozen_init().size(); ++i) put_f64(out, params.frozen_init()(i));
  finish(out, path);
}

NetworkParams<double> load_params(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto m = get_u64(in), l = get_u64(in), d = get_u64(in), seed = get_u64(in);
  constexpr std::uint64_t cap = 1u << 20;
  if (m == 0 || l == 0 || d == 0 || m > cap || l > cap || d > cap)
    throw IoError("params file: implausible header");
  const NetworkShape shape(static_cast<int>(m), static_cast<int>(l), static_cast<int>(d));
  Eigen::VectorXd theta(shape.num_params()), init(shape.num_params());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = get_f64(in);
  for (Eigen::Index i = 0; i < init.size(); ++i) init(i) = get_f64(in);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("params file: trailing bytes");
  return NetworkParams<double>::restore(shape, std::move(theta), std::move(init), seed);
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

}  // namespace graphbandit
