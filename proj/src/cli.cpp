#include "graphbandit/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "graphbandit/error.hpp"
#include "graphbandit/gp.hpp"
#include "graphbandit/graph.hpp"
#include "graphbandit/io.hpp"
#include "graphbandit/kernels.hpp"
#include "graphbandit/plot.hpp"
#include "graphbandit/rng.hpp"

namespace graphbandit {

namespace {

using nlohmann::json;
using Cfg = ExperimentConfig;

// One config field: JSON in and out, flag registration and copy from the
// flag staging area.
struct Field {
  std::string name;
  std::function<void(Cfg&, const json&)> read;
  std::function<void(JsonWriter&, const Cfg&)> write;
  std::function<CLI::Option*(CLI::App&, const std::string&, Cfg&)> add;
  std::function<void(Cfg&, const Cfg&)> copy;
};

template <typename T>
void write_value(JsonWriter& w, const T& v) {
  if constexpr (std::is_same_v<T, std::optional<double>>) {
    if (v)
      w.value(*v);
    else
      w.null();
  } else if constexpr (std::is_same_v<T, std::string>) {
    w.value(std::string_view(v));
  } else if constexpr (std::is_same_v<T, int>) {
    w.value(static_cast<std::int64_t>(v));
  } else {
    w.value(v);
  }
}

template <typename T>
Field field(const char* name, T Cfg::*mp, const char* help) {
  Field f;
  f.name = name;
  f.read = [mp, name](Cfg& c, const json& j) {
    try {
      if constexpr (std::is_same_v<T, std::optional<double>>) {
        c.*mp = j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
      } else {
        c.*mp = j.get<T>();
      }
    } catch (const json::exception&) {
      throw InvalidArgument(std::string("config field '") + name + "' has the wrong type");
    }
  };
  f.write = [mp](JsonWriter& w, const Cfg& c) { write_value(w, c.*mp); };
  f.add = [mp, help](CLI::App& app, const std::string& flag, Cfg& staging) -> CLI::Option* {
    if constexpr (std::is_same_v<T, bool>)
      return app.add_flag(flag, staging.*mp, help);
    else
      return app.add_option(flag, staging.*mp, help);
  };
  f.copy = [mp](Cfg& dst, const Cfg& src) { dst.*mp = src.*mp; };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("domain", &Cfg::domain, "domain JSON file"),
      field("count", &Cfg::count, "number of graphs"),
      field("nodes", &Cfg::nodes, "nodes per graph"),
      field("edge_prob", &Cfg::edge_prob, "Erdos-Renyi edge probability"),
      field("dim", &Cfg::dim, "feature dimension"),
      field("domain_seed", &Cfg::domain_seed, "seed of the generated domain"),
      field("reward", &Cfg::reward, "reward JSON file"),
      field("anchors", &Cfg::anchors, "number of anchor points of the reward posterior"),
      field("reward_seed", &Cfg::reward_seed, "seed of the sampled reward"),
      field("reward_lambda", &Cfg::reward_lambda, "GP regulariser of the reward posterior"),
      field("kernel", &Cfg::kernel, "gntk | ntk-vanilla"),
      field("kernel_depth", &Cfg::kernel_depth, "NTK depth, 0 = network depth + 1"),
      field("algorithm", &Cfg::algorithm, "gnn-pe | nn-pe | gnn-ucb | nn-ucb"),
      field("width", &Cfg::width, "network width m"),
      field("depth", &Cfg::depth, "hidden layers L"),
      field("steps", &Cfg::steps, "horizon T"),
      field("repeats", &Cfg::repeats, "independent repeats"),
      field("noise", &Cfg::noise, "observation noise standard deviation"),
      field("noise_is_variance", &Cfg::noise_is_variance, "read --noise as a variance"),
      field("seed", &Cfg::seed, "master seed"),
      field("precision", &Cfg::precision, "float32 | float64"),
      field("B", &Cfg::B, "RKHS norm bound"),
      field("sigma", &Cfg::sigma, "noise level in the confidence width"),
      field("lambda", &Cfg::lambda, "confidence regulariser"),
      field("delta", &Cfg::delta, "failure probability"),
      field("beta", &Cfg::beta, "fixed confidence width"),
      field("diagonal", &Cfg::diagonal, "diagonal design approximation"),
      field("eps", &Cfg::eps, "elimination slack"),
      field("design", &Cfg::design, "averaged | summed"),
      field("optimizer", &Cfg::optimizer, "adam | gd"),
      field("eta", &Cfg::eta, "learning rate"),
      field("train_lambda", &Cfg::train_lambda, "weight decay towards theta0"),
      field("max_steps", &Cfg::max_steps, "optimiser step cap"),
      field("stop_loss", &Cfg::stop_loss, "stop below this loss"),
      field("stop_rel_decay", &Cfg::stop_rel_decay, "stop below this relative loss change"),
      field("practical", &Cfg::practical, "warm-up, batched retraining, one-step episodes"),
      field("warmup_steps", &Cfg::warmup_steps, "random exploration steps"),
      field("retrain_every_until", &Cfg::retrain_every_until, "retrain every step up to here"),
      field("retrain_batch", &Cfg::retrain_batch, "retrain period afterwards"),
      field("elimination_start", &Cfg::elimination_start, "first step of nested elimination"),
      field("warm_start", &Cfg::warm_start, "retrain from the previous weights"),
      field("horizon", &Cfg::horizon, "MIG horizon"),
      field("mig_lambda", &Cfg::mig_lambda, "MIG regulariser"),
      field("kernels", &Cfg::kernels, "comma separated kernel tags"),
      field("out", &Cfg::out, "output path"),
      field("svg", &Cfg::svg, "SVG chart path"),
  };
  return table;
}

const Field& find_field(std::string_view name) {
  for (const auto& f : fields())
    if (f.name == name) return f;
  throw InvalidArgument("unknown config field: " + std::string(name));
}

std::string flag_name(std::string name) {
  for (auto& c : name)
    if (c == '_') c = '-';
  return "--" + name;
}

struct Bound {
  CLI::Option* option;
  const Field* field;
};

// A subcommand with its flags staged separately from the resolved config.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<Bound> bound;

  // Flag --flag bound to config field `name`.
  void bind(Cfg& staging, std::string_view name, std::string flag = {}) {
    const Field& f = find_field(name);
    if (flag.empty()) flag = flag_name(f.name);
    bound.push_back({f.add(*app, flag, staging), &f});
  }

  Cfg resolve(const Cfg& staging) const {
    Cfg cfg;
    if (!config_path.empty()) apply_config_json(cfg, read_text_file(config_path));
    for (const auto& b : bound)
      if (b.option->count() > 0) b.field->copy(cfg, staging);
    cfg.validate();
    return cfg;
  }
};

std::string num(double x) {
  std::ostringstream ss;
  ss.precision(6);
  ss << x;
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

GraphDomain resolve_domain(const Cfg& cfg) {
  if (!cfg.domain.empty()) return load_domain(cfg.domain);
  return gen_erdos_renyi(static_cast<std::size_t>(cfg.count), cfg.nodes, cfg.edge_prob, cfg.dim,
                         cfg.domain_seed);
}

RewardTable resolve_reward(const Cfg& cfg, const GraphDomain& domain) {
  RewardTable table = cfg.reward.empty()
                          ? sample_reward(domain, parse_kernel_tag(cfg.kernel),
                                          NtkDepth(resolved_kernel_depth(cfg)), cfg.anchors,
                                          cfg.reward_seed, cfg.reward_lambda)
                          : load_reward(cfg.reward);
  if (static_cast<std::size_t>(table.values.size()) != domain.size())
    throw InvalidArgument("reward table size differs from the domain size");
  return table;
}

std::filesystem::path require_out(const Cfg& cfg) {
  if (cfg.out.empty()) throw InvalidArgument("--out is required");
  return cfg.out;
}

int cmd_gen_domain(const Cfg& cfg, std::ostream& out) {
  const auto path = require_out(cfg);
  const auto domain = gen_erdos_renyi(static_cast<std::size_t>(cfg.count), cfg.nodes,
                                      cfg.edge_prob, cfg.dim, cfg.domain_seed);
  save_domain(path, domain);
  out << "count=" << domain.size() << " N=" << cfg.nodes << " p=" << num(cfg.edge_prob)
      << " d=" << cfg.dim << " mean_edges=" << num(domain.mean_edge_count()) << '\n';
  return kExitOk;
}

int cmd_sample_reward(const Cfg& cfg, std::ostream& out) {
  const auto path = require_out(cfg);
  if (cfg.domain.empty()) throw InvalidArgument("--domain is required");
  const auto domain = load_domain(cfg.domain);
  const auto table = sample_reward(domain, parse_kernel_tag(cfg.kernel),
                                   NtkDepth(resolved_kernel_depth(cfg)), cfg.anchors,
                                   cfg.reward_seed, cfg.reward_lambda);
  save_reward(path, table);
  out << "argmax=" << table.argmax << " value=" << format_real(table.best()) << '\n';
  return kExitOk;
}

int cmd_run(const Cfg& cfg, std::ostream& out, std::ostream& err) {
  const auto dir = require_out(cfg);
  const auto domain = resolve_domain(cfg);
  const auto reward = resolve_reward(cfg, domain);
  const Algorithm algorithm = parse_algorithm(cfg.algorithm);
  std::filesystem::create_directories(dir);
  const std::string echo = config_to_json(cfg);

  std::vector<RunRecord> runs;
  for (int r = 0; r < cfg.repeats; ++r) {
    RunConfig rc = to_run_config(cfg);
    rc.seed = repeat_seed(cfg.seed, r);
    RunRecord rec = run_algorithm(algorithm, domain, reward, rc);
    {
      std::ostringstream csv;
      write_run_csv(csv, rec);
      write_text_file(dir / ("run_" + std::to_string(r) + ".csv"), csv.str());
      std::ostringstream summary;
      write_summary_json(summary, rec, echo);
      write_text_file(dir / ("summary_" + std::to_string(r) + ".json"), summary.str());
    }
    out << "repeat " << r << " seed=" << rc.seed << " recommendation=" << rec.final_recommendation
        << " cum_regret=" << num(rec.regret.cumulative.back())
        << " inf_regret=" << num(rec.regret.inference.back()) << '\n';
    err << "repeat " << r << " took " << num(rec.wall_clock_seconds) << " s\n";
    runs.push_back(std::move(rec));
  }

  const auto agg = aggregate_runs(runs);
  std::ostringstream csv;
  write_aggregate_csv(csv, agg);
  write_text_file(dir / "aggregate.csv", csv.str());
  out << "mean inf_regret at T=" << cfg.steps << ": " << num(agg.mean_inference.back()) << " +- "
      << num(agg.stderr_inference.back()) << '\n';

  if (!cfg.svg.empty()) {
    PlotOptions opt;
    opt.title = cfg.algorithm + ": inference regret";
    opt.y_label = "inference regret";
    const std::vector<PlotSeries> series = {{cfg.algorithm, agg.mean_inference, agg.stderr_inference}};
    write_text_file(cfg.svg, line_chart_svg(series, opt));
  }
  return kExitOk;
}

std::string column_name(KernelTag tag) {
  std::string s(to_string(tag));
  for (auto& c : s)
    if (c == '-') c = '_';
  return "gain_" + s;
}

int cmd_mig(const Cfg& cfg, std::ostream& out) {
  const auto domain = resolve_domain(cfg);
  const auto horizon = static_cast<std::size_t>(cfg.horizon);
  const NtkDepth depth(resolved_kernel_depth(cfg));
  std::vector<KernelTag> tags;
  for (const auto& name : split_list(cfg.kernels)) tags.push_back(parse_kernel_tag(name));
  if (tags.empty()) throw InvalidArgument("--kernels is empty");

  std::vector<MigCurve> curves;
  for (auto tag : tags) curves.push_back(greedy_mig_curve(domain, tag, depth, horizon, cfg.mig_lambda));

  if (!cfg.out.empty()) {
    std::ostringstream csv;
    csv << 't';
    for (auto tag : tags) csv << ',' << column_name(tag);
    csv << '\n';
    for (std::size_t t = 0; t < horizon; ++t) {
      csv << (t + 1);
      for (const auto& c : curves) csv << ',' << format_real(c.gain[t]);
      csv << '\n';
    }
    write_text_file(cfg.out, csv.str());
  }
  const std::size_t lo = std::max<std::size_t>(1, horizon / 2);
  for (std::size_t k = 0; k < tags.size(); ++k) {
    out << to_string(tags[k]) << ": gain(T)=" << num(curves[k].gain.back());
    if (horizon >= 2) out << " tail slope=" << num(loglog_slope(curves[k].gain, lo, horizon));
    out << '\n';
  }
  return kExitOk;
}

int cmd_kernel(const Cfg& cfg, std::ostream& out) {
  const auto domain = resolve_domain(cfg);
  const KernelTag tag = parse_kernel_tag(cfg.kernel);
  const NtkDepth depth(resolved_kernel_depth(cfg));
  const auto agg = aggregate(domain);
  const auto k = kernel_matrix(agg, tag, depth);
  if (!cfg.out.empty()) {
    std::ostringstream csv;
    write_matrix_csv(csv, k.entries);
    write_text_file(cfg.out, csv.str());
  }
  out << "size=" << k.size() << " min_eig=" << num(min_eigenvalue(k))
      << " max_eig=" << num(max_eigenvalue(k)) << '\n';

  const auto base = [&](const AggregatedGraph& a, const AggregatedGraph& b) {
    return tag == KernelTag::gntk ? gntk(a, b, depth) : ntk_vanilla(a, b, depth);
  };
  const std::size_t probe = std::min<std::size_t>(domain.size(), 5);
  double perm_delta = 0.0;
  for (std::size_t i = 0; i < probe; ++i) {
    const auto c = Permutation::random(domain.num_nodes(), cfg.seed, i);
    const auto moved = aggregate(permute(domain[i], c));
    for (std::size_t j = 0; j < probe; ++j)
      perm_delta = std::max(perm_delta, std::abs(base(moved, agg[j]) - k.entries(Eigen::Index(i), Eigen::Index(j))));
  }
  out << "permutation spot-check: max|delta|=" << num(perm_delta)
      << (perm_delta == 0.0 ? " (invariant)" : " (not invariant)") << '\n';

  if (tag == KernelTag::gntk && domain.num_nodes() <= kBruteforceMaxNodes) {
    const std::size_t limit = std::min<std::size_t>(domain.size(), 8);
    double worst = 0.0;
    for (std::size_t i = 0; i < limit; ++i)
      for (std::size_t j = i; j < limit; ++j)
        worst = std::max(worst, std::abs(kbar_bruteforce(agg[i], agg[j], depth) -
                                         k.entries(Eigen::Index(i), Eigen::Index(j))));
    out << "oracle: max|delta|=" << num(worst) << "; max|Δ| < 1e-10: " << (worst < 1e-10 ? "PASS" : "FAIL")
        << '\n';
  }
  return kExitOk;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (count < 1) throw InvalidArgument("count must be >= 1");
  if (nodes < 1) throw InvalidArgument("nodes must be >= 1");
  if (dim < 1) throw InvalidArgument("dim must be >= 1");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw InvalidArgument("edge_prob must lie in [0, 1]");
  if (width < 1 || depth < 1) throw InvalidArgument("width and depth must be >= 1");
  if (kernel_depth < 0) throw InvalidArgument("kernel_depth must be >= 0");
  if (anchors < 0) throw InvalidArgument("anchors must be >= 0");
  if (!(noise >= 0.0)) throw InvalidArgument("noise must be nonnegative");
  if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
  if (!(mig_lambda > 0.0)) throw InvalidArgument("mig_lambda must be positive");
  if (precision != "float32" && precision != "float64")
    throw InvalidArgument("precision must be float32 or float64");
  if (design != "averaged" && design != "summed") throw InvalidArgument("design must be averaged or summed");
  if (optimizer != "adam" && optimizer != "gd") throw InvalidArgument("optimizer must be adam or gd");
  parse_kernel_tag(kernel);
  parse_algorithm(algorithm);
  for (const auto& name : split_list(kernels)) parse_kernel_tag(name);
  to_run_config(*this).confidence.validate();
  to_run_config(*this).train.validate();
}

void apply_config_json(ExperimentConfig& cfg, std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& [key, value] : j.items()) find_field(key).read(cfg, value);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  std::ostringstream os;
  JsonWriter w(os);
  w.begin_object();
  for (const auto& f : fields()) {
    w.key(f.name);
    f.write(w, cfg);
  }
  w.end_object();
  return os.str();
}

int resolved_kernel_depth(const ExperimentConfig& cfg) {
  return cfg.kernel_depth > 0 ? cfg.kernel_depth : kernel_depth_for_network(cfg.depth).layers();
}

RunConfig to_run_config(const ExperimentConfig& cfg) {
  RunConfig rc;
  rc.width = cfg.width;
  rc.depth = cfg.depth;
  rc.steps = static_cast<std::size_t>(std::max(cfg.steps, 0));
  rc.noise_sigma = cfg.noise_is_variance ? std::sqrt(cfg.noise) : cfg.noise;
  rc.seed = cfg.seed;
  rc.precision = cfg.precision == "float64" ? Precision::float64 : Precision::float32;
  rc.confidence.B = cfg.B;
  rc.confidence.sigma = cfg.sigma;
  rc.confidence.lambda = cfg.lambda;
  rc.confidence.delta = cfg.delta;
  rc.confidence.beta_override = cfg.beta;
  rc.confidence.use_diagonal_approx = cfg.diagonal;
  rc.confidence.elimination_slack = cfg.eps;
  rc.confidence.scaling = cfg.design == "summed" ? DesignScaling::summed : DesignScaling::averaged;
  rc.train.optimizer = cfg.optimizer == "gd" ? Optimizer::plain_gd : Optimizer::adam;
  rc.train.eta = cfg.eta;
  rc.train.lambda = cfg.train_lambda;
  rc.train.max_steps = cfg.max_steps;
  rc.train.stop_loss = cfg.stop_loss;
  rc.train.stop_rel_decay = cfg.stop_rel_decay;
  rc.practical.enabled = cfg.practical;
  rc.practical.warmup_steps = cfg.warmup_steps;
  rc.practical.retrain_every_until = cfg.retrain_every_until;
  rc.practical.retrain_batch = cfg.retrain_batch;
  rc.practical.elimination_start = cfg.elimination_start;
  rc.practical.warm_start = cfg.warm_start;
  return rc;
}

std::uint64_t repeat_seed(std::uint64_t master, int repeat) {
  return derive_seed(master, "repeat", static_cast<std::uint64_t>(repeat));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bandit optimisation over graph domains"};
  app.require_subcommand(1);
  Cfg staging;

  auto make = [&](const char* name, const char* help) {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->app->add_option("--config", c->config_path, "JSON config file");
    return c;
  };
  const std::vector<std::string> domain_fields = {"domain", "count", "nodes", "edge_prob", "dim",
                                                  "domain_seed"};

  auto gen = make("gen-domain", "generate an Erdos-Renyi graph domain");
  for (auto n : {"count", "nodes", "edge_prob", "dim", "out"}) gen->bind(staging, n);
  gen->bind(staging, "domain_seed", "--seed");

  auto reward = make("sample-reward", "sample a reward function from the kernel posterior");
  for (auto n : {"domain", "anchors", "kernel", "kernel_depth", "depth", "out"}) reward->bind(staging, n);
  reward->bind(staging, "reward_seed", "--seed");
  reward->bind(staging, "reward_lambda", "--lambda");

  auto run = make("run", "run a bandit algorithm");
  for (const auto& f : fields())
    if (f.name != "horizon" && f.name != "mig_lambda" && f.name != "kernels") run->bind(staging, f.name);

  auto mig = make("mig", "greedy maximum information gain curves");
  for (const auto& n : domain_fields) mig->bind(staging, n);
  for (auto n : {"kernels", "kernel_depth", "depth", "horizon", "out"}) mig->bind(staging, n);
  mig->bind(staging, "mig_lambda", "--lambda");

  auto kern = make("kernel", "kernel matrix and diagnostics");
  for (const auto& n : domain_fields) kern->bind(staging, n);
  for (auto n : {"kernel", "kernel_depth", "depth", "seed", "out"}) kern->bind(staging, n);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->app->parsed()) return cmd_gen_domain(gen->resolve(staging), out);
    if (reward->app->parsed()) return cmd_sample_reward(reward->resolve(staging), out);
    if (run->app->parsed()) return cmd_run(run->resolve(staging), out, err);
    if (mig->app->parsed()) return cmd_mig(mig->resolve(staging), out);
    if (kern->app->parsed()) return cmd_kernel(kern->resolve(staging), out);
  } catch (const NonFiniteLoss& e) {
    err << "error: " << e.what() << '\n';
    return kExitNonFiniteLoss;
  } catch (const NumericalFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace graphbandit
