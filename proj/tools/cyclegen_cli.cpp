// cyclegen command-line driver.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 numeric failure, 4 verification diff non-empty.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cyclegen/harness.hpp"
#include "cyclegen/surrogate.hpp"

using namespace cyclegen;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitDiff = 4;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

CaseSpec load_spec(const Globals& g) {
  if (g.config.empty()) throw UsageError("--config is required for this command");
  CaseSpec s = load_config(g.config);
  if (g.seed) s.seed = *g.seed;
  return s;
}

template <class F>
void write_file(const std::string& path, F&& body) {
  auto out = open_out(path);
  body(out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Graph from --key or from --rank of an existing report.
CycleGraph select_graph(const CaseSpec& spec, const std::string& key, int rank, const std::string& report) {
  const auto roster = make_roster(spec.limits);
  if (!key.empty()) return graph_from_key(roster, key);
  if (!report.empty()) {
    const ExperimentReport rep = load_report(report);
    if (rank < 1 || rank > static_cast<int>(rep.cycles.size()))
      throw UsageError("--rank out of range: report holds " + std::to_string(rep.cycles.size()) + " cycles");
    return graph_from_key(roster, rep.cycles[static_cast<std::size_t>(rank - 1)].key);
  }
  if (auto b = baseline_cycle(roster, spec.mode())) return *b;
  throw UsageError("give --key or --report/--rank");
}

int cmd_train_surrogate(const Globals& g) {
  const CaseSpec spec = load_spec(g);
  const ReferenceFluid reference;
  fs::create_directories(g.out);
  for (Schema s : {Schema::PH2TSQ, Schema::PS2H, Schema::P2TH_SAT, Schema::T2P_SAT}) {
    const std::string name = to_string(s);
    const PropertyDataset ds = generate_dataset(reference, s, spec.surrogate.samples, substream_seed(spec.seed, "data-" + name));
    const TrainResult r = train_surrogate(ds, spec.surrogate.train_config(substream_seed(spec.seed, "train-" + name)));
    save_model(r.model, surrogate_model_path(g.out, s));
    write_file(g.out + "/" + name + "_errors.csv", [&](std::ostream& o) { write_histogram_csv(r.test_report, o); });
    write_file(g.out + "/" + name + "_history.csv", [&](std::ostream& o) {
      o << "epoch,train_loss,val_loss,lr\n";
      for (const auto& e : r.history) o << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << '\n';
    });
    std::cout << name << ": best epoch " << r.best_epoch << (r.early_stopped ? " (early stop)" : "") << '\n';
  }
  return 0;
}

int cmd_enumerate(const Globals& g, bool physical) {
  const CaseSpec spec = load_spec(g);
  EnumerateOptions opt;
  opt.max_edges = spec.env.t_max;
  const auto fluid = make_fluid(spec);
  const DecodeSetup setup = make_setup(spec, *fluid);
  const WorkerOptions w = spec.worker_options();
  if (physical) opt.physical = [&](const CycleGraph& c) { return optimize_parameters(c, setup, w).feasible; };
  const EnumerationResult res = enumerate_valid(spec.limits, opt);
  write_file(g.out + "/enumeration.csv", [&](std::ostream& o) {
    o << "key,nodes,edges\n";
    for (const auto& [k, c] : res.structures)
      o << to_hex(k) << ',' << std::popcount(c.activated_mask()) << ',' << c.edge_count() << '\n';
  });
  int i = 0;
  for (const auto& [k, c] : res.structures) {
    ++i;
    export_dot(c, g.out + "/structures/" + std::to_string(i) + ".dot", "structure" + std::to_string(i));
  }
  std::cout << res.structures.size() << (physical ? " physically feasible" : " valid") << " structures ("
            << res.structurally_valid << " structurally valid, " << res.states_visited << " states)\n";
  return 0;
}

int cmd_decode(const Globals& g, const std::string& key, int rank, const std::string& report, const std::string& x_text) {
  const CaseSpec spec = load_spec(g);
  const auto fluid = make_fluid(spec);
  const DecodeSetup setup = make_setup(spec, *fluid);
  const CycleGraph c = select_graph(spec, key, rank, report);
  const ParameterSpace sp = parameter_space(c, spec.oc);
  const Eigen::VectorXd x = parse_x_m(sp, x_text);
  const DecodeResult d = decode(c, x, *fluid, setup.params, setup.oc, setup.decode);
  write_file(g.out + "/states.csv", [&](std::ostream& o) { write_state_csv(d.states, o); });
  export_dot(c, g.out + "/cycle.dot");
  std::vector<std::string> names;
  for (const auto& v : sp.vars) names.push_back(v.name);
  nlohmann::json j{{"key", to_hex(canonical_form(c))}, {"x_m", format_x_m(names, x)},  {"converged", d.converged},
                   {"residual_norm", d.residual_norm}, {"feasible", d.feasible},    {"pinch_ok", d.pinch_ok},
                   {"diagnostics", d.diagnostics}};
  j["performance"] = d.performance ? nlohmann::json(*d.performance) : nlohmann::json(nullptr);
  write_file(g.out + "/decode.json", [&](std::ostream& o) { o << j.dump(1) << '\n'; });
  std::cout << (d.feasible ? "feasible" : "infeasible");
  if (d.performance) std::cout << ", performance " << *d.performance;
  std::cout << '\n';
  for (const auto& m : d.diagnostics) std::cout << "  " << m << '\n';
  return 0;
}

int cmd_optimize(const Globals& g, const std::string& key, int rank, const std::string& report) {
  const CaseSpec spec = load_spec(g);
  const auto fluid = make_fluid(spec);
  const DecodeSetup setup = make_setup(spec, *fluid);
  const CycleGraph c = select_graph(spec, key, rank, report);
  const ParameterSpace sp = parameter_space(c, spec.oc);
  const WorkerResult w = optimize_parameters(c, setup, spec.worker_options(true));
  write_file(g.out + "/evaluations.csv", [&](std::ostream& o) { write_evaluation_csv(sp, w, o); });
  std::vector<std::string> names;
  for (const auto& v : sp.vars) names.push_back(v.name);
  std::cout << (w.feasible ? "feasible" : "infeasible") << ", best " << w.best_objective << " at "
            << format_x_m(names, w.best_x_m) << '\n';
  return 0;
}

int cmd_train_agent(const Globals& g) {
  const CaseSpec spec = load_spec(g);
  const ExperimentReport rep = run_experiment(spec, g.out);
  std::cout << rep.cycles.size() << " feasible cycles discovered";
  if (!rep.cycles.empty()) std::cout << ", best " << rep.cycles.front().performance << " (" << rep.cycles.front().tag << ")";
  if (!rep.training.empty()) std::cout << ", final valid rate " << rep.training.back().rolling_valid_rate;
  std::cout << '\n';
  return 0;
}

int cmd_baseline(const Globals& g) {
  const CaseSpec spec = load_spec(g);
  const auto fluid = make_fluid(spec);
  const DecodeSetup setup = make_setup(spec, *fluid);
  fs::create_directories(g.out);
  WorkerCache cache(g.out + "/worker_cache.txt");
  CycleEnvironment env(spec.limits, setup, spec.worker_options(), &cache, spec.env);
  ExperimentReport rep;
  rep.spec = spec;
  rep.baseline = run_baseline(spec, setup);
  rep.random_unmasked = random_search(env, spec.random_episodes, spec.seed, false);
  rep.random_masked = random_search(env, spec.random_episodes, spec.seed, true);
  write_file(g.out + "/baseline.csv", [&](std::ostream& o) { write_baseline_csv(rep, o); });
  write_file(g.out + "/random_search.csv", [&](std::ostream& o) { write_random_csv(rep, o); });
  std::cout << rep.baseline.name << ": " << (rep.baseline.feasible ? std::to_string(rep.baseline.performance) : "n/a")
            << "; random valid rate " << rep.random_unmasked.valid_rate << " unmasked, " << rep.random_masked.valid_rate
            << " masked\n";
  return 0;
}

int cmd_verify(const Globals& g, const std::string& report) {
  const CaseSpec spec = load_spec(g);
  std::set<std::string> agent;
  if (!report.empty()) {
    for (const auto& c : load_report(report).cycles) agent.insert(c.key);
  } else {
    for (const auto& c : run_experiment(spec, g.out).cycles) agent.insert(c.key);
  }
  fs::create_directories(g.out);
  WorkerCache cache(g.out + "/worker_cache.txt");
  const OracleDiff d = verify_against_oracle(spec, agent, &cache);
  write_file(g.out + "/oracle_diff.csv", [&](std::ostream& o) { write_diff_csv(d, o); });
  std::cout << "oracle " << d.oracle.size() << ", agent " << d.agent.size() << ", missing " << d.missing.size()
            << ", extra " << d.extra.size() << '\n';
  return d.empty() ? 0 : kExitDiff;
}

int cmd_export(const Globals& g, const std::string& report) {
  if (report.empty()) throw UsageError("export needs --report");
  const ExperimentReport rep = load_report(report);
  export_csv(rep, g.out + "/report.csv");
  export_curves(rep.training, g.out + "/curves.csv");
  export_training_log(rep.training, g.out + "/training_log.csv");
  int rank = 0;
  for (const auto& c : rep.cycles) {
    ++rank;
    export_dot(c.graph, g.out + "/cycles/" + std::to_string(rank) + "_" + c.tag + ".dot", "cycle" + std::to_string(rank));
  }
  std::cout << "exported " << rep.cycles.size() << " cycles to " << g.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermodynamic cycle structure generation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "case configuration (YAML)");
  auto* seed_opt = app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.fallthrough();

  std::string key, report, x_text;
  int rank = 1;
  bool physical = false;
  auto add_select = [&](CLI::App* s) {
    s->add_option("--key", key, "canonical key (hex)");
    s->add_option("--report", report, "report.json from train-agent");
    s->add_option("--rank", rank, "1-based rank within --report");
  };

  auto* train_surrogate = app.add_subcommand("train-surrogate", "train the four property surrogates");
  auto* enumerate = app.add_subcommand("enumerate", "enumerate grammar-valid structures");
  enumerate->add_flag("--physical", physical, "keep only structures with a feasible operating point");
  auto* decode_cmd = app.add_subcommand("decode", "solve one structure at given parameters");
  add_select(decode_cmd);
  decode_cmd->add_option("--x", x_text, "parameters as name=value;name=value");
  auto* optimize = app.add_subcommand("optimize-params", "Bayesian optimization of one structure's parameters");
  add_select(optimize);
  auto* train_agent = app.add_subcommand("train-agent", "train the structure agent and write the report");
  auto* baseline = app.add_subcommand("baseline", "evaluate the baseline cycle and random search");
  auto* verify = app.add_subcommand("verify", "compare discoveries against the enumeration oracle");
  verify->add_option("--report", report, "report.json to verify instead of training");
  auto* export_cmd = app.add_subcommand("export", "re-export CSV and DOT files from a report");
  export_cmd->add_option("--report", report, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*train_surrogate) return cmd_train_surrogate(g);
    if (*enumerate) return cmd_enumerate(g, physical);
    if (*decode_cmd) return cmd_decode(g, key, rank, report, x_text);
    if (*optimize) return cmd_optimize(g, key, rank, report);
    if (*train_agent) return cmd_train_agent(g);
    if (*baseline) return cmd_baseline(g);
    if (*verify) return cmd_verify(g, report);
    if (*export_cmd) return cmd_export(g, report);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingDiverged& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DomainError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const GpError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
