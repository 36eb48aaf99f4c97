#pragma once

// Experiment orchestration: agent training, random-search baselines, a
// full-budget Worker pass over every discovered structure, classification,
// oracle comparison, and report/export files.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cyclegen/config.hpp"
#include "cyclegen/decoder.hpp"
#include "cyclegen/grammar.hpp"
#include "cyclegen/manager.hpp"
#include "cyclegen/worker.hpp"

namespace cyclegen {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kReportFormat = "cyclegen-report-1";

// ---------------------------------------------------------------------------
// Classification

enum class CycleClass { Simple, HighMidPressureSplit, LowPressureSplit, SingleStage, TwoStage, ParallelCompression };

inline std::string to_string(CycleClass c) {
  switch (c) {
    case CycleClass::Simple: return "Simple";
    case CycleClass::HighMidPressureSplit: return "HighMidPressureSplit";
    case CycleClass::LowPressureSplit: return "LowPressureSplit";
    case CycleClass::SingleStage: return "SingleStage";
    case CycleClass::TwoStage: return "TwoStage";
    case CycleClass::ParallelCompression: return "ParallelCompression";
  }
  return "?";
}

inline CycleClass parse_cycle_class(const std::string& s) {
  for (auto c : {CycleClass::Simple, CycleClass::HighMidPressureSplit, CycleClass::LowPressureSplit,
                 CycleClass::SingleStage, CycleClass::TwoStage, CycleClass::ParallelCompression})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown cycle class '" + s + "'");
}

/// Nodes whose outflow divides into two streams: external out-degree 2, or a
/// separator vessel.
inline std::vector<int> split_nodes(const CycleGraph& g) {
  const Roster& r = g.roster();
  std::vector<int> out;
  const std::uint32_t act = g.activated_mask();
  for (int i = 0; i < g.size(); ++i) {
    if (!((act >> i) & 1u)) continue;
    int ext = 0;
    for (int j = 0; j < g.size(); ++j)
      if (g.edge(i, j) && !r.internal_edge(i, j)) ++ext;
    if (ext >= 2 || r.kind(i) == NodeKind::Separator) out.push_back(i);
  }
  return out;
}

/// Heat engines: by compressor arrangement. Heat pumps: by whether any split
/// node sits at or above `p_mid`; `inlet_pressure` maps node -> solved inlet
/// pressure and is only consulted when the graph has a split.
inline CycleClass classify_cycle(const CycleGraph& g, CycleMode mode,
                                 const std::function<double(int)>& inlet_pressure = {}, double p_mid = 0.0) {
  const Roster& r = g.roster();
  const std::uint32_t act = g.activated_mask();
  if (mode == CycleMode::HeatEngine) {
    std::vector<int> cps;
    for (int i = 0; i < g.size(); ++i)
      if (((act >> i) & 1u) && r.kind(i) == NodeKind::Compressor) cps.push_back(i);
    if (cps.size() < 2) return CycleClass::SingleStage;
    // Series: compressed flow reaches another compressor without expanding.
    auto reaches = [&](int from, int to) {
      std::vector<bool> seen(static_cast<std::size_t>(g.size()), false);
      std::vector<int> stack{from};
      while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w = 0; w < g.size(); ++w) {
          if (!g.edge(v, w) || seen[static_cast<std::size_t>(w)]) continue;
          if (w == to) return true;
          seen[static_cast<std::size_t>(w)] = true;
          if (kind_info(r.kind(w)).dp < 0) continue;
          stack.push_back(w);
        }
      }
      return false;
    };
    for (int a : cps)
      for (int b : cps)
        if (a != b && reaches(a, b)) return CycleClass::TwoStage;
    return CycleClass::ParallelCompression;
  }
  const auto splits = split_nodes(g);
  if (splits.empty()) return CycleClass::Simple;
  if (!inlet_pressure) throw std::invalid_argument("classify_cycle: split heat-pump cycle needs solved pressures");
  for (int s : splits)
    if (inlet_pressure(s) >= p_mid) return CycleClass::HighMidPressureSplit;
  return CycleClass::LowPressureSplit;
}

/// Midpoint of the solved suction and discharge pressures; bound centers
/// stand in for zones the graph does not have.
inline double pressure_midpoint(const ParameterSpace& sp, const Eigen::VectorXd& x_m, const OperatingCase& oc) {
  auto value = [&](const char* name, double lo, double hi) {
    const auto i = sp.index(name);
    return i && *i < x_m.size() ? x_m(*i) : 0.5 * (lo + hi);
  };
  return 0.5 * (value("p_suc", oc.p_suc_lo, oc.p_suc_hi) + value("p_dis", oc.p_dis_lo, oc.p_dis_hi));
}

/// Decodes at x_m and classifies from the solved state.
inline CycleClass classify_solved(const CycleGraph& g, const DecodeSetup& setup, const Eigen::VectorXd& x_m) {
  if (setup.oc.mode == CycleMode::HeatEngine || split_nodes(g).empty()) return classify_cycle(g, setup.oc.mode);
  const ResidualSystem sys = assemble(g, setup.oc);
  const DecodeResult d = decode(sys, x_m, *setup.fluid, setup.params, setup.oc, setup.decode);
  std::map<int, double> p_in;
  for (const auto& st : d.states)
    if (st.port.rfind("in", 0) == 0 && !p_in.count(st.node)) p_in[st.node] = st.p;
  const double p_mid = pressure_midpoint(sys.space, x_m, setup.oc);
  return classify_cycle(
      g, setup.oc.mode, [&](int n) { return p_in.count(n) ? p_in.at(n) : 0.0; }, p_mid);
}

// ---------------------------------------------------------------------------
// Keys and parameter text

/// The graph a canonical key encodes, laid out on `roster` directly. Keys
/// only permute same-kind nodes, so position kinds must match the roster.
inline CycleGraph graph_from_key(std::shared_ptr<const Roster> roster, const std::string& hex) {
  const CanonicalKey key = from_hex(hex);
  const int n = roster->size();
  const int row_bytes = (n + 7) / 8;
  if (key.empty() || static_cast<unsigned char>(key[0]) != n ||
      key.size() != static_cast<std::size_t>(1 + n + n * row_bytes))
    throw std::invalid_argument("key does not fit a roster of " + std::to_string(n) + " nodes");
  for (int a = 0; a < n; ++a)
    if (static_cast<unsigned char>(key[static_cast<std::size_t>(1 + a)]) != static_cast<unsigned>(roster->kind(a)))
      throw std::invalid_argument("key node kinds do not match the roster");
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(n), 0u);
  std::size_t pos = static_cast<std::size_t>(1 + n);
  for (int a = 0; a < n; ++a)
    for (int k = 0; k < row_bytes; ++k)
      rows[static_cast<std::size_t>(a)] |= static_cast<std::uint32_t>(static_cast<unsigned char>(key[pos++])) << (8 * k);
  CycleGraph g = CycleGraph::from_rows(std::move(roster), std::move(rows));
  if (to_hex(canonical_form(g)) != hex) throw std::invalid_argument("key is not in canonical form");
  return g;
}

/// Parses "name=value;name=value" over `space`; unnamed variables keep their nominal value.
inline Eigen::VectorXd parse_x_m(const ParameterSpace& space, const std::string& text) {
  Eigen::VectorXd x = space.nominal();
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const auto i = space.index(name);
    if (!i) throw std::invalid_argument("unknown parameter '" + name + "'");
    std::size_t used = 0;
    const std::string v = item.substr(eq + 1);
    double value = 0.0;
    try {
      value = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty()) throw std::invalid_argument("bad value for '" + name + "'");
    x(*i) = value;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Reports

struct DiscoveredCycle {
  std::string key;
  CycleGraph graph;
  std::vector<std::string> variables;
  Eigen::VectorXd best_x_m;
  double performance = 0.0;
  std::string tag;
  int episode = 0;  // first discovery by the agent
};

struct BaselineResult {
  std::string name;
  bool available = false;  // roster holds the baseline components
  bool feasible = false;
  double performance = 0.0;
  Eigen::VectorXd best_x_m;
};

struct ExperimentReport {
  CaseSpec spec;
  std::vector<DiscoveredCycle> cycles;  // best first
  std::vector<TrainingLogRow> training;
  RandomSearchStats random_unmasked;
  RandomSearchStats random_masked;
  BaselineResult baseline;
  nlohmann::json metadata;
};

inline DecodeSetup make_setup(const CaseSpec& spec, const FluidModel& fluid) {
  DecodeSetup s;
  s.fluid = &fluid;
  s.params = spec.params;
  s.oc = spec.oc;
  return s;
}

inline int node_by_label(const Roster& r, const std::string& label) {
  for (int i = 0; i < r.size(); ++i)
    if (r.label(i) == label) return i;
  return -1;
}

/// Closed loop through the given node labels, or nullopt if any is missing.
inline std::optional<CycleGraph> loop_graph(std::shared_ptr<const Roster> roster, const std::vector<std::string>& labels) {
  CycleGraph g(roster);
  std::vector<int> ids;
  for (const auto& l : labels) {
    const int i = node_by_label(*roster, l);
    if (i < 0) return std::nullopt;
    ids.push_back(i);
  }
  for (std::size_t k = 0; k < ids.size(); ++k) g = apply_action(g, ids[k], ids[(k + 1) % ids.size()]);
  return g;
}

/// Simple Brayton for engines, single-stage vapor compression for heat pumps.
inline std::optional<CycleGraph> baseline_cycle(std::shared_ptr<const Roster> roster, CycleMode mode) {
  if (mode == CycleMode::HeatEngine) return loop_graph(std::move(roster), {"CP#1", "HT#1", "TB#1", "CL#1"});
  return loop_graph(std::move(roster), {"CP#1", "GC#1", "EV#1", "EVP#1"});
}

/// Best of the candidate points after re-decoding each; nullopt when none is feasible.
inline std::optional<std::pair<Eigen::VectorXd, double>> best_redecoded(const CycleGraph& g, const DecodeSetup& setup,
                                                                          const std::vector<Eigen::VectorXd>& candidates) {
  const ResidualSystem sys = assemble(g, setup.oc);
  std::optional<std::pair<Eigen::VectorXd, double>> best;
  for (const auto& x : candidates) {
    if (x.size() != sys.space.dim()) continue;
    const DecodeResult d = decode(sys, x, *setup.fluid, setup.params, setup.oc, setup.decode);
    const double v = penalized_objective(d);
    if (!d.feasible) continue;
    if (!best || v > best->second) best = std::make_pair(x, v);
  }
  return best;
}

inline BaselineResult run_baseline(const CaseSpec& spec, const DecodeSetup& setup) {
  BaselineResult b;
  b.name = spec.mode() == CycleMode::HeatEngine ? "simple Brayton" : "single-stage vapor compression";
  const auto g = baseline_cycle(make_roster(spec.limits), spec.mode());
  if (!g) return b;
  b.available = true;
  const WorkerResult w = optimize_parameters(*g, setup, spec.worker_options(true));
  if (auto best = best_redecoded(*g, setup, {w.best_x_m})) {
    b.feasible = true;
    b.best_x_m = best->first;
    b.performance = best->second;
  }
  return b;
}

// --- export

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(12);
  return out;
}

inline void export_dot(const CycleGraph& g, const std::string& path, const std::string& name = "cycle") {
  auto out = open_out(path);
  write_dot(g, out, name);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline std::string format_x_m(const std::vector<std::string>& vars, const Eigen::VectorXd& x) {
  std::ostringstream s;
  s << std::setprecision(12);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) s << ';';
    s << (static_cast<std::size_t>(i) < vars.size() ? vars[static_cast<std::size_t>(i)] : "x" + std::to_string(i)) << '='
      << x(i);
  }
  return s.str();
}

/// rank,key,tag,performance,episode,nodes,edges,x_m
inline void write_report_csv(const ExperimentReport& rep, std::ostream& out) {
  out << "rank,key,tag,performance,episode,nodes,edges,x_m\n";
  int rank = 0;
  for (const auto& c : rep.cycles)
    out << ++rank << ',' << c.key << ',' << c.tag << ',' << c.performance << ',' << c.episode << ','
        << std::popcount(c.graph.activated_mask()) << ',' << c.graph.edge_count() << ','
        << format_x_m(c.variables, c.best_x_m) << '\n';
}

inline void export_csv(const ExperimentReport& rep, const std::string& path) {
  auto out = open_out(path);
  write_report_csv(rep, out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

/// episode,p_valid
inline void export_curves(const std::vector<TrainingLogRow>& log, const std::string& path) {
  auto out = open_out(path);
  out << "episode,p_valid\n";
  for (const auto& r : log) out << r.episode << ',' << r.rolling_valid_rate << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline void export_training_log(const std::vector<TrainingLogRow>& log, const std::string& path) {
  auto out = open_out(path);
  write_training_log(log, out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

/// variant,episodes,valid,valid_rate
inline void write_random_csv(const ExperimentReport& rep, std::ostream& out) {
  out << "variant,episodes,valid,valid_rate\n";
  for (const auto* s : {&rep.random_unmasked, &rep.random_masked})
    out << (s->masked ? "masked" : "unmasked") << ',' << s->episodes << ',' << s->valid << ',' << s->valid_rate << '\n';
}

/// name,available,feasible,performance,best_performance,improvement
inline void write_baseline_csv(const ExperimentReport& rep, std::ostream& out) {
  out << "name,available,feasible,performance,best_discovered,improvement\n";
  const auto& b = rep.baseline;
  out << b.name << ',' << b.available << ',' << b.feasible << ',' << b.performance << ',';
  if (!rep.cycles.empty()) out << rep.cycles.front().performance;
  out << ',';
  if (b.feasible && !rep.cycles.empty() && b.performance > 0)
    out << (rep.cycles.front().performance / b.performance - 1.0);
  out << '\n';
}

// --- report json

inline nlohmann::json to_json(const ExperimentReport& rep) {
  using nlohmann::json;
  std::ostringstream spec;
  write_config(rep.spec, spec);
  json cycles = json::array();
  for (const auto& c : rep.cycles)
    cycles.push_back({{"key", c.key},
                      {"rows", c.graph.rows()},
                      {"variables", c.variables},
                      {"x_m", detail::vec_json(c.best_x_m)},
                      {"performance", c.performance},
                      {"tag", c.tag},
                      {"episode", c.episode},
                      {"dot", to_dot(c.graph)}});
  json log = json::array();
  for (const auto& r : rep.training)
    log.push_back({r.episode, r.valid, r.performance, r.rolling_valid_rate, detail::loss_json(r.loss), r.stage});
  auto rs = [](const RandomSearchStats& s) {
    return json{{"masked", s.masked}, {"episodes", s.episodes}, {"valid", s.valid}, {"valid_rate", s.valid_rate},
                {"discovered", s.discovered}};
  };
  const auto& b = rep.baseline;
  return {{"format", kReportFormat},
          {"spec", spec.str()},
          {"cycles", cycles},
          {"training", log},
          {"random_unmasked", rs(rep.random_unmasked)},
          {"random_masked", rs(rep.random_masked)},
          {"baseline",
           {{"name", b.name},
            {"available", b.available},
            {"feasible", b.feasible},
            {"performance", b.performance},
            {"x_m", detail::vec_json(b.best_x_m)}}},
          {"metadata", rep.metadata}};
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kReportFormat) throw ModelFormatError("unknown report format");
    ExperimentReport rep;
    rep.spec = parse_config_string(j.at("spec").get<std::string>(), "report spec");
    const auto roster = make_roster(rep.spec.limits);
    for (const auto& c : j.at("cycles")) {
      DiscoveredCycle d;
      d.key = c.at("key").get<std::string>();
      d.graph = CycleGraph::from_rows(roster, c.at("rows").get<std::vector<std::uint32_t>>());
      d.variables = c.at("variables").get<std::vector<std::string>>();
      d.best_x_m = detail::json_vec(c.at("x_m"));
      d.performance = c.at("performance").get<double>();
      d.tag = c.at("tag").get<std::string>();
      d.episode = c.at("episode").get<int>();
      if (to_hex(canonical_form(d.graph)) != d.key) throw ModelFormatError("report cycle key does not match its graph");
      rep.cycles.push_back(std::move(d));
    }
    for (const auto& r : j.at("training"))
      rep.training.push_back({r.at(0).get<int>(), r.at(1).get<bool>(), r.at(2).get<double>(), r.at(3).get<double>(),
                              detail::json_loss(r.at(4)), r.at(5).get<int>()});
    auto rs = [](const nlohmann::json& s) {
      RandomSearchStats st;
      st.masked = s.at("masked").get<bool>();
      st.episodes = s.at("episodes").get<int>();
      st.valid = s.at("valid").get<int>();
      st.valid_rate = s.at("valid_rate").get<double>();
      st.discovered = s.at("discovered").get<std::map<std::string, double>>();
      return st;
    };
    rep.random_unmasked = rs(j.at("random_unmasked"));
    rep.random_masked = rs(j.at("random_masked"));
    const auto& b = j.at("baseline");
    rep.baseline = {b.at("name").get<std::string>(), b.at("available").get<bool>(), b.at("feasible").get<bool>(),
                    b.at("performance").get<double>(), detail::json_vec(b.at("x_m"))};
    rep.metadata = j.at("metadata");
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed report: ") + e.what());
  }
}

inline void save_report(const ExperimentReport& rep, const std::string& path) {
  auto out = open_out(path);
  out << to_json(rep).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline ExperimentReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(path + ": " + e.what());
  }
  return report_from_json(j);
}

/// report.json, report.csv, baseline.csv, random_search.csv and one DOT file per cycle.
inline void write_report_files(const ExperimentReport& rep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_report(rep, dir + "/report.json");
  export_csv(rep, dir + "/report.csv");
  {
    auto out = open_out(dir + "/baseline.csv");
    write_baseline_csv(rep, out);
  }
  {
    auto out = open_out(dir + "/random_search.csv");
    write_random_csv(rep, out);
  }
  int rank = 0;
  for (const auto& c : rep.cycles) {
    ++rank;
    export_dot(c.graph, dir + "/cycles/" + std::to_string(rank) + "_" + c.tag + ".dot", "cycle" + std::to_string(rank));
  }
}

// ---------------------------------------------------------------------------
// Experiments

inline nlohmann::json run_metadata(const CaseSpec& spec) {
  return {{"version", kVersion},
          {"case", spec.name},
          {"seed", spec.seed},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)}};
}

/// Full-budget Worker pass plus re-decode for one structure; nullopt if infeasible.
inline std::optional<DiscoveredCycle> finalize_cycle(const CycleGraph& g, const CaseSpec& spec, const DecodeSetup& setup,
                                                     const std::vector<Eigen::VectorXd>& extra_candidates = {}) {
  const WorkerResult w = optimize_parameters(g, setup, spec.worker_options(true));
  std::vector<Eigen::VectorXd> cand{w.best_x_m};
  cand.insert(cand.end(), extra_candidates.begin(), extra_candidates.end());
  const auto best = best_redecoded(g, setup, cand);
  if (!best) return std::nullopt;
  DiscoveredCycle c;
  c.key = to_hex(canonical_form(g));
  c.graph = g;
  for (const auto& v : parameter_space(g, setup.oc).vars) c.variables.push_back(v.name);
  c.best_x_m = best->first;
  c.performance = best->second;
  c.tag = to_string(classify_solved(g, setup, c.best_x_m));
  return c;
}

inline void sort_cycles(std::vector<DiscoveredCycle>& cycles) {
  std::sort(cycles.begin(), cycles.end(), [](const DiscoveredCycle& a, const DiscoveredCycle& b) {
    return a.performance != b.performance ? a.performance > b.performance : a.key < b.key;
  });
}

/// Trains the agent, runs both random-search baselines, re-optimizes every
/// discovered cycle with the final budget and writes all report files into
/// `out_dir`. On failure the files gathered so far are written before the
/// exception propagates.
inline ExperimentReport run_experiment(const CaseSpec& spec, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ExperimentReport rep;
  rep.spec = spec;
  rep.metadata = run_metadata(spec);
  try {
    const auto fluid = make_fluid(spec);
    const DecodeSetup setup = make_setup(spec, *fluid);
    WorkerCache cache(out_dir + "/worker_cache.txt");
    CycleEnvironment env(spec.limits, setup, spec.worker_options(), &cache, spec.env);
    ManagerTrainer trainer(env, spec.agent, substream_seed(spec.seed, "agent"));
    trainer.set_checkpoint_on_failure(out_dir + "/checkpoint_failed.json");
    try {
      trainer.run();
    } catch (...) {
      rep.training = trainer.log();
      throw;
    }
    rep.training = trainer.log();
    trainer.save_checkpoint(out_dir + "/checkpoint.json");
    save_model(trainer.policy().network(), out_dir + "/policy.json");
    export_training_log(rep.training, out_dir + "/training_log.csv");
    export_curves(rep.training, out_dir + "/curves.csv");

    rep.random_unmasked = random_search(env, spec.random_episodes, spec.seed, false);
    rep.random_masked = random_search(env, spec.random_episodes, spec.seed, true);
    rep.baseline = run_baseline(spec, setup);

    for (const auto& [key, d] : trainer.discovered()) {
      const CycleGraph g = replay_actions(env.roster_ptr(), d.actions);
      std::vector<Eigen::VectorXd> extra;
      if (auto hit = cache.find(key)) extra.push_back(hit->best_x_m);
      if (auto c = finalize_cycle(g, spec, setup, extra)) {
        c->episode = d.episode;
        rep.cycles.push_back(std::move(*c));
      }
    }
    sort_cycles(rep.cycles);
  } catch (...) {
    rep.metadata["partial"] = true;
    sort_cycles(rep.cycles);
    try {
      write_report_files(rep, out_dir);
      if (!rep.training.empty()) export_training_log(rep.training, out_dir + "/training_log.csv");
    } catch (...) {
    }
    throw;
  }
  write_report_files(rep, out_dir);
  return rep;
}

// ---------------------------------------------------------------------------
// Oracle comparison

struct OracleDiff {
  std::set<std::string> oracle;
  std::set<std::string> agent;
  std::vector<std::string> missing;  // in the oracle, not found by the agent
  std::vector<std::string> extra;    // found by the agent, absent from the oracle
  bool empty() const { return missing.empty() && extra.empty(); }
};

/// Every structure valid under the grammar whose Worker pass (training
/// budget) finds a feasible operating point. Refuses rosters too large to
/// enumerate.
inline std::set<std::string> oracle_keys(const CaseSpec& spec, const DecodeSetup& setup, WorkerCache* cache = nullptr) {
  EnumerateOptions opt;
  opt.max_edges = spec.env.t_max;
  const WorkerOptions w = spec.worker_options();
  opt.physical = [&](const CycleGraph& g) { return optimize_parameters(g, setup, w, cache).feasible; };
  std::set<std::string> keys;
  for (const auto& [k, g] : enumerate_valid(spec.limits, opt).structures) keys.insert(to_hex(k));
  return keys;
}

inline OracleDiff diff_against_oracle(std::set<std::string> oracle, std::set<std::string> agent) {
  OracleDiff d;
  d.oracle = std::move(oracle);
  d.agent = std::move(agent);
  std::set_difference(d.oracle.begin(), d.oracle.end(), d.agent.begin(), d.agent.end(), std::back_inserter(d.missing));
  std::set_difference(d.agent.begin(), d.agent.end(), d.oracle.begin(), d.oracle.end(), std::back_inserter(d.extra));
  return d;
}

/// Compares an agent's discovery set against the physically filtered oracle.
inline OracleDiff verify_against_oracle(const CaseSpec& spec, const std::set<std::string>& agent_keys,
                                        WorkerCache* cache = nullptr) {
  const auto fluid = make_fluid(spec);
  const DecodeSetup setup = make_setup(spec, *fluid);
  return diff_against_oracle(oracle_keys(spec, setup, cache), agent_keys);
}

/// key,status with status in {found, missing, extra}.
inline void write_diff_csv(const OracleDiff& d, std::ostream& out) {
  out << "key,status\n";
  for (const auto& k : d.oracle) out << k << ',' << (d.agent.count(k) ? "found" : "missing") << '\n';
  for (const auto& k : d.extra) out << k << ",extra\n";
}

}  // namespace cyclegen
