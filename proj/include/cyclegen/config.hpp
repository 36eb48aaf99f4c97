#pragma once

// Case specification: YAML loading with strict key checking, defaults, and a
// lossless writer.

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclegen/decoder.hpp"
#include "cyclegen/fluid.hpp"
#include "cyclegen/manager.hpp"
#include "cyclegen/surrogate.hpp"
#include "cyclegen/worker.hpp"

namespace cyclegen {

/// Schema or value error; `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, int line, const std::string& what)
      : std::runtime_error((line > 0 ? where + ":" + std::to_string(line) + ": " : where + ": ") + what), line(line) {}
  int line;
};

enum class FluidKind { Analytic, Surrogate };

struct FluidSpec {
  FluidKind kind = FluidKind::Analytic;
  std::string models;  // directory with <schema>.json networks

  bool operator==(const FluidSpec&) const = default;
};

struct SurrogateSpec {
  long samples = 200000;  // per schema
  int max_epochs = 500;
  int patience = 20;
  double lr = 1e-3;
  int batch_size = 256;
  double max_seconds = 0.0;

  bool operator==(const SurrogateSpec&) const = default;

  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig c;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.initial_lr = lr;
    c.batch_size = batch_size;
    c.max_seconds = max_seconds;
    c.seed = seed;
    return c;
  }
};

struct CaseSpec {
  std::string name = "case";
  OperatingCase oc;  // mode, temperatures and pressure bounds
  ComponentLimits limits;
  ComponentParams params;
  FluidSpec fluid;
  Budget worker_budget{20, 40};
  double kappa = 2.0;
  int threads = 1;
  Budget final_budget{20, 40};
  ManagerConfig agent;
  EnvConfig env;
  int random_episodes = 2000;
  SurrogateSpec surrogate;
  std::uint64_t seed = 1;

  CycleMode mode() const { return oc.mode; }

  WorkerOptions worker_options(bool final_pass = false) const {
    WorkerOptions w;
    w.budget = final_pass ? final_budget : worker_budget;
    w.kappa = kappa;
    w.threads = threads;
    w.seed = substream_seed(seed, "bo");
    return w;
  }

  bool operator==(const CaseSpec&) const = default;
};

namespace detail {

/// Reads one YAML mapping, remembering which keys were consumed.
class YamlTable {
 public:
  YamlTable(const YAML::Node& node, std::string path, std::string file) : node_(node), path_(std::move(path)), file_(std::move(file)) {
    if (!node_.IsMap()) fail(node_, "'" + path_ + "' must be a mapping");
  }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

  YAML::Node child(const std::string& key) {
    used_.insert(key);
    return node_[key];
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const YAML::Node v = child(key);
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "'" + qualified(key) + "' has an invalid value");
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) fail(node_, "missing required key '" + qualified(key) + "'");
    T out{};
    get(key, out);
    return out;
  }

  YamlTable table(const std::string& key) {
    const YAML::Node v = child(key);
    return YamlTable(v, qualified(key), file_);
  }

  void pair(const std::string& key, double& lo, double& hi) {
    const YAML::Node v = child(key);
    if (!v) return;
    if (!v.IsSequence() || v.size() != 2) fail(v, "'" + qualified(key) + "' must be a two-element list");
    try {
      lo = v[0].as<double>();
      hi = v[1].as<double>();
    } catch (const YAML::Exception&) {
      fail(v, "'" + qualified(key) + "' must hold numbers");
    }
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!used_.count(k)) fail(kv.first, "unknown key '" + qualified(k) + "'");
    }
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& what) const {
    throw ConfigError(file_, at.Mark().is_null() ? 0 : at.Mark().line + 1, what);
  }
  const std::string& file() const { return file_; }
  const YAML::Node& node() const { return node_; }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node node_;
  std::string path_;
  std::string file_;
  std::set<std::string> used_;
};

inline std::string fluid_kind_name(FluidKind k) { return k == FluidKind::Analytic ? "analytic" : "surrogate"; }

}  // namespace detail

/// Range and consistency checks beyond the schema.
inline void validate(const CaseSpec& s, const std::string& where = "config") {
  auto bad = [&](const std::string& what) { throw ConfigError(where, 0, what); };
  const ReferenceFluid ref;
  try {
    s.oc.validate(ref);
    s.params.validate();
    s.agent.validate();
    s.env.validate();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  if (s.oc.mode == CycleMode::HeatEngine && !(s.oc.T_source > s.oc.T_sink))
    bad("heat-engine source temperature must exceed the sink temperature");
  if (s.oc.mode == CycleMode::HeatPump && !(s.oc.T_air < s.oc.T_water_out))
    bad("heat-pump air temperature must lie below the water outlet temperature");
  if (s.limits.counts.empty()) bad("components must list at least one component");
  for (const auto& [c, n] : s.limits.counts)
    if (n < 1 || n > kMaxInstancesPerComponent)
      bad("component count for " + to_string(c) + " must lie in [1, " + std::to_string(kMaxInstancesPerComponent) + "]");
  if (s.limits.n_max && *s.limits.n_max < 1) bad("n_max must be at least 1");
  if (s.worker_budget.initial < 1 || s.worker_budget.iterations < 0 || s.final_budget.initial < 1 ||
      s.final_budget.iterations < 0)
    bad("worker budgets need initial >= 1 and iterations >= 0");
  if (!(s.kappa >= 0.0)) bad("kappa must be non-negative");
  if (s.threads < 1) bad("threads must be at least 1");
  if (s.random_episodes < 0) bad("random_search.episodes must be non-negative");
  if (s.fluid.kind == FluidKind::Surrogate && s.fluid.models.empty()) bad("surrogate fluid needs fluid.models");
  if (s.surrogate.samples < 10 || s.surrogate.batch_size < 1 || !(s.surrogate.lr > 0.0) || s.surrogate.max_seconds < 0)
    bad("surrogate settings out of range");
  try {
    s.surrogate.train_config(s.seed).validate();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
}

inline CaseSpec parse_config(const YAML::Node& root, const std::string& file = "config") {
  CaseSpec s;
  if (!root || root.IsNull()) throw ConfigError(file, 0, "empty configuration");
  detail::YamlTable top(root, "", file);
  top.get("name", s.name);
  try {
    s.oc.mode = parse_mode(top.require<std::string>("mode"));
  } catch (const std::invalid_argument& e) {
    top.fail(root["mode"], e.what());
  }
  top.get("seed", s.seed);

  if (top.has("temperatures")) {
    auto t = top.table("temperatures");
    t.get("source", s.oc.T_source);
    t.get("sink", s.oc.T_sink);
    t.get("air", s.oc.T_air);
    t.get("water_in", s.oc.T_water_in);
    t.get("water_out", s.oc.T_water_out);
    t.finish();
  }
  if (top.has("pressures")) {
    auto p = top.table("pressures");
    p.pair("suction", s.oc.p_suc_lo, s.oc.p_suc_hi);
    p.pair("discharge", s.oc.p_dis_lo, s.oc.p_dis_hi);
    p.finish();
  }
  {
    if (!top.has("components")) top.fail(root, "missing required key 'components'");
    const YAML::Node comps = top.child("components");
    if (!comps.IsMap()) top.fail(comps, "'components' must map component names to counts");
    for (const auto& kv : comps) {
      Component c;
      try {
        c = parse_component(kv.first.as<std::string>());
      } catch (const std::invalid_argument& e) {
        top.fail(kv.first, e.what());
      }
      if (s.limits.counts.count(c)) top.fail(kv.first, "component listed twice");
      try {
        s.limits.counts[c] = kv.second.as<int>();
      } catch (const YAML::Exception&) {
        top.fail(kv.second, "component count must be an integer");
      }
    }
  }
  if (top.has("n_max")) s.limits.n_max = top.require<int>("n_max");

  if (top.has("component_params")) {
    auto c = top.table("component_params");
    c.get("eta_c", s.params.eta_c);
    c.get("eta_t", s.params.eta_t);
    c.get("eta_n", s.params.eta_n);
    c.get("eta_d", s.params.eta_d);
    c.get("dT_min", s.params.dT_min);
    c.finish();
  }
  if (top.has("fluid")) {
    auto f = top.table("fluid");
    std::string kind = "analytic";
    f.get("kind", kind);
    if (kind == "analytic") {
      s.fluid.kind = FluidKind::Analytic;
    } else if (kind == "surrogate") {
      s.fluid.kind = FluidKind::Surrogate;
    } else {
      f.fail(f.node()["kind"], "fluid.kind must be 'analytic' or 'surrogate'");
    }
    f.get("models", s.fluid.models);
    f.finish();
  }
  if (top.has("worker")) {
    auto w = top.table("worker");
    w.get("initial", s.worker_budget.initial);
    w.get("iterations", s.worker_budget.iterations);
    w.get("kappa", s.kappa);
    w.get("threads", s.threads);
    w.finish();
  }
  if (top.has("final_worker")) {
    auto w = top.table("final_worker");
    w.get("initial", s.final_budget.initial);
    w.get("iterations", s.final_budget.iterations);
    w.finish();
  }
  if (top.has("agent")) {
    auto a = top.table("agent");
    ManagerConfig& m = s.agent;
    a.get("episodes", m.episodes);
    a.get("t_max", s.env.t_max);
    a.get("r_step", s.env.r_step);
    a.get("r_invalid", s.env.r_invalid);
    a.get("gamma", m.gamma);
    a.get("clip", m.clip);
    a.get("value_weight", m.value_weight);
    a.get("lr", m.lr);
    a.pair("entropy_weight", m.entropy_early, m.entropy_late);
    a.pair("elite_weight", m.elite_early, m.elite_late);
    a.get("alpha", m.alpha);
    a.get("epochs", m.epochs);
    a.get("minibatch", m.minibatch);
    a.get("episodes_per_update", m.episodes_per_update);
    a.get("stage_fraction", m.stage_fraction);
    a.get("elite_capacity", m.elite_capacity);
    a.get("hidden", m.hidden);
    a.get("rolling_window", m.rolling_window);
    a.finish();
  }
  if (top.has("random_search")) {
    auto r = top.table("random_search");
    r.get("episodes", s.random_episodes);
    r.finish();
  }
  if (top.has("surrogate")) {
    auto t = top.table("surrogate");
    t.get("samples", s.surrogate.samples);
    t.get("max_epochs", s.surrogate.max_epochs);
    t.get("patience", s.surrogate.patience);
    t.get("lr", s.surrogate.lr);
    t.get("batch_size", s.surrogate.batch_size);
    t.get("max_seconds", s.surrogate.max_seconds);
    t.finish();
  }
  top.finish();
  validate(s, file);
  return s;
}

inline CaseSpec load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError(path, 0, "cannot open file");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path, e.mark.line + 1, e.msg);
  }
  return parse_config(root, path);
}

inline CaseSpec parse_config_string(const std::string& text, const std::string& name = "config") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(name, e.mark.line + 1, e.msg);
  }
  return parse_config(root, name);
}

/// Every field, so reloading yields an equal spec.
inline void write_config(const CaseSpec& s, std::ostream& out) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  auto flow_pair = [&](const char* key, double a, double b) {
    e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << a << b << YAML::EndSeq;
  };
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << s.name;
  e << YAML::Key << "mode" << YAML::Value << to_string(s.oc.mode);
  e << YAML::Key << "seed" << YAML::Value << s.seed;
  e << YAML::Key << "temperatures" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "source" << YAML::Value << s.oc.T_source << YAML::Key << "sink" << YAML::Value << s.oc.T_sink;
  e << YAML::Key << "air" << YAML::Value << s.oc.T_air << YAML::Key << "water_in" << YAML::Value << s.oc.T_water_in;
  e << YAML::Key << "water_out" << YAML::Value << s.oc.T_water_out << YAML::EndMap;
  e << YAML::Key << "pressures" << YAML::Value << YAML::BeginMap;
  flow_pair("suction", s.oc.p_suc_lo, s.oc.p_suc_hi);
  flow_pair("discharge", s.oc.p_dis_lo, s.oc.p_dis_hi);
  e << YAML::EndMap;
  e << YAML::Key << "components" << YAML::Value << YAML::BeginMap;
  for (const auto& [c, n] : s.limits.counts)
    e << YAML::Key << component_names()[static_cast<std::size_t>(c)].tag << YAML::Value << n;
  e << YAML::EndMap;
  if (s.limits.n_max) e << YAML::Key << "n_max" << YAML::Value << *s.limits.n_max;
  e << YAML::Key << "component_params" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "eta_c" << YAML::Value << s.params.eta_c << YAML::Key << "eta_t" << YAML::Value << s.params.eta_t;
  e << YAML::Key << "eta_n" << YAML::Value << s.params.eta_n << YAML::Key << "eta_d" << YAML::Value << s.params.eta_d;
  e << YAML::Key << "dT_min" << YAML::Value << s.params.dT_min << YAML::EndMap;
  e << YAML::Key << "fluid" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << detail::fluid_kind_name(s.fluid.kind);
  if (!s.fluid.models.empty()) e << YAML::Key << "models" << YAML::Value << s.fluid.models;
  e << YAML::EndMap;
  e << YAML::Key << "worker" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "initial" << YAML::Value << s.worker_budget.initial;
  e << YAML::Key << "iterations" << YAML::Value << s.worker_budget.iterations;
  e << YAML::Key << "kappa" << YAML::Value << s.kappa << YAML::Key << "threads" << YAML::Value << s.threads;
  e << YAML::EndMap;
  e << YAML::Key << "final_worker" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "initial" << YAML::Value << s.final_budget.initial;
  e << YAML::Key << "iterations" << YAML::Value << s.final_budget.iterations << YAML::EndMap;
  const ManagerConfig& m = s.agent;
  e << YAML::Key << "agent" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "episodes" << YAML::Value << m.episodes;
  e << YAML::Key << "t_max" << YAML::Value << s.env.t_max;
  e << YAML::Key << "r_step" << YAML::Value << s.env.r_step;
  e << YAML::Key << "r_invalid" << YAML::Value << s.env.r_invalid;
  e << YAML::Key << "gamma" << YAML::Value << m.gamma << YAML::Key << "clip" << YAML::Value << m.clip;
  e << YAML::Key << "value_weight" << YAML::Value << m.value_weight << YAML::Key << "lr" << YAML::Value << m.lr;
  flow_pair("entropy_weight", m.entropy_early, m.entropy_late);
  flow_pair("elite_weight", m.elite_early, m.elite_late);
  e << YAML::Key << "alpha" << YAML::Value << m.alpha << YAML::Key << "epochs" << YAML::Value << m.epochs;
  e << YAML::Key << "minibatch" << YAML::Value << m.minibatch;
  e << YAML::Key << "episodes_per_update" << YAML::Value << m.episodes_per_update;
  e << YAML::Key << "stage_fraction" << YAML::Value << m.stage_fraction;
  e << YAML::Key << "elite_capacity" << YAML::Value << m.elite_capacity;
  e << YAML::Key << "hidden" << YAML::Value << YAML::Flow << m.hidden;
  e << YAML::Key << "rolling_window" << YAML::Value << m.rolling_window << YAML::EndMap;
  e << YAML::Key << "random_search" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "episodes" << YAML::Value << s.random_episodes << YAML::EndMap;
  e << YAML::Key << "surrogate" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "samples" << YAML::Value << s.surrogate.samples;
  e << YAML::Key << "max_epochs" << YAML::Value << s.surrogate.max_epochs;
  e << YAML::Key << "patience" << YAML::Value << s.surrogate.patience;
  e << YAML::Key << "lr" << YAML::Value << s.surrogate.lr;
  e << YAML::Key << "batch_size" << YAML::Value << s.surrogate.batch_size;
  e << YAML::Key << "max_seconds" << YAML::Value << s.surrogate.max_seconds << YAML::EndMap;
  e << YAML::EndMap;
  out << e.c_str() << '\n';
}

inline void save_config(const CaseSpec& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_config(s, out);
}

inline std::string surrogate_model_path(const std::string& dir, Schema s) { return dir + "/" + to_string(s) + ".json"; }

/// The case's fluid: the analytic reference fluid or the four trained networks.
inline std::unique_ptr<FluidModel> make_fluid(const CaseSpec& s) {
  if (s.fluid.kind == FluidKind::Analytic) return std::make_unique<ReferenceFluid>();
  const std::string& d = s.fluid.models;
  return std::make_unique<SurrogateFluid>(SurrogateFluid::from_models(
      load_model(surrogate_model_path(d, Schema::PH2TSQ)), load_model(surrogate_model_path(d, Schema::PS2H)),
      load_model(surrogate_model_path(d, Schema::P2TH_SAT)), load_model(surrogate_model_path(d, Schema::T2P_SAT)),
      ReferenceFluid()));
}

}  // namespace cyclegen
