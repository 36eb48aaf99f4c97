#pragma once

// The Manager: an episodic environment that builds cycle graphs edge by edge
// and scores them with the Worker, a PPO trainer with staged entropy and
// elite-imitation weights, checkpoints, and random-search baselines.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cyclegen/grammar.hpp"
#include "cyclegen/mlp.hpp"
#include "cyclegen/ppo.hpp"
#include "cyclegen/sampling.hpp"
#include "cyclegen/worker.hpp"

namespace cyclegen {

/// Raised when an agent submits an action its mask forbids.
class IllegalActionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite loss during an update; a checkpoint is written first if configured.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Observation {
  Vector x;
  std::vector<bool> mask;
};

struct StepResult {
  Observation next;
  double reward = 0.0;
  bool done = false;
  bool valid = false;        // episode ended with a feasible, scored design
  double performance = 0.0;  // meaningful when valid
  std::string key;           // canonical key when valid
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual int num_actions() const = 0;
  virtual Observation reset() = 0;
  virtual StepResult step(int action) = 0;
};

struct EnvConfig {
  int t_max = 16;
  double r_step = 0.0;
  double r_invalid = -1.0;

  void validate() const {
    if (t_max < 1) throw std::invalid_argument("t_max must be at least 1");
    if (!std::isfinite(r_step) || !std::isfinite(r_invalid)) throw std::invalid_argument("rewards must be finite");
  }

  bool operator==(const EnvConfig&) const = default;
};

/// Edge-by-edge graph construction over a roster. TERMINATE runs the Worker.
class CycleEnvironment final : public Environment {
 public:
  CycleEnvironment(const ComponentLimits& limits, DecodeSetup setup, WorkerOptions worker, WorkerCache* cache = nullptr,
                   EnvConfig cfg = {})
      : roster_(make_roster(limits)), setup_(std::move(setup)), worker_(std::move(worker)), cache_(cache), cfg_(cfg) {
    cfg_.validate();
    reset();
  }

  int observation_dim() const override { return roster_->size() * roster_->size(); }
  int num_actions() const override { return roster_->size() * roster_->size() + 1; }

  Observation reset() override {
    graph_ = CycleGraph(roster_);
    step_ = 0;
    last_ = WorkerResult{};
    return observe();
  }

  StepResult step(int action) override {
    if (action < 0 || action >= num_actions() || !mask_[static_cast<std::size_t>(action)])
      throw IllegalActionError("action " + std::to_string(action) + " is not legal in the current state");
    StepResult r;
    if (action == graph_.terminate_action()) {
      last_ = optimize_parameters(graph_, setup_, worker_, cache_);
      r.done = true;
      if (last_.feasible) {
        r.valid = true;
        r.performance = last_.best_objective;
        r.reward = r.performance;
        r.key = to_hex(canonical_form(graph_));
      } else {
        r.reward = cfg_.r_invalid;
      }
      r.next = {Vector(flat()), std::vector<bool>(static_cast<std::size_t>(num_actions()), false)};
      return r;
    }
    graph_ = apply_action(graph_, action);
    ++step_;
    r.next = observe();
    r.reward = cfg_.r_step;
    const bool stuck = std::none_of(mask_.begin(), mask_.end(), [](bool b) { return b; });
    if (step_ >= cfg_.t_max || stuck) {
      r.done = true;
      r.reward = cfg_.r_invalid;
    }
    return r;
  }

  const CycleGraph& graph() const { return graph_; }
  const Roster& roster() const { return *roster_; }
  const std::shared_ptr<const Roster>& roster_ptr() const { return roster_; }
  int steps() const { return step_; }
  const WorkerResult& last_worker_result() const { return last_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  Vector flat() const {
    const auto a = graph_.flat_adjacency();
    return Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
  }
  Observation observe() {
    mask_ = legal_actions(graph_);
    return {flat(), mask_};
  }

  std::shared_ptr<const Roster> roster_;
  DecodeSetup setup_;
  WorkerOptions worker_;
  WorkerCache* cache_;
  EnvConfig cfg_;
  CycleGraph graph_;
  std::vector<bool> mask_;
  int step_ = 0;
  WorkerResult last_;
};

// ---------------------------------------------------------------------------
// Training

struct ManagerConfig {
  double gamma = 0.99;
  double clip = 0.2;
  double value_weight = 0.6;
  double lr = 6e-4;
  double entropy_early = 0.1;
  double entropy_late = 0.01;
  double elite_early = 0.01;
  double elite_late = 0.1;
  double alpha = 0.9;
  int epochs = 4;
  int minibatch = 64;
  int episodes_per_update = 16;
  int episodes = 2000;
  double stage_fraction = 0.5;
  int elite_capacity = 16;
  std::vector<int> hidden{128, 128};
  int rolling_window = 100;
  double policy_gain = 0.01;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (value_weight < 0 || entropy_early < 0 || entropy_late < 0 || elite_early < 0 || elite_late < 0 || alpha < 0)
      throw std::invalid_argument("loss weights must be non-negative");
    if (epochs < 1 || minibatch < 1 || episodes_per_update < 1 || elite_capacity < 1 || rolling_window < 1)
      throw std::invalid_argument("epochs, minibatch, update interval, elite capacity and window must be positive");
    if (episodes < 0) throw std::invalid_argument("episodes must be non-negative");
    if (!(stage_fraction >= 0.0 && stage_fraction <= 1.0)) throw std::invalid_argument("stage_fraction must lie in [0, 1]");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("hidden layer widths must be positive");
  }

  /// 0 for episodes before the stage boundary, 1 after.
  int stage(int episode) const {
    return static_cast<double>(episode) >= stage_fraction * static_cast<double>(episodes) ? 1 : 0;
  }
  LossWeights weights(int stage) const {
    return {clip, value_weight, stage ? entropy_late : entropy_early, stage ? elite_late : elite_early};
  }

  bool operator==(const ManagerConfig&) const = default;
};

inline nlohmann::json to_json(const ManagerConfig& c) {
  return {{"gamma", c.gamma},
          {"clip", c.clip},
          {"value_weight", c.value_weight},
          {"lr", c.lr},
          {"entropy_early", c.entropy_early},
          {"entropy_late", c.entropy_late},
          {"elite_early", c.elite_early},
          {"elite_late", c.elite_late},
          {"alpha", c.alpha},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"episodes_per_update", c.episodes_per_update},
          {"episodes", c.episodes},
          {"stage_fraction", c.stage_fraction},
          {"elite_capacity", c.elite_capacity},
          {"hidden", c.hidden},
          {"rolling_window", c.rolling_window},
          {"policy_gain", c.policy_gain}};
}

struct TrainingLogRow {
  int episode = 0;  // 1-based
  bool valid = false;
  double performance = 0.0;
  double rolling_valid_rate = 0.0;
  LossBreakdown loss;  // of the update that consumed this episode
  int stage = 0;
};

struct Discovery {
  std::string key;
  double performance = 0.0;
  int episode = 0;          // first found
  std::vector<int> actions; // best episode's action sequence
};

class ManagerTrainer {
 public:
  ManagerTrainer(Environment& env, ManagerConfig cfg, std::uint64_t seed)
      : env_(&env), cfg_(std::move(cfg)), elite_(static_cast<std::size_t>(std::max(1, cfg_.elite_capacity))) {
    cfg_.validate();
    Rng init = make_rng(seed, "init");
    ac_ = ActorCritic(env.observation_dim(), env.num_actions(), cfg_.hidden, init, cfg_.policy_gain);
    mom_ = AdamMoments(ac_.network().num_parameters());
    collect_ = make_rng(seed, "collection");
    update_ = make_rng(seed, "update");
  }

  /// Trains until `until` episodes (default: the configured total) have run.
  void run(std::optional<int> until = std::nullopt) {
    const int stop = std::min(until.value_or(cfg_.episodes), cfg_.episodes);
    while (episode_ < stop) {
      pending_.push_back(collect());
      ++episode_;
      if (static_cast<int>(pending_.size()) == cfg_.episodes_per_update || episode_ == cfg_.episodes) update();
    }
  }

  const std::vector<TrainingLogRow>& log() const { return log_; }
  const std::map<std::string, Discovery>& discovered() const { return discovered_; }
  const EliteMemory& elite() const { return elite_; }
  const ActorCritic& policy() const { return ac_; }
  const ManagerConfig& config() const { return cfg_; }
  int episode() const { return episode_; }
  void set_checkpoint_on_failure(std::string path) { failure_checkpoint_ = std::move(path); }

  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& j);
  void save_checkpoint(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << checkpoint().dump() << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
  }
  void load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ModelFormatError(path + ": " + e.what());
    }
    restore(j);
  }

 private:
  struct Step {
    Vector obs;
    std::vector<bool> mask;
    int action = 0;
    double logp = 0.0;
    double value = 0.0;
    double reward = 0.0;
  };
  struct Episode {
    std::vector<Step> steps;
    bool valid = false;
    double performance = 0.0;
    std::string key;
  };

  Episode collect() {
    Episode ep;
    Observation obs = env_->reset();
    for (;;) {
      ActorCritic::Output out;
      try {
        out = ac_.evaluate(obs.x, obs.mask);
      } catch (const NonFiniteLogits&) {
        fail("non-finite policy output at episode " + std::to_string(episode_ + 1));
      }
      const int a = sample_action(out.policy.probs, collect_);
      StepResult r = env_->step(a);
      ep.steps.push_back({std::move(obs.x), std::move(obs.mask), a, out.policy.log_probs(a), out.value, r.reward});
      obs = std::move(r.next);
      if (r.done) {
        ep.valid = r.valid;
        ep.performance = r.performance;
        ep.key = std::move(r.key);
        break;
      }
      if (ep.steps.size() > 100000) throw std::logic_error("environment never terminates");
    }
    TrainingLogRow row;
    row.episode = episode_ + 1;
    row.valid = ep.valid;
    row.performance = ep.valid ? ep.performance : 0.0;
    row.stage = cfg_.stage(episode_);
    window_.push_back(ep.valid);
    if (static_cast<int>(window_.size()) > cfg_.rolling_window) window_.erase(window_.begin());
    row.rolling_valid_rate =
        static_cast<double>(std::count(window_.begin(), window_.end(), true)) / static_cast<double>(window_.size());
    log_.push_back(row);
    if (ep.valid) {
      auto it = discovered_.find(ep.key);
      std::vector<int> actions;
      for (const auto& s : ep.steps) actions.push_back(s.action);
      if (it == discovered_.end())
        discovered_.emplace(ep.key, Discovery{ep.key, ep.performance, episode_ + 1, std::move(actions)});
      else if (ep.performance > it->second.performance) {
        it->second.performance = ep.performance;
        it->second.actions = std::move(actions);
      }
    }
    return ep;
  }

  void update() {
    const int stage = cfg_.stage(episode_ - 1);
    const LossWeights w = cfg_.weights(stage);
    std::vector<PolicySample> samples;
    for (const auto& ep : pending_) {
      std::vector<double> rewards, values;
      for (const auto& s : ep.steps) {
        rewards.push_back(s.reward);
        values.push_back(s.value);
      }
      if (ep.valid) rewards = backprop_performance(rewards, ep.performance, cfg_.alpha, cfg_.gamma);
      const AdvantageTargets t = advantages(rewards, values, cfg_.gamma);
      for (std::size_t k = 0; k < ep.steps.size(); ++k)
        samples.push_back({ep.steps[k].obs, ep.steps[k].mask, ep.steps[k].action, ep.steps[k].logp, t.advantages[k],
                           t.returns[k]});
    }
    std::vector<double> adv;
    for (const auto& s : samples) adv.push_back(s.advantage);
    normalize_advantages(adv);
    for (std::size_t k = 0; k < samples.size(); ++k) samples[k].advantage = adv[k];

    LossBreakdown mean;
    int batches = 0;
    std::vector<std::size_t> order(samples.size());
    const auto elite_pairs = elite_.pairs();
    for (int e = 0; e < cfg_.epochs; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), update_);
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg_.minibatch)) {
        std::vector<PolicySample> mb;
        for (std::size_t k = b; k < std::min(order.size(), b + static_cast<std::size_t>(cfg_.minibatch)); ++k)
          mb.push_back(samples[order[k]]);
        std::vector<const StateAction*> el;
        if (elite_pairs.size() <= static_cast<std::size_t>(cfg_.minibatch)) {
          el = elite_pairs;
        } else {
          for (int k = 0; k < cfg_.minibatch; ++k) el.push_back(elite_pairs[update_() % elite_pairs.size()]);
        }
        Vector grad;
        LossBreakdown L;
        try {
          L = ac_.loss(mb, el, w, &grad);
        } catch (const NonFiniteLogits&) {
          fail("non-finite policy output at episode " + std::to_string(episode_));
        }
        if (!std::isfinite(L.total) || !grad.allFinite()) fail("non-finite loss at episode " + std::to_string(episode_));
        Vector p = ac_.parameters();
        adam_step(p, grad, mom_, ++adam_t_, cfg_.lr);
        ac_.set_parameters(p);
        if (!ac_.network().all_finite()) fail("non-finite parameters at episode " + std::to_string(episode_));
        mean.policy += L.policy;
        mean.value += L.value;
        mean.entropy += L.entropy;
        mean.ppo += L.ppo;
        mean.elite += L.elite;
        mean.total += L.total;
        ++batches;
      }
    }
    if (batches > 0)
      for (double* v : {&mean.policy, &mean.value, &mean.entropy, &mean.ppo, &mean.elite, &mean.total}) *v /= batches;
    for (std::size_t k = log_.size() - pending_.size(); k < log_.size(); ++k) log_[k].loss = mean;

    for (auto& ep : pending_) {
      if (!ep.valid) continue;
      std::vector<StateAction> traj;
      for (auto& s : ep.steps) traj.push_back({std::move(s.obs), std::move(s.mask), s.action});
      elite_.update(std::move(traj), ep.performance, ep.key);
      if (!elite_.invariants_hold()) throw std::logic_error("elite memory invariants violated");
    }
    pending_.clear();
  }

  [[noreturn]] void fail(const std::string& what) {
    if (!failure_checkpoint_.empty()) {
      pending_.clear();
      save_checkpoint(failure_checkpoint_);
    }
    throw TrainingDiverged(what);
  }

  Environment* env_;
  ManagerConfig cfg_;
  ActorCritic ac_;
  AdamMoments mom_;
  long adam_t_ = 0;
  EliteMemory elite_;
  Rng collect_;
  Rng update_;
  int episode_ = 0;
  std::vector<Episode> pending_;
  std::vector<bool> window_;
  std::vector<TrainingLogRow> log_;
  std::map<std::string, Discovery> discovered_;
  std::string failure_checkpoint_;
};

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline std::string mask_string(const std::vector<bool>& m) {
  std::string s(m.size(), '0');
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) s[i] = '1';
  return s;
}

inline std::vector<bool> parse_mask(const std::string& s) {
  std::vector<bool> m(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') throw ModelFormatError("checkpoint mask has a character other than 0/1");
    m[i] = s[i] == '1';
  }
  return m;
}

inline nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
inline Vector json_vec(const nlohmann::json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
}

inline std::string rng_string(const Rng& r) {
  std::ostringstream s;
  s << r;
  return s.str();
}
inline Rng rng_parse(const std::string& str) {
  Rng r;
  std::istringstream s(str);
  s >> r;
  if (!s) throw ModelFormatError("checkpoint rng state is malformed");
  return r;
}

inline nlohmann::json loss_json(const LossBreakdown& l) {
  return {l.policy, l.value, l.entropy, l.ppo, l.elite, l.total};
}
inline LossBreakdown json_loss(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 6) throw ModelFormatError("checkpoint loss record has wrong length");
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

}  // namespace detail

inline constexpr const char* kCheckpointFormat = "cyclegen-checkpoint-1";

/// Full trainer state at an update boundary; the network is stored in mlpv1 form.
inline nlohmann::json ManagerTrainer::checkpoint() const {
  if (!pending_.empty()) throw std::logic_error("checkpoint requested between updates");
  using nlohmann::json;
  json elite = json::array();
  for (const auto& e : elite_.entries()) {
    json traj = json::array();
    for (const auto& sa : e.trajectory)
      traj.push_back({{"obs", detail::vec_json(sa.obs)}, {"mask", detail::mask_string(sa.mask)}, {"action", sa.action}});
    elite.push_back({{"key", e.key}, {"performance", e.performance}, {"trajectory", traj}});
  }
  json log = json::array();
  for (const auto& r : log_)
    log.push_back({r.episode, r.valid, r.performance, r.rolling_valid_rate, detail::loss_json(r.loss), r.stage});
  json disc = json::array();
  for (const auto& [k, d] : discovered_)
    disc.push_back({{"key", k}, {"performance", d.performance}, {"episode", d.episode}, {"actions", d.actions}});
  return {{"format", kCheckpointFormat},
          {"config", to_json(cfg_)},
          {"episode", episode_},
          {"model", to_json(ac_.network())},
          {"adam", {{"t", adam_t_}, {"m", detail::vec_json(mom_.m)}, {"v", detail::vec_json(mom_.v)}}},
          {"elite", {{"capacity", elite_.capacity()}, {"entries", elite}}},
          {"rng", {{"collection", detail::rng_string(collect_)}, {"update", detail::rng_string(update_)}}},
          {"window", window_},
          {"log", log},
          {"discovered", disc}};
}

inline void ManagerTrainer::restore(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw ModelFormatError("unknown checkpoint format");
    if (j.at("config") != to_json(cfg_)) throw ModelFormatError("checkpoint was written with a different configuration");
    ActorCritic ac(mlp_from_json(j.at("model")));
    if (ac.obs_dim() != env_->observation_dim() || ac.num_actions() != env_->num_actions())
      throw ModelFormatError("checkpoint network does not fit the environment");
    AdamMoments mom;
    mom.m = detail::json_vec(j.at("adam").at("m"));
    mom.v = detail::json_vec(j.at("adam").at("v"));
    if (mom.m.size() != ac.network().num_parameters() || mom.v.size() != mom.m.size())
      throw ModelFormatError("checkpoint optimizer moments have the wrong size");
    EliteMemory elite(j.at("elite").at("capacity").get<std::size_t>());
    for (const auto& e : j.at("elite").at("entries")) {
      std::vector<StateAction> traj;
      for (const auto& sa : e.at("trajectory"))
        traj.push_back({detail::json_vec(sa.at("obs")), detail::parse_mask(sa.at("mask").get<std::string>()),
                        sa.at("action").get<int>()});
      elite.update(std::move(traj), e.at("performance").get<double>(), e.at("key").get<std::string>());
    }
    std::vector<TrainingLogRow> log;
    for (const auto& r : j.at("log"))
      log.push_back({r.at(0).get<int>(), r.at(1).get<bool>(), r.at(2).get<double>(), r.at(3).get<double>(),
                     detail::json_loss(r.at(4)), r.at(5).get<int>()});
    std::map<std::string, Discovery> disc;
    for (const auto& d : j.at("discovered")) {
      const auto key = d.at("key").get<std::string>();
      disc[key] = {key, d.at("performance").get<double>(), d.at("episode").get<int>(),
                   d.at("actions").get<std::vector<int>>()};
    }
    ac_ = std::move(ac);
    mom_ = std::move(mom);
    adam_t_ = j.at("adam").at("t").get<long>();
    elite_ = std::move(elite);
    collect_ = detail::rng_parse(j.at("rng").at("collection").get<std::string>());
    update_ = detail::rng_parse(j.at("rng").at("update").get<std::string>());
    episode_ = j.at("episode").get<int>();
    window_ = j.at("window").get<std::vector<bool>>();
    log_ = std::move(log);
    discovered_ = std::move(disc);
    pending_.clear();
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

/// episode,valid,performance,rolling_valid_rate,loss_policy,loss_value,entropy,loss_elite,loss_total,stage
inline void write_training_log(const std::vector<TrainingLogRow>& rows, std::ostream& out) {
  out << "episode,valid,performance,rolling_valid_rate,loss_policy,loss_value,entropy,loss_elite,loss_total,stage\n";
  out << std::setprecision(10);
  for (const auto& r : rows)
    out << r.episode << ',' << (r.valid ? 1 : 0) << ',' << r.performance << ',' << r.rolling_valid_rate << ','
        << r.loss.policy << ',' << r.loss.value << ',' << r.loss.entropy << ',' << r.loss.elite << ',' << r.loss.total
        << ',' << r.stage << '\n';
}

// ---------------------------------------------------------------------------
// Random search

struct RandomSearchStats {
  bool masked = false;
  int episodes = 0;
  int valid = 0;
  double valid_rate = 0.0;
  std::map<std::string, double> discovered;  // key -> best performance
};

/// Uniform actions per step. Unmasked sampling draws from every action index;
/// an illegal draw ends the episode as invalid. Masked sampling draws only
/// legal actions.
inline RandomSearchStats random_search(Environment& env, int episodes, std::uint64_t seed, bool masked) {
  if (episodes < 0) throw std::invalid_argument("random_search: negative episode count");
  Rng rng = make_rng(seed, masked ? "random-masked" : "random-unmasked");
  RandomSearchStats st;
  st.masked = masked;
  st.episodes = episodes;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = env.reset();
    for (int guard = 0;; ++guard) {
      if (guard > 100000) throw std::logic_error("environment never terminates");
      int a;
      if (masked) {
        std::vector<int> legal;
        for (std::size_t k = 0; k < obs.mask.size(); ++k)
          if (obs.mask[k]) legal.push_back(static_cast<int>(k));
        if (legal.empty()) break;
        a = legal[rng() % legal.size()];
      } else {
        a = static_cast<int>(rng() % static_cast<std::uint64_t>(env.num_actions()));
        if (!obs.mask[static_cast<std::size_t>(a)]) break;
      }
      StepResult r = env.step(a);
      if (r.done) {
        if (r.valid) {
          ++st.valid;
          auto [it, fresh] = st.discovered.emplace(r.key, r.performance);
          if (!fresh) it->second = std::max(it->second, r.performance);
        }
        break;
      }
      obs = std::move(r.next);
    }
  }
  st.valid_rate = episodes > 0 ? static_cast<double>(st.valid) / episodes : 0.0;
  return st;
}

/// Rebuilds the graph of a discovered action sequence (TERMINATE excluded).
inline CycleGraph replay_actions(std::shared_ptr<const Roster> roster, const std::vector<int>& actions) {
  CycleGraph g(std::move(roster));
  for (int a : actions)
    if (a != g.terminate_action()) g = apply_action(g, a);
  return g;
}

}  // namespace cyclegen
