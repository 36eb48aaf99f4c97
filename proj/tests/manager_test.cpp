#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "cyclegen/manager.hpp"

using namespace cyclegen;

namespace {

const ReferenceFluid fluid;

ComponentLimits brayton_limits() {
  ComponentLimits l;
  l.counts = {{Component::Compressor, 1}, {Component::Heater, 1}, {Component::Turbine, 1}, {Component::Cooler, 1}};
  l.n_max = 1;
  return l;
}

ComponentLimits heat_engine_limits() {
  ComponentLimits l;
  l.counts = {{Component::Compressor, 2}, {Component::Turbine, 1}, {Component::Heater, 1},
              {Component::Cooler, 1},     {Component::Ihx, 2},     {Component::Merge, 2}};
  return l;
}

DecodeSetup ideal_gas_setup() {
  DecodeSetup s;
  s.fluid = &fluid;
  s.oc.p_suc_lo = 100.0;
  s.oc.p_suc_hi = 120.0;
  s.oc.p_dis_lo = 165.0;
  s.oc.p_dis_hi = 660.0;
  return s;
}

WorkerOptions small_worker() {
  WorkerOptions o;
  o.budget = {4, 2};
  return o;
}

int node(const Roster& r, NodeKind k) {
  for (int i = 0; i < r.size(); ++i)
    if (r.kind(i) == k) return i;
  throw std::out_of_range("node");
}

/// One step, two actions; action 1 pays 1.
class Bandit final : public Environment {
 public:
  int observation_dim() const override { return 1; }
  int num_actions() const override { return 2; }
  Observation reset() override { return {Vector::Ones(1), {true, true}}; }
  StepResult step(int a) override {
    StepResult r;
    r.next = {Vector::Zero(1), {false, false}};
    r.done = true;
    r.valid = a == 1;
    r.performance = r.valid ? 1.0 : 0.0;
    r.reward = r.performance;
    r.key = r.valid ? "pay" : "";
    return r;
  }
};

ManagerConfig small_config(int episodes) {
  ManagerConfig c;
  c.episodes = episodes;
  c.hidden = {16, 16};
  return c;
}

}  // namespace

TEST(Environment, ResetIsEmptyAndRepeatable) {
  CycleEnvironment env(heat_engine_limits(), ideal_gas_setup(), small_worker());
  const Observation a = env.reset();
  const Observation b = env.reset();
  EXPECT_EQ(env.observation_dim(), 11 * 11);
  EXPECT_EQ(a.x.size(), 121);
  EXPECT_EQ(a.x.sum(), 0.0);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(env.steps(), 0);
  EXPECT_FALSE(a.mask.back());
}

TEST(Environment, EdgeStepsAndHorizon) {
  EnvConfig cfg;
  cfg.t_max = 2;
  CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker(), nullptr, cfg);
  const Roster& r = env.roster();
  const int n = r.size();
  const int cp = node(r, NodeKind::Compressor), ht = node(r, NodeKind::Heater), tb = node(r, NodeKind::Turbine);
  StepResult s = env.step(cp * n + ht);
  EXPECT_EQ(s.reward, 0.0);
  EXPECT_FALSE(s.done);
  EXPECT_EQ(s.next.x(cp * n + ht), 1.0);
  s = env.step(ht * n + tb);
  EXPECT_TRUE(s.done);
  EXPECT_EQ(s.reward, -1.0);
  EXPECT_FALSE(s.valid);
}

TEST(Environment, IllegalActionIsContractViolation) {
  CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker());
  EXPECT_THROW(env.step(0), IllegalActionError);  // self loop
  EXPECT_THROW(env.step(env.num_actions() - 1), IllegalActionError);  // TERMINATE on an empty graph
  EXPECT_THROW(env.step(env.num_actions()), IllegalActionError);
}

TEST(Environment, TerminateOnBraytonRunsWorker) {
  WorkerCache cache;
  CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker(), &cache);
  const Roster& r = env.roster();
  const int n = r.size();
  const int loop[] = {node(r, NodeKind::Compressor), node(r, NodeKind::Heater), node(r, NodeKind::Turbine),
                      node(r, NodeKind::Cooler)};
  StepResult s;
  for (int k = 0; k < 4; ++k) {
    s = env.step(loop[k] * n + loop[(k + 1) % 4]);
    ASSERT_FALSE(s.done);
  }
  EXPECT_TRUE(s.next.mask.back());
  s = env.step(n * n);
  EXPECT_TRUE(s.done);
  ASSERT_TRUE(s.valid);
  EXPECT_GT(s.reward, 0.0);
  EXPECT_EQ(s.reward, s.performance);
  EXPECT_EQ(s.key, to_hex(canonical_form(env.graph())));
  EXPECT_EQ(cache.size(), 1u);
}

TEST(ManagerConfig, StagedWeights) {
  ManagerConfig c;
  c.episodes = 100;
  EXPECT_EQ(c.stage(49), 0);
  EXPECT_EQ(c.stage(50), 1);
  EXPECT_DOUBLE_EQ(c.weights(0).entropy_weight, 0.1);
  EXPECT_DOUBLE_EQ(c.weights(0).elite_weight, 0.01);
  EXPECT_DOUBLE_EQ(c.weights(1).entropy_weight, 0.01);
  EXPECT_DOUBLE_EQ(c.weights(1).elite_weight, 0.1);
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.gamma = 0.99;
  c.clip = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, BanditConvergesToPayingAction) {
  Bandit env;
  ManagerConfig cfg;
  cfg.episodes = 300;
  ManagerTrainer t(env, cfg, 1);
  t.run();
  const auto out = t.policy().evaluate(Vector::Ones(1), {true, true});
  EXPECT_GT(out.policy.probs(1), 0.95);
  EXPECT_EQ(t.log().size(), 300u);
  EXPECT_EQ(t.discovered().size(), 1u);
  EXPECT_TRUE(t.elite().invariants_hold());
}

TEST(Trainer, SeededRunsAreIdentical) {
  auto run = [] {
    CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker());
    ManagerTrainer t(env, small_config(48), 7);
    t.run();
    std::ostringstream s;
    write_training_log(t.log(), s);
    return std::make_pair(s.str(), t.policy().parameters());
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, CheckpointResumeIsBitReproducible) {
  const std::string path = (std::filesystem::temp_directory_path() / "cyclegen_manager_ckpt.json").string();
  CycleEnvironment env1(brayton_limits(), ideal_gas_setup(), small_worker());
  ManagerTrainer full(env1, small_config(64), 3);
  full.run();

  CycleEnvironment env2(brayton_limits(), ideal_gas_setup(), small_worker());
  ManagerTrainer first(env2, small_config(64), 3);
  first.run(32);
  first.save_checkpoint(path);
  CycleEnvironment env3(brayton_limits(), ideal_gas_setup(), small_worker());
  ManagerTrainer resumed(env3, small_config(64), 99);  // seed is overwritten by the checkpoint
  resumed.load_checkpoint(path);
  EXPECT_EQ(resumed.episode(), 32);
  resumed.run();
  std::remove(path.c_str());

  std::ostringstream a, b;
  write_training_log(full.log(), a);
  write_training_log(resumed.log(), b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(full.policy().parameters(), resumed.policy().parameters());
  EXPECT_EQ(full.discovered().size(), resumed.discovered().size());
}

TEST(Trainer, CheckpointRejectsDifferentConfig) {
  Bandit env;
  ManagerTrainer a(env, small_config(32), 1);
  a.run(16);
  ManagerTrainer b(env, small_config(40), 1);
  EXPECT_THROW(b.restore(a.checkpoint()), ModelFormatError);
}

TEST(Trainer, LogLayoutAndDiscoveryReplay) {
  CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker());
  ManagerTrainer t(env, small_config(32), 5);
  t.run();
  std::ostringstream s;
  write_training_log(t.log(), s);
  const std::string text = s.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 33);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "episode,valid,performance,rolling_valid_rate,loss_policy,loss_value,entropy,loss_elite,loss_total,stage");
  for (const auto& [key, d] : t.discovered()) {
    const CycleGraph g = replay_actions(env.roster_ptr(), d.actions);
    EXPECT_EQ(to_hex(canonical_form(g)), key);
  }
  EXPECT_EQ(t.log().front().stage, 0);
  EXPECT_EQ(t.log().back().stage, 1);
}

TEST(RandomSearch, MaskedBeatsUnmaskedAndIsSeeded) {
  WorkerCache cache;
  CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker(), &cache);
  const auto u = random_search(env, 400, 11, false);
  const auto m = random_search(env, 400, 11, true);
  EXPECT_GE(m.valid_rate, u.valid_rate);
  EXPECT_GT(m.valid, 0);
  const auto again = random_search(env, 400, 11, true);
  EXPECT_EQ(again.valid, m.valid);
  EXPECT_EQ(again.discovered, m.discovered);
}

TEST(RandomSearch, UnmaskedRateIsNegligibleOnLargeRoster) {
  CycleEnvironment env(heat_engine_limits(), ideal_gas_setup(), small_worker());
  const auto u = random_search(env, 2000, 2, false);
  EXPECT_LT(u.valid_rate, 0.01);
}

TEST(Trainer, DivergenceRaisesAndCheckpoints) {
  const std::string path = (std::filesystem::temp_directory_path() / "cyclegen_diverged.json").string();
  std::remove(path.c_str());
  CycleEnvironment env(brayton_limits(), ideal_gas_setup(), small_worker());
  ManagerConfig cfg = small_config(200);
  cfg.lr = 1e300;
  ManagerTrainer t(env, cfg, 1);
  t.set_checkpoint_on_failure(path);
  EXPECT_THROW(t.run(), TrainingDiverged);
  EXPECT_TRUE(std::filesystem::exists(path));
  std::remove(path.c_str());
}
