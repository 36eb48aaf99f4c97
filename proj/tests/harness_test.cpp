#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cyclegen/harness.hpp"

using namespace cyclegen;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cyclegen_harness_" + name);
  fs::remove_all(p);
  return p;
}

CaseSpec brayton_spec(int episodes) {
  CaseSpec s = load_config(CYCLEGEN_CONFIG_DIR "/reduced_brayton.yaml");
  s.agent.episodes = episodes;
  s.agent.hidden = {16, 16};
  s.random_episodes = 40;
  s.final_budget = {6, 6};
  return s;
}

int node(const Roster& r, NodeKind k, int nth = 0) {
  for (int i = 0; i < r.size(); ++i)
    if (r.kind(i) == k && nth-- == 0) return i;
  throw std::out_of_range("node");
}

CycleGraph with_edges(std::shared_ptr<const Roster> r, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(r->size()), 0u);
  for (auto [a, b] : edges) rows[static_cast<std::size_t>(a)] |= 1u << b;
  return CycleGraph::from_rows(std::move(r), rows);
}

std::shared_ptr<const Roster> two_compressor_roster() {
  ComponentLimits l;
  l.counts = {{Component::Compressor, 2}, {Component::Heater, 1}, {Component::Turbine, 1},
              {Component::Cooler, 1},     {Component::Merge, 1}};
  return make_roster(l);
}

}  // namespace

TEST(Classify, BraytonIsSingleStage) {
  const auto r = make_roster(brayton_spec(0).limits);
  const auto g = baseline_cycle(r, CycleMode::HeatEngine);
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(classify_cycle(*g, CycleMode::HeatEngine), CycleClass::SingleStage);
}

TEST(Classify, SeriesAndParallelCompression) {
  const auto r = two_compressor_roster();
  const int c1 = node(*r, NodeKind::Compressor, 0), c2 = node(*r, NodeKind::Compressor, 1);
  const int ht = node(*r, NodeKind::Heater), tb = node(*r, NodeKind::Turbine), cl = node(*r, NodeKind::Cooler);
  const int m = node(*r, NodeKind::Merge);
  const CycleGraph series = with_edges(r, {{c1, cl}, {cl, c2}, {c2, ht}, {ht, tb}, {tb, c1}});
  EXPECT_EQ(classify_cycle(series, CycleMode::HeatEngine), CycleClass::TwoStage);
  const CycleGraph parallel = with_edges(r, {{cl, c1}, {cl, c2}, {c1, m}, {c2, m}, {m, ht}, {ht, tb}, {tb, cl}});
  EXPECT_EQ(classify_cycle(parallel, CycleMode::HeatEngine), CycleClass::ParallelCompression);
  // The same loop rotated: c2 -> CL -> c1 is the series leg.
  const CycleGraph rotated = with_edges(r, {{c1, ht}, {ht, tb}, {tb, c2}, {c2, cl}, {cl, c1}});
  EXPECT_EQ(classify_cycle(rotated, CycleMode::HeatEngine), CycleClass::TwoStage);
}

TEST(Classify, InvariantUnderRelabeling) {
  const auto r = two_compressor_roster();
  const int c1 = node(*r, NodeKind::Compressor, 0), c2 = node(*r, NodeKind::Compressor, 1);
  const int ht = node(*r, NodeKind::Heater), tb = node(*r, NodeKind::Turbine), cl = node(*r, NodeKind::Cooler);
  const CycleGraph g = with_edges(r, {{c1, cl}, {cl, c2}, {c2, ht}, {ht, tb}, {tb, c1}});
  std::vector<int> p(static_cast<std::size_t>(r->size()));
  std::iota(p.begin(), p.end(), 0);
  std::swap(p[static_cast<std::size_t>(c1)], p[static_cast<std::size_t>(c2)]);
  const CycleGraph h = relabeled(g, p);
  EXPECT_EQ(canonical_form(h), canonical_form(g));
  EXPECT_EQ(classify_cycle(h, CycleMode::HeatEngine), classify_cycle(g, CycleMode::HeatEngine));
}

TEST(Classify, HeatPumpSplitPressure) {
  ComponentLimits l;
  l.counts = {{Component::Compressor, 1}, {Component::GasCooler, 1}, {Component::ExpansionValve, 2},
              {Component::Evaporator, 1}, {Component::Merge, 1}};
  const auto r = make_roster(l);
  const int cp = node(*r, NodeKind::Compressor), gc = node(*r, NodeKind::GasCooler);
  const int ev1 = node(*r, NodeKind::ExpansionValve, 0), ev2 = node(*r, NodeKind::ExpansionValve, 1);
  const int evp = node(*r, NodeKind::Evaporator), m = node(*r, NodeKind::Merge);
  const CycleGraph simple = with_edges(r, {{cp, gc}, {gc, ev1}, {ev1, evp}, {evp, cp}});
  EXPECT_EQ(classify_cycle(simple, CycleMode::HeatPump), CycleClass::Simple);
  const CycleGraph split = with_edges(r, {{cp, gc}, {gc, ev1}, {gc, ev2}, {ev1, evp}, {evp, m}, {ev2, m}, {m, cp}});
  EXPECT_EQ(split_nodes(split), std::vector<int>{gc});
  EXPECT_EQ(classify_cycle(split, CycleMode::HeatPump, [](int) { return 9000.0; }, 6000.0),
            CycleClass::HighMidPressureSplit);
  EXPECT_EQ(classify_cycle(split, CycleMode::HeatPump, [](int) { return 3000.0; }, 6000.0),
            CycleClass::LowPressureSplit);
  EXPECT_THROW(classify_cycle(split, CycleMode::HeatPump), std::invalid_argument);
  for (auto c : {CycleClass::Simple, CycleClass::TwoStage, CycleClass::LowPressureSplit})
    EXPECT_EQ(parse_cycle_class(to_string(c)), c);
}

TEST(Export, CurvesAndEmptyReport) {
  const fs::path dir = scratch("export");
  ExperimentReport rep;
  rep.spec = brayton_spec(0);
  export_csv(rep, (dir / "r.csv").string());
  EXPECT_EQ(slurp(dir / "r.csv"), "rank,key,tag,performance,episode,nodes,edges,x_m\n");
  std::vector<TrainingLogRow> log(7);
  for (int k = 0; k < 7; ++k) log[static_cast<std::size_t>(k)].episode = k + 1;
  export_curves(log, (dir / "c.csv").string());
  const std::string c = slurp(dir / "c.csv");
  EXPECT_EQ(std::count(c.begin(), c.end(), '\n'), 8);
  fs::remove_all(dir);
}

TEST(Experiment, ZeroEpisodesGivesBaselineOnly) {
  const fs::path dir = scratch("zero");
  const ExperimentReport rep = run_experiment(brayton_spec(0), dir.string());
  EXPECT_TRUE(rep.cycles.empty());
  EXPECT_TRUE(rep.training.empty());
  EXPECT_TRUE(rep.baseline.available);
  EXPECT_TRUE(rep.baseline.feasible);
  EXPECT_GT(rep.baseline.performance, 0.0);
  EXPECT_EQ(slurp(dir / "report.csv"), "rank,key,tag,performance,episode,nodes,edges,x_m\n");
  fs::remove_all(dir);
}

TEST(Experiment, ReportIsConsistentAndReproducible) {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const CaseSpec spec = brayton_spec(96);
  const ExperimentReport rep = run_experiment(spec, a.string());
  run_experiment(spec, b.string());
  for (const char* f : {"report.csv", "training_log.csv", "curves.csv", "baseline.csv", "random_search.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(rep.training.size(), 96u);
  ASSERT_FALSE(rep.cycles.empty());

  const auto fluid = make_fluid(spec);
  const DecodeSetup setup = make_setup(spec, *fluid);
  std::set<std::string> keys;
  for (std::size_t k = 0; k < rep.cycles.size(); ++k) {
    const auto& c = rep.cycles[k];
    EXPECT_TRUE(keys.insert(c.key).second);
    if (k) {
      EXPECT_GE(rep.cycles[k - 1].performance, c.performance);
    }
    const DecodeResult d = decode(c.graph, c.best_x_m, *fluid, setup.params, setup.oc, setup.decode);
    ASSERT_TRUE(d.feasible);
    EXPECT_NEAR(*d.performance, c.performance, 1e-9);
    EXPECT_TRUE(fs::exists(a / "cycles" / (std::to_string(k + 1) + "_" + c.tag + ".dot")));
  }

  const ExperimentReport back = load_report((a / "report.json").string());
  EXPECT_EQ(back.spec, spec);
  ASSERT_EQ(back.cycles.size(), rep.cycles.size());
  for (std::size_t k = 0; k < rep.cycles.size(); ++k) {
    EXPECT_EQ(back.cycles[k].graph.rows(), rep.cycles[k].graph.rows());
    EXPECT_EQ(back.cycles[k].performance, rep.cycles[k].performance);
    EXPECT_EQ(back.cycles[k].best_x_m, rep.cycles[k].best_x_m);
  }
  std::ostringstream s1, s2;
  write_training_log(rep.training, s1);
  write_training_log(back.training, s2);
  EXPECT_EQ(s1.str(), s2.str());
  EXPECT_NO_THROW(load_model((a / "policy.json").string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Oracle, DiffAndSuperset) {
  const CaseSpec spec = brayton_spec(0);
  const OracleDiff none = verify_against_oracle(spec, {});
  ASSERT_EQ(none.oracle.size(), 1u);
  EXPECT_EQ(none.missing.size(), 1u);
  EXPECT_TRUE(none.extra.empty());
  const OracleDiff all = verify_against_oracle(spec, none.oracle);
  EXPECT_TRUE(all.empty());
  const OracleDiff bogus = diff_against_oracle(none.oracle, {"ff"});
  EXPECT_EQ(bogus.extra, std::vector<std::string>{"ff"});
  std::ostringstream s;
  write_diff_csv(bogus, s);
  EXPECT_EQ(s.str(), "key,status\n" + *none.oracle.begin() + ",missing\nff,extra\n");
}

TEST(Oracle, RefusesLargeRoster) {
  const CaseSpec spec = load_config(CYCLEGEN_CONFIG_DIR "/heat_pump_case1.yaml");
  EXPECT_THROW(verify_against_oracle(spec, {}), std::length_error);
}

TEST(Keys, GraphFromKeyRoundTrip) {
  const auto r = two_compressor_roster();
  const int c1 = node(*r, NodeKind::Compressor, 0), c2 = node(*r, NodeKind::Compressor, 1);
  const int ht = node(*r, NodeKind::Heater), tb = node(*r, NodeKind::Turbine), cl = node(*r, NodeKind::Cooler);
  const CycleGraph g = with_edges(r, {{c1, cl}, {cl, c2}, {c2, ht}, {ht, tb}, {tb, c1}});
  const std::string key = to_hex(canonical_form(g));
  const CycleGraph h = graph_from_key(r, key);
  EXPECT_EQ(to_hex(canonical_form(h)), key);
  EXPECT_EQ(h.edge_count(), g.edge_count());
  EXPECT_THROW(graph_from_key(make_roster(brayton_spec(0).limits), key), std::invalid_argument);
  EXPECT_THROW(graph_from_key(r, "zz"), std::invalid_argument);
}

TEST(Keys, ParseParameterText) {
  const auto r = make_roster(brayton_spec(0).limits);
  const auto g = *baseline_cycle(r, CycleMode::HeatEngine);
  const ParameterSpace sp = parameter_space(g, brayton_spec(0).oc);
  const Eigen::VectorXd x = parse_x_m(sp, "p_dis=14000;p_suc=8000");
  EXPECT_EQ(x(*sp.index("p_dis")), 14000.0);
  EXPECT_EQ(x(*sp.index("p_suc")), 8000.0);
  std::vector<std::string> names;
  for (const auto& v : sp.vars) names.push_back(v.name);
  EXPECT_EQ(parse_x_m(sp, format_x_m(names, x)), x);
  EXPECT_THROW(parse_x_m(sp, "nope=1"), std::invalid_argument);
  EXPECT_THROW(parse_x_m(sp, "p_dis=1x"), std::invalid_argument);
}

TEST(Experiment, ReducedHeatEngineFindsSimpleAndRegenerativeBrayton) {
  const fs::path dir = scratch("reduced_he");
  const CaseSpec spec = load_config(CYCLEGEN_CONFIG_DIR "/reduced_heat_engine.yaml");
  const ExperimentReport rep = run_experiment(spec, dir.string());
  const auto roster = make_roster(spec.limits);
  const auto simple = loop_graph(roster, {"CP#1", "HT#1", "TB#1", "CL#1"});
  const auto regen = loop_graph(roster, {"CP#1", "R#1", "HT#1", "TB#1", "r#1", "CL#1"});
  ASSERT_TRUE(simple && regen);
  std::set<std::string> found;
  for (const auto& c : rep.cycles) found.insert(c.key);
  const auto fluid = make_fluid(spec);
  const auto oracle = oracle_keys(spec, make_setup(spec, *fluid));
  for (const auto* g : {&*simple, &*regen}) {
    const std::string key = to_hex(canonical_form(*g));
    EXPECT_TRUE(oracle.count(key)) << key;
    EXPECT_TRUE(found.count(key)) << key;
  }
  for (const auto& k : found) EXPECT_TRUE(oracle.count(k)) << k;
  fs::remove_all(dir);
}
