#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cyclegen/decoder.hpp"

using namespace cyclegen;
using Eigen::VectorXd;

namespace {

const ReferenceFluid fluid;

ComponentLimits limits(std::initializer_list<std::pair<Component, int>> c) {
  ComponentLimits l;
  for (auto [k, n] : c) l.counts[k] = n;
  return l;
}

int node(const CycleGraph& g, NodeKind k, int id = 1) {
  for (int i = 0; i < g.size(); ++i)
    if (g.roster().kind(i) == k && g.roster().nodes[static_cast<std::size_t>(i)].id == id) return i;
  throw std::out_of_range("node");
}

CycleGraph chain(CycleGraph g, const std::vector<int>& loop) {
  for (std::size_t k = 0; k < loop.size(); ++k) g = apply_action(g, loop[k], loop[(k + 1) % loop.size()]);
  return g;
}

CycleGraph brayton() {
  const CycleGraph g = new_graph(limits({{Component::Compressor, 1}, {Component::Heater, 1}, {Component::Turbine, 1}, {Component::Cooler, 1}}));
  return chain(g, {node(g, NodeKind::Compressor), node(g, NodeKind::Heater), node(g, NodeKind::Turbine),
                   node(g, NodeKind::Cooler)});
}

// Low-pressure engine case: the whole cycle stays below the dome.
OperatingCase ideal_gas_case() {
  OperatingCase oc;
  oc.mode = CycleMode::HeatEngine;
  oc.p_suc_lo = 100.0;
  oc.p_suc_hi = 120.0;
  oc.p_dis_lo = 120.0;
  oc.p_dis_hi = 560.0;
  return oc;
}

VectorXd brayton_xm(const ResidualSystem& sys, double p_suc, double rp) {
  VectorXd xm = sys.space.nominal();
  xm(*sys.space.index("p_suc")) = p_suc;
  xm(*sys.space.index("p_dis")) = rp * p_suc;
  return xm;
}

TEST(Assemble, BraytonCounts) {
  const auto sys = assemble(brayton(), ideal_gas_case());
  EXPECT_EQ(sys.edge_count(), 4);
  EXPECT_EQ(sys.port_count(), 8);
  EXPECT_EQ(sys.unknown_count(), 24);
  const VectorXd F = residuals(sys, uniform_guess(sys, ideal_gas_case(), 400.0), sys.space.nominal(), fluid,
                               ComponentParams{}, ideal_gas_case());
  EXPECT_EQ(F.size(), 24);
  ASSERT_EQ(sys.space.dim(), 2);
  EXPECT_EQ(sys.space.vars[0].name, "p_dis");
  EXPECT_EQ(sys.space.vars[1].name, "p_suc");
}

TEST(Assemble, InvalidGraphIsPreconditionError) {
  const CycleGraph g = new_graph(limits({{Component::Compressor, 1}, {Component::Heater, 1}}));
  EXPECT_THROW(assemble(g, ideal_gas_case()), std::invalid_argument);
  EXPECT_THROW(decode(g, VectorXd(), fluid, ComponentParams{}, ideal_gas_case()), std::invalid_argument);
}

TEST(Assemble, EdgeEqualitiesAreThreePerEdge) {
  const auto oc = ideal_gas_case();
  const auto sys = assemble(brayton(), oc);
  VectorXd x = uniform_guess(sys, oc, 400.0);
  const VectorXd F0 = residuals(sys, x, sys.space.nominal(), fluid, ComponentParams{}, oc);
  // Uniform ports satisfy every edge equality.
  EXPECT_EQ(F0.head(3 * sys.edge_count()).lpNorm<Eigen::Infinity>(), 0.0);
  x(3 * ResidualSystem::in_port(0) + 1) += 0.5;
  const VectorXd F1 = residuals(sys, x, sys.space.nominal(), fluid, ComponentParams{}, oc);
  int changed = 0;
  for (int k = 0; k < 3 * sys.edge_count(); ++k) changed += F1(k) != F0(k);
  EXPECT_EQ(changed, 1);
}

TEST(Decode, CompressorClosedForm) {
  // Cooler outlet at 300 K feeds the compressor.
  OperatingCase oc = ideal_gas_case();
  oc.T_sink = 295.0;
  const auto sys = assemble(brayton(), oc);
  const auto res = decode(sys, brayton_xm(sys, 110.0, 3.0), fluid, ComponentParams{}, oc);
  ASSERT_TRUE(res.converged);
  const int cp_node = node(sys.graph, NodeKind::Compressor);
  const PortState* in = nullptr;
  const PortState* out = nullptr;
  for (const auto& s : res.states)
    if (s.node == cp_node) (s.port == "in1" ? in : out) = &s;
  ASSERT_TRUE(in && out);
  EXPECT_NEAR(in->T, 300.0, 1e-6);
  const double Ts = 300.0 * std::pow(3.0, 0.1889 / 1.0);
  EXPECT_NEAR(Ts, 369.2, 0.05);
  EXPECT_NEAR(out->h - in->h, (Ts - 300.0) / 0.8, 1e-6);
  EXPECT_NEAR(out->h - in->h, 86.5, 0.05);
}

TEST(Decode, BraytonIsentropicMatchesClosedForm) {
  const auto oc = ideal_gas_case();
  ComponentParams cp;
  cp.eta_c = cp.eta_t = 1.0;
  const auto sys = assemble(brayton(), oc);
  for (double rp : {2.0, 3.0, 4.0}) {
    const auto res = decode(sys, brayton_xm(sys, 110.0, rp), fluid, cp, oc);
    ASSERT_TRUE(res.converged) << rp;
    EXPECT_LE(res.residual_norm, 1e-8);
    ASSERT_TRUE(res.performance);
    EXPECT_NEAR(*res.performance, 1.0 - std::pow(rp, -0.1889), 1e-6) << rp;
    EXPECT_TRUE(res.feasible) << rp;
  }
}

TEST(Decode, BraytonDegenerateRatio) {
  const auto oc = ideal_gas_case();
  ComponentParams cp;
  cp.eta_c = cp.eta_t = 1.0;
  const auto sys = assemble(brayton(), oc);
  double prev = 1.0;
  for (double rp : {1.2, 1.05, 1.01, 1.001}) {
    const auto res = decode(sys, brayton_xm(sys, 110.0, rp), fluid, cp, oc);
    ASSERT_TRUE(res.converged && res.performance) << rp;
    EXPECT_LT(*res.performance, prev);
    prev = *res.performance;
  }
  EXPECT_LT(prev, 1e-3);
}


TEST(Performance, Definitions) {
  EXPECT_DOUBLE_EQ(*heat_pump_cop(3.0, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(*heat_engine_efficiency(50.0, 30.0, 100.0), 0.2);
  EXPECT_FALSE(heat_pump_cop(3.0, 0.0));
  EXPECT_FALSE(heat_engine_efficiency(50.0, 30.0, 0.0));
}

TEST(Decode, MergeIsMassWeighted) {
  // CP -> HT splits into two turbines that merge before the cooler.
  const CycleGraph g0 = new_graph(limits({{Component::Compressor, 1}, {Component::Heater, 1}, {Component::Turbine, 2},
                                          {Component::Cooler, 1}, {Component::Merge, 1}}));
  const int cp = node(g0, NodeKind::Compressor), ht = node(g0, NodeKind::Heater), t1 = node(g0, NodeKind::Turbine, 1),
            t2 = node(g0, NodeKind::Turbine, 2), m = node(g0, NodeKind::Merge), cl = node(g0, NodeKind::Cooler);
  CycleGraph g = chain(g0, {cp, ht, t1, m, cl});
  g = apply_action(apply_action(g, ht, t2), t2, m);
  const OperatingCase oc;
  const auto sys = assemble(g, oc);
  VectorXd x = uniform_guess(sys, oc, 400.0);
  const auto& ins = sys.in_edges[static_cast<std::size_t>(m)];
  ASSERT_EQ(ins.size(), 2u);
  x(3 * ResidualSystem::in_port(ins[0]) + 1) = 1.0;  // h = 100
  x(3 * ResidualSystem::in_port(ins[1]) + 1) = 3.0;  // h = 300
  std::vector<detail::NodeTarget> t;
  detail::node_targets(sys, m, x, sys.space.nominal(), fluid, ComponentParams{}, oc, t);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t[0].M, 2.0);
  EXPECT_DOUBLE_EQ(t[0].H, 200.0);
  EXPECT_TRUE(sys.space.index("r_split_HT#1").has_value());
}

TEST(Decode, ValveIsIsenthalpic) {
  OperatingCase oc;
  oc.mode = CycleMode::HeatPump;
  oc.p_suc_lo = 1500.0;
  oc.p_suc_hi = 5000.0;
  oc.p_dis_lo = 7500.0;
  oc.p_dis_hi = 15000.0;
  const CycleGraph g0 = new_graph(limits({{Component::Compressor, 1}, {Component::GasCooler, 1},
                                          {Component::ExpansionValve, 1}, {Component::Evaporator, 1}}));
  const int ev = node(g0, NodeKind::ExpansionValve);
  const CycleGraph g = chain(g0, {node(g0, NodeKind::Compressor), node(g0, NodeKind::GasCooler), ev,
                                  node(g0, NodeKind::Evaporator)});
  const auto res = decode(g, parameter_space(g, oc).nominal(), fluid, ComponentParams{}, oc);
  ASSERT_TRUE(res.converged);
  double h_in = 0, h_out = 0;
  for (const auto& s : res.states)
    if (s.node == ev) (s.port == "in1" ? h_in : h_out) = s.h;
  EXPECT_NEAR(h_out, h_in, 1e-9);
  EXPECT_TRUE(res.feasible);
  ASSERT_TRUE(res.performance);
  EXPECT_GT(*res.performance, 1.0);
}

// States for the Brayton layout with prescribed port temperatures.
std::vector<PortState> brayton_states(const ResidualSystem& sys, std::map<std::pair<NodeKind, std::string>, double> T) {
  std::vector<PortState> st;
  for (int q = 0; q < sys.port_count(); ++q) {
    PortState s;
    s.node = sys.port_node(q);
    s.label = sys.roster().label(s.node);
    s.port = sys.port_name(q);
    s.m = 1.0;
    auto it = T.find({sys.roster().kind(s.node), s.port});
    s.T = it == T.end() ? 500.0 : it->second;
    st.push_back(s);
  }
  return st;
}

TEST(PinchCheck, TwoExchangerMarginByHand) {
  const OperatingCase oc;  // source 873.15 K, sink 303.15 K
  const auto sys = assemble(brayton(), oc);
  const auto st = brayton_states(sys, {{{NodeKind::Heater, "in1"}, 400.0},
                                       {{NodeKind::Heater, "out1"}, 860.0},
                                       {{NodeKind::Cooler, "in1"}, 700.0},
                                       {{NodeKind::Cooler, "out1"}, 310.0}});
  const PinchReport rep = pinch_check(sys, st, 5.0, oc);
  ASSERT_EQ(rep.entries.size(), 4u);
  // Differences 473.15, 13.15, 396.85, 6.85.
  EXPECT_TRUE(rep.ok);
  EXPECT_NEAR(rep.margin, 6.85 - 5.0, 1e-9);
  const auto bad = brayton_states(sys, {{{NodeKind::Cooler, "out1"}, 306.0}});
  EXPECT_FALSE(pinch_check(sys, bad, 5.0, oc).ok);
}

CycleGraph regenerative() {
  const CycleGraph g0 = new_graph(limits({{Component::Compressor, 1}, {Component::Heater, 1}, {Component::Turbine, 1},
                                          {Component::Cooler, 1}, {Component::Ihx, 1}}));
  return chain(g0, {node(g0, NodeKind::Compressor), node(g0, NodeKind::IhxLow), node(g0, NodeKind::Heater),
                    node(g0, NodeKind::Turbine), node(g0, NodeKind::IhxHigh), node(g0, NodeKind::Cooler)});
}

TEST(PinchCheck, EqualIhxInletsFail) {
  const OperatingCase oc;
  const auto sys = assemble(regenerative(), oc);
  std::vector<PortState> st(static_cast<std::size_t>(sys.port_count()));
  for (int q = 0; q < sys.port_count(); ++q) {
    st[static_cast<std::size_t>(q)].node = sys.port_node(q);
    st[static_cast<std::size_t>(q)].port = sys.port_name(q);
    st[static_cast<std::size_t>(q)].T = 600.0;  // every port, both IHX inlets included
  }
  const PinchReport rep = pinch_check(sys, st, 5.0, oc);
  EXPECT_FALSE(rep.ok);
  EXPECT_LE(rep.margin, -5.0);
}

TEST(Decode, RegenerationDoesNotLowerEfficiency) {
  const OperatingCase oc;
  const auto simple = assemble(brayton(), oc);
  const auto regen = assemble(regenerative(), oc);
  for (double p_suc : {7500.0, 8500.0, 9500.0})
    for (double p_dis : {11000.0, 13000.0, 15000.0}) {
      VectorXd a = simple.space.nominal(), b = regen.space.nominal();
      a(*simple.space.index("p_suc")) = b(*regen.space.index("p_suc")) = p_suc;
      a(*simple.space.index("p_dis")) = b(*regen.space.index("p_dis")) = p_dis;
      const auto ra = decode(simple, a, fluid, ComponentParams{}, oc);
      const auto rb = decode(regen, b, fluid, ComponentParams{}, oc);
      ASSERT_TRUE(ra.feasible && rb.feasible) << p_suc << " " << p_dis;
      EXPECT_GE(*rb.performance, *ra.performance) << p_suc << " " << p_dis;
    }
}

TEST(Decode, DeterministicAndCsvLayout) {
  const OperatingCase oc;
  const auto sys = assemble(regenerative(), oc);
  const auto a = decode(sys, sys.space.nominal(), fluid, ComponentParams{}, oc);
  const auto b = decode(sys, sys.space.nominal(), fluid, ComponentParams{}, oc);
  EXPECT_EQ(a.x, b.x);
  std::ostringstream ca, cb;
  write_state_csv(a.states, ca);
  write_state_csv(b.states, cb);
  EXPECT_EQ(ca.str(), cb.str());
  std::istringstream lines(ca.str());
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "node,port,p,h,m,T,s,Q");
  int rows = 0;
  while (std::getline(lines, row)) ++rows;
  EXPECT_EQ(rows, sys.port_count());
}

OperatingCase heat_pump_case() {
  OperatingCase oc;
  oc.mode = CycleMode::HeatPump;
  oc.p_suc_lo = 1500.0;
  oc.p_suc_hi = 5000.0;
  oc.p_dis_lo = 7500.0;
  oc.p_dis_hi = 15000.0;
  return oc;
}

// Independent balance checks on a converged state table.
void expect_conservation(const ResidualSystem& sys, const DecodeResult& res) {
  const Roster& r = sys.roster();
  std::map<int, double> net;
  for (const auto& s : res.states) net[s.node] += s.port.rfind("out", 0) == 0 ? s.m : -s.m;
  for (auto [n, d] : net) EXPECT_LE(std::abs(d), 1e-9) << r.label(n);
  for (int e = 0; e < sys.edge_count(); ++e) {
    const auto& a = res.states[static_cast<std::size_t>(ResidualSystem::out_port(e))];
    const auto& b = res.states[static_cast<std::size_t>(ResidualSystem::in_port(e))];
    EXPECT_LE(std::abs(a.p - b.p), 1e-9 * a.p);
  }
  for (const auto& grp : r.groups) {
    if (grp.type != GroupType::Ihx || sys.out_edges[static_cast<std::size_t>(grp.members[0])].empty()) continue;
    double q[2];
    for (int k = 0; k < 2; ++k) {
      const int nd = grp.members[static_cast<std::size_t>(k)];
      const auto& in = res.states[static_cast<std::size_t>(ResidualSystem::in_port(sys.in_edges[static_cast<std::size_t>(nd)][0]))];
      const auto& out = res.states[static_cast<std::size_t>(ResidualSystem::out_port(sys.out_edges[static_cast<std::size_t>(nd)][0]))];
      q[k] = std::abs(out.m * out.h - in.m * in.h);
    }
    EXPECT_LE(std::abs(q[0] - q[1]), 1e-7 * std::max({q[0], q[1], 1.0}));
  }
  // Pressure returns to its start value around every loop.
  for (const auto& loop : directed_loops(sys.graph)) {
    double dp = 0.0;
    for (std::size_t k = 0; k < loop.size(); ++k) {
      const int a = loop[k], b = loop[(k + 1) % loop.size()];
      for (int e = 0; e < sys.edge_count(); ++e)
        if (sys.edges[static_cast<std::size_t>(e)] == std::make_pair(a, b)) {
          const auto& in_b = res.states[static_cast<std::size_t>(ResidualSystem::in_port(e))];
          const auto& out_a = res.states[static_cast<std::size_t>(ResidualSystem::out_port(e))];
          dp += in_b.p - out_a.p;
        }
    }
    EXPECT_LE(std::abs(dp), 1e-9);
  }
}

std::vector<CycleGraph> sample_structures(const ComponentLimits& l, std::size_t n, unsigned seed) {
  const auto all = enumerate_valid(l);
  std::vector<CycleGraph> v;
  for (const auto& [k, g] : all.structures) v.push_back(g);
  std::mt19937_64 rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  if (v.size() > n) v.resize(n);
  return v;
}

TEST(DecodeProperties, ConservationOnRandomEngineGraphs) {
  const auto graphs = sample_structures(limits({{Component::Compressor, 2}, {Component::Heater, 1}, {Component::Turbine, 2},
                                                {Component::Cooler, 1}, {Component::Ihx, 1}, {Component::Merge, 1}}),
                                        60, 3);
  const OperatingCase oc;
  int converged = 0;
  for (const auto& g : graphs) {
    const auto sys = assemble(g, oc);
    const auto res = decode(sys, sys.space.nominal(), fluid, ComponentParams{}, oc);
    if (!res.converged || res.states.empty()) continue;
    ++converged;
    EXPECT_LE(res.residual_norm, 1e-8);
    expect_conservation(sys, res);
  }
  EXPECT_GT(converged, 20);
}

TEST(DecodeProperties, RelabelingKeepsPerformance) {
  const auto graphs = sample_structures(limits({{Component::Compressor, 2}, {Component::Heater, 1}, {Component::Turbine, 2},
                                                {Component::Cooler, 1}, {Component::Merge, 1}}),
                                        40, 5);
  const OperatingCase oc;
  int compared = 0;
  for (const auto& g : graphs) {
    const auto r0 = decode(g, parameter_space(g, oc).nominal(), fluid, ComponentParams{}, oc);
    for (const auto& perm : g.roster().symmetries) {
      const CycleGraph h = relabeled(g, perm);
      const auto sp = parameter_space(h, oc);
      // Variable roles may swap names under relabeling; compare when the
      // nominal vectors coincide.
      if (sp.nominal() != parameter_space(g, oc).nominal()) continue;
      const auto r1 = decode(h, sp.nominal(), fluid, ComponentParams{}, oc);
      ASSERT_EQ(r0.converged, r1.converged);
      ASSERT_EQ(r0.performance.has_value(), r1.performance.has_value());
      if (r0.performance) {
        EXPECT_NEAR(*r0.performance, *r1.performance, 1e-9);
        ++compared;
      }
    }
  }
  EXPECT_GT(compared, 10);
}

TEST(DecodeProperties, ConservationOnRandomHeatPumpGraphs) {
  // Separator and ejector families exercise the quality split and the diffuser.
  const auto graphs = sample_structures(limits({{Component::Compressor, 1}, {Component::GasCooler, 1},
                                                {Component::ExpansionValve, 2}, {Component::Evaporator, 1},
                                                {Component::Separator, 1}, {Component::Ejector, 1}}),
                                        80, 11);
  const OperatingCase oc = heat_pump_case();
  int converged = 0;
  for (const auto& g : graphs) {
    const auto sys = assemble(g, oc);
    const auto res = decode(sys, sys.space.nominal(), fluid, ComponentParams{}, oc);
    if (!res.converged || res.states.empty()) continue;
    ++converged;
    expect_conservation(sys, res);
  }
  EXPECT_GT(converged, 10);
}
}  // namespace
