#pragma once

// Steady-state decoding of a cycle graph. Every port of every activated edge
// carries an unknown (p, h, m) triple; edge equalities, component relations and
// one mass anchor form a square system solved with hybrid_solve.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclegen/fluid.hpp"
#include "cyclegen/grammar.hpp"
#include "cyclegen/solver.hpp"

namespace cyclegen {

enum class CycleMode { HeatPump, HeatEngine };

inline std::string to_string(CycleMode m) { return m == CycleMode::HeatPump ? "heat_pump" : "heat_engine"; }

inline CycleMode parse_mode(const std::string& s) {
  if (s == "heat_pump" || s == "HeatPump") return CycleMode::HeatPump;
  if (s == "heat_engine" || s == "HeatEngine") return CycleMode::HeatEngine;
  throw std::invalid_argument("unknown cycle mode '" + s + "'");
}

/// External streams and pressure bounds of one design case. Temperatures in K,
/// pressures in kPa.
struct OperatingCase {
  CycleMode mode = CycleMode::HeatEngine;
  double T_source = 873.15;    // engine heat source
  double T_sink = 303.15;      // engine heat sink
  double T_air = 293.15;       // heat-pump evaporator air
  double T_water_in = 293.15;  // heat-pump water, counterflow through gas coolers
  double T_water_out = 333.15;
  double p_suc_lo = 7500.0, p_suc_hi = 10000.0;
  double p_dis_lo = 10000.0, p_dis_hi = 15000.0;

  void validate(const FluidModel& fluid) const {
    const FluidDomain& d = fluid.domain();
    auto in_T = [&](double T, const char* what) {
      if (!(T >= d.T_min && T <= d.T_max)) throw std::invalid_argument(std::string(what) + " outside fluid domain");
    };
    auto in_p = [&](double lo, double hi, const char* what) {
      if (!(lo >= d.p_min && hi <= d.p_max && lo < hi))
        throw std::invalid_argument(std::string(what) + " bounds invalid or outside fluid domain");
    };
    in_T(T_source, "T_source");
    in_T(T_sink, "T_sink");
    in_T(T_air, "T_air");
    in_T(T_water_in, "T_water_in");
    in_T(T_water_out, "T_water_out");
    if (!(T_water_out > T_water_in)) throw std::invalid_argument("T_water_out must exceed T_water_in");
    in_p(p_suc_lo, p_suc_hi, "p_suc");
    in_p(p_dis_lo, p_dis_hi, "p_dis");
  }

  bool operator==(const OperatingCase&) const = default;
};

struct ComponentParams {
  double eta_c = 0.8;   // compressor isentropic efficiency
  double eta_t = 0.85;  // turbine isentropic efficiency
  double eta_n = 0.8;   // ejector nozzle
  double eta_d = 0.8;   // ejector diffuser
  double dT_min = 5.0;  // pinch, K

  void validate() const {
    for (double e : {eta_c, eta_t, eta_n, eta_d})
      if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("efficiencies must lie in (0, 1]");
    if (!(dT_min > 0.0)) throw std::invalid_argument("dT_min must be positive");
  }

  bool operator==(const ComponentParams&) const = default;
};

struct ParameterVar {
  std::string name;
  double lo = 0.0, hi = 1.0;
  std::string unit;
  double nominal = 0.5;          // value used when no optimizer is involved
  std::optional<double> fixed;   // excluded from the optimizer when set
};

/// Operating parameters x_m of one graph. Vectors indexed like `vars`; the
/// unit-cube maps cover the free (non-fixed) variables only.
struct ParameterSpace {
  std::vector<ParameterVar> vars;

  int dim() const { return static_cast<int>(vars.size()); }
  int free_dim() const {
    return static_cast<int>(std::count_if(vars.begin(), vars.end(), [](const auto& v) { return !v.fixed; }));
  }
  std::optional<int> index(const std::string& name) const {
    for (int i = 0; i < dim(); ++i)
      if (vars[static_cast<std::size_t>(i)].name == name) return i;
    return std::nullopt;
  }
  ParameterVar& at(const std::string& name) {
    auto i = index(name);
    if (!i) throw std::out_of_range("no parameter '" + name + "'");
    return vars[static_cast<std::size_t>(*i)];
  }
  void fix(const std::string& name, double value) {
    ParameterVar& v = at(name);
    if (!(value >= v.lo && value <= v.hi)) throw std::invalid_argument("fixed value outside bounds of " + name);
    v.fixed = value;
  }
  Eigen::VectorXd nominal() const {
    Eigen::VectorXd x(dim());
    for (int i = 0; i < dim(); ++i) {
      const auto& v = vars[static_cast<std::size_t>(i)];
      x(i) = v.fixed ? *v.fixed : v.nominal;
    }
    return x;
  }
  Eigen::VectorXd from_unit(const Eigen::VectorXd& u) const {
    if (u.size() != free_dim()) throw std::invalid_argument("from_unit: dimension mismatch");
    Eigen::VectorXd x(dim());
    Eigen::Index k = 0;
    for (int i = 0; i < dim(); ++i) {
      const auto& v = vars[static_cast<std::size_t>(i)];
      x(i) = v.fixed ? *v.fixed : v.lo + std::clamp(u(k++), 0.0, 1.0) * (v.hi - v.lo);
    }
    return x;
  }
  Eigen::VectorXd to_unit(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) throw std::invalid_argument("to_unit: dimension mismatch");
    Eigen::VectorXd u(free_dim());
    Eigen::Index k = 0;
    for (int i = 0; i < dim(); ++i) {
      const auto& v = vars[static_cast<std::size_t>(i)];
      if (!v.fixed) u(k++) = (x(i) - v.lo) / (v.hi - v.lo);
    }
    return u;
  }
  bool contains(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) return false;
    for (int i = 0; i < dim(); ++i) {
      const auto& v = vars[static_cast<std::size_t>(i)];
      if (!(x(i) >= v.lo && x(i) <= v.hi)) return false;
    }
    return true;
  }
};

/// Raised when a structurally valid graph has no well-posed state system
/// (for example two pressure setters on one isobaric zone).
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Port layout and parameter wiring of an assembled graph. Edge e owns the
/// outlet port 2e at its source node and the inlet port 2e+1 at its target.
/// Unknown slots: 3q + {0, 1, 2} = {p / 1000, h / 100, m} of port q. Nodes,
/// edges and variables follow the canonical labeling, so same-kind
/// relabelings of a graph assemble to the same system.
struct ResidualSystem {
  CycleGraph graph;
  std::vector<int> node_order;  // canonical position -> node
  std::vector<int> position;    // node -> canonical position
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> in_edges, out_edges;  // per node, edge ids by peer index
  std::vector<int> zone_of_port;
  std::vector<int> zone_var;      // per zone: x_m index, or -1 when set by an ejector diffuser
  std::vector<int> split_var;     // per node: x_m index of r_split, or -1
  std::vector<int> ihx_var;       // per node of an IHX pair: x_m index of the effectiveness, or -1
  int anchor_node = -1;
  ParameterSpace space;

  explicit ResidualSystem(CycleGraph g) : graph(std::move(g)) {}

  int edge_count() const { return static_cast<int>(edges.size()); }
  int port_count() const { return 2 * edge_count(); }
  int unknown_count() const { return 3 * port_count(); }
  int residual_count() const { return 3 * edge_count() + 3 * edge_count(); }
  static int out_port(int e) { return 2 * e; }
  static int in_port(int e) { return 2 * e + 1; }
  int port_node(int q) const {
    const auto [i, j] = edges[static_cast<std::size_t>(q / 2)];
    return q % 2 == 0 ? i : j;
  }
  std::string port_name(int q) const {
    const int node = port_node(q), e = q / 2;
    const auto& list = q % 2 == 0 ? out_edges[static_cast<std::size_t>(node)] : in_edges[static_cast<std::size_t>(node)];
    const auto k = std::find(list.begin(), list.end(), e) - list.begin();
    return (q % 2 == 0 ? "out" : "in") + std::to_string(k + 1);
  }
  Roster const& roster() const { return graph.roster(); }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) a = parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
    return a;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

inline bool isobaric(NodeKind k) {
  switch (k) {
    case NodeKind::Compressor:
    case NodeKind::Turbine:
    case NodeKind::ExpansionValve:
    case NodeKind::EjectorNozzle:
    case NodeKind::EjectorMixer: return false;
    default: return true;
  }
}

inline double geometric_mean(double a, double b) { return std::sqrt(a * b); }

}  // namespace detail

/// Builds the port layout, pressure zones and parameter space of a valid graph.
inline ResidualSystem assemble(const CycleGraph& g, const OperatingCase& oc) {
  if (!structural_validity(g).valid()) throw std::invalid_argument("assemble: graph is not structurally valid");
  ResidualSystem sys(g);
  const Roster& r = g.roster();
  const int n = g.size();
  sys.node_order = canonical_permutation(g);
  sys.position.resize(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) sys.position[static_cast<std::size_t>(sys.node_order[static_cast<std::size_t>(a)])] = a;
  sys.in_edges.assign(static_cast<std::size_t>(n), {});
  sys.out_edges.assign(static_cast<std::size_t>(n), {});
  for (int i : sys.node_order)
    for (int j : sys.node_order)
      if (g.edge(i, j)) {
        const int e = sys.edge_count();
        sys.edges.emplace_back(i, j);
        sys.out_edges[static_cast<std::size_t>(i)].push_back(e);
      }
  for (int e = 0; e < sys.edge_count(); ++e) sys.in_edges[static_cast<std::size_t>(sys.edges[static_cast<std::size_t>(e)].second)].push_back(e);
  for (auto& v : sys.in_edges)
    std::sort(v.begin(), v.end(), [&](int a, int b) {
      return sys.position[static_cast<std::size_t>(sys.edges[static_cast<std::size_t>(a)].first)] <
             sys.position[static_cast<std::size_t>(sys.edges[static_cast<std::size_t>(b)].first)];
    });

  auto ins = [&](int i) -> const std::vector<int>& { return sys.in_edges[static_cast<std::size_t>(i)]; };
  auto outs = [&](int i) -> const std::vector<int>& { return sys.out_edges[static_cast<std::size_t>(i)]; };
  auto partner = [&](int i, NodeKind k) {
    for (int m : r.groups[static_cast<std::size_t>(r.group_of(i))].members)
      if (r.kind(m) == k) return m;
    throw std::logic_error("coupling group without " + to_string(k));
  };

  // Port multiplicity per kind.
  const std::uint32_t act = g.activated_mask();
  for (int i : sys.node_order) {
    if (!((act >> i) & 1u)) continue;
    const int di = static_cast<int>(ins(i).size()), dout = static_cast<int>(outs(i).size());
    if (di < 1 || di > r.info(i).max_in || dout < 1 || dout > r.n_max[static_cast<std::size_t>(i)])
      throw std::logic_error("assemble: port multiplicity mismatch at " + r.label(i));
  }

  // Isobaric zones.
  detail::UnionFind uf(sys.port_count());
  for (int e = 0; e < sys.edge_count(); ++e) uf.unite(ResidualSystem::out_port(e), ResidualSystem::in_port(e));
  for (int i : sys.node_order) {
    if (!((act >> i) & 1u)) continue;
    const NodeKind k = r.kind(i);
    const int first_out = ResidualSystem::out_port(outs(i)[0]);
    for (int e : outs(i)) uf.unite(first_out, ResidualSystem::out_port(e));
    if (detail::isobaric(k))
      for (int e : ins(i)) uf.unite(first_out, ResidualSystem::in_port(e));
    if (k == NodeKind::EjectorNozzle) {
      const int ec = partner(i, NodeKind::EjectorSuction);
      uf.unite(first_out, ResidualSystem::in_port(ins(ec)[0]));
    }
  }
  std::map<int, int> zone_id;
  sys.zone_of_port.resize(static_cast<std::size_t>(sys.port_count()));
  for (int q = 0; q < sys.port_count(); ++q) {
    const int root = uf.find(q);
    auto it = zone_id.try_emplace(root, static_cast<int>(zone_id.size())).first;
    sys.zone_of_port[static_cast<std::size_t>(q)] = it->second;
  }
  const int nz = static_cast<int>(zone_id.size());

  // Pressure setters: compressor outlets (discharge), turbine and valve outlets
  // (suction), ejector mixer outlets (diffuser relation, no variable).
  struct ZoneSetters { int dis = 0, suc = 0, em = 0; };
  std::vector<ZoneSetters> zs(static_cast<std::size_t>(nz));
  for (int i : sys.node_order) {
    if (!((act >> i) & 1u)) continue;
    auto& z = zs[static_cast<std::size_t>(sys.zone_of_port[static_cast<std::size_t>(ResidualSystem::out_port(outs(i)[0]))])];
    switch (r.kind(i)) {
      case NodeKind::Compressor: ++z.dis; break;
      case NodeKind::Turbine:
      case NodeKind::ExpansionValve: ++z.suc; break;
      case NodeKind::EjectorMixer: ++z.em; break;
      default: break;
    }
  }
  const double p_lo = oc.p_suc_lo, p_hi = oc.p_dis_hi;
  sys.zone_var.assign(static_cast<std::size_t>(nz), -1);
  int n_dis = 0, n_suc = 0, n_mid = 0;
  for (int z = 0; z < nz; ++z) {
    const auto& s = zs[static_cast<std::size_t>(z)];
    if (s.em > 0) {
      if (s.em > 1 || s.dis + s.suc > 0) throw DecodeError("assemble: ejector outlet zone has competing pressure setters");
      continue;
    }
    ParameterVar v;
    v.unit = "kPa";
    if (s.dis > 0 && s.suc == 0) {
      v.name = ++n_dis == 1 ? "p_dis" : "p_dis_" + std::to_string(n_dis);
      v.lo = n_dis == 1 ? oc.p_dis_lo : p_lo;
      v.hi = oc.p_dis_hi;
    } else if (s.suc > 0 && s.dis == 0) {
      v.name = ++n_suc == 1 ? "p_suc" : "p_suc_" + std::to_string(n_suc);
      v.lo = oc.p_suc_lo;
      v.hi = n_suc == 1 ? oc.p_suc_hi : p_hi;
    } else if (s.suc > 0 && s.dis > 0) {
      v.name = ++n_mid == 1 ? "p_mid" : "p_mid_" + std::to_string(n_mid);
      v.lo = p_lo;
      v.hi = p_hi;
    } else {
      throw DecodeError("assemble: isobaric zone without pressure setter");
    }
    v.nominal = detail::geometric_mean(v.lo, v.hi);
    sys.zone_var[static_cast<std::size_t>(z)] = sys.space.dim();
    sys.space.vars.push_back(v);
  }

  sys.split_var.assign(static_cast<std::size_t>(n), -1);
  sys.ihx_var.assign(static_cast<std::size_t>(n), -1);
  for (int i : sys.node_order) {
    if (!((act >> i) & 1u) || outs(i).size() != 2 || r.kind(i) == NodeKind::Separator) continue;
    sys.split_var[static_cast<std::size_t>(i)] = sys.space.dim();
    sys.space.vars.push_back({"r_split_" + r.label(i), 0.05, 0.95, "-", 0.5, std::nullopt});
  }
  for (int i : sys.node_order) {
    if (r.kind(i) != NodeKind::IhxLow || !((act >> i) & 1u)) continue;
    const auto& grp = r.groups[static_cast<std::size_t>(r.group_of(i))];
    const int id = r.nodes[static_cast<std::size_t>(grp.members[0])].id;
    for (int m : grp.members) sys.ihx_var[static_cast<std::size_t>(m)] = sys.space.dim();
    sys.space.vars.push_back({"eff_IHX#" + std::to_string(id), 0.3, 0.95, "-", 0.8, std::nullopt});
  }

  for (int i : sys.node_order)
    if (sys.anchor_node < 0 && ((act >> i) & 1u) && outs(i).size() == 1 && r.kind(i) != NodeKind::Separator) sys.anchor_node = i;
  if (sys.anchor_node < 0) throw std::logic_error("assemble: no node eligible for the mass anchor");
  return sys;
}

inline ParameterSpace parameter_space(const CycleGraph& g, const OperatingCase& oc) { return assemble(g, oc).space; }

namespace detail {

/// Outlet values a node imposes on one of its outlet ports. When p_implicit is
/// set the pressure equation is the residual p_res (kJ/kg) instead of P.
struct NodeTarget {
  double P = 0.0, H = 0.0, M = 0.0;
  bool p_implicit = false;
  double p_res = 0.0;
};

inline double absorbing_T(const OperatingCase& oc) { return oc.mode == CycleMode::HeatEngine ? oc.T_source : oc.T_air; }
inline double rejecting_T(const OperatingCase& oc) { return oc.mode == CycleMode::HeatEngine ? oc.T_sink : oc.T_water_in; }

inline int group_member(const Roster& r, int i, NodeKind k) {
  for (int m : r.groups[static_cast<std::size_t>(r.group_of(i))].members)
    if (r.kind(m) == k) return m;
  throw std::logic_error("coupling group without " + to_string(k));
}

inline void node_targets(const ResidualSystem& sys, int i, const Eigen::VectorXd& x, const Eigen::VectorXd& xm,
                         const FluidModel& f, const ComponentParams& cp, const OperatingCase& oc,
                         std::vector<NodeTarget>& t) {
  const Roster& r = sys.roster();
  const auto& I = sys.in_edges[static_cast<std::size_t>(i)];
  const auto& O = sys.out_edges[static_cast<std::size_t>(i)];
  auto P = [&](int q) { return 1000.0 * x(3 * q); };
  auto H = [&](int q) { return 100.0 * x(3 * q + 1); };
  auto M = [&](int q) { return x(3 * q + 2); };
  auto in_of = [&](int node) { return ResidualSystem::in_port(sys.in_edges[static_cast<std::size_t>(node)][0]); };
  auto zone_p = [&] {
    const int z = sys.zone_of_port[static_cast<std::size_t>(ResidualSystem::out_port(O[0]))];
    return xm(sys.zone_var[static_cast<std::size_t>(z)]);
  };
  const int q0 = ResidualSystem::in_port(I[0]);
  const double p_in = P(q0), h_in = H(q0), m_in = M(q0);
  NodeTarget base{p_in, h_in, m_in};
  t.assign(O.size(), base);

  switch (r.kind(i)) {
    case NodeKind::Compressor: {
      base.P = zone_p();
      const double hs = f.ps_to_h(base.P, f.ph_to_tsq(p_in, h_in).s);
      base.H = h_in + (hs - h_in) / cp.eta_c;
      break;
    }
    case NodeKind::Turbine: {
      base.P = zone_p();
      const double hs = f.ps_to_h(base.P, f.ph_to_tsq(p_in, h_in).s);
      base.H = h_in - cp.eta_t * (h_in - hs);
      break;
    }
    case NodeKind::ExpansionValve: base.P = zone_p(); break;
    case NodeKind::Heater:
    case NodeKind::Evaporator: base.H = f.pt_to_h(p_in, absorbing_T(oc) - cp.dT_min); break;
    case NodeKind::Cooler:
    case NodeKind::GasCooler: base.H = f.pt_to_h(p_in, rejecting_T(oc) + cp.dT_min); break;
    case NodeKind::IhxLow:
    case NodeKind::IhxHigh: {
      const int lo = group_member(r, i, NodeKind::IhxLow), hi = group_member(r, i, NodeKind::IhxHigh);
      const int a = in_of(lo), b = in_of(hi);
      const double T_a = f.ph_to_tsq(P(a), H(a)).T, T_b = f.ph_to_tsq(P(b), H(b)).T;
      const double q_lo = M(a) * (f.pt_to_h(P(a), T_b) - H(a));
      const double q_hi = M(b) * (H(b) - f.pt_to_h(P(b), T_a));
      const double Q = xm(sys.ihx_var[static_cast<std::size_t>(i)]) * std::min(q_lo, q_hi);
      base.H = r.kind(i) == NodeKind::IhxLow ? h_in + Q / m_in : h_in - Q / m_in;
      break;
    }
    case NodeKind::Merge:
    case NodeKind::EjectorMixer: {
      double msum = 0.0, mh = 0.0;
      for (int e : I) {
        const int q = ResidualSystem::in_port(e);
        msum += M(q);
        mh += M(q) * H(q);
      }
      base.M = msum;
      base.H = mh / msum;
      if (r.kind(i) == NodeKind::Merge) break;
      // Motive stream expands to suction pressure; the mixed jet's kinetic
      // energy is recovered in the diffuser.
      const int ev = group_member(r, i, NodeKind::EjectorNozzle);
      int qm = -1, qs = -1;
      for (int e : I) (sys.edges[static_cast<std::size_t>(e)].first == ev ? qm : qs) = ResidualSystem::in_port(e);
      const int q_motive_in = in_of(ev);
      const double p_suc = P(qs), h_m = H(qm);
      const double s_m = f.ph_to_tsq(P(q_motive_in), H(q_motive_in)).s;
      const double ke_n = cp.eta_n * (h_m - f.ps_to_h(p_suc, s_m));
      const double omega = M(qs) / M(qm);
      const double ke_mix = ke_n / ((1.0 + omega) * (1.0 + omega));
      const double h_mix = base.H - ke_mix;
      const double s_mix = f.ph_to_tsq(p_suc, h_mix).s;
      const double p_out = P(ResidualSystem::out_port(O[0]));
      base.p_implicit = true;
      base.p_res = f.ps_to_h(p_out, s_mix) - (h_mix + cp.eta_d * ke_mix);
      break;
    }
    case NodeKind::EjectorNozzle: base.P = P(in_of(group_member(r, i, NodeKind::EjectorSuction))); break;
    case NodeKind::Separator: {
      const SaturationState sat = f.p_to_sat(p_in);
      const double q = (h_in - sat.h_l) / (sat.h_v - sat.h_l);
      for (std::size_t k = 0; k < O.size(); ++k) {
        const bool vapor = r.kind(sys.edges[static_cast<std::size_t>(O[k])].second) == NodeKind::SeparatorVapor;
        t[k] = {p_in, vapor ? sat.h_v : sat.h_l, (vapor ? q : 1.0 - q) * m_in};
      }
      return;
    }
    default: break;  // SV, SL and the suction port pass through
  }
  for (std::size_t k = 0; k < O.size(); ++k) {
    t[k] = base;
    if (O.size() == 2) {
      const double split = xm(sys.split_var[static_cast<std::size_t>(i)]);
      t[k].M = base.M * (k == 0 ? split : 1.0 - split);
    }
  }
}

}  // namespace detail

/// F(x) for the assembled system at operating parameters xm. Edge equalities
/// come first, then three relations per outlet port in node order.
inline Eigen::VectorXd residuals(const ResidualSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& xm,
                                 const FluidModel& f, const ComponentParams& cp, const OperatingCase& oc) {
  if (x.size() != sys.unknown_count()) throw std::invalid_argument("residuals: unknown vector size mismatch");
  if (xm.size() != sys.space.dim()) throw std::invalid_argument("residuals: parameter vector size mismatch");
  Eigen::VectorXd F(sys.unknown_count());
  Eigen::Index k = 0;
  for (int e = 0; e < sys.edge_count(); ++e)
    for (int c = 0; c < 3; ++c) F(k++) = x(3 * ResidualSystem::in_port(e) + c) - x(3 * ResidualSystem::out_port(e) + c);
  std::vector<detail::NodeTarget> t;
  for (int i : sys.node_order) {
    const auto& O = sys.out_edges[static_cast<std::size_t>(i)];
    if (O.empty()) continue;
    detail::node_targets(sys, i, x, xm, f, cp, oc, t);
    for (std::size_t o = 0; o < O.size(); ++o) {
      const int q = ResidualSystem::out_port(O[o]);
      if (k + 3 > F.size()) throw std::logic_error("residuals: more equations than unknowns");
      F(k++) = t[o].p_implicit ? t[o].p_res / 100.0 : x(3 * q) - t[o].P / 1000.0;
      F(k++) = x(3 * q + 1) - t[o].H / 100.0;
      F(k++) = i == sys.anchor_node ? x(3 * q + 2) - 1.0 : x(3 * q + 2) - t[o].M;
    }
  }
  if (k != F.size())
    throw std::logic_error("residuals: " + std::to_string(k) + " equations for " + std::to_string(F.size()) + " unknowns");
  return F;
}

/// Initial guess with every port at one pressure, enthalpy h0 and unit flow.
inline Eigen::VectorXd uniform_guess(const ResidualSystem& sys, const OperatingCase& oc, double h0) {
  Eigen::VectorXd x(sys.unknown_count());
  const double p0 = detail::geometric_mean(oc.p_suc_lo, oc.p_dis_hi);
  for (int q = 0; q < sys.port_count(); ++q) {
    x(3 * q) = p0 / 1000.0;
    x(3 * q + 1) = h0 / 100.0;
    x(3 * q + 2) = 1.0;
  }
  return x;
}

/// Zone pressures from xm, then repeated forward passes of the component
/// relations from a uniform start.
inline Eigen::VectorXd sweep_guess(const ResidualSystem& sys, const Eigen::VectorXd& xm, const FluidModel& f,
                                   const ComponentParams& cp, const OperatingCase& oc, double h0) {
  Eigen::VectorXd x = uniform_guess(sys, oc, h0);
  const Roster& r = sys.roster();
  for (int q = 0; q < sys.port_count(); ++q) {
    const int v = sys.zone_var[static_cast<std::size_t>(sys.zone_of_port[static_cast<std::size_t>(q)])];
    if (v >= 0) x(3 * q) = xm(v) / 1000.0;
  }
  // Diffuser outlets start a little above their suction pressure.
  for (int i = 0; i < sys.graph.size(); ++i) {
    if (r.kind(i) != NodeKind::EjectorMixer || sys.out_edges[static_cast<std::size_t>(i)].empty()) continue;
    const double p_suc = x(3 * ResidualSystem::in_port(sys.in_edges[static_cast<std::size_t>(i)][0]));
    const int z = sys.zone_of_port[static_cast<std::size_t>(ResidualSystem::out_port(sys.out_edges[static_cast<std::size_t>(i)][0]))];
    for (int q = 0; q < sys.port_count(); ++q)
      if (sys.zone_of_port[static_cast<std::size_t>(q)] == z)
        x(3 * q) = std::min(1.2 * p_suc, f.domain().p_max / 1000.0);
  }
  std::vector<detail::NodeTarget> t;
  for (int pass = 0; pass < 3 * sys.graph.size(); ++pass) {
    for (int i : sys.node_order) {
      const auto& O = sys.out_edges[static_cast<std::size_t>(i)];
      if (O.empty()) continue;
      try {
        detail::node_targets(sys, i, x, xm, f, cp, oc, t);
      } catch (const std::exception&) {
        continue;
      }
      for (std::size_t o = 0; o < O.size(); ++o) {
        const double h = std::clamp(t[o].H, f.h_min(), f.h_max());
        const double m = i == sys.anchor_node ? 1.0 : t[o].M;
        if (!std::isfinite(h) || !std::isfinite(m) || !std::isfinite(t[o].P)) continue;
        for (int q : {ResidualSystem::out_port(O[o]), ResidualSystem::in_port(O[o])}) {
          if (!t[o].p_implicit) x(3 * q) = t[o].P / 1000.0;
          x(3 * q + 1) = h / 100.0;
          x(3 * q + 2) = m;
        }
      }
    }
  }
  return x;
}

struct PortState {
  int node = -1;
  std::string label;  // node label
  std::string port;   // in<k> / out<k>
  double p = 0.0, h = 0.0, m = 0.0, T = 0.0, s = 0.0, Q = kSinglePhase;
};

struct PinchEntry {
  std::string node;
  std::string endpoint;
  double T_hot = 0.0, T_cold = 0.0;
  double diff() const { return T_hot - T_cold; }
};

struct PinchReport {
  bool ok = true;
  double margin = std::numeric_limits<double>::infinity();  // min difference minus dT_min
  std::vector<PinchEntry> entries;
};

struct DecodeOptions {
  SolveOptions solve;
  double h_guess = 300.0;      // kJ/kg, uniform initial enthalpy
  bool sweep_fallback = true;  // retry from a propagated guess when the uniform start fails
  int uniform_max_iter = 100;  // iteration cap of the uniform start when a fallback follows
};

struct DecodeResult {
  SolveStatus status = SolveStatus::NotConverged;
  bool converged = false;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int attempts = 0;
  Eigen::VectorXd x;
  std::vector<PortState> states;
  std::optional<double> performance;  // COP or thermal efficiency
  PinchReport pinch;
  bool pinch_ok = false;
  bool feasible = false;
  std::vector<std::string> diagnostics;
};

/// nullopt for a zero denominator.
inline std::optional<double> heat_engine_efficiency(double W_tb, double W_cp, double Q_ht) {
  if (!(std::abs(Q_ht) > 1e-12)) return std::nullopt;
  return (W_tb - W_cp) / Q_ht;
}

inline std::optional<double> heat_pump_cop(double Q_gc, double W_cp) {
  if (!(std::abs(W_cp) > 1e-12)) return std::nullopt;
  return Q_gc / W_cp;
}

inline std::vector<PortState> port_states(const ResidualSystem& sys, const Eigen::VectorXd& x, const FluidModel& f) {
  std::vector<PortState> st;
  st.reserve(static_cast<std::size_t>(sys.port_count()));
  for (int q = 0; q < sys.port_count(); ++q) {
    PortState s;
    s.node = sys.port_node(q);
    s.label = sys.roster().label(s.node);
    s.port = sys.port_name(q);
    s.p = 1000.0 * x(3 * q);
    s.h = 100.0 * x(3 * q + 1);
    s.m = x(3 * q + 2);
    const FluidState fs = f.ph_to_tsq(s.p, s.h);
    s.T = fs.T;
    s.s = fs.s;
    s.Q = fs.Q;
    st.push_back(std::move(s));
  }
  return st;
}

namespace detail {

/// Enthalpy flow out minus in across node i.
inline double node_duty(const ResidualSystem& sys, const std::vector<PortState>& st, int i) {
  double d = 0.0;
  for (int e : sys.out_edges[static_cast<std::size_t>(i)]) {
    const auto& s = st[static_cast<std::size_t>(ResidualSystem::out_port(e))];
    d += s.m * s.h;
  }
  for (int e : sys.in_edges[static_cast<std::size_t>(i)]) {
    const auto& s = st[static_cast<std::size_t>(ResidualSystem::in_port(e))];
    d -= s.m * s.h;
  }
  return d;
}

}  // namespace detail

/// Heat engine: (W_tb - W_cp) / Q_ht. Heat pump: Q_gc / W_cp.
inline std::optional<double> performance(const ResidualSystem& sys, const std::vector<PortState>& st, CycleMode mode) {
  double W_tb = 0.0, W_cp = 0.0, Q_ht = 0.0, Q_gc = 0.0;
  for (int i : sys.node_order) {
    if (sys.out_edges[static_cast<std::size_t>(i)].empty()) continue;
    const double d = detail::node_duty(sys, st, i);
    switch (sys.roster().kind(i)) {
      case NodeKind::Turbine: W_tb -= d; break;
      case NodeKind::Compressor: W_cp += d; break;
      case NodeKind::Heater: Q_ht += d; break;
      case NodeKind::GasCooler: Q_gc -= d; break;
      default: break;
    }
  }
  return mode == CycleMode::HeatEngine ? heat_engine_efficiency(W_tb, W_cp, Q_ht) : heat_pump_cop(Q_gc, W_cp);
}

/// Endpoint temperature approaches. Reservoir exchangers face a constant
/// temperature; heat-pump gas coolers and coolers face water in counterflow.
inline PinchReport pinch_check(const ResidualSystem& sys, const std::vector<PortState>& st, double dT_min,
                               const OperatingCase& oc) {
  PinchReport rep;
  const Roster& r = sys.roster();
  auto T_in = [&](int i) { return st[static_cast<std::size_t>(ResidualSystem::in_port(sys.in_edges[static_cast<std::size_t>(i)][0]))].T; };
  auto T_out = [&](int i) { return st[static_cast<std::size_t>(ResidualSystem::out_port(sys.out_edges[static_cast<std::size_t>(i)][0]))].T; };
  auto add = [&](int i, const char* where, double hot, double cold) { rep.entries.push_back({r.label(i), where, hot, cold}); };
  for (int i : sys.node_order) {
    if (sys.out_edges[static_cast<std::size_t>(i)].empty()) continue;
    switch (r.kind(i)) {
      case NodeKind::Heater:
      case NodeKind::Evaporator: {
        const double Tr = detail::absorbing_T(oc);
        add(i, "inlet", Tr, T_in(i));
        add(i, "outlet", Tr, T_out(i));
        break;
      }
      case NodeKind::Cooler:
      case NodeKind::GasCooler:
        if (oc.mode == CycleMode::HeatEngine) {
          add(i, "inlet", T_in(i), oc.T_sink);
          add(i, "outlet", T_out(i), oc.T_sink);
        } else {
          add(i, "inlet", T_in(i), oc.T_water_out);
          add(i, "outlet", T_out(i), oc.T_water_in);
        }
        break;
      case NodeKind::IhxHigh: {
        const int lo = detail::group_member(r, i, NodeKind::IhxLow);
        add(i, "hot_inlet", T_in(i), T_out(lo));
        add(i, "hot_outlet", T_out(i), T_in(lo));
        break;
      }
      default: break;
    }
  }
  double min_diff = std::numeric_limits<double>::infinity();
  for (const auto& e : rep.entries) min_diff = std::min(min_diff, e.diff());
  rep.margin = min_diff - dT_min;
  rep.ok = !(min_diff < dT_min - 1e-6);
  return rep;
}

namespace detail {

inline void check_feasibility(const ResidualSystem& sys, DecodeResult& res) {
  const Roster& r = sys.roster();
  auto fail = [&](const std::string& why) {
    res.feasible = false;
    res.diagnostics.push_back(why);
  };
  res.feasible = true;
  if (!res.pinch_ok) fail("pinch violated (margin " + std::to_string(res.pinch.margin) + " K)");
  for (const auto& s : res.states)
    if (!(s.m > 0.0)) {
      fail("non-positive mass flow at " + s.label + "." + s.port);
      break;
    }
  for (int i : sys.node_order) {
    const auto& O = sys.out_edges[static_cast<std::size_t>(i)];
    if (O.empty()) continue;
    const double p_in = res.states[static_cast<std::size_t>(ResidualSystem::in_port(sys.in_edges[static_cast<std::size_t>(i)][0]))].p;
    const double p_out = res.states[static_cast<std::size_t>(ResidualSystem::out_port(O[0]))].p;
    const NodeKind k = r.kind(i);
    if (k == NodeKind::Compressor && !(p_out > p_in)) fail(r.label(i) + " does not raise pressure");
    if ((k == NodeKind::Turbine || k == NodeKind::ExpansionValve) && !(p_out < p_in))
      fail(r.label(i) + " does not lower pressure");
    if (k == NodeKind::EjectorMixer) {
      double p_suc = 0.0;
      for (int e : sys.in_edges[static_cast<std::size_t>(i)])
        if (r.kind(sys.edges[static_cast<std::size_t>(e)].first) == NodeKind::EjectorSuction)
          p_suc = res.states[static_cast<std::size_t>(ResidualSystem::in_port(e))].p;
      if (!(p_out > p_suc)) fail(r.label(i) + " outlet below suction pressure");
    }
  }
  if (!res.performance) {
    fail("performance undefined (zero denominator)");
  } else if (!(*res.performance > 0.0)) {
    fail("non-positive performance");
  }
}

}  // namespace detail

inline DecodeResult decode(const ResidualSystem& sys, const Eigen::VectorXd& xm, const FluidModel& f,
                           const ComponentParams& cp, const OperatingCase& oc, const DecodeOptions& opt = {}) {
  cp.validate();
  if (xm.size() != sys.space.dim()) throw std::invalid_argument("decode: parameter vector size mismatch");
  DecodeResult res;
  const ResidualFn F = [&](const Eigen::VectorXd& x) { return residuals(sys, x, xm, f, cp, oc); };
  std::vector<Eigen::VectorXd> starts{uniform_guess(sys, oc, opt.h_guess)};
  if (opt.sweep_fallback) starts.push_back(sweep_guess(sys, xm, f, cp, oc, opt.h_guess));
  SolveResult best;
  for (const auto& x0 : starts) {
    SolveOptions so = opt.solve;
    if (res.attempts == 0 && starts.size() > 1) so.max_iter = opt.uniform_max_iter;
    ++res.attempts;
    SolveResult s = hybrid_solve(F, x0, so);
    res.iterations += s.iterations;
    if (res.attempts == 1 || s.fnorm < best.fnorm) best = std::move(s);
    if (best.status == SolveStatus::Converged) break;
  }
  res.status = best.status;
  res.converged = best.status == SolveStatus::Converged;
  res.residual_norm = best.fnorm;
  res.x = best.x;
  if (!res.converged) {
    res.diagnostics.push_back(std::string("solver ") + to_string(best.status));
    return res;
  }
  try {
    res.states = port_states(sys, res.x, f);
  } catch (const DomainError& e) {
    res.diagnostics.push_back(e.what());
    return res;
  }
  res.performance = performance(sys, res.states, oc.mode);
  res.pinch = pinch_check(sys, res.states, cp.dT_min, oc);
  res.pinch_ok = res.pinch.ok;
  detail::check_feasibility(sys, res);
  return res;
}

/// Assembles and decodes. Graphs without a well-posed state system come back
/// infeasible with a diagnostic; structurally invalid graphs are rejected.
inline DecodeResult decode(const CycleGraph& g, const Eigen::VectorXd& xm, const FluidModel& f,
                           const ComponentParams& cp, const OperatingCase& oc, const DecodeOptions& opt = {}) {
  std::optional<ResidualSystem> sys;
  try {
    sys.emplace(assemble(g, oc));
  } catch (const DecodeError& e) {
    DecodeResult res;
    res.diagnostics.push_back(e.what());
    return res;
  }
  return decode(*sys, xm, f, cp, oc, opt);
}

/// One row per port: node,port,p,h,m,T,s,Q.
inline void write_state_csv(const std::vector<PortState>& st, std::ostream& out) {
  out << "node,port,p,h,m,T,s,Q\n";
  const auto flags = out.flags();
  const auto prec = out.precision(10);
  for (const auto& s : st)
    out << s.label << ',' << s.port << ',' << s.p << ',' << s.h << ',' << s.m << ',' << s.T << ',' << s.s << ','
        << s.Q << '\n';
  out.precision(prec);
  out.flags(flags);
}

}  // namespace cyclegen
