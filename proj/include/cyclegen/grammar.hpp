#pragma once

// Cycle structures as directed graphs over a fixed component roster, with
// edge-activation rules, structural validity, canonical keys and an
// exhaustive enumerator for small rosters.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cyclegen {

enum class NodeKind : std::uint8_t {
  Compressor,
  Turbine,
  ExpansionValve,
  Heater,
  Cooler,
  GasCooler,
  Evaporator,
  IhxLow,
  IhxHigh,
  EjectorNozzle,
  EjectorSuction,
  EjectorMixer,
  Separator,
  SeparatorVapor,
  SeparatorLiquid,
  Merge,
};

inline constexpr int kNodeKindCount = 16;

struct KindInfo {
  const char* tag;
  int dp;        // sign of the pressure change across the node
  int dh;        // sign of the enthalpy change
  int max_in;    // inlet limit, internal edges included
  int n_max;     // outlet limit, internal edges included
  bool ext_in;   // may receive edges chosen by the agent
  bool ext_out;  // may emit edges chosen by the agent
};

inline const KindInfo& kind_info(NodeKind k) {
  static const std::array<KindInfo, kNodeKindCount> table{{
      {"CP", +1, +1, 1, 2, true, true},
      {"TB", -1, -1, 1, 2, true, true},
      {"EV", -1, 0, 1, 2, true, true},
      {"HT", 0, +1, 1, 2, true, true},
      {"CL", 0, -1, 1, 1, true, true},
      {"GC", 0, -1, 1, 1, true, true},
      {"EVP", 0, +1, 1, 1, true, true},
      {"R", 0, +1, 1, 1, true, true},
      {"r", 0, -1, 1, 1, true, true},
      {"Ev", -1, +1, 1, 1, true, false},
      {"Ec", +1, -1, 1, 1, true, false},
      {"Em", 0, 0, 2, 1, false, true},
      {"S", 0, 0, 1, 2, true, false},
      {"SV", 0, 0, 1, 1, false, true},
      {"SL", 0, 0, 1, 1, false, true},
      {"M", 0, 0, 2, 1, true, true},
  }};
  return table[static_cast<std::size_t>(k)];
}

inline std::string to_string(NodeKind k) { return kind_info(k).tag; }

/// Roster entries as counted in component limits. Compound components expand
/// into coupled sub-nodes.
enum class Component : std::uint8_t {
  Compressor,
  Turbine,
  ExpansionValve,
  Heater,
  Cooler,
  GasCooler,
  Evaporator,
  Ihx,
  Ejector,
  Separator,
  Merge,
};

inline constexpr int kComponentCount = 11;
inline constexpr int kMaxInstancesPerComponent = 2;
inline constexpr int kMaxRosterSize = 32;

struct ComponentName {
  Component c;
  const char* name;
  const char* tag;
};

inline const std::array<ComponentName, kComponentCount>& component_names() {
  static const std::array<ComponentName, kComponentCount> names{{
      {Component::Compressor, "compressor", "CP"},
      {Component::Turbine, "turbine", "TB"},
      {Component::ExpansionValve, "expansion_valve", "EV"},
      {Component::Heater, "heater", "HT"},
      {Component::Cooler, "cooler", "CL"},
      {Component::GasCooler, "gas_cooler", "GC"},
      {Component::Evaporator, "evaporator", "EVP"},
      {Component::Ihx, "ihx", "IHX"},
      {Component::Ejector, "ejector", "EJ"},
      {Component::Separator, "separator", "SEP"},
      {Component::Merge, "merge", "M"},
  }};
  return names;
}

inline std::string to_string(Component c) { return component_names()[static_cast<std::size_t>(c)].name; }

/// Accepts either the long name ("gas_cooler") or the short tag ("GC").
inline Component parse_component(const std::string& s) {
  for (const auto& n : component_names())
    if (s == n.name || s == n.tag) return n.c;
  throw std::invalid_argument("unknown component '" + s + "'");
}

struct ComponentLimits {
  std::map<Component, int> counts;
  std::optional<int> n_max;  // global outlet cap, applied as min with the per-kind value

  bool operator==(const ComponentLimits&) const = default;
};

enum class GroupType : std::uint8_t { Ihx, Ejector, Separator };

struct NodeInstance {
  NodeKind kind;
  int id = 1;      // 1-based index among nodes of the same kind
  int group = -1;  // coupling group index or -1
};

struct CouplingGroup {
  GroupType type;
  std::vector<int> members;
  std::vector<std::pair<int, int>> internal_edges;
};

/// Immutable node roster shared by every graph built on it.
struct Roster {
  ComponentLimits limits;
  std::vector<NodeInstance> nodes;
  std::vector<CouplingGroup> groups;
  std::vector<int> n_max;                    // per node
  std::vector<std::vector<int>> symmetries;  // position -> node, identity first

  int size() const { return static_cast<int>(nodes.size()); }
  const KindInfo& info(int i) const { return kind_info(nodes[static_cast<std::size_t>(i)].kind); }
  NodeKind kind(int i) const { return nodes[static_cast<std::size_t>(i)].kind; }
  std::string label(int i) const {
    const auto& nd = nodes[static_cast<std::size_t>(i)];
    return to_string(nd.kind) + "#" + std::to_string(nd.id);
  }
  int group_of(int i) const { return nodes[static_cast<std::size_t>(i)].group; }
  bool internal_edge(int i, int j) const {
    const int gi = group_of(i);
    if (gi < 0 || gi != group_of(j)) return false;
    for (auto [a, b] : groups[static_cast<std::size_t>(gi)].internal_edges)
      if (a == i && b == j) return true;
    return false;
  }
};

namespace detail {

inline void build_symmetries(Roster& r) {
  // Units: a single node for plain kinds, a whole group for compound ones.
  // Units of the same component permute among themselves.
  std::map<int, std::vector<std::vector<int>>> classes;
  std::vector<bool> seen(r.nodes.size(), false);
  for (int i = 0; i < r.size(); ++i) {
    if (seen[static_cast<std::size_t>(i)]) continue;
    std::vector<int> unit;
    const int g = r.group_of(i);
    if (g >= 0)
      unit = r.groups[static_cast<std::size_t>(g)].members;
    else
      unit = {i};
    for (int u : unit) seen[static_cast<std::size_t>(u)] = true;
    const int cls = g >= 0 ? 100 + static_cast<int>(r.groups[static_cast<std::size_t>(g)].type)
                           : static_cast<int>(r.kind(i));
    classes[cls].push_back(unit);
  }
  std::vector<int> identity(r.nodes.size());
  for (int i = 0; i < r.size(); ++i) identity[static_cast<std::size_t>(i)] = i;
  std::vector<std::vector<int>> perms{identity};
  for (auto& [cls, units] : classes) {
    if (units.size() < 2) continue;
    std::vector<int> order(units.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    std::vector<std::vector<int>> next;
    do {
      for (const auto& base : perms) {
        auto p = base;
        for (std::size_t u = 0; u < units.size(); ++u) {
          const auto& dst = units[u];
          const auto& src = units[static_cast<std::size_t>(order[u])];
          for (std::size_t m = 0; m < dst.size(); ++m)
            p[static_cast<std::size_t>(dst[m])] = base[static_cast<std::size_t>(src[m])];
        }
        next.push_back(std::move(p));
      }
    } while (std::next_permutation(order.begin(), order.end()));
    perms = std::move(next);
  }
  r.symmetries = std::move(perms);
}

}  // namespace detail

/// Builds the roster for a set of component limits.
inline std::shared_ptr<const Roster> make_roster(const ComponentLimits& limits) {
  auto r = std::make_shared<Roster>();
  r->limits = limits;
  int total = 0;
  for (auto [c, n] : limits.counts) {
    if (n < 0) throw std::invalid_argument("negative limit for " + to_string(c));
    if (n > kMaxInstancesPerComponent)
      throw std::invalid_argument("limit for " + to_string(c) + " exceeds supported maximum of " +
                                  std::to_string(kMaxInstancesPerComponent));
    total += n;
  }
  if (total == 0) throw std::invalid_argument("component limits are empty");
  if (limits.n_max && *limits.n_max < 1) throw std::invalid_argument("n_max must be at least 1");

  std::array<int, kNodeKindCount> next_id{};
  auto add_node = [&](NodeKind k, int group) {
    const int id = ++next_id[static_cast<std::size_t>(k)];
    r->nodes.push_back({k, id, group});
    return r->size() - 1;
  };
  auto count = [&](Component c) {
    auto it = limits.counts.find(c);
    return it == limits.counts.end() ? 0 : it->second;
  };
  const std::pair<Component, NodeKind> plain[] = {
      {Component::Compressor, NodeKind::Compressor}, {Component::Turbine, NodeKind::Turbine},
      {Component::ExpansionValve, NodeKind::ExpansionValve}, {Component::Heater, NodeKind::Heater},
      {Component::Cooler, NodeKind::Cooler}, {Component::GasCooler, NodeKind::GasCooler},
      {Component::Evaporator, NodeKind::Evaporator}};
  for (auto [c, k] : plain)
    for (int n = 0; n < count(c); ++n) add_node(k, -1);
  for (int n = 0; n < count(Component::Ihx); ++n) {
    const int g = static_cast<int>(r->groups.size());
    const int lo = add_node(NodeKind::IhxLow, g), hi = add_node(NodeKind::IhxHigh, g);
    r->groups.push_back({GroupType::Ihx, {lo, hi}, {}});
  }
  for (int n = 0; n < count(Component::Ejector); ++n) {
    const int g = static_cast<int>(r->groups.size());
    const int ev = add_node(NodeKind::EjectorNozzle, g);
    const int ec = add_node(NodeKind::EjectorSuction, g);
    const int em = add_node(NodeKind::EjectorMixer, g);
    r->groups.push_back({GroupType::Ejector, {ev, ec, em}, {{ev, em}, {ec, em}}});
  }
  for (int n = 0; n < count(Component::Separator); ++n) {
    const int g = static_cast<int>(r->groups.size());
    const int s = add_node(NodeKind::Separator, g);
    const int sv = add_node(NodeKind::SeparatorVapor, g);
    const int sl = add_node(NodeKind::SeparatorLiquid, g);
    r->groups.push_back({GroupType::Separator, {s, sv, sl}, {{s, sv}, {s, sl}}});
  }
  for (int n = 0; n < count(Component::Merge); ++n) add_node(NodeKind::Merge, -1);
  if (r->size() > kMaxRosterSize)
    throw std::invalid_argument("roster exceeds " + std::to_string(kMaxRosterSize) + " nodes");

  for (int i = 0; i < r->size(); ++i) {
    int cap = r->info(i).n_max;
    // Internal outlets are fixed by the component and not subject to the cap.
    if (limits.n_max && r->info(i).ext_out) cap = std::min(cap, *limits.n_max);
    r->n_max.push_back(cap);
  }
  detail::build_symmetries(*r);
  return r;
}

/// Raised by apply_action for a masked action; `rule` names the violated rule.
class RuleError : public std::invalid_argument {
 public:
  RuleError(std::string rule, const std::string& what)
      : std::invalid_argument(what), rule(std::move(rule)) {}
  std::string rule;
};

/// Adjacency over a roster. Values are immutable from the outside; every
/// mutation goes through apply_action, which returns a new graph.
class CycleGraph {
 public:
  CycleGraph() = default;
  explicit CycleGraph(std::shared_ptr<const Roster> r)
      : roster_(std::move(r)), out_(static_cast<std::size_t>(roster_->size()), 0u) {}

  /// Raw construction from row bitmasks; no rule checking.
  static CycleGraph from_rows(std::shared_ptr<const Roster> r, std::vector<std::uint32_t> rows) {
    CycleGraph g(std::move(r));
    if (rows.size() != g.out_.size()) throw std::invalid_argument("row count does not match roster");
    g.out_ = std::move(rows);
    return g;
  }

  const Roster& roster() const { return *roster_; }
  const std::shared_ptr<const Roster>& roster_ptr() const { return roster_; }
  int size() const { return static_cast<int>(out_.size()); }
  int num_actions() const { return size() * size() + 1; }
  int terminate_action() const { return size() * size(); }

  bool edge(int i, int j) const { return (out_[static_cast<std::size_t>(i)] >> j) & 1u; }
  std::uint32_t out_mask(int i) const { return out_[static_cast<std::size_t>(i)]; }
  const std::vector<std::uint32_t>& rows() const { return out_; }
  std::uint32_t in_mask(int j) const {
    std::uint32_t m = 0;
    for (int i = 0; i < size(); ++i)
      if (edge(i, j)) m |= 1u << i;
    return m;
  }
  int out_degree(int i) const { return std::popcount(out_mask(i)); }
  int in_degree(int j) const { return std::popcount(in_mask(j)); }

  int edge_count() const {
    int n = 0;
    for (auto r : out_) n += std::popcount(r);
    return n;
  }
  int external_edge_count() const {
    int n = 0;
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j)
        if (edge(i, j) && !roster_->internal_edge(i, j)) ++n;
    return n;
  }

  /// Nodes with an incident edge plus every member of a touched coupling group.
  std::uint32_t activated_mask() const {
    std::uint32_t touched = 0;
    for (int i = 0; i < size(); ++i)
      if (out_mask(i)) touched |= (1u << i) | out_mask(i);
    std::uint32_t act = touched;
    for (const auto& grp : roster_->groups) {
      bool any = false;
      for (int m : grp.members) any = any || ((touched >> m) & 1u);
      if (any)
        for (int m : grp.members) act |= 1u << m;
    }
    return act;
  }
  bool activated(int i) const { return (activated_mask() >> i) & 1u; }

  /// Row-major 0/1 adjacency of length n*n.
  std::vector<double> flat_adjacency() const {
    std::vector<double> a(static_cast<std::size_t>(size() * size()), 0.0);
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j)
        if (edge(i, j)) a[static_cast<std::size_t>(i * size() + j)] = 1.0;
    return a;
  }

  bool operator==(const CycleGraph& o) const { return roster_ == o.roster_ && out_ == o.out_; }

 private:
  friend CycleGraph apply_edge(const CycleGraph& g, int i, int j);
  std::shared_ptr<const Roster> roster_;
  std::vector<std::uint32_t> out_;
};

inline CycleGraph new_graph(const ComponentLimits& limits) { return CycleGraph(make_roster(limits)); }

/// First violated activation rule for edge i->j, or nullopt if the edge is legal.
inline std::optional<RuleError> edge_violation(const CycleGraph& g, int i, int j) {
  const Roster& r = g.roster();
  const int n = g.size();
  if (i < 0 || j < 0 || i >= n || j >= n) return RuleError("index", "edge index out of range");
  const std::string e = r.label(i) + "->" + r.label(j);
  if (i == j) return RuleError("self-loop", "rule a: self loop " + e);
  if (g.edge(i, j)) return RuleError("duplicate", "edge " + e + " already active");
  if (g.edge(j, i)) return RuleError("reverse-edge", "rule b: reverse of " + e + " is active");
  if (!r.info(i).ext_out || !r.info(j).ext_in || (r.group_of(i) >= 0 && r.group_of(i) == r.group_of(j)))
    return RuleError("coupling", "coupling: " + e + " touches an internal port");
  if (g.out_degree(i) >= r.n_max[static_cast<std::size_t>(i)])
    return RuleError("outlet-limit", "rule c: " + r.label(i) + " is at its outlet limit");
  if (g.in_degree(j) >= r.info(j).max_in)
    return RuleError("inlet-limit", "inlet limit: " + r.label(j) + " has no free inlet");
  return std::nullopt;
}

/// Sets a_ij and applies coupling side effects. Caller guarantees legality.
inline CycleGraph apply_edge(const CycleGraph& g, int i, int j) {
  CycleGraph out = g;
  out.out_[static_cast<std::size_t>(i)] |= 1u << j;
  const Roster& r = g.roster();
  for (int v : {i, j}) {
    const int grp = r.group_of(v);
    if (grp < 0) continue;
    for (auto [a, b] : r.groups[static_cast<std::size_t>(grp)].internal_edges)
      out.out_[static_cast<std::size_t>(a)] |= 1u << b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validity

enum class ViolationKind : std::uint8_t { Connection, Pressure, Energy, Parallelism };

inline std::string to_string(ViolationKind v) {
  switch (v) {
    case ViolationKind::Connection: return "Connection";
    case ViolationKind::Pressure: return "Pressure";
    case ViolationKind::Energy: return "Energy";
    case ViolationKind::Parallelism: return "Parallelism";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::vector<int> nodes;
};

struct ValidityReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  bool has(ViolationKind k) const {
    return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
  }
};

/// Elementary directed cycles, each starting at its smallest node index, in
/// lexicographic discovery order.
inline std::vector<std::vector<int>> directed_loops(const std::vector<std::uint32_t>& rows) {
  const int n = static_cast<int>(rows.size());
  std::vector<std::vector<int>> loops;
  std::vector<int> path;
  std::uint32_t on_path = 0;
  std::function<void(int, int)> dfs = [&](int s, int v) {
    for (std::uint32_t m = rows[static_cast<std::size_t>(v)]; m; m &= m - 1) {
      const int w = std::countr_zero(m);
      if (w == s) {
        loops.push_back(path);
      } else if (w > s && !((on_path >> w) & 1u)) {
        path.push_back(w);
        on_path |= 1u << w;
        dfs(s, w);
        on_path &= ~(1u << w);
        path.pop_back();
      }
    }
  };
  for (int s = 0; s < n; ++s) {
    path = {s};
    on_path = 1u << s;
    dfs(s, s);
  }
  return loops;
}

inline std::vector<std::vector<int>> directed_loops(const CycleGraph& g) { return directed_loops(g.rows()); }

namespace detail {

inline int sign(int x) { return (x > 0) - (x < 0); }

/// Strongly connected components restricted to `mask` (Tarjan).
inline std::vector<std::uint32_t> scc(const std::vector<std::uint32_t>& rows, std::uint32_t mask) {
  const int n = static_cast<int>(rows.size());
  std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  std::vector<int> stack;
  std::uint32_t on_stack = 0;
  std::vector<std::uint32_t> comps;
  int counter = 0;
  std::function<void(int)> visit = [&](int v) {
    index[static_cast<std::size_t>(v)] = low[static_cast<std::size_t>(v)] = counter++;
    stack.push_back(v);
    on_stack |= 1u << v;
    for (std::uint32_t m = rows[static_cast<std::size_t>(v)] & mask; m; m &= m - 1) {
      const int w = std::countr_zero(m);
      if (index[static_cast<std::size_t>(w)] < 0) {
        visit(w);
        low[static_cast<std::size_t>(v)] = std::min(low[static_cast<std::size_t>(v)], low[static_cast<std::size_t>(w)]);
      } else if ((on_stack >> w) & 1u) {
        low[static_cast<std::size_t>(v)] = std::min(low[static_cast<std::size_t>(v)], index[static_cast<std::size_t>(w)]);
      }
    }
    if (low[static_cast<std::size_t>(v)] == index[static_cast<std::size_t>(v)]) {
      std::uint32_t c = 0;
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack &= ~(1u << w);
        c |= 1u << w;
      } while (w != v);
      comps.push_back(c);
    }
  };
  for (int v = 0; v < n; ++v)
    if (((mask >> v) & 1u) && index[static_cast<std::size_t>(v)] < 0) visit(v);
  return comps;
}

inline std::vector<int> mask_nodes(std::uint32_t m) {
  std::vector<int> v;
  for (; m; m &= m - 1) v.push_back(std::countr_zero(m));
  return v;
}

inline bool loop_has_signs(const Roster& r, const std::vector<int>& loop, bool pressure) {
  bool plus = false, minus = false;
  for (int v : loop) {
    const int s = pressure ? r.info(v).dp : r.info(v).dh;
    plus = plus || s > 0;
    minus = minus || s < 0;
  }
  return plus && minus;
}

/// Branch pairs into each Merge node: interior-disjoint simple paths from a
/// common source whose net dp or dh sign differs. Returns the offending node
/// sets (two branches plus endpoints).
inline std::vector<std::vector<int>> parallel_conflicts(const Roster& r, const std::vector<std::uint32_t>& rows) {
  const int n = static_cast<int>(rows.size());
  std::vector<std::vector<int>> conflicts;
  struct Branch {
    std::uint32_t interior;
    int dp, dh;
  };
  for (int v = 0; v < n; ++v) {
    if (r.kind(v) != NodeKind::Merge) continue;
    int indeg = 0;
    for (int i = 0; i < n; ++i) indeg += (rows[static_cast<std::size_t>(i)] >> v) & 1u;
    if (indeg < 2) continue;
    for (int u = 0; u < n; ++u) {
      if (u == v || std::popcount(rows[static_cast<std::size_t>(u)]) < 2) continue;
      std::vector<Branch> branches;
      std::function<void(int, std::uint32_t, int, int)> walk = [&](int x, std::uint32_t seen, int dp, int dh) {
        for (std::uint32_t m = rows[static_cast<std::size_t>(x)]; m; m &= m - 1) {
          const int w = std::countr_zero(m);
          if (w == v) {
            branches.push_back({seen, dp, dh});
          } else if (w != u && !((seen >> w) & 1u)) {
            walk(w, seen | (1u << w), dp + r.info(w).dp, dh + r.info(w).dh);
          }
        }
      };
      walk(u, 0u, 0, 0);
      for (std::size_t a = 0; a < branches.size(); ++a)
        for (std::size_t b = a + 1; b < branches.size(); ++b) {
          if (branches[a].interior & branches[b].interior) continue;
          if (sign(branches[a].dp) == sign(branches[b].dp) && sign(branches[a].dh) == sign(branches[b].dh))
            continue;
          auto nodes = mask_nodes(branches[a].interior | branches[b].interior | (1u << u) | (1u << v));
          conflicts.push_back(std::move(nodes));
        }
    }
  }
  return conflicts;
}

}  // namespace detail

/// Connection, Pressure, Energy and Parallelism checks, in that order.
inline ValidityReport structural_validity(const CycleGraph& g) {
  ValidityReport rep;
  const Roster& r = g.roster();
  const std::uint32_t act = g.activated_mask();
  if (act == 0) {
    rep.violations.push_back({ViolationKind::Connection, {}});
    return rep;
  }
  // Every activated node on a directed cycle and the activated set connected.
  // Requiring one strongly connected component covers both and also rejects
  // one-way bridges between otherwise closed loops.
  const auto comps = detail::scc(g.rows(), act);
  if (comps.size() != 1 || std::popcount(comps[0]) < 2) {
    std::uint32_t largest = 0;
    for (auto c : comps)
      if (std::popcount(c) > std::popcount(largest)) largest = c;
    std::uint32_t bad = std::popcount(largest) >= 2 ? act & ~largest : act;
    rep.violations.push_back({ViolationKind::Connection, detail::mask_nodes(bad)});
  }
  const auto loops = directed_loops(g);
  for (const auto& loop : loops)
    if (!detail::loop_has_signs(r, loop, true)) rep.violations.push_back({ViolationKind::Pressure, loop});
  for (const auto& loop : loops)
    if (!detail::loop_has_signs(r, loop, false)) rep.violations.push_back({ViolationKind::Energy, loop});
  for (auto& c : detail::parallel_conflicts(r, g.rows()))
    rep.violations.push_back({ViolationKind::Parallelism, std::move(c)});
  return rep;
}

// ---------------------------------------------------------------------------
// Actions

/// Mask over the n*n edge actions (row-major) followed by TERMINATE.
inline std::vector<bool> legal_actions(const CycleGraph& g) {
  const int n = g.size();
  std::vector<bool> mask(static_cast<std::size_t>(n * n + 1), false);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mask[static_cast<std::size_t>(i * n + j)] = !edge_violation(g, i, j).has_value();
  mask.back() = structural_validity(g).valid();
  return mask;
}

inline CycleGraph apply_action(const CycleGraph& g, int i, int j) {
  if (auto v = edge_violation(g, i, j)) throw *v;
  return apply_edge(g, i, j);
}

/// Action index form; TERMINATE returns the graph unchanged when it is valid.
inline CycleGraph apply_action(const CycleGraph& g, int action) {
  if (action == g.terminate_action()) {
    if (!structural_validity(g).valid()) throw RuleError("terminate", "TERMINATE on a structurally invalid graph");
    return g;
  }
  if (action < 0 || action > g.terminate_action()) throw RuleError("index", "action index out of range");
  return apply_action(g, action / g.size(), action % g.size());
}

// ---------------------------------------------------------------------------
// Canonical keys

using CanonicalKey = std::string;

namespace detail {

inline void encode(const Roster& r, const std::vector<std::uint32_t>& rows, const std::vector<int>& p,
                   std::string& out) {
  const int n = r.size();
  const int row_bytes = (n + 7) / 8;
  out.assign(static_cast<std::size_t>(1 + n + n * row_bytes), '\0');
  out[0] = static_cast<char>(n);
  for (int a = 0; a < n; ++a) out[static_cast<std::size_t>(1 + a)] = static_cast<char>(r.kind(p[static_cast<std::size_t>(a)]));
  std::size_t pos = static_cast<std::size_t>(1 + n);
  for (int a = 0; a < n; ++a) {
    const std::uint32_t row = rows[static_cast<std::size_t>(p[static_cast<std::size_t>(a)])];
    std::uint32_t packed = 0;
    for (int b = 0; b < n; ++b)
      if ((row >> p[static_cast<std::size_t>(b)]) & 1u) packed |= 1u << b;
    for (int k = 0; k < row_bytes; ++k) out[pos++] = static_cast<char>((packed >> (8 * k)) & 0xffu);
  }
}

}  // namespace detail

/// Lexicographically minimal encoding over all same-kind relabelings.
inline CanonicalKey canonical_form(const Roster& r, const std::vector<std::uint32_t>& rows) {
  CanonicalKey best, cur;
  for (const auto& p : r.symmetries) {
    detail::encode(r, rows, p, cur);
    if (best.empty() || cur < best) best = cur;
  }
  return best;
}

inline CanonicalKey canonical_form(const CycleGraph& g) { return canonical_form(g.roster(), g.rows()); }

/// A relabeling (position -> node) attaining the canonical encoding; the
/// first such one in symmetry order.
inline std::vector<int> canonical_permutation(const CycleGraph& g) {
  const Roster& r = g.roster();
  CanonicalKey best, cur;
  const std::vector<int>* arg = nullptr;
  for (const auto& p : r.symmetries) {
    detail::encode(r, g.rows(), p, cur);
    if (!arg || cur < best) {
      best = cur;
      arg = &p;
    }
  }
  return *arg;
}

inline std::string to_hex(const CanonicalKey& key) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(key.size() * 2);
  for (unsigned char c : key) {
    s.push_back(digits[c >> 4]);
    s.push_back(digits[c & 15]);
  }
  return s;
}

inline CanonicalKey from_hex(const std::string& hex) {
  if (hex.size() % 2) throw std::invalid_argument("odd-length hex key");
  auto val = [](char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  CanonicalKey k;
  for (std::size_t i = 0; i < hex.size(); i += 2) k.push_back(static_cast<char>(val(hex[i]) * 16 + val(hex[i + 1])));
  return k;
}

/// Graph with node p[a] moved to position a.
inline CycleGraph relabeled(const CycleGraph& g, const std::vector<int>& p) {
  const int n = g.size();
  std::vector<int> inv(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) inv[static_cast<std::size_t>(p[static_cast<std::size_t>(a)])] = a;
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(n), 0u);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (g.edge(i, j)) rows[static_cast<std::size_t>(inv[static_cast<std::size_t>(i)])] |= 1u << inv[static_cast<std::size_t>(j)];
  return CycleGraph::from_rows(g.roster_ptr(), std::move(rows));
}

// ---------------------------------------------------------------------------
// Enumeration

struct EnumerateOptions {
  int max_edges = 16;                                 // agent-chosen edges per structure
  int max_roster = 13;                                // refuse larger rosters
  bool reverse_order = false;                         // alternate traversal order
  std::function<bool(const CycleGraph&)> physical;    // optional feasibility filter
  long max_states = 50'000'000;
};

struct EnumerationResult {
  std::map<CanonicalKey, CycleGraph> structures;
  long states_visited = 0;
  long structurally_valid = 0;
};

/// Rough count of candidate elementary cycles over all legal node orders,
/// reported when a roster is refused.
inline double enumeration_size_estimate(const Roster& r) {
  const int n = r.size();
  double total = 0.0, falling = 1.0;
  for (int k = 1; k <= n; ++k) {
    falling *= n - k + 1;
    if (k >= 2) total += falling / k;
  }
  return total;
}

/// Every structurally valid graph (optionally passing `physical`) reachable
/// by legal edge activations, keyed by canonical form.
///
/// Valid graphs are strongly connected, so each has an ear decomposition;
/// the search grows graphs one ear at a time from a seed cycle and memoizes
/// visited states by canonical key. Pressure, Energy and Parallelism
/// violations persist under edge addition and prune the search.
inline EnumerationResult enumerate_valid(const ComponentLimits& limits, const EnumerateOptions& opt = {}) {
  const auto roster = make_roster(limits);
  const Roster& r = *roster;
  const int n = r.size();
  if (n > opt.max_roster) {
    std::ostringstream msg;
    msg << "roster of " << n << " nodes too large for exhaustive enumeration (~" << enumeration_size_estimate(r)
        << " candidate cycles)";
    throw std::length_error(msg.str());
  }
  EnumerationResult res;
  std::set<CanonicalKey> seen;
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(n), 0u);

  auto out_deg = [&](int i) { return std::popcount(rows[static_cast<std::size_t>(i)]); };
  auto in_deg = [&](int j) {
    int d = 0;
    for (int i = 0; i < n; ++i) d += (rows[static_cast<std::size_t>(i)] >> j) & 1u;
    return d;
  };
  auto permitted = [&](int i, int j) {
    if (i == j || ((rows[static_cast<std::size_t>(i)] >> j) & 1u) || ((rows[static_cast<std::size_t>(j)] >> i) & 1u))
      return false;
    const bool internal = r.internal_edge(i, j);
    if (!internal && (!r.info(i).ext_out || !r.info(j).ext_in || (r.group_of(i) >= 0 && r.group_of(i) == r.group_of(j))))
      return false;
    return out_deg(i) < r.n_max[static_cast<std::size_t>(i)] && in_deg(j) < r.info(j).max_in;
  };
  auto external_edges = [&] {
    int e = 0;
    for (int i = 0; i < n; ++i)
      for (std::uint32_t m = rows[static_cast<std::size_t>(i)]; m; m &= m - 1)
        e += !r.internal_edge(i, std::countr_zero(m));
    return e;
  };
  auto groups_closed = [&] {
    for (const auto& grp : r.groups) {
      bool touched = false;
      for (int m : grp.members) touched = touched || out_deg(m) > 0 || in_deg(m) > 0;
      if (!touched) continue;
      for (auto [a, b] : grp.internal_edges)
        if (!((rows[static_cast<std::size_t>(a)] >> b) & 1u)) return false;
    }
    return true;
  };
  auto order = [&](int k) { return opt.reverse_order ? n - 1 - k : k; };

  std::function<void()> visit;
  // Extends the current graph by a path from `x` through nodes outside the
  // graph back into the graph, then recurses.
  std::function<void(int, std::uint32_t)> ear = [&](int x, std::uint32_t in_graph) {
    for (int k = 0; k < n; ++k) {
      const int w = order(k);
      if (!permitted(x, w)) continue;
      rows[static_cast<std::size_t>(x)] |= 1u << w;
      if ((in_graph >> w) & 1u) {
        visit();
      } else {
        ear(w, in_graph);
      }
      rows[static_cast<std::size_t>(x)] &= ~(1u << w);
    }
  };
  visit = [&] {
    if (res.states_visited >= opt.max_states) throw std::length_error("enumeration state budget exhausted");
    if (external_edges() > opt.max_edges) return;
    if (!seen.insert(canonical_form(r, rows)).second) return;
    ++res.states_visited;
    const auto loops = directed_loops(rows);
    for (const auto& loop : loops)
      if (!detail::loop_has_signs(r, loop, true) || !detail::loop_has_signs(r, loop, false)) return;
    if (!detail::parallel_conflicts(r, rows).empty()) return;
    if (groups_closed()) {
      const CycleGraph g = CycleGraph::from_rows(roster, rows);
      if (structural_validity(g).valid()) {
        ++res.structurally_valid;
        if (!opt.physical || opt.physical(g)) {
          const auto key = canonical_form(g);
          res.structures.emplace(key, g);
        }
      }
    }
    std::uint32_t in_graph = 0;
    for (int i = 0; i < n; ++i)
      if (rows[static_cast<std::size_t>(i)]) in_graph |= (1u << i) | rows[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k) {
      const int u = order(k);
      if ((in_graph >> u) & 1u) ear(u, in_graph);
    }
  };
  // Seed cycles: a closed path through nodes not below its start.
  std::function<void(int, int, std::uint32_t)> seed = [&](int s, int x, std::uint32_t path) {
    for (int k = 0; k < n; ++k) {
      const int w = order(k);
      if (w < s || !permitted(x, w)) continue;
      if (w != s && ((path >> w) & 1u)) continue;
      rows[static_cast<std::size_t>(x)] |= 1u << w;
      if (w == s)
        visit();
      else
        seed(s, w, path | (1u << w));
      rows[static_cast<std::size_t>(x)] &= ~(1u << w);
    }
  };
  for (int k = 0; k < n; ++k) {
    const int s = order(k);
    seed(s, s, 1u << s);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Export

/// Graphviz rendering; coupling groups are drawn as dashed undirected edges.
inline void write_dot(const CycleGraph& g, std::ostream& out, const std::string& name = "cycle") {
  const Roster& r = g.roster();
  out << "digraph " << name << " {\n";
  for (int i = 0; i < g.size(); ++i) out << "  n" << i << " [label=\"" << r.label(i) << "\"];\n";
  for (int i = 0; i < g.size(); ++i)
    for (int j = 0; j < g.size(); ++j)
      if (g.edge(i, j)) out << "  n" << i << " -> n" << j << ";\n";
  for (const auto& grp : r.groups)
    for (std::size_t k = 0; k + 1 < grp.members.size(); ++k)
      out << "  n" << grp.members[k] << " -> n" << grp.members[k + 1] << " [style=dashed, dir=none];\n";
  out << "}\n";
}

inline std::string to_dot(const CycleGraph& g, const std::string& name = "cycle") {
  std::ostringstream s;
  write_dot(g, s, name);
  return s.str();
}

}  // namespace cyclegen
