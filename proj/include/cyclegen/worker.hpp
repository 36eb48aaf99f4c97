#pragma once

// Operating-parameter optimization for a fixed structure: quasi-random initial
// design, then GP-UCB iterations. Decodes are cached by canonical graph key.

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cyclegen/decoder.hpp"
#include "cyclegen/gp.hpp"

namespace cyclegen {

inline constexpr double kInfeasiblePenalty = -1.0;

struct Budget {
  int initial = 20;
  int iterations = 40;

  bool operator==(const Budget&) const = default;
};

struct WorkerOptions {
  Budget budget;
  double kappa = 2.0;
  GpHyper gp;
  ProposeOptions propose;
  std::uint64_t seed = 0;
  int threads = 1;  // initial-design evaluations in parallel
};

struct Evaluation {
  Eigen::VectorXd x_m;
  double objective = kInfeasiblePenalty;  // penalized
  bool feasible = false;
};

struct WorkerResult {
  Eigen::VectorXd best_x_m;
  double best_objective = kInfeasiblePenalty;
  bool feasible = false;
  bool cache_hit = false;
  std::vector<Evaluation> evaluations;
};

/// Raw performance for feasible decodes, the penalty otherwise.
inline double penalized_objective(const DecodeResult& r) {
  return r.feasible && r.performance ? *r.performance : kInfeasiblePenalty;
}

/// Objective over full x_m vectors: (penalized value, feasible).
using ParameterObjective = std::function<std::pair<double, bool>(const Eigen::VectorXd&)>;

/// GP-UCB maximization of f over the free variables of `space`.
inline WorkerResult optimize(const ParameterObjective& f, const ParameterSpace& space, const WorkerOptions& opt) {
  if (opt.budget.initial < 1 || opt.budget.iterations < 0) throw std::invalid_argument("invalid worker budget");
  WorkerResult res;
  const int d = space.free_dim();
  auto record = [&](const Eigen::VectorXd& xm, std::pair<double, bool> v) {
    res.evaluations.push_back({xm, v.first, v.second});
    if (v.second && (!res.feasible || v.first > res.best_objective)) {
      res.feasible = true;
      res.best_objective = v.first;
      res.best_x_m = xm;
    }
  };
  if (d == 0) {
    const Eigen::VectorXd xm = space.nominal();
    record(xm, f(xm));
    if (!res.feasible) res.best_x_m = xm;
    return res;
  }

  const HaltonSequence design(d, opt.seed);
  std::vector<Eigen::VectorXd> U, XM;
  for (int k = 0; k < opt.budget.initial; ++k) {
    U.push_back(to_eigen(design.point(static_cast<std::uint64_t>(k))));
    XM.push_back(space.from_unit(U.back()));
  }
  std::vector<std::pair<double, bool>> vals(U.size());
  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(U.size())));
  if (threads == 1) {
    for (std::size_t k = 0; k < U.size(); ++k) vals[k] = f(XM[k]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t k; (k = next++) < U.size();) vals[k] = f(XM[k]);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < U.size(); ++k) record(XM[k], vals[k]);

  Eigen::MatrixXd X(static_cast<Eigen::Index>(U.size()), d);
  Eigen::VectorXd y(static_cast<Eigen::Index>(U.size()));
  for (std::size_t k = 0; k < U.size(); ++k) {
    X.row(static_cast<Eigen::Index>(k)) = U[k].transpose();
    y(static_cast<Eigen::Index>(k)) = vals[k].first;
  }
  for (int it = 0; it < opt.budget.iterations; ++it) {
    const GpSurrogate gp = GpSurrogate::fit(X, y, opt.gp);
    const Eigen::VectorXd u = propose_next(gp, opt.kappa, opt.seed + 1000003ull * static_cast<std::uint64_t>(it + 1), opt.propose);
    const Eigen::VectorXd xm = space.from_unit(u);
    const auto v = f(xm);
    record(xm, v);
    X.conservativeResize(X.rows() + 1, Eigen::NoChange);
    X.row(X.rows() - 1) = u.transpose();
    y.conservativeResize(y.size() + 1);
    y(y.size() - 1) = v.first;
  }
  if (!res.feasible) res.best_x_m = res.evaluations.front().x_m;
  return res;
}

struct CacheEntry {
  Eigen::VectorXd best_x_m;
  double best_objective = kInfeasiblePenalty;
};

/// Canonical-key result cache, optionally backed by an append-only file of
/// "<key hex> <objective> <n> <x_1> ... <x_n>" lines. Last record wins.
class WorkerCache {
 public:
  WorkerCache() = default;
  explicit WorkerCache(std::string path) : path_(std::move(path)) { load(); }

  std::optional<CacheEntry> find(const std::string& key) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& key, const CacheEntry& e) {
    std::lock_guard<std::mutex> lk(mu_);
    map_[key] = e;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to cache file " + path_);
    out << format_record(key, e);
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lk(mu_);
    return map_.size();
  }

  static std::string format_record(const std::string& key, const CacheEntry& e) {
    std::ostringstream s;
    s << std::setprecision(17) << key << ' ' << e.best_objective << ' ' << e.best_x_m.size();
    for (Eigen::Index i = 0; i < e.best_x_m.size(); ++i) s << ' ' << e.best_x_m(i);
    s << '\n';
    return s.str();
  }

 private:
  void load() {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream s(line);
      std::string key;
      CacheEntry e;
      Eigen::Index n = 0;
      if (!(s >> key >> e.best_objective >> n) || n < 0)
        throw std::runtime_error(path_ + ":" + std::to_string(lineno) + ": malformed cache record");
      e.best_x_m.resize(n);
      for (Eigen::Index i = 0; i < n; ++i)
        if (!(s >> e.best_x_m(i))) throw std::runtime_error(path_ + ":" + std::to_string(lineno) + ": truncated cache record");
      map_[key] = e;
    }
  }

  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, CacheEntry> map_;
};

/// Everything a decode needs besides the graph and x_m.
struct DecodeSetup {
  const FluidModel* fluid = nullptr;
  ComponentParams params;
  OperatingCase oc;
  DecodeOptions decode;
};

/// Optimizes x_m for g. With a cache, a repeated canonical key returns the
/// stored result without decoding. `space` overrides the graph's default.
inline WorkerResult optimize_parameters(const CycleGraph& g, const DecodeSetup& setup, const WorkerOptions& opt,
                                        WorkerCache* cache = nullptr,
                                        const std::optional<ParameterSpace>& space = std::nullopt) {
  if (!setup.fluid) throw std::invalid_argument("optimize_parameters: no fluid model");
  const std::string key = to_hex(canonical_form(g));
  if (cache)
    if (auto hit = cache->find(key)) {
      WorkerResult r;
      r.cache_hit = true;
      r.best_x_m = hit->best_x_m;
      r.best_objective = hit->best_objective;
      r.feasible = hit->best_objective != kInfeasiblePenalty;
      return r;
    }
  WorkerResult res;
  std::optional<ResidualSystem> sys;
  try {
    sys.emplace(assemble(g, setup.oc));
  } catch (const DecodeError&) {
    if (cache) cache->store(key, {Eigen::VectorXd(), kInfeasiblePenalty});
    return res;
  }
  const ParameterSpace& sp = space ? *space : sys->space;
  if (sp.dim() != sys->space.dim()) throw std::invalid_argument("optimize_parameters: parameter space does not fit graph");
  const ParameterObjective f = [&](const Eigen::VectorXd& xm) {
    const DecodeResult r = decode(*sys, xm, *setup.fluid, setup.params, setup.oc, setup.decode);
    const double v = penalized_objective(r);
    return std::make_pair(v, r.feasible);
  };
  res = optimize(f, sp, opt);
  if (cache) cache->store(key, {res.best_x_m, res.feasible ? res.best_objective : kInfeasiblePenalty});
  return res;
}

/// Evaluation log: iteration, one column per variable, objective, feasible.
inline void write_evaluation_csv(const ParameterSpace& space, const WorkerResult& r, std::ostream& out) {
  out << "iteration";
  for (const auto& v : space.vars) out << ',' << v.name;
  out << ",objective,feasible\n";
  const auto prec = out.precision(12);
  for (std::size_t k = 0; k < r.evaluations.size(); ++k) {
    const auto& e = r.evaluations[k];
    out << k;
    for (Eigen::Index i = 0; i < e.x_m.size(); ++i) out << ',' << e.x_m(i);
    out << ',' << e.objective << ',' << (e.feasible ? 1 : 0) << '\n';
  }
  out.precision(prec);
}

}  // namespace cyclegen
