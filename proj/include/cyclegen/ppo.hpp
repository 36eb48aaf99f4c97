#pragma once

// Policy-optimization math for the Manager: discounted returns, terminal
// performance shaping, masked categorical policies, the clipped PPO loss, and
// an elite-trajectory memory with its imitation loss.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclegen/mlp.hpp"
#include "cyclegen/sampling.hpp"

namespace cyclegen {

/// G = sum_t gamma^t r_{t+1}.
inline double discounted_return(const std::vector<double>& rewards, double gamma) {
  double g = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) g = rewards[k] + gamma * g;
  return g;
}

/// Adds alpha * gamma^(T - t) * perf to every step reward, t = 1..T.
inline std::vector<double> backprop_performance(std::vector<double> rewards, double perf, double alpha, double gamma) {
  const std::size_t T = rewards.size();
  for (std::size_t k = 0; k < T; ++k)
    rewards[k] += alpha * std::pow(gamma, static_cast<double>(T - 1 - k)) * perf;
  return rewards;
}

/// G_t = r_{t+1} + gamma G_{t+1}, per step.
inline std::vector<double> returns_to_go(const std::vector<double>& rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) g[k] = acc = rewards[k] + gamma * acc;
  return g;
}

struct AdvantageTargets {
  std::vector<double> returns;
  std::vector<double> advantages;  // raw, before batch normalization
};

inline AdvantageTargets advantages(const std::vector<double>& rewards, const std::vector<double>& values, double gamma) {
  if (rewards.size() != values.size()) throw std::invalid_argument("advantages: rewards and values differ in length");
  AdvantageTargets t{returns_to_go(rewards, gamma), {}};
  t.advantages.resize(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) t.advantages[k] = t.returns[k] - values[k];
  return t;
}

/// Zero mean, unit standard deviation; only centered when the spread is below 1e-8.
inline void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  double mean = 0.0;
  for (double x : a) mean += x;
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(a.size()));
  for (double& x : a) x = sd < 1e-8 ? x - mean : (x - mean) / sd;
}

// ---------------------------------------------------------------------------
// Masked categorical distribution

struct MaskedPolicy {
  Vector probs;     // exactly 0 on illegal actions
  Vector log_probs; // -inf on illegal actions
  double entropy = 0.0;
};

class NonFiniteLogits : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline MaskedPolicy masked_softmax(const Vector& logits, const std::vector<bool>& mask) {
  if (static_cast<std::size_t>(logits.size()) != mask.size()) throw DimensionError("masked_softmax: mask size mismatch");
  double zmax = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    if (!std::isfinite(logits(j))) throw NonFiniteLogits("masked_softmax: non-finite logit");
    zmax = std::max(zmax, logits(j));
    any = true;
  }
  if (!any) throw std::invalid_argument("masked_softmax: no legal action");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    if (mask[static_cast<std::size_t>(j)]) sum += std::exp(logits(j) - zmax);
  const double lse = zmax + std::log(sum);
  MaskedPolicy p;
  p.probs = Vector::Zero(logits.size());
  p.log_probs = Vector::Constant(logits.size(), -std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    p.log_probs(j) = logits(j) - lse;
    p.probs(j) = std::exp(p.log_probs(j));
    p.entropy -= p.probs(j) * p.log_probs(j);
  }
  return p;
}

/// Inverse-CDF draw from one 53-bit uniform; identical on every platform.
inline int sample_action(const Vector& probs, Rng& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double c = 0.0;
  int last = -1;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    if (!(probs(j) > 0.0)) continue;
    last = static_cast<int>(j);
    c += probs(j);
    if (u < c) return last;
  }
  if (last < 0) throw std::invalid_argument("sample_action: empty distribution");
  return last;
}

/// min(rho A, clip(rho, 1 - eps, 1 + eps) A).
inline double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

// ---------------------------------------------------------------------------
// Elite memory

struct StateAction {
  Vector obs;
  std::vector<bool> mask;
  int action = 0;
};

struct EliteEntry {
  std::vector<StateAction> trajectory;
  double performance = 0.0;
  std::string key;
};

/// Top-K distinct-key trajectories sorted by performance, best first.
class EliteMemory {
 public:
  explicit EliteMemory(std::size_t capacity = 16) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("EliteMemory capacity must be positive");
  }

  /// Returns true when the memory changed.
  bool update(std::vector<StateAction> trajectory, double performance, const std::string& key) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const EliteEntry& e) { return e.key == key; });
    if (it != entries_.end()) {
      if (performance <= it->performance) return false;
      entries_.erase(it);
    }
    EliteEntry e{std::move(trajectory), performance, key};
    // Ties keep the earlier entry in front.
    auto pos = std::find_if(entries_.begin(), entries_.end(), [&](const EliteEntry& x) { return x.performance < performance; });
    const bool kept = static_cast<std::size_t>(pos - entries_.begin()) < capacity_;
    if (kept) entries_.insert(pos, std::move(e));
    if (entries_.size() > capacity_) entries_.pop_back();
    return kept;
  }

  const std::vector<EliteEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }

  /// Every stored (state, action) pair.
  std::vector<const StateAction*> pairs() const {
    std::vector<const StateAction*> out;
    for (const auto& e : entries_)
      for (const auto& sa : e.trajectory) out.push_back(&sa);
    return out;
  }

  bool invariants_hold() const {
    if (entries_.size() > capacity_) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i > 0 && entries_[i - 1].performance < entries_[i].performance) return false;
      for (std::size_t j = i + 1; j < entries_.size(); ++j)
        if (entries_[i].key == entries_[j].key) return false;
    }
    return true;
  }

 private:
  std::size_t capacity_;
  std::vector<EliteEntry> entries_;
};

// ---------------------------------------------------------------------------
// Actor-critic

/// One PPO training sample.
struct PolicySample {
  Vector obs;
  std::vector<bool> mask;
  int action = 0;
  double logp_old = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct LossWeights {
  double clip = 0.2;
  double value_weight = 0.6;
  double entropy_weight = 0.1;
  double elite_weight = 0.01;
};

struct LossBreakdown {
  double policy = 0.0;   // -E[clipped surrogate]
  double value = 0.0;    // E[(v - G)^2]
  double entropy = 0.0;  // E[H]
  double ppo = 0.0;      // policy + w_v value - w_H entropy
  double elite = 0.0;    // E[-log pi(a_elite)]
  double total = 0.0;
};

inline double total_loss(double ppo, double elite, double elite_weight) { return ppo + elite_weight * elite; }

/// Shared ReLU torso with a linear policy head over all actions and a scalar
/// value head. Both heads live in the final layer of one MLP: outputs
/// [0, num_actions) are logits, the last output is the value.
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(int obs_dim, int num_actions, const std::vector<int>& hidden, Rng& rng, double policy_gain = 0.01)
      : num_actions_(num_actions) {
    std::vector<int> dims{obs_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(num_actions + 1);
    net_ = MlpModel(dims);
    net_.init_random(rng);
    net_.weights().back().leftCols(num_actions) *= policy_gain;
    net_.schema = "actor-critic";
  }
  explicit ActorCritic(MlpModel net) : net_(std::move(net)), num_actions_(net_.output_dim() - 1) {
    if (num_actions_ < 1) throw DimensionError("actor-critic network needs at least two outputs");
  }

  int obs_dim() const { return net_.input_dim(); }
  int num_actions() const { return num_actions_; }
  const MlpModel& network() const { return net_; }
  MlpModel& network() { return net_; }
  Vector parameters() const { return net_.parameters(); }
  void set_parameters(const Vector& p) { net_.set_parameters(p); }

  struct Output {
    MaskedPolicy policy;
    double value = 0.0;
  };

  Output evaluate(const Vector& obs, const std::vector<bool>& mask) const {
    const Matrix out = net_.forward_normalized(Matrix(obs.transpose()));
    return {masked_softmax(out.row(0).head(num_actions_).transpose(), mask), out(0, num_actions_)};
  }

  /// PPO loss on `batch` plus the weighted elite loss on `elite`; fills the
  /// flat parameter gradient when `grad` is given.
  LossBreakdown loss(const std::vector<PolicySample>& batch, const std::vector<const StateAction*>& elite,
                     const LossWeights& w, Vector* grad = nullptr) const {
    LossBreakdown L;
    MlpGradients g;
    if (!batch.empty()) {
      const auto B = static_cast<Eigen::Index>(batch.size());
      Matrix X(B, obs_dim());
      for (Eigen::Index r = 0; r < B; ++r) X.row(r) = batch[static_cast<std::size_t>(r)].obs.transpose();
      MlpModel::Cache cache;
      const Matrix out = net_.forward_normalized(X, grad ? &cache : nullptr);
      Matrix d = Matrix::Zero(B, out.cols());
      const double inv = 1.0 / static_cast<double>(B);
      for (Eigen::Index r = 0; r < B; ++r) {
        const PolicySample& s = batch[static_cast<std::size_t>(r)];
        const MaskedPolicy p = masked_softmax(out.row(r).head(num_actions_).transpose(), s.mask);
        const double ratio = std::exp(p.log_probs(s.action) - s.logp_old);
        const double surr = clipped_surrogate(ratio, s.advantage, w.clip);
        const double err = out(r, num_actions_) - s.ret;
        L.policy -= surr * inv;
        L.value += err * err * inv;
        L.entropy += p.entropy * inv;
        if (!grad) continue;
        // d(-surr)/dlogp is -rho A on the unclipped branch, zero once clipped.
        const double dlogp = ratio * s.advantage <= surr ? -ratio * s.advantage * inv : 0.0;
        for (int j = 0; j < num_actions_; ++j) {
          if (!s.mask[static_cast<std::size_t>(j)]) continue;
          const double pj = p.probs(j);
          d(r, j) += dlogp * ((j == s.action ? 1.0 : 0.0) - pj);
          // dH/dz_j = -p_j (log p_j + H); loss carries -w_H H.
          d(r, j) += w.entropy_weight * pj * (p.log_probs(j) + p.entropy) * inv;
        }
        d(r, num_actions_) = 2.0 * w.value_weight * err * inv;
      }
      if (grad) g = net_.backward(cache, d);
    }
    L.ppo = L.policy + w.value_weight * L.value - w.entropy_weight * L.entropy;
    if (!elite.empty()) {
      const auto M = static_cast<Eigen::Index>(elite.size());
      Matrix X(M, obs_dim());
      for (Eigen::Index r = 0; r < M; ++r) X.row(r) = elite[static_cast<std::size_t>(r)]->obs.transpose();
      MlpModel::Cache cache;
      const Matrix out = net_.forward_normalized(X, grad ? &cache : nullptr);
      Matrix d = Matrix::Zero(M, out.cols());
      const double inv = 1.0 / static_cast<double>(M);
      for (Eigen::Index r = 0; r < M; ++r) {
        const StateAction& sa = *elite[static_cast<std::size_t>(r)];
        const MaskedPolicy p = masked_softmax(out.row(r).head(num_actions_).transpose(), sa.mask);
        if (!sa.mask[static_cast<std::size_t>(sa.action)]) throw std::logic_error("elite action illegal under its mask");
        L.elite -= p.log_probs(sa.action) * inv;
        if (!grad) continue;
        for (int j = 0; j < num_actions_; ++j)
          if (sa.mask[static_cast<std::size_t>(j)])
            d(r, j) = w.elite_weight * (p.probs(j) - (j == sa.action ? 1.0 : 0.0)) * inv;
      }
      if (grad) {
        MlpGradients ge = net_.backward(cache, d);
        if (g.dW.empty()) {
          g = std::move(ge);
        } else {
          for (std::size_t k = 0; k < g.dW.size(); ++k) {
            g.dW[k] += ge.dW[k];
            g.db[k] += ge.db[k];
          }
        }
      }
    }
    L.total = total_loss(L.ppo, L.elite, w.elite_weight);
    if (grad) *grad = g.dW.empty() ? Vector(Vector::Zero(net_.num_parameters())) : MlpModel::flatten(g);
    return L;
  }

 private:
  MlpModel net_;
  int num_actions_ = 0;
};

inline LossBreakdown ppo_loss(const ActorCritic& ac, const std::vector<PolicySample>& batch, const LossWeights& w) {
  return ac.loss(batch, {}, w);
}

/// Mean negative log-likelihood of the elite pairs; 0 for an empty memory.
inline double elite_loss(const ActorCritic& ac, const EliteMemory& memory) {
  if (memory.empty()) return 0.0;
  return ac.loss({}, memory.pairs(), {}).elite;
}

}  // namespace cyclegen
