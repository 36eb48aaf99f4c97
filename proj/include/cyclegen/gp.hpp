#pragma once

// Exact Gaussian-process regression on the unit box with a squared-exponential
// kernel, plus UCB acquisition maximized by quasi-random multi-start search.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "cyclegen/sampling.hpp"

namespace cyclegen {

class GpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GpHyper {
  double length_scale = 0.2;  // per normalized dimension
  double sigma_f = 0.0;       // <= 0: sample standard deviation of y
  double jitter = 1e-8;
  double max_jitter = 1e-2;   // escalation by x10 stops here
};

class GpSurrogate {
 public:
  /// Prior only: mean `mean`, standard deviation sigma_f everywhere.
  static GpSurrogate prior(int dim, double mean = 0.0, double sigma_f = 1.0, GpHyper h = {}) {
    if (dim < 1) throw std::invalid_argument("GP dimension must be positive");
    GpSurrogate g;
    g.dim_ = dim;
    g.mean_ = mean;
    g.sf2_ = sigma_f * sigma_f;
    g.hyper_ = h;
    g.jitter_ = h.jitter;
    return g;
  }

  /// X: one row per point in [0,1]^d. Targets are mean-centered internally.
  static GpSurrogate fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, GpHyper h = {}) {
    if (X.rows() < 1) throw std::invalid_argument("gp_fit needs at least one point");
    if (X.rows() != y.size()) throw std::invalid_argument("gp_fit: X and y sizes differ");
    if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("gp_fit: non-finite data");
    if (!(h.jitter > 0.0) || !(h.length_scale > 0.0)) throw std::invalid_argument("gp_fit: jitter and length scale must be positive");
    if (X.minCoeff() < 0.0 || X.maxCoeff() > 1.0) throw std::invalid_argument("gp_fit: inputs outside the unit box");
    GpSurrogate g;
    g.dim_ = static_cast<int>(X.cols());
    g.hyper_ = h;
    g.X_ = X;
    g.mean_ = y.mean();
    double sf = h.sigma_f;
    if (!(sf > 0.0)) {
      sf = y.size() > 1 ? std::sqrt((y.array() - g.mean_).square().sum() / static_cast<double>(y.size() - 1)) : 0.0;
      if (!(sf > 1e-12)) sf = 1.0;
    }
    g.sf2_ = sf * sf;
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = g.kernel(X.row(i), X.row(j));
    for (double jit = h.jitter; jit <= h.max_jitter * (1.0 + 1e-12); jit *= 10.0) {
      Eigen::MatrixXd Kj = K;
      Kj.diagonal().array() += jit;
      g.llt_.compute(Kj);
      if (g.llt_.info() == Eigen::Success) {
        g.jitter_ = jit;
        g.alpha_ = g.llt_.solve((y.array() - g.mean_).matrix());
        return g;
      }
    }
    throw GpError("covariance not positive definite after jitter escalation");
  }

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(X_.rows()); }
  double sigma_f() const { return std::sqrt(sf2_); }
  double jitter() const { return jitter_; }

  double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
    const double l = hyper_.length_scale;
    return sf2_ * std::exp(-0.5 * (a - b).squaredNorm() / (l * l));
  }

  /// Posterior mean and standard deviation at x.
  std::pair<double, double> predict(const Eigen::VectorXd& x) const {
    if (x.size() != dim_) throw std::invalid_argument("predict: dimension mismatch");
    if (X_.rows() == 0) return {mean_, std::sqrt(sf2_)};
    Eigen::VectorXd k(X_.rows());
    for (Eigen::Index i = 0; i < X_.rows(); ++i) k(i) = kernel(X_.row(i), x.transpose());
    const double mu = mean_ + k.dot(alpha_);
    const double var = sf2_ - k.dot(llt_.solve(k));
    return {mu, std::sqrt(std::max(0.0, var))};
  }
  double mean(const Eigen::VectorXd& x) const { return predict(x).first; }
  double stddev(const Eigen::VectorXd& x) const { return predict(x).second; }

 private:
  int dim_ = 0;
  GpHyper hyper_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double mean_ = 0.0, sf2_ = 1.0, jitter_ = 0.0;
};

inline double ucb(const GpSurrogate& gp, const Eigen::VectorXd& x, double kappa) {
  const auto [mu, sd] = gp.predict(x);
  return mu + kappa * sd;
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct ProposeOptions {
  int starts = 256;
  int refine_best = 8;       // starts that receive coordinate refinement
  double initial_step = 0.1;
  double min_step = 1e-4;
};

/// Maximizes UCB: quasi-random starts, then coordinate-wise pattern search
/// from the best few. Only strict improvements move a point, so ties keep the
/// lowest start index.
inline Eigen::VectorXd propose_next(const GpSurrogate& gp, double kappa, std::uint64_t seed,
                                    const ProposeOptions& opt = {}) {
  const HaltonSequence seq(gp.dim(), seed);
  std::vector<std::pair<double, int>> scored;
  std::vector<Eigen::VectorXd> pts;
  for (int s = 0; s < opt.starts; ++s) {
    pts.push_back(to_eigen(seq.point(static_cast<std::uint64_t>(s))));
    scored.emplace_back(ucb(gp, pts.back(), kappa), s);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  Eigen::VectorXd best = pts[static_cast<std::size_t>(scored[0].second)];
  double best_val = scored[0].first;
  const int n_ref = std::min<int>(opt.refine_best, static_cast<int>(scored.size()));
  for (int k = 0; k < n_ref; ++k) {
    Eigen::VectorXd x = pts[static_cast<std::size_t>(scored[static_cast<std::size_t>(k)].second)];
    double val = scored[static_cast<std::size_t>(k)].first;
    for (double step = opt.initial_step; step >= opt.min_step; step *= 0.5) {
      bool moved = true;
      while (moved) {
        moved = false;
        for (Eigen::Index d = 0; d < x.size(); ++d)
          for (double dir : {1.0, -1.0}) {
            Eigen::VectorXd y = x;
            y(d) = std::clamp(y(d) + dir * step, 0.0, 1.0);
            const double v = ucb(gp, y, kappa);
            if (v > val) {
              x = y;
              val = v;
              moved = true;
            }
          }
      }
    }
    if (val > best_val) {
      best_val = val;
      best = x;
    }
  }
  return best;
}

}  // namespace cyclegen
