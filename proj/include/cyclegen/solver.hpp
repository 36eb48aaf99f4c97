#pragma once

// Powell hybrid (dogleg trust-region) solver for square nonlinear systems,
// in the style of MINPACK hybrd: forward-difference Jacobian, Broyden rank-1
// updates between re-evaluations, diagonal column scaling.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace cyclegen {

enum class SolveStatus { Converged, NotConverged, JacobianError };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::NotConverged: return "NotConverged";
    case SolveStatus::JacobianError: return "JacobianError";
  }
  return "?";
}

struct SolveOptions {
  double tol = 1e-8;        // on the infinity norm of F
  int max_iter = 0;         // 0: 200 * n
  double factor = 100.0;    // initial trust radius relative to |D x0|
  double fd_step = 1.49e-8; // relative forward-difference step
  int slow_limit = 10;      // stop after this many steps with < 0.1 % reduction of |F|
  std::ostream* log = nullptr;
};

struct SolveResult {
  Eigen::VectorXd x;
  Eigen::VectorXd f;
  double fnorm = std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::NotConverged;
  int iterations = 0;
  int nfev = 0;
  int njev = 0;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

namespace detail {

inline bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// Forward differences, falling back to a backward step where the forward
/// point cannot be evaluated. Returns false if a column cannot be formed.
inline bool fd_jacobian(const ResidualFn& F, const Eigen::VectorXd& x, const Eigen::VectorXd& f, double rel,
                        Eigen::MatrixXd& J, int& nfev) {
  const Eigen::Index n = x.size();
  J.resize(f.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = rel * std::max(std::abs(x(j)), 1.0);
    bool done = false;
    for (double dir : {1.0, -1.0}) {
      Eigen::VectorXd xp = x;
      xp(j) += dir * h;
      try {
        ++nfev;
        const Eigen::VectorXd fp = F(xp);
        if (!finite(fp)) continue;
        J.col(j) = (fp - f) / (dir * h);
        done = true;
        break;
      } catch (const std::exception&) {
      }
    }
    if (!done) return false;
  }
  return true;
}

}  // namespace detail

/// Solves F(x) = 0 from x0. Trial points where F throws or is non-finite are
/// rejected and the trust region shrinks. Returns the best iterate.
inline SolveResult hybrid_solve(const ResidualFn& F, const Eigen::VectorXd& x0, const SolveOptions& opt = {}) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  SolveResult res;
  const Eigen::Index n = x0.size();
  if (n == 0) throw std::invalid_argument("hybrid_solve: empty system");
  if (!x0.allFinite()) throw std::invalid_argument("hybrid_solve: non-finite initial point");
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : static_cast<int>(200 * n);

  VectorXd x = x0;
  VectorXd f;
  try {
    ++res.nfev;
    f = F(x);
  } catch (const std::exception&) {
    res.x = x;
    res.status = SolveStatus::JacobianError;
    return res;
  }
  if (f.size() != n) throw std::invalid_argument("hybrid_solve: system is not square");
  res.x = x;
  res.f = f;
  if (!detail::finite(f)) {
    res.status = SolveStatus::JacobianError;
    return res;
  }
  res.fnorm = f.lpNorm<Eigen::Infinity>();

  MatrixXd J;
  auto refresh = [&]() {
    ++res.njev;
    return detail::fd_jacobian(F, x, f, opt.fd_step, J, res.nfev);
  };
  if (!refresh()) {
    res.status = SolveStatus::JacobianError;
    return res;
  }
  VectorXd D = J.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < n; ++j)
    if (!(D(j) > 0.0)) D(j) = 1.0;
  double delta = opt.factor * (D.cwiseProduct(x)).norm();
  if (!(delta > 0.0)) delta = opt.factor;

  bool fresh = true;
  int bad_steps = 0;
  int slow = 0;
  // iterations counts trial steps; the log has one line per convergence check.
  for (int iter = 0;; ++iter) {
    res.iterations = iter;
    const double finf = f.lpNorm<Eigen::Infinity>();
    if (opt.log) *opt.log << "iter=" << iter << " fnorm=" << finf << "\n";
    if (finf <= opt.tol) {
      res.status = SolveStatus::Converged;
      break;
    }
    if (iter == max_iter) break;
    for (Eigen::Index j = 0; j < n; ++j) D(j) = std::max(D(j), J.col(j).norm());

    // Dogleg step in the D-scaled norm.
    Eigen::ColPivHouseholderQR<MatrixXd> qr(J);
    VectorXd p_gn = qr.solve(-f);
    const bool gn_ok = p_gn.allFinite() && qr.rank() == n;
    const VectorXd g = -J.transpose() * f;
    const VectorXd q = g.cwiseQuotient(D.cwiseProduct(D));
    const double Jq2 = (J * q).squaredNorm();
    VectorXd p;
    if (gn_ok && D.cwiseProduct(p_gn).norm() <= delta) {
      p = p_gn;
    } else {
      const double alpha = Jq2 > 0.0 ? g.dot(q) / Jq2 : 0.0;
      const VectorXd p_c = alpha * q;
      const double pc_norm = D.cwiseProduct(p_c).norm();
      if (!gn_ok || pc_norm >= delta) {
        p = pc_norm > 0.0 ? VectorXd(p_c * (delta / pc_norm)) : VectorXd(VectorXd::Zero(n));
      } else {
        const VectorXd d = p_gn - p_c;
        const VectorXd Dd = D.cwiseProduct(d), Dc = D.cwiseProduct(p_c);
        const double a = Dd.squaredNorm(), b = 2.0 * Dc.dot(Dd), c = Dc.squaredNorm() - delta * delta;
        const double tau = a > 0.0 ? (-b + std::sqrt(std::max(0.0, b * b - 4 * a * c))) / (2 * a) : 0.0;
        p = p_c + tau * d;
      }
    }
    const double pnorm = D.cwiseProduct(p).norm();
    if (!(pnorm > 0.0)) {
      if (fresh) break;
      if (!refresh()) {
        res.status = SolveStatus::JacobianError;
        break;
      }
      fresh = true;
      continue;
    }

    const VectorXd x_new = x + p;
    VectorXd f_new;
    bool ok = true;
    try {
      ++res.nfev;
      f_new = F(x_new);
      ok = detail::finite(f_new);
    } catch (const std::exception&) {
      ok = false;
    }
    const double f2 = f.squaredNorm();
    const double pred = f2 - (f + J * p).squaredNorm();
    const double ratio = ok && pred > 0.0 ? (f2 - f_new.squaredNorm()) / pred : -1.0;

    if (ratio < 0.1) {
      delta = 0.5 * std::min(delta, pnorm);
      ++bad_steps;
    } else {
      bad_steps = 0;
      if (ratio >= 0.5 || std::abs(ratio - 1.0) <= 0.1) delta = std::max(delta, 2.0 * pnorm);
    }
    if (ok) {
      // Broyden rank-1 correction with the attempted step.
      J += ((f_new - f - J * p) * p.transpose()) / p.squaredNorm();
      fresh = false;
    }
    const double actred = ok ? 1.0 - f_new.norm() / f.norm() : -1.0;
    slow = actred >= 1e-3 ? 0 : slow + 1;
    if (ok && ratio >= 1e-4) {
      x = x_new;
      f = f_new;
      const double fn = f.lpNorm<Eigen::Infinity>();
      if (fn < res.fnorm) {
        res.fnorm = fn;
        res.x = x;
        res.f = f;
      }
    }
    if (opt.slow_limit > 0 && slow >= opt.slow_limit) break;
    const double xscale = std::max(D.cwiseProduct(x).norm(), 1.0);
    if (delta <= 1e-15 * xscale) {
      if (fresh) break;
      delta = opt.factor * xscale * 1e-6;
      bad_steps = 2;
    }
    if (!fresh && (bad_steps >= 2 || !ok)) {
      if (!refresh()) {
        res.status = SolveStatus::JacobianError;
        break;
      }
      fresh = true;
      bad_steps = 0;
    }
  }
  if (res.fnorm <= opt.tol) res.status = SolveStatus::Converged;
  return res;
}

}  // namespace cyclegen
