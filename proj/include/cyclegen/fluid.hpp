#pragma once

// Working-fluid property layer: a common interface plus a closed-form
// reference fluid with a CO2-like saturation dome.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cyclegen {

/// Raised for property queries outside the declared fluid domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Quality sentinel reported for single-phase states.
inline constexpr double kSinglePhase = -1.0;

/// Relative enthalpy tolerance at which a state counts as on the dome edge.
inline constexpr double kDomeEdgeTol = 1e-9;

struct FluidState {
  double p = 0.0;  // kPa
  double h = 0.0;  // kJ/kg
  double T = 0.0;  // K
  double s = 0.0;  // kJ/(kg K)
  double Q = kSinglePhase;

  bool two_phase() const { return Q >= 0.0; }
};

struct SaturationState {
  double T = 0.0;    // K
  double h_l = 0.0;  // kJ/kg
  double h_v = 0.0;  // kJ/kg
};

/// Box in (p, T); the enthalpy range is induced by the single-phase
/// caloric relation of the fluid.
struct FluidDomain {
  double p_min = 100.0;
  double p_max = 15000.0;
  double T_min = 220.0;
  double T_max = 900.0;
};

/// Property interface shared by the analytic fluid and the MLP surrogate.
/// Implementations are immutable after construction.
class FluidModel {
 public:
  virtual ~FluidModel() = default;

  virtual FluidState ph_to_tsq(double p, double h) const = 0;
  virtual double ps_to_h(double p, double s) const = 0;
  virtual SaturationState p_to_sat(double p) const = 0;
  virtual double t_to_psat(double T) const = 0;

  /// Pressure range over which a liquid/vapor dome exists.
  virtual double p_triple() const = 0;
  virtual double p_critical() const = 0;

  virtual const FluidDomain& domain() const = 0;
  virtual double h_min() const = 0;
  virtual double h_max() const = 0;

  /// Enthalpy reaching temperature T at pressure p. Exact on the single-phase
  /// branches; when T is only met inside the dome, the saturation edge on the
  /// side of T relative to T_sat. Default: bisection on ph_to_tsq.
  virtual double pt_to_h(double p, double T) const {
    auto T_at = [&](double h) { return ph_to_tsq(p, h).T; };
    auto bisect = [&](double lo, double hi) {
      for (int it = 0; it < 200 && hi - lo > 1e-12 * std::abs(hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (T_at(mid) < T ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    };
    if (!(T >= domain().T_min && T <= domain().T_max)) throw DomainError("pt_to_h: T outside domain");
    const double lo = h_min(), hi = h_max();
    if (!in_dome_pressure_range(p)) {
      if (T_at(lo) > T || T_at(hi) < T) throw DomainError("pt_to_h: temperature outside domain");
      return bisect(lo, hi);
    }
    const SaturationState sat = p_to_sat(p);
    const double eps = 1e-9 * (hi - lo);
    if (sat.h_v + eps < hi && T >= T_at(sat.h_v + eps) && T <= T_at(hi)) return bisect(sat.h_v + eps, hi);
    if (sat.h_l - eps > lo && T >= T_at(lo) && T <= T_at(sat.h_l - eps)) return bisect(lo, sat.h_l - eps);
    return T <= sat.T ? std::max(sat.h_l, lo) : sat.h_v;
  }

  bool in_dome_pressure_range(double p) const { return p >= p_triple() && p < p_critical(); }
};

struct ReferenceFluidConstants {
  double cp = 1.0;         // kJ/(kg K)
  double R = 0.1889;       // kJ/(kg K)
  double T_ref = 300.0;    // h = h_ref at T_ref
  double h_ref = 300.0;
  double p_ref = 100.0;    // s = 0 at (T_ref, p_ref)
  double T_c = 304.13;
  double p_c = 7377.0;
  double A = 6.61;         // saturation-curve exponent
  double T_triple = 220.0; // no dome below this temperature
  double hl_slope = 2.5;   // h_l(T) = hl_slope * (T - hl_T0)
  double hl_T0 = 200.0;
  double L0 = 600.0;       // L(T) = L0 * (1 - T/T_c)^L_exp
  double L_exp = 0.38;
};

/// Ideal gas outside a stylized saturation dome.
///
/// p_sat(T) = p_c exp(A (1 - T_c/T)) for T in [T_triple, T_c]. Inside the
/// dome T = T_sat(p), Q = (h - h_l)/(h_v - h_l) and entropy is interpolated
/// linearly in Q between the single-phase values at the dome edges, which
/// keeps s continuous and strictly increasing in h at fixed p.
class ReferenceFluid final : public FluidModel {
 public:
  explicit ReferenceFluid(ReferenceFluidConstants c = {}, FluidDomain d = {}) : c_(c), d_(d) {}

  const ReferenceFluidConstants& constants() const { return c_; }
  const FluidDomain& domain() const override { return d_; }
  double h_min() const override { return h_ideal(d_.T_min); }
  double h_max() const override { return h_ideal(d_.T_max); }
  double p_triple() const override { return psat_raw(c_.T_triple); }
  double p_critical() const override { return c_.p_c; }

  double h_ideal(double T) const { return c_.h_ref + c_.cp * (T - c_.T_ref); }
  double T_ideal(double h) const { return c_.T_ref + (h - c_.h_ref) / c_.cp; }
  double s_ideal(double p, double h) const {
    return c_.cp * std::log(T_ideal(h) / c_.T_ref) - c_.R * std::log(p / c_.p_ref);
  }

  FluidState ph_to_tsq(double p, double h) const override {
    check_p(p, "ph_to_tsq");
    if (!(h >= h_min() && h <= h_max()))
      throw DomainError("ph_to_tsq: h=" + std::to_string(h) + " outside domain");
    FluidState st{p, h, 0.0, 0.0, kSinglePhase};
    if (in_dome_pressure_range(p)) {
      const SaturationState sat = sat_raw(p);
      // Edges are inclusive to round-off so saturated states computed as
      // h_l or h_v survive a solver round trip.
      const double tol = kDomeEdgeTol * std::abs(sat.h_v);
      if (h >= sat.h_l - tol && h <= sat.h_v + tol) {
        const double q = std::clamp((h - sat.h_l) / (sat.h_v - sat.h_l), 0.0, 1.0);
        const double s_l = s_ideal(p, sat.h_l);
        const double s_v = s_ideal(p, sat.h_v);
        st.T = sat.T;
        st.s = s_l + q * (s_v - s_l);
        st.Q = q;
        return st;
      }
    }
    st.T = T_ideal(h);
    st.s = s_ideal(p, h);
    return st;
  }

  double ps_to_h(double p, double s) const override {
    check_p(p, "ps_to_h");
    const double s_lo = ph_to_tsq(p, h_min()).s;
    const double s_hi = ph_to_tsq(p, h_max()).s;
    if (!(s >= s_lo && s <= s_hi))
      throw DomainError("ps_to_h: s=" + std::to_string(s) + " outside domain");
    if (in_dome_pressure_range(p)) {
      const SaturationState sat = sat_raw(p);
      const double s_l = s_ideal(p, sat.h_l);
      const double s_v = s_ideal(p, sat.h_v);
      if (s >= s_l && s <= s_v) {
        const double q = s_v > s_l ? (s - s_l) / (s_v - s_l) : 0.0;
        return sat.h_l + q * (sat.h_v - sat.h_l);
      }
    }
    const double T = c_.T_ref * std::exp((s + c_.R * std::log(p / c_.p_ref)) / c_.cp);
    return h_ideal(T);
  }

  SaturationState p_to_sat(double p) const override {
    if (!(p >= p_triple() && p <= c_.p_c))
      throw DomainError("p_to_sat: p=" + std::to_string(p) + " outside dome");
    return sat_raw(p);
  }

  double t_to_psat(double T) const override {
    if (!(T >= c_.T_triple && T <= c_.T_c))
      throw DomainError("t_to_psat: T=" + std::to_string(T) + " outside dome");
    return psat_raw(T);
  }

  double pt_to_h(double p, double T) const override {
    check_p(p, "pt_to_h");
    if (!(T >= d_.T_min && T <= d_.T_max)) throw DomainError("pt_to_h: T outside domain");
    const double h = h_ideal(T);
    if (!in_dome_pressure_range(p)) return h;
    const SaturationState sat = sat_raw(p);
    if (h < sat.h_l || h > sat.h_v) return h;
    return T <= sat.T ? std::max(sat.h_l, h_min()) : sat.h_v;
  }

 private:
  void check_p(double p, const char* what) const {
    if (!(p >= d_.p_min && p <= d_.p_max))
      throw DomainError(std::string(what) + ": p=" + std::to_string(p) + " outside domain");
  }
  double psat_raw(double T) const { return c_.p_c * std::exp(c_.A * (1.0 - c_.T_c / T)); }
  double tsat_raw(double p) const { return c_.T_c / (1.0 - std::log(p / c_.p_c) / c_.A); }
  SaturationState sat_raw(double p) const {
    const double T = std::min(tsat_raw(p), c_.T_c);
    const double h_l = c_.hl_slope * (T - c_.hl_T0);
    const double L = c_.L0 * std::pow(std::max(0.0, 1.0 - T / c_.T_c), c_.L_exp);
    return {T, h_l, h_l + L};
  }

  ReferenceFluidConstants c_;
  FluidDomain d_;
};

}  // namespace cyclegen
