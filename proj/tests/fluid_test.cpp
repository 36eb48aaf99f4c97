#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cyclegen/fluid.hpp"

using namespace cyclegen;

namespace {

ReferenceFluid fluid;

TEST(ReferenceFluid, SinglePhaseClosedForm) {
  const FluidState st = fluid.ph_to_tsq(200.0, 300.0);
  EXPECT_DOUBLE_EQ(st.T, 300.0);
  EXPECT_NEAR(st.s, -0.1889 * std::log(2.0), 1e-12);
  EXPECT_NEAR(st.s, -0.1309, 1e-4);
  EXPECT_EQ(st.Q, kSinglePhase);
  EXPECT_FALSE(st.two_phase());
}

TEST(ReferenceFluid, ReferenceStateHasZeroEntropy) {
  EXPECT_DOUBLE_EQ(fluid.ph_to_tsq(100.0, 300.0).s, 0.0);
}

TEST(ReferenceFluid, CriticalPointIdentity) {
  EXPECT_EQ(fluid.t_to_psat(304.13), 7377.0);
}

TEST(ReferenceFluid, TriplePointBoundsTheDome) {
  EXPECT_NEAR(fluid.p_triple(), 7377.0 * std::exp(6.61 * (1.0 - 304.13 / 220.0)), 1e-9);
  EXPECT_THROW(fluid.p_to_sat(fluid.p_triple() - 1.0), DomainError);
  EXPECT_THROW(fluid.t_to_psat(219.0), DomainError);
  EXPECT_THROW(fluid.t_to_psat(305.0), DomainError);
}

TEST(ReferenceFluid, OutOfDomainRaisesInsteadOfNaN) {
  EXPECT_THROW(fluid.ph_to_tsq(50.0, 300.0), DomainError);
  EXPECT_THROW(fluid.ph_to_tsq(200.0, 100.0), DomainError);
  EXPECT_THROW(fluid.ph_to_tsq(200.0, 2000.0), DomainError);
  EXPECT_THROW(fluid.ps_to_h(200.0, 50.0), DomainError);
  EXPECT_THROW(fluid.ph_to_tsq(std::nan(""), 300.0), DomainError);
}

TEST(ReferenceFluid, TwoPhaseStateUsesSaturationTemperature) {
  const double p = 3000.0;
  const SaturationState sat = fluid.p_to_sat(p);
  const double h = 0.5 * (sat.h_l + sat.h_v);
  const FluidState st = fluid.ph_to_tsq(p, h);
  EXPECT_DOUBLE_EQ(st.T, sat.T);
  EXPECT_NEAR(st.Q, 0.5, 1e-12);
  // Hand evaluation from the saturation-curve constants.
  const double T_sat = 304.13 / (1.0 - std::log(p / 7377.0) / 6.61);
  EXPECT_NEAR(sat.T, T_sat, 1e-12);
  EXPECT_NEAR(sat.h_l, 2.5 * (T_sat - 200.0), 1e-12);
  EXPECT_NEAR(sat.h_v - sat.h_l, 600.0 * std::pow(1.0 - T_sat / 304.13, 0.38), 1e-12);
}

TEST(ReferenceFluid, DomeConsistency) {
  for (double p : {600.0, 1500.0, 4000.0, 6500.0, 7300.0}) {
    const SaturationState sat = fluid.p_to_sat(p);
    if (sat.h_l >= fluid.h_min()) {
      EXPECT_NEAR(fluid.ph_to_tsq(p, sat.h_l).Q, 0.0, 1e-8) << p;
    }
    EXPECT_NEAR(fluid.ph_to_tsq(p, sat.h_v).Q, 1.0, 1e-8) << p;
  }
}

TEST(ReferenceFluid, SaturationConsistency) {
  for (double p = fluid.p_triple(); p <= 7377.0; p += 250.0) {
    EXPECT_NEAR(fluid.t_to_psat(fluid.p_to_sat(p).T), p, 1e-8 * p) << p;
  }
}

TEST(ReferenceFluid, PsatStrictlyIncreasing) {
  double prev = 0.0;
  for (double T = 220.0; T <= 304.13; T += 0.5) {
    const double p = fluid.t_to_psat(T);
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(ReferenceFluid, SinglePhaseTemperatureIncreasesWithEnthalpy) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> up(100.0, 15000.0);
  for (int k = 0; k < 200; ++k) {
    const double p = up(rng);
    double prev_T = -1.0;
    bool prev_single = false;
    for (double h = fluid.h_min(); h <= fluid.h_max(); h += 5.0) {
      const FluidState st = fluid.ph_to_tsq(p, h);
      const bool single = !st.two_phase();
      if (single && prev_single) {
        EXPECT_GT(st.T, prev_T);
      }
      prev_single = single;
      prev_T = st.T;
    }
  }
}

TEST(ReferenceFluid, EntropyRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> up(100.0, 15000.0);
  std::uniform_real_distribution<double> uh(fluid.h_min(), fluid.h_max());
  for (int k = 0; k < 5000; ++k) {
    const double p = up(rng), h = uh(rng);
    const double s = fluid.ph_to_tsq(p, h).s;
    EXPECT_NEAR(fluid.ps_to_h(p, s), h, 1e-6 * h) << "p=" << p << " h=" << h;
  }
}

TEST(ReferenceFluid, EntropyIsContinuousAcrossDomeEdges) {
  const double p = 4000.0;
  const SaturationState sat = fluid.p_to_sat(p);
  const double eps = 1e-7;
  EXPECT_NEAR(fluid.ph_to_tsq(p, sat.h_v - eps).s, fluid.ph_to_tsq(p, sat.h_v + eps).s, 1e-6);
}

TEST(ReferenceFluid, PtToHMatchesIdealGas) {
  EXPECT_DOUBLE_EQ(fluid.pt_to_h(9000.0, 500.0), 500.0);
  EXPECT_THROW(fluid.pt_to_h(9000.0, 1000.0), DomainError);
}

TEST(ReferenceFluid, PtToHInsideDomeReturnsSaturationEdge) {
  const double p = 3000.0;
  const SaturationState sat = fluid.p_to_sat(p);
  // Only the vapor edge exists inside the domain at this pressure.
  EXPECT_LT(sat.h_l, fluid.h_min());
  EXPECT_DOUBLE_EQ(fluid.pt_to_h(p, sat.T + 5.0), sat.h_v);
  EXPECT_DOUBLE_EQ(fluid.pt_to_h(p, sat.T - 5.0), fluid.h_min());
  EXPECT_DOUBLE_EQ(fluid.pt_to_h(p, sat.h_v + 1.0), sat.h_v + 1.0);
}

// Forwards everything but pt_to_h so the generic bisection is exercised.
class Forwarding final : public FluidModel {
 public:
  explicit Forwarding(const FluidModel& f) : f_(f) {}
  FluidState ph_to_tsq(double p, double h) const override { return f_.ph_to_tsq(p, h); }
  double ps_to_h(double p, double s) const override { return f_.ps_to_h(p, s); }
  SaturationState p_to_sat(double p) const override { return f_.p_to_sat(p); }
  double t_to_psat(double T) const override { return f_.t_to_psat(T); }
  double p_triple() const override { return f_.p_triple(); }
  double p_critical() const override { return f_.p_critical(); }
  const FluidDomain& domain() const override { return f_.domain(); }
  double h_min() const override { return f_.h_min(); }
  double h_max() const override { return f_.h_max(); }

 private:
  const FluidModel& f_;
};

TEST(FluidModel, DefaultPtToHAgreesWithClosedForm) {
  const Forwarding generic(fluid);
  for (double p : {150.0, 700.0, 3000.0, 6000.0, 9000.0, 14000.0})
    for (double T = 222.0; T < 900.0; T += 13.7)
      EXPECT_NEAR(generic.pt_to_h(p, T), fluid.pt_to_h(p, T), 1e-6) << p << " " << T;
}

}  // namespace
