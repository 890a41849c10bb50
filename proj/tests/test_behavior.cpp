#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lcmpc/behavior.hpp"

using namespace lcmpc;

namespace {

JointState make_joint(double ego_px, double ego_py, double ego_v, double ego_psi,
                      double tv_px, double tv_v) {
  JointState j;
  j.ego = {ego_px, ego_py, ego_v, ego_psi};
  j.target = {tv_px, 4.0, tv_v, 0.0};
  return j;
}

// Brute-force constant-velocity prediction of the decision rule.
Maneuver oracle_pidm(const JointState& joint, const TargetParams& p, double dt) {
  if (joint.ego.px <= joint.target.px) return Maneuver::kTrack;
  const int steps = static_cast<int>(std::lround(p.np / dt));
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const double ego_py = joint.ego.py + t * joint.ego.v * std::sin(joint.ego.psi);
    const double tv_py = joint.target.py + t * joint.target.v * std::sin(joint.target.psi);
    if (std::abs(ego_py - tv_py) <= p.c_thres) return Maneuver::kBrake;
  }
  return Maneuver::kTrack;
}

}  // namespace

TEST_CASE("base acceleration policies with clipping") {
  TargetParams p;  // k = 0.7, a in [-5, 3], v_max = 28
  SUBCASE("tracking at the set speed gives zero") {
    const JointState j = make_joint(0, 0, 25, 0, 10, 28.0);
    CHECK(base_acceleration(j, Maneuver::kTrack, p) == doctest::Approx(0.0));
  }
  SUBCASE("hard braking clips at the comfort floor") {
    const JointState j = make_joint(0, 0, 25, 0, 10, 25.0);
    // raw = -0.7 * 25 = -17.5, clipped to -5
    CHECK(base_acceleration(j, Maneuver::kBrake, p) == doctest::Approx(-5.0));
  }
  SUBCASE("moderate tracking error inside the box") {
    const JointState j = make_joint(0, 0, 25, 0, 10, 24.0);
    CHECK(base_acceleration(j, Maneuver::kTrack, p) == doctest::Approx(0.7 * 4.0));
  }
  SUBCASE("tracking clips at the comfort ceiling") {
    const JointState j = make_joint(0, 0, 25, 0, 10, 20.0);
    // raw = 0.7 * 8 = 5.6, clipped to 3
    CHECK(base_acceleration(j, Maneuver::kTrack, p) == doctest::Approx(3.0));
  }
  SUBCASE("always within the comfort box") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> uv(0.0, 40.0);
    for (int i = 0; i < 200; ++i) {
      const JointState j = make_joint(0, 0, 25, 0, 10, uv(rng));
      for (const Maneuver m : {Maneuver::kBrake, Maneuver::kTrack}) {
        const double a = base_acceleration(j, m, p);
        CHECK(a >= p.a_min - 1e-12);
        CHECK(a <= p.a_max_comf + 1e-12);
      }
    }
  }
}

TEST_CASE("base acceleration slope is the derivative in the unclipped region") {
  TargetParams p;
  const double h = 1e-6;
  for (const double v : {2.0, 24.0, 26.5, 39.0}) {
    for (const Maneuver m : {Maneuver::kBrake, Maneuver::kTrack}) {
      JointState jp = make_joint(0, 0, 25, 0, 10, v + h);
      JointState jm = make_joint(0, 0, 25, 0, 10, v - h);
      const double fd =
          (base_acceleration(jp, m, p) - base_acceleration(jm, m, p)) / (2 * h);
      const JointState j = make_joint(0, 0, 25, 0, 10, v);
      CHECK(base_acceleration_slope(j, m, p) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("target step composes the base policy with the bicycle step") {
  TargetParams p;
  VehicleGeometry g;
  const double dt = 0.1;
  const JointState j = make_joint(0, 0, 25, 0, 10, 25.0);
  SUBCASE("braking from 25 with the clipped floor") {
    const VehicleState zp = target_step(j, Maneuver::kBrake, p, g, dt);
    CHECK(zp.v == doctest::Approx(24.5));  // a = -5 over 0.1 s
    CHECK(zp.px == doctest::Approx(10.0 + 2.5));
    CHECK(zp.py == doctest::Approx(4.0));
    CHECK(zp.psi == doctest::Approx(0.0));
  }
  SUBCASE("equals dynamics step with (base acceleration, 0)") {
    for (const Maneuver m : {Maneuver::kBrake, Maneuver::kTrack}) {
      const VehicleState want =
          step(j.target, {base_acceleration(j, m, p), 0.0}, g, dt);
      const VehicleState got = target_step(j, m, p, g, dt);
      CHECK((got.vec() - want.vec()).norm() == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("predictive decision rule") {
  TargetParams p;
  p.np = 0.5;
  p.c_thres = 2.0;
  const double dt = 0.1;
  SUBCASE("ego behind always tracks") {
    const JointState j = make_joint(5, 4, 25, 0, 10, 25);
    CHECK(pidm_decide(j, p, dt) == Maneuver::kTrack);
  }
  SUBCASE("ego ahead in the same lane brakes") {
    JointState j = make_joint(15, 4, 25, 0, 10, 25);
    CHECK(pidm_decide(j, p, dt) == Maneuver::kBrake);
  }
  SUBCASE("ego ahead in the adjacent lane, parallel heading, tracks") {
    const JointState j = make_joint(15, 0, 25, 0.0, 10, 25);
    CHECK(pidm_decide(j, p, dt) == Maneuver::kTrack);
  }
  SUBCASE("ego ahead, converging heading, brakes once the prediction enters the band") {
    // 0.5 s at 25 m/s with sin(psi) = 0.2 covers 2.5 m laterally: 4 - 2.5 < 2.
    const JointState j = make_joint(15, 0, 25, std::asin(0.2), 10, 25);
    CHECK(pidm_decide(j, p, dt) == Maneuver::kBrake);
  }
  SUBCASE("matches the brute-force oracle on random states") {
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    std::uniform_real_distribution<double> unp(0.1, 1.0);
    std::uniform_real_distribution<double> uc(0.0, 4.0);
    for (int i = 0; i < 500; ++i) {
      JointState j = make_joint(10 + 10 * un(rng), 2 + 3 * un(rng),
                                20 + 5 * un(rng), 0.5 * un(rng),
                                10 + 10 * un(rng), 20 + 5 * un(rng));
      TargetParams q = p;
      q.np = unp(rng);
      q.c_thres = uc(rng);
      CHECK(pidm_decide(j, q, dt) == oracle_pidm(j, q, dt));
    }
  }
  SUBCASE("monotone in the lateral threshold") {
    std::mt19937 rng(78);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      JointState j = make_joint(10 + 10 * un(rng), 2 + 3 * un(rng),
                                20 + 5 * un(rng), 0.5 * un(rng),
                                10 + 10 * un(rng), 20 + 5 * un(rng));
      TargetParams lo = p, hi = p;
      lo.c_thres = 1.0;
      hi.c_thres = 3.5;
      if (pidm_decide(j, lo, dt) == Maneuver::kBrake) {
        CHECK(pidm_decide(j, hi, dt) == Maneuver::kBrake);
      }
    }
  }
}
