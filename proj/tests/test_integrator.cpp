#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "upoc/integrator.hpp"

using namespace upoc;

namespace {

const SystemParams kEM = SystemParams::earth_moon();

const StateVector kS0{0.83, 0.0, 0.01, 0.0, 0.18, 0.0};

IntegratorConfig tight() {
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-13;
    cfg.abs_tol = 1e-15;
    return cfg;
}

}  // namespace

TEST_CASE("final state matches an independent propagator") {
    // Frozen references: scipy DOP853 at rtol 1e-13 / atol 1e-16
    // (tools/oracles/propagation_oracle.py).
    const double ref5[6] = {0.9298371144904195, -0.088668468542442286,
                            -0.0078136817265820318, 0.069693542334091446,
                            0.1682418011209075, -0.0097382495971086412};
    const double ref10[6] = {-0.57834413278647323, -0.44194116548501589,
                             0.0026493048150624484, 0.37092696173140793,
                             -0.039603943149516617, 0.016111939570162902};

    const StateVector s5 = integrate_to(kS0, 0.0, 5.0, tight(), kEM);
    const StateVector s10 = integrate_to(kS0, 0.0, 10.0, tight(), kEM);
    for (int i = 0; i < 6; ++i) {
        CHECK(std::abs(s5[i] - ref5[i]) < 1e-9);
        CHECK(std::abs(s10[i] - ref10[i]) < 1e-7);  // longer arc, more amplification
    }
}

TEST_CASE("trajectory endpoints are exact and Jacobi constant is conserved") {
    IntegratorConfig cfg;  // defaults: rel 1e-12, abs 1e-14
    const double tf = 40.0;
    const Trajectory traj = integrate(kS0, 0.0, tf, cfg, kEM);

    REQUIRE(traj.times.size() == traj.states.size());
    CHECK(traj.times.front() == 0.0);
    CHECK(traj.times.back() == tf);  // final sample lands exactly on tf
    CHECK(traj.states.front().vec() == kS0.vec());
    CHECK(traj.times.size() > 10);

    const double c0 = jacobi_constant(kS0, kEM);
    double worst = 0.0;
    for (const auto& s : traj.states) {
        worst = std::max(worst, std::abs(jacobi_constant(s, kEM) - c0));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("step-size sweep shows 8th-order convergence") {
    // Forcing max_step with huge tolerances makes the stepper run fixed-size
    // steps; the global error against a tight-tolerance reference then scales
    // like h^8.  A smooth arc near the triangular point keeps every step size
    // inside the asymptotic regime and above the roundoff floor.
    const StateVector smooth{0.488, 0.866, 0.02, 0.03, -0.02, 0.01};
    const double tf = 4.0;
    const Vector6d ref = integrate_to(smooth, 0.0, tf, tight(), kEM).vec();

    auto err_at = [&](double h) {
        IntegratorConfig cfg;
        cfg.rel_tol = 1e6;
        cfg.abs_tol = 1e6;
        cfg.max_step = h;
        return (integrate_to(smooth, 0.0, tf, cfg, kEM).vec() - ref).norm();
    };

    const double e1 = err_at(0.5);
    const double e2 = err_at(0.25);
    const double e3 = err_at(0.125);
    const double r12 = e1 / e2;
    const double r23 = e2 / e3;
    // 2^8 = 256; allow slack for the error-constant variation along the arc.
    CHECK(r12 > 100.0);
    CHECK(r12 < 650.0);
    CHECK(r23 > 100.0);
    CHECK(r23 < 650.0);
}

TEST_CASE("integration is deterministic") {
    IntegratorConfig cfg;
    const Trajectory a = integrate(kS0, 0.0, 7.0, cfg, kEM);
    const Trajectory b = integrate(kS0, 0.0, 7.0, cfg, kEM);
    REQUIRE(a.times.size() == b.times.size());
    CHECK(std::memcmp(a.times.data(), b.times.data(),
                      a.times.size() * sizeof(double)) == 0);
    for (size_t i = 0; i < a.states.size(); ++i) {
        CHECK(a.states[i].vec() == b.states[i].vec());
    }
}

TEST_CASE("backward integration returns to the start") {
    const StateVector mid = integrate_to(kS0, 0.0, 3.0, tight(), kEM);
    const StateVector back = integrate_to(mid, 3.0, 0.0, tight(), kEM);
    CHECK((back.vec() - kS0.vec()).norm() < 1e-11);
}

TEST_CASE("event location: y = 0 plane crossings") {
    IntegratorConfig cfg;
    auto ev = [](const StateVector& s) { return s.y; };

    const auto both = integrate_to_events(kS0, 0.0, 12.0, ev, 0, cfg, kEM);
    const auto rising = integrate_to_events(kS0, 0.0, 12.0, ev, +1, cfg, kEM);
    const auto falling = integrate_to_events(kS0, 0.0, 12.0, ev, -1, cfg, kEM);

    REQUIRE(!both.empty());
    // The start sits exactly on y = 0 and must not be reported.
    CHECK(both.front().t > 1e-6);
    CHECK(both.size() == rising.size() + falling.size());

    for (const auto& c : both) {
        CHECK(std::abs(c.state.y) < 1e-12);  // refined onto the surface
    }
    for (const auto& c : rising) CHECK(c.state.vy > 0.0);
    for (const auto& c : falling) CHECK(c.state.vy < 0.0);

    // Crossing times strictly increase.
    for (size_t i = 1; i < both.size(); ++i) CHECK(both[i].t > both[i - 1].t);

    // Re-integrating to a located crossing time reproduces the crossing state.
    const auto& c0 = both.front();
    const StateVector chk = integrate_to(kS0, 0.0, c0.t, cfg, kEM);
    CHECK((chk.vec() - c0.state.vec()).norm() < 1e-10);
}

TEST_CASE("event location: two nearby crossings inside one step are both found") {
    IntegratorConfig cfg;
    cfg.max_step = 0.5;
    // Level slightly below the arc's maximum x produces a tight double
    // crossing near the turning point.
    const Trajectory traj = integrate(kS0, 0.0, 3.0, cfg, kEM);
    double xmax = -1e9;
    for (const auto& s : traj.states) xmax = std::max(xmax, s.x);
    const double level = xmax - 1e-5;

    auto ev = [level](const StateVector& s) { return s.x - level; };
    const auto found = integrate_to_events(kS0, 0.0, 3.0, ev, 0, cfg, kEM);
    CHECK(found.size() >= 2);
    for (const auto& c : found) CHECK(std::abs(c.state.x - level) < 1e-12);
}

TEST_CASE("event early-stop callback truncates the crossing list") {
    IntegratorConfig cfg;
    auto ev = [](const StateVector& s) { return s.y; };
    int seen = 0;
    const auto cs = integrate_to_events(kS0, 0.0, 12.0, ev, 0, cfg, kEM,
                                        [&](const EventCrossing&) { return ++seen >= 2; });
    CHECK(cs.size() == 2);
}

TEST_CASE("no crossings yields an empty list") {
    IntegratorConfig cfg;
    auto ev = [](const StateVector& s) { return s.x - 50.0; };
    CHECK(integrate_to_events(kS0, 0.0, 5.0, ev, 0, cfg, kEM).empty());
}

TEST_CASE("STM matches finite-difference columns and preserves volume") {
    IntegratorConfig cfg;
    const double T = 2.0;
    const StmResult res = propagate_with_stm(kS0, T, cfg, kEM);

    // Endpoint consistency with the plain propagation.
    const StateVector plain = integrate_to(kS0, 0.0, T, cfg, kEM);
    CHECK((res.final_state.vec() - plain.vec()).norm() < 1e-11);

    // Central differences of the flow map, column by column.
    const double h = 1e-7;
    for (int j = 0; j < 6; ++j) {
        StateVector sp = kS0, sm = kS0;
        sp[j] += h;
        sm[j] -= h;
        const Vector6d col =
            (integrate_to(sp, 0.0, T, tight(), kEM).vec() -
             integrate_to(sm, 0.0, T, tight(), kEM).vec()) / (2.0 * h);
        CHECK((res.stm.col(j) - col).norm() / res.stm.col(j).norm() < 1e-5);
    }

    // The flow is volume preserving.
    CHECK(res.stm.determinant() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("failure modes raise typed errors") {
    // Plunge toward the secondary.  With a raised distance floor the
    // singularity guard fires; at the default 1e-12 floor the controller
    // gives up on the step size first.
    StateVector fall{1.0 - kEM.mu + 1e-4, 0.0, 0.0, 0.0, 0.0, 0.0};
    IntegratorConfig guarded;
    guarded.singularity_floor = 1e-3;
    CHECK_THROWS_AS(integrate_to(fall, 0.0, 2.0, guarded, kEM), SingularityError);
    IntegratorConfig cfg;
    CHECK_THROWS_AS(integrate_to(fall, 0.0, 2.0, cfg, kEM), IntegrationError);

    // Step budget exhausted.
    IntegratorConfig tiny;
    tiny.max_steps = 3;
    CHECK_THROWS_AS(integrate_to(kS0, 0.0, 10.0, tiny, kEM), IntegrationError);
}
