#pragma once

#include <functional>
#include <vector>

#include "upoc/dynamics.hpp"
#include "upoc/state.hpp"

namespace upoc {

// Controls for the adaptive embedded 8(7) propagator.
struct IntegratorConfig {
    double rel_tol = 1e-12;
    double abs_tol = 1e-14;
    double max_step = 0.5;    // TU; also bounds the event-search stride
    double min_step = 1e-13;  // step-size underflow guard
    long max_steps = 4000000;
    double singularity_floor = kSingularityFloor;
};

struct IntegrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Accepted-step history; first entry is (t0, s0), last is exactly (t1, s(t1)).
struct Trajectory {
    std::vector<double> times;
    std::vector<StateVector> states;
    const StateVector& final_state() const { return states.back(); }
};

Trajectory integrate(const StateVector& s0, double t0, double t1,
                     const IntegratorConfig& cfg, const SystemParams& p);

// Final state only.
StateVector integrate_to(const StateVector& s0, double t0, double t1,
                         const IntegratorConfig& cfg, const SystemParams& p);

struct EventCrossing {
    double t;
    StateVector state;
};

using EventFn = std::function<double(const StateVector&)>;
// Invoked after each located crossing; return true to stop the integration.
using EventStop = std::function<bool(const EventCrossing&)>;

// Locates zeros of `event` along the flow.  Candidate brackets come from sign
// changes of the event function sampled at accepted steps and at dense
// interpolated points inside each step; each bracket is then polished with
// short re-integrations from the step start until |event| < 1e-12 and the
// time bracket is below 1e-12 TU.  direction: +1 keeps rising crossings,
// -1 falling, 0 both.  A start state exactly on the event surface is not
// reported as a crossing at t0.
std::vector<EventCrossing> integrate_to_events(
    const StateVector& s0, double t0, double t1, const EventFn& event,
    int direction, const IntegratorConfig& cfg, const SystemParams& p,
    const EventStop& stop = {});

struct StmResult {
    StateVector final_state;
    Matrix6d stm;  // state transition matrix over [0, duration]
};

// Propagates the state together with the 36 variational equations.  The STM
// components enter the error control with the absolute tolerance relaxed by
// 1e3 relative to the state components.
StmResult propagate_with_stm(const StateVector& s0, double duration,
                             const IntegratorConfig& cfg, const SystemParams& p);

}  // namespace upoc
