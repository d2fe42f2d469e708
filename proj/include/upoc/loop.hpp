#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "upoc/catalog.hpp"
#include "upoc/integrator.hpp"
#include "upoc/sections.hpp"
#include "upoc/stability.hpp"
#include "upoc/state.hpp"

namespace upoc {

struct LoopError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thresholds for the controlled return map, nondimensional state norm.
struct StabilizationConfig {
    double eta_control = 1.0;        // impulses only inside this ball
    int max_periods = 14;
    double divergence_radius = 2.0;  // abort beyond this
};

// One admissible crossing of a controlled run: the state before the kick,
// its deviation from the anchor, and the velocity impulse applied there
// (zero when the deviation was outside the activation ball).
struct LoopCrossing {
    double t = 0.0;  // cumulative time since the run start
    StateVector state;
    double deviation = 0.0;
    Vector3d impulse = Vector3d::Zero();
    bool applied = false;
};

struct StabilizationRun {
    StateVector anchor;
    std::vector<LoopCrossing> crossings;  // one per completed period
    int periods_completed = 0;
    int impulses_applied = 0;
    bool diverged = false;
};

// Newton-refines a section crossing into a fixed point of the admissible
// return map.  Catalog orbits carry a periodicity residual (~1e-8) that
// would otherwise act as a deviation floor under every controlled run; the
// correction uses the section-projected state transition matrix and takes
// the minimum-norm step (the fixed points form a one-parameter family in
// energy, so the linearization has a near-null direction).  def must be
// calibrated.  Returns the best iterate; never worse than the input.
StateVector refine_anchor(const StateVector& rough, const SectionDef& def, double period_hint,
                          const IntegratorConfig& icfg, const SystemParams& p);

// Controlled return map x_{n+1} = F(x_n + R u_n) with u_n = K_full (x_n - anchor),
// gated on deviation <= eta_control.  The anchor is the UPO's admissible
// crossing refined by refine_anchor.  Starts at anchor + initial_offset (no
// impulse at the start point); each admissible crossing closes one period.
// A trajectory that stops returning to the section within a generous time
// budget is flagged diverged as well.
StabilizationRun stabilize(const UpoRecord& u, const SectionDef& def,
                           const Eigen::Matrix<double, 3, 6>& K_full,
                           const StabilizationConfig& cfg, const IntegratorConfig& icfg,
                           const SystemParams& p, const Vector6d& initial_offset);

// Sum of impulse magnitudes over periods [first, last] (1-based, inclusive),
// redimensionalized to m/s.
double total_delta_v(const StabilizationRun& run, int first, int last, const SystemParams& p);

// Which nu_s sub-vector the impulses are compared against.  The in-plane
// position pair reproduces the reference alignment values; the actuated
// velocity components are kept as the dimensionally matching diagnostic.
enum class AngleSpace { position, velocity };

// Mean angle [deg] between the applied impulses and the stable-manifold
// direction, both restricted to (x, y) for the planar sections and to all
// three components for the spatial ones.  arccos of the absolute dot
// product: the eigenvector orientation is arbitrary.
double impulse_manifold_angle(const StabilizationRun& run, const ManifoldDirections& dirs,
                              const SectionDef& def, AngleSpace space = AngleSpace::position);

// CSV: time, state, deviation, impulse per crossing.
void save_run_csv(const StabilizationRun& run, const std::string& path);

}  // namespace upoc
