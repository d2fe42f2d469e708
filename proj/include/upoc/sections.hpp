#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "upoc/catalog.hpp"
#include "upoc/integrator.hpp"
#include "upoc/state.hpp"

namespace upoc {

// One-sided inequality on a single state component.
struct RegionPredicate {
    int component = 0;
    double threshold = 0.0;
    bool below = true;  // true: state[component] < threshold

    bool contains(const StateVector& s) const {
        return below ? s[component] < threshold : s[component] > threshold;
    }
};

// A Poincare section: one state component pinned to zero, restricted to a
// region, crossed in one direction.  Direction 0 means "not yet calibrated".
struct SectionDef {
    std::string name;
    int zero_coordinate = 1;
    RegionPredicate region;
    int crossing_direction = 0;
};

struct SectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Known sections (direction left uncalibrated):
//   s1l: y = 0, x < 0.8369   s2l: y = 0, x > 0.8369
//   s1h: y = 0, z > 0        s2h: y = 0, z < 0
SectionDef section_by_name(const std::string& name);

EventFn section_event(const SectionDef& def);

// Region and direction test for an already-located hyperplane crossing.
bool admissible(const SectionDef& def, const StateVector& s, const SystemParams& p);

// Sets def.crossing_direction from the sign of the zero-coordinate's time
// derivative at the UPO's own in-region crossing; returns that sign.
int calibrate_direction(SectionDef& def, const UpoRecord& upo, const IntegratorConfig& cfg,
                        const SystemParams& p);

// First admissible crossing along the UPO (t > 0); def must be calibrated.
EventCrossing find_anchor_crossing(const SectionDef& def, const UpoRecord& upo,
                                   const IntegratorConfig& cfg, const SystemParams& p);

struct AugmentationConfig {
    double delta_v = 2.5e-7;  // LU/TU
    int m = 10;               // neighbour count
    double dC = 1.75e-4;      // neighbour spacing in Jacobi constant
    double eta = 1.0;         // locality radius around the anchor (state norm)
    int crossings_per_ic = 2;
    bool perturb_vz = false;  // add +/-delta_v on zdot (non-planar families)
    double time_cap = 0.0;    // per-IC integration budget; 0 = 4 target periods
    double target_period = 0.0;
    // An IC already sitting admissibly on the section (the post-perturbation
    // state of an augmented sample) counts as its first recorded crossing.
    // Disable to record free-flow crossings only.
    bool include_initial_crossing = true;
};

// Training pairs: row i of X2 is the admissible crossing following row i of
// X1 on the same trajectory.
struct DatasetPair {
    std::vector<StateVector> X1;
    std::vector<StateVector> X2;
    std::vector<std::string> warnings;  // ICs that ran out of time budget
};

// Per base state: unperturbed, +/-delta_v on xdot, +/-delta_v on ydot, and
// optionally +/-delta_v on zdot.  Order is preserved.
std::vector<StateVector> build_augmented_ics(const std::vector<UpoRecord>& base, double delta_v,
                                             bool perturb_vz = false);

// Integrates each IC until cfg.crossings_per_ic admissible crossings (or the
// time cap), forms consecutive-crossing pairs per trajectory, and drops pairs
// leaving the eta ball around the anchor.
DatasetPair collect_pairs(const std::vector<StateVector>& ics, const SectionDef& def,
                          const StateVector& anchor, const AugmentationConfig& cfg,
                          const IntegratorConfig& integ, const SystemParams& p);

// 12-column CSV (6 of X1, 6 of X2) with header.
void save_pairs_csv(const DatasetPair& pairs, const std::string& path);
DatasetPair load_pairs_csv(const std::string& path);

}  // namespace upoc
