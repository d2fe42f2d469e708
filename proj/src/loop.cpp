#include "upoc/loop.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace upoc {

namespace {

// Impulses below this norm are integrator noise: their directions carry no
// information, so the alignment average skips them (delta-v keeps them).
constexpr double kAngleFloor = 1e-11;

struct ReturnHit {
    bool found = false;
    double t = 0.0;
    StateVector state;
};

ReturnHit next_admissible(const StateVector& s, const SectionDef& def, double budget,
                          const IntegratorConfig& icfg, const SystemParams& p) {
    ReturnHit hit;
    integrate_to_events(s, 0.0, budget, section_event(def), def.crossing_direction, icfg, p,
                        [&](const EventCrossing& c) {
                            if (!def.region.contains(c.state)) return false;
                            hit.t = c.t;
                            hit.state = c.state;
                            hit.found = true;
                            return true;
                        });
    return hit;
}

}  // namespace

StateVector refine_anchor(const StateVector& rough, const SectionDef& def, double period_hint,
                          const IntegratorConfig& icfg, const SystemParams& p) {
    if (def.crossing_direction == 0) {
        throw LoopError("refine_anchor: section direction not calibrated");
    }
    const int zc = def.zero_coordinate;
    // coordinates allowed to move: never the pinned one, and the planar
    // subspace (z = vz = 0) is invariant, so planar states stay inside it
    const bool planar = std::abs(rough.z) < 1e-14 && std::abs(rough.vz) < 1e-14;
    std::vector<int> free;
    for (int i = 0; i < 6; ++i) {
        if (i == zc) continue;
        if (planar && (i == 2 || i == 5)) continue;
        free.push_back(i);
    }
    const int nf = int(free.size());

    StateVector best = rough;
    best[zc] = 0.0;
    double best_res = -1.0;
    StateVector s = best;
    for (int iter = 0; iter < 8; ++iter) {
        const ReturnHit hit = next_admissible(s, def, 2.0 * period_hint, icfg, p);
        if (!hit.found) break;
        StateVector ret = hit.state;
        ret[zc] = 0.0;
        Eigen::VectorXd g(nf);
        for (int i = 0; i < nf; ++i) g[i] = ret[free[i]] - s[free[i]];
        const double res = g.norm();
        if (best_res < 0.0 || res < best_res) {
            best_res = res;
            best = s;
        }
        if (res < 2e-11 || res > 10.0 * best_res) break;

        // return-map Jacobian: STM over the return time, corrected for the
        // crossing-time variation that keeps the image on the section
        const Matrix6d phi = propagate_with_stm(s, hit.t, icfg, p).stm;
        const Vector6d f = cr3bp_derivative(hit.t, ret, p);
        const Matrix6d dP = phi - f * phi.row(zc) / f[zc];
        Eigen::MatrixXd J(nf, nf);
        for (int i = 0; i < nf; ++i) {
            for (int j = 0; j < nf; ++j) J(i, j) = dP(free[i], free[j]) - (i == j ? 1.0 : 0.0);
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
        cod.setThreshold(1e-7);  // drop the family-tangent near-null direction
        const Eigen::VectorXd delta = cod.solve(-g);
        for (int i = 0; i < nf; ++i) s[free[i]] += delta[i];
    }
    return best;
}

StabilizationRun stabilize(const UpoRecord& u, const SectionDef& def,
                           const Eigen::Matrix<double, 3, 6>& K_full,
                           const StabilizationConfig& cfg, const IntegratorConfig& icfg,
                           const SystemParams& p, const Vector6d& initial_offset) {
    if (cfg.eta_control <= 0.0 || cfg.divergence_radius <= cfg.eta_control) {
        throw LoopError("stabilize: need 0 < eta_control < divergence_radius");
    }
    if (cfg.max_periods < 1) throw LoopError("stabilize: max_periods must be positive");

    SectionDef local = def;
    StabilizationRun run;
    try {
        if (local.crossing_direction == 0) calibrate_direction(local, u, icfg, p);
        run.anchor = refine_anchor(find_anchor_crossing(local, u, icfg, p).state, local,
                                   u.period, icfg, p);
    } catch (const SectionError& e) {
        throw LoopError(std::string("stabilize: ") + e.what());
    }

    const Vector6d anchor_v = run.anchor.vec();
    StateVector s = StateVector::from_vec(anchor_v + initial_offset);
    double t = 0.0;
    const double budget = 4.0 * u.period;  // per-crossing search window
    while (run.periods_completed < cfg.max_periods) {
        const ReturnHit hit = next_admissible(s, local, budget, icfg, p);
        if (!hit.found) {  // left the section's basin: no admissible return
            run.diverged = true;
            break;
        }
        t += hit.t;
        LoopCrossing rec;
        rec.t = t;
        rec.state = hit.state;
        rec.state[local.zero_coordinate] = 0.0;
        const Vector6d dev = rec.state.vec() - anchor_v;
        rec.deviation = dev.norm();
        run.periods_completed += 1;
        if (rec.deviation > cfg.divergence_radius) {
            run.diverged = true;
            run.crossings.push_back(rec);
            break;
        }
        s = rec.state;
        if (rec.deviation <= cfg.eta_control) {
            rec.impulse = K_full * dev;
            rec.applied = true;
            run.impulses_applied += 1;
            s.vx += rec.impulse[0];  // velocity kick only; positions untouched
            s.vy += rec.impulse[1];
            s.vz += rec.impulse[2];
        }
        run.crossings.push_back(rec);
    }
    return run;
}

double total_delta_v(const StabilizationRun& run, int first, int last, const SystemParams& p) {
    if (first < 1 || last < first || last > run.periods_completed) {
        throw LoopError("total_delta_v: period range out of bounds");
    }
    double sum = 0.0;
    for (int i = first; i <= last; ++i) {
        sum += run.crossings[size_t(i) - 1].impulse.norm();
    }
    return p.velocity_to_si(sum);
}

double impulse_manifold_angle(const StabilizationRun& run, const ManifoldDirections& dirs,
                              const SectionDef& def, AngleSpace space) {
    // halo sections gate on z (component 2); the Lyapunov pair gates on x
    const bool spatial = def.region.component == 2;
    const int dim = spatial ? 3 : 2;
    const int base = space == AngleSpace::position ? 0 : 3;
    Eigen::Vector3d nu = Eigen::Vector3d::Zero();
    for (int i = 0; i < dim; ++i) nu[i] = dirs.nu_s[base + i];
    const double nn = nu.norm();
    if (nn == 0.0) {
        throw LoopError("impulse_manifold_angle: nu_s vanishes on the compared components");
    }
    nu /= nn;
    double sum = 0.0;
    int count = 0;
    for (const auto& c : run.crossings) {
        if (!c.applied) continue;
        Eigen::Vector3d ui = Eigen::Vector3d::Zero();
        for (int i = 0; i < dim; ++i) ui[i] = c.impulse[i];
        const double n = ui.norm();
        if (n < kAngleFloor) continue;  // noise-level kick: no direction
        sum += std::acos(std::min(1.0, std::abs(ui.dot(nu)) / n));
        ++count;
    }
    if (count == 0) throw LoopError("impulse_manifold_angle: run applied no impulses");
    return sum / count * (180.0 / std::acos(-1.0));
}

void save_run_csv(const StabilizationRun& run, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoopError("cannot write run file: " + path);
    out << "t,x,y,z,vx,vy,vz,deviation,ux,uy,uz\n";
    char buf[640];
    for (const auto& c : run.crossings) {
        const StateVector& s = c.state;
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", c.t,
                      s.x, s.y, s.z, s.vx, s.vy, s.vz, c.deviation, c.impulse[0], c.impulse[1],
                      c.impulse[2]);
        out << buf;
    }
}

}  // namespace upoc
