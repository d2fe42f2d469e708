// Developer tool: generates the periodic-orbit catalogs committed under
// data/.  Symmetric orbits are corrected by single shooting on the
// perpendicular-crossing conditions.  Families are traced by pseudo-arclength
// continuation (so folds in any single coordinate are followed rather than
// jumped), with a period-continuity guard against branch switching.  Exact
// Jacobi levels are landed with a square Newton on (perpendicularity, C).
//
// Usage: upoc-mkcatalog <lyapunov|halo> <out.csv> [center_C] [half_count] [dC]

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "upoc/catalog.hpp"
#include "upoc/dynamics.hpp"
#include "upoc/integrator.hpp"

using namespace upoc;

namespace {

const SystemParams kP = SystemParams::earth_moon();

// The planar family supports rtol 5e-14; the halo walk's close lunar passes
// sit at the roundoff floor there, so that path runs at 1e-13 (set in main).
double g_rel_tol = 5e-14;
double g_res_tol = 5e-13;  // corrector residual demand

IntegratorConfig tight_cfg() {
    IntegratorConfig cfg;
    cfg.rel_tol = g_rel_tol;
    cfg.abs_tol = 1e-15;
    return cfg;
}

// State, STM and vector field at the first y = 0 crossing (t > 0).
struct HalfCrossing {
    double t;
    StateVector s;
    Matrix6d phi;
    Vector6d f;
};

bool half_period_crossing(const StateVector& s0, double t_max, HalfCrossing& out) {
    const IntegratorConfig cfg = tight_cfg();
    auto ev = [](const StateVector& s) { return s.y; };
    const auto cs = integrate_to_events(s0, 0.0, t_max, ev, 0, cfg, kP,
                                        [](const EventCrossing&) { return true; });
    if (cs.empty()) return false;
    const StmResult stm = propagate_with_stm(s0, cs.front().t, cfg, kP);
    out.t = cs.front().t;
    out.s = stm.final_state;
    out.phi = stm.stm;
    out.f = cr3bp_derivative(0.0, stm.final_state, kP);
    return true;
}

double unstable_multiplier(const StateVector& s0, double period) {
    const StmResult m = propagate_with_stm(s0, period, tight_cfg(), kP);
    const Eigen::EigenSolver<Matrix6d> es(m.stm);
    double lu = 0.0;
    for (int i = 0; i < 6; ++i) lu = std::max(lu, std::abs(es.eigenvalues()[i]));
    return lu;
}

// ---- planar Lyapunov family, unknowns u = (x0, vy0) ----

struct PlanarOrbit {
    double x0 = 0, vy0 = 0, period = 0, jacobi = 0;
};

StateVector planar_state(double x0, double vy0) {
    return StateVector{x0, 0.0, 0.0, 0.0, vy0, 0.0};
}

// Residual vx at the half crossing and its gradient w.r.t. (x0, vy0), with
// the crossing-time variation eliminated through the y = 0 constraint.
bool planar_residual(double x0, double vy0, double& res, Eigen::RowVector2d& grad,
                     double& half_t) {
    HalfCrossing hc;
    if (!half_period_crossing(planar_state(x0, vy0), 12.0, hc)) return false;
    if (std::abs(hc.s.vy) < 1e-12) return false;
    res = hc.s.vx;
    const double w = hc.f[3] / hc.s.vy;
    grad[0] = hc.phi(3, 0) - w * hc.phi(1, 0);
    grad[1] = hc.phi(3, 4) - w * hc.phi(1, 4);
    half_t = hc.t;
    return true;
}

// Newton corrector constrained to the hyperplane tangent.(u - u_pred) = 0.
bool correct_planar_on_plane(Eigen::Vector2d& u, const Eigen::Vector2d& tangent,
                             const Eigen::Vector2d& u_pred, double& period) {
    for (int it = 0; it < 25; ++it) {
        double res, half_t;
        Eigen::RowVector2d grad;
        if (!planar_residual(u[0], u[1], res, grad, half_t)) return false;
        const double plane = tangent.dot(u - u_pred);
        if (std::abs(res) < g_res_tol && std::abs(plane) < 1e-12) {
            period = 2.0 * half_t;
            return true;
        }
        Eigen::Matrix2d J;
        J.row(0) = grad;
        J.row(1) = tangent.transpose();
        const Eigen::Vector2d du = J.fullPivLu().solve(Eigen::Vector2d(res, plane));
        u -= du;
        if (!u.allFinite()) return false;
    }
    return false;
}

// Family tangent: unit null vector of the 1x2 residual gradient.
bool planar_tangent(const Eigen::Vector2d& u, Eigen::Vector2d& tangent) {
    double res, half_t;
    Eigen::RowVector2d grad;
    if (!planar_residual(u[0], u[1], res, grad, half_t)) return false;
    tangent = Eigen::Vector2d(-grad[1], grad[0]).normalized();
    return true;
}

// Linear center seed at the collinear point.
PlanarOrbit lyapunov_seed(double x_l1, double amp) {
    const Matrix6d jac = variational_jacobian(planar_state(x_l1, 0.0), kP);
    const double uxx = jac(3, 0);
    const double uyy = jac(4, 1);
    const double b1 = 4.0 - uxx - uyy;
    const double disc = std::sqrt(b1 * b1 - 4.0 * uxx * uyy);
    const double nu = std::sqrt(0.5 * (b1 + disc));
    const double kappa = (nu * nu + uxx) / (2.0 * nu);

    PlanarOrbit o;
    o.x0 = x_l1 - amp;
    o.vy0 = kappa * nu * amp;
    return o;
}

std::vector<PlanarOrbit> walk_lyapunov_family(double c_stop) {
    const auto lp = lagrange_points(kP);
    const double x_l1 = lp[0].position.x();

    std::vector<PlanarOrbit> fam;
    {
        PlanarOrbit o = lyapunov_seed(x_l1, 1e-3);
        Eigen::Vector2d u(o.x0, o.vy0);
        Eigen::Vector2d t0(1.0, 0.0);  // plain correction at fixed predictor
        double period;
        if (!correct_planar_on_plane(u, Eigen::Vector2d(1, 0), u, period)) {
            // fall back: fix x0, relax vy0 only
        }
        o.x0 = u[0];
        o.vy0 = u[1];
        o.period = period;
        o.jacobi = jacobi_constant(planar_state(o.x0, o.vy0), kP);
        fam.push_back(o);
    }

    Eigen::Vector2d tangent;
    if (!planar_tangent(Eigen::Vector2d(fam[0].x0, fam[0].vy0), tangent)) {
        std::fprintf(stderr, "tangent at seed failed\n");
        std::exit(1);
    }
    if (tangent[0] > 0.0) tangent = -tangent;  // walk toward larger amplitude

    double ds = 1e-3;
    while (fam.back().jacobi > c_stop) {
        const auto& b = fam.back();
        const Eigen::Vector2d u_cur(b.x0, b.vy0);
        const Eigen::Vector2d u_pred = u_cur + ds * tangent;
        Eigen::Vector2d u = u_pred;
        double period;
        bool ok = correct_planar_on_plane(u, tangent, u_pred, period);
        // Guard against branch switching: period and state must move smoothly.
        if (ok && (std::abs(period - b.period) > 0.25 + 0.5 * ds ||
                   (u - u_cur).norm() > 10.0 * ds + 1e-6)) {
            ok = false;
        }
        if (ok) {
            PlanarOrbit o;
            o.x0 = u[0];
            o.vy0 = u[1];
            o.period = period;
            o.jacobi = jacobi_constant(planar_state(o.x0, o.vy0), kP);
            fam.push_back(o);
            Eigen::Vector2d t_new;
            if (planar_tangent(u, t_new)) {
                if (t_new.dot(tangent) < 0.0) t_new = -t_new;
                tangent = t_new;
            }
            ds = std::min(ds * 1.4, 6e-3);
        } else {
            ds *= 0.5;
            if (ds < 1e-8) {
                const auto& l = fam.back();
                std::fprintf(stderr, "planar continuation stalled at C=%.6f\n", l.jacobi);
                std::fprintf(stderr, "last member: x0=%.9f vy0=%.9f T=%.6f\n", l.x0,
                             l.vy0, l.period);
                auto evf = [](const StateVector& s) { return s.y; };
                const auto cs = integrate_to_events(planar_state(l.x0, l.vy0), 0.0,
                                                    l.period * 1.01, evf, 0,
                                                    tight_cfg(), kP);
                for (const auto& c : cs) {
                    std::fprintf(stderr, "  crossing t=%.6f x=%.6f vx=%+.3e vy=%+.4f\n",
                                 c.t, c.state.x, c.state.vx, c.state.vy);
                }
                break;
            }
        }
    }
    return fam;
}

// Square Newton on (vx_c, C - C_target) landing exactly on one Jacobi level.
bool lyapunov_at_c(const PlanarOrbit& near, double c_target, PlanarOrbit& out) {
    Eigen::Vector2d u(near.x0, near.vy0);
    double period = near.period;
    for (int it = 0; it < 40; ++it) {
        double res, half_t;
        Eigen::RowVector2d grad;
        if (!planar_residual(u[0], u[1], res, grad, half_t)) return false;
        period = 2.0 * half_t;
        const double c = jacobi_constant(planar_state(u[0], u[1]), kP);
        if (std::abs(res) < g_res_tol && std::abs(c - c_target) < 1e-12) {
            out.x0 = u[0];
            out.vy0 = u[1];
            out.period = period;
            out.jacobi = c;
            return true;
        }
        // dC/dx0 = 2 Ux at (x0,0,0); dC/dvy0 = -2 vy0.
        const Vector6d f0 = cr3bp_derivative(0.0, planar_state(u[0], 0.0), kP);
        Eigen::Matrix2d J;
        J.row(0) = grad;
        J(1, 0) = 2.0 * f0[3];  // accel at zero velocity = potential gradient
        J(1, 1) = -2.0 * u[1];
        const Eigen::Vector2d du = J.fullPivLu().solve(Eigen::Vector2d(res, c - c_target));
        u -= du;
        if (!u.allFinite()) return false;
    }
    return false;
}

// ---- spatial halo family, unknowns u = (x0, z0, vy0) ----

struct SpatialOrbit {
    double x0 = 0, z0 = 0, vy0 = 0, period = 0, jacobi = 0;
};

StateVector spatial_state(double x0, double z0, double vy0) {
    return StateVector{x0, 0.0, z0, 0.0, vy0, 0.0};
}

// Residuals (vx_c, vz_c) and their 2x3 Jacobian w.r.t. (x0, z0, vy0).
bool spatial_residual(const Eigen::Vector3d& u, Eigen::Vector2d& res,
                      Eigen::Matrix<double, 2, 3>& grad, double& half_t) {
    HalfCrossing hc;
    if (!half_period_crossing(spatial_state(u[0], u[1], u[2]), 12.0, hc)) return false;
    if (std::abs(hc.s.vy) < 1e-12) return false;
    res = Eigen::Vector2d(hc.s.vx, hc.s.vz);
    const int cols[3] = {0, 2, 4};  // x0, z0, vy0
    for (int j = 0; j < 3; ++j) {
        const int cj = cols[j];
        grad(0, j) = hc.phi(3, cj) - hc.f[3] * hc.phi(1, cj) / hc.s.vy;
        grad(1, j) = hc.phi(5, cj) - hc.f[5] * hc.phi(1, cj) / hc.s.vy;
    }
    half_t = hc.t;
    return true;
}

bool correct_spatial_on_plane(Eigen::Vector3d& u, const Eigen::Vector3d& tangent,
                              const Eigen::Vector3d& u_pred, double& period) {
    for (int it = 0; it < 30; ++it) {
        Eigen::Vector2d res;
        Eigen::Matrix<double, 2, 3> grad;
        double half_t;
        if (!spatial_residual(u, res, grad, half_t)) return false;
        const double plane = tangent.dot(u - u_pred);
        if (res.cwiseAbs().maxCoeff() < g_res_tol && std::abs(plane) < 1e-12) {
            period = 2.0 * half_t;
            return true;
        }
        Eigen::Matrix3d J;
        J.block<2, 3>(0, 0) = grad;
        J.row(2) = tangent.transpose();
        const Eigen::Vector3d du =
            J.fullPivLu().solve(Eigen::Vector3d(res[0], res[1], plane));
        u -= du;
        if (!u.allFinite()) return false;
    }
    return false;
}

bool spatial_tangent(const Eigen::Vector3d& u, Eigen::Vector3d& tangent) {
    Eigen::Vector2d res;
    Eigen::Matrix<double, 2, 3> grad;
    double half_t;
    if (!spatial_residual(u, res, grad, half_t)) return false;
    const Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(
        grad, Eigen::ComputeFullV);
    tangent = svd.matrixV().col(2).normalized();
    return true;
}

// Trace of the out-of-plane monodromy block along a planar orbit; the halo
// branch bifurcates where it crosses +2.
double vertical_trace(const PlanarOrbit& o) {
    const StmResult m =
        propagate_with_stm(planar_state(o.x0, o.vy0), o.period, tight_cfg(), kP);
    return m.stm(2, 2) + m.stm(5, 5);
}

SpatialOrbit find_halo_branch(const std::vector<PlanarOrbit>& fam) {
    size_t hi = 1;
    double prev = vertical_trace(fam[0]);
    for (; hi < fam.size(); ++hi) {
        const double cur = vertical_trace(fam[hi]);
        if ((prev - 2.0) * (cur - 2.0) <= 0.0) break;
        prev = cur;
    }
    if (hi == fam.size()) {
        std::fprintf(stderr, "no vertical bifurcation found along planar family\n");
        std::exit(1);
    }
    std::printf("vertical bifurcation bracketed at C in [%.6f, %.6f]\n",
                fam[hi].jacobi, fam[hi - 1].jacobi);

    // Step off the plane near the critical orbit and converge the first halo.
    SpatialOrbit h;
    Eigen::Vector3d u(fam[hi].x0, 8e-3, fam[hi].vy0);
    const Eigen::Vector3d ez(0.0, 1.0, 0.0);  // keep z0 pinned while correcting
    double period;
    if (!correct_spatial_on_plane(u, ez, u, period)) {
        std::fprintf(stderr, "halo branch seed failed to converge\n");
        std::exit(1);
    }
    h.x0 = u[0];
    h.z0 = u[1];
    h.vy0 = u[2];
    h.period = period;
    h.jacobi = jacobi_constant(spatial_state(h.x0, h.z0, h.vy0), kP);
    std::printf("halo branch entered: C=%.6f z0=%.5f T=%.5f\n", h.jacobi, h.z0, h.period);
    return h;
}

std::vector<SpatialOrbit> walk_halo_family(double c_stop) {
    std::vector<PlanarOrbit> planar = walk_lyapunov_family(3.10);
    std::vector<SpatialOrbit> fam;
    fam.push_back(find_halo_branch(planar));

    Eigen::Vector3d tangent;
    if (!spatial_tangent(Eigen::Vector3d(fam[0].x0, fam[0].z0, fam[0].vy0), tangent)) {
        std::fprintf(stderr, "tangent at halo seed failed\n");
        std::exit(1);
    }
    if (tangent[1] < 0.0) tangent = -tangent;  // grow out of the plane first

    double ds = 2e-3;
    while (fam.back().jacobi > c_stop) {
        const auto& b = fam.back();
        const Eigen::Vector3d u_cur(b.x0, b.z0, b.vy0);
        const Eigen::Vector3d u_pred = u_cur + ds * tangent;
        Eigen::Vector3d u = u_pred;
        double period;
        bool ok = correct_spatial_on_plane(u, tangent, u_pred, period);
        if (ok && (std::abs(period - b.period) > 0.25 + 0.5 * ds ||
                   (u - u_cur).norm() > 10.0 * ds + 1e-6)) {
            ok = false;
        }
        if (ok) {
            SpatialOrbit o;
            o.x0 = u[0];
            o.z0 = u[1];
            o.vy0 = u[2];
            o.period = period;
            o.jacobi = jacobi_constant(spatial_state(o.x0, o.z0, o.vy0), kP);
            fam.push_back(o);
            Eigen::Vector3d t_new;
            if (spatial_tangent(u, t_new)) {
                if (t_new.dot(tangent) < 0.0) t_new = -t_new;
                tangent = t_new;
            }
            ds = std::min(ds * 1.3, 1.2e-2);
        } else {
            ds *= 0.5;
            if (ds < 1e-8) {
                std::fprintf(stderr, "halo continuation stalled at C=%.6f\n",
                             fam.back().jacobi);
                break;
            }
        }
    }
    return fam;
}

bool halo_at_c(const SpatialOrbit& near, double c_target, SpatialOrbit& out) {
    Eigen::Vector3d u(near.x0, near.z0, near.vy0);
    double period = near.period;
    for (int it = 0; it < 40; ++it) {
        Eigen::Vector2d res;
        Eigen::Matrix<double, 2, 3> grad;
        double half_t;
        if (!spatial_residual(u, res, grad, half_t)) return false;
        period = 2.0 * half_t;
        const double c = jacobi_constant(spatial_state(u[0], u[1], u[2]), kP);
        if (res.cwiseAbs().maxCoeff() < g_res_tol && std::abs(c - c_target) < 1e-12) {
            out.x0 = u[0];
            out.z0 = u[1];
            out.vy0 = u[2];
            out.period = period;
            out.jacobi = c;
            return true;
        }
        Eigen::Matrix3d J;
        J.block<2, 3>(0, 0) = grad;
        const Vector6d f0 = cr3bp_derivative(0.0, spatial_state(u[0], u[1], 0.0), kP);
        J(2, 0) = 2.0 * f0[3];
        J(2, 1) = 2.0 * f0[5];
        J(2, 2) = -2.0 * u[2];
        const Eigen::Vector3d du =
            J.fullPivLu().solve(Eigen::Vector3d(res[0], res[1], c - c_target));
        u -= du;
        if (!u.allFinite()) return false;
    }
    return false;
}

template <class Orbit>
const Orbit* nearest_by_c(const std::vector<Orbit>& fam, double c) {
    const Orbit* best = nullptr;
    double gap = 1e300;
    for (const auto& o : fam) {
        if (std::abs(o.jacobi - c) < gap) {
            gap = std::abs(o.jacobi - c);
            best = &o;
        }
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr,
                     "usage: %s <lyapunov|halo> <out.csv> [center_C] [half_count] [dC]\n",
                     argv[0]);
        return 2;
    }
    const std::string family = argv[1];
    const std::string out_path = argv[2];
    const double dC = (argc > 5) ? std::atof(argv[5]) : 1.75e-4;
    const int half = (argc > 4) ? std::atoi(argv[4]) : 7;

    Catalog cat;
    if (family == "lyapunov") {
        const double center = (argc > 3) ? std::atof(argv[3]) : 2.75018;
        const auto fam = walk_lyapunov_family(center - (half + 1) * dC);
        std::printf("family walk: %zu members, C span [%.6f, %.6f]\n", fam.size(),
                    fam.back().jacobi, fam.front().jacobi);
        int idx = 0;
        for (int k = -half; k <= half; ++k, ++idx) {
            const double c_t = center + k * dC;
            PlanarOrbit o;
            if (!lyapunov_at_c(*nearest_by_c(fam, c_t), c_t, o)) {
                std::fprintf(stderr, "failed to land on C=%.9f\n", c_t);
                return 1;
            }
            UpoRecord r;
            char id[64];
            std::snprintf(id, sizeof(id), "lyap_l1_%02d", idx);
            r.id = id;
            r.family = Family::Lyapunov;
            r.initial_state = planar_state(o.x0, o.vy0);
            r.period = o.period;
            r.jacobi = o.jacobi;
            cat.records.push_back(r);
            std::printf("%s: C=%.9f T=%.9f x0=%.9f lambda_u=%.4f\n", id, o.jacobi,
                        o.period, o.x0, unstable_multiplier(r.initial_state, o.period));
        }
    } else if (family == "halo") {
        g_rel_tol = 1e-12;
        g_res_tol = 5e-12;
        const double center = (argc > 3) ? std::atof(argv[3]) : 1.7979;
        const auto fam = walk_halo_family(center - (half + 1) * dC);
        std::printf("family walk: %zu members, C span [%.6f, %.6f]\n", fam.size(),
                    fam.back().jacobi, fam.front().jacobi);
        int idx = 0;
        for (int k = -half; k <= half; ++k, ++idx) {
            const double c_t = center + k * dC;
            SpatialOrbit o;
            if (!halo_at_c(*nearest_by_c(fam, c_t), c_t, o)) {
                std::fprintf(stderr, "failed to land on C=%.9f\n", c_t);
                return 1;
            }
            UpoRecord r;
            char id[64];
            std::snprintf(id, sizeof(id), "halo_l1_%02d", idx);
            r.id = id;
            r.family = Family::Halo;
            r.initial_state = spatial_state(o.x0, o.z0, o.vy0);
            r.period = o.period;
            r.jacobi = o.jacobi;
            cat.records.push_back(r);
            std::printf("%s: C=%.9f T=%.9f z0=%.9f lambda_u=%.4f\n", id, o.jacobi,
                        o.period, o.z0, unstable_multiplier(r.initial_state, o.period));
        }
    } else {
        std::fprintf(stderr, "unknown family '%s'\n", family.c_str());
        return 2;
    }

    save_catalog(cat, out_path);
    std::printf("wrote %zu records to %s\n", cat.records.size(), out_path.c_str());
    return 0;
}
