#include "upoc/dynamics.hpp"

#include <cmath>

namespace upoc {

namespace {

// Distances to the primary (d) and secondary (r), guarded against close
// approaches where the point-mass model diverges.
struct Distances {
    double d, r;     // distances
    double d3, r3;   // inverse-cube weights d^-3, r^-3 premultiplied later
};

Distances primary_distances(const StateVector& s, const SystemParams& p,
                            double floor) {
    const double xd = s.x + p.mu;        // offset from the primary
    const double xr = s.x - 1.0 + p.mu;  // offset from the secondary
    const double y2z2 = s.y * s.y + s.z * s.z;
    const double d = std::sqrt(xd * xd + y2z2);
    const double r = std::sqrt(xr * xr + y2z2);
    if (d < floor || r < floor) {
        throw SingularityError("trajectory reached a primary (distance below floor)");
    }
    return {d, r, 1.0 / (d * d * d), 1.0 / (r * r * r)};
}

}  // namespace

Vector6d cr3bp_derivative(double /*t*/, const StateVector& s,
                          const SystemParams& p, double singularity_floor) {
    const auto [d, r, d3, r3] = primary_distances(s, p, singularity_floor);
    const double mu = p.mu;
    const double omm = 1.0 - mu;
    const double xd = s.x + mu;
    const double xr = s.x - 1.0 + mu;

    Vector6d f;
    f[0] = s.vx;
    f[1] = s.vy;
    f[2] = s.vz;
    f[3] = 2.0 * s.vy + s.x - omm * xd * d3 - mu * xr * r3;
    f[4] = -2.0 * s.vx + s.y - omm * s.y * d3 - mu * s.y * r3;
    f[5] = -omm * s.z * d3 - mu * s.z * r3;
    return f;
}

double effective_potential(const StateVector& s, const SystemParams& p,
                           double singularity_floor) {
    const auto dist = primary_distances(s, p, singularity_floor);
    return 0.5 * (s.x * s.x + s.y * s.y) + (1.0 - p.mu) / dist.d + p.mu / dist.r;
}

double jacobi_constant(const StateVector& s, const SystemParams& p,
                       double singularity_floor) {
    const double v2 = s.vx * s.vx + s.vy * s.vy + s.vz * s.vz;
    return 2.0 * effective_potential(s, p, singularity_floor) - v2;
}

Matrix6d variational_jacobian(const StateVector& s, const SystemParams& p,
                              double singularity_floor) {
    const auto [d, r, d3, r3] = primary_distances(s, p, singularity_floor);
    const double mu = p.mu;
    const double omm = 1.0 - mu;
    const double xd = s.x + mu;
    const double xr = s.x - 1.0 + mu;
    const double d5 = d3 / (d * d);
    const double r5 = r3 / (r * r);

    // Hessian of the effective potential.
    const double common = -omm * d3 - mu * r3;
    const double uxx = 1.0 + common + 3.0 * (omm * xd * xd * d5 + mu * xr * xr * r5);
    const double uyy = 1.0 + common + 3.0 * s.y * s.y * (omm * d5 + mu * r5);
    const double uzz = common + 3.0 * s.z * s.z * (omm * d5 + mu * r5);
    const double uxy = 3.0 * s.y * (omm * xd * d5 + mu * xr * r5);
    const double uxz = 3.0 * s.z * (omm * xd * d5 + mu * xr * r5);
    const double uyz = 3.0 * s.y * s.z * (omm * d5 + mu * r5);

    Matrix6d j = Matrix6d::Zero();
    j.block<3, 3>(0, 3).setIdentity();
    j(3, 0) = uxx; j(3, 1) = uxy; j(3, 2) = uxz;
    j(4, 0) = uxy; j(4, 1) = uyy; j(4, 2) = uyz;
    j(5, 0) = uxz; j(5, 1) = uyz; j(5, 2) = uzz;
    j(3, 4) = 2.0;
    j(4, 3) = -2.0;
    return j;
}

namespace {

// On-axis force balance g(x) whose roots are the collinear points.
double axis_balance(double x, double mu) {
    const double xd = x + mu;
    const double xr = x - 1.0 + mu;
    return x - (1.0 - mu) * xd / std::abs(xd * xd * xd)
             - mu * xr / std::abs(xr * xr * xr);
}

// Bisection to ~1e-9 followed by secant polishing to machine precision.
double solve_collinear(double lo, double hi, double mu) {
    double flo = axis_balance(lo, mu);
    for (int i = 0; i < 60 && hi - lo > 1e-9; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fmid = axis_balance(mid, mu);
        if ((flo < 0.0) == (fmid < 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    double a = lo, b = hi;
    double fa = axis_balance(a, mu), fb = axis_balance(b, mu);
    for (int i = 0; i < 50 && a != b && fb != fa; ++i) {
        const double c = b - fb * (b - a) / (fb - fa);
        a = b; fa = fb;
        b = c; fb = axis_balance(b, mu);
        if (fb == 0.0) break;
    }
    return b;
}

}  // namespace

std::vector<LagrangePoint> lagrange_points(const SystemParams& p) {
    const double mu = p.mu;
    const double eps = 1e-6;  // keep brackets clear of the primaries

    const double x1 = solve_collinear(-mu + eps, 1.0 - mu - eps, mu);
    const double x2 = solve_collinear(1.0 - mu + eps, 2.0, mu);
    const double x3 = solve_collinear(-2.0, -mu - eps, mu);

    std::vector<LagrangePoint> pts;
    auto add = [&](const std::string& name, double x, double y) {
        StateVector s{x, y, 0.0, 0.0, 0.0, 0.0};
        pts.push_back({name, Vector3d(x, y, 0.0), jacobi_constant(s, p)});
    };
    add("L1", x1, 0.0);
    add("L2", x2, 0.0);
    add("L3", x3, 0.0);
    const double s3 = std::sqrt(3.0) / 2.0;
    add("L4", 0.5 - mu, s3);
    add("L5", 0.5 - mu, -s3);
    return pts;
}

}  // namespace upoc
