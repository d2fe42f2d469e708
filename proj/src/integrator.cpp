#include "upoc/integrator.hpp"

#include <algorithm>
#include <cmath>

namespace upoc {

namespace {

// Prince-Dormand 8(7) pair, 13 stages.  The 8th-order weights advance the
// solution; the difference against the embedded 7th-order weights drives the
// step controller.
namespace rk87 {
constexpr double c2 = 1.0 / 18.0;
constexpr double c3 = 1.0 / 12.0;
constexpr double c4 = 1.0 / 8.0;
constexpr double c5 = 5.0 / 16.0;
constexpr double c6 = 3.0 / 8.0;
constexpr double c7 = 59.0 / 400.0;
constexpr double c8 = 93.0 / 200.0;
constexpr double c9 = 5490023248.0 / 9719169821.0;
constexpr double c10 = 13.0 / 20.0;
constexpr double c11 = 1201146811.0 / 1299019798.0;
constexpr double c12 = 1.0;
constexpr double c13 = 1.0;

constexpr double a21 = 1.0 / 18.0;
constexpr double a31 = 1.0 / 48.0;
constexpr double a32 = 1.0 / 16.0;
constexpr double a41 = 1.0 / 32.0;
constexpr double a43 = 3.0 / 32.0;
constexpr double a51 = 5.0 / 16.0;
constexpr double a53 = -75.0 / 64.0;
constexpr double a54 = 75.0 / 64.0;
constexpr double a61 = 3.0 / 80.0;
constexpr double a64 = 3.0 / 16.0;
constexpr double a65 = 3.0 / 20.0;
constexpr double a71 = 29443841.0 / 614563906.0;
constexpr double a74 = 77736538.0 / 692538347.0;
constexpr double a75 = -28693883.0 / 1125000000.0;
constexpr double a76 = 23124283.0 / 1800000000.0;
constexpr double a81 = 16016141.0 / 946692911.0;
constexpr double a84 = 61564180.0 / 158732637.0;
constexpr double a85 = 22789713.0 / 633445777.0;
constexpr double a86 = 545815736.0 / 2771057229.0;
constexpr double a87 = -180193667.0 / 1043307555.0;
constexpr double a91 = 39632708.0 / 573591083.0;
constexpr double a94 = -433636366.0 / 683701615.0;
constexpr double a95 = -421739975.0 / 2616292301.0;
constexpr double a96 = 100302831.0 / 723423059.0;
constexpr double a97 = 790204164.0 / 839813087.0;
constexpr double a98 = 800635310.0 / 3783071287.0;
constexpr double a10_1 = 246121993.0 / 1340847787.0;
constexpr double a10_4 = -37695042795.0 / 15268766246.0;
constexpr double a10_5 = -309121744.0 / 1061227803.0;
constexpr double a10_6 = -12992083.0 / 490766935.0;
constexpr double a10_7 = 6005943493.0 / 2108947869.0;
constexpr double a10_8 = 393006217.0 / 1396673457.0;
constexpr double a10_9 = 123872331.0 / 1001029789.0;
constexpr double a11_1 = -1028468189.0 / 846180014.0;
constexpr double a11_4 = 8478235783.0 / 508512852.0;
constexpr double a11_5 = 1311729495.0 / 1432422823.0;
constexpr double a11_6 = -10304129995.0 / 1701304382.0;
constexpr double a11_7 = -48777925059.0 / 3047939560.0;
constexpr double a11_8 = 15336726248.0 / 1032824649.0;
constexpr double a11_9 = -45442868181.0 / 3398467696.0;
constexpr double a11_10 = 3065993473.0 / 597172653.0;
constexpr double a12_1 = 185892177.0 / 718116043.0;
constexpr double a12_4 = -3185094517.0 / 667107341.0;
constexpr double a12_5 = -477755414.0 / 1098053517.0;
constexpr double a12_6 = -703635378.0 / 230739211.0;
constexpr double a12_7 = 5731566787.0 / 1027545527.0;
constexpr double a12_8 = 5232866602.0 / 850066563.0;
constexpr double a12_9 = -4093664535.0 / 808688257.0;
constexpr double a12_10 = 3962137247.0 / 1805957418.0;
constexpr double a12_11 = 65686358.0 / 487910083.0;
constexpr double a13_1 = 403863854.0 / 491063109.0;
constexpr double a13_4 = -5068492393.0 / 434740067.0;
constexpr double a13_5 = -411421997.0 / 543043805.0;
constexpr double a13_6 = 652783627.0 / 914296604.0;
constexpr double a13_7 = 11173962825.0 / 925320556.0;
constexpr double a13_8 = -13158990841.0 / 6184727034.0;
constexpr double a13_9 = 3936647629.0 / 1978049680.0;
constexpr double a13_10 = -160528059.0 / 685178525.0;
constexpr double a13_11 = 248638103.0 / 1413531060.0;

constexpr double b1 = 14005451.0 / 335480064.0;
constexpr double b6 = -59238493.0 / 1068277825.0;
constexpr double b7 = 181606767.0 / 758867731.0;
constexpr double b8 = 561292985.0 / 797845732.0;
constexpr double b9 = -1041891430.0 / 1371343529.0;
constexpr double b10 = 760417239.0 / 1151165299.0;
constexpr double b11 = 118820643.0 / 751138087.0;
constexpr double b12 = -528747749.0 / 2220607170.0;
constexpr double b13 = 1.0 / 4.0;

// Error weights: 8th-order minus embedded 7th-order coefficients.
constexpr double e1 = b1 - 13451932.0 / 455176623.0;
constexpr double e6 = b6 - -808719846.0 / 976000145.0;
constexpr double e7 = b7 - 1757004468.0 / 5645159321.0;
constexpr double e8 = b8 - 656045339.0 / 265891186.0;
constexpr double e9 = b9 - -3867574721.0 / 1518517206.0;
constexpr double e10 = b10 - 465885868.0 / 322736535.0;
constexpr double e11 = b11 - 53011238.0 / 667516719.0;
constexpr double e12 = b12 - 2.0 / 45.0;
constexpr double e13 = b13;
}  // namespace rk87

template <int N>
using VecN = Eigen::Matrix<double, N, 1>;

// One trial step.  On return y8 holds the 8th-order solution at t+h and err
// the embedded local error estimate.
template <int N, class F>
void rk_step(F& f, double t, const VecN<N>& y, double h, const VecN<N>& k1,
             VecN<N>& y8, VecN<N>& err) {
    using namespace rk87;
    VecN<N> k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12, k13, tmp;

    tmp = y + h * (a21 * k1);
    f(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a43 * k3);
    f(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a53 * k3 + a54 * k4);
    f(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a64 * k4 + a65 * k5);
    f(t + c6 * h, tmp, k6);
    tmp = y + h * (a71 * k1 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t + c7 * h, tmp, k7);
    tmp = y + h * (a81 * k1 + a84 * k4 + a85 * k5 + a86 * k6 + a87 * k7);
    f(t + c8 * h, tmp, k8);
    tmp = y + h * (a91 * k1 + a94 * k4 + a95 * k5 + a96 * k6 + a97 * k7 + a98 * k8);
    f(t + c9 * h, tmp, k9);
    tmp = y + h * (a10_1 * k1 + a10_4 * k4 + a10_5 * k5 + a10_6 * k6 + a10_7 * k7 +
                   a10_8 * k8 + a10_9 * k9);
    f(t + c10 * h, tmp, k10);
    tmp = y + h * (a11_1 * k1 + a11_4 * k4 + a11_5 * k5 + a11_6 * k6 + a11_7 * k7 +
                   a11_8 * k8 + a11_9 * k9 + a11_10 * k10);
    f(t + c11 * h, tmp, k11);
    tmp = y + h * (a12_1 * k1 + a12_4 * k4 + a12_5 * k5 + a12_6 * k6 + a12_7 * k7 +
                   a12_8 * k8 + a12_9 * k9 + a12_10 * k10 + a12_11 * k11);
    f(t + c12 * h, tmp, k12);
    tmp = y + h * (a13_1 * k1 + a13_4 * k4 + a13_5 * k5 + a13_6 * k6 + a13_7 * k7 +
                   a13_8 * k8 + a13_9 * k9 + a13_10 * k10 + a13_11 * k11);
    f(t + c13 * h, tmp, k13);

    y8 = y + h * (b1 * k1 + b6 * k6 + b7 * k7 + b8 * k8 + b9 * k9 + b10 * k10 +
                  b11 * k11 + b12 * k12 + b13 * k13);
    err = h * (e1 * k1 + e6 * k6 + e7 * k7 + e8 * k8 + e9 * k9 + e10 * k10 +
               e11 * k11 + e12 * k12 + e13 * k13);
}

// Adaptive driver.  Calls on_step(t0, y0, f0, t1, y1) after every accepted
// step; a false return stops the integration early.  abs_scale widens the
// absolute tolerance per component (nullptr = uniform).
template <int N, class F, class Cb>
VecN<N> drive(F&& f, double t0, double t1, VecN<N> y, const IntegratorConfig& cfg,
              const VecN<N>* abs_scale, Cb&& on_step) {
    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    if (span == 0.0) return y;

    double t = t0;
    double h = std::min(cfg.max_step, span);
    VecN<N> k1, y8, err;
    f(t, y, k1);

    for (long step = 0; step < cfg.max_steps; ++step) {
        bool last = false;
        if (std::abs(t1 - t) <= h) {
            h = std::abs(t1 - t);
            last = true;
        }

        rk_step<N>(f, t, y, dir * h, k1, y8, err);

        // Componentwise scaled max-norm of the embedded error estimate.
        double enorm = 0.0;
        for (int i = 0; i < N; ++i) {
            const double atol = cfg.abs_tol * (abs_scale ? (*abs_scale)[i] : 1.0);
            const double sc = atol + cfg.rel_tol * std::max(std::abs(y[i]), std::abs(y8[i]));
            enorm = std::max(enorm, std::abs(err[i]) / sc);
        }

        if (std::isfinite(enorm) && enorm <= 1.0) {
            const double tprev = t;
            const VecN<N> yprev = y;
            const VecN<N> fprev = k1;
            t = last ? t1 : t + dir * h;
            y = y8;
            if (!on_step(tprev, yprev, fprev, t, y)) return y;
            if (last) return y;
            f(t, y, k1);
            const double fac = std::clamp(0.9 * std::pow(enorm, -0.125), 0.2, 5.0);
            h = std::min(h * fac, cfg.max_step);
        } else {
            const double fac = std::isfinite(enorm)
                                   ? std::clamp(0.9 * std::pow(enorm, -0.125), 0.1, 0.9)
                                   : 0.1;
            h *= fac;
        }
        if (h < cfg.min_step) {
            throw IntegrationError("step size underflow");
        }
    }
    throw IntegrationError("step budget exhausted");
}

// State-only right-hand side adapter.
struct StateRhs {
    const SystemParams& p;
    double floor;
    void operator()(double t, const VecN<6>& y, VecN<6>& dy) const {
        dy = cr3bp_derivative(t, StateVector::from_vec(y), p, floor);
    }
};

}  // namespace

Trajectory integrate(const StateVector& s0, double t0, double t1,
                     const IntegratorConfig& cfg, const SystemParams& p) {
    Trajectory traj;
    traj.times.push_back(t0);
    traj.states.push_back(s0);
    if (t1 == t0) return traj;

    StateRhs rhs{p, cfg.singularity_floor};
    drive<6>(rhs, t0, t1, s0.vec(), cfg, nullptr,
             [&](double, const VecN<6>&, const VecN<6>&, double tb, const VecN<6>& yb) {
                 traj.times.push_back(tb);
                 traj.states.push_back(StateVector::from_vec(yb));
                 return true;
             });
    return traj;
}

StateVector integrate_to(const StateVector& s0, double t0, double t1,
                         const IntegratorConfig& cfg, const SystemParams& p) {
    if (t1 == t0) return s0;
    StateRhs rhs{p, cfg.singularity_floor};
    const VecN<6> yf = drive<6>(rhs, t0, t1, s0.vec(), cfg, nullptr,
                                [](double, const VecN<6>&, const VecN<6>&, double,
                                   const VecN<6>&) { return true; });
    return StateVector::from_vec(yf);
}

namespace {

constexpr int kEventSamples = 8;   // interior Hermite samples per step
constexpr double kEventTol = 1e-13;

bool crossing_qualifies(double sign_prev, double sign_next, int direction) {
    if (sign_prev == 0.0 || sign_next == 0.0 || sign_prev == sign_next) return false;
    if (direction > 0) return sign_next > 0.0;
    if (direction < 0) return sign_next < 0.0;
    return true;
}

// Polishes one bracketed crossing with re-integrations from the step start.
// Alternates secant estimates with bisection so both the event value and the
// bracket width converge below kEventTol.
EventCrossing refine_crossing(double step_t, const StateVector& step_y,
                              double lo, double g_lo, double hi, double g_hi,
                              const EventFn& event, const IntegratorConfig& cfg,
                              const SystemParams& p) {
    double best_t = hi;
    StateVector best_s;
    double best_g = g_hi;
    bool have_best = false;

    for (int it = 0; it < 160; ++it) {
        double trial;
        if (it % 2 == 0 && g_hi != g_lo) {
            trial = hi - g_hi * (hi - lo) / (g_hi - g_lo);
            const double margin = 0.01 * (hi - lo);
            if (!(trial > lo + margin && trial < hi - margin)) trial = 0.5 * (lo + hi);
        } else {
            trial = 0.5 * (lo + hi);
        }

        const StateVector st = integrate_to(step_y, step_t, trial, cfg, p);
        const double g = event(st);

        if (!have_best || std::abs(g) < std::abs(best_g)) {
            best_t = trial;
            best_s = st;
            best_g = g;
            have_best = true;
        }
        if ((g < 0.0) == (g_lo < 0.0)) {
            lo = trial;
            g_lo = g;
        } else {
            hi = trial;
            g_hi = g;
        }
        if (std::abs(best_g) < kEventTol && hi - lo < kEventTol) break;
    }
    return {best_t, best_s};
}

}  // namespace

std::vector<EventCrossing> integrate_to_events(
    const StateVector& s0, double t0, double t1, const EventFn& event,
    int direction, const IntegratorConfig& cfg, const SystemParams& p,
    const EventStop& stop) {
    std::vector<EventCrossing> out;
    if (t1 <= t0) return out;

    StateRhs rhs{p, cfg.singularity_floor};

    // Last nonzero event sample (sign, time, value).  A start exactly on the
    // surface leaves carried_sign at zero, so no crossing fires at t0.
    double carried_sign = 0.0;
    double carried_t = t0;
    double carried_g = 0.0;
    {
        const double g0 = event(s0);
        if (g0 != 0.0) {
            carried_sign = (g0 < 0.0) ? -1.0 : 1.0;
            carried_g = g0;
        }
    }

    drive<6>(rhs, t0, t1, s0.vec(), cfg, nullptr,
             [&](double ta, const VecN<6>& ya, const VecN<6>& fa, double tb,
                 const VecN<6>& yb) {
                 const double h = tb - ta;
                 const StateVector sa = StateVector::from_vec(ya);
                 const StateVector sb = StateVector::from_vec(yb);

                 // Event values at the step ends (exact states) and at interior
                 // Hermite-interpolated samples; the dense sweep catches
                 // multiple crossings inside a single step.
                 VecN<6> fb;
                 rhs(tb, yb, fb);
                 double tau[kEventSamples + 2];
                 double g[kEventSamples + 2];
                 tau[0] = ta;
                 g[0] = event(sa);
                 for (int j = 1; j <= kEventSamples; ++j) {
                     const double th = double(j) / (kEventSamples + 1);
                     const double h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
                     const double h10 = th * (1.0 - th) * (1.0 - th);
                     const double h01 = th * th * (3.0 - 2.0 * th);
                     const double h11 = th * th * (th - 1.0);
                     const VecN<6> yi = h00 * ya + (h10 * h) * fa + h01 * yb + (h11 * h) * fb;
                     tau[j] = ta + th * h;
                     g[j] = event(StateVector::from_vec(yi));
                 }
                 tau[kEventSamples + 1] = tb;
                 g[kEventSamples + 1] = event(sb);

                 for (int j = 0; j < kEventSamples + 2; ++j) {
                     const double s = (g[j] == 0.0) ? 0.0 : (g[j] < 0.0 ? -1.0 : 1.0);
                     if (s == 0.0) continue;  // exact zero: sign carries over
                     if (crossing_qualifies(carried_sign, s, direction)) {
                         // Root lies in (lo, tau[j]].  The bracket start is the
                         // carried sample when it belongs to this step, else the
                         // step start (whose event value is g[0]).
                         double lo, glo;
                         if (carried_t >= ta) {
                             lo = carried_t;
                             glo = carried_g;
                         } else {
                             lo = ta;
                             glo = g[0];
                         }
                         EventCrossing c;
                         if (glo == 0.0) {
                             c = {ta, sa};  // exact zero at the step boundary
                         } else {
                             c = refine_crossing(ta, sa, lo, glo, tau[j], g[j],
                                                 event, cfg, p);
                         }
                         out.push_back(c);
                         if (stop && stop(c)) return false;
                     }
                     carried_sign = s;
                     carried_t = tau[j];
                     carried_g = g[j];
                 }
                 return true;
             });
    return out;
}

StmResult propagate_with_stm(const StateVector& s0, double duration,
                             const IntegratorConfig& cfg, const SystemParams& p) {
    VecN<42> y;
    y.head<6>() = s0.vec();
    Eigen::Map<Matrix6d>(y.data() + 6).setIdentity();

    // STM entries tolerated 1e3 looser in the absolute term; they grow to
    // O(lambda_u) while the state stays O(1).
    VecN<42> scale;
    scale.head<6>().setOnes();
    scale.tail<36>().setConstant(1e3);

    auto rhs = [&p, &cfg](double t, const VecN<42>& yv, VecN<42>& dy) {
        const StateVector s = StateVector::from_vec(yv.head<6>());
        dy.head<6>() = cr3bp_derivative(t, s, p, cfg.singularity_floor);
        const Matrix6d jac = variational_jacobian(s, p, cfg.singularity_floor);
        Eigen::Map<Matrix6d>(dy.data() + 6).noalias() =
            jac * Eigen::Map<const Matrix6d>(yv.data() + 6);
    };

    const VecN<42> yf = drive<42>(rhs, 0.0, duration, y, cfg, &scale,
                                  [](double, const VecN<42>&, const VecN<42>&, double,
                                     const VecN<42>&) { return true; });

    StmResult res;
    res.final_state = StateVector::from_vec(yf.head<6>());
    res.stm = Eigen::Map<const Matrix6d>(yf.data() + 6);
    return res;
}

}  // namespace upoc
