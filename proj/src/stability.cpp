#include "upoc/stability.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace upoc {

MonodromyResult monodromy_at(const UpoRecord& u, const SectionDef& def,
                             const IntegratorConfig& cfg, const SystemParams& p) {
    SectionDef local = def;
    MonodromyResult r;
    try {
        calibrate_direction(local, u, cfg, p);
        r.anchor_crossing = find_anchor_crossing(local, u, cfg, p).state;
    } catch (const SectionError& e) {
        throw StabilityError(std::string("monodromy_at: ") + e.what());
    }
    // keep the restart exactly on the section (see sections contract)
    r.anchor_crossing[local.zero_coordinate] = 0.0;

    r.M = propagate_with_stm(r.anchor_crossing, u.period, cfg, p).stm;
    const Eigen::EigenSolver<Matrix6d> es(r.M);
    r.eigenvalues = es.eigenvalues();
    r.eigenvectors = es.eigenvectors();

    // descending magnitude, conjugate order preserved by the stable sort
    std::array<int, 6> order{0, 1, 2, 3, 4, 5};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(r.eigenvalues[a]) > std::abs(r.eigenvalues[b]);
    });
    const auto ev = r.eigenvalues;
    const auto evec = r.eigenvectors;
    for (int i = 0; i < 6; ++i) {
        r.eigenvalues[i] = ev[order[i]];
        r.eigenvectors.col(i) = evec.col(order[i]);
    }
    return r;
}

namespace {

Vector6d canonical_real_direction(const Eigen::Matrix<std::complex<double>, 6, 1>& v) {
    Vector6d dir = v.real();
    const double n = dir.norm();
    if (n == 0.0) throw StabilityError("eigenvector has zero real part");
    dir /= n;
    int lead = 0;
    for (int i = 1; i < 6; ++i) {
        if (std::abs(dir[i]) > std::abs(dir[lead])) lead = i;
    }
    if (dir[lead] < 0.0) dir = -dir;
    return dir;
}

}  // namespace

ManifoldDirections classify_floquet(const MonodromyResult& r) {
    int iu = 0, is = 0;
    for (int i = 1; i < 6; ++i) {
        if (std::abs(r.eigenvalues[i]) > std::abs(r.eigenvalues[iu])) iu = i;
        if (std::abs(r.eigenvalues[i]) < std::abs(r.eigenvalues[is])) is = i;
    }
    ManifoldDirections d;
    d.lambda_u = std::abs(r.eigenvalues[iu]);
    d.lambda_s = std::abs(r.eigenvalues[is]);
    if (!(d.lambda_u > 1.0 + 1e-3)) {
        throw StabilityError("classify_floquet: spectrum is not unstable");
    }
    d.nu_u = canonical_real_direction(r.eigenvectors.col(iu));
    d.nu_s = canonical_real_direction(r.eigenvectors.col(is));
    for (int i = 0; i < 6; ++i) {
        if (i != iu && i != is) d.neutral.push_back(r.eigenvalues[i]);
    }
    return d;
}

double sensitivity_norm(const MonodromyResult& r) {
    return Eigen::JacobiSVD<Matrix6d>(r.M).singularValues()(0);
}

double sensitivity_frobenius(const MonodromyResult& r) {
    return r.M.norm();
}

}  // namespace upoc
