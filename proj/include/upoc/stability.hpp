#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <vector>

#include "upoc/catalog.hpp"
#include "upoc/integrator.hpp"
#include "upoc/sections.hpp"
#include "upoc/state.hpp"

namespace upoc {

struct StabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One-period state transition matrix based at a section crossing, with its
// spectrum.  The eigenvalue magnitudes multiply to 1 (volume preservation)
// and at least two sit on the unit circle.
struct MonodromyResult {
    Matrix6d M = Matrix6d::Identity();
    Eigen::Matrix<std::complex<double>, 6, 1> eigenvalues;
    Eigen::Matrix<std::complex<double>, 6, 6> eigenvectors;  // unit columns
    StateVector anchor_crossing;
};

// Propagates the orbit to its admissible crossing of def (the anchor), then
// integrates state + variational equations for exactly one period from there.
MonodromyResult monodromy_at(const UpoRecord& u, const SectionDef& def,
                             const IntegratorConfig& cfg, const SystemParams& p);

// Monodromy spectrum split into the dominant reciprocal pair and the rest.
// Magnitude classification: the halo-family unstable/stable members can show
// up as complex conjugate pairs (loss of symplectic structure at multiplier
// ~480); magnitudes stay accurate, so lambdas are magnitudes and the
// directions are renormalized real parts.  Sign convention: the component of
// largest magnitude is positive.
struct ManifoldDirections {
    Vector6d nu_u = Vector6d::Zero();  // unit vectors
    Vector6d nu_s = Vector6d::Zero();
    double lambda_u = 0.0;  // magnitudes, lambda_u > 1 > lambda_s > 0
    double lambda_s = 0.0;
    std::vector<std::complex<double>> neutral;  // remaining four eigenvalues
};

// Throws StabilityError when no eigenvalue exceeds 1 + 1e-3 in magnitude.
ManifoldDirections classify_floquet(const MonodromyResult& r);

// Induced 2-norm (largest singular value) of M: the section-sensitivity
// measure used to rank candidate sections.
double sensitivity_norm(const MonodromyResult& r);

// Frobenius norm, exposed as an alternative diagnostic.
double sensitivity_frobenius(const MonodromyResult& r);

}  // namespace upoc
