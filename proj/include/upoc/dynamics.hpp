#pragma once

#include <vector>

#include "upoc/state.hpp"

namespace upoc {

// Distance floor (in LU) below which force evaluations throw SingularityError.
constexpr double kSingularityFloor = 1e-12;

// One equilibrium of the rotating frame with the Jacobi constant of a
// particle at rest there.
struct LagrangePoint {
    std::string name;    // "L1" .. "L5"
    Vector3d position;   // rotating-frame coordinates
    double jacobi;       // C at zero velocity
};

// Time derivative of the rotating-frame state.  The equations are autonomous;
// t is accepted to fit the standard ODE signature.
Vector6d cr3bp_derivative(double t, const StateVector& s, const SystemParams& p,
                          double singularity_floor = kSingularityFloor);

// Effective potential U(x,y,z) = (x^2+y^2)/2 + (1-mu)/d + mu/r.
double effective_potential(const StateVector& s, const SystemParams& p,
                           double singularity_floor = kSingularityFloor);

// Jacobi constant C = 2U - (vx^2+vy^2+vz^2).
double jacobi_constant(const StateVector& s, const SystemParams& p,
                       double singularity_floor = kSingularityFloor);

// Jacobian of cr3bp_derivative with respect to the state; the right-hand side
// of the variational equations.
Matrix6d variational_jacobian(const StateVector& s, const SystemParams& p,
                              double singularity_floor = kSingularityFloor);

// All five equilibria, ordered L1..L5.  Collinear points are located by
// bracketed bisection refined with secant steps; the triangular points are
// analytic.
std::vector<LagrangePoint> lagrange_points(const SystemParams& p);

}  // namespace upoc
