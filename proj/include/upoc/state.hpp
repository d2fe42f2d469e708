#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace upoc {

using Vector3d = Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix3d = Eigen::Matrix3d;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Rotating-frame state of the massless particle, nondimensional units.
// Component order everywhere in this library: x, y, z, vx, vy, vz.
struct StateVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double vz = 0.0;

    double operator[](int i) const { return (&x)[i]; }
    double& operator[](int i) { return (&x)[i]; }

    Vector6d vec() const {
        Vector6d v;
        v << x, y, z, vx, vy, vz;
        return v;
    }
    static StateVector from_vec(const Vector6d& v) {
        return StateVector{v[0], v[1], v[2], v[3], v[4], v[5]};
    }
    Vector3d position() const { return Vector3d(x, y, z); }
    Vector3d velocity() const { return Vector3d(vx, vy, vz); }
};

// Mass ratio and unit conversions for a circular restricted three-body system.
struct SystemParams {
    double mu;              // mass ratio m2 / (m1 + m2)
    double length_unit_km;  // one distance unit in km
    double time_unit_s;     // one time unit in seconds

    // Earth-Moon system used throughout the experiments.
    static SystemParams earth_moon() {
        return SystemParams{1.215059e-2, 389703.0, 382981.0};
    }

    // Nondimensional velocity (LU/TU) to m/s.
    double velocity_to_si(double v) const {
        return v * length_unit_km * 1000.0 / time_unit_s;
    }
};

// Thrown when a trajectory approaches one of the primaries closer than the
// configured floor and the force evaluation is no longer trustworthy.
struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace upoc
