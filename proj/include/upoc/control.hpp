#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "upoc/discovery.hpp"
#include "upoc/state.hpp"

namespace upoc {

struct ControlError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 6x3 projection selecting the velocity states: impulses may alter vx, vy, vz
// only. Columns are unit vectors, so R^T R = I.
Eigen::Matrix<double, 6, 3> actuation_matrix();

struct Controllability {
    Eigen::MatrixXd C;  // [B | AB | A^2 B | ... | A^(n-1) B]
    int rank = 0;
    bool full_rank = false;
};

// Rank decided by singular values above n * eps_machine * sigma_max.
Controllability controllability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Gain synthesis runs on the active block only: the zero rows/columns of the
// full 6x6 map make it structurally uncontrollable, and actuation channels
// acting on inactive coordinates (vz for a planar orbit) are dropped.
struct ReducedSystem {
    Eigen::MatrixXd A;          // n x n active block of the map
    Eigen::MatrixXd B;          // n x k block of A*R on the kept channels
    std::vector<int> active;    // active state coordinates, ascending
    std::vector<int> channels;  // kept velocity channels (0=vx, 1=vy, 2=vz)

    // Pad a k x n active gain with zeros into the full 3x6 gain.
    Eigen::Matrix<double, 3, 6> embed(const Eigen::MatrixXd& K_active) const;
    // Inverse of embed: pick the active entries out of a full gain.
    Eigen::MatrixXd extract(const Eigen::Matrix<double, 3, 6>& K_full) const;
};

ReducedSystem reduce_for_control(const LinearizedMap& lin);

struct LmiOptions {
    double radius = 1e9;      // Frobenius ball: ||Q||_F^2 + ||Y||_F^2 < radius^2
    double margin = 1e-12;    // strictness shift: both LMI blocks >= margin*I
    double rho_floor = 1e-6;  // smallest contraction rate attempted
    std::uint64_t seed = 0;   // reserved; the barrier solver is deterministic
    int max_outer = 300;      // path-following steps per feasibility solve
    int max_newton = 60;      // Newton steps per centering
};

// Independent eigenvalue check of the three LMI blocks at a candidate (Q, Y).
struct LmiCertificate {
    double q_min_eig = 0.0;     // lambda_min(Q), must be >= margin
    double lmi_min_eig = 0.0;   // lambda_min of the 2n x 2n Stein block, >= margin
    double ball_min_eig = 0.0;  // lambda_min of the ball LMI, must be > 0
    bool feasible = false;
};

struct LmiSolution {
    bool feasible = false;
    double rho = 1.0;  // certified contraction rate of the Stein block
    Eigen::MatrixXd Q;
    Eigen::MatrixXd Y;
    Eigen::MatrixXd K_active;  // Y * Q^{-1}
    Eigen::Matrix<double, 3, 6> K_full = Eigen::Matrix<double, 3, 6>::Zero();
    LmiCertificate certificate;
    double best_min_eig = 0.0;  // best margin reached (diagnostic when infeasible)
};

// Barrier-Newton feasibility for: (i) Q >= margin*I, (ii) the Stein block
// [[rho*Q, (AQ+BY)^T], [AQ+BY, rho*Q]] >= margin*I, (iii) the ball LMI
// [[radius*I, d], [d^T, radius]] > 0 over the stacked entries of (Q, Y).
// The contraction rate rho is bisected downward while feasible, so the
// returned gain drives the closed-loop spectrum as close to zero as the ball
// allows; any rho < 1 solution also satisfies the rho = 1 block. Infeasible
// problems are reported with feasible = false and the best margin achieved.
LmiSolution solve_lmi(const ReducedSystem& sys, const LmiOptions& opts);

// Recheck (i)-(iii) at rho = 1 by direct eigendecomposition of the assembled
// blocks; this is the acceptance oracle for every returned solution.
LmiCertificate verify_certificate(const ReducedSystem& sys, const Eigen::MatrixXd& Q,
                                  const Eigen::MatrixXd& Y, const LmiOptions& opts);

struct ClosedLoop {
    Matrix6d M = Matrix6d::Zero();  // A + A*R*K_full
    Eigen::Matrix<std::complex<double>, 6, 1> eigenvalues;
};

ClosedLoop closed_loop_matrix(const Matrix6d& A, const Eigen::Matrix<double, 6, 3>& R,
                              const Eigen::Matrix<double, 3, 6>& K_full);

double spectral_radius(const Eigen::MatrixXd& M);

struct MinRadiusResult {
    double radius = 0.0;            // smallest radius that solved
    double infeasible_below = 0.0;  // largest radius that failed (0 if lo solved)
    LmiSolution solution;           // the solution at .radius
};

// Log-space bisection of the feasibility threshold in the ball radius.
// lo should be infeasible and hi feasible; throws if hi fails.
MinRadiusResult find_min_radius(const ReducedSystem& sys, const LmiOptions& base, double lo,
                                double hi, double rel_tol = 0.05);

// Serialized synthesis result: the full gain plus everything needed to audit
// it (ball radius, margin, contraction rate, closed-loop spectrum, certificate).
struct GainRecord {
    Eigen::Matrix<double, 3, 6> K_full = Eigen::Matrix<double, 3, 6>::Zero();
    double radius = 0.0;
    double margin = 0.0;
    double rho = 1.0;
    std::vector<int> active;
    std::vector<int> channels;
    std::vector<std::complex<double>> closed_loop_spectrum;
    LmiCertificate certificate;
};

void save_gain_json(const GainRecord& gain, const std::string& path);
GainRecord load_gain_json(const std::string& path);

}  // namespace upoc
