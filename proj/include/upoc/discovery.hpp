#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "upoc/sections.hpp"
#include "upoc/state.hpp"

namespace upoc {

struct DiscoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Polynomial feature library over a subset of the state coordinates.
// Monomials are ordered graded-lexicographically: ascending total degree,
// and within a degree the leading variable carries the highest power first
// (constant, a, b, a^2, ab, b^2, ...).  The order is deterministic.
struct PolyLibrary {
    std::vector<int> variable_indices;        // ascending subset of {0..5}
    int degree = 5;
    std::vector<std::vector<int>> monomials;  // exponent tuples over the subset

    static PolyLibrary over(const std::vector<int>& vars, int degree);
    int size() const { return int(monomials.size()); }
    // Column holding the degree-1 monomial of the given state coordinate.
    int linear_column(int state_index) const;
};

// Library inputs and fitted outputs exclude coordinates pinned by the section
// (the zeroed coordinate, plus z and zdot for planar data).
std::vector<int> active_variables(const SectionDef& def, bool planar);

// Deviations of rows from the anchor.
std::vector<Vector6d> center_rows(const std::vector<StateVector>& rows, const StateVector& anchor);

// Feature matrix: one row per (already centred) sample, one column per
// monomial, evaluated on the library's active coordinates.
Eigen::MatrixXd build_library(const std::vector<Vector6d>& deviations, const PolyLibrary& lib);

struct StlsqDiagnostics {
    bool rank_deficient = false;  // some fit pivoted short of full column rank
    int iterations = 0;           // support-refinement rounds across outputs
};

// Sequentially thresholded least squares, independent support per output
// column.  Fits use a rank-revealing pivoted QR basic solution: non-pivot
// (unidentifiable) columns get exactly zero instead of min-norm weight
// spread, and the event is flagged in the diagnostics.
Eigen::MatrixXd stlsq(const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& Y,
                      double lambda_sparse, StlsqDiagnostics* diag = nullptr);

// Centred polynomial map X2 - anchor = Theta(X1 - anchor) Xi.
struct DiscoveredMap {
    PolyLibrary library;
    Eigen::MatrixXd coefficients;  // D x 6, inactive output columns zero
    StateVector anchor;

    // Deviation in, deviation out (full 6-component embedding).
    Vector6d map_deviation(const Vector6d& dev) const;
};

DiscoveredMap discover_map(const DatasetPair& pairs, const StateVector& anchor,
                           const PolyLibrary& lib, double lambda_sparse,
                           StlsqDiagnostics* diag = nullptr);

struct EnsembleOptions {
    double lambda_sparse = 0.02;
    int n_models = 100;
    double rho = 0.6;  // inclusion-probability threshold
    std::uint64_t seed = 0;
};

struct EnsembleResult {
    DiscoveredMap median_map;               // median over nonzero draws, rho-thresholded
    Eigen::MatrixXd inclusion_probability;  // D x 6
    Eigen::MatrixXd variance;               // D x 6, over all draws including zeros
    int n_models = 0;
};

// Bootstrap resamples of the pairs (with replacement, same size), each fitted
// by stlsq; deterministic for a fixed seed.
EnsembleResult ensemble_discover(const DatasetPair& pairs, const StateVector& anchor,
                                 const PolyLibrary& lib, const EnsembleOptions& opts);

struct LinearizedMap {
    Matrix6d A = Matrix6d::Zero();  // inactive rows/columns zero
    StateVector anchor;
    std::vector<int> active;
};

// A[i][j] = coefficient of the degree-1 monomial in variable j for output i;
// exact at the anchor since every higher monomial's gradient vanishes there.
LinearizedMap linearize_at(const DiscoveredMap& map);

// Eigenvalue comparison between the discovered linear map (active block) and
// the orbit's monodromy (full 6x6), over the classified triple: largest
// magnitude (unstable), smallest (stable), and closest to 1 (neutral).
struct MapValidation {
    Eigen::VectorXcd eigs_A;  // active block, descending magnitude
    Eigen::VectorXcd eigs_M;  // full monodromy, descending magnitude
    double unstable_error = 0.0;
    double neutral_error = 0.0;
    double stable_error = 0.0;
    double total_error = 0.0;
    double det_A = 0.0;  // determinant of the active block
    double det_M = 0.0;  // magnitude product of the classified monodromy triple
};

MapValidation validate_map(const LinearizedMap& lin, const Matrix6d& monodromy);

// JSON model export/import.  Ensemble exports add per-coefficient inclusion
// probability and variance; loading ignores them.
void save_model_json(const DiscoveredMap& map, const std::string& path);
void save_model_json(const EnsembleResult& ens, const std::string& path);
DiscoveredMap load_model_json(const std::string& path);

}  // namespace upoc
