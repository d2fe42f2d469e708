#pragma once

#include <string>
#include <vector>

#include "upoc/integrator.hpp"
#include "upoc/state.hpp"

namespace upoc {

enum class Family { Lyapunov, Halo, Other };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// One periodic orbit: initial state on the orbit, period, Jacobi constant.
struct UpoRecord {
    std::string id;
    Family family = Family::Other;
    StateVector initial_state;
    double period = 0.0;
    double jacobi = 0.0;
};

struct Catalog {
    std::vector<UpoRecord> records;           // sorted by jacobi ascending
    std::vector<std::string> warnings;        // per-record consistency flags

    const UpoRecord& by_id(const std::string& id) const;
};

struct CatalogError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CSV schema: id,family,x,y,z,vx,vy,vz,period,jacobi (one header line).
// Parse and validation failures throw CatalogError with the line number;
// a stored jacobi differing from the recomputed value by more than 1e-6 is
// flagged in warnings.  Records come back sorted by jacobi.
Catalog load_catalog(const std::string& path, const SystemParams& p);

// Writes the same schema with round-trip precision.
void save_catalog(const Catalog& cat, const std::string& path);

// m records centred on the target's Jacobi constant at spacing ~dC: the
// nearest entry to each level C_t +/- k*dC, half below and half above,
// excluding the target itself and duplicates.  Throws CatalogError when the
// catalog cannot span the requested levels.
std::vector<UpoRecord> select_neighbours(const Catalog& cat, const UpoRecord& target,
                                         int m, double dC);

// Position-space gap between the initial state and the state one period later.
double periodicity_residual(const UpoRecord& u, const IntegratorConfig& cfg,
                            const SystemParams& p);

}  // namespace upoc
