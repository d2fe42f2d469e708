#include "upoc/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "upoc/dynamics.hpp"

namespace upoc {

std::string family_name(Family f) {
    switch (f) {
        case Family::Lyapunov: return "lyapunov";
        case Family::Halo: return "halo";
        default: return "other";
    }
}

Family family_from_name(const std::string& name) {
    if (name == "lyapunov") return Family::Lyapunov;
    if (name == "halo") return Family::Halo;
    if (name == "other") return Family::Other;
    throw CatalogError("unknown family name: " + name);
}

const UpoRecord& Catalog::by_id(const std::string& id) const {
    for (const auto& r : records) {
        if (r.id == id) return r;
    }
    throw CatalogError("no catalog record with id: " + id);
}

namespace {

double parse_double(const std::string& tok, int line_no, const char* field) {
    try {
        size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw CatalogError("line " + std::to_string(line_no) + ": bad " +
                           field + " value '" + tok + "'");
    }
}

}  // namespace

Catalog load_catalog(const std::string& path, const SystemParams& p) {
    std::ifstream in(path);
    if (!in) throw CatalogError("cannot open catalog file: " + path);

    Catalog cat;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "id,family,x,y,z,vx,vy,vz,period,jacobi") {
                throw CatalogError("line 1: unexpected header '" + line + "'");
            }
            continue;
        }

        std::vector<std::string> tok;
        std::stringstream ss(line);
        std::string t;
        while (std::getline(ss, t, ',')) tok.push_back(t);
        if (tok.size() != 10) {
            throw CatalogError("line " + std::to_string(line_no) + ": expected 10 fields, got " +
                               std::to_string(tok.size()));
        }

        UpoRecord r;
        r.id = tok[0];
        r.family = family_from_name(tok[1]);
        for (int i = 0; i < 6; ++i) {
            r.initial_state[i] = parse_double(tok[2 + i], line_no, "state");
        }
        r.period = parse_double(tok[8], line_no, "period");
        r.jacobi = parse_double(tok[9], line_no, "jacobi");

        if (!(r.period > 0.0)) {
            throw CatalogError("line " + std::to_string(line_no) + ": period must be positive");
        }
        if (!seen_ids.insert(r.id).second) {
            throw CatalogError("line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
        }

        const double c = jacobi_constant(r.initial_state, p);
        if (std::abs(c - r.jacobi) > 1e-6) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "record %s: stored jacobi %.12g differs from recomputed %.12g",
                          r.id.c_str(), r.jacobi, c);
            cat.warnings.push_back(buf);
        }
        cat.records.push_back(r);
    }

    std::stable_sort(cat.records.begin(), cat.records.end(),
                     [](const UpoRecord& a, const UpoRecord& b) { return a.jacobi < b.jacobi; });
    return cat;
}

void save_catalog(const Catalog& cat, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CatalogError("cannot write catalog file: " + path);
    out << "id,family,x,y,z,vx,vy,vz,period,jacobi\n";
    char buf[512];
    for (const auto& r : cat.records) {
        std::snprintf(buf, sizeof(buf),
                      "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.id.c_str(), family_name(r.family).c_str(), r.initial_state.x,
                      r.initial_state.y, r.initial_state.z, r.initial_state.vx,
                      r.initial_state.vy, r.initial_state.vz, r.period, r.jacobi);
        out << buf;
    }
}

std::vector<UpoRecord> select_neighbours(const Catalog& cat, const UpoRecord& target,
                                         int m, double dC) {
    std::vector<UpoRecord> out;
    if (m <= 0) return out;
    if (cat.records.empty()) throw CatalogError("select_neighbours: empty catalog");

    const double c_min = cat.records.front().jacobi;
    const double c_max = cat.records.back().jacobi;
    const int below = m / 2;
    const int above = m - below;

    // Requested levels, low to high, keeping the selection deterministic.
    std::vector<double> levels;
    for (int k = below; k >= 1; --k) levels.push_back(target.jacobi - k * dC);
    for (int k = 1; k <= above; ++k) levels.push_back(target.jacobi + k * dC);

    std::set<std::string> chosen{target.id};
    for (double level : levels) {
        if (level < c_min - 0.5 * dC || level > c_max + 0.5 * dC) {
            char buf[200];
            std::snprintf(buf, sizeof(buf),
                          "select_neighbours: requested C=%.9g outside catalog range [%.9g, %.9g]",
                          level, c_min, c_max);
            throw CatalogError(buf);
        }
        const UpoRecord* best = nullptr;
        double best_gap = 1e300;
        for (const auto& r : cat.records) {
            if (chosen.count(r.id)) continue;
            const double gap = std::abs(r.jacobi - level);
            if (gap < best_gap) {
                best_gap = gap;
                best = &r;
            }
        }
        if (!best) continue;  // catalog exhausted by deduplication
        chosen.insert(best->id);
        out.push_back(*best);
    }
    return out;
}

double periodicity_residual(const UpoRecord& u, const IntegratorConfig& cfg,
                            const SystemParams& p) {
    const StateVector s1 = integrate_to(u.initial_state, 0.0, u.period, cfg, p);
    return (s1.position() - u.initial_state.position()).norm();
}

}  // namespace upoc
