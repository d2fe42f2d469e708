#include "upoc/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

namespace upoc {

namespace {

void enumerate_monomials(int remaining, int slots, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
    if (slots == 1) {
        current.push_back(remaining);
        out.push_back(current);
        current.pop_back();
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current.push_back(e);
        enumerate_monomials(remaining - e, slots - 1, current, out);
        current.pop_back();
    }
}

}  // namespace

PolyLibrary PolyLibrary::over(const std::vector<int>& vars, int degree) {
    PolyLibrary lib;
    lib.variable_indices = vars;
    lib.degree = degree;
    std::vector<int> scratch;
    for (int d = 0; d <= degree; ++d) {
        enumerate_monomials(d, int(vars.size()), scratch, lib.monomials);
    }
    return lib;
}

int PolyLibrary::linear_column(int state_index) const {
    for (size_t c = 0; c < monomials.size(); ++c) {
        int total = 0;
        int hit = -1;
        for (size_t v = 0; v < variable_indices.size(); ++v) {
            total += monomials[c][v];
            if (monomials[c][v] == 1) hit = int(v);
        }
        if (total == 1 && hit >= 0 && variable_indices[hit] == state_index) return int(c);
    }
    throw DiscoveryError("no degree-1 monomial for state index " + std::to_string(state_index));
}

std::vector<int> active_variables(const SectionDef& def, bool planar) {
    std::vector<int> vars;
    for (int i = 0; i < 6; ++i) {
        if (i == def.zero_coordinate) continue;
        if (planar && (i == 2 || i == 5)) continue;
        vars.push_back(i);
    }
    return vars;
}

std::vector<Vector6d> center_rows(const std::vector<StateVector>& rows,
                                  const StateVector& anchor) {
    std::vector<Vector6d> out;
    out.reserve(rows.size());
    const Vector6d a = anchor.vec();
    for (const auto& r : rows) out.push_back(r.vec() - a);
    return out;
}

Eigen::MatrixXd build_library(const std::vector<Vector6d>& deviations, const PolyLibrary& lib) {
    const int n = int(deviations.size());
    const int d = lib.size();
    const int k = int(lib.variable_indices.size());
    Eigen::MatrixXd theta(n, d);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) {
            double v = 1.0;
            for (int j = 0; j < k; ++j) {
                const int e = lib.monomials[c][j];
                for (int q = 0; q < e; ++q) v *= deviations[r][lib.variable_indices[j]];
            }
            theta(r, c) = v;
        }
    }
    return theta;
}

Eigen::MatrixXd stlsq(const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& Y,
                      double lambda_sparse, StlsqDiagnostics* diag) {
    if (Theta.rows() != Y.rows()) throw DiscoveryError("stlsq: row count mismatch");
    if (!(lambda_sparse > 0.0)) throw DiscoveryError("stlsq: lambda_sparse must be positive");
    const int d = int(Theta.cols());
    Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(d, Y.cols());

    // Rank-revealing pivoted QR: rank-deficient fits get a basic solution
    // (non-pivot coefficients exactly zero), which keeps unidentifiable
    // library directions out of the model instead of spreading weight
    // across collinear columns.
    for (int col = 0; col < Y.cols(); ++col) {
        std::vector<int> support(d);
        for (int i = 0; i < d; ++i) support[i] = i;

        for (int round = 0; round < 100; ++round) {
            if (diag) ++diag->iterations;
            Eigen::MatrixXd sub(Theta.rows(), support.size());
            for (size_t j = 0; j < support.size(); ++j) sub.col(j) = Theta.col(support[j]);

            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
            const Eigen::VectorXd fit = qr.solve(Y.col(col));
            if (diag && qr.rank() < std::min(sub.rows(), sub.cols())) {
                diag->rank_deficient = true;
            }

            std::vector<int> kept;
            for (size_t j = 0; j < support.size(); ++j) {
                if (std::abs(fit[j]) >= lambda_sparse) kept.push_back(support[j]);
            }
            if (kept.size() == support.size()) {
                for (size_t j = 0; j < support.size(); ++j) xi(support[j], col) = fit[j];
                break;
            }
            support = kept;
            if (support.empty()) break;
        }
    }
    return xi;
}

Vector6d DiscoveredMap::map_deviation(const Vector6d& dev) const {
    const int d = library.size();
    const int k = int(library.variable_indices.size());
    Vector6d out = Vector6d::Zero();
    for (int c = 0; c < d; ++c) {
        double v = 1.0;
        for (int j = 0; j < k; ++j) {
            const int e = library.monomials[c][j];
            for (int q = 0; q < e; ++q) v *= dev[library.variable_indices[j]];
        }
        for (int o = 0; o < 6; ++o) {
            if (coefficients(c, o) != 0.0) out[o] += coefficients(c, o) * v;
        }
    }
    return out;
}

namespace {

Eigen::MatrixXd embed_outputs(const Eigen::MatrixXd& xi_active, const std::vector<int>& vars) {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(xi_active.rows(), 6);
    for (size_t j = 0; j < vars.size(); ++j) full.col(vars[j]) = xi_active.col(j);
    return full;
}

Eigen::MatrixXd active_targets(const std::vector<Vector6d>& dev2, const std::vector<int>& vars) {
    Eigen::MatrixXd y(dev2.size(), vars.size());
    for (size_t r = 0; r < dev2.size(); ++r) {
        for (size_t j = 0; j < vars.size(); ++j) y(r, j) = dev2[r][vars[j]];
    }
    return y;
}

}  // namespace

DiscoveredMap discover_map(const DatasetPair& pairs, const StateVector& anchor,
                           const PolyLibrary& lib, double lambda_sparse,
                           StlsqDiagnostics* diag) {
    if (pairs.X1.empty()) throw DiscoveryError("discover_map: empty dataset");
    const auto dev1 = center_rows(pairs.X1, anchor);
    const auto dev2 = center_rows(pairs.X2, anchor);
    const Eigen::MatrixXd theta = build_library(dev1, lib);
    const Eigen::MatrixXd y = active_targets(dev2, lib.variable_indices);

    DiscoveredMap map;
    map.library = lib;
    map.anchor = anchor;
    map.coefficients = embed_outputs(stlsq(theta, y, lambda_sparse, diag), lib.variable_indices);
    return map;
}

EnsembleResult ensemble_discover(const DatasetPair& pairs, const StateVector& anchor,
                                 const PolyLibrary& lib, const EnsembleOptions& opts) {
    if (opts.n_models < 2) throw DiscoveryError("ensemble_discover: need at least 2 models");
    if (!(opts.rho >= 0.0 && opts.rho < 1.0)) {
        throw DiscoveryError("ensemble_discover: rho must lie in [0, 1)");
    }
    const size_t n = pairs.X1.size();
    if (n == 0) throw DiscoveryError("ensemble_discover: empty dataset");

    const auto dev1 = center_rows(pairs.X1, anchor);
    const auto dev2 = center_rows(pairs.X2, anchor);
    const Eigen::MatrixXd theta = build_library(dev1, lib);
    const Eigen::MatrixXd y = active_targets(dev2, lib.variable_indices);
    const int d = lib.size();
    const int k = int(lib.variable_indices.size());

    std::mt19937_64 rng(opts.seed);
    std::vector<Eigen::MatrixXd> draws;
    draws.reserve(opts.n_models);
    Eigen::MatrixXd rows(n, theta.cols());
    Eigen::MatrixXd targets(n, k);
    for (int m = 0; m < opts.n_models; ++m) {
        for (size_t r = 0; r < n; ++r) {
            const size_t idx = size_t(rng() % n);
            rows.row(r) = theta.row(idx);
            targets.row(r) = y.row(idx);
        }
        draws.push_back(stlsq(rows, targets, opts.lambda_sparse));
    }

    EnsembleResult res;
    res.n_models = opts.n_models;
    Eigen::MatrixXd inclusion = Eigen::MatrixXd::Zero(d, k);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, k);
    Eigen::MatrixXd meansq = Eigen::MatrixXd::Zero(d, k);
    Eigen::MatrixXd median = Eigen::MatrixXd::Zero(d, k);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < k; ++j) {
            std::vector<double> nonzero;
            for (const auto& xi : draws) {
                const double v = xi(i, j);
                mean(i, j) += v;
                meansq(i, j) += v * v;
                if (v != 0.0) nonzero.push_back(v);
            }
            inclusion(i, j) = double(nonzero.size()) / opts.n_models;
            if (!nonzero.empty() && inclusion(i, j) >= opts.rho) {
                std::sort(nonzero.begin(), nonzero.end());
                const size_t h = nonzero.size() / 2;
                median(i, j) = (nonzero.size() % 2) ? nonzero[h]
                                                    : 0.5 * (nonzero[h - 1] + nonzero[h]);
            }
        }
    }
    mean /= opts.n_models;
    meansq /= opts.n_models;

    res.median_map.library = lib;
    res.median_map.anchor = anchor;
    res.median_map.coefficients = embed_outputs(median, lib.variable_indices);
    res.inclusion_probability = embed_outputs(inclusion, lib.variable_indices);
    res.variance = embed_outputs((meansq - mean.cwiseProduct(mean)).cwiseMax(0.0),
                                 lib.variable_indices);
    return res;
}

LinearizedMap linearize_at(const DiscoveredMap& map) {
    LinearizedMap lin;
    lin.anchor = map.anchor;
    lin.active = map.library.variable_indices;
    for (int in : lin.active) {
        const int col = map.library.linear_column(in);
        for (int out : lin.active) lin.A(out, in) = map.coefficients(col, out);
    }
    return lin;
}

namespace {

// Index of the unstable / neutral / stable member of a spectrum.
struct Triple {
    int unstable, neutral, stable;
};

Triple classify(const Eigen::VectorXcd& eigs) {
    Triple t{0, 0, 0};
    for (int i = 1; i < eigs.size(); ++i) {
        if (std::abs(eigs[i]) > std::abs(eigs[t.unstable])) t.unstable = i;
    }
    t.stable = (t.unstable == 0) ? 1 : 0;
    for (int i = 0; i < eigs.size(); ++i) {
        if (i == t.unstable) continue;
        if (std::abs(eigs[i]) < std::abs(eigs[t.stable])) t.stable = i;
    }
    t.neutral = -1;
    for (int i = 0; i < eigs.size(); ++i) {
        if (i == t.unstable || i == t.stable) continue;
        if (t.neutral < 0 || std::abs(eigs[i] - 1.0) < std::abs(eigs[t.neutral] - 1.0)) {
            t.neutral = i;
        }
    }
    if (t.neutral < 0) t.neutral = t.stable;  // spectra with fewer than 3 members
    return t;
}

double pair_error(std::complex<double> a, std::complex<double> b) {
    if (a.imag() != 0.0 || b.imag() != 0.0) return std::abs(std::abs(a) - std::abs(b));
    return std::abs(a.real() - b.real());
}

Eigen::VectorXcd sorted_desc(Eigen::VectorXcd v) {
    std::vector<std::complex<double>> tmp(v.data(), v.data() + v.size());
    std::stable_sort(tmp.begin(), tmp.end(), [](const auto& a, const auto& b) {
        return std::abs(a) > std::abs(b);
    });
    for (int i = 0; i < v.size(); ++i) v[i] = tmp[i];
    return v;
}

}  // namespace

MapValidation validate_map(const LinearizedMap& lin, const Matrix6d& monodromy) {
    const int k = int(lin.active.size());
    Eigen::MatrixXd a(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) a(i, j) = lin.A(lin.active[i], lin.active[j]);
    }

    MapValidation v;
    const Eigen::EigenSolver<Eigen::MatrixXd> ea(a);
    const Eigen::EigenSolver<Matrix6d> em(monodromy);
    v.eigs_A = sorted_desc(ea.eigenvalues());
    v.eigs_M = sorted_desc(em.eigenvalues());

    const Triple ta = classify(v.eigs_A);
    const Triple tm = classify(v.eigs_M);
    v.unstable_error = pair_error(v.eigs_M[tm.unstable], v.eigs_A[ta.unstable]);
    v.neutral_error = pair_error(v.eigs_M[tm.neutral], v.eigs_A[ta.neutral]);
    v.stable_error = pair_error(v.eigs_M[tm.stable], v.eigs_A[ta.stable]);
    v.total_error = v.unstable_error + v.neutral_error + v.stable_error;
    v.det_A = a.determinant();
    v.det_M = std::abs(v.eigs_M[tm.unstable]) * std::abs(v.eigs_M[tm.neutral]) *
              std::abs(v.eigs_M[tm.stable]);
    return v;
}

namespace {

using nlohmann::ordered_json;

ordered_json model_skeleton(const DiscoveredMap& map) {
    ordered_json j;
    const Vector6d a = map.anchor.vec();
    j["anchor"] = std::vector<double>(a.data(), a.data() + 6);
    j["active_variables"] = map.library.variable_indices;
    j["degree"] = map.library.degree;
    j["monomials"] = map.library.monomials;
    return j;
}

ordered_json coefficient_entry(const DiscoveredMap& map, int c, int o) {
    ordered_json e;
    e["monomial"] = c;
    e["output"] = o;
    e["value"] = map.coefficients(c, o);
    return e;
}

void write_json(const ordered_json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DiscoveryError("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace

void save_model_json(const DiscoveredMap& map, const std::string& path) {
    ordered_json j = model_skeleton(map);
    j["coefficients"] = ordered_json::array();
    for (int c = 0; c < map.coefficients.rows(); ++c) {
        for (int o = 0; o < 6; ++o) {
            if (map.coefficients(c, o) != 0.0) {
                j["coefficients"].push_back(coefficient_entry(map, c, o));
            }
        }
    }
    write_json(j, path);
}

void save_model_json(const EnsembleResult& ens, const std::string& path) {
    ordered_json j = model_skeleton(ens.median_map);
    j["n_models"] = ens.n_models;
    j["coefficients"] = ordered_json::array();
    for (int c = 0; c < ens.median_map.coefficients.rows(); ++c) {
        for (int o = 0; o < 6; ++o) {
            if (ens.median_map.coefficients(c, o) != 0.0) {
                ordered_json e = coefficient_entry(ens.median_map, c, o);
                e["inclusion_probability"] = ens.inclusion_probability(c, o);
                e["variance"] = ens.variance(c, o);
                j["coefficients"].push_back(e);
            }
        }
    }
    write_json(j, path);
}

DiscoveredMap load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DiscoveryError("cannot open model file: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DiscoveryError(std::string("bad model file: ") + e.what());
    }

    DiscoveredMap map;
    const auto anchor = j.at("anchor").get<std::vector<double>>();
    if (anchor.size() != 6) throw DiscoveryError("model anchor must have 6 components");
    Vector6d av;
    for (int i = 0; i < 6; ++i) av[i] = anchor[i];
    map.anchor = StateVector::from_vec(av);
    map.library.variable_indices = j.at("active_variables").get<std::vector<int>>();
    map.library.degree = j.at("degree").get<int>();
    map.library.monomials = j.at("monomials").get<std::vector<std::vector<int>>>();
    map.coefficients = Eigen::MatrixXd::Zero(map.library.size(), 6);
    for (const auto& e : j.at("coefficients")) {
        map.coefficients(e.at("monomial").get<int>(), e.at("output").get<int>()) =
            e.at("value").get<double>();
    }
    return map;
}

}  // namespace upoc
