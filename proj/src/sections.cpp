#include "upoc/sections.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "upoc/dynamics.hpp"

namespace upoc {

namespace {

constexpr double kOnSection = 1e-10;
constexpr double kL1x = 0.8369;  // region split between the Earth and Moon sides

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

SectionDef section_by_name(const std::string& name) {
    const std::string key = lower(name);
    SectionDef def;
    def.name = key;
    def.zero_coordinate = 1;  // all four sections live on y = 0
    if (key == "s1l") {
        def.region = {0, kL1x, true};
    } else if (key == "s2l") {
        def.region = {0, kL1x, false};
    } else if (key == "s1h") {
        def.region = {2, 0.0, false};
    } else if (key == "s2h") {
        def.region = {2, 0.0, true};
    } else {
        throw SectionError("unknown section name: " + name);
    }
    return def;
}

EventFn section_event(const SectionDef& def) {
    const int i = def.zero_coordinate;
    return [i](const StateVector& s) { return s[i]; };
}

bool admissible(const SectionDef& def, const StateVector& s, const SystemParams& p) {
    if (std::abs(s[def.zero_coordinate]) > kOnSection) return false;
    if (!def.region.contains(s)) return false;
    if (def.crossing_direction != 0) {
        const Vector6d f = cr3bp_derivative(0.0, s, p);
        const double rate = f[def.zero_coordinate];
        if (rate * def.crossing_direction <= 0.0) return false;
    }
    return true;
}

int calibrate_direction(SectionDef& def, const UpoRecord& upo, const IntegratorConfig& cfg,
                        const SystemParams& p) {
    const auto crossings = integrate_to_events(upo.initial_state, 0.0, 1.0001 * upo.period,
                                               section_event(def), 0, cfg, p);
    for (const auto& c : crossings) {
        if (!def.region.contains(c.state)) continue;
        const Vector6d f = cr3bp_derivative(c.t, c.state, p);
        const double rate = f[def.zero_coordinate];
        if (rate == 0.0) continue;  // tangency; keep looking
        def.crossing_direction = (rate > 0.0) ? 1 : -1;
        return def.crossing_direction;
    }
    throw SectionError("section " + def.name + ": the anchor orbit never crosses the region");
}

EventCrossing find_anchor_crossing(const SectionDef& def, const UpoRecord& upo,
                                   const IntegratorConfig& cfg, const SystemParams& p) {
    if (def.crossing_direction == 0) {
        throw SectionError("section " + def.name + ": direction not calibrated");
    }
    EventCrossing found{};
    bool have = false;
    integrate_to_events(upo.initial_state, 0.0, 1.0001 * upo.period, section_event(def),
                        def.crossing_direction, cfg, p, [&](const EventCrossing& c) {
                            if (!def.region.contains(c.state)) return false;
                            found = c;
                            have = true;
                            return true;
                        });
    if (!have) {
        throw SectionError("section " + def.name + ": no admissible crossing along the orbit");
    }
    return found;
}

std::vector<StateVector> build_augmented_ics(const std::vector<UpoRecord>& base, double delta_v,
                                             bool perturb_vz) {
    std::vector<StateVector> out;
    const int last_slot = perturb_vz ? 5 : 4;
    out.reserve(base.size() * (perturb_vz ? 7 : 5));
    for (const auto& r : base) {
        out.push_back(r.initial_state);
        if (delta_v == 0.0) continue;  // no augmentation: family states only
        for (int slot = 3; slot <= last_slot; ++slot) {
            for (double sgn : {+1.0, -1.0}) {
                StateVector s = r.initial_state;
                s[slot] += sgn * delta_v;
                out.push_back(s);
            }
        }
    }
    return out;
}

DatasetPair collect_pairs(const std::vector<StateVector>& ics, const SectionDef& def,
                          const StateVector& anchor, const AugmentationConfig& cfg,
                          const IntegratorConfig& integ, const SystemParams& p) {
    if (def.crossing_direction == 0) {
        throw SectionError("collect_pairs: section direction not calibrated");
    }
    double cap = cfg.time_cap;
    if (cap <= 0.0) cap = 4.0 * cfg.target_period;
    if (cap <= 0.0) {
        throw SectionError("collect_pairs: no time cap (set time_cap or target_period)");
    }

    DatasetPair out;
    const Vector6d anchor_v = anchor.vec();
    for (size_t k = 0; k < ics.size(); ++k) {
        std::vector<StateVector> hits;
        if (cfg.include_initial_crossing && admissible(def, ics[k], p)) {
            hits.push_back(ics[k]);
        }
        if (int(hits.size()) < cfg.crossings_per_ic) {
            integrate_to_events(ics[k], 0.0, cap, section_event(def), def.crossing_direction,
                                integ, p, [&](const EventCrossing& c) {
                                    if (!def.region.contains(c.state)) return false;
                                    hits.push_back(c.state);
                                    return int(hits.size()) >= cfg.crossings_per_ic;
                                });
        }
        if (int(hits.size()) < cfg.crossings_per_ic) {
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "ic %zu: %zu of %d crossings before time cap %.6g", k, hits.size(),
                          cfg.crossings_per_ic, cap);
            out.warnings.push_back(buf);
        }
        for (size_t j = 0; j + 1 < hits.size(); ++j) {
            const double d1 = (hits[j].vec() - anchor_v).norm();
            const double d2 = (hits[j + 1].vec() - anchor_v).norm();
            if (d1 > cfg.eta || d2 > cfg.eta) continue;
            out.X1.push_back(hits[j]);
            out.X2.push_back(hits[j + 1]);
        }
    }
    return out;
}

void save_pairs_csv(const DatasetPair& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SectionError("cannot write dataset file: " + path);
    out << "x1_x,x1_y,x1_z,x1_vx,x1_vy,x1_vz,x2_x,x2_y,x2_z,x2_vx,x2_vy,x2_vz\n";
    char buf[512];
    for (size_t i = 0; i < pairs.X1.size(); ++i) {
        const StateVector& a = pairs.X1[i];
        const StateVector& b = pairs.X2[i];
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      a.x, a.y, a.z, a.vx, a.vy, a.vz, b.x, b.y, b.z, b.vx, b.vy, b.vz);
        out << buf;
    }
}

DatasetPair load_pairs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SectionError("cannot open dataset file: " + path);
    DatasetPair out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line_no == 1) continue;
        std::stringstream ss(line);
        std::string tok;
        double v[12];
        int n = 0;
        while (std::getline(ss, tok, ',') && n < 12) {
            try {
                size_t pos = 0;
                v[n] = std::stod(tok, &pos);
                if (pos != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw SectionError("line " + std::to_string(line_no) + ": bad value '" + tok + "'");
            }
            ++n;
        }
        if (n != 12) {
            throw SectionError("line " + std::to_string(line_no) + ": expected 12 fields");
        }
        StateVector a, b;
        for (int i = 0; i < 6; ++i) a[i] = v[i];
        for (int i = 0; i < 6; ++i) b[i] = v[6 + i];
        out.X1.push_back(a);
        out.X2.push_back(b);
    }
    return out;
}

}  // namespace upoc
