#pragma once

// Shared builders and oracles for the test suites. The brute-force matchers
// here are independent of the library's greedy implementation on purpose.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "flowkit/ir.hpp"
#include "flowkit/util.hpp"

namespace testsupport {

namespace ir = flowkit::ir;

inline std::string source_dir() { return FLOWKIT_SOURCE_DIR; }
inline std::string data_path(const std::string& rel) {
    return flowkit::util::join_path(flowkit::util::join_path(source_dir(), "data"), rel);
}
inline std::string read_data(const std::string& rel) {
    return flowkit::util::read_text_file(data_path(rel));
}

inline ir::UnitCatalog default_catalog() {
    return ir::UnitCatalog::load(data_path("catalog/default_catalog.json"));
}

inline ir::Unit unit(const std::string& id, const std::string& type,
                     const std::string& label = "") {
    ir::Unit u;
    u.id = id;
    u.type = type;
    u.label = label;
    return u;
}

inline ir::Stream stream(const std::string& id, std::optional<std::string> source,
                         std::optional<std::string> destination, const std::string& label = "") {
    ir::Stream s;
    s.id = id;
    s.label = label;
    s.source = std::move(source);
    s.destination = std::move(destination);
    s.cls = !s.source ? ir::StreamClass::Feed
            : !s.destination ? ir::StreamClass::Product
                             : ir::StreamClass::Intermediate;
    return s;
}

inline ir::FlowsheetGraph graph(std::vector<ir::Unit> units, std::vector<ir::Stream> streams,
                                std::vector<std::string> components = {},
                                const std::string& case_name = "test-case") {
    ir::FlowsheetGraph g;
    g.case_name = case_name;
    g.property_package = "BasicNRTL";
    g.components = std::move(components);
    g.units = std::move(units);
    g.streams = std::move(streams);
    return g;
}

// ---------------------------------------------------------------------------
// Random valid graph generation.
//
// Units are wired so minimum arities are always satisfied; extra streams may
// overflow maxima (normalization's job). Labels are unique per graph so the
// greedy unit matching has a unique optimum (see the metrics test notes).
// ---------------------------------------------------------------------------

struct RandomGraphOptions {
    int min_units = 2;
    int max_units = 6;
    bool allow_overflow = true;     // sprinkle extra streams that violate max arity
    bool inject_column = false;     // sometimes add a tower+condenser+reboiler(+drum) cluster
    bool acyclic_only = false;      // conservation fixtures need DAGs
    bool conserving_types_only = false;  // executor-friendly type pool
};

inline ir::FlowsheetGraph random_valid_graph(std::mt19937& rng, const RandomGraphOptions& opt) {
    const std::vector<std::string> pool =
        opt.conserving_types_only
            ? std::vector<std::string>{"Pump", "Heater", "Cooler", "Valve", "HeatExchanger",
                                       "Tank", "Mixer", "Splitter", "Separator", "Compressor"}
            : std::vector<std::string>{"Pump", "Heater", "Cooler", "Valve", "HeatExchanger",
                                       "Tank", "Mixer", "Splitter", "Separator", "Compressor",
                                       "Reactor"};
    std::uniform_int_distribution<int> unit_count(opt.min_units, opt.max_units);
    const int n = unit_count(rng);

    std::vector<ir::Unit> units;
    for (int i = 0; i < n; ++i) {
        std::string id = "U" + std::to_string(100 + i);
        std::string type = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        units.push_back(unit(id, type, "unit " + std::to_string(100 + i)));
    }

    std::vector<ir::Stream> streams;
    int stream_counter = 0;
    auto next_stream_id = [&] { return "S" + std::to_string(100 + stream_counter++); };

    auto min_in = [&](const std::string& type) { return type == "Mixer" ? 2 : 1; };

    // Feed every unit's minimum inlets: from an earlier unit when its outlet
    // budget allows, otherwise from a fresh feed stream.
    std::map<std::string, int> out_used;
    auto max_out = [&](const std::string& type) {
        if (type == "Splitter") return 3;
        if (type == "Separator") return 2;
        return 1;
    };
    for (int i = 0; i < n; ++i) {
        const int need = min_in(units[i].type);
        for (int k = 0; k < need; ++k) {
            int donor = -1;
            if (i > 0) {
                std::uniform_int_distribution<int> pick(0, i - 1);
                for (int attempt = 0; attempt < 4; ++attempt) {
                    int cand = pick(rng);
                    if (out_used[units[cand].id] < max_out(units[cand].type)) {
                        donor = cand;
                        break;
                    }
                }
            }
            if (donor >= 0) {
                streams.push_back(stream(next_stream_id(), units[donor].id, units[i].id));
                out_used[units[donor].id]++;
            } else {
                streams.push_back(stream(next_stream_id(), std::nullopt, units[i].id));
            }
        }
    }
    // Every unit gets at least one outlet; spares become products.
    for (int i = 0; i < n; ++i) {
        if (out_used[units[i].id] == 0) {
            streams.push_back(stream(next_stream_id(), units[i].id, std::nullopt));
            out_used[units[i].id]++;
        }
    }
    // Splitters need nothing extra (min_out 1); mixers already have 2 inlets.

    if (opt.allow_overflow) {
        std::uniform_int_distribution<int> extra_count(0, 2);
        int extras = extra_count(rng);
        for (int e = 0; e < extras && n >= 2; ++e) {
            std::uniform_int_distribution<int> pick(0, n - 1);
            int a = pick(rng);
            int b = pick(rng);
            if (a == b) continue;
            if (opt.acyclic_only && b <= a) continue;
            streams.push_back(stream(next_stream_id(), units[a].id, units[b].id));
        }
    }

    if (opt.inject_column && std::uniform_int_distribution<int>(0, 2)(rng) == 0) {
        units.push_back(unit("T900", "ColumnTower", "tower 900"));
        units.push_back(unit("T901", "Condenser", "condenser 901"));
        units.push_back(unit("T902", "Reboiler", "reboiler 902"));
        bool with_drum = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        streams.push_back(stream(next_stream_id(), std::nullopt, "T900"));
        streams.push_back(stream(next_stream_id(), "T900", "T901"));
        streams.push_back(stream(next_stream_id(), "T900", "T902"));
        streams.push_back(stream(next_stream_id(), "T902", "T900"));
        streams.push_back(stream(next_stream_id(), "T902", std::nullopt));
        if (with_drum) {
            units.push_back(unit("T903", "RefluxDrum", "drum 903"));
            streams.push_back(stream(next_stream_id(), "T901", "T903"));
            streams.push_back(stream(next_stream_id(), "T903", "T900"));
            streams.push_back(stream(next_stream_id(), "T903", std::nullopt));
        } else {
            streams.push_back(stream(next_stream_id(), "T901", std::nullopt));
        }
    }

    auto g = graph(std::move(units), std::move(streams), {"H2O"});
    std::uniform_int_distribution<int> flow(5, 50);
    for (auto& s : g.streams) {
        if (!s.source) {
            s.component_hints = {"H2O"};
            s.specs["molar_flow"] = static_cast<double>(flow(rng));
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Brute-force matching oracle (metrics acceptance).
// ---------------------------------------------------------------------------

struct OracleCounts {
    long units_tp = 0;
    long streams_tp = 0;
    long connections_tp = 0;
    long materials_tp = 0;
};

// Admissible-pair predicate mirroring the matching CONTRACT (not the
// implementation): equal normalized type plus label overlap >= 0.8, or a
// degree-signature match when a label is empty.
inline bool admissible_unit_pair(const ir::FlowsheetGraph& ref, const ir::Unit& r,
                                 const ir::FlowsheetGraph& ext, const ir::Unit& e) {
    auto norm = [](const std::string& s) {
        std::string out;
        for (unsigned char c : s) {
            if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
        }
        return out;
    };
    if (norm(r.type) != norm(e.type)) return false;
    auto rt = flowkit::util::token_set(r.label);
    auto et = flowkit::util::token_set(e.label);
    if (!rt.empty() && !et.empty()) {
        return flowkit::util::overlap_coefficient(rt, et) >= 0.8;
    }
    auto deg = [](const ir::FlowsheetGraph& g, const std::string& id) {
        return std::make_pair(g.inlets_of(id).size(), g.outlets_of(id).size());
    };
    return deg(ref, r.id) == deg(ext, e.id);
}

// Exhaustive maximum-cardinality matching over admissible unit pairs, then the
// best stream/connection TP over every maximum unit matching.
inline OracleCounts brute_force_counts(const ir::FlowsheetGraph& ref,
                                       const ir::FlowsheetGraph& ext) {
    const std::size_t nr = ref.units.size();
    std::vector<std::vector<int>> adm(nr);
    for (std::size_t i = 0; i < nr; ++i) {
        for (std::size_t j = 0; j < ext.units.size(); ++j) {
            if (admissible_unit_pair(ref, ref.units[i], ext, ext.units[j])) {
                adm[i].push_back(static_cast<int>(j));
            }
        }
    }

    std::vector<std::map<std::string, std::string>> best_matchings;
    std::size_t best_size = 0;
    std::vector<int> assignment(nr, -1);
    std::set<int> used;

    std::function<void(std::size_t)> recurse = [&](std::size_t i) {
        if (i == nr) {
            std::map<std::string, std::string> m;
            for (std::size_t k = 0; k < nr; ++k) {
                if (assignment[k] >= 0) m[ref.units[k].id] = ext.units[assignment[k]].id;
            }
            if (m.size() > best_size) {
                best_size = m.size();
                best_matchings.clear();
            }
            if (m.size() == best_size) best_matchings.push_back(std::move(m));
            return;
        }
        recurse(i + 1);  // leave unmatched
        for (int j : adm[i]) {
            if (used.count(j)) continue;
            used.insert(j);
            assignment[i] = j;
            recurse(i + 1);
            assignment[i] = -1;
            used.erase(j);
        }
    };
    recurse(0);

    auto stream_and_conn_tp = [&](const std::map<std::string, std::string>& m) {
        auto key = [&](const std::optional<std::string>& src, const std::optional<std::string>& dst,
                       const std::string& cls, bool is_ref) {
            auto mapped = [&](const std::optional<std::string>& ep) -> std::string {
                if (!ep) return "<null>";
                if (!is_ref) return *ep;
                auto it = m.find(*ep);
                return it != m.end() ? it->second : "<unmatched:" + *ep + ">";
            };
            return mapped(src) + "|" + mapped(dst) + "|" + cls;
        };
        std::map<std::string, long> ref_keys, ext_keys, ref_conn, ext_conn;
        for (const auto& s : ref.streams) {
            ref_keys[key(s.source, s.destination, ir::to_string(s.cls), true)]++;
            if (s.source && s.destination) {
                ref_conn[key(s.source, s.destination, "", true)]++;
            }
        }
        for (const auto& s : ext.streams) {
            ext_keys[key(s.source, s.destination, ir::to_string(s.cls), false)]++;
            if (s.source && s.destination) {
                ext_conn[key(s.source, s.destination, "", false)]++;
            }
        }
        long stp = 0, ctp = 0;
        for (const auto& [k, n] : ref_keys) {
            auto it = ext_keys.find(k);
            if (it != ext_keys.end()) stp += std::min(n, it->second);
        }
        for (const auto& [k, n] : ref_conn) {
            auto it = ext_conn.find(k);
            if (it != ext_conn.end()) ctp += std::min(n, it->second);
        }
        return std::make_pair(stp, ctp);
    };

    OracleCounts out;
    out.units_tp = static_cast<long>(best_size);
    for (const auto& m : best_matchings) {
        auto [stp, ctp] = stream_and_conn_tp(m);
        out.streams_tp = std::max(out.streams_tp, stp);
        out.connections_tp = std::max(out.connections_tp, ctp);
    }

    std::set<std::string> ref_mats, ext_mats;
    auto norm = [](const std::string& s) {
        std::string o;
        for (unsigned char c : s) {
            if (std::isalnum(c)) o.push_back(static_cast<char>(std::tolower(c)));
        }
        return o;
    };
    for (const auto& c : ref.components) ref_mats.insert(norm(c));
    for (const auto& c : ext.components) ext_mats.insert(norm(c));
    for (const auto& c : ref_mats) {
        if (ext_mats.count(c)) out.materials_tp++;
    }
    return out;
}

}  // namespace testsupport
