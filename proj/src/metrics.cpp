#include "flowkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "flowkit/util.hpp"

namespace flowkit::metrics {

namespace {

using ir::FlowsheetGraph;
using ir::Stream;
using ir::Unit;

std::string normalize_type(const std::string& t) {
    std::string out;
    for (unsigned char c : t) {
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::pair<int, int> degree_signature(const FlowsheetGraph& g, const std::string& unit_id) {
    return {static_cast<int>(g.inlets_of(unit_id).size()),
            static_cast<int>(g.outlets_of(unit_id).size())};
}

FlowsheetGraph strip_synthesized(const FlowsheetGraph& g) {
    FlowsheetGraph out = g;
    std::erase_if(out.units, [](const Unit& u) { return ir::is_reserved_id(u.id); });
    std::erase_if(out.streams, [](const Stream& s) { return ir::is_reserved_id(s.id); });
    return out;
}

struct Candidate {
    double similarity;
    std::string ref_id;
    std::string ext_id;
};

std::string canonical_material(const std::string& name, const synth::ComponentKB* kb) {
    if (kb) {
        auto resolved = synth::resolve_components_lenient({name}, *kb);
        auto it = resolved.find(name);
        std::string canon = it != resolved.end() ? it->second : name;
        return normalize_type(canon);
    }
    return normalize_type(name);
}

}  // namespace

Prf f1_from_counts(const ElementCounts& c) {
    Prf out;
    if (c.tp == 0 && c.fp == 0 && c.fn == 0) {
        out.precision = out.recall = out.f1 = 1.0;
        return out;
    }
    out.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                      : 0.0;
    out.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                                   : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::vector<std::pair<std::string, std::string>> match_units(const FlowsheetGraph& reference,
                                                             const FlowsheetGraph& extracted,
                                                             double label_threshold) {
    std::vector<Candidate> candidates;
    for (const auto& r : reference.units) {
        for (const auto& e : extracted.units) {
            if (normalize_type(r.type) != normalize_type(e.type)) continue;
            auto rt = util::token_set(r.label);
            auto et = util::token_set(e.label);
            if (!rt.empty() && !et.empty()) {
                double overlap = util::overlap_coefficient(rt, et);
                if (overlap < label_threshold) continue;
                candidates.push_back({overlap, r.id, e.id});
            } else {
                if (degree_signature(reference, r.id) != degree_signature(extracted, e.id)) {
                    continue;
                }
                candidates.push_back({label_threshold, r.id, e.id});
            }
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.ref_id != b.ref_id) return a.ref_id < b.ref_id;
        return a.ext_id < b.ext_id;
    });

    std::set<std::string> used_ref, used_ext;
    std::vector<std::pair<std::string, std::string>> matching;
    for (const auto& c : candidates) {
        if (used_ref.count(c.ref_id) || used_ext.count(c.ext_id)) continue;
        used_ref.insert(c.ref_id);
        used_ext.insert(c.ext_id);
        matching.emplace_back(c.ref_id, c.ext_id);
    }
    std::sort(matching.begin(), matching.end());
    return matching;
}

ConsistencyReport score_consistency(const FlowsheetGraph& reference_in,
                                    const FlowsheetGraph& extracted_in,
                                    const MatchingOptions& options) {
    const FlowsheetGraph& reference = reference_in;
    FlowsheetGraph extracted =
        options.exclude_synthesized ? strip_synthesized(extracted_in) : extracted_in;

    ConsistencyReport report;

    // Units.
    auto unit_matching = match_units(reference, extracted, options.label_threshold);
    report.units.matching = unit_matching;
    report.units.counts.tp = static_cast<long>(unit_matching.size());
    report.units.counts.fp = static_cast<long>(extracted.units.size()) - report.units.counts.tp;
    report.units.counts.fn = static_cast<long>(reference.units.size()) - report.units.counts.tp;

    std::map<std::string, std::string> ref_to_ext;
    for (const auto& [r, e] : unit_matching) ref_to_ext[r] = e;

    // Streams: keyed by endpoints mapped through the unit matching plus class.
    auto map_endpoint = [&](const std::optional<std::string>& ep,
                            bool is_reference) -> std::optional<std::string> {
        if (!ep) return std::nullopt;
        if (!is_reference) return ep;
        auto it = ref_to_ext.find(*ep);
        if (it == ref_to_ext.end()) return std::string("\x01unmatched:") + *ep;
        return it->second;
    };
    auto stream_key = [&](const Stream& s, bool is_reference) {
        auto src = map_endpoint(s.source, is_reference);
        auto dst = map_endpoint(s.destination, is_reference);
        return (src ? *src : "\x02null") + "\x1f" + (dst ? *dst : "\x02null") + "\x1f" +
               ir::to_string(s.cls);
    };

    std::map<std::string, std::vector<std::string>> ref_streams, ext_streams;
    for (const auto& s : reference.streams) ref_streams[stream_key(s, true)].push_back(s.id);
    for (const auto& s : extracted.streams) ext_streams[stream_key(s, false)].push_back(s.id);
    for (auto& [k, v] : ref_streams) std::sort(v.begin(), v.end());
    for (auto& [k, v] : ext_streams) std::sort(v.begin(), v.end());

    long stream_tp = 0;
    for (const auto& [key, ref_ids] : ref_streams) {
        auto it = ext_streams.find(key);
        if (it == ext_streams.end()) continue;
        std::size_t n = std::min(ref_ids.size(), it->second.size());
        stream_tp += static_cast<long>(n);
        for (std::size_t i = 0; i < n; ++i) {
            report.streams.matching.emplace_back(ref_ids[i], it->second[i]);
        }
    }
    std::sort(report.streams.matching.begin(), report.streams.matching.end());
    report.streams.counts.tp = stream_tp;
    report.streams.counts.fp = static_cast<long>(extracted.streams.size()) - stream_tp;
    report.streams.counts.fn = static_cast<long>(reference.streams.size()) - stream_tp;

    // Connections: directed matched-unit pairs with multiplicity.
    auto connection_keys = [&](const FlowsheetGraph& g, bool is_reference) {
        std::map<std::string, std::vector<std::string>> keys;
        for (const auto& s : g.streams) {
            if (!s.source || !s.destination) continue;
            auto src = map_endpoint(s.source, is_reference);
            auto dst = map_endpoint(s.destination, is_reference);
            keys[*src + "\x1f" + *dst].push_back(s.id);
        }
        for (auto& [k, v] : keys) std::sort(v.begin(), v.end());
        return keys;
    };
    auto ref_conns = connection_keys(reference, true);
    auto ext_conns = connection_keys(extracted, false);
    long conn_tp = 0;
    long ref_conn_total = 0;
    long ext_conn_total = 0;
    for (const auto& [k, v] : ref_conns) ref_conn_total += static_cast<long>(v.size());
    for (const auto& [k, v] : ext_conns) ext_conn_total += static_cast<long>(v.size());
    for (const auto& [key, ref_ids] : ref_conns) {
        auto it = ext_conns.find(key);
        if (it == ext_conns.end()) continue;
        std::size_t n = std::min(ref_ids.size(), it->second.size());
        conn_tp += static_cast<long>(n);
        for (std::size_t i = 0; i < n; ++i) {
            report.connections.matching.emplace_back(ref_ids[i], it->second[i]);
        }
    }
    std::sort(report.connections.matching.begin(), report.connections.matching.end());
    report.connections.counts.tp = conn_tp;
    report.connections.counts.fp = ext_conn_total - conn_tp;
    report.connections.counts.fn = ref_conn_total - conn_tp;

    // Materials: canonical component names, set semantics.
    std::map<std::string, std::string> ref_mats, ext_mats;  // canonical -> original
    for (const auto& c : reference.components) {
        std::string canon = canonical_material(c, options.kb);
        if (!ref_mats.count(canon)) ref_mats[canon] = c;
    }
    for (const auto& c : extracted.components) {
        std::string canon = canonical_material(c, options.kb);
        if (!ext_mats.count(canon)) ext_mats[canon] = c;
    }
    long mat_tp = 0;
    for (const auto& [canon, orig] : ref_mats) {
        auto it = ext_mats.find(canon);
        if (it != ext_mats.end()) {
            ++mat_tp;
            report.materials.matching.emplace_back(orig, it->second);
        }
    }
    std::sort(report.materials.matching.begin(), report.materials.matching.end());
    report.materials.counts.tp = mat_tp;
    report.materials.counts.fp = static_cast<long>(ext_mats.size()) - mat_tp;
    report.materials.counts.fn = static_cast<long>(ref_mats.size()) - mat_tp;

    report.units.scores = f1_from_counts(report.units.counts);
    report.streams.scores = f1_from_counts(report.streams.counts);
    report.connections.scores = f1_from_counts(report.connections.counts);
    report.materials.scores = f1_from_counts(report.materials.counts);
    return report;
}

ConsistencyReport failure_report(const FlowsheetGraph& reference, const MatchingOptions& options) {
    FlowsheetGraph empty;
    empty.case_name = reference.case_name;
    empty.property_package = reference.property_package;
    return score_consistency(reference, empty, options);
}

namespace {

double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

ir::json class_to_json(const ClassScore& c) {
    ir::json out = ir::json::object();
    out["counts"] = {{"tp", c.counts.tp}, {"fp", c.counts.fp}, {"fn", c.counts.fn}};
    out["precision"] = round4(c.scores.precision);
    out["recall"] = round4(c.scores.recall);
    out["f1"] = round4(c.scores.f1);
    ir::json pairs = ir::json::array();
    for (const auto& [r, e] : c.matching) pairs.push_back({{"reference", r}, {"extracted", e}});
    out["matching"] = pairs;
    return out;
}

}  // namespace

ir::json ConsistencyReport::to_json() const {
    ir::json out = ir::json::object();
    out["units"] = class_to_json(units);
    out["streams"] = class_to_json(streams);
    out["connections"] = class_to_json(connections);
    out["materials"] = class_to_json(materials);
    return out;
}

std::string ConsistencyReport::to_text_table() const {
    std::ostringstream os;
    auto row = [&](const char* name, const ClassScore& c) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-12s %4ld %4ld %4ld   %6.4f  %6.4f  %6.4f\n", name,
                      c.counts.tp, c.counts.fp, c.counts.fn, c.scores.precision, c.scores.recall,
                      c.scores.f1);
        os << buf;
    };
    os << "class          tp   fp   fn        P       R      F1\n";
    row("units", units);
    row("streams", streams);
    row("connections", connections);
    row("materials", materials);
    return os.str();
}

}  // namespace flowkit::metrics
