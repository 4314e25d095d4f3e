#include "flowkit/normalize.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace flowkit::normalize {

namespace {

using ir::FlowsheetGraph;
using ir::Stream;
using ir::StreamClass;
using ir::Unit;
using ir::UnitCatalog;

std::vector<std::string> sorted_unit_ids(const FlowsheetGraph& g) {
    std::vector<std::string> ids;
    ids.reserve(g.units.size());
    for (const auto& u : g.units) ids.push_back(u.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

Stream* find_stream_mut(FlowsheetGraph& g, const std::string& id) {
    for (auto& s : g.streams) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

void apply_reroute(FlowsheetGraph& g, const Reroute& r) {
    Stream* s = find_stream_mut(g, r.stream_id);
    if (!s) return;
    if (r.source_side) {
        s->source = r.new_ref;
    } else {
        s->destination = r.new_ref;
    }
    for (const auto& [k, v] : r.set_extras) {
        s->extras[k] = v;
    }
}

struct PatternMatch {
    const ir::TemplatePattern* pattern;
    std::string core_id;
    // role -> unit id, includes "core"
    std::map<std::string, std::string> members;

    std::set<std::string> member_set() const {
        std::set<std::string> out;
        for (const auto& [role, id] : members) out.insert(id);
        return out;
    }
};

/// Resolves one pattern against a core unit. Satellites are searched along
/// anchor->satellite edges; the smallest satellite id wins ties.
std::optional<PatternMatch> try_match(const FlowsheetGraph& g, const ir::TemplatePattern& pat,
                                      const std::string& core_id) {
    PatternMatch m;
    m.pattern = &pat;
    m.core_id = core_id;
    m.members["core"] = core_id;
    for (const auto& sat : pat.satellites) {
        auto anchor_it = m.members.find(sat.anchor);
        if (anchor_it == m.members.end()) {
            if (sat.required) return std::nullopt;
            continue;
        }
        std::vector<std::string> candidates;
        for (const auto* s : g.outlets_of(anchor_it->second)) {
            if (!s->destination) continue;
            const Unit* u = g.find_unit(*s->destination);
            if (u && u->type == sat.unit_type) candidates.push_back(u->id);
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        if (candidates.empty()) {
            if (sat.required) return std::nullopt;
            continue;
        }
        m.members[sat.role] = candidates.front();
    }
    return m;
}

}  // namespace

std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::InsertUnit: return "InsertUnit";
        case ActionKind::InsertStream: return "InsertStream";
        case ActionKind::Reroute: return "Reroute";
        case ActionKind::Consolidate: return "Consolidate";
    }
    return "Unknown";
}

ir::json RewriteLog::to_json() const {
    ir::json arr = ir::json::array();
    for (const auto& e : entries) {
        ir::json obj = ir::json::object();
        obj["action"] = to_string(e.action);
        obj["pass"] = e.pass_name;
        switch (e.action) {
            case ActionKind::InsertUnit:
                obj["unit"] = {{"id", e.inserted_unit.id}, {"type", e.inserted_unit.type}};
                break;
            case ActionKind::InsertStream:
                obj["stream"] = {{"id", e.inserted_stream.id},
                                 {"source", e.inserted_stream.source
                                                ? ir::json(*e.inserted_stream.source)
                                                : ir::json(nullptr)},
                                 {"destination", e.inserted_stream.destination
                                                     ? ir::json(*e.inserted_stream.destination)
                                                     : ir::json(nullptr)}};
                break;
            case ActionKind::Reroute: {
                const auto& r = e.reroutes.front();
                obj["reroute"] = {{"stream", r.stream_id},
                                  {"side", r.source_side ? "source" : "destination"},
                                  {"old", r.old_ref ? ir::json(*r.old_ref) : ir::json(nullptr)},
                                  {"new", r.new_ref ? ir::json(*r.new_ref) : ir::json(nullptr)}};
                break;
            }
            case ActionKind::Consolidate: {
                obj["result"] = {{"id", e.inserted_unit.id}, {"type", e.inserted_unit.type}};
                obj["consumed_units"] = e.consumed_units;
                obj["deleted_streams"] = e.deleted_streams;
                ir::json rr = ir::json::array();
                for (const auto& r : e.reroutes) {
                    ir::json rj = {{"stream", r.stream_id},
                                   {"side", r.source_side ? "source" : "destination"},
                                   {"old", r.old_ref ? ir::json(*r.old_ref) : ir::json(nullptr)},
                                   {"new", r.new_ref ? ir::json(*r.new_ref) : ir::json(nullptr)}};
                    if (!r.set_extras.empty()) {
                        ir::json ex = ir::json::object();
                        for (const auto& [k, v] : r.set_extras) ex[k] = v;
                        rj["set"] = ex;
                    }
                    rr.push_back(rj);
                }
                obj["reroutes"] = rr;
                break;
            }
        }
        arr.push_back(obj);
    }
    ir::json out = ir::json::object();
    out["entries"] = arr;
    out["reports"] = reports;
    return out;
}

RewriteLog concat(RewriteLog a, RewriteLog b) {
    for (auto& e : b.entries) a.entries.push_back(std::move(e));
    for (auto& r : b.reports) a.reports.push_back(std::move(r));
    return a;
}

std::pair<FlowsheetGraph, RewriteLog> resolve_implicit_junctions(const FlowsheetGraph& graph,
                                                                 const UnitCatalog& catalog) {
    FlowsheetGraph g = graph;
    RewriteLog log;
    int mixer_counter = 0;
    int splitter_counter = 0;
    int stream_counter = 0;

    for (const std::string& uid : sorted_unit_ids(graph)) {
        const Unit* unit = g.find_unit(uid);
        if (!unit || !catalog.has(unit->type)) continue;
        const ir::PortSignature sig = catalog.entry(unit->type).signature;

        std::vector<std::string> inlet_ids;
        for (const auto* s : g.inlets_of(uid)) inlet_ids.push_back(s->id);
        std::sort(inlet_ids.begin(), inlet_ids.end());
        if (sig.inlets_over(static_cast<int>(inlet_ids.size()))) {
            Unit mixer;
            mixer.id = "MIX-AUTO-" + std::to_string(++mixer_counter);
            mixer.type = "Mixer";
            g.units.push_back(mixer);
            log.entries.push_back(
                {"resolve_implicit_junctions", ActionKind::InsertUnit, mixer, {}, {}, {}, {}});
            for (const auto& sid : inlet_ids) {
                Reroute r{sid, false, uid, mixer.id, {}};
                apply_reroute(g, r);
                log.entries.push_back({"resolve_implicit_junctions",
                                       ActionKind::Reroute,
                                       {},
                                       {},
                                       {r},
                                       {},
                                       {}});
            }
            Stream bridge;
            bridge.id = "S-AUTO-" + std::to_string(++stream_counter);
            bridge.cls = StreamClass::Intermediate;
            bridge.source = mixer.id;
            bridge.destination = uid;
            g.streams.push_back(bridge);
            log.entries.push_back(
                {"resolve_implicit_junctions", ActionKind::InsertStream, {}, bridge, {}, {}, {}});
        }

        std::vector<std::string> outlet_ids;
        for (const auto* s : g.outlets_of(uid)) outlet_ids.push_back(s->id);
        std::sort(outlet_ids.begin(), outlet_ids.end());
        if (sig.outlets_over(static_cast<int>(outlet_ids.size()))) {
            Unit splitter;
            splitter.id = "SPL-AUTO-" + std::to_string(++splitter_counter);
            splitter.type = "Splitter";
            g.units.push_back(splitter);
            log.entries.push_back(
                {"resolve_implicit_junctions", ActionKind::InsertUnit, splitter, {}, {}, {}, {}});
            for (const auto& sid : outlet_ids) {
                Reroute r{sid, true, uid, splitter.id, {}};
                apply_reroute(g, r);
                log.entries.push_back({"resolve_implicit_junctions",
                                       ActionKind::Reroute,
                                       {},
                                       {},
                                       {r},
                                       {},
                                       {}});
            }
            Stream bridge;
            bridge.id = "S-AUTO-" + std::to_string(++stream_counter);
            bridge.cls = StreamClass::Intermediate;
            bridge.source = uid;
            bridge.destination = splitter.id;
            g.streams.push_back(bridge);
            log.entries.push_back(
                {"resolve_implicit_junctions", ActionKind::InsertStream, {}, bridge, {}, {}, {}});
        }
    }
    return {std::move(g), std::move(log)};
}

std::pair<FlowsheetGraph, RewriteLog> consolidate_templates(const FlowsheetGraph& graph,
                                                            const UnitCatalog& catalog) {
    FlowsheetGraph g = graph;
    RewriteLog log;
    int template_counter = 0;

    for (const auto& pattern : catalog.template_patterns) {
        // Collect matches on the original graph state for this pattern, then
        // apply non-overlapping ones in ascending core-id order.
        std::vector<PatternMatch> matches;
        for (const std::string& uid : sorted_unit_ids(g)) {
            const Unit* u = g.find_unit(uid);
            if (!u || u->type != pattern.core_type) continue;
            if (auto m = try_match(g, pattern, uid)) matches.push_back(std::move(*m));
        }

        std::set<std::string> claimed;
        for (const auto& m : matches) {
            std::set<std::string> members = m.member_set();
            bool overlaps = std::any_of(members.begin(), members.end(), [&](const std::string& id) {
                return claimed.count(id) != 0;
            });
            if (overlaps) {
                log.reports.push_back("AmbiguousPattern: match of \"" + pattern.name +
                                      "\" at core \"" + m.core_id +
                                      "\" overlaps an earlier match; not rewritten");
                continue;
            }
            claimed.insert(members.begin(), members.end());

            LogEntry entry;
            entry.pass_name = "consolidate_templates";
            entry.action = ActionKind::Consolidate;
            entry.inserted_unit.id = "TPL-AUTO-" + std::to_string(++template_counter);
            entry.inserted_unit.type = pattern.result_type;

            std::map<std::string, std::string> role_of;  // unit id -> role
            for (const auto& [role, id] : m.members) role_of[id] = role;

            for (const auto& uid : members) entry.consumed_units.push_back(uid);
            std::sort(entry.consumed_units.begin(), entry.consumed_units.end());

            for (const auto& s : g.streams) {
                bool src_in = s.source && members.count(*s.source);
                bool dst_in = s.destination && members.count(*s.destination);
                if (src_in && dst_in) {
                    entry.deleted_streams.push_back(s.id);
                } else if (src_in) {
                    std::string role = role_of[*s.source];
                    auto it = m.pattern->outbound_ports.find(role);
                    std::string port = it != m.pattern->outbound_ports.end() ? it->second
                                                                             : "SideDraw";
                    Reroute r{s.id, true, *s.source, entry.inserted_unit.id,
                              {{"template_src_port", port}}};
                    entry.reroutes.push_back(r);
                } else if (dst_in) {
                    Reroute r{s.id, false, *s.destination, entry.inserted_unit.id,
                              {{"template_dst_port", m.pattern->inbound_port}}};
                    entry.reroutes.push_back(r);
                }
            }
            std::sort(entry.deleted_streams.begin(), entry.deleted_streams.end());

            // Apply.
            g.units.push_back(entry.inserted_unit);
            for (const auto& r : entry.reroutes) apply_reroute(g, r);
            std::erase_if(g.streams, [&](const Stream& s) {
                return std::binary_search(entry.deleted_streams.begin(),
                                          entry.deleted_streams.end(), s.id);
            });
            std::erase_if(g.units, [&](const Unit& u) { return members.count(u.id) != 0; });
            log.entries.push_back(std::move(entry));
        }
    }
    return {std::move(g), std::move(log)};
}

std::vector<std::string> default_passes() {
    // Consolidation first so junctions are never synthesized around streams
    // that template rewriting is about to delete.
    return {"consolidate_templates", "resolve_implicit_junctions"};
}

std::pair<FlowsheetGraph, RewriteLog> run_passes(const FlowsheetGraph& graph,
                                                 const UnitCatalog& catalog,
                                                 const std::vector<std::string>& pass_list) {
    FlowsheetGraph g = graph;
    RewriteLog log;
    for (const auto& name : pass_list) {
        if (name == "consolidate_templates") {
            auto [next, l] = consolidate_templates(g, catalog);
            g = std::move(next);
            log = concat(std::move(log), std::move(l));
        } else if (name == "resolve_implicit_junctions") {
            auto [next, l] = resolve_implicit_junctions(g, catalog);
            g = std::move(next);
            log = concat(std::move(log), std::move(l));
        } else {
            throw UnknownPassError(name);
        }
    }
    return {std::move(g), std::move(log)};
}

std::pair<FlowsheetGraph, RewriteLog> run_passes(const FlowsheetGraph& graph,
                                                 const UnitCatalog& catalog) {
    return run_passes(graph, catalog, default_passes());
}

ir::FlowsheetGraph replay(const ir::FlowsheetGraph& graph, const RewriteLog& log) {
    FlowsheetGraph g = graph;
    for (const auto& e : log.entries) {
        switch (e.action) {
            case ActionKind::InsertUnit:
                g.units.push_back(e.inserted_unit);
                break;
            case ActionKind::InsertStream:
                g.streams.push_back(e.inserted_stream);
                break;
            case ActionKind::Reroute:
                for (const auto& r : e.reroutes) apply_reroute(g, r);
                break;
            case ActionKind::Consolidate: {
                g.units.push_back(e.inserted_unit);
                for (const auto& r : e.reroutes) apply_reroute(g, r);
                std::erase_if(g.streams, [&](const Stream& s) {
                    return std::find(e.deleted_streams.begin(), e.deleted_streams.end(), s.id) !=
                           e.deleted_streams.end();
                });
                std::erase_if(g.units, [&](const Unit& u) {
                    return std::find(e.consumed_units.begin(), e.consumed_units.end(), u.id) !=
                           e.consumed_units.end();
                });
                break;
            }
        }
    }
    return g;
}

}  // namespace flowkit::normalize
