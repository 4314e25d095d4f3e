#include "flowkit/synth.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "flowkit/util.hpp"

namespace flowkit::synth {

namespace {

using ir::FlowsheetGraph;
using ir::Stream;
using ir::StreamClass;
using ir::Unit;
using ir::UnitCatalog;

std::string normalize_name(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string expand(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{') {
            auto end = tmpl.find('}', i);
            if (end != std::string::npos) {
                std::string key = tmpl.substr(i + 1, end - i - 1);
                auto it = vars.find(key);
                if (it != vars.end()) {
                    out += it->second;
                    i = end;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
    }
    return out;
}

struct TemplateFile {
    std::map<std::string, std::string> templates;
    std::vector<std::string> prelude;
};

TemplateFile load_template_file(const std::string& path) {
    TemplateFile tf;
    auto doc = ir::json::parse(util::read_text_file(path));
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (it.key() == "prelude") {
            for (const auto& l : it.value()) tf.prelude.push_back(l.get<std::string>());
        } else if (it.value().is_string()) {
            tf.templates[it.key()] = it.value().get<std::string>();
        }
    }
    return tf;
}

std::vector<const Stream*> sorted_streams(const FlowsheetGraph& g) {
    std::vector<const Stream*> out;
    for (const auto& s : g.streams) out.push_back(&s);
    std::sort(out.begin(), out.end(),
              [](const Stream* a, const Stream* b) { return a->id < b->id; });
    return out;
}

std::vector<const Unit*> sorted_units(const FlowsheetGraph& g) {
    std::vector<const Unit*> out;
    for (const auto& u : g.units) out.push_back(&u);
    std::sort(out.begin(), out.end(), [](const Unit* a, const Unit* b) { return a->id < b->id; });
    return out;
}

/// Kahn peeling with smallest-id tie-break; when only cycle members remain the
/// smallest id is peeled so ranks stay total and deterministic.
std::map<std::string, int> unit_topo_ranks(const FlowsheetGraph& g) {
    std::map<std::string, std::set<std::string>> preds;
    for (const auto& u : g.units) preds[u.id];
    for (const auto& s : g.streams) {
        if (s.source && s.destination) preds[*s.destination].insert(*s.source);
    }
    std::map<std::string, int> rank;
    std::set<std::string> remaining;
    for (const auto& [id, _] : preds) remaining.insert(id);
    int next = 0;
    while (!remaining.empty()) {
        std::string pick;
        for (const auto& id : remaining) {
            bool ready = true;
            for (const auto& p : preds[id]) {
                if (remaining.count(p)) {
                    ready = false;
                    break;
                }
            }
            if (ready) {
                pick = id;
                break;
            }
        }
        if (pick.empty()) pick = *remaining.begin();  // cycle fallback
        rank[pick] = next++;
        remaining.erase(pick);
    }
    return rank;
}

std::string extra_string(const Stream& s, const char* key) {
    if (s.extras.contains(key) && s.extras.at(key).is_string()) {
        return s.extras.at(key).get<std::string>();
    }
    return {};
}

double spec_or(const Stream& s, const char* key, double fallback) {
    auto it = s.specs.find(key);
    return it != s.specs.end() ? it->second : fallback;
}

}  // namespace

UnresolvedComponentError::UnresolvedComponentError(const std::string& n,
                                                   std::vector<std::string> cands)
    : ir::Error("unresolved component \"" + n + "\"" +
                (cands.empty() ? std::string()
                               : " (nearest: " +
                                     [&] {
                                         std::string j;
                                         for (std::size_t i = 0; i < cands.size(); ++i) {
                                             if (i) j += ", ";
                                             j += cands[i];
                                         }
                                         return j;
                                     }() +
                                     ")")),
      name(n),
      candidates(std::move(cands)) {}

ComponentKB ComponentKB::load(const std::string& path) {
    return from_json(ir::json::parse(util::read_text_file(path)));
}

ComponentKB ComponentKB::from_json(const ir::json& doc) {
    ComponentKB kb;
    for (const auto& e : doc) {
        KbEntry entry;
        entry.canonical = e.at("canonical").get<std::string>();
        if (e.contains("synonyms")) {
            for (const auto& s : e.at("synonyms")) entry.synonyms.push_back(s.get<std::string>());
        }
        entry.formula = e.value("formula", std::string());
        kb.entries.push_back(entry);
    }
    return kb;
}

bool ComponentKB::has_canonical(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.canonical == name) return true;
    }
    return false;
}

std::vector<std::string> ComponentKB::canonicals() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.canonical);
    return out;
}

namespace {

std::optional<std::string> resolve_one(const std::string& name, const ComponentKB& kb,
                                       double fuzzy_threshold) {
    const std::string norm = normalize_name(name);
    for (const auto& e : kb.entries) {
        if (normalize_name(e.canonical) == norm) return e.canonical;
    }
    for (const auto& e : kb.entries) {
        for (const auto& syn : e.synonyms) {
            if (normalize_name(syn) == norm) return e.canonical;
        }
    }
    auto name_tokens = util::token_set(name);
    std::string best;
    double best_score = 0.0;
    for (const auto& e : kb.entries) {
        auto consider = [&](const std::string& candidate) {
            double score = util::overlap_coefficient(name_tokens, util::token_set(candidate));
            if (score > best_score) {
                best_score = score;
                best = e.canonical;
            }
        };
        consider(e.canonical);
        for (const auto& syn : e.synonyms) consider(syn);
    }
    if (!best.empty() && best_score >= fuzzy_threshold) return best;
    return std::nullopt;
}

std::vector<std::string> nearest_candidates(const std::string& name, const ComponentKB& kb) {
    auto name_tokens = util::token_set(name);
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& e : kb.entries) {
        double best = util::overlap_coefficient(name_tokens, util::token_set(e.canonical));
        for (const auto& syn : e.synonyms) {
            best = std::max(best, util::overlap_coefficient(name_tokens, util::token_set(syn)));
        }
        scored.emplace_back(best, e.canonical);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < 3; ++i) out.push_back(scored[i].second);
    return out;
}

}  // namespace

std::map<std::string, std::string> resolve_components(const std::vector<std::string>& names,
                                                      const ComponentKB& kb,
                                                      double fuzzy_threshold) {
    std::map<std::string, std::string> out;
    for (const auto& name : names) {
        auto resolved = resolve_one(name, kb, fuzzy_threshold);
        if (!resolved) {
            // One miss fails the whole call: sequential model construction
            // cannot proceed past an unknown component.
            throw UnresolvedComponentError(name, nearest_candidates(name, kb));
        }
        out[name] = *resolved;
    }
    return out;
}

std::map<std::string, std::string> resolve_components_lenient(
    const std::vector<std::string>& names, const ComponentKB& kb, double fuzzy_threshold) {
    std::map<std::string, std::string> out;
    for (const auto& name : names) {
        auto resolved = resolve_one(name, kb, fuzzy_threshold);
        out[name] = resolved ? *resolved : name;
    }
    return out;
}

std::string to_string(SectionKind k) {
    switch (k) {
        case SectionKind::Basis: return "basis";
        case SectionKind::Instantiation: return "instantiation";
        case SectionKind::Configuration: return "configuration";
        case SectionKind::Solve: return "solve";
        case SectionKind::Merged: return "merged";
    }
    return "basis";
}

Dialect Dialect::load(const std::string& dir) {
    Dialect d;
    const std::string skeleton_path = util::join_path(dir, "skeleton.txt");
    if (!util::file_exists(skeleton_path)) {
        throw UnknownDialectError(dir);
    }
    d.skeleton = util::read_text_file(skeleton_path);

    auto basis = load_template_file(util::join_path(dir, "basis.json"));
    d.basis_templates = basis.templates;
    d.basis_prelude = basis.prelude;

    auto creation = load_template_file(util::join_path(dir, "creation.json"));
    d.creation_templates = creation.templates;
    d.creation_prelude = creation.prelude;

    auto attachment = load_template_file(util::join_path(dir, "attachment.json"));
    d.attachment_templates = attachment.templates;
    d.attachment_prelude = attachment.prelude;

    auto solve_doc = ir::json::parse(util::read_text_file(util::join_path(dir, "solve.json")));
    for (const auto& l : solve_doc.at("lines")) d.solve_lines.push_back(l.get<std::string>());

    const std::string classes_path = util::join_path(dir, "classes.json");
    if (util::file_exists(classes_path)) {
        auto classes = ir::json::parse(util::read_text_file(classes_path));
        for (auto it = classes.begin(); it != classes.end(); ++it) {
            d.classes[it.key()] = it.value().get<std::string>();
        }
    }

    auto slash = dir.find_last_of("/\\");
    d.name = slash == std::string::npos ? dir : dir.substr(slash + 1);
    return d;
}

std::string Dialect::object_class(const std::string& unit_type) const {
    auto it = classes.find(unit_type);
    return it != classes.end() ? it->second : unit_type;
}

ScriptSection emit_basis(const FlowsheetGraph& graph,
                         const std::map<std::string, std::string>& component_map,
                         const Dialect& dialect) {
    ScriptSection section;
    section.kind = SectionKind::Basis;
    for (const auto& l : dialect.basis_prelude) section.lines.push_back(l);
    section.lines.push_back(
        expand(dialect.basis_templates.at("case"), {{"case", graph.case_name}}));
    section.lines.push_back(
        expand(dialect.basis_templates.at("package"), {{"package", graph.property_package}}));

    std::set<std::string> canonical;
    for (const auto& name : graph.components) {
        auto it = component_map.find(name);
        canonical.insert(it != component_map.end() ? it->second : name);
    }
    for (const auto& c : canonical) {  // std::set iterates in canonical order
        section.provenance[static_cast<int>(section.lines.size())] = "component:" + c;
        section.lines.push_back(expand(dialect.basis_templates.at("component"), {{"component", c}}));
    }
    return section;
}

ScriptSection emit_instantiation(const FlowsheetGraph& graph, const UnitCatalog& catalog,
                                 const Dialect& dialect) {
    ScriptSection section;
    section.kind = SectionKind::Instantiation;
    for (const auto& l : dialect.creation_prelude) section.lines.push_back(l);
    for (const Unit* u : sorted_units(graph)) {
        catalog.entry(u->type);  // throws UnknownUnitTypeError
        section.provenance[static_cast<int>(section.lines.size())] = u->id;
        section.lines.push_back(expand(dialect.creation_templates.at("unit"),
                                       {{"id", u->id},
                                        {"type", u->type},
                                        {"cls", dialect.object_class(u->type)}}));
    }
    for (const Stream* s : sorted_streams(graph)) {
        section.provenance[static_cast<int>(section.lines.size())] = s->id;
        section.lines.push_back(expand(dialect.creation_templates.at("stream"), {{"id", s->id}}));
    }
    return section;
}

std::string port_key(const std::string& stream_id, bool inlet_side) {
    return stream_id + (inlet_side ? ":in" : ":out");
}

std::map<std::string, std::string> assign_ports(const FlowsheetGraph& graph,
                                                const UnitCatalog& catalog,
                                                OverflowPolicy policy) {
    std::map<std::string, std::string> assignment;
    for (const Unit* u : sorted_units(graph)) {
        const auto& entry = catalog.entry(u->type);
        auto allocate = [&](const std::vector<const Stream*>& streams,
                            const std::vector<ir::PortName>& ports, bool inlet_side,
                            const char* tpl_key) {
            std::vector<const Stream*> ordered = streams;
            std::sort(ordered.begin(), ordered.end(),
                      [](const Stream* a, const Stream* b) { return a->id < b->id; });
            std::size_t cursor = 0;
            for (const Stream* s : ordered) {
                std::string override_port = extra_string(*s, tpl_key);
                if (!override_port.empty()) {
                    assignment[port_key(s->id, inlet_side)] = override_port;
                    continue;
                }
                if (cursor >= ports.size()) {
                    if (ports.empty() || policy == OverflowPolicy::Strict) {
                        throw PortExhaustedError(
                            u->id, "stream \"" + s->id + "\" has no port to attach to");
                    }
                    assignment[port_key(s->id, inlet_side)] = ports.front().name;
                    continue;
                }
                assignment[port_key(s->id, inlet_side)] = ports[cursor].name;
                if (!ports[cursor].repeatable) ++cursor;
            }
        };
        allocate(graph.inlets_of(u->id), entry.inlet_ports, true, "template_dst_port");
        allocate(graph.outlets_of(u->id), entry.outlet_ports, false, "template_src_port");
    }
    return assignment;
}

ScriptSection emit_configuration(const FlowsheetGraph& graph, const UnitCatalog& catalog,
                                 const Dialect& dialect, OverflowPolicy policy) {
    ScriptSection section;
    section.kind = SectionKind::Configuration;
    for (const auto& l : dialect.attachment_prelude) section.lines.push_back(l);

    auto ports = assign_ports(graph, catalog, policy);
    auto ranks = unit_topo_ranks(graph);

    std::vector<const Stream*> feeds, intermediates, products;
    for (const Stream* s : sorted_streams(graph)) {
        if (!s->source) {
            feeds.push_back(s);
        } else if (!s->destination) {
            products.push_back(s);
        } else {
            intermediates.push_back(s);
        }
    }
    // Cycle-closing edges go last so the construction order stays sequential.
    std::vector<const Stream*> forward, cycle_edges;
    for (const Stream* s : intermediates) {
        if (ranks[*s->source] >= ranks[*s->destination]) {
            cycle_edges.push_back(s);
        } else {
            forward.push_back(s);
        }
    }
    std::stable_sort(forward.begin(), forward.end(), [&](const Stream* a, const Stream* b) {
        int ra = ranks[*a->source];
        int rb = ranks[*b->source];
        if (ra != rb) return ra < rb;
        return a->id < b->id;
    });

    std::vector<const Stream*> ordered;
    ordered.insert(ordered.end(), feeds.begin(), feeds.end());
    ordered.insert(ordered.end(), forward.begin(), forward.end());
    ordered.insert(ordered.end(), cycle_edges.begin(), cycle_edges.end());
    ordered.insert(ordered.end(), products.begin(), products.end());

    auto emit_attach = [&](const Stream* s) {
        if (s->source) {
            section.provenance[static_cast<int>(section.lines.size())] = s->id;
            section.lines.push_back(expand(dialect.attachment_templates.at("outlet"),
                                           {{"stream", s->id},
                                            {"unit", *s->source},
                                            {"port", ports.at(port_key(s->id, false))}}));
        }
        if (s->destination) {
            section.provenance[static_cast<int>(section.lines.size())] = s->id;
            section.lines.push_back(expand(dialect.attachment_templates.at("inlet"),
                                           {{"stream", s->id},
                                            {"unit", *s->destination},
                                            {"port", ports.at(port_key(s->id, true))}}));
        }
    };
    for (const Stream* s : ordered) emit_attach(s);

    // Feed conditions close out the section.
    for (const Stream* s : feeds) {
        std::vector<std::string> comps = s->component_hints;
        if (comps.empty()) comps = graph.components;
        double total = spec_or(*s, "molar_flow", 100.0);
        double each = comps.empty() ? 0.0 : total / static_cast<double>(comps.size());
        for (const auto& c : comps) {
            section.provenance[static_cast<int>(section.lines.size())] = s->id;
            section.lines.push_back(
                expand(dialect.attachment_templates.at("feed_component"),
                       {{"stream", s->id}, {"component", c}, {"value", util::format_number(each)}}));
        }
        section.provenance[static_cast<int>(section.lines.size())] = s->id;
        section.lines.push_back(
            expand(dialect.attachment_templates.at("feed_temperature"),
                   {{"stream", s->id},
                    {"value", util::format_number(spec_or(*s, "temperature", 298.15))}}));
        section.provenance[static_cast<int>(section.lines.size())] = s->id;
        section.lines.push_back(
            expand(dialect.attachment_templates.at("feed_pressure"),
                   {{"stream", s->id},
                    {"value", util::format_number(spec_or(*s, "pressure", 101.325))}}));
    }
    return section;
}

ScriptSection emit_solve(const Dialect& dialect) {
    ScriptSection section;
    section.kind = SectionKind::Solve;
    section.lines = dialect.solve_lines;
    return section;
}

Script assemble_script(const std::vector<ScriptSection>& sections, const Dialect& dialect) {
    const SectionKind order[] = {SectionKind::Basis, SectionKind::Instantiation,
                                 SectionKind::Configuration, SectionKind::Solve};
    std::map<SectionKind, const ScriptSection*> by_kind;
    for (const auto& s : sections) {
        if (by_kind.count(s.kind)) {
            throw DuplicateSectionError("duplicate section \"" + to_string(s.kind) + "\"");
        }
        by_kind[s.kind] = &s;
    }
    for (SectionKind k : order) {
        if (!by_kind.count(k)) {
            throw MissingSectionError("missing section \"" + to_string(k) + "\"");
        }
    }

    auto join = [](const std::vector<std::string>& lines) {
        std::string out;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i) out += "\n";
            out += lines[i];
        }
        return out;
    };

    Script script;
    script.dialect = dialect.name;
    script.sections = sections;
    script.text = expand(dialect.skeleton,
                         {{"basis", join(by_kind.at(SectionKind::Basis)->lines)},
                          {"instantiation", join(by_kind.at(SectionKind::Instantiation)->lines)},
                          {"configuration", join(by_kind.at(SectionKind::Configuration)->lines)},
                          {"solve", join(by_kind.at(SectionKind::Solve)->lines)}});
    script.checksum = util::fnv1a64_hex(script.text);
    return script;
}

Script emit_merged_script(const FlowsheetGraph& graph,
                          const std::map<std::string, std::string>& component_map,
                          const UnitCatalog& catalog, const Dialect& dialect) {
    // Single-pass emission: basis lines, then per unit a creation line, then
    // per stream creation plus both attachments. Port lookup is stateless, so
    // a unit with several fixed ports gets the first port repeatedly.
    ScriptSection merged;
    merged.kind = SectionKind::Merged;
    ScriptSection basis = emit_basis(graph, component_map, dialect);
    merged.lines = basis.lines;
    for (const auto& [idx, id] : basis.provenance) merged.provenance[idx] = id;
    for (const auto& l : dialect.creation_prelude) merged.lines.push_back(l);
    for (const auto& l : dialect.attachment_prelude) merged.lines.push_back(l);

    auto stateless_port = [&](const std::string& unit_id, bool inlet_side,
                              const Stream& s) -> std::string {
        std::string override_port =
            extra_string(s, inlet_side ? "template_dst_port" : "template_src_port");
        if (!override_port.empty()) return override_port;
        const Unit* u = graph.find_unit(unit_id);
        const auto& entry = catalog.entry(u->type);
        const auto& ports = inlet_side ? entry.inlet_ports : entry.outlet_ports;
        if (ports.empty()) {
            throw PortExhaustedError(unit_id, "no ports defined");
        }
        return ports.front().name;
    };

    for (const Unit* u : sorted_units(graph)) {
        catalog.entry(u->type);
        merged.provenance[static_cast<int>(merged.lines.size())] = u->id;
        merged.lines.push_back(expand(dialect.creation_templates.at("unit"),
                                      {{"id", u->id},
                                       {"type", u->type},
                                       {"cls", dialect.object_class(u->type)}}));
    }
    for (const Stream* s : sorted_streams(graph)) {
        merged.provenance[static_cast<int>(merged.lines.size())] = s->id;
        merged.lines.push_back(expand(dialect.creation_templates.at("stream"), {{"id", s->id}}));
        if (s->source) {
            merged.provenance[static_cast<int>(merged.lines.size())] = s->id;
            merged.lines.push_back(expand(dialect.attachment_templates.at("outlet"),
                                          {{"stream", s->id},
                                           {"unit", *s->source},
                                           {"port", stateless_port(*s->source, false, *s)}}));
        }
        if (s->destination) {
            merged.provenance[static_cast<int>(merged.lines.size())] = s->id;
            merged.lines.push_back(expand(dialect.attachment_templates.at("inlet"),
                                          {{"stream", s->id},
                                           {"unit", *s->destination},
                                           {"port", stateless_port(*s->destination, true, *s)}}));
        }
        if (!s->source) {
            std::vector<std::string> comps = s->component_hints;
            if (comps.empty()) comps = graph.components;
            double total = spec_or(*s, "molar_flow", 100.0);
            double each = comps.empty() ? 0.0 : total / static_cast<double>(comps.size());
            for (const auto& c : comps) {
                merged.provenance[static_cast<int>(merged.lines.size())] = s->id;
                merged.lines.push_back(expand(
                    dialect.attachment_templates.at("feed_component"),
                    {{"stream", s->id}, {"component", c}, {"value", util::format_number(each)}}));
            }
            merged.provenance[static_cast<int>(merged.lines.size())] = s->id;
            merged.lines.push_back(
                expand(dialect.attachment_templates.at("feed_temperature"),
                       {{"stream", s->id},
                        {"value", util::format_number(spec_or(*s, "temperature", 298.15))}}));
            merged.provenance[static_cast<int>(merged.lines.size())] = s->id;
            merged.lines.push_back(
                expand(dialect.attachment_templates.at("feed_pressure"),
                       {{"stream", s->id},
                        {"value", util::format_number(spec_or(*s, "pressure", 101.325))}}));
        }
    }

    auto join = [](const std::vector<std::string>& lines) {
        std::string out;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i) out += "\n";
            out += lines[i];
        }
        return out;
    };
    Script script;
    script.dialect = dialect.name;
    script.sections = {merged, emit_solve(dialect)};
    script.text = expand(dialect.skeleton, {{"basis", join(merged.lines)},
                                            {"instantiation", ""},
                                            {"configuration", ""},
                                            {"solve", join(dialect.solve_lines)}});
    script.checksum = util::fnv1a64_hex(script.text);
    return script;
}

namespace {

std::optional<std::string> check_refsim(const std::string& text) {
    std::set<std::string> created_units, created_streams;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto tokens = util::split_script_line(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "CREATE" && tokens.size() >= 3) {
            if (tokens[1] == "UNIT") created_units.insert(tokens[2]);
            if (tokens[1] == "STREAM") created_streams.insert(tokens[2]);
        } else if (tokens[0] == "ATTACH" && tokens.size() >= 6) {
            if (!created_streams.count(tokens[2])) return tokens[2];
            if (!created_units.count(tokens[5])) return tokens[5];
        } else if (tokens[0] == "FEED" && tokens.size() >= 3) {
            if (!created_streams.count(tokens[2])) return tokens[2];
        } else if (tokens[0] == "SPEC" && tokens.size() >= 3) {
            if (!created_units.count(tokens[2])) return tokens[2];
        }
    }
    return std::nullopt;
}

std::optional<std::string> check_object_registry(const std::string& text) {
    // Creation lines look like `objects["X"] = ...`; any other appearance of
    // objects["X"] is a use.
    std::set<std::string> defined;
    std::istringstream in(text);
    std::string line;
    const std::string needle = "objects[\"";
    while (std::getline(in, line)) {
        std::size_t pos = 0;
        std::vector<std::string> used;
        while ((pos = line.find(needle, pos)) != std::string::npos) {
            std::size_t start = pos + needle.size();
            std::size_t end = line.find('"', start);
            if (end == std::string::npos) break;
            std::string name = line.substr(start, end - start);
            std::size_t after = line.find_first_not_of(' ', line.find(']', end) + 1);
            bool is_definition =
                pos == line.find_first_not_of(' ') && after != std::string::npos &&
                line[after] == '=' && (after + 1 >= line.size() || line[after + 1] != '=');
            if (is_definition && used.empty()) {
                defined.insert(name);
            } else {
                used.push_back(name);
            }
            pos = end;
        }
        for (const auto& name : used) {
            if (!defined.count(name)) return name;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> first_connection_before_creation(const std::string& script_text,
                                                            const std::string& dialect_name) {
    if (dialect_name == "refsim") return check_refsim(script_text);
    return check_object_registry(script_text);
}

}  // namespace flowkit::synth
