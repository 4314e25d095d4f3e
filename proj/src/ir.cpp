#include "flowkit/ir.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flowkit/util.hpp"

namespace flowkit::ir {

namespace {

const char* const kReservedPrefixes[] = {"MIX-AUTO-", "SPL-AUTO-", "S-AUTO-", "TPL-AUTO-"};

const std::set<std::string> kKnownUnitKeys = {"id", "type", "label"};
const std::set<std::string> kKnownStreamKeys = {"id",          "label", "class",
                                                "source",      "destination",
                                                "component_hints", "specs"};
const std::set<std::string> kKnownTopKeys = {"case_name", "property_package", "components",
                                             "units", "streams"};

std::string type_name(const json& v) {
    if (v.is_null()) return "null";
    if (v.is_string()) return "string";
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    if (v.is_array()) return "array";
    if (v.is_object()) return "object";
    return "unknown";
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) {
        throw SchemaError("missing required field \"" + key + "\" in " + where);
    }
    return obj.at(key);
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) {
        throw SchemaError("field \"" + key + "\" in " + where + " must be a string, got " +
                          type_name(v));
    }
    return v.get<std::string>();
}

}  // namespace

std::string to_string(StreamClass c) {
    switch (c) {
        case StreamClass::Feed: return "feed";
        case StreamClass::Intermediate: return "intermediate";
        case StreamClass::Product: return "product";
    }
    return "intermediate";
}

std::optional<StreamClass> stream_class_from_string(const std::string& s) {
    if (s == "feed") return StreamClass::Feed;
    if (s == "intermediate") return StreamClass::Intermediate;
    if (s == "product") return StreamClass::Product;
    return std::nullopt;
}

const Unit* FlowsheetGraph::find_unit(const std::string& id) const {
    for (const auto& u : units) {
        if (u.id == id) return &u;
    }
    return nullptr;
}

const Stream* FlowsheetGraph::find_stream(const std::string& id) const {
    for (const auto& s : streams) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

std::vector<const Stream*> FlowsheetGraph::inlets_of(const std::string& unit_id) const {
    std::vector<const Stream*> out;
    for (const auto& s : streams) {
        if (s.destination && *s.destination == unit_id) out.push_back(&s);
    }
    return out;
}

std::vector<const Stream*> FlowsheetGraph::outlets_of(const std::string& unit_id) const {
    std::vector<const Stream*> out;
    for (const auto& s : streams) {
        if (s.source && *s.source == unit_id) out.push_back(&s);
    }
    return out;
}

const CatalogEntry& UnitCatalog::entry(const std::string& unit_type) const {
    auto it = entries.find(unit_type);
    if (it == entries.end()) {
        throw UnknownUnitTypeError(unit_type);
    }
    return it->second;
}

UnitCatalog UnitCatalog::load(const std::string& path) {
    json doc;
    try {
        doc = json::parse(util::read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw SyntaxError(std::string("catalog: ") + e.what());
    }
    return from_json(doc);
}

UnitCatalog UnitCatalog::from_json(const json& doc) {
    UnitCatalog catalog;
    const json& units = require(doc, "units", "catalog");
    for (auto it = units.begin(); it != units.end(); ++it) {
        const json& e = it.value();
        CatalogEntry entry;
        entry.signature.min_inlets = e.value("min_inlets", 1);
        entry.signature.max_inlets = e.value("max_inlets", 1);
        entry.signature.min_outlets = e.value("min_outlets", 1);
        entry.signature.max_outlets = e.value("max_outlets", 1);
        auto read_ports = [&](const char* key, std::vector<PortName>& out) {
            if (!e.contains(key)) return;
            for (const auto& p : e.at(key)) {
                PortName pn;
                pn.name = p.at("name").get<std::string>();
                pn.repeatable = p.value("repeatable", false);
                out.push_back(pn);
            }
        };
        read_ports("inlet_ports", entry.inlet_ports);
        read_ports("outlet_ports", entry.outlet_ports);
        catalog.entries[it.key()] = entry;
    }
    if (doc.contains("port_synonyms")) {
        for (auto it = doc.at("port_synonyms").begin(); it != doc.at("port_synonyms").end(); ++it) {
            catalog.port_synonyms[it.key()] = it.value().get<std::string>();
        }
    }
    if (doc.contains("template_patterns")) {
        for (const auto& p : doc.at("template_patterns")) {
            TemplatePattern pat;
            pat.name = p.at("name").get<std::string>();
            pat.core_type = p.at("core_type").get<std::string>();
            pat.result_type = p.at("result_type").get<std::string>();
            for (const auto& s : p.at("satellites")) {
                TemplateSatellite sat;
                sat.role = s.at("role").get<std::string>();
                sat.unit_type = s.at("unit_type").get<std::string>();
                sat.anchor = s.value("anchor", std::string("core"));
                sat.required = s.value("required", true);
                pat.satellites.push_back(sat);
            }
            for (auto it = p.at("outbound_ports").begin(); it != p.at("outbound_ports").end();
                 ++it) {
                pat.outbound_ports[it.key()] = it.value().get<std::string>();
            }
            pat.inbound_port = p.value("inbound_port", std::string("Feed"));
            if (!catalog.entries.count(pat.result_type)) {
                throw SchemaError("template pattern \"" + pat.name + "\" names result type \"" +
                                  pat.result_type + "\" absent from the catalog");
            }
            catalog.template_patterns.push_back(pat);
        }
    }
    return catalog;
}

PortSignature port_signature(const UnitCatalog& catalog, const std::string& unit_type) {
    return catalog.entry(unit_type).signature;
}

bool is_reserved_id(const std::string& id) {
    for (const char* prefix : kReservedPrefixes) {
        if (id.rfind(prefix, 0) == 0) return true;
    }
    return false;
}

FlowsheetGraph parse_ir(const std::string& document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw SyntaxError(e.what());
    }
    return graph_from_json(doc);
}

FlowsheetGraph graph_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw SchemaError("IR document root must be an object, got " + type_name(doc));
    }
    FlowsheetGraph g;
    g.case_name = require_string(doc, "case_name", "document");
    g.property_package = require_string(doc, "property_package", "document");

    const json& comps = require(doc, "components", "document");
    if (!comps.is_array()) {
        throw SchemaError("field \"components\" must be an array, got " + type_name(comps));
    }
    for (const auto& c : comps) {
        if (!c.is_string()) {
            throw SchemaError("components entries must be strings, got " + type_name(c));
        }
        g.components.push_back(c.get<std::string>());
    }

    const json& units = require(doc, "units", "document");
    if (!units.is_array()) {
        throw SchemaError("field \"units\" must be an array, got " + type_name(units));
    }
    for (const auto& u : units) {
        if (!u.is_object()) {
            throw SchemaError("units entries must be objects, got " + type_name(u));
        }
        Unit unit;
        unit.id = require_string(u, "id", "unit");
        unit.type = require_string(u, "type", "unit \"" + unit.id + "\"");
        unit.label = require_string(u, "label", "unit \"" + unit.id + "\"");
        for (auto it = u.begin(); it != u.end(); ++it) {
            if (!kKnownUnitKeys.count(it.key())) unit.extras[it.key()] = it.value();
        }
        g.units.push_back(std::move(unit));
    }

    const json& streams = require(doc, "streams", "document");
    if (!streams.is_array()) {
        throw SchemaError("field \"streams\" must be an array, got " + type_name(streams));
    }
    for (const auto& s : streams) {
        if (!s.is_object()) {
            throw SchemaError("streams entries must be objects, got " + type_name(s));
        }
        Stream stream;
        stream.id = require_string(s, "id", "stream");
        stream.label = require_string(s, "label", "stream \"" + stream.id + "\"");
        std::string cls = require_string(s, "class", "stream \"" + stream.id + "\"");
        auto parsed = stream_class_from_string(cls);
        if (!parsed) {
            throw SchemaError("stream \"" + stream.id + "\" has unknown class \"" + cls + "\"");
        }
        stream.cls = *parsed;
        auto endpoint = [&](const char* key) -> std::optional<std::string> {
            const json& v = require(s, key, "stream \"" + stream.id + "\"");
            if (v.is_null()) return std::nullopt;
            if (!v.is_string()) {
                throw SchemaError("stream \"" + stream.id + "\" field \"" + key +
                                  "\" must be a string or null, got " + type_name(v));
            }
            return v.get<std::string>();
        };
        stream.source = endpoint("source");
        stream.destination = endpoint("destination");
        if (s.contains("component_hints")) {
            const json& hints = s.at("component_hints");
            if (!hints.is_array()) {
                throw SchemaError("stream \"" + stream.id + "\" component_hints must be an array");
            }
            for (const auto& h : hints) stream.component_hints.push_back(h.get<std::string>());
        }
        if (s.contains("specs")) {
            const json& specs = s.at("specs");
            if (!specs.is_object()) {
                throw SchemaError("stream \"" + stream.id + "\" specs must be an object");
            }
            for (auto it = specs.begin(); it != specs.end(); ++it) {
                if (!it.value().is_number()) {
                    throw SchemaError("stream \"" + stream.id + "\" spec \"" + it.key() +
                                      "\" must be a number");
                }
                stream.specs[it.key()] = it.value().get<double>();
            }
        }
        for (auto it = s.begin(); it != s.end(); ++it) {
            if (!kKnownStreamKeys.count(it.key())) stream.extras[it.key()] = it.value();
        }
        g.streams.push_back(std::move(stream));
    }

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!kKnownTopKeys.count(it.key())) g.extras[it.key()] = it.value();
    }

    // Dangling endpoints are a hard parse error; everything else is left for
    // validate_graph so extraction defects surface as violations.
    for (const auto& s : g.streams) {
        for (const auto& ep : {s.source, s.destination}) {
            if (ep && !g.find_unit(*ep)) throw ReferenceError(*ep);
        }
    }
    return g;
}

json graph_to_json(const FlowsheetGraph& graph) {
    // nlohmann ordered_json preserves insertion order; keys are inserted
    // alphabetically so serialization is canonical by construction.
    json doc = json::object();
    doc["case_name"] = graph.case_name;
    doc["components"] = graph.components;

    auto sorted_indices = [](auto const& items) {
        std::vector<std::size_t> idx(items.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return items[a].id < items[b].id; });
        return idx;
    };

    for (auto it = graph.extras.begin(); it != graph.extras.end(); ++it) {
        doc[it.key()] = it.value();
    }
    doc["property_package"] = graph.property_package;

    json streams = json::array();
    for (std::size_t i : sorted_indices(graph.streams)) {
        const Stream& s = graph.streams[i];
        json e = json::object();
        e["class"] = to_string(s.cls);
        if (!s.component_hints.empty()) e["component_hints"] = s.component_hints;
        e["destination"] = s.destination ? json(*s.destination) : json(nullptr);
        for (auto it = s.extras.begin(); it != s.extras.end(); ++it) e[it.key()] = it.value();
        e["id"] = s.id;
        e["label"] = s.label;
        e["source"] = s.source ? json(*s.source) : json(nullptr);
        if (!s.specs.empty()) {
            json sp = json::object();
            for (const auto& [k, v] : s.specs) sp[k] = v;
            e["specs"] = sp;
        }
        // Re-sort keys: extras may interleave.
        json sorted = json::object();
        std::vector<std::string> keys;
        for (auto it = e.begin(); it != e.end(); ++it) keys.push_back(it.key());
        std::sort(keys.begin(), keys.end());
        for (const auto& k : keys) sorted[k] = e.at(k);
        streams.push_back(sorted);
    }

    json units = json::array();
    for (std::size_t i : sorted_indices(graph.units)) {
        const Unit& u = graph.units[i];
        json e = json::object();
        e["id"] = u.id;
        e["label"] = u.label;
        e["type"] = u.type;
        for (auto it = u.extras.begin(); it != u.extras.end(); ++it) e[it.key()] = it.value();
        json sorted = json::object();
        std::vector<std::string> keys;
        for (auto it = e.begin(); it != e.end(); ++it) keys.push_back(it.key());
        std::sort(keys.begin(), keys.end());
        for (const auto& k : keys) sorted[k] = e.at(k);
        units.push_back(sorted);
    }

    // Assemble with globally sorted top-level keys.
    json out = json::object();
    std::vector<std::string> top_keys;
    for (auto it = doc.begin(); it != doc.end(); ++it) top_keys.push_back(it.key());
    top_keys.push_back("streams");
    top_keys.push_back("units");
    std::sort(top_keys.begin(), top_keys.end());
    for (const auto& k : top_keys) {
        if (k == "streams") {
            out["streams"] = streams;
        } else if (k == "units") {
            out["units"] = units;
        } else {
            out[k] = doc.at(k);
        }
    }
    return out;
}

std::string canonical_serialize(const FlowsheetGraph& graph) {
    return graph_to_json(graph).dump(2) + "\n";
}

std::string to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::EmptyId: return "EmptyId";
        case ViolationKind::DuplicateId: return "DuplicateId";
        case ViolationKind::UnknownEndpoint: return "UnknownEndpoint";
        case ViolationKind::ClassMismatch: return "ClassMismatch";
        case ViolationKind::SelfLoop: return "SelfLoop";
        case ViolationKind::UnknownUnitType: return "UnknownUnitType";
        case ViolationKind::PortArity: return "PortArity";
        case ViolationKind::NonFiniteSpec: return "NonFiniteSpec";
        case ViolationKind::ReservedId: return "ReservedId";
    }
    return "Unknown";
}

json violations_to_json(const std::vector<Violation>& violations) {
    json arr = json::array();
    for (const auto& v : violations) {
        json e = json::object();
        e["element"] = v.element;
        if (v.found >= 0) e["found"] = v.found;
        e["kind"] = to_string(v.kind);
        if (v.limit >= 0) e["limit"] = v.limit;
        e["message"] = v.message;
        arr.push_back(e);
    }
    return arr;
}

std::vector<Violation> validate_graph(const FlowsheetGraph& graph, const UnitCatalog& catalog,
                                      const ValidateOptions& options) {
    std::vector<Violation> out;
    auto add = [&](ViolationKind kind, const std::string& element, const std::string& message,
                   int found = -1, int limit = -1) {
        out.push_back(Violation{kind, element, message, found, limit});
    };

    std::map<std::string, int> unit_ids;
    for (const auto& u : graph.units) {
        if (u.id.empty()) add(ViolationKind::EmptyId, u.id, "unit with empty id");
        if (++unit_ids[u.id] == 2) {
            add(ViolationKind::DuplicateId, u.id, "duplicate unit id \"" + u.id + "\"");
        }
        if (!options.allow_synthesized && is_reserved_id(u.id)) {
            add(ViolationKind::ReservedId, u.id,
                "unit id \"" + u.id + "\" uses a reserved synthesized prefix");
        }
        if (!catalog.has(u.type)) {
            add(ViolationKind::UnknownUnitType, u.id,
                "unit \"" + u.id + "\" has unknown type \"" + u.type + "\"");
        }
    }

    std::map<std::string, int> stream_ids;
    for (const auto& s : graph.streams) {
        if (s.id.empty()) add(ViolationKind::EmptyId, s.id, "stream with empty id");
        if (++stream_ids[s.id] == 2) {
            add(ViolationKind::DuplicateId, s.id, "duplicate stream id \"" + s.id + "\"");
        }
        if (!options.allow_synthesized && is_reserved_id(s.id)) {
            add(ViolationKind::ReservedId, s.id,
                "stream id \"" + s.id + "\" uses a reserved synthesized prefix");
        }
        for (const auto& ep : {s.source, s.destination}) {
            if (ep && !graph.find_unit(*ep)) {
                add(ViolationKind::UnknownEndpoint, s.id,
                    "stream \"" + s.id + "\" references unknown unit \"" + *ep + "\"");
            }
        }
        StreamClass expected = !s.source   ? StreamClass::Feed
                               : !s.destination ? StreamClass::Product
                                                : StreamClass::Intermediate;
        if (s.source && s.destination && *s.source == *s.destination) {
            add(ViolationKind::SelfLoop, s.id,
                "stream \"" + s.id + "\" is a self-loop on \"" + *s.source + "\"");
        }
        if (s.cls != expected) {
            add(ViolationKind::ClassMismatch, s.id,
                "stream \"" + s.id + "\" is classed \"" + to_string(s.cls) +
                    "\" but endpoints imply \"" + to_string(expected) + "\"");
        }
        for (const auto& [k, v] : s.specs) {
            if (!std::isfinite(v)) {
                add(ViolationKind::NonFiniteSpec, s.id,
                    "stream \"" + s.id + "\" spec \"" + k + "\" is not finite");
            }
        }
    }

    for (const auto& u : graph.units) {
        if (!catalog.has(u.type)) continue;
        const PortSignature& sig = catalog.entry(u.type).signature;
        int in = static_cast<int>(graph.inlets_of(u.id).size());
        int feed_out = static_cast<int>(graph.outlets_of(u.id).size());
        if (sig.inlets_over(in)) {
            add(ViolationKind::PortArity, u.id,
                "unit \"" + u.id + "\" has " + std::to_string(in) + " inlets, max " +
                    std::to_string(sig.max_inlets),
                in, sig.max_inlets);
        } else if (in < sig.min_inlets) {
            add(ViolationKind::PortArity, u.id,
                "unit \"" + u.id + "\" has " + std::to_string(in) + " inlets, min " +
                    std::to_string(sig.min_inlets),
                in, sig.min_inlets);
        }
        if (sig.outlets_over(feed_out)) {
            add(ViolationKind::PortArity, u.id,
                "unit \"" + u.id + "\" has " + std::to_string(feed_out) + " outlets, max " +
                    std::to_string(sig.max_outlets),
                feed_out, sig.max_outlets);
        } else if (feed_out < sig.min_outlets) {
            add(ViolationKind::PortArity, u.id,
                "unit \"" + u.id + "\" has " + std::to_string(feed_out) + " outlets, min " +
                    std::to_string(sig.min_outlets),
                feed_out, sig.min_outlets);
        }
    }
    return out;
}

bool structurally_equal(const FlowsheetGraph& a, const FlowsheetGraph& b) {
    return canonical_serialize(a) == canonical_serialize(b);
}

}  // namespace flowkit::ir
