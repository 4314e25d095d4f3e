#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace flowkit::ir {

using json = nlohmann::ordered_json;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SyntaxError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
/// A stream endpoint names a unit id that does not exist.
struct ReferenceError : Error {
    std::string id;
    explicit ReferenceError(const std::string& unknown_id)
        : Error("stream endpoint references unknown unit \"" + unknown_id + "\""),
          id(unknown_id) {}
};
struct UnknownUnitTypeError : Error {
    std::string unit_type;
    explicit UnknownUnitTypeError(const std::string& t)
        : Error("unknown unit type \"" + t + "\""), unit_type(t) {}
};

enum class StreamClass { Feed, Intermediate, Product };

std::string to_string(StreamClass c);
std::optional<StreamClass> stream_class_from_string(const std::string& s);

struct Unit {
    std::string id;
    std::string type;
    std::string label;
    json extras = json::object();  // unknown fields, preserved for round-tripping
};

struct Stream {
    std::string id;
    std::string label;
    StreamClass cls = StreamClass::Intermediate;
    std::optional<std::string> source;       // null for feeds
    std::optional<std::string> destination;  // null for products
    std::vector<std::string> component_hints;
    std::map<std::string, double> specs;  // temperature [K], pressure [kPa], molar_flow [kmol/h]
    json extras = json::object();
};

struct FlowsheetGraph {
    std::string case_name;
    std::string property_package;
    std::vector<std::string> components;
    std::vector<Unit> units;
    std::vector<Stream> streams;
    json extras = json::object();

    const Unit* find_unit(const std::string& id) const;
    const Stream* find_stream(const std::string& id) const;
    std::vector<const Stream*> inlets_of(const std::string& unit_id) const;
    std::vector<const Stream*> outlets_of(const std::string& unit_id) const;
};

struct PortSignature {
    int min_inlets = 1;
    int max_inlets = 1;  // -1 means unbounded
    int min_outlets = 1;
    int max_outlets = 1;

    static constexpr int kUnbounded = -1;
    bool inlets_over(int n) const { return max_inlets != kUnbounded && n > max_inlets; }
    bool outlets_over(int n) const { return max_outlets != kUnbounded && n > max_outlets; }
};

struct PortName {
    std::string name;
    bool repeatable = false;  // repeatable ports accept any number of streams
};

/// Satellite roles are resolved in order; `anchor` is "core" or an earlier role
/// name and the connecting edge always runs anchor -> satellite.
struct TemplateSatellite {
    std::string role;
    std::string unit_type;
    std::string anchor = "core";
    bool required = true;
};

struct TemplatePattern {
    std::string name;
    std::string core_type;
    std::string result_type;
    std::vector<TemplateSatellite> satellites;
    std::map<std::string, std::string> outbound_ports;  // role (or "core") -> template port
    std::string inbound_port = "Feed";
};

struct CatalogEntry {
    PortSignature signature;
    std::vector<PortName> inlet_ports;
    std::vector<PortName> outlet_ports;
};

struct UnitCatalog {
    std::map<std::string, CatalogEntry> entries;
    std::vector<TemplatePattern> template_patterns;
    std::map<std::string, std::string> port_synonyms;

    static UnitCatalog load(const std::string& path);
    static UnitCatalog from_json(const json& doc);

    bool has(const std::string& unit_type) const { return entries.count(unit_type) != 0; }
    const CatalogEntry& entry(const std::string& unit_type) const;
};

/// Throws UnknownUnitTypeError for types absent from the catalog.
PortSignature port_signature(const UnitCatalog& catalog, const std::string& unit_type);

enum class ViolationKind {
    EmptyId,
    DuplicateId,
    UnknownEndpoint,
    ClassMismatch,
    SelfLoop,
    UnknownUnitType,
    PortArity,
    NonFiniteSpec,
    ReservedId,
};

std::string to_string(ViolationKind k);

struct Violation {
    ViolationKind kind;
    std::string element;  // id of the offending unit or stream
    std::string message;
    int found = -1;
    int limit = -1;
};

json violations_to_json(const std::vector<Violation>& violations);

struct ValidateOptions {
    // Synthesized "-AUTO-" ids are violations in user input but legal in
    // normalizer output.
    bool allow_synthesized = false;
};

/// Ids the rewriting passes may synthesize; rejected in input graphs.
bool is_reserved_id(const std::string& id);

FlowsheetGraph parse_ir(const std::string& document);
FlowsheetGraph graph_from_json(const json& doc);

std::string canonical_serialize(const FlowsheetGraph& graph);
json graph_to_json(const FlowsheetGraph& graph);

std::vector<Violation> validate_graph(const FlowsheetGraph& graph, const UnitCatalog& catalog,
                                      const ValidateOptions& options = {});

/// Structural equality: equal canonical forms.
bool structurally_equal(const FlowsheetGraph& a, const FlowsheetGraph& b);

}  // namespace flowkit::ir
