#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowkit/ir.hpp"

namespace flowkit::synth {

struct UnknownDialectError : ir::Error {
    explicit UnknownDialectError(const std::string& name)
        : ir::Error("unknown dialect \"" + name + "\"") {}
};
struct MissingSectionError : ir::Error {
    using ir::Error::Error;
};
struct DuplicateSectionError : ir::Error {
    using ir::Error::Error;
};
struct PortExhaustedError : ir::Error {
    std::string unit;
    PortExhaustedError(const std::string& unit_id, const std::string& detail)
        : ir::Error("no free port on unit \"" + unit_id + "\": " + detail), unit(unit_id) {}
};
struct UnresolvedComponentError : ir::Error {
    std::string name;
    std::vector<std::string> candidates;  // top 3 by similarity
    UnresolvedComponentError(const std::string& n, std::vector<std::string> cands);
};

struct KbEntry {
    std::string canonical;
    std::vector<std::string> synonyms;
    std::string formula;
};

struct ComponentKB {
    std::vector<KbEntry> entries;

    static ComponentKB load(const std::string& path);
    static ComponentKB from_json(const ir::json& doc);

    bool has_canonical(const std::string& name) const;
    std::vector<std::string> canonicals() const;
};

/// Resolution order: exact canonical, synonym, fuzzy (token overlap >= threshold).
/// All-or-nothing: the first unresolvable name aborts the whole call.
std::map<std::string, std::string> resolve_components(const std::vector<std::string>& names,
                                                      const ComponentKB& kb,
                                                      double fuzzy_threshold = 0.9);

/// Best-effort variant used by scoring: unresolvable names map to themselves.
std::map<std::string, std::string> resolve_components_lenient(
    const std::vector<std::string>& names, const ComponentKB& kb, double fuzzy_threshold = 0.9);

enum class SectionKind { Basis, Instantiation, Configuration, Solve, Merged };

std::string to_string(SectionKind k);

struct ScriptSection {
    SectionKind kind = SectionKind::Basis;
    std::vector<std::string> lines;
    std::map<int, std::string> provenance;  // line index -> graph element id
};

struct Dialect {
    std::string name;
    std::string skeleton;  // carries {basis} {instantiation} {configuration} {solve}
    std::map<std::string, std::string> basis_templates;
    std::vector<std::string> basis_prelude;
    std::map<std::string, std::string> creation_templates;
    std::vector<std::string> creation_prelude;
    std::map<std::string, std::string> attachment_templates;
    std::vector<std::string> attachment_prelude;
    std::vector<std::string> solve_lines;
    std::map<std::string, std::string> classes;  // unit type -> simulator object class

    static Dialect load(const std::string& dir);
    std::string object_class(const std::string& unit_type) const;
};

struct Script {
    std::vector<ScriptSection> sections;
    std::string dialect;
    std::string text;
    std::string checksum;  // fnv1a64 of text
};

ScriptSection emit_basis(const ir::FlowsheetGraph& graph,
                         const std::map<std::string, std::string>& component_map,
                         const Dialect& dialect);

ScriptSection emit_instantiation(const ir::FlowsheetGraph& graph, const ir::UnitCatalog& catalog,
                                 const Dialect& dialect);

enum class OverflowPolicy {
    Strict,         // exhausting a fixed port list raises PortExhaustedError
    ReuseFirstPort  // emit anyway; the executor rejects the duplicate
};

ScriptSection emit_configuration(const ir::FlowsheetGraph& graph, const ir::UnitCatalog& catalog,
                                 const Dialect& dialect,
                                 OverflowPolicy policy = OverflowPolicy::Strict);

ScriptSection emit_solve(const Dialect& dialect);

Script assemble_script(const std::vector<ScriptSection>& sections, const Dialect& dialect);

/// Single-section emission used by the C3 ablation arm: creation and
/// attachment interleaved per element, ports looked up statelessly.
Script emit_merged_script(const ir::FlowsheetGraph& graph,
                          const std::map<std::string, std::string>& component_map,
                          const ir::UnitCatalog& catalog, const Dialect& dialect);

/// Every object referenced by an attachment line must be created earlier in
/// the text. Returns the first offending object name, if any.
std::optional<std::string> first_connection_before_creation(const std::string& script_text,
                                                            const std::string& dialect_name);

/// Port names assigned per unit in sorted-stream order (template overrides via
/// the template_src_port/template_dst_port extra fields). Key: stream id +
/// direction; value: port name.
std::map<std::string, std::string> assign_ports(const ir::FlowsheetGraph& graph,
                                                const ir::UnitCatalog& catalog,
                                                OverflowPolicy policy);

std::string port_key(const std::string& stream_id, bool inlet_side);

}  // namespace flowkit::synth
