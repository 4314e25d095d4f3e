#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowkit/ir.hpp"
#include "flowkit/synth.hpp"

namespace flowkit::sim {

/// Raised for infeasible unit specs and for arity/port problems discovered
/// while building or evaluating; carries the offending unit id.
struct SpecError : ir::Error {
    std::string unit;
    SpecError(const std::string& unit_id, const std::string& detail)
        : ir::Error("unit \"" + unit_id + "\": " + detail), unit(unit_id) {}
};

struct BuildError : ir::Error {
    std::string element;
    BuildError(const std::string& elem, const std::string& detail)
        : ir::Error(detail), element(elem) {}
};

struct StreamState {
    std::vector<double> flows;       // kmol/h per case component
    double temperature = 298.15;     // K
    double pressure = 101.325;       // kPa

    double total_flow() const;
};

enum class Acceleration { Direct, Wegstein };

struct SolverConfig {
    double tolerance = 1e-8;  // relative
    int max_iterations = 500;
    Acceleration acceleration = Acceleration::Direct;
};

struct UnitRuntime {
    std::string id;
    std::string type;
    std::vector<std::string> inlets;   // stream ids, sorted
    std::vector<std::string> outlets;  // stream ids, sorted
    // Port assignment per stream id; empty when built directly from a graph
    // (positional defaults apply).
    std::map<std::string, std::string> outlet_ports;
    std::map<std::string, double> specs;
    // Reactor stoichiometry: component -> signed coefficient; the key
    // component carries the conversion spec.
    std::map<std::string, double> stoichiometry;
    std::string key_component;
};

struct SimModel {
    std::string case_name;
    std::string property_package;
    std::vector<std::string> components;  // canonical, sorted unique
    std::vector<UnitRuntime> units;       // sorted by id
    std::map<std::string, std::pair<std::optional<std::string>, std::optional<std::string>>>
        stream_endpoints;  // stream id -> (source, destination)
    std::map<std::string, StreamState> feeds;
    std::vector<std::string> tear_set;
    SolverConfig config;

    int component_index(const std::string& name) const;
};

struct SolveResult {
    bool converged = false;
    int iterations = 0;
    std::map<std::string, StreamState> stream_states;
    double residual = 0.0;
    std::vector<std::string> diagnostics;

    ir::json stream_table(const std::vector<std::string>& components) const;
};

/// Greedy minimum-tear heuristic: repeatedly cut the stream on the most
/// remaining elementary cycles, smallest id on ties. The result intersects
/// every directed cycle.
std::vector<std::string> select_tear_streams(const ir::FlowsheetGraph& graph);

/// All elementary cycles as sorted stream-id sets (enumeration capped; desk
/// scale graphs stay far below the cap).
std::vector<std::vector<std::string>> enumerate_cycles(const ir::FlowsheetGraph& graph);

std::vector<StreamState> evaluate_unit(const UnitRuntime& unit,
                                       const std::vector<StreamState>& inlet_states,
                                       int component_count);

/// Builds a runnable model from a normalized graph; arity is checked against
/// the catalog and violations surface as SpecError naming the unit.
SimModel build_model(const ir::FlowsheetGraph& graph, const ir::UnitCatalog& catalog,
                     const synth::ComponentKB& kb, const SolverConfig& config = {});

/// Parses a refsim-dialect script (CREATE/ATTACH/SPEC/FEED/SOLVE). Unknown
/// components fail case initialization; occupied fixed ports are build errors.
SimModel parse_refsim_script(const std::string& script_text, const ir::UnitCatalog& catalog,
                             const synth::ComponentKB& kb, const SolverConfig& config = {});

SolveResult solve_flowsheet(const SimModel& model);

struct ExecResult {
    bool ok = false;
    std::string error;
    std::vector<std::string> log;
    std::optional<SolveResult> solve;
    std::optional<SimModel> model;
};

/// Backend entry point: build from script text and solve; never throws.
ExecResult execute_refsim(const std::string& script_text, const ir::UnitCatalog& catalog,
                          const synth::ComponentKB& kb, const SolverConfig& config = {});

}  // namespace flowkit::sim
