#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowkit/ir.hpp"

namespace flowkit::normalize {

struct UnknownPassError : ir::Error {
    explicit UnknownPassError(const std::string& name)
        : ir::Error("unknown pass \"" + name + "\"") {}
};

enum class ActionKind { InsertUnit, InsertStream, Reroute, Consolidate };

std::string to_string(ActionKind k);

struct Reroute {
    std::string stream_id;
    bool source_side = false;  // false: destination endpoint was rewritten
    std::optional<std::string> old_ref;
    std::optional<std::string> new_ref;
    // Extra fields stamped on the stream (template port assignments).
    std::vector<std::pair<std::string, std::string>> set_extras;
};

struct LogEntry {
    std::string pass_name;
    ActionKind action = ActionKind::InsertUnit;
    ir::Unit inserted_unit;      // InsertUnit and Consolidate (the result unit)
    ir::Stream inserted_stream;  // InsertStream
    std::vector<Reroute> reroutes;
    std::vector<std::string> consumed_units;   // Consolidate
    std::vector<std::string> deleted_streams;  // Consolidate
};

struct RewriteLog {
    std::vector<LogEntry> entries;
    // Ambiguous template matches are reported here and left unrewritten.
    std::vector<std::string> reports;

    bool empty() const { return entries.empty(); }
    ir::json to_json() const;
};

RewriteLog concat(RewriteLog a, RewriteLog b);

std::pair<ir::FlowsheetGraph, RewriteLog> resolve_implicit_junctions(
    const ir::FlowsheetGraph& graph, const ir::UnitCatalog& catalog);

std::pair<ir::FlowsheetGraph, RewriteLog> consolidate_templates(const ir::FlowsheetGraph& graph,
                                                                const ir::UnitCatalog& catalog);

std::vector<std::string> default_passes();

std::pair<ir::FlowsheetGraph, RewriteLog> run_passes(const ir::FlowsheetGraph& graph,
                                                     const ir::UnitCatalog& catalog,
                                                     const std::vector<std::string>& pass_list);

std::pair<ir::FlowsheetGraph, RewriteLog> run_passes(const ir::FlowsheetGraph& graph,
                                                     const ir::UnitCatalog& catalog);

/// Mechanically applies a recorded log to `graph`; replay(input, log) must
/// reproduce the pass output exactly.
ir::FlowsheetGraph replay(const ir::FlowsheetGraph& graph, const RewriteLog& log);

}  // namespace flowkit::normalize
