#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowkit/ir.hpp"
#include "flowkit/metrics.hpp"
#include "flowkit/normalize.hpp"
#include "flowkit/simulate.hpp"
#include "flowkit/synth.hpp"

namespace flowkit::orchestrate {

struct RemoteUnavailableError : ir::Error {
    using ir::Error::Error;
};
struct TimeoutError : ir::Error {
    using ir::Error::Error;
};
struct FixtureMissingError : ir::Error {
    using ir::Error::Error;
};
struct ConfigError : ir::Error {
    using ir::Error::Error;
};

/// Deterministic decoding defaults sent to every remote agent.
struct DecodingParams {
    double temperature = 0.0;
    int top_k = 1;
    double top_p = 1.0;
    long seed = 42;

    ir::json to_json() const;
};

enum class BindingKind { RuleBased, Fixture, Remote };

struct AgentBinding {
    BindingKind kind = BindingKind::RuleBased;
    std::string endpoint;  // remote: base URL (env FLOWKIT_REMOTE_BASE_URL fallback)
    std::string model;
    DecodingParams params;
    std::string fixture_file;
};

struct Message {
    std::string role;
    std::string content;
};

/// Ordered stage names; "A1.1" is the description validator, "B4-fix" the
/// optional remote fix agent consulted by the execute loop.
const std::vector<std::string>& stage_order();

struct TraceEvent {
    std::string stage;
    std::string status;  // ok | failed | skipped
    int invocations = 0;
    std::string output_hash;
    std::string detail;

    ir::json to_json() const;
};

struct ExecutionAttempt {
    std::string script_checksum;
    std::string backend;
    std::string status;  // ok | error
    std::string log_excerpt;
    std::string fix_rule;  // rules applied before this attempt
};

struct ExecutionOutcome {
    bool success = false;
    std::vector<ExecutionAttempt> attempts;
    std::optional<ir::json> stream_table;

    ir::json to_json() const;
};

struct StageFailure {
    std::string stage;
    std::string cause;
};

struct PipelineInput {
    enum class Kind { IrDocument, DiagramRef } kind = Kind::IrDocument;
    std::string path;
};

struct PipelineConfig {
    std::string catalog_path;
    std::string kb_path;
    std::string dialect_dir;  // refsim dialect directory
    std::string prompts_dir;
    std::optional<std::string> reference_path;
    int fix_budget = 3;
    int retry_budget = 2;
    int timeout_ms = 120000;
    sim::SolverConfig solver;
    // Ablation toggles (C1..C4 flip these).
    bool descriptor_enabled = true;
    bool normalization_enabled = true;
    bool coding_agents_merged = false;
    bool kb_resolution_enabled = true;
    bool capture_snapshots = false;
};

struct PipelineState {
    std::string input_kind;
    std::string input_ref;
    std::optional<std::string> description;
    std::optional<ir::json> validation_verdict;
    std::optional<ir::FlowsheetGraph> raw_graph;
    std::optional<ir::json> consistency;  // present when a reference was supplied
    std::optional<ir::FlowsheetGraph> normalized_graph;
    std::optional<ir::json> rewrite_log;
    std::optional<std::map<std::string, std::string>> component_map;
    std::optional<std::string> script_text;
    std::optional<std::string> script_checksum;
    std::optional<ir::json> execution;
    std::vector<TraceEvent> trace;

    ir::json to_json() const;
    std::string trace_jsonl() const;
};

struct PipelineResult {
    PipelineState state;
    std::optional<StageFailure> failure;
    std::vector<ir::json> snapshots;  // per-stage state serializations when captured

    bool ok() const { return !failure.has_value(); }
};

/// One chat-completion style call (or fixture replay). Throws
/// RemoteUnavailableError / TimeoutError / FixtureMissingError.
std::string invoke_agent(const AgentBinding& binding, const std::string& stage,
                         const std::vector<Message>& messages, int retry_budget = 2,
                         int timeout_ms = 120000);

/// Hash identifying a request for fixture replay.
std::string request_digest(const std::string& stage, const std::vector<Message>& messages);

enum class SchemaKind { IrGraph, Verdict };

struct SchemaCheck {
    bool ok = false;
    std::vector<std::string> violations;
};

SchemaCheck enforce_schema(const std::string& output, SchemaKind kind);

class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    struct Result {
        bool ok = false;
        std::string error;
        std::vector<std::string> log;
        std::optional<ir::json> stream_table;
    };
    virtual Result execute(const std::string& script_text) = 0;
};

class RefsimBackend : public Backend {
  public:
    RefsimBackend(ir::UnitCatalog catalog, synth::ComponentKB kb, sim::SolverConfig config);
    std::string name() const override { return "refsim"; }
    Result execute(const std::string& script_text) override;

  private:
    ir::UnitCatalog catalog_;
    synth::ComponentKB kb_;
    sim::SolverConfig config_;
};

struct FixContext {
    const ir::UnitCatalog* catalog = nullptr;
    const synth::ComponentKB* kb = nullptr;
    const AgentBinding* fix_binding = nullptr;  // optional remote fix round
    std::string fix_prompt;
    int retry_budget = 2;
    int timeout_ms = 120000;
    // The component re-resolution rule runs the knowledge-base module, so the
    // C4 arm (KB disabled) disables it as well.
    bool component_fix_enabled = true;
};

/// Built-in rule fixes, applied in order on refsim text; returns the fixed
/// text and the names of rules that changed anything. Idempotent.
std::pair<std::string, std::vector<std::string>> apply_rule_fixes(
    const std::string& script_text, const ir::UnitCatalog& catalog, const synth::ComponentKB& kb,
    bool component_fix_enabled = true);

ExecutionOutcome execute_and_fix(const synth::Script& script, Backend& backend,
                                 const FixContext& ctx, int max_attempts = 3);

PipelineResult run_pipeline(const PipelineInput& input,
                            const std::map<std::string, AgentBinding>& bindings,
                            const PipelineConfig& config);

std::map<std::string, AgentBinding> load_bindings(const std::string& path);

}  // namespace flowkit::orchestrate
