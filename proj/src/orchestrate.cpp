#include "flowkit/orchestrate.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>

#include "httplib.h"

#include "flowkit/util.hpp"

namespace flowkit::orchestrate {

namespace {

using util::json;

struct FixtureEntry {
    std::string stage;
    std::optional<std::string> request_hash;
    std::string response;
};

std::mutex g_fixture_mutex;
std::map<std::string, std::vector<FixtureEntry>>& fixture_cache() {
    static std::map<std::string, std::vector<FixtureEntry>> cache;
    return cache;
}

const std::vector<FixtureEntry>& load_fixtures(const std::string& path) {
    std::lock_guard<std::mutex> lock(g_fixture_mutex);
    auto& cache = fixture_cache();
    auto it = cache.find(path);
    if (it != cache.end()) return it->second;
    std::vector<FixtureEntry> entries;
    auto doc = json::parse(util::read_text_file(path));
    const std::string dir = util::parent_dir(path);
    for (const auto& e : doc) {
        FixtureEntry entry;
        entry.stage = e.at("stage").get<std::string>();
        if (e.contains("request_hash") && !e.at("request_hash").is_null()) {
            entry.request_hash = e.at("request_hash").get<std::string>();
        }
        if (e.contains("response_file")) {
            entry.response =
                util::read_text_file(util::join_path(dir, e.at("response_file").get<std::string>()));
        } else {
            entry.response = e.at("response").get<std::string>();
        }
        entries.push_back(std::move(entry));
    }
    return cache.emplace(path, std::move(entries)).first->second;
}

struct ParsedUrl {
    std::string host;
    int port = 80;
    std::string path = "/v1/chat";
};

ParsedUrl parse_url(const std::string& url) {
    ParsedUrl out;
    std::string rest = url;
    auto scheme = rest.find("://");
    if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
    auto slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    if (slash != std::string::npos && slash + 1 < rest.size()) {
        out.path = rest.substr(slash);
    }
    auto colon = hostport.find(':');
    if (colon != std::string::npos) {
        out.host = hostport.substr(0, colon);
        out.port = std::atoi(hostport.c_str() + colon + 1);
    } else {
        out.host = hostport;
    }
    return out;
}

std::string excerpt(const std::vector<std::string>& log, std::size_t max_lines = 3) {
    std::string out;
    for (std::size_t i = 0; i < log.size() && i < max_lines; ++i) {
        if (i) out += " | ";
        out += log[i];
    }
    return out;
}

}  // namespace

ir::json DecodingParams::to_json() const {
    ir::json out = ir::json::object();
    out["seed"] = seed;
    out["temperature"] = temperature;
    out["top_k"] = top_k;
    out["top_p"] = top_p;
    return out;
}

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {"A1", "A1.1", "A2", "A3",
                                                   "B1", "B2",   "B3", "B4"};
    return order;
}

ir::json TraceEvent::to_json() const {
    ir::json out = ir::json::object();
    out["detail"] = detail;
    out["invocations"] = invocations;
    out["output_hash"] = output_hash;
    out["stage"] = stage;
    out["status"] = status;
    return out;
}

ir::json ExecutionOutcome::to_json() const {
    ir::json out = ir::json::object();
    ir::json att = ir::json::array();
    for (const auto& a : attempts) {
        ir::json e = ir::json::object();
        e["backend"] = a.backend;
        e["fix_rule"] = a.fix_rule;
        e["log_excerpt"] = a.log_excerpt;
        e["script_checksum"] = a.script_checksum;
        e["status"] = a.status;
        att.push_back(e);
    }
    out["attempts"] = att;
    if (stream_table) out["stream_table"] = *stream_table;
    out["success"] = success;
    return out;
}

std::string request_digest(const std::string& stage, const std::vector<Message>& messages) {
    json doc = json::object();
    json msgs = json::array();
    for (const auto& m : messages) {
        json e = json::object();
        e["content"] = m.content;
        e["role"] = m.role;
        msgs.push_back(e);
    }
    doc["messages"] = msgs;
    doc["stage"] = stage;
    return util::fnv1a64_hex(doc.dump());
}

std::string invoke_agent(const AgentBinding& binding, const std::string& stage,
                         const std::vector<Message>& messages, int retry_budget, int timeout_ms) {
    if (binding.kind == BindingKind::Fixture) {
        const std::string digest = request_digest(stage, messages);
        const auto& entries = load_fixtures(binding.fixture_file);
        const FixtureEntry* wildcard = nullptr;
        for (const auto& e : entries) {
            if (e.stage != stage) continue;
            if (e.request_hash && *e.request_hash == digest) return e.response;
            if (!e.request_hash && !wildcard) wildcard = &e;
        }
        if (wildcard) return wildcard->response;
        throw FixtureMissingError("no fixture for stage " + stage + " with request hash " +
                                  digest + " in " + binding.fixture_file);
    }
    if (binding.kind == BindingKind::Remote) {
        std::string base = binding.endpoint;
        if (base.empty()) {
            const char* env = std::getenv("FLOWKIT_REMOTE_BASE_URL");
            if (env) base = env;
        }
        if (base.empty()) {
            throw ConfigError("remote binding for stage " + stage + " has no endpoint");
        }
        ParsedUrl url = parse_url(base);

        json req = json::object();
        json msgs = json::array();
        for (const auto& m : messages) {
            json e = json::object();
            e["content"] = m.content;
            e["role"] = m.role;
            msgs.push_back(e);
        }
        req["messages"] = msgs;
        req["model"] = binding.model;
        req["seed"] = binding.params.seed;
        req["temperature"] = binding.params.temperature;
        req["top_k"] = binding.params.top_k;
        req["top_p"] = binding.params.top_p;
        const std::string body = req.dump();

        std::string last_error;
        for (int attempt = 0; attempt <= retry_budget; ++attempt) {
            httplib::Client client(url.host, url.port);
            client.set_connection_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
            client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
            auto res = client.Post(url.path.c_str(), body, "application/json");
            if (!res) {
                last_error = "connection failed";
                continue;
            }
            if (res->status != 200) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            try {
                auto doc = json::parse(res->body);
                return doc.at("message").at("content").get<std::string>();
            } catch (const std::exception& e) {
                last_error = std::string("malformed response: ") + e.what();
            }
        }
        throw RemoteUnavailableError("remote agent for stage " + stage + " unavailable (" +
                                     last_error + ")");
    }
    throw ConfigError("stage " + stage + " has no invocable binding");
}

SchemaCheck enforce_schema(const std::string& output, SchemaKind kind) {
    SchemaCheck check;
    json doc;
    try {
        doc = json::parse(output);
    } catch (const std::exception& e) {
        check.violations.push_back(std::string("not valid JSON: ") + e.what());
        return check;
    }
    if (kind == SchemaKind::Verdict) {
        if (!doc.is_object()) {
            check.violations.push_back("verdict must be an object");
        } else {
            if (!doc.contains("aligned") || !doc.at("aligned").is_boolean()) {
                check.violations.push_back("missing boolean field \"aligned\"");
            }
            if (doc.contains("confidence") && !doc.at("confidence").is_number()) {
                check.violations.push_back("field \"confidence\" must be a number");
            }
        }
        check.ok = check.violations.empty();
        return check;
    }
    // IrGraph
    if (!doc.is_object()) {
        check.violations.push_back("document root must be an object");
        check.ok = false;
        return check;
    }
    auto need = [&](const char* key, const char* type) {
        if (!doc.contains(key)) {
            check.violations.push_back(std::string("missing required field \"") + key + "\"");
            return false;
        }
        const json& v = doc.at(key);
        bool ok = (std::string(type) == "string" && v.is_string()) ||
                  (std::string(type) == "array" && v.is_array());
        if (!ok) {
            check.violations.push_back(std::string("field \"") + key + "\" must be a " + type);
        }
        return ok;
    };
    need("case_name", "string");
    need("property_package", "string");
    need("components", "array");
    bool units_ok = need("units", "array");
    bool streams_ok = need("streams", "array");
    if (units_ok) {
        for (const auto& u : doc.at("units")) {
            for (const char* key : {"id", "type", "label"}) {
                if (!u.is_object() || !u.contains(key) || !u.at(key).is_string()) {
                    check.violations.push_back(std::string("unit entry missing string \"") + key +
                                               "\"");
                    break;
                }
            }
        }
    }
    if (streams_ok) {
        for (const auto& s : doc.at("streams")) {
            if (!s.is_object()) {
                check.violations.push_back("stream entry must be an object");
                continue;
            }
            for (const char* key : {"id", "label", "class"}) {
                if (!s.contains(key) || !s.at(key).is_string()) {
                    check.violations.push_back(std::string("stream entry missing string \"") + key +
                                               "\"");
                }
            }
            for (const char* key : {"source", "destination"}) {
                if (!s.contains(key) || (!s.at(key).is_string() && !s.at(key).is_null())) {
                    check.violations.push_back(std::string("stream entry field \"") + key +
                                               "\" must be a string or null");
                }
            }
        }
    }
    check.ok = check.violations.empty();
    return check;
}

RefsimBackend::RefsimBackend(ir::UnitCatalog catalog, synth::ComponentKB kb,
                             sim::SolverConfig config)
    : catalog_(std::move(catalog)), kb_(std::move(kb)), config_(config) {}

Backend::Result RefsimBackend::execute(const std::string& script_text) {
    Result result;
    sim::ExecResult exec = sim::execute_refsim(script_text, catalog_, kb_, config_);
    result.ok = exec.ok;
    result.error = exec.error;
    result.log = exec.log;
    if (exec.ok && exec.solve && exec.model) {
        result.stream_table = exec.solve->stream_table(exec.model->components);
    }
    return result;
}

std::pair<std::string, std::vector<std::string>> apply_rule_fixes(const std::string& script_text,
                                                                  const ir::UnitCatalog& catalog,
                                                                  const synth::ComponentKB& kb,
                                                                  bool component_fix_enabled) {
    std::vector<std::string> applied;
    std::vector<std::string> lines;
    {
        std::istringstream in(script_text);
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }

    // Rule 1: move creation lines ahead of attachment/spec/feed lines.
    if (synth::first_connection_before_creation(script_text, "refsim")) {
        std::vector<std::string> header, creates, connects, solve;
        for (const auto& line : lines) {
            auto tokens = util::split_script_line(line);
            if (tokens.empty()) {
                header.push_back(line);
            } else if (tokens[0] == "CREATE") {
                creates.push_back(line);
            } else if (tokens[0] == "ATTACH" || tokens[0] == "SPEC" || tokens[0] == "FEED") {
                connects.push_back(line);
            } else if (tokens[0] == "SOLVE") {
                solve.push_back(line);
            } else {
                header.push_back(line);
            }
        }
        lines.clear();
        lines.insert(lines.end(), header.begin(), header.end());
        lines.insert(lines.end(), creates.begin(), creates.end());
        lines.insert(lines.end(), connects.begin(), connects.end());
        lines.insert(lines.end(), solve.begin(), solve.end());
        applied.push_back("reorder_creation_before_connection");
    }

    // Rule 2: repair port-name typos through the catalog synonym table.
    std::map<std::string, std::string> unit_types;
    for (const auto& line : lines) {
        auto tokens = util::split_script_line(line);
        if (tokens.size() == 5 && tokens[0] == "CREATE" && tokens[1] == "UNIT" &&
            tokens[3] == "TYPE") {
            unit_types[tokens[2]] = tokens[4];
        }
    }
    bool port_fixed = false;
    for (auto& line : lines) {
        auto tokens = util::split_script_line(line);
        if (tokens.size() == 8 && tokens[0] == "ATTACH" && tokens[1] == "STREAM" &&
            tokens[4] == "UNIT" && tokens[6] == "PORT") {
            auto type_it = unit_types.find(tokens[5]);
            if (type_it == unit_types.end() || !catalog.has(type_it->second)) continue;
            const auto& entry = catalog.entry(type_it->second);
            const auto& ports = tokens[3] == "TO" ? entry.inlet_ports : entry.outlet_ports;
            bool known = std::any_of(ports.begin(), ports.end(),
                                     [&](const ir::PortName& p) { return p.name == tokens[7]; });
            if (known) continue;
            auto syn = catalog.port_synonyms.find(tokens[7]);
            if (syn == catalog.port_synonyms.end()) continue;
            std::string old_token = "PORT \"" + tokens[7] + "\"";
            std::string new_token = "PORT \"" + syn->second + "\"";
            auto pos = line.rfind(old_token);
            if (pos != std::string::npos) {
                line.replace(pos, old_token.size(), new_token);
                port_fixed = true;
            }
        }
    }
    if (port_fixed) applied.push_back("port_name_synonym");

    // Rule 3: re-resolve unknown components at a relaxed threshold.
    std::map<std::string, std::string> renames;
    bool component_fixed = false;
    for (auto& line : lines) {
        if (!component_fix_enabled) break;
        auto tokens = util::split_script_line(line);
        if (tokens.size() == 2 && tokens[0] == "COMPONENT" && !kb.has_canonical(tokens[1])) {
            auto resolved = synth::resolve_components_lenient({tokens[1]}, kb, 0.8);
            const std::string& canonical = resolved.at(tokens[1]);
            if (canonical != tokens[1] && kb.has_canonical(canonical)) {
                renames[tokens[1]] = canonical;
                line = "COMPONENT \"" + canonical + "\"";
                component_fixed = true;
            }
        }
    }
    if (!renames.empty()) {
        for (auto& line : lines) {
            auto tokens = util::split_script_line(line);
            if (tokens.size() == 7 && tokens[0] == "FEED" && tokens[3] == "COMPONENT") {
                auto it = renames.find(tokens[4]);
                if (it != renames.end()) {
                    std::string old_token = "COMPONENT \"" + tokens[4] + "\"";
                    std::string new_token = "COMPONENT \"" + it->second + "\"";
                    auto pos = line.find(old_token);
                    if (pos != std::string::npos) {
                        line.replace(pos, old_token.size(), new_token);
                    }
                }
            }
        }
    }
    if (component_fixed) applied.push_back("component_reresolution");

    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out += "\n";
        out += lines[i];
    }
    if (!script_text.empty() && script_text.back() == '\n') out += "\n";
    return {out, applied};
}

ExecutionOutcome execute_and_fix(const synth::Script& script, Backend& backend,
                                 const FixContext& ctx, int max_attempts) {
    ExecutionOutcome outcome;
    std::string text = script.text;
    std::string checksum = script.checksum;
    std::string pending_fix;

    for (int attempt = 1; attempt <= std::max(1, max_attempts); ++attempt) {
        Backend::Result res = backend.execute(text);
        ExecutionAttempt record;
        record.script_checksum = checksum;
        record.backend = backend.name();
        record.status = res.ok ? "ok" : "error";
        record.log_excerpt = res.ok ? excerpt(res.log) : res.error;
        record.fix_rule = pending_fix;
        outcome.attempts.push_back(record);
        if (res.ok) {
            outcome.success = true;
            outcome.stream_table = res.stream_table;
            return outcome;
        }
        if (attempt == max_attempts) break;

        std::string fixed_text = text;
        std::vector<std::string> applied;
        if (ctx.catalog && ctx.kb) {
            std::tie(fixed_text, applied) =
                apply_rule_fixes(text, *ctx.catalog, *ctx.kb, ctx.component_fix_enabled);
        }
        if (fixed_text != text) {
            text = fixed_text;
            checksum = util::fnv1a64_hex(text);
            pending_fix.clear();
            for (std::size_t i = 0; i < applied.size(); ++i) {
                if (i) pending_fix += ",";
                pending_fix += applied[i];
            }
            continue;
        }
        if (ctx.fix_binding) {
            std::vector<Message> messages = {
                {"system", ctx.fix_prompt},
                {"user", "Script:\n" + text + "\n\nExecution error:\n" + res.error}};
            try {
                text = invoke_agent(*ctx.fix_binding, "B4-fix", messages, ctx.retry_budget,
                                    ctx.timeout_ms);
                checksum = util::fnv1a64_hex(text);
                pending_fix = "remote_fix";
                continue;
            } catch (const std::exception& e) {
                outcome.attempts.back().log_excerpt += std::string(" | fix agent failed: ") +
                                                       e.what();
                break;
            }
        }
        // No fix changed anything and no fix agent is bound.
        break;
    }
    outcome.success = false;
    return outcome;
}

ir::json PipelineState::to_json() const {
    ir::json out = ir::json::object();
    if (component_map) {
        ir::json cm = ir::json::object();
        for (const auto& [k, v] : *component_map) cm[k] = v;
        out["component_map"] = cm;
    }
    if (consistency) out["consistency"] = *consistency;
    if (description) out["description"] = *description;
    if (execution) out["execution"] = *execution;
    out["input_kind"] = input_kind;
    out["input_ref"] = input_ref;
    if (normalized_graph) out["normalized_graph"] = ir::graph_to_json(*normalized_graph);
    if (raw_graph) out["raw_graph"] = ir::graph_to_json(*raw_graph);
    if (rewrite_log) out["rewrite_log"] = *rewrite_log;
    if (script_checksum) out["script_checksum"] = *script_checksum;
    if (script_text) out["script_text"] = *script_text;
    ir::json tr = ir::json::array();
    for (const auto& e : trace) tr.push_back(e.to_json());
    out["trace"] = tr;
    if (validation_verdict) out["validation_verdict"] = *validation_verdict;
    return out;
}

std::string PipelineState::trace_jsonl() const {
    std::string out;
    for (const auto& e : trace) {
        out += e.to_json().dump();
        out += "\n";
    }
    return out;
}

std::map<std::string, AgentBinding> load_bindings(const std::string& path) {
    std::map<std::string, AgentBinding> out;
    auto doc = json::parse(util::read_text_file(path));
    const std::string dir = util::parent_dir(path);
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const json& b = it.value();
        AgentBinding binding;
        const std::string kind = b.value("kind", std::string("rule_based"));
        if (kind == "rule_based") {
            binding.kind = BindingKind::RuleBased;
        } else if (kind == "fixture") {
            binding.kind = BindingKind::Fixture;
            binding.fixture_file = util::join_path(dir, b.at("fixture").get<std::string>());
        } else if (kind == "remote") {
            binding.kind = BindingKind::Remote;
            binding.endpoint = b.value("endpoint", std::string());
            binding.model = b.value("model", std::string());
            if (b.contains("params")) {
                const json& p = b.at("params");
                binding.params.temperature = p.value("temperature", 0.0);
                binding.params.top_k = p.value("top_k", 1);
                binding.params.top_p = p.value("top_p", 1.0);
                binding.params.seed = p.value("seed", 42L);
            }
        } else {
            throw ConfigError("unknown binding kind \"" + kind + "\" for stage " + it.key());
        }
        out[it.key()] = binding;
    }
    return out;
}

namespace {

struct StageRunner {
    const PipelineInput& input;
    const std::map<std::string, AgentBinding>& bindings;
    const PipelineConfig& config;
    PipelineResult& result;
    ir::UnitCatalog catalog;
    synth::ComponentKB kb;
    synth::Dialect dialect;
    std::optional<synth::Script> script;

    const AgentBinding* find_binding(const std::string& stage) const {
        auto it = bindings.find(stage);
        return it != bindings.end() ? &it->second : nullptr;
    }

    void push_event(const std::string& stage, const std::string& status, int invocations,
                    const std::string& output_hash, const std::string& detail) {
        result.state.trace.push_back(TraceEvent{stage, status, invocations, output_hash, detail});
        if (config.capture_snapshots) {
            result.snapshots.push_back(result.state.to_json());
        }
    }

    bool fail(const std::string& stage, const std::string& cause) {
        push_event(stage, "failed", 0, "", cause);
        result.failure = StageFailure{stage, cause};
        return false;
    }

    std::string prompt(const std::string& leaf) const {
        return util::read_text_file(util::join_path(config.prompts_dir, leaf));
    }

    // Invokes with one schema-repair round; returns validated output or
    // nullopt after recording the failure.
    std::optional<std::string> invoke_with_schema(const std::string& stage,
                                                  const AgentBinding& binding,
                                                  std::vector<Message> messages, SchemaKind kind,
                                                  int& invocations) {
        std::string output = invoke_agent(binding, stage, messages, config.retry_budget,
                                          config.timeout_ms);
        invocations = 1;
        SchemaCheck check = enforce_schema(output, kind);
        if (check.ok) return output;
        std::string repair = "The previous output failed schema validation:\n";
        for (const auto& v : check.violations) repair += "- " + v + "\n";
        repair += "Original output:\n" + output + "\nReturn a corrected JSON document only.";
        messages.push_back({"user", repair});
        output = invoke_agent(binding, stage, messages, config.retry_budget, config.timeout_ms);
        invocations = 2;
        check = enforce_schema(output, kind);
        if (check.ok) return output;
        std::string cause = "schema violations after repair round:";
        for (const auto& v : check.violations) cause += " " + v + ";";
        result.failure = StageFailure{stage, cause};
        return std::nullopt;
    }

    bool run() {
        PipelineState& state = result.state;
        const bool ir_input = input.kind == PipelineInput::Kind::IrDocument;
        state.input_kind = ir_input ? "ir_document" : "diagram";
        state.input_ref = input.path;
        // Agent messages carry the diagram's name, not its absolute path, so
        // fixture request hashes stay stable across checkouts.
        const std::string diagram_name =
            std::filesystem::path(input.path).filename().string();

        // A1
        if (ir_input) {
            push_event("A1", "skipped", 0, "", "ir document input");
        } else if (!config.descriptor_enabled) {
            push_event("A1", "skipped", 0, "", "descriptor disabled");
        } else {
            const AgentBinding* binding = find_binding("A1");
            if (!binding) return fail("A1", "no binding configured");
            if (binding->kind == BindingKind::RuleBased) {
                return fail("A1", "descriptor stage needs a fixture or remote binding");
            }
            try {
                std::vector<Message> messages = {{"system", prompt("a1_descriptor.txt")},
                                                 {"user", "Diagram: " + diagram_name}};
                state.description = invoke_agent(*binding, "A1", messages, config.retry_budget,
                                                 config.timeout_ms);
            } catch (const std::exception& e) {
                return fail("A1", e.what());
            }
            push_event("A1", "ok", 1, util::fnv1a64_hex(*state.description), "");
        }

        // A1.1 (advisory; runs only when a description exists and a binding is
        // configured; its outcome never blocks the pipeline)
        const AgentBinding* validation_binding = find_binding("A1.1");
        if (!state.description || !validation_binding ||
            validation_binding->kind == BindingKind::RuleBased) {
            push_event("A1.1", "skipped", 0, "",
                       state.description ? "no validation binding" : "no description");
        } else {
            int invocations = 0;
            std::string advisory_failure;
            try {
                std::vector<Message> messages = {
                    {"system", prompt("a1_1_validation.txt")},
                    {"user",
                     "Diagram: " + diagram_name + "\n\nDescription:\n" + *state.description}};
                auto output = invoke_with_schema("A1.1", *validation_binding, messages,
                                                 SchemaKind::Verdict, invocations);
                if (output) {
                    state.validation_verdict = json::parse(*output);
                } else {
                    advisory_failure = result.failure->cause;
                    result.failure.reset();
                }
            } catch (const std::exception& e) {
                advisory_failure = e.what();
            }
            if (state.validation_verdict) {
                push_event("A1.1", "ok", invocations,
                           util::fnv1a64_hex(state.validation_verdict->dump()), "advisory");
            } else {
                push_event("A1.1", "failed", invocations, "",
                           "advisory, not blocking: " + advisory_failure);
            }
        }

        // A2
        if (ir_input) {
            try {
                state.raw_graph = ir::parse_ir(util::read_text_file(input.path));
            } catch (const std::exception& e) {
                return fail("A2", e.what());
            }
            push_event("A2", "skipped", 0,
                       util::fnv1a64_hex(ir::canonical_serialize(*state.raw_graph)),
                       "ir document input");
        } else {
            const AgentBinding* binding = find_binding("A2");
            if (!binding) return fail("A2", "no binding configured");
            if (binding->kind == BindingKind::RuleBased) {
                return fail("A2", "extractor stage needs a fixture or remote binding");
            }
            int invocations = 0;
            try {
                std::string user = "Diagram: " + diagram_name;
                if (state.description) user += "\n\nDescription:\n" + *state.description;
                std::vector<Message> messages = {{"system", prompt("a2_extractor.txt")},
                                                 {"user", user}};
                auto output = invoke_with_schema("A2", *binding, messages, SchemaKind::IrGraph,
                                                 invocations);
                if (!output) {
                    push_event("A2", "failed", invocations, "", result.failure->cause);
                    return false;
                }
                state.raw_graph = ir::parse_ir(*output);
            } catch (const std::exception& e) {
                return fail("A2", e.what());
            }
            push_event("A2", "ok", invocations,
                       util::fnv1a64_hex(ir::canonical_serialize(*state.raw_graph)), "");
        }

        // Extraction fidelity against the reference, when one is supplied.
        if (config.reference_path) {
            try {
                auto reference = ir::parse_ir(util::read_text_file(*config.reference_path));
                metrics::MatchingOptions opts;
                opts.kb = &kb;
                state.consistency =
                    metrics::score_consistency(reference, *state.raw_graph, opts).to_json();
            } catch (const std::exception& e) {
                return fail("A2", std::string("reference scoring failed: ") + e.what());
            }
        }

        // A3
        {
            const AgentBinding* binding = find_binding("A3");
            if (!binding) return fail("A3", "no binding configured");
            if (binding->kind != BindingKind::RuleBased) {
                return fail("A3", "normalization must be rule_based");
            }
            if (!config.normalization_enabled) {
                state.normalized_graph = state.raw_graph;
                push_event("A3", "skipped", 0, "", "normalization disabled");
            } else {
                auto violations = ir::validate_graph(*state.raw_graph, catalog);
                std::erase_if(violations, [](const ir::Violation& v) {
                    return v.kind == ir::ViolationKind::PortArity;
                });
                if (!violations.empty()) {
                    return fail("A3", "input graph invalid: " + violations.front().message);
                }
                try {
                    auto [normalized, log] = normalize::run_passes(*state.raw_graph, catalog);
                    auto residual = ir::validate_graph(normalized, catalog, {true});
                    if (!residual.empty()) {
                        return fail("A3",
                                    "normalization left violations: " + residual.front().message);
                    }
                    state.normalized_graph = std::move(normalized);
                    state.rewrite_log = log.to_json();
                } catch (const std::exception& e) {
                    return fail("A3", e.what());
                }
                push_event("A3", "ok", 0,
                           util::fnv1a64_hex(ir::canonical_serialize(*state.normalized_graph)), "");
            }
        }

        // B1
        {
            const AgentBinding* binding = find_binding("B1");
            if (!binding) return fail("B1", "no binding configured");
            if (binding->kind != BindingKind::RuleBased) {
                return fail("B1", "coding stages are rule_based in this artifact");
            }
            std::map<std::string, std::string> component_map;
            if (config.kb_resolution_enabled) {
                try {
                    component_map = synth::resolve_components(state.normalized_graph->components, kb);
                } catch (const std::exception& e) {
                    return fail("B1", e.what());
                }
            } else {
                for (const auto& c : state.normalized_graph->components) component_map[c] = c;
            }
            state.component_map = component_map;
            push_event("B1", "ok", 0, util::fnv1a64_hex([&] {
                           std::string s;
                           for (const auto& [k, v] : component_map) s += k + "=" + v + ";";
                           return s;
                       }()),
                       config.kb_resolution_enabled ? "" : "kb resolution disabled");
        }

        // B2 / B3
        std::optional<synth::ScriptSection> basis, instantiation;
        if (config.coding_agents_merged) {
            push_event("B2", "skipped", 0, "", "merged emission");
            const AgentBinding* binding = find_binding("B3");
            if (!binding) return fail("B3", "no binding configured");
            try {
                script = synth::emit_merged_script(*state.normalized_graph, *state.component_map,
                                                   catalog, dialect);
            } catch (const std::exception& e) {
                return fail("B3", e.what());
            }
            push_event("B3", "ok", 0, script->checksum, "merged emission");
        } else {
            const AgentBinding* b2 = find_binding("B2");
            if (!b2) return fail("B2", "no binding configured");
            if (b2->kind != BindingKind::RuleBased) {
                return fail("B2", "coding stages are rule_based in this artifact");
            }
            try {
                basis = synth::emit_basis(*state.normalized_graph, *state.component_map, dialect);
                instantiation =
                    synth::emit_instantiation(*state.normalized_graph, catalog, dialect);
            } catch (const std::exception& e) {
                return fail("B2", e.what());
            }
            push_event("B2", "ok", 0, util::fnv1a64_hex([&] {
                           std::string s;
                           for (const auto& l : instantiation->lines) s += l + "\n";
                           return s;
                       }()),
                       "");

            const AgentBinding* b3 = find_binding("B3");
            if (!b3) return fail("B3", "no binding configured");
            if (b3->kind != BindingKind::RuleBased) {
                return fail("B3", "coding stages are rule_based in this artifact");
            }
            try {
                auto policy = config.normalization_enabled ? synth::OverflowPolicy::Strict
                                                           : synth::OverflowPolicy::ReuseFirstPort;
                auto configuration = synth::emit_configuration(*state.normalized_graph, catalog,
                                                               dialect, policy);
                auto solve = synth::emit_solve(dialect);
                script = synth::assemble_script({*basis, *instantiation, configuration, solve},
                                                dialect);
            } catch (const std::exception& e) {
                return fail("B3", e.what());
            }
            push_event("B3", "ok", 0, script->checksum, "");
        }
        state.script_text = script->text;
        state.script_checksum = script->checksum;

        // B4 (execution itself is built-in; only the fix round is pluggable)
        {
            RefsimBackend backend(catalog, kb, config.solver);
            FixContext ctx;
            ctx.catalog = &catalog;
            ctx.kb = &kb;
            ctx.retry_budget = config.retry_budget;
            ctx.timeout_ms = config.timeout_ms;
            ctx.component_fix_enabled = config.kb_resolution_enabled;
            const AgentBinding* fix_binding = find_binding("B4-fix");
            if (fix_binding && fix_binding->kind != BindingKind::RuleBased) {
                ctx.fix_binding = fix_binding;
                if (util::file_exists(util::join_path(config.prompts_dir, "b4_fix.txt"))) {
                    ctx.fix_prompt = prompt("b4_fix.txt");
                }
            }
            ExecutionOutcome outcome = execute_and_fix(*script, backend, ctx, config.fix_budget);
            state.execution = outcome.to_json();
            if (!outcome.success) {
                std::string cause = outcome.attempts.empty()
                                        ? "execution failed"
                                        : outcome.attempts.back().log_excerpt;
                push_event("B4", "failed", 0, "", cause);
                result.failure = StageFailure{"B4", cause};
                return false;
            }
            push_event("B4", "ok", static_cast<int>(outcome.attempts.size()),
                       util::fnv1a64_hex(state.execution->dump()), "");
        }
        return true;
    }
};

}  // namespace

PipelineResult run_pipeline(const PipelineInput& input,
                            const std::map<std::string, AgentBinding>& bindings,
                            const PipelineConfig& config) {
    PipelineResult result;
    ir::UnitCatalog catalog = ir::UnitCatalog::load(config.catalog_path);
    synth::ComponentKB kb = synth::ComponentKB::load(config.kb_path);
    synth::Dialect dialect = synth::Dialect::load(config.dialect_dir);
    StageRunner runner{input, bindings, config, result, std::move(catalog), std::move(kb),
                       std::move(dialect), std::nullopt};
    runner.run();
    return result;
}

}  // namespace flowkit::orchestrate
