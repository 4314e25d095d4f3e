#include "flowkit/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "flowkit/normalize.hpp"
#include "flowkit/simulate.hpp"
#include "flowkit/util.hpp"

namespace flowkit::harness {

namespace {

using orchestrate::AgentBinding;
using orchestrate::PipelineConfig;
using orchestrate::PipelineInput;
using orchestrate::PipelineResult;

const char* const kClasses[] = {"uc", "sc", "cc", "mc"};

double class_f1(const metrics::ConsistencyReport& r, const std::string& cls) {
    if (cls == "uc") return r.units.scores.f1;
    if (cls == "sc") return r.streams.scores.f1;
    if (cls == "cc") return r.connections.scores.f1;
    return r.materials.scores.f1;
}

}  // namespace

std::string HarnessPaths::catalog() const {
    return util::join_path(data_dir, "catalog/default_catalog.json");
}
std::string HarnessPaths::kb() const { return util::join_path(data_dir, "kb/components.json"); }
std::string HarnessPaths::dialect(const std::string& name) const {
    return util::join_path(util::join_path(data_dir, "dialects"), name);
}
std::string HarnessPaths::prompts() const { return util::join_path(data_dir, "prompts"); }
std::string HarnessPaths::cases() const { return util::join_path(data_dir, "cases"); }

std::vector<CaseFixture> discover_cases(const std::string& cases_dir) {
    std::vector<CaseFixture> out;
    if (!std::filesystem::exists(cases_dir)) return out;
    std::vector<std::string> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(cases_dir)) {
        if (entry.is_directory()) dirs.push_back(entry.path().string());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        const std::string manifest = util::join_path(dir, "case.json");
        if (!util::file_exists(manifest)) continue;
        auto doc = ir::json::parse(util::read_text_file(manifest));
        CaseFixture c;
        c.name = doc.at("name").get<std::string>();
        c.title = doc.value("title", std::string());
        c.dir = dir;
        c.diagram = util::join_path(dir, doc.at("diagram").get<std::string>());
        c.reference = util::join_path(dir, doc.at("reference").get<std::string>());
        c.extracted = util::join_path(dir, doc.at("extracted").get<std::string>());
        c.bindings = util::join_path(dir, doc.at("bindings").get<std::string>());
        out.push_back(std::move(c));
    }
    return out;
}

std::optional<CaseFixture> find_case(const std::string& cases_dir, const std::string& name) {
    for (auto& c : discover_cases(cases_dir)) {
        if (c.name == name) return c;
    }
    return std::nullopt;
}

AblationConfig AblationConfig::by_id(const std::string& id) {
    AblationConfig c;
    c.id = id;
    if (id == "C0") return c;
    if (id == "C1") {
        c.descriptor_enabled = false;
        return c;
    }
    if (id == "C2") {
        c.normalization_enabled = false;
        return c;
    }
    if (id == "C3") {
        c.coding_agents_merged = true;
        return c;
    }
    if (id == "C4") {
        c.kb_resolution_enabled = false;
        return c;
    }
    throw orchestrate::ConfigError("unknown ablation config \"" + id + "\"");
}

std::vector<AblationConfig> AblationConfig::all() {
    return {by_id("C0"), by_id("C1"), by_id("C2"), by_id("C3"), by_id("C4")};
}

PipelineConfig make_pipeline_config(const HarnessPaths& paths, const std::string& dialect_name) {
    PipelineConfig config;
    config.catalog_path = paths.catalog();
    config.kb_path = paths.kb();
    config.dialect_dir = paths.dialect(dialect_name);
    config.prompts_dir = paths.prompts();
    return config;
}

const AblationCell* AblationReport::cell(const std::string& config_id,
                                         const std::string& case_name) const {
    for (const auto& c : cells) {
        if (c.config_id == config_id && c.case_name == case_name) return &c;
    }
    return nullptr;
}

ir::json AblationReport::to_json() const {
    ir::json out = ir::json::object();
    ir::json arr = ir::json::array();
    for (const auto& c : cells) {
        ir::json e = ir::json::object();
        e["case"] = c.case_name;
        e["config"] = c.config_id;
        ir::json deltas = ir::json::object();
        for (const auto& [k, v] : c.delta_f1) deltas[k] = v;
        e["delta_f1"] = deltas;
        e["execution_ok"] = c.execution_ok;
        ir::json f1 = ir::json::object();
        for (const auto& [k, v] : c.f1) f1[k] = v;
        e["f1"] = f1;
        if (!c.failure.empty()) e["failure"] = c.failure;
        e["impact"] = c.impact;
        e["report"] = c.report.to_json();
        arr.push_back(e);
    }
    out["cells"] = arr;
    ir::json impacts = ir::json::object();
    for (const auto& [k, v] : impact_by_config) impacts[k] = v;
    out["impact_by_config"] = impacts;
    return out;
}

std::string AblationReport::to_text() const {
    std::ostringstream os;
    os << "config  case   exec   UC      SC      CC      MC      impact\n";
    for (const auto& c : cells) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-7s %-6s %-6s %6.4f  %6.4f  %6.4f  %6.4f  %6.4f\n",
                      c.config_id.c_str(), c.case_name.c_str(), c.execution_ok ? "ok" : "fail",
                      c.f1.at("uc"), c.f1.at("sc"), c.f1.at("cc"), c.f1.at("mc"), c.impact);
        os << buf;
    }
    os << "\nimpact by config (mean over cases):\n";
    for (const auto& [id, impact] : impact_by_config) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "  %-4s %6.4f\n", id.c_str(), impact);
        os << buf;
    }
    return os.str();
}

AblationReport run_ablation(const std::vector<std::string>& case_names,
                            const std::vector<std::string>& config_ids, const HarnessPaths& paths) {
    std::vector<std::string> ids = config_ids;
    if (std::find(ids.begin(), ids.end(), "C0") == ids.end()) {
        ids.insert(ids.begin(), "C0");  // deltas are relative to the baseline
    }

    synth::ComponentKB kb = synth::ComponentKB::load(paths.kb());
    AblationReport report;

    for (const auto& case_name : case_names) {
        auto fixture = find_case(paths.cases(), case_name);
        if (!fixture) {
            throw orchestrate::ConfigError("unknown case \"" + case_name + "\"");
        }
        auto reference = ir::parse_ir(util::read_text_file(fixture->reference));
        auto bindings = orchestrate::load_bindings(fixture->bindings);

        std::map<std::string, AblationCell> by_config;
        for (const auto& id : ids) {
            AblationConfig ablation = AblationConfig::by_id(id);
            PipelineConfig config = make_pipeline_config(paths);
            config.reference_path = fixture->reference;
            config.descriptor_enabled = ablation.descriptor_enabled;
            config.normalization_enabled = ablation.normalization_enabled;
            config.coding_agents_merged = ablation.coding_agents_merged;
            config.kb_resolution_enabled = ablation.kb_resolution_enabled;

            PipelineInput input{PipelineInput::Kind::DiagramRef, fixture->diagram};
            PipelineResult result = orchestrate::run_pipeline(input, bindings, config);

            AblationCell cell;
            cell.config_id = id;
            cell.case_name = case_name;
            cell.execution_ok = result.ok();
            if (!result.ok()) {
                cell.failure = result.failure->stage + ": " + result.failure->cause;
            }
            metrics::MatchingOptions opts;
            opts.kb = &kb;
            if (result.ok() && result.state.raw_graph) {
                cell.report = metrics::score_consistency(reference, *result.state.raw_graph, opts);
            } else {
                // A run that produced no executable model scores zero.
                cell.report = metrics::failure_report(reference, opts);
            }
            for (const char* cls : kClasses) cell.f1[cls] = class_f1(cell.report, cls);
            by_config[id] = std::move(cell);
        }

        const AblationCell& baseline = by_config.at("C0");
        for (const auto& id : ids) {
            AblationCell cell = by_config.at(id);
            double impact_sum = 0.0;
            for (const char* cls : kClasses) {
                double delta = cell.f1.at(cls) - baseline.f1.at(cls);
                cell.delta_f1[cls] = delta;
                impact_sum += std::fabs(delta);
            }
            cell.impact = impact_sum / 4.0;
            report.cells.push_back(std::move(cell));
        }
    }

    for (const auto& id : ids) {
        double sum = 0.0;
        int count = 0;
        for (const auto& c : report.cells) {
            if (c.config_id == id) {
                sum += c.impact;
                ++count;
            }
        }
        report.impact_by_config[id] = count > 0 ? sum / count : 0.0;
    }
    return report;
}

ir::json ReproReport::to_json() const {
    ir::json out = ir::json::object();
    out["all_byte_identical"] = all_byte_identical;
    out["any_run_failed"] = any_run_failed;
    out["decoding_params"] = decoding.to_json();
    out["identical_pairs"] = identical_pairs;
    out["min_similarity"] = min_similarity;
    out["runs"] = runs;
    out["similarity_note"] =
        "token-set cosine over serialized states; coarse stand-in for embedding similarity";
    out["total_pairs"] = total_pairs;
    return out;
}

std::string ReproReport::to_text() const {
    std::ostringstream os;
    os << "runs: " << runs << "\n";
    os << "byte-identical pairs: " << identical_pairs << "/" << total_pairs << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "min token-set cosine similarity: %.4f\n", min_similarity);
    os << buf;
    os << "decoding params: temperature " << util::format_number(decoding.temperature) << ", top_k "
       << decoding.top_k << ", top_p " << util::format_number(decoding.top_p) << ", seed "
       << decoding.seed << "\n";
    os << "note: similarity is token-set cosine, a coarse stand-in for embedding similarity\n";
    return os.str();
}

ReproReport reproducibility_check(
    const PipelineInput& input,
    const std::vector<std::map<std::string, AgentBinding>>& bindings_per_run,
    const PipelineConfig& config) {
    ReproReport report;
    report.runs = static_cast<int>(bindings_per_run.size());

    // Decoding params actually configured on remote bindings; defaults otherwise.
    for (const auto& bindings : bindings_per_run) {
        for (const auto& [stage, binding] : bindings) {
            if (binding.kind == orchestrate::BindingKind::Remote) {
                report.decoding = binding.params;
            }
        }
    }

    std::vector<std::string> serialized;
    for (const auto& bindings : bindings_per_run) {
        PipelineResult result = orchestrate::run_pipeline(input, bindings, config);
        if (!result.ok()) report.any_run_failed = true;
        serialized.push_back(result.state.to_json().dump(2));
    }
    report.all_byte_identical = true;
    for (std::size_t i = 0; i < serialized.size(); ++i) {
        for (std::size_t j = i + 1; j < serialized.size(); ++j) {
            ++report.total_pairs;
            if (serialized[i] == serialized[j]) {
                ++report.identical_pairs;
            } else {
                report.all_byte_identical = false;
            }
            report.min_similarity =
                std::min(report.min_similarity, util::token_cosine(serialized[i], serialized[j]));
        }
    }
    return report;
}

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void apply_config_file(PipelineConfig& config, std::string& dialect_name,
                       const std::string& path) {
    auto doc = ir::json::parse(util::read_text_file(path));
    dialect_name = doc.value("dialect", dialect_name);
    config.solver.tolerance = doc.value("tolerance", config.solver.tolerance);
    config.solver.max_iterations = doc.value("max_iterations", config.solver.max_iterations);
    if (doc.value("acceleration", std::string("direct")) == "wegstein") {
        config.solver.acceleration = sim::Acceleration::Wegstein;
    }
    config.fix_budget = doc.value("fix_budget", config.fix_budget);
    config.retry_budget = doc.value("retry_budget", config.retry_budget);
    config.timeout_ms = doc.value("timeout_ms", config.timeout_ms);
}

int cmd_validate(const std::string& input, const HarnessPaths& paths) {
    auto catalog = ir::UnitCatalog::load(paths.catalog());
    auto graph = ir::parse_ir(util::read_text_file(input));
    auto violations = ir::validate_graph(graph, catalog);
    std::cout << ir::violations_to_json(violations).dump(2) << "\n";
    return violations.empty() ? 0 : 1;
}

int cmd_normalize(const std::string& input, const std::string& output, const std::string& log_path,
                  const HarnessPaths& paths) {
    auto catalog = ir::UnitCatalog::load(paths.catalog());
    auto graph = ir::parse_ir(util::read_text_file(input));
    auto [normalized, log] = normalize::run_passes(graph, catalog);
    std::string serialized = ir::canonical_serialize(normalized);
    if (!output.empty()) {
        util::write_text_file_atomic(output, serialized);
    } else {
        std::cout << serialized;
    }
    if (!log_path.empty()) {
        util::write_text_file_atomic(log_path, log.to_json().dump(2) + "\n");
    }
    auto residual = ir::validate_graph(normalized, catalog, {true});
    if (!residual.empty()) {
        std::cerr << "normalization left violations:\n"
                  << ir::violations_to_json(residual).dump(2) << "\n";
        return 1;
    }
    return 0;
}

int cmd_score(const std::string& reference_path, const std::string& extracted_path,
              const std::string& kb_path, const std::string& json_out,
              const std::string& text_out) {
    auto reference = ir::parse_ir(util::read_text_file(reference_path));
    auto extracted = ir::parse_ir(util::read_text_file(extracted_path));
    synth::ComponentKB kb = synth::ComponentKB::load(kb_path);
    metrics::MatchingOptions opts;
    opts.kb = &kb;
    auto report = metrics::score_consistency(reference, extracted, opts);
    std::string table = report.to_text_table();
    std::cout << table;
    if (!json_out.empty()) {
        util::write_text_file_atomic(json_out, report.to_json().dump(2) + "\n");
    }
    if (!text_out.empty()) {
        util::write_text_file_atomic(text_out, table);
    }
    return 0;
}

int cmd_synth(const std::string& input, const std::string& dialect_name, const std::string& output,
              const HarnessPaths& paths) {
    auto catalog = ir::UnitCatalog::load(paths.catalog());
    auto kb = synth::ComponentKB::load(paths.kb());
    auto dialect = synth::Dialect::load(paths.dialect(dialect_name));
    auto graph = ir::parse_ir(util::read_text_file(input));
    auto [normalized, log] = normalize::run_passes(graph, catalog);
    auto component_map = synth::resolve_components(normalized.components, kb);
    auto basis = synth::emit_basis(normalized, component_map, dialect);
    auto instantiation = synth::emit_instantiation(normalized, catalog, dialect);
    auto configuration = synth::emit_configuration(normalized, catalog, dialect);
    auto solve = synth::emit_solve(dialect);
    auto script = synth::assemble_script({basis, instantiation, configuration, solve}, dialect);
    if (!output.empty()) {
        util::write_text_file_atomic(output, script.text);
    } else {
        std::cout << script.text;
    }
    std::cerr << "checksum: " << script.checksum << "\n";
    if (auto bad = synth::first_connection_before_creation(script.text, dialect.name)) {
        std::cerr << "warning: \"" << *bad << "\" referenced before creation\n";
        return 1;
    }
    return 0;
}

int cmd_run(const std::string& input, const HarnessPaths& paths, const sim::SolverConfig& solver,
            const std::string& output) {
    auto catalog = ir::UnitCatalog::load(paths.catalog());
    auto kb = synth::ComponentKB::load(paths.kb());
    auto graph = ir::parse_ir(util::read_text_file(input));
    auto [normalized, log] = normalize::run_passes(graph, catalog);
    auto model = sim::build_model(normalized, catalog, kb, solver);
    auto result = sim::solve_flowsheet(model);
    ir::json out = ir::json::object();
    out["converged"] = result.converged;
    out["iterations"] = result.iterations;
    out["residual"] = result.residual;
    out["stream_table"] = result.stream_table(model.components);
    std::string serialized = out.dump(2) + "\n";
    if (!output.empty()) {
        util::write_text_file_atomic(output, serialized);
    } else {
        std::cout << serialized;
    }
    for (const auto& line : result.diagnostics) std::cerr << line << "\n";
    return result.converged ? 0 : 1;
}

int cmd_pipeline(const std::string& input, const std::string& diagram,
                 const std::string& bindings_path, const std::string& reference,
                 const std::string& trace_path, const std::string& state_path,
                 PipelineConfig config) {
    PipelineInput pin;
    if (!input.empty()) {
        pin.kind = PipelineInput::Kind::IrDocument;
        pin.path = input;
    } else {
        pin.kind = PipelineInput::Kind::DiagramRef;
        pin.path = diagram;
    }
    if (!reference.empty()) config.reference_path = reference;
    auto bindings = orchestrate::load_bindings(bindings_path);
    PipelineResult result = orchestrate::run_pipeline(pin, bindings, config);
    if (!trace_path.empty()) {
        util::write_text_file_atomic(trace_path, result.state.trace_jsonl());
    }
    if (!state_path.empty()) {
        util::write_text_file_atomic(state_path, result.state.to_json().dump(2) + "\n");
    }
    if (result.state.consistency) {
        std::cout << "consistency:\n" << result.state.consistency->dump(2) << "\n";
    }
    if (!result.ok()) {
        std::cerr << "stage failure at " << result.failure->stage << ": " << result.failure->cause
                  << "\n";
        return 1;
    }
    std::cout << "pipeline ok, script checksum " << result.state.script_checksum.value_or("-")
              << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"diagram-to-simulation pipeline toolkit"};
    app.require_subcommand(1);

    HarnessPaths paths;
    if (const char* env = std::getenv("FLOWKIT_DATA_DIR")) paths.data_dir = env;
    app.add_option("--data", paths.data_dir, "data directory (catalog, kb, dialects, cases)");

    std::string input, output, log_path, reference, extracted, kb_path, json_out, text_out;
    std::string dialect_name = "refsim";
    std::string diagram, bindings_path, trace_path, state_path, config_file, out_path;
    std::string cases_csv = "cs2,cs4";
    std::string configs_csv = "C0,C1,C2,C3,C4";
    int runs = 5;
    sim::SolverConfig solver;
    std::string acceleration = "direct";

    auto* validate = app.add_subcommand("validate", "check an IR document against the catalog");
    validate->add_option("--input", input)->required();

    auto* normalize_cmd = app.add_subcommand("normalize", "apply the rewriting passes");
    normalize_cmd->add_option("--input", input)->required();
    normalize_cmd->add_option("--output", output);
    normalize_cmd->add_option("--log", log_path);

    auto* score = app.add_subcommand("score", "structural consistency of extracted vs reference");
    score->add_option("--reference", reference)->required();
    score->add_option("--extracted", extracted)->required();
    score->add_option("--kb", kb_path);
    score->add_option("--json", json_out);
    score->add_option("--text", text_out);

    auto* synth_cmd = app.add_subcommand("synth", "emit an automation script");
    synth_cmd->add_option("--input", input)->required();
    synth_cmd->add_option("--dialect", dialect_name);
    synth_cmd->add_option("--output", output);

    auto* run_cmd = app.add_subcommand("run", "normalize and solve on the reference executor");
    run_cmd->add_option("--input", input)->required();
    run_cmd->add_option("--tolerance", solver.tolerance);
    run_cmd->add_option("--max-iterations", solver.max_iterations);
    run_cmd->add_option("--acceleration", acceleration)
        ->check(CLI::IsMember({"direct", "wegstein"}));
    run_cmd->add_option("--output", output);

    auto* pipeline = app.add_subcommand("pipeline", "full multi-stage run");
    pipeline->add_option("--input", input);
    pipeline->add_option("--diagram", diagram);
    pipeline->add_option("--bindings", bindings_path)->required();
    pipeline->add_option("--reference", reference);
    pipeline->add_option("--trace", trace_path);
    pipeline->add_option("--state", state_path);
    pipeline->add_option("--config", config_file);
    pipeline->add_option("--dialect", dialect_name);

    auto* ablate = app.add_subcommand("ablate", "run the C0..C4 sweep");
    ablate->add_option("--cases", cases_csv);
    ablate->add_option("--configs", configs_csv);
    ablate->add_option("--out", out_path);
    ablate->add_option("--text", text_out);

    auto* repro = app.add_subcommand("repro", "repeated runs, byte-equality report");
    repro->add_option("--input", input);
    repro->add_option("--diagram", diagram);
    repro->add_option("--bindings", bindings_path)->required();
    repro->add_option("--runs", runs)->check(CLI::Range(2, 1000));
    repro->add_option("--out", out_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(input, paths);
        if (normalize_cmd->parsed()) return cmd_normalize(input, output, log_path, paths);
        if (score->parsed()) {
            if (kb_path.empty()) kb_path = paths.kb();
            return cmd_score(reference, extracted, kb_path, json_out, text_out);
        }
        if (synth_cmd->parsed()) return cmd_synth(input, dialect_name, output, paths);
        if (run_cmd->parsed()) {
            solver.acceleration = acceleration == "wegstein" ? sim::Acceleration::Wegstein
                                                             : sim::Acceleration::Direct;
            return cmd_run(input, paths, solver, output);
        }
        if (pipeline->parsed()) {
            if (input.empty() == diagram.empty()) {
                std::cerr << "pipeline needs exactly one of --input or --diagram\n";
                return 2;
            }
            PipelineConfig config = make_pipeline_config(paths, dialect_name);
            if (!config_file.empty()) apply_config_file(config, dialect_name, config_file);
            config.dialect_dir = paths.dialect(dialect_name);
            return cmd_pipeline(input, diagram, bindings_path, reference, trace_path, state_path,
                                config);
        }
        if (ablate->parsed()) {
            auto report = run_ablation(split_csv(cases_csv), split_csv(configs_csv), paths);
            std::cout << report.to_text();
            if (!out_path.empty()) {
                util::write_text_file_atomic(out_path, report.to_json().dump(2) + "\n");
            }
            if (!text_out.empty()) {
                util::write_text_file_atomic(text_out, report.to_text());
            }
            return 0;
        }
        if (repro->parsed()) {
            if (input.empty() == diagram.empty()) {
                std::cerr << "repro needs exactly one of --input or --diagram\n";
                return 2;
            }
            PipelineInput pin;
            pin.kind = input.empty() ? PipelineInput::Kind::DiagramRef
                                     : PipelineInput::Kind::IrDocument;
            pin.path = input.empty() ? diagram : input;
            auto bindings = orchestrate::load_bindings(bindings_path);
            std::vector<std::map<std::string, AgentBinding>> per_run(
                static_cast<std::size_t>(runs), bindings);
            PipelineConfig config = make_pipeline_config(paths);
            auto report = reproducibility_check(pin, per_run, config);
            std::cout << report.to_text();
            if (!out_path.empty()) {
                util::write_text_file_atomic(out_path, report.to_json().dump(2) + "\n");
            }
            return report.any_run_failed ? 1 : 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace flowkit::harness
