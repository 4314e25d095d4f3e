#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <thread>

#include "httplib.h"

#include "flowkit/orchestrate.hpp"
#include "support.hpp"

using namespace flowkit;
using orchestrate::AgentBinding;
using orchestrate::BindingKind;
using orchestrate::PipelineConfig;
using orchestrate::PipelineInput;

namespace {

PipelineConfig test_config() {
    PipelineConfig config;
    config.catalog_path = testsupport::data_path("catalog/default_catalog.json");
    config.kb_path = testsupport::data_path("kb/components.json");
    config.dialect_dir = testsupport::data_path("dialects/refsim");
    config.prompts_dir = testsupport::data_path("prompts");
    return config;
}

std::map<std::string, AgentBinding> case_bindings(const std::string& case_dir) {
    return orchestrate::load_bindings(
        testsupport::data_path("cases/" + case_dir + "/bindings.json"));
}

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    util::write_text_file_atomic(path, content);
    return path;
}

std::string a2_initial_digest(const std::string& diagram_name) {
    std::string prompt = util::read_text_file(testsupport::data_path("prompts/a2_extractor.txt"));
    std::vector<orchestrate::Message> messages = {{"system", prompt},
                                                  {"user", "Diagram: " + diagram_name}};
    return orchestrate::request_digest("A2", messages);
}

synth::Script make_script(const std::string& text) {
    synth::Script script;
    script.dialect = "refsim";
    script.text = text;
    script.checksum = util::fnv1a64_hex(text);
    return script;
}

const char* kValidScript = R"(CASE "demo"
PACKAGE "Ideal"
COMPONENT "H2O"
CREATE UNIT "P1" TYPE "Pump"
CREATE STREAM "F1"
CREATE STREAM "S1"
ATTACH STREAM "F1" TO UNIT "P1" PORT "Inlet"
ATTACH STREAM "S1" FROM UNIT "P1" PORT "Outlet"
FEED STREAM "F1" COMPONENT "H2O" FLOW 10.0
SOLVE
)";

}  // namespace

TEST_CASE("fixture binding replays the recorded response verbatim") {
    std::string fixture = write_temp("fixture_replay.json", R"([
      {"stage": "A1", "request_hash": null, "response": "recorded text"}
    ])");
    AgentBinding binding;
    binding.kind = BindingKind::Fixture;
    binding.fixture_file = fixture;
    auto out = orchestrate::invoke_agent(binding, "A1", {{"system", "x"}, {"user", "y"}});
    CHECK(out == "recorded text");
}

TEST_CASE("fixture miss reports the expected request hash") {
    std::string fixture = write_temp("fixture_miss.json", R"([
      {"stage": "A2", "request_hash": "0000000000000000", "response": "nope"}
    ])");
    AgentBinding binding;
    binding.kind = BindingKind::Fixture;
    binding.fixture_file = fixture;
    std::vector<orchestrate::Message> messages = {{"user", "hello"}};
    std::string digest = orchestrate::request_digest("A2", messages);
    try {
        orchestrate::invoke_agent(binding, "A2", messages);
        FAIL("expected FixtureMissingError");
    } catch (const orchestrate::FixtureMissingError& e) {
        CHECK(std::string(e.what()).find(digest) != std::string::npos);
    }
}

TEST_CASE("remote binding round-trips the wire format with pinned decoding params") {
    httplib::Server server;
    std::string captured_body;
    server.Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
        captured_body = req.body;
        util::json reply = util::json::object();
        reply["message"] = {{"content", "remote says hi"}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    AgentBinding binding;
    binding.kind = BindingKind::Remote;
    binding.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat";
    binding.model = "test-model";
    auto out = orchestrate::invoke_agent(binding, "A1", {{"system", "s"}, {"user", "u"}});
    CHECK(out == "remote says hi");

    auto body = util::json::parse(captured_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("top_k") == 1);
    CHECK(body.at("top_p") == 1.0);
    CHECK(body.at("seed") == 42);
    REQUIRE(body.at("messages").size() == 2);
    CHECK(body.at("messages")[0].at("role") == "system");

    server.stop();
    worker.join();
}

TEST_CASE("unreachable endpoint raises RemoteUnavailable after the retry budget") {
    AgentBinding binding;
    binding.kind = BindingKind::Remote;
    binding.endpoint = "http://127.0.0.1:9/v1/chat";  // discard port, nothing listens
    CHECK_THROWS_AS(orchestrate::invoke_agent(binding, "A1", {{"user", "x"}}, 2, 500),
                    orchestrate::RemoteUnavailableError);
}

TEST_CASE("enforce_schema accepts a valid IR document") {
    auto check = orchestrate::enforce_schema(
        testsupport::read_data("cases/cs1_desalting/extracted.json"),
        orchestrate::SchemaKind::IrGraph);
    CHECK(check.ok);
    CHECK(check.violations.empty());
}

TEST_CASE("enforce_schema names a missing streams array") {
    auto check = orchestrate::enforce_schema(
        R"({"case_name": "x", "property_package": "p", "components": [], "units": []})",
        orchestrate::SchemaKind::IrGraph);
    CHECK(!check.ok);
    bool mentions = false;
    for (const auto& v : check.violations) mentions |= v.find("streams") != std::string::npos;
    CHECK(mentions);
}

TEST_CASE("cs1 pipeline succeeds with a perfect consistency report") {
    PipelineConfig config = test_config();
    config.reference_path = testsupport::data_path("cases/cs1_desalting/reference.json");
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs1_desalting/diagram.txt")};
    auto result = orchestrate::run_pipeline(input, case_bindings("cs1_desalting"), config);
    REQUIRE(result.ok());
    REQUIRE(result.state.consistency.has_value());
    const auto& c = *result.state.consistency;
    CHECK(c.at("units").at("f1") == 1.0);
    CHECK(c.at("streams").at("f1") == 1.0);
    CHECK(c.at("connections").at("f1") == 1.0);
    CHECK(c.at("materials").at("f1") == 1.0);
    REQUIRE(result.state.execution.has_value());
    CHECK(result.state.execution->at("success") == true);
    CHECK(result.state.trace.size() == 8);
    // The description validator's verdict is recorded but advisory.
    CHECK(result.state.validation_verdict.has_value());
}

TEST_CASE("ir-document input skips the interpretation stages") {
    PipelineConfig config = test_config();
    PipelineInput input{PipelineInput::Kind::IrDocument,
                        testsupport::data_path("cases/cs2_merox/extracted.json")};
    auto result = orchestrate::run_pipeline(input, case_bindings("cs2_merox"), config);
    REQUIRE(result.ok());
    CHECK(result.state.trace[0].status == "skipped");
    CHECK(result.state.trace[1].status == "skipped");
    CHECK(result.state.trace[2].status == "skipped");
    CHECK(!result.state.description.has_value());
    CHECK(result.state.raw_graph.has_value());
}

TEST_CASE("missing B1 binding fails at the B1 configuration check") {
    PipelineConfig config = test_config();
    auto bindings = case_bindings("cs1_desalting");
    bindings.erase("B1");
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs1_desalting/diagram.txt")};
    auto result = orchestrate::run_pipeline(input, bindings, config);
    REQUIRE(!result.ok());
    CHECK(result.failure->stage == "B1");
    // State up to the failure is preserved for localization.
    CHECK(result.state.raw_graph.has_value());
    CHECK(result.state.normalized_graph.has_value());
}

TEST_CASE("five repeated fixture runs serialize byte-identically") {
    PipelineConfig config = test_config();
    config.reference_path = testsupport::data_path("cases/cs3_crude_distillation/reference.json");
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs3_crude_distillation/diagram.txt")};
    auto bindings = case_bindings("cs3_crude_distillation");
    std::vector<std::string> traces, states;
    for (int i = 0; i < 5; ++i) {
        auto result = orchestrate::run_pipeline(input, bindings, config);
        REQUIRE(result.ok());
        traces.push_back(result.state.trace_jsonl());
        states.push_back(result.state.to_json().dump(2));
    }
    for (int i = 1; i < 5; ++i) {
        CHECK(traces[i] == traces[0]);
        CHECK(states[i] == states[0]);
    }
}

TEST_CASE("schema repair round: invalid first output, corrected second output") {
    std::string digest = a2_initial_digest("diagram.txt");
    std::string valid = testsupport::read_data("cases/cs1_desalting/extracted.json");
    util::json fixtures = util::json::array();
    fixtures.push_back({{"stage", "A2"},
                        {"request_hash", digest},
                        {"response", "{\"case_name\": \"broken\", \"property_package\": \"p\", "
                                     "\"components\": [], \"units\": []}"}});
    util::json wildcard = util::json::object();
    wildcard["stage"] = "A2";
    wildcard["request_hash"] = nullptr;
    wildcard["response"] = valid;
    fixtures.push_back(wildcard);
    std::string fixture_file = write_temp("fixture_repair.json", fixtures.dump(2));

    PipelineConfig config = test_config();
    config.descriptor_enabled = false;  // A2's request is then exactly the pinned digest
    std::map<std::string, AgentBinding> bindings;
    AgentBinding fixture;
    fixture.kind = BindingKind::Fixture;
    fixture.fixture_file = fixture_file;
    bindings["A2"] = fixture;
    for (const char* stage : {"A3", "B1", "B2", "B3"}) {
        bindings[stage] = AgentBinding{};
    }
    // The diagram path's filename must be diagram.txt for the pinned digest.
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs1_desalting/diagram.txt")};
    auto result = orchestrate::run_pipeline(input, bindings, config);
    REQUIRE(result.ok());
    for (const auto& e : result.state.trace) {
        if (e.stage == "A2") CHECK(e.invocations == 2);
    }
}

TEST_CASE("a second schema failure becomes a StageFailure") {
    std::string digest = a2_initial_digest("diagram.txt");
    util::json fixtures = util::json::array();
    fixtures.push_back({{"stage", "A2"},
                        {"request_hash", digest},
                        {"response", "{\"case_name\": \"broken\"}"}});
    util::json wildcard = util::json::object();
    wildcard["stage"] = "A2";
    wildcard["request_hash"] = nullptr;
    wildcard["response"] = "still { not valid";
    fixtures.push_back(wildcard);
    std::string fixture_file = write_temp("fixture_repair_fail.json", fixtures.dump(2));

    PipelineConfig config = test_config();
    config.descriptor_enabled = false;
    std::map<std::string, AgentBinding> bindings;
    AgentBinding fixture;
    fixture.kind = BindingKind::Fixture;
    fixture.fixture_file = fixture_file;
    bindings["A2"] = fixture;
    for (const char* stage : {"A3", "B1", "B2", "B3"}) bindings[stage] = AgentBinding{};
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs1_desalting/diagram.txt")};
    auto result = orchestrate::run_pipeline(input, bindings, config);
    REQUIRE(!result.ok());
    CHECK(result.failure->stage == "A2");
}

TEST_CASE("a malformed validation verdict is advisory and never blocks") {
    // A1.1 returns junk twice; the run records the failure and continues.
    util::json fixtures = util::json::array();
    for (const char* stage : {"A1", "A2"}) {
        util::json e = util::json::object();
        e["stage"] = stage;
        e["request_hash"] = nullptr;
        e["response"] = std::string(stage) == "A1"
                            ? std::string("a description")
                            : testsupport::read_data("cases/cs1_desalting/extracted.json");
        fixtures.push_back(e);
    }
    util::json bad_verdict = util::json::object();
    bad_verdict["stage"] = "A1.1";
    bad_verdict["request_hash"] = nullptr;
    bad_verdict["response"] = "not a json verdict";
    fixtures.push_back(bad_verdict);
    std::string fixture_file = write_temp("fixture_bad_verdict.json", fixtures.dump(2));

    std::map<std::string, AgentBinding> bindings;
    AgentBinding fixture;
    fixture.kind = BindingKind::Fixture;
    fixture.fixture_file = fixture_file;
    bindings["A1"] = fixture;
    bindings["A1.1"] = fixture;
    bindings["A2"] = fixture;
    for (const char* stage : {"A3", "B1", "B2", "B3"}) bindings[stage] = AgentBinding{};

    PipelineConfig config = test_config();
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs1_desalting/diagram.txt")};
    auto result = orchestrate::run_pipeline(input, bindings, config);
    REQUIRE(result.ok());
    CHECK(!result.state.validation_verdict.has_value());
    bool advisory_failed = false;
    for (const auto& e : result.state.trace) {
        if (e.stage == "A1.1") advisory_failed = e.status == "failed";
    }
    CHECK(advisory_failed);
}

TEST_CASE("execute_and_fix succeeds on a valid script without fixes") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    orchestrate::RefsimBackend backend(catalog, kb, {});
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    auto outcome = orchestrate::execute_and_fix(make_script(kValidScript), backend, ctx, 3);
    CHECK(outcome.success);
    REQUIRE(outcome.attempts.size() == 1);
    CHECK(outcome.attempts[0].status == "ok");
    CHECK(outcome.attempts[0].fix_rule.empty());
    CHECK(outcome.stream_table.has_value());
}

TEST_CASE("reorder fix repairs attach-before-create on the second attempt") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string scrambled = R"(CASE "demo"
PACKAGE "Ideal"
COMPONENT "H2O"
ATTACH STREAM "F1" TO UNIT "P1" PORT "Inlet"
ATTACH STREAM "S1" FROM UNIT "P1" PORT "Outlet"
CREATE UNIT "P1" TYPE "Pump"
CREATE STREAM "F1"
CREATE STREAM "S1"
FEED STREAM "F1" COMPONENT "H2O" FLOW 10.0
SOLVE
)";
    orchestrate::RefsimBackend backend(catalog, kb, {});
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    auto outcome = orchestrate::execute_and_fix(make_script(scrambled), backend, ctx, 3);
    REQUIRE(outcome.success);
    REQUIRE(outcome.attempts.size() == 2);
    CHECK(outcome.attempts[0].status == "error");
    CHECK(outcome.attempts[1].fix_rule.find("reorder_creation_before_connection") !=
          std::string::npos);
}

TEST_CASE("port synonym fix repairs a typo'd port name") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string typo = kValidScript;
    auto pos = typo.find("PORT \"Inlet\"");
    typo.replace(pos, 12, "PORT \"In\"");
    orchestrate::RefsimBackend backend(catalog, kb, {});
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    auto outcome = orchestrate::execute_and_fix(make_script(typo), backend, ctx, 3);
    REQUIRE(outcome.success);
    REQUIRE(outcome.attempts.size() == 2);
    CHECK(outcome.attempts[1].fix_rule.find("port_name_synonym") != std::string::npos);
}

TEST_CASE("unresolvable component with no fix binding fails after attempt 1") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string bad = kValidScript;
    auto pos = bad.find("COMPONENT \"H2O\"");
    bad.replace(pos, 15, "COMPONENT \"unobtainium\"");
    pos = bad.find("FEED STREAM \"F1\" COMPONENT \"H2O\"");
    bad.replace(bad.find("\"H2O\"", pos), 5, "\"unobtainium\"");
    orchestrate::RefsimBackend backend(catalog, kb, {});
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    auto outcome = orchestrate::execute_and_fix(make_script(bad), backend, ctx, 3);
    CHECK(!outcome.success);
    CHECK(outcome.attempts.size() == 1);
}

TEST_CASE("relaxed component re-resolution repairs near-miss names") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string near = kValidScript;
    auto pos = near.find("COMPONENT \"H2O\"");
    near.replace(pos, 15, "COMPONENT \"wash water\"");
    pos = near.find("FEED STREAM \"F1\" COMPONENT \"H2O\"");
    near.replace(near.find("\"H2O\"", pos), 5, "\"wash water\"");
    orchestrate::RefsimBackend backend(catalog, kb, {});
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    auto outcome = orchestrate::execute_and_fix(make_script(near), backend, ctx, 3);
    REQUIRE(outcome.success);
    CHECK(outcome.attempts.back().fix_rule.find("component_reresolution") != std::string::npos);
}

TEST_CASE("rule fixes are idempotent") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string scrambled = R"(ATTACH STREAM "F1" TO UNIT "P1" PORT "In"
CREATE UNIT "P1" TYPE "Pump"
CREATE STREAM "F1"
SOLVE
)";
    auto [fixed, applied] = orchestrate::apply_rule_fixes(scrambled, catalog, kb);
    CHECK(!applied.empty());
    auto [fixed2, applied2] = orchestrate::apply_rule_fixes(fixed, catalog, kb);
    CHECK(applied2.empty());
    CHECK(fixed2 == fixed);
}

TEST_CASE("remote fix round repairs what rules cannot") {
    std::string fix_fixture = write_temp("fixture_b4fix.json",
                                         util::json::array({util::json{
                                             {"stage", "B4-fix"},
                                             {"request_hash", nullptr},
                                             {"response", std::string(kValidScript)}}})
                                             .dump());
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string broken = kValidScript;
    auto pos = broken.find("PORT \"Inlet\"");
    broken.replace(pos, 12, "PORT \"Intake\"");  // not in the synonym table
    orchestrate::RefsimBackend backend(catalog, kb, {});
    AgentBinding fix;
    fix.kind = BindingKind::Fixture;
    fix.fixture_file = fix_fixture;
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    ctx.fix_binding = &fix;
    ctx.fix_prompt = "repair";
    auto outcome = orchestrate::execute_and_fix(make_script(broken), backend, ctx, 3);
    REQUIRE(outcome.success);
    REQUIRE(outcome.attempts.size() == 2);
    CHECK(outcome.attempts[1].fix_rule == "remote_fix");
}

TEST_CASE("attempts never exceed the budget") {
    auto catalog = testsupport::default_catalog();
    auto kb = synth::ComponentKB::load(testsupport::data_path("kb/components.json"));
    std::string fix_fixture = write_temp(
        "fixture_b4fix_bad.json",
        util::json::array({util::json{{"stage", "B4-fix"},
                                      {"request_hash", nullptr},
                                      {"response", "still broken, not even a script"}}})
            .dump());
    std::string broken = kValidScript;
    auto pos = broken.find("PORT \"Inlet\"");
    broken.replace(pos, 12, "PORT \"Intake\"");
    orchestrate::RefsimBackend backend(catalog, kb, {});
    AgentBinding fix;
    fix.kind = BindingKind::Fixture;
    fix.fixture_file = fix_fixture;
    orchestrate::FixContext ctx;
    ctx.catalog = &catalog;
    ctx.kb = &kb;
    ctx.fix_binding = &fix;
    auto outcome = orchestrate::execute_and_fix(make_script(broken), backend, ctx, 3);
    CHECK(!outcome.success);
    CHECK(outcome.attempts.size() <= 3);
    // Each attempt records its script checksum.
    for (const auto& a : outcome.attempts) CHECK(a.script_checksum.size() == 16);
}

TEST_CASE("state snapshots grow append-only and compose to the final state") {
    PipelineConfig config = test_config();
    config.reference_path = testsupport::data_path("cases/cs4_aromatics/reference.json");
    config.capture_snapshots = true;
    PipelineInput input{PipelineInput::Kind::DiagramRef,
                        testsupport::data_path("cases/cs4_aromatics/diagram.txt")};
    auto result = orchestrate::run_pipeline(input, case_bindings("cs4_aromatics"), config);
    REQUIRE(result.ok());
    REQUIRE(result.snapshots.size() == 8);
    for (std::size_t k = 1; k < result.snapshots.size(); ++k) {
        REQUIRE_MESSAGE(util::is_json_subset(result.snapshots[k - 1], result.snapshots[k]),
                        "stage " << k << " mutated earlier state");
    }
    // The fold of all stage transformations equals the final state.
    CHECK(result.snapshots.back().dump() == result.state.to_json().dump());
}
