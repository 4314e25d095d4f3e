#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowkit/metrics.hpp"
#include "flowkit/orchestrate.hpp"

namespace flowkit::harness {

struct CaseFixture {
    std::string name;
    std::string title;
    std::string dir;
    std::string diagram;
    std::string reference;
    std::string extracted;
    std::string bindings;
};

std::vector<CaseFixture> discover_cases(const std::string& cases_dir);
std::optional<CaseFixture> find_case(const std::string& cases_dir, const std::string& name);

struct AblationConfig {
    std::string id;
    bool descriptor_enabled = true;
    bool normalization_enabled = true;
    bool coding_agents_merged = false;
    bool kb_resolution_enabled = true;

    static AblationConfig by_id(const std::string& id);
    static std::vector<AblationConfig> all();
};

struct AblationCell {
    std::string config_id;
    std::string case_name;
    bool execution_ok = false;
    std::string failure;  // stage: cause when execution failed
    metrics::ConsistencyReport report;
    std::map<std::string, double> f1;        // per class (uc/sc/cc/mc)
    std::map<std::string, double> delta_f1;  // vs the C0 cell of the same case
    double impact = 0.0;                     // mean |delta F1| across the four classes
};

struct AblationReport {
    std::vector<AblationCell> cells;
    std::map<std::string, double> impact_by_config;  // mean over cases

    const AblationCell* cell(const std::string& config_id, const std::string& case_name) const;
    ir::json to_json() const;
    std::string to_text() const;
};

struct HarnessPaths {
    std::string data_dir = "data";

    std::string catalog() const;
    std::string kb() const;
    std::string dialect(const std::string& name) const;
    std::string prompts() const;
    std::string cases() const;
};

orchestrate::PipelineConfig make_pipeline_config(const HarnessPaths& paths,
                                                 const std::string& dialect_name = "refsim");

AblationReport run_ablation(const std::vector<std::string>& case_names,
                            const std::vector<std::string>& config_ids, const HarnessPaths& paths);

struct ReproReport {
    int runs = 0;
    bool all_byte_identical = false;
    int identical_pairs = 0;
    int total_pairs = 0;
    double min_similarity = 1.0;  // token-set cosine, a coarse stand-in metric
    orchestrate::DecodingParams decoding;
    bool any_run_failed = false;

    ir::json to_json() const;
    std::string to_text() const;
};

/// Executes the pipeline once per bindings entry and compares the serialized
/// final states pairwise.
ReproReport reproducibility_check(
    const orchestrate::PipelineInput& input,
    const std::vector<std::map<std::string, orchestrate::AgentBinding>>& bindings_per_run,
    const orchestrate::PipelineConfig& config);

int cli_main(int argc, const char* const* argv);

}  // namespace flowkit::harness
