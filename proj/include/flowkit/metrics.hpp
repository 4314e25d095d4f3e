#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flowkit/ir.hpp"
#include "flowkit/synth.hpp"

namespace flowkit::metrics {

struct ElementCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Conventions: an all-zero count triple is perfect vacuous agreement (1.0
/// across the board); zero TP with any FP/FN present scores 0.0.
Prf f1_from_counts(const ElementCounts& counts);

struct ClassScore {
    ElementCounts counts;
    Prf scores;
    std::vector<std::pair<std::string, std::string>> matching;  // reference id <-> extracted id
};

struct ConsistencyReport {
    ClassScore units;        // UC
    ClassScore streams;      // SC
    ClassScore connections;  // CC
    ClassScore materials;    // MC

    ir::json to_json() const;
    std::string to_text_table() const;
};

struct MatchingOptions {
    const synth::ComponentKB* kb = nullptr;  // canonicalizes material names when set
    double label_threshold = 0.8;
    // Reserved "-AUTO-" elements on the extracted side are dropped before
    // matching so normalization is never penalized as hallucination.
    bool exclude_synthesized = true;
};

/// Greedy one-to-one unit matching: equal normalized type required; labeled
/// pairs need token overlap >= threshold, pairs with an empty label fall back
/// to equal degree signatures.
std::vector<std::pair<std::string, std::string>> match_units(const ir::FlowsheetGraph& reference,
                                                             const ir::FlowsheetGraph& extracted,
                                                             double label_threshold = 0.8);

ConsistencyReport score_consistency(const ir::FlowsheetGraph& reference,
                                    const ir::FlowsheetGraph& extracted,
                                    const MatchingOptions& options = {});

/// All-zero report used for runs whose execution produced no model.
ConsistencyReport failure_report(const ir::FlowsheetGraph& reference,
                                 const MatchingOptions& options = {});

}  // namespace flowkit::metrics
