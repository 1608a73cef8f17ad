#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclsel/backend.hpp"
#include "iclsel/embedding_store.hpp"
#include "iclsel/metrics.hpp"
#include "iclsel/selection.hpp"

namespace iclsel {

/// k-shot prompt layout. Formats use the placeholders {text} and {label};
/// the query format has {text} only, with the label slot left open.
struct PromptTemplate {
    std::string task_name;
    std::string demonstration_format;
    std::string query_format;
    std::string separator;
    std::map<Label, std::string> verbalizer;

    /// Throws InputError on missing placeholders, a label without a
    /// verbalizer entry, or two labels sharing one surface form.
    void validate(std::span<const Label> vocabulary) const;
    const std::string& verbalize(const Label& label) const;
};

PromptTemplate template_from_json(const nlohmann::json& j);
PromptTemplate load_template(const std::filesystem::path& path);

struct PromptDemo {
    std::string text;
    Label label;
};

/// Formatted demonstrations in the given order, then the formatted query,
/// joined by the separator.
std::string build_prompt(const PromptTemplate& tmpl, std::span<const PromptDemo> demos, const Query& query);

/// Texts and labels for a selection, in its presentation order.
std::vector<PromptDemo> prompt_demos(const CandidatePool& pool, const SelectionResult& selection);

/// Verbalized labels with selection-space scores, for stub backends.
std::vector<DemoMeta> prompt_metadata(const PromptTemplate& tmpl, const SelectionResult& selection);

struct LabelScores {
    std::map<Label, double> scores;
    std::string backend;
    std::string prompt_digest;
    Label prediction;
};

/// Closed-set scoring: one backend call, every candidate must come back with
/// a finite score (ProtocolError otherwise). argmax ties go to the earliest
/// candidate, so pass candidates in vocabulary order.
LabelScores score_labels(const InferenceBackend& backend, const std::string& prompt, std::span<const Label> candidates,
                         const PromptTemplate& tmpl, std::span<const DemoMeta> metadata = {});

nlohmann::ordered_json to_json(const LabelScores& scores, ExampleId query_id);

/// Prompt-and-score predictor over the pool vocabulary. The template and
/// backend must outlive it.
IclPredictor make_icl_predictor(const PromptTemplate& tmpl, const InferenceBackend& backend,
                                const CandidatePool& pool);

}  // namespace iclsel
