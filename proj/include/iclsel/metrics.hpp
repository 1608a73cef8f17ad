#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclsel/embedding_store.hpp"
#include "iclsel/selection.hpp"

namespace iclsel {

/// Fraction of `selected` equal to `gold`.
double label_consistency(std::span<const Label> selected, const Label& gold);

struct Vote {
    Label label;
    double similarity = 0.0;
};

/// Majority label. Ties go to the tied label owning the most similar
/// demonstration; if that is also tied, to the lexicographically smallest
/// label (the pool vocabulary order).
Label vote_predict(std::span<const Vote> selected);

/// Fraction of positions where prediction equals gold.
double accuracy(std::span<const Label> predictions, std::span<const Label> golds);

struct ConsistencyRecord {
    ExampleId query_id = 0;
    Label gold_label;
    std::size_t k = 0;
    std::size_t matching_count = 0;
    double consistency = 0.0;
    double avg_original_similarity = 0.0;
    Label vote_prediction;
    std::optional<Label> icl_prediction;
};

/// Record for one selection; votes use the selection-space scores.
ConsistencyRecord make_record(const SelectionResult& selection, const Label& gold);

struct BucketRow {
    std::size_t matching_count = 0;
    double consistency = 0.0;
    std::size_t count = 0;
    std::optional<double> accuracy;  ///< absent for empty buckets
};

/// One row per possible consistency value j/k, j = 0..k, including empty rows.
std::vector<BucketRow> consistency_accuracy_buckets(std::span<const ConsistencyRecord> records, std::size_t k);
std::string buckets_csv(std::span<const BucketRow> rows);

struct Aggregates {
    std::size_t queries = 0;
    double mean_consistency = 0.0;
    double mean_similarity = 0.0;  ///< original space, raw cosine
    double vote_accuracy = 0.0;
    std::optional<double> icl_accuracy;
};

Aggregates aggregate(std::span<const ConsistencyRecord> records);

/// Produces the in-context prediction for one query given its selection.
using IclPredictor = std::function<Label(const Query& query, const SelectionResult& selection)>;

struct EvaluationReport {
    SelectorConfig config;
    std::vector<SelectionResult> selections;
    std::vector<ConsistencyRecord> records;
    Aggregates aggregates;
    std::vector<std::string> warnings;
};

/// Selects for every query (in parallel), then scores. All queries need gold labels.
EvaluationReport evaluate(const CandidatePool& pool, const SynthesizedPool* synthesized,
                          std::span<const Query> queries, const SelectorConfig& config,
                          const IclPredictor& predictor = {}, std::size_t threads = 1);

nlohmann::ordered_json to_json(const EvaluationReport& report);
/// Aligned-column summary; consistency and similarity are shown x100.
std::string to_text(const EvaluationReport& report);

enum class SweepAxis { lambda, k };

struct SweepPoint {
    double value = 0.0;
    bool reference = false;  ///< the lambda = 1.0 row, equal to plain topk
    std::vector<Aggregates> series;  ///< parallel to SweepReport::series
};

struct SweepReport {
    SweepAxis axis = SweepAxis::lambda;
    std::vector<std::string> series;
    std::vector<SweepPoint> points;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<std::string> warnings;
};

/// Default lambda grid 0.0, 0.1, ..., 0.9.
std::vector<double> default_lambda_grid();

/// Parses "start:stop:step" (inclusive) or a comma list.
std::vector<double> parse_grid(std::string_view spec);

/// For each grid value: synthesize, select every query as topk_sd, aggregate.
/// Series "synth_query" uses the interpolated query, "raw_query" the
/// original one. 1.0 is appended as the reference row unless present.
SweepReport lambda_sweep(const CandidatePool& pool, std::span<const Query> queries, std::span<const double> grid,
                         const SelectorConfig& config, const IclPredictor& predictor = {}, std::size_t threads = 1);

/// For each k: evaluate `config` (series named by its method) and plain topk
/// as a baseline when `config` is something else.
SweepReport k_sweep(const CandidatePool& pool, std::span<const Query> queries, std::span<const std::size_t> grid,
                    const SelectorConfig& config, const IclPredictor& predictor = {}, std::size_t threads = 1);

std::string sweep_csv(const SweepReport& report);
SweepReport sweep_from_json(const nlohmann::json& j);
/// Inverse of to_json(EvaluationReport); selections are not part of it.
EvaluationReport evaluation_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SweepReport& report);
std::string to_text(const SweepReport& report);

}  // namespace iclsel
