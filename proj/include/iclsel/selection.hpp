#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iclsel/bm25.hpp"
#include "iclsel/embedding_store.hpp"
#include "iclsel/retrieval.hpp"
#include "iclsel/synthesis.hpp"

namespace iclsel {

enum class Method { random, bm25, topk, topk_sd };
enum class Ordering { similarity_ascending, similarity_descending, pool_order };

std::string_view to_string(Method m);
std::string_view to_string(Ordering o);
Method parse_method(std::string_view s);
Ordering parse_ordering(std::string_view s);

struct SelectorConfig {
    Method method = Method::topk;
    std::size_t k = 8;
    std::optional<double> lambda;  ///< topk_sd only
    std::uint64_t seed = 0;        ///< random only
    bool query_synthesis = true;   ///< topk_sd only
    std::optional<std::size_t> stage1_size;
    Ordering ordering = Ordering::similarity_ascending;
    Bm25Params bm25;

    /// Throws InputError when the fields are inconsistent with each other.
    void validate() const;

    /// Drops fields the method ignores and rewrites topk_sd at lambda = 1 as
    /// topk, since both select in the same space. Two configs that must
    /// produce the same selections have equal canonical forms.
    SelectorConfig canonical() const;

    friend bool operator==(const SelectorConfig&, const SelectorConfig&) = default;
};

/// Canonical JSON; only fields relevant to the method are emitted.
nlohmann::ordered_json to_json(const SelectorConfig& config);
SelectorConfig selector_config_from_json(const nlohmann::json& j);

struct Demonstration {
    ExampleId id = 0;
    Label label;
    double sim_original = 0.0;   ///< cosine to the raw query in the load-time space
    double sim_selection = 0.0;  ///< score in the space the selector ranked in

    friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

struct SelectionResult {
    ExampleId query_id = 0;
    std::vector<Demonstration> demonstrations;
    SelectorConfig config;  ///< canonical
    bool truncated = false;
    /// Set when the synthesized query vector came out exactly zero.
    bool zero_query_vector = false;

    friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

/// One JSONL line: {query_id, config, demonstrations:[{id, label, sim_original, sim_selection}]}.
std::string to_jsonl_line(const SelectionResult& result);
SelectionResult selection_from_json(const nlohmann::json& j);
std::vector<SelectionResult> parse_selections(std::string_view jsonl, std::string_view source);

/// Picks k ids out of ranked Stage-1 candidates.
using Stage2Strategy =
    std::function<std::vector<ExampleId>(std::span<const Demonstration> candidates, const Query& query, std::size_t k)>;

/// Keeps the first k candidates.
Stage2Strategy truncate_strategy();

/// Reorders demonstrations for presentation.
void apply_ordering(std::vector<Demonstration>& demos, Ordering ordering);

/// Per-query seed for the random selector, so queries do not all draw the
/// same demonstrations.
std::uint64_t query_seed(std::uint64_t seed, ExampleId query_id);

/// Validated selector bound to a pool (and a synthesized pool for topk_sd).
/// Indices are built once; select() is const and safe to call concurrently.
/// Both pools must outlive the selector.
class Selector {
  public:
    Selector(const CandidatePool& pool, const SynthesizedPool* synthesized, SelectorConfig config,
             Stage2Strategy stage2 = truncate_strategy());

    SelectionResult select(const Query& query) const;

    /// Stage-1 candidates in rank order (stage1_size of them, or k when unset).
    std::vector<Demonstration> candidates(const Query& query, std::size_t count, bool* truncated = nullptr,
                                          bool* zero_query = nullptr) const;

    const SelectorConfig& config() const { return config_; }

  private:
    const CandidatePool& pool_;
    const SynthesizedPool* synthesized_;
    SelectorConfig config_;
    Stage2Strategy stage2_;
    ExactIndex original_;
    std::optional<ExactIndex> synthesized_index_;
    std::optional<Bm25Index> bm25_;
};

SelectionResult select(const CandidatePool& pool, const SynthesizedPool* synthesized, const Query& query,
                       const SelectorConfig& config);

SelectionResult two_stage_select(const CandidatePool& pool, const SynthesizedPool* synthesized, const Query& query,
                                 const SelectorConfig& config, const Stage2Strategy& stage2);

}  // namespace iclsel
