#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace iclsel {

using Vector = Eigen::VectorXd;
using Label = std::string;
using ExampleId = std::uint64_t;

struct LabeledExample {
    ExampleId id = 0;
    std::string text;
    Label label;
    Vector embedding;
};

struct Query {
    ExampleId id = 0;
    std::string text;
    Vector embedding;
    std::optional<Label> gold_label;
};

/// Immutable set of labeled candidates. Examples are sorted by ascending id,
/// all embeddings share one dimension, and the vocabulary is the sorted set of
/// labels that actually occur.
class CandidatePool {
  public:
    /// Validates and takes ownership. Throws InputError on an empty pool,
    /// duplicate ids, mixed dimensions, empty labels or non-finite values.
    /// `allow_zero_vectors` is only meant for synthesized pools.
    static CandidatePool from_examples(std::vector<LabeledExample> examples, bool normalized,
                                       bool allow_zero_vectors = false);

    std::span<const LabeledExample> examples() const { return examples_; }
    const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
    std::size_t size() const { return examples_.size(); }
    Eigen::Index dimension() const { return dimension_; }
    const std::vector<Label>& label_vocabulary() const { return vocabulary_; }
    bool normalized() const { return normalized_; }

    /// Position of `label` in the vocabulary, if present.
    std::optional<std::size_t> label_index(const Label& label) const;
    /// Position of the example with this id, if present.
    std::optional<std::size_t> position_of(ExampleId id) const;

    /// SHA-256 over ids, labels, texts and embedding bits.
    const std::string& digest() const { return digest_; }

  private:
    CandidatePool() = default;

    std::vector<LabeledExample> examples_;
    Eigen::Index dimension_ = 0;
    std::vector<Label> vocabulary_;
    bool normalized_ = false;
    std::string digest_;
};

struct LoadOptions {
    bool normalize = true;
    bool allow_zero_vectors = false;
};

CandidatePool load_pool(const std::filesystem::path& path, bool normalize = true);
CandidatePool load_pool(const std::filesystem::path& path, const LoadOptions& options);

/// Queries sorted by id. `gold_label` falls back to `label` when only the
/// latter key is present.
std::vector<Query> load_queries(const std::filesystem::path& path, const CandidatePool& pool,
                                bool normalize = true);

/// Parses JSONL text; `source` is used in error messages only.
CandidatePool parse_pool(std::string_view jsonl, std::string_view source, const LoadOptions& options);
std::vector<Query> parse_queries(std::string_view jsonl, std::string_view source,
                                 const CandidatePool& pool, bool normalize);

/// One JSON object per line, ascending id; numbers round-trip exactly.
std::string pool_to_jsonl(const CandidatePool& pool);
std::string queries_to_jsonl(std::span<const Query> queries);

}  // namespace iclsel
