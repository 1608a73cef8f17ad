#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "iclsel/embedding_store.hpp"
#include "iclsel/error.hpp"

namespace iclsel {

/// dot / (norm_a * norm_b), clamped to [-1, 1]; 0 when either norm is 0.
/// Every cosine in the engine goes through here so batch and pairwise
/// computations agree bit for bit.
inline double cosine_from_parts(double dot, double norm_a, double norm_b) {
    if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
    return std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
}

template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    if (a.size() != b.size()) throw InputError("cosine_similarity: dimension mismatch");
    return cosine_from_parts(a.dot(b), a.norm(), b.norm());
}

struct RankedEntry {
    ExampleId id = 0;
    double score = 0.0;
    /// Index into the searched span.
    std::size_t position = 0;

    friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// (score desc, id asc). A strict total order on entries with distinct ids.
inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

struct RankedList {
    std::vector<RankedEntry> entries;
    /// Set when fewer than the requested k entries were available.
    bool truncated = false;

    std::size_t size() const { return entries.size(); }
};

/// Exact cosine search over a fixed set of examples. Norms are cached; the
/// examples must outlive the index.
class ExactIndex {
  public:
    explicit ExactIndex(std::span<const LabeledExample> examples);

    /// Top-k by (cosine desc, id asc), linear scan with a bounded heap.
    RankedList search(const Vector& query, std::size_t k) const;
    /// Cosine of `query` against the example at `position`.
    double score(std::size_t position, const Vector& query) const;
    std::size_t size() const { return examples_.size(); }

  private:
    std::span<const LabeledExample> examples_;
    std::vector<double> norms_;
};

RankedList knn(std::span<const LabeledExample> examples, const Vector& query, std::size_t k);

/// Keeps the k best entries under `ranks_before` and returns them sorted.
RankedList top_k(std::span<const RankedEntry> scored, std::size_t k);

/// Uniform sample of k distinct examples without replacement; scores are 0
/// and entries keep draw order. Deterministic for a given seed.
RankedList random_select(std::span<const LabeledExample> examples, std::size_t k, std::uint64_t seed);

}  // namespace iclsel
