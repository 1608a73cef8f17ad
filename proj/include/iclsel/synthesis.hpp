#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iclsel/embedding_store.hpp"
#include "iclsel/error.hpp"

namespace iclsel {

/// Per-label mean embedding (the label's "center" vector) and class sizes,
/// indexed like the source pool's label vocabulary.
struct CentroidMap {
    std::vector<Label> labels;
    std::vector<std::size_t> counts;
    std::vector<Vector> centroids;

    const Vector& at(const Label& label) const;
    std::size_t size() const { return labels.size(); }
};

/// Throws InputError unless 0 <= lambda <= 1 (NaN rejected).
void check_lambda(double lambda);

/// Affine blend `lambda * v + (1 - lambda) * target`, evaluated into a plain
/// object. No renormalization.
template <typename DerivedV, typename DerivedT>
typename DerivedV::PlainObject interpolate(const Eigen::MatrixBase<DerivedV>& v,
                                           const Eigen::MatrixBase<DerivedT>& target,
                                           typename DerivedV::Scalar lambda) {
    using Scalar = typename DerivedV::Scalar;
    if (v.size() != target.size()) throw InputError("interpolate: dimension mismatch");
    return lambda * v + (Scalar(1) - lambda) * target;
}

/// Unweighted arithmetic mean of a non-empty list of equal-sized vectors.
template <typename VectorT>
VectorT mean_of(const std::vector<VectorT>& vectors) {
    VectorT sum = VectorT::Zero(vectors.front().size());
    for (const auto& v : vectors) sum += v;
    return sum / static_cast<typename VectorT::Scalar>(vectors.size());
}

CentroidMap class_centroids(const CandidatePool& pool);

/// Mean over labels (not over examples) of the class centroids.
Vector reference_vector(const CentroidMap& centroids);

/// Pool with every embedding replaced by its interpolation toward the class
/// centroid. Ids, labels and texts match the source pool position by position.
class SynthesizedPool {
  public:
    SynthesizedPool(CandidatePool examples, double lambda, Vector reference, std::string source_digest,
                    std::vector<std::size_t> counts);

    const CandidatePool& pool() const { return pool_; }
    std::span<const LabeledExample> examples() const { return pool_.examples(); }
    double lambda() const { return lambda_; }
    const Vector& reference() const { return reference_; }
    const std::string& source_digest() const { return source_digest_; }
    const std::vector<std::size_t>& counts() const { return counts_; }
    /// Ids whose synthesized vector came out exactly zero.
    const std::vector<ExampleId>& zero_vector_ids() const { return zero_ids_; }

  private:
    CandidatePool pool_;
    double lambda_;
    Vector reference_;
    std::string source_digest_;
    std::vector<std::size_t> counts_;
    std::vector<ExampleId> zero_ids_;
};

SynthesizedPool synthesize_pool(const CandidatePool& pool, double lambda);
SynthesizedPool synthesize_pool(const CandidatePool& pool, const CentroidMap& centroids, double lambda);

/// Label-agnostic interpolation of a query toward the reference vector.
Vector synthesize_query(const Vector& query, const Vector& reference, double lambda);

/// Sidecar metadata written next to a synthesized JSONL file.
std::string synthesized_metadata_json(const SynthesizedPool& synthesized);
std::string centroids_json(const CentroidMap& centroids, const Vector& reference);

/// Loads a synthesized pool written by the `synthesize` command. Vectors are
/// read as-is (never renormalized).
SynthesizedPool load_synthesized(const std::filesystem::path& jsonl, const std::filesystem::path& metadata);

/// Throws InputError unless `synthesized` was produced from `pool`.
void check_synthesized_matches(const SynthesizedPool& synthesized, const CandidatePool& pool);

}  // namespace iclsel
