#include "iclsel/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "iclsel/io.hpp"

namespace iclsel {

namespace {

nlohmann::ordered_json vector_json(const Vector& v) {
    auto arr = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace

const Vector& CentroidMap::at(const Label& label) const {
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label) throw InputError(fmt::format("no centroid for label '{}'", label));
    return centroids[static_cast<std::size_t>(it - labels.begin())];
}

void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError(fmt::format("lambda {} is outside [0, 1]", lambda));
}

CentroidMap class_centroids(const CandidatePool& pool) {
    CentroidMap out;
    out.labels = pool.label_vocabulary();
    out.counts.assign(out.labels.size(), 0);
    out.centroids.assign(out.labels.size(), Vector::Zero(pool.dimension()));
    for (const auto& e : pool.examples()) {
        auto k = *pool.label_index(e.label);
        out.centroids[k] += e.embedding;
        ++out.counts[k];
    }
    for (std::size_t k = 0; k < out.labels.size(); ++k) out.centroids[k] /= static_cast<double>(out.counts[k]);
    return out;
}

Vector reference_vector(const CentroidMap& centroids) {
    if (centroids.centroids.empty()) throw InputError("reference_vector: no centroids");
    return mean_of(centroids.centroids);
}

SynthesizedPool::SynthesizedPool(CandidatePool examples, double lambda, Vector reference, std::string source_digest,
                                 std::vector<std::size_t> counts)
    : pool_(std::move(examples)),
      lambda_(lambda),
      reference_(std::move(reference)),
      source_digest_(std::move(source_digest)),
      counts_(std::move(counts)) {
    check_lambda(lambda_);
    if (reference_.size() != pool_.dimension()) throw InputError("reference vector dimension mismatch");
    for (const auto& e : pool_.examples())
        if (e.embedding.isZero(0.0)) zero_ids_.push_back(e.id);
}

SynthesizedPool synthesize_pool(const CandidatePool& pool, double lambda) {
    return synthesize_pool(pool, class_centroids(pool), lambda);
}

SynthesizedPool synthesize_pool(const CandidatePool& pool, const CentroidMap& centroids, double lambda) {
    check_lambda(lambda);
    std::vector<LabeledExample> out;
    out.reserve(pool.size());
    for (const auto& e : pool.examples())
        out.push_back({e.id, e.text, e.label, interpolate(e.embedding, centroids.at(e.label), lambda)});
    return SynthesizedPool(CandidatePool::from_examples(std::move(out), false, true), lambda,
                           reference_vector(centroids), pool.digest(), centroids.counts);
}

Vector synthesize_query(const Vector& query, const Vector& reference, double lambda) {
    check_lambda(lambda);
    if (query.size() != reference.size())
        throw InputError(fmt::format("query dimension {} does not match reference dimension {}", query.size(),
                                     reference.size()));
    return interpolate(query, reference, lambda);
}

std::string synthesized_metadata_json(const SynthesizedPool& synthesized) {
    nlohmann::ordered_json meta;
    meta["lambda"] = synthesized.lambda();
    meta["reference_vector"] = vector_json(synthesized.reference());
    meta["source_digest"] = synthesized.source_digest();
    meta["label_vocabulary"] = synthesized.pool().label_vocabulary();
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    const auto& vocab = synthesized.pool().label_vocabulary();
    for (std::size_t k = 0; k < vocab.size(); ++k) counts[vocab[k]] = synthesized.counts()[k];
    meta["counts"] = counts;
    return meta.dump(2) + "\n";
}

std::string centroids_json(const CentroidMap& centroids, const Vector& reference) {
    nlohmann::ordered_json out;
    out["label_vocabulary"] = centroids.labels;
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    nlohmann::ordered_json vecs = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        counts[centroids.labels[k]] = centroids.counts[k];
        vecs[centroids.labels[k]] = vector_json(centroids.centroids[k]);
    }
    out["counts"] = counts;
    out["centroids"] = vecs;
    out["reference_vector"] = vector_json(reference);
    return out.dump(2) + "\n";
}

SynthesizedPool load_synthesized(const std::filesystem::path& jsonl, const std::filesystem::path& metadata) {
    auto pool = load_pool(jsonl, LoadOptions{.normalize = false, .allow_zero_vectors = true});
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(metadata));
        double lambda = meta.at("lambda").get<double>();
        auto ref_values = meta.at("reference_vector").get<std::vector<double>>();
        Vector reference = Eigen::Map<const Vector>(ref_values.data(), static_cast<Eigen::Index>(ref_values.size()));
        auto vocab = meta.at("label_vocabulary").get<std::vector<Label>>();
        if (vocab != pool.label_vocabulary())
            throw InputError(fmt::format("{}: label vocabulary does not match {}", metadata.string(), jsonl.string()));
        std::vector<std::size_t> counts;
        for (const auto& label : vocab) counts.push_back(meta.at("counts").at(label).get<std::size_t>());
        return SynthesizedPool(std::move(pool), lambda, std::move(reference),
                               meta.at("source_digest").get<std::string>(), std::move(counts));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("{}: invalid synthesized metadata: {}", metadata.string(), e.what()));
    }
}

void check_synthesized_matches(const SynthesizedPool& synthesized, const CandidatePool& pool) {
    if (synthesized.source_digest() != pool.digest())
        throw InputError(fmt::format("synthesized pool digest {} does not match source pool digest {}",
                                     synthesized.source_digest(), pool.digest()));
    if (synthesized.pool().size() != pool.size()) throw InputError("synthesized pool size differs from source");
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& a = synthesized.pool()[i];
        const auto& b = pool[i];
        if (a.id != b.id || a.label != b.label)
            throw InputError(fmt::format("synthesized pool example {} does not match source example {}", a.id, b.id));
    }
}

}  // namespace iclsel
