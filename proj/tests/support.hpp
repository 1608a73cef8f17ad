#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "iclsel/embedding_store.hpp"

namespace iclsel::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(ICLSEL_FIXTURES) / name; }
inline std::filesystem::path template_path(const std::string& name) {
    return std::filesystem::path(ICLSEL_TEMPLATES) / name;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / fmt::format("iclsel_test_{}_{}", name, ::getpid());
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index d) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vector v(d);
    for (auto& x : v) x = n(rng);
    return v;
}

/// n examples with labels cycling through `labels`, ids 0..n-1, texts "t<id>".
inline std::vector<LabeledExample> random_examples(std::mt19937_64& rng, std::size_t n, Eigen::Index d,
                                                   const std::vector<Label>& labels = {"A", "B", "C"}) {
    std::vector<LabeledExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({i, fmt::format("t{}", i), labels[i % labels.size()], random_vector(rng, d)});
    return out;
}

inline CandidatePool random_pool(std::uint64_t seed, std::size_t n, Eigen::Index d,
                                 const std::vector<Label>& labels = {"A", "B", "C"}) {
    std::mt19937_64 rng(seed);
    return CandidatePool::from_examples(random_examples(rng, n, d, labels), false);
}

inline Query make_query(ExampleId id, Vector embedding, std::optional<Label> gold = std::nullopt,
                        std::string text = "query") {
    return Query{id, std::move(text), std::move(embedding), std::move(gold)};
}

}  // namespace iclsel::testing
