// Regenerates the synthetic fixtures under tests/fixtures. Output is
// deterministic for a given standard library; the checked-in files are the
// reference copies.
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "iclsel/embedding_store.hpp"
#include "iclsel/io.hpp"

namespace fs = std::filesystem;
using namespace iclsel;

namespace {

struct ClassSpec {
    Label label;
    Vector mean;
};

/// Words drawn mostly from a class-specific vocabulary so BM25 has signal.
std::string make_text(std::mt19937_64& rng, std::size_t cls, std::size_t classes) {
    std::uniform_int_distribution<int> len(5, 12);
    std::uniform_int_distribution<int> word(0, 19);
    std::bernoulli_distribution own(0.6);
    std::uniform_int_distribution<std::size_t> other(0, classes - 1);
    std::string out;
    int n = len(rng);
    for (int i = 0; i < n; ++i) {
        std::size_t c = own(rng) ? cls : other(rng);
        out += fmt::format("{}c{}w{}", i ? " " : "", c, word(rng));
    }
    return out;
}

void mixture(const fs::path& dir, const std::string& name, std::uint64_t seed, const std::vector<ClassSpec>& classes,
             double sigma, std::size_t per_class, const std::vector<std::size_t>& query_counts) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    auto d = classes.front().mean.size();
    auto draw = [&](std::size_t c) {
        Vector v = classes[c].mean;
        for (Eigen::Index i = 0; i < d; ++i) v[i] += noise(rng);
        return v;
    };

    std::vector<LabeledExample> pool;
    ExampleId id = 0;
    for (std::size_t r = 0; r < per_class; ++r)
        for (std::size_t c = 0; c < classes.size(); ++c)
            pool.push_back({id++, make_text(rng, c, classes.size()), classes[c].label, draw(c)});
    atomic_write(dir / (name + "_pool.jsonl"), pool_to_jsonl(CandidatePool::from_examples(std::move(pool), false)));

    for (auto count : query_counts) {
        std::vector<Query> queries;
        for (std::size_t i = 0; i < count; ++i) {
            auto c = i % classes.size();
            queries.push_back({100000 + i, make_text(rng, c, classes.size()), draw(c), classes[c].label});
        }
        atomic_write(dir / fmt::format("{}_queries{}.jsonl", name, count), queries_to_jsonl(queries));
    }
}

void text_toy(const fs::path& dir) {
    struct Row {
        const char* text;
        const char* label;
        std::vector<double> e;
    };
    const std::vector<Row> pool = {
        {"a good movie", "positive", {0.9, 0.1, 0.0, 0.2}},
        {"truly wonderful acting", "positive", {0.8, 0.3, 0.1, 0.0}},
        {"good fun for everyone", "positive", {0.7, 0.2, 0.3, 0.1}},
        {"a bad movie", "negative", {0.1, 0.9, 0.0, 0.2}},
        {"dull and far too long", "negative", {0.0, 0.8, 0.4, 0.1}},
        {"not good at all", "negative", {0.4, 0.7, 0.1, 0.3}},
    };
    std::vector<LabeledExample> examples;
    for (std::size_t i = 0; i < pool.size(); ++i)
        examples.push_back({i + 1, pool[i].text, pool[i].label, Eigen::Map<const Vector>(pool[i].e.data(), 4)});
    atomic_write(dir / "toy_pool.jsonl", pool_to_jsonl(CandidatePool::from_examples(std::move(examples), false)));
    std::vector<Query> queries = {
        {101, "a good film", Vector{{0.85, 0.15, 0.05, 0.1}}, "positive"},
        {102, "boring and bad", Vector{{0.05, 0.85, 0.2, 0.1}}, "negative"},
    };
    atomic_write(dir / "toy_queries.jsonl", queries_to_jsonl(queries));
}

}  // namespace

int main(int argc, char** argv) {
    fs::path dir = argc > 1 ? argv[1] : "tests/fixtures";

    std::mt19937_64 rng(20240401);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<ClassSpec> four;
    for (const char* label : {"business", "sci_tech", "sports", "world"}) {
        Vector m(32);
        for (auto& x : m) x = unit(rng);
        four.push_back({label, m});
    }
    mixture(dir, "mix4", 7, four, 3.0, 250, {100, 200});

    Vector pos = Vector::Zero(8), neg = Vector::Zero(8);
    pos[0] = 2.0;
    neg[0] = -2.0;
    mixture(dir, "gauss2", 11, {{"neg", neg}, {"pos", pos}}, 1.0, 200, {100});

    text_toy(dir);
    std::cout << "fixtures written to " << dir << "\n";
    return 0;
}
