#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "iclsel/error.hpp"
#include "iclsel/retrieval.hpp"
#include "support.hpp"

using namespace iclsel;
using namespace iclsel::testing;

namespace {

/// Scores every example with the pairwise cosine and fully sorts.
std::vector<RankedEntry> brute_force(std::span<const LabeledExample> ex, const Vector& q, std::size_t k) {
    std::vector<RankedEntry> all;
    for (std::size_t i = 0; i < ex.size(); ++i) all.push_back({ex[i].id, cosine_similarity(ex[i].embedding, q), i});
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

}  // namespace

TEST(Cosine, Examples) {
    EXPECT_DOUBLE_EQ(cosine_similarity(Vector{{3, 4}}, Vector{{3, 4}}), 1.0);
    EXPECT_EQ(cosine_similarity(Vector{{1, 0}}, Vector{{0, 1}}), 0.0);
    EXPECT_NEAR(cosine_similarity(Vector{{1, 2, 3}}, Vector{{4, 5, 6}}), 32.0 / (std::sqrt(14.0) * std::sqrt(77.0)),
                1e-12);
    EXPECT_NEAR(cosine_similarity(Vector{{1, 2, 3}}, Vector{{4, 5, 6}}), 0.9746318, 1e-6);
    EXPECT_EQ(cosine_similarity(Vector{{0, 0}}, Vector{{1, 1}}), 0.0);
    EXPECT_THROW(cosine_similarity(Vector{{1, 0}}, Vector{{1, 0, 0}}), InputError);
}

TEST(Cosine, StaysInRange) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 1000; ++t) {
        Vector v = random_vector(rng, 5);
        double c = cosine_similarity(v, 7.0 * v);
        EXPECT_LE(c, 1.0);
        EXPECT_GE(cosine_similarity(v, -v), -1.0);
    }
}

TEST(Knn, TwoPointExample) {
    std::vector<LabeledExample> ex = {{0, "", "A", Vector{{1, 0}}}, {1, "", "B", Vector{{0, 1}}}};
    auto r = knn(ex, Vector{{1, 0.1}}, 1);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r.entries[0].id, 0u);
    EXPECT_NEAR(r.entries[0].score, 1.0 / std::sqrt(1.01), 1e-12);
    EXPECT_FALSE(r.truncated);
}

TEST(Knn, TiesGoToSmallerId) {
    std::vector<LabeledExample> ex = {{2, "", "A", Vector{{1, 1}}}, {5, "", "A", Vector{{1, 1}}}};
    auto r = knn(ex, Vector{{1, 0}}, 1);
    EXPECT_EQ(r.entries[0].id, 2u);

    std::reverse(ex.begin(), ex.end());
    EXPECT_EQ(knn(ex, Vector{{1, 0}}, 1).entries[0].id, 2u);
}

TEST(Knn, MatchesFullSortOracle) {
    std::mt19937_64 rng(99);
    auto ex = random_examples(rng, 500, 16);
    for (int t = 0; t < 20; ++t) {
        Vector q = random_vector(rng, 16);
        EXPECT_EQ(knn(ex, q, 8).entries, brute_force(ex, q, 8));
    }
}

TEST(Knn, MatchesOracleWithManyTies) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> coord(-1, 1);
    std::vector<LabeledExample> ex;
    for (ExampleId i = 0; i < 300; ++i) {
        Vector v(3);
        do {
            for (auto& x : v) x = coord(rng);
        } while (v.isZero());
        ex.push_back({1000 - 3 * i, "", "A", v});
    }
    for (int t = 0; t < 10; ++t) {
        Vector q(3);
        q << 1, coord(rng), 0;
        for (std::size_t k : {1u, 7u, 30u, 300u}) EXPECT_EQ(knn(ex, q, k).entries, brute_force(ex, q, k));
    }
}

TEST(Knn, TruncatesWhenKExceedsPool) {
    auto pool = random_pool(3, 5, 4);
    auto r = knn(pool.examples(), Vector::Ones(4), 9);
    EXPECT_EQ(r.size(), 5u);
    EXPECT_TRUE(r.truncated);
    EXPECT_THROW(knn({}, Vector::Ones(4), 1), InputError);
    EXPECT_THROW(knn(pool.examples(), Vector::Ones(4), 0), InputError);
}

TEST(Knn, ScaleInvariant) {
    std::mt19937_64 rng(6);
    auto ex = random_examples(rng, 200, 10);
    for (int t = 0; t < 10; ++t) {
        Vector q = random_vector(rng, 10);
        auto a = knn(ex, q, 12), b = knn(ex, 4.0 * q, 12);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.entries[i].id, b.entries[i].id);
    }
}

TEST(Knn, TopKIsPrefixOfTopKPlusOne) {
    std::mt19937_64 rng(7);
    auto ex = random_examples(rng, 150, 6);
    Vector q = random_vector(rng, 6);
    auto longest = knn(ex, q, 40);
    for (std::size_t k = 1; k < 40; ++k) {
        auto r = knn(ex, q, k);
        EXPECT_TRUE(std::equal(r.entries.begin(), r.entries.end(), longest.entries.begin()));
    }
}

TEST(Knn, ResultIsStrictlyOrdered) {
    std::mt19937_64 rng(8);
    auto ex = random_examples(rng, 400, 12);
    auto r = knn(ex, random_vector(rng, 12), 50);
    std::set<ExampleId> ids;
    for (std::size_t i = 0; i < r.size(); ++i) {
        ids.insert(r.entries[i].id);
        if (i) EXPECT_TRUE(ranks_before(r.entries[i - 1], r.entries[i]));
        EXPECT_EQ(ex[r.entries[i].position].id, r.entries[i].id);
    }
    EXPECT_EQ(ids.size(), r.size());
}

TEST(TopK, SelectsAndSorts) {
    std::vector<RankedEntry> scored = {{4, 0.5, 0}, {1, 0.9, 1}, {3, 0.5, 2}, {0, 0.1, 3}};
    auto r = top_k(scored, 3);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r.entries[0].id, 1u);
    EXPECT_EQ(r.entries[1].id, 3u);
    EXPECT_EQ(r.entries[2].id, 4u);
}

TEST(RandomSelect, DeterministicForSeed) {
    auto pool = random_pool(1, 50, 3);
    auto a = random_select(pool.examples(), 8, 42), b = random_select(pool.examples(), 8, 42);
    EXPECT_EQ(a.entries, b.entries);
    EXPECT_NE(a.entries, random_select(pool.examples(), 8, 43).entries);
    for (const auto& e : a.entries) EXPECT_EQ(e.score, 0.0);
}

TEST(RandomSelect, FullDrawIsPermutation) {
    auto pool = random_pool(1, 30, 3);
    auto r = random_select(pool.examples(), 30, 7);
    std::set<ExampleId> ids;
    for (const auto& e : r.entries) ids.insert(e.id);
    EXPECT_EQ(ids.size(), 30u);
    EXPECT_THROW(random_select(pool.examples(), 31, 7), InputError);
    EXPECT_THROW(random_select(pool.examples(), 0, 7), InputError);
}

TEST(RandomSelect, UniformOverTrials) {
    auto pool = random_pool(1, 10, 3);
    std::map<ExampleId, int> counts;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) ++counts[random_select(pool.examples(), 1, seed).entries[0].id];
    ASSERT_EQ(counts.size(), 10u);
    for (const auto& [id, c] : counts) {
        EXPECT_GE(c, 800) << id;
        EXPECT_LE(c, 1200) << id;
    }
}

TEST(RandomSelect, PairsAreUniform) {
    // every unordered pair of a 5-item pool should appear about 1/10 of the time
    auto pool = random_pool(1, 5, 3);
    std::map<std::pair<ExampleId, ExampleId>, int> counts;
    for (std::uint64_t seed = 0; seed < 20000; ++seed) {
        auto r = random_select(pool.examples(), 2, seed);
        auto a = r.entries[0].id, b = r.entries[1].id;
        ASSERT_NE(a, b);
        ++counts[{std::min(a, b), std::max(a, b)}];
    }
    ASSERT_EQ(counts.size(), 10u);
    for (const auto& [pair, c] : counts) {
        EXPECT_GE(c, 1700);
        EXPECT_LE(c, 2300);
    }
}
