#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "iclsel/error.hpp"
#include "iclsel/metrics.hpp"
#include "iclsel/synthesis.hpp"
#include "support.hpp"

using namespace iclsel;
using namespace iclsel::testing;

namespace {

std::vector<Label> labels(std::initializer_list<std::pair<const char*, int>> runs) {
    std::vector<Label> out;
    for (const auto& [l, n] : runs) out.insert(out.end(), n, l);
    return out;
}

std::vector<Vote> votes(const std::vector<Label>& ls, const std::vector<double>& sims) {
    std::vector<Vote> out;
    for (std::size_t i = 0; i < ls.size(); ++i) out.push_back({ls[i], sims[i]});
    return out;
}

/// Counts per label, keeps the tied maxima, picks the one with the most
/// similar demonstration, then the smallest label.
Label counting_oracle(const std::vector<Vote>& vs) {
    std::map<Label, int> count;
    for (const auto& v : vs) ++count[v.label];
    int best = 0;
    for (const auto& [l, c] : count) best = std::max(best, c);
    Label winner;
    double best_sim = -INFINITY;
    for (const auto& v : vs)
        if (count[v.label] == best && (v.similarity > best_sim || (v.similarity == best_sim && v.label < winner))) {
            best_sim = v.similarity;
            winner = v.label;
        }
    return winner;
}

ConsistencyRecord record(std::size_t matching, std::size_t k, std::optional<Label> icl) {
    ConsistencyRecord r;
    r.k = k;
    r.matching_count = matching;
    r.consistency = static_cast<double>(matching) / k;
    r.gold_label = "P";
    r.icl_prediction = std::move(icl);
    return r;
}

}  // namespace

TEST(Consistency, PaperTableOne) {
    EXPECT_EQ(label_consistency(labels({{"P", 6}, {"N", 2}}), "P"), 0.75);
    EXPECT_EQ(label_consistency(labels({{"P", 2}, {"N", 6}}), "P"), 0.25);
    EXPECT_EQ(label_consistency(labels({{"P", 8}}), "P"), 1.0);
    EXPECT_THROW(label_consistency({}, "P"), InputError);
}

TEST(Consistency, PermutationInvariant) {
    std::mt19937_64 rng(2);
    auto ls = labels({{"A", 3}, {"B", 4}, {"C", 1}});
    double c = label_consistency(ls, "B");
    for (int t = 0; t < 50; ++t) {
        std::shuffle(ls.begin(), ls.end(), rng);
        EXPECT_EQ(label_consistency(ls, "B"), c);
    }
}

TEST(Vote, Examples) {
    EXPECT_EQ(vote_predict(votes(labels({{"P", 3}, {"N", 1}}), {0.1, 0.2, 0.3, 0.9})), "P");
    EXPECT_EQ(vote_predict(votes({"P", "N"}, {0.9, 0.8})), "P");
    EXPECT_EQ(vote_predict(votes({"P", "N"}, {0.8, 0.9})), "N");
    EXPECT_EQ(vote_predict(votes({"P", "N"}, {0.5, 0.5})), "N");
    EXPECT_THROW(vote_predict({}), InputError);
}

TEST(Vote, MatchesCountingOracle) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> cls(0, 2);
    std::uniform_int_distribution<int> sim(0, 5);  // coarse, so similarity ties happen
    const std::vector<Label> names = {"x", "y", "z"};
    for (int t = 0; t < 1000; ++t) {
        std::vector<Vote> vs;
        for (int i = 0; i < 8; ++i) vs.push_back({names[cls(rng)], sim(rng) / 5.0});
        EXPECT_EQ(vote_predict(vs), counting_oracle(vs));
    }
}

TEST(Vote, StrictMajorityIsPermutationInvariant) {
    std::mt19937_64 rng(11);
    auto vs = votes(labels({{"A", 5}, {"B", 3}}), {0.1, 0.2, 0.3, 0.4, 0.5, 0.9, 0.95, 0.99});
    for (int t = 0; t < 50; ++t) {
        std::shuffle(vs.begin(), vs.end(), rng);
        EXPECT_EQ(vote_predict(vs), "A");
    }
}

TEST(Accuracy, Examples) {
    std::vector<Label> g = {"a", "b", "c", "d"};
    EXPECT_EQ(accuracy(g, g), 1.0);
    EXPECT_EQ(accuracy(std::vector<Label>{"x", "x", "x", "x"}, g), 0.0);
    EXPECT_EQ(accuracy(std::vector<Label>{"a", "b", "c", "x"}, g), 0.75);
    EXPECT_THROW(accuracy(std::vector<Label>{"a"}, g), InputError);
    EXPECT_THROW(accuracy({}, {}), InputError);
}

TEST(Record, FromSelection) {
    SelectionResult s;
    s.query_id = 3;
    for (auto [l, sim] : std::vector<std::pair<Label, double>>{{"P", 0.2}, {"N", 0.9}, {"P", 0.5}, {"N", 0.1}})
        s.demonstrations.push_back({0, l, sim - 0.05, sim});
    auto r = make_record(s, "P");
    EXPECT_EQ(r.k, 4u);
    EXPECT_EQ(r.matching_count, 2u);
    EXPECT_EQ(r.consistency, 0.5);
    EXPECT_EQ(r.vote_prediction, "N");
    EXPECT_NEAR(r.avg_original_similarity, 0.375, 1e-15);
}

TEST(Record, StrictMajorityVoteIsCorrect) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> cls(0, 3);
    std::uniform_real_distribution<double> sim(-1, 1);
    const std::vector<Label> names = {"a", "b", "c", "d"};
    for (int t = 0; t < 2000; ++t) {
        SelectionResult s;
        for (int i = 0; i < 8; ++i) {
            double v = sim(rng);
            s.demonstrations.push_back({static_cast<ExampleId>(i), names[cls(rng)], v, v});
        }
        auto r = make_record(s, names[cls(rng)]);
        EXPECT_EQ(r.consistency, static_cast<double>(r.matching_count) / r.k);
        if (r.consistency > 0.5) EXPECT_EQ(r.vote_prediction, r.gold_label);
    }
}

TEST(Buckets, RowsPerConsistencyValue) {
    std::vector<ConsistencyRecord> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(record(8, 8, "P"));
    auto rows = consistency_accuracy_buckets(rs, 8);
    ASSERT_EQ(rows.size(), 9u);
    for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_EQ(rows[j].count, 0u);
        EXPECT_FALSE(rows[j].accuracy);
        EXPECT_EQ(rows[j].consistency, j / 8.0);
    }
    EXPECT_EQ(rows[8].count, 5u);
    EXPECT_EQ(rows[8].accuracy, 1.0);
}

TEST(Buckets, AccuracyAndCsv) {
    std::vector<ConsistencyRecord> rs = {record(2, 4, "P"), record(2, 4, "N"), record(4, 4, "P"), record(0, 4, "N")};
    auto rows = consistency_accuracy_buckets(rs, 4);
    std::size_t total = 0;
    for (const auto& r : rows) total += r.count;
    EXPECT_EQ(total, rs.size());
    EXPECT_EQ(rows[2].accuracy, 0.5);
    EXPECT_EQ(buckets_csv(rows),
              "consistency,count,accuracy\n"
              "0.000000,1,0.000000\n"
              "0.250000,0,\n"
              "0.500000,2,0.500000\n"
              "0.750000,0,\n"
              "1.000000,1,1.000000\n");
    rs.push_back(record(1, 4, std::nullopt));
    EXPECT_THROW(consistency_accuracy_buckets(rs, 4), InputError);
    EXPECT_THROW(consistency_accuracy_buckets(std::vector<ConsistencyRecord>{record(1, 3, "P")}, 4), InputError);
}

TEST(Buckets, VoteScorerAccuracyRisesAboveHalf) {
    auto pool = load_pool(fixture("mix4_pool.jsonl"));
    auto queries = load_queries(fixture("mix4_queries200.jsonl"), pool);
    SelectorConfig c;
    c.method = Method::topk;
    IclPredictor vote = [](const Query&, const SelectionResult& s) {
        std::vector<Vote> vs;
        for (const auto& d : s.demonstrations) vs.push_back({d.label, d.sim_selection});
        return vote_predict(vs);
    };
    auto report = evaluate(pool, nullptr, queries, c, vote);
    auto rows = consistency_accuracy_buckets(report.records, 8);
    std::optional<double> previous;
    for (const auto& r : rows) {
        if (r.consistency <= 0.5 || !r.accuracy) continue;
        EXPECT_EQ(*r.accuracy, 1.0);
        if (previous) EXPECT_GE(*r.accuracy, *previous);
        previous = r.accuracy;
    }
    EXPECT_EQ(report.aggregates.icl_accuracy, report.aggregates.vote_accuracy);
}

TEST(Evaluate, RequiresGoldLabels) {
    auto pool = random_pool(1, 30, 4);
    std::vector<Query> qs = {make_query(0, Vector::Ones(4))};
    EXPECT_THROW(evaluate(pool, nullptr, qs, SelectorConfig{}), InputError);
}

TEST(Evaluate, ParallelEqualsSerial) {
    auto pool = load_pool(fixture("mix4_pool.jsonl"));
    auto queries = load_queries(fixture("mix4_queries100.jsonl"), pool);
    SelectorConfig c;
    c.method = Method::topk_sd;
    c.lambda = 0.5;
    auto synth = synthesize_pool(pool, 0.5);
    auto a = evaluate(pool, &synth, queries, c, {}, 1);
    auto b = evaluate(pool, &synth, queries, c, {}, 4);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(a.selections, b.selections);
}

TEST(Evaluate, JsonRoundTrip) {
    auto pool = load_pool(fixture("mix4_pool.jsonl"));
    auto queries = load_queries(fixture("mix4_queries100.jsonl"), pool);
    auto report = evaluate(pool, nullptr, queries, SelectorConfig{});
    auto j = nlohmann::json::parse(to_json(report).dump());
    auto back = evaluation_from_json(j);
    EXPECT_EQ(to_json(back).dump(), to_json(report).dump());
    EXPECT_EQ(to_text(back), to_text(report));
    EXPECT_EQ(report.aggregates.queries, 100u);
    EXPECT_FALSE(report.aggregates.icl_accuracy);
}

TEST(Grid, Parsing) {
    auto g = parse_grid("0.0:0.9:0.1");
    ASSERT_EQ(g.size(), 10u);
    EXPECT_EQ(g, default_lambda_grid());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], i / 10.0, 1e-12);
    EXPECT_EQ(g[3], 0.3);
    EXPECT_EQ(parse_grid("0.2, 0.5,1"), (std::vector<double>{0.2, 0.5, 1.0}));
    EXPECT_EQ(parse_grid("1:8:1").size(), 8u);
    EXPECT_THROW(parse_grid(""), InputError);
    EXPECT_THROW(parse_grid("0:1:0"), InputError);
    EXPECT_THROW(parse_grid("a,b"), InputError);
}

TEST(Sweep, LambdaOneRowEqualsTopk) {
    auto pool = load_pool(fixture("mix4_pool.jsonl"));
    auto queries = load_queries(fixture("mix4_queries100.jsonl"), pool);
    std::vector<double> grid = {1.0};
    auto sweep = lambda_sweep(pool, queries, grid, SelectorConfig{});
    ASSERT_EQ(sweep.points.size(), 1u);
    EXPECT_TRUE(sweep.points[0].reference);
    auto topk = evaluate(pool, nullptr, queries, SelectorConfig{});
    for (const auto& a : sweep.points[0].series) {
        EXPECT_EQ(a.mean_consistency, topk.aggregates.mean_consistency);
        EXPECT_EQ(a.mean_similarity, topk.aggregates.mean_similarity);
        EXPECT_EQ(a.vote_accuracy, topk.aggregates.vote_accuracy);
    }
}

TEST(Sweep, DefaultGridHasTenRowsPlusReference) {
    auto pool = load_pool(fixture("gauss2_pool.jsonl"));
    auto queries = load_queries(fixture("gauss2_queries100.jsonl"), pool);
    auto grid = default_lambda_grid();
    auto sweep = lambda_sweep(pool, queries, grid, SelectorConfig{}, {}, 2);
    ASSERT_EQ(sweep.points.size(), 11u);
    EXPECT_EQ(sweep.series, (std::vector<std::string>{"synth_query", "raw_query"}));
    for (std::size_t i = 0; i < 10; ++i) EXPECT_FALSE(sweep.points[i].reference);
    EXPECT_TRUE(sweep.points[10].reference);
    EXPECT_EQ(sweep.points[10].value, 1.0);

    // original-space similarity rises with lambda, up to noise
    for (std::size_t s = 0; s < sweep.series.size(); ++s)
        for (std::size_t i = 1; i < sweep.points.size(); ++i)
            EXPECT_GE(sweep.points[i].series[s].mean_similarity, sweep.points[i - 1].series[s].mean_similarity - 0.02);

    auto csv = sweep_csv(sweep);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "lambda,synth_query_consistency,synth_query_similarity,synth_query_vote_accuracy,"
              "synth_query_icl_accuracy,raw_query_consistency,raw_query_similarity,raw_query_vote_accuracy,"
              "raw_query_icl_accuracy,reference");
    auto back = sweep_from_json(nlohmann::json::parse(to_json(sweep).dump()));
    EXPECT_EQ(sweep_csv(back), csv);
    EXPECT_EQ(to_text(back), to_text(sweep));
}

TEST(Sweep, RejectsBadGrids) {
    auto pool = random_pool(1, 30, 4);
    std::vector<Query> qs = {make_query(0, Vector::Ones(4), Label("A"))};
    std::vector<double> unsorted = {0.5, 0.2}, outside = {0.5, 1.5}, dup = {0.2, 0.2};
    EXPECT_THROW(lambda_sweep(pool, qs, unsorted, SelectorConfig{}), InputError);
    EXPECT_THROW(lambda_sweep(pool, qs, outside, SelectorConfig{}), InputError);
    EXPECT_THROW(lambda_sweep(pool, qs, dup, SelectorConfig{}), InputError);
    std::vector<std::size_t> ks = {4, 2};
    EXPECT_THROW(k_sweep(pool, qs, ks, SelectorConfig{}), InputError);
}

TEST(Sweep, KAxis) {
    auto pool = load_pool(fixture("mix4_pool.jsonl"));
    auto queries = load_queries(fixture("mix4_queries100.jsonl"), pool);
    SelectorConfig c;
    c.method = Method::topk_sd;
    c.lambda = 0.6;
    std::vector<std::size_t> ks = {1, 4, 8};
    auto sweep = k_sweep(pool, queries, ks, c);
    EXPECT_EQ(sweep.axis, SweepAxis::k);
    EXPECT_EQ(sweep.series, (std::vector<std::string>{"topk_sd", "topk"}));
    ASSERT_EQ(sweep.points.size(), 3u);
    auto synth = synthesize_pool(pool, 0.6);
    c.k = 4;
    auto direct = evaluate(pool, &synth, queries, c);
    EXPECT_EQ(sweep.points[1].series[0].mean_consistency, direct.aggregates.mean_consistency);
    EXPECT_EQ(sweep_csv(sweep).substr(0, 2), "k,");
}

TEST(Sweep, Deterministic) {
    auto pool = load_pool(fixture("gauss2_pool.jsonl"));
    auto queries = load_queries(fixture("gauss2_queries100.jsonl"), pool);
    auto grid = default_lambda_grid();
    auto a = lambda_sweep(pool, queries, grid, SelectorConfig{}, {}, 1);
    auto b = lambda_sweep(pool, queries, grid, SelectorConfig{}, {}, 3);
    EXPECT_EQ(sweep_csv(a), sweep_csv(b));
    EXPECT_EQ(a.config_digest, b.config_digest);
}
