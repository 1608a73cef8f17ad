#include "iclsel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "iclsel/io.hpp"

namespace iclsel {

double label_consistency(std::span<const Label> selected, const Label& gold) {
    if (selected.empty()) throw InputError("label_consistency: no demonstrations");
    auto matching = std::count(selected.begin(), selected.end(), gold);
    return static_cast<double>(matching) / static_cast<double>(selected.size());
}

Label vote_predict(std::span<const Vote> selected) {
    if (selected.empty()) throw InputError("vote_predict: no demonstrations");
    struct Tally {
        std::size_t count = 0;
        double best = -INFINITY;
    };
    std::map<Label, Tally> tallies;  // ordered: ties fall to the smallest label
    for (const auto& v : selected) {
        auto& t = tallies[v.label];
        ++t.count;
        t.best = std::max(t.best, v.similarity);
    }
    auto winner = tallies.begin();
    for (auto it = std::next(tallies.begin()); it != tallies.end(); ++it) {
        const Tally& c = it->second;
        const Tally& w = winner->second;
        if (c.count > w.count || (c.count == w.count && c.best > w.best)) winner = it;
    }
    return winner->first;
}

double accuracy(std::span<const Label> predictions, std::span<const Label> golds) {
    if (predictions.size() != golds.size())
        throw InputError(fmt::format("accuracy: {} predictions vs {} gold labels", predictions.size(), golds.size()));
    if (predictions.empty()) throw InputError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == golds[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

ConsistencyRecord make_record(const SelectionResult& selection, const Label& gold) {
    if (selection.demonstrations.empty())
        throw InputError(fmt::format("query {}: no demonstrations selected", selection.query_id));
    ConsistencyRecord r;
    r.query_id = selection.query_id;
    r.gold_label = gold;
    r.k = selection.demonstrations.size();
    std::vector<Vote> votes;
    double sim = 0.0;
    for (const auto& d : selection.demonstrations) {
        r.matching_count += d.label == gold;
        sim += d.sim_original;
        votes.push_back({d.label, d.sim_selection});
    }
    r.consistency = static_cast<double>(r.matching_count) / static_cast<double>(r.k);
    r.avg_original_similarity = sim / static_cast<double>(r.k);
    r.vote_prediction = vote_predict(votes);
    return r;
}

std::vector<BucketRow> consistency_accuracy_buckets(std::span<const ConsistencyRecord> records, std::size_t k) {
    if (k == 0) throw InputError("buckets: k must be positive");
    std::vector<BucketRow> rows(k + 1);
    std::vector<std::size_t> hits(k + 1, 0);
    for (std::size_t j = 0; j <= k; ++j) {
        rows[j].matching_count = j;
        rows[j].consistency = static_cast<double>(j) / static_cast<double>(k);
    }
    for (const auto& r : records) {
        if (!r.icl_prediction) throw InputError(fmt::format("query {}: record has no ICL prediction", r.query_id));
        if (r.k != k) throw InputError(fmt::format("query {}: record has k={}, buckets use k={}", r.query_id, r.k, k));
        ++rows[r.matching_count].count;
        hits[r.matching_count] += *r.icl_prediction == r.gold_label;
    }
    for (std::size_t j = 0; j <= k; ++j)
        if (rows[j].count > 0) rows[j].accuracy = static_cast<double>(hits[j]) / static_cast<double>(rows[j].count);
    return rows;
}

std::string buckets_csv(std::span<const BucketRow> rows) {
    std::string out = "consistency,count,accuracy\n";
    for (const auto& r : rows)
        out += fmt::format("{:.6f},{},{}\n", r.consistency, r.count,
                           r.accuracy ? fmt::format("{:.6f}", *r.accuracy) : std::string());
    return out;
}

Aggregates aggregate(std::span<const ConsistencyRecord> records) {
    Aggregates a;
    a.queries = records.size();
    if (records.empty()) return a;
    std::size_t vote_hits = 0, icl_hits = 0;
    bool all_icl = true;
    for (const auto& r : records) {
        a.mean_consistency += r.consistency;
        a.mean_similarity += r.avg_original_similarity;
        vote_hits += r.vote_prediction == r.gold_label;
        if (r.icl_prediction)
            icl_hits += *r.icl_prediction == r.gold_label;
        else
            all_icl = false;
    }
    const double n = static_cast<double>(records.size());
    a.mean_consistency /= n;
    a.mean_similarity /= n;
    a.vote_accuracy = static_cast<double>(vote_hits) / n;
    if (all_icl) a.icl_accuracy = static_cast<double>(icl_hits) / n;
    return a;
}

EvaluationReport evaluate(const CandidatePool& pool, const SynthesizedPool* synthesized,
                          std::span<const Query> queries, const SelectorConfig& config,
                          const IclPredictor& predictor, std::size_t threads) {
    for (const auto& q : queries)
        if (!q.gold_label) throw InputError(fmt::format("query {} has no gold label", q.id));
    Selector selector(pool, synthesized, config);
    EvaluationReport report;
    report.config = config;
    report.selections.resize(queries.size());
    report.records.resize(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        report.selections[i] = selector.select(queries[i]);
        report.records[i] = make_record(report.selections[i], *queries[i].gold_label);
        if (predictor) report.records[i].icl_prediction = predictor(queries[i], report.selections[i]);
    });
    report.aggregates = aggregate(report.records);
    if (synthesized && config.method == Method::topk_sd && !synthesized->zero_vector_ids().empty())
        report.warnings.push_back(fmt::format("lambda {}: {} synthesized vectors are exactly zero (cosine taken as 0)",
                                              synthesized->lambda(), synthesized->zero_vector_ids().size()));
    for (const auto& s : report.selections) {
        if (s.zero_query_vector)
            report.warnings.push_back(fmt::format("query {}: synthesized query vector is exactly zero", s.query_id));
        if (s.truncated)
            report.warnings.push_back(fmt::format("query {}: pool smaller than k={}", s.query_id, config.k));
    }
    return report;
}

namespace {

nlohmann::ordered_json aggregates_json(const Aggregates& a) {
    nlohmann::ordered_json j;
    j["queries"] = a.queries;
    j["mean_consistency"] = a.mean_consistency;
    j["mean_similarity"] = a.mean_similarity;
    j["vote_accuracy"] = a.vote_accuracy;
    if (a.icl_accuracy)
        j["icl_accuracy"] = *a.icl_accuracy;
    else
        j["icl_accuracy"] = nullptr;
    return j;
}

Aggregates aggregates_from_json(const nlohmann::json& j) {
    Aggregates a;
    a.queries = j.at("queries").get<std::size_t>();
    a.mean_consistency = j.at("mean_consistency").get<double>();
    a.mean_similarity = j.at("mean_similarity").get<double>();
    a.vote_accuracy = j.at("vote_accuracy").get<double>();
    if (j.contains("icl_accuracy") && !j.at("icl_accuracy").is_null()) a.icl_accuracy = j.at("icl_accuracy").get<double>();
    return a;
}

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }
std::string pct(const std::optional<double>& v) { return v ? pct(*v) : std::string("-"); }

std::string fixed6(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

nlohmann::ordered_json to_json(const EvaluationReport& report) {
    nlohmann::ordered_json j;
    j["kind"] = "evaluation";
    j["config"] = to_json(report.config);
    j["aggregates"] = aggregates_json(report.aggregates);
    auto records = nlohmann::ordered_json::array();
    for (const auto& r : report.records) {
        nlohmann::ordered_json rj;
        rj["query_id"] = r.query_id;
        rj["gold_label"] = r.gold_label;
        rj["k"] = r.k;
        rj["matching_count"] = r.matching_count;
        rj["consistency"] = r.consistency;
        rj["avg_original_similarity"] = r.avg_original_similarity;
        rj["vote_prediction"] = r.vote_prediction;
        if (r.icl_prediction)
            rj["icl_prediction"] = *r.icl_prediction;
        else
            rj["icl_prediction"] = nullptr;
        records.push_back(std::move(rj));
    }
    j["records"] = std::move(records);
    j["warnings"] = report.warnings;
    return j;
}

EvaluationReport evaluation_from_json(const nlohmann::json& j) {
    try {
        if (j.value("kind", std::string()) != "evaluation") throw InputError("not an evaluation report");
        EvaluationReport r;
        r.config = selector_config_from_json(j.at("config"));
        r.aggregates = aggregates_from_json(j.at("aggregates"));
        for (const auto& rj : j.at("records")) {
            ConsistencyRecord c;
            c.query_id = rj.at("query_id").get<ExampleId>();
            c.gold_label = rj.at("gold_label").get<Label>();
            c.k = rj.at("k").get<std::size_t>();
            c.matching_count = rj.at("matching_count").get<std::size_t>();
            c.consistency = rj.at("consistency").get<double>();
            c.avg_original_similarity = rj.at("avg_original_similarity").get<double>();
            c.vote_prediction = rj.at("vote_prediction").get<Label>();
            if (!rj.at("icl_prediction").is_null()) c.icl_prediction = rj.at("icl_prediction").get<Label>();
            r.records.push_back(std::move(c));
        }
        r.warnings = j.value("warnings", std::vector<std::string>{});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("invalid evaluation report: {}", e.what()));
    }
}

std::string to_text(const EvaluationReport& report) {
    const auto& a = report.aggregates;
    std::string out = fmt::format("method       {}\n", to_json(report.config).dump());
    out += fmt::format("{:<12} {:>12} {:>12} {:>10} {:>10}\n", "queries", "consistency", "similarity", "vote_acc",
                       "icl_acc");
    out += fmt::format("{:<12} {:>12} {:>12} {:>10} {:>10}\n", a.queries, pct(a.mean_consistency),
                       pct(a.mean_similarity), pct(a.vote_accuracy), pct(a.icl_accuracy));
    for (const auto& w : report.warnings) out += "warning: " + w + "\n";
    return out;
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 0; i < 10; ++i) grid.push_back(i / 10.0);
    return grid;
}

std::vector<double> parse_grid(std::string_view spec) {
    auto to_double = [&](std::string_view s) {
        std::string str(s);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(str, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != str.size()) throw InputError(fmt::format("invalid grid value '{}'", s));
        return v;
    };
    std::vector<double> out;
    if (spec.find(':') != std::string_view::npos) {
        auto a = spec.find(':');
        auto b = spec.find(':', a + 1);
        if (b == std::string_view::npos) throw InputError(fmt::format("grid '{}' must be start:stop:step", spec));
        double start = to_double(spec.substr(0, a));
        double stop = to_double(spec.substr(a + 1, b - a - 1));
        double step = to_double(spec.substr(b + 1));
        if (!(step > 0.0) || stop < start) throw InputError(fmt::format("grid '{}' is empty or has step <= 0", spec));
        for (std::size_t i = 0;; ++i) {
            double v = start + static_cast<double>(i) * step;
            if (v > stop + step * 1e-9) break;
            // snap to 1e-12 so 0.1 + 0.2 style drift does not leak into reports
            out.push_back(std::round(v * 1e12) / 1e12);
        }
    } else {
        std::size_t pos = 0;
        while (pos <= spec.size()) {
            auto c = spec.find(',', pos);
            auto end = c == std::string_view::npos ? spec.size() : c;
            out.push_back(to_double(spec.substr(pos, end - pos)));
            if (c == std::string_view::npos) break;
            pos = c + 1;
        }
    }
    return out;
}

namespace {

void check_increasing(std::span<const double> grid) {
    if (grid.empty()) throw InputError("sweep grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InputError("sweep grid must be strictly increasing");
}

std::string sweep_digest(const SelectorConfig& config, std::string_view axis, std::span<const double> grid,
                         std::span<const Query> queries, const CandidatePool& pool) {
    nlohmann::ordered_json j;
    j["axis"] = std::string(axis);
    j["config"] = to_json(config);
    j["grid"] = std::vector<double>(grid.begin(), grid.end());
    j["pool"] = pool.digest();
    std::vector<ExampleId> ids;
    for (const auto& q : queries) ids.push_back(q.id);
    j["queries"] = ids;
    return sha256_hex(j.dump());
}

void collect_warnings(SweepReport& out, const EvaluationReport& r) {
    for (const auto& w : r.warnings)
        if (std::find(out.warnings.begin(), out.warnings.end(), w) == out.warnings.end()) out.warnings.push_back(w);
}

}  // namespace

SweepReport lambda_sweep(const CandidatePool& pool, std::span<const Query> queries, std::span<const double> grid,
                         const SelectorConfig& config, const IclPredictor& predictor, std::size_t threads) {
    check_increasing(grid);
    for (double l : grid) check_lambda(l);
    std::vector<double> values(grid.begin(), grid.end());
    if (values.back() < 1.0) values.push_back(1.0);

    SweepReport out;
    out.axis = SweepAxis::lambda;
    out.series = {"synth_query", "raw_query"};
    out.seed = config.seed;
    SelectorConfig base = config;
    base.method = Method::topk_sd;
    base.lambda = 1.0;
    out.config_digest = sweep_digest(base, "lambda", values, queries, pool);

    auto centroids = class_centroids(pool);
    for (std::size_t p = 0; p < values.size(); ++p) {
        auto synthesized = synthesize_pool(pool, centroids, values[p]);
        SweepPoint point;
        point.value = values[p];
        point.reference = values[p] == 1.0;
        for (bool query_synthesis : {true, false}) {
            auto c = base;
            c.lambda = values[p];
            c.query_synthesis = query_synthesis;
            auto r = evaluate(pool, &synthesized, queries, c, predictor, threads);
            collect_warnings(out, r);
            point.series.push_back(r.aggregates);
        }
        out.points.push_back(std::move(point));
    }
    return out;
}

SweepReport k_sweep(const CandidatePool& pool, std::span<const Query> queries, std::span<const std::size_t> grid,
                    const SelectorConfig& config, const IclPredictor& predictor, std::size_t threads) {
    std::vector<double> values(grid.begin(), grid.end());
    check_increasing(values);
    if (grid.front() == 0) throw InputError("k grid values must be positive");

    SweepReport out;
    out.axis = SweepAxis::k;
    out.seed = config.seed;
    out.config_digest = sweep_digest(config, "k", values, queries, pool);
    const bool with_baseline = config.method != Method::topk;
    out.series = {std::string(to_string(config.method))};
    if (with_baseline) out.series.emplace_back("topk");

    std::optional<SynthesizedPool> synthesized;
    if (config.method == Method::topk_sd) {
        config.validate();
        synthesized.emplace(synthesize_pool(pool, *config.lambda));
    }
    for (auto k : grid) {
        SweepPoint point;
        point.value = static_cast<double>(k);
        auto c = config;
        c.k = k;
        if (c.stage1_size && *c.stage1_size < k) c.stage1_size = k;
        auto r = evaluate(pool, synthesized ? &*synthesized : nullptr, queries, c, predictor, threads);
        collect_warnings(out, r);
        point.series.push_back(r.aggregates);
        if (with_baseline) {
            SelectorConfig t;
            t.method = Method::topk;
            t.k = k;
            t.ordering = config.ordering;
            point.series.push_back(evaluate(pool, nullptr, queries, t, predictor, threads).aggregates);
        }
        out.points.push_back(std::move(point));
    }
    return out;
}

std::string sweep_csv(const SweepReport& report) {
    std::string out = report.axis == SweepAxis::lambda ? "lambda" : "k";
    for (const auto& s : report.series)
        out += fmt::format(",{0}_consistency,{0}_similarity,{0}_vote_accuracy,{0}_icl_accuracy", s);
    out += ",reference\n";
    for (const auto& p : report.points) {
        out += report.axis == SweepAxis::lambda ? fmt::format("{:.2f}", p.value)
                                                : fmt::format("{}", static_cast<std::size_t>(p.value));
        for (const auto& a : p.series) {
            out += fmt::format(",{},{},{},{}", fixed6(a.mean_consistency), fixed6(a.mean_similarity),
                               fixed6(a.vote_accuracy), a.icl_accuracy ? fixed6(*a.icl_accuracy) : std::string());
        }
        out += fmt::format(",{}\n", p.reference ? 1 : 0);
    }
    return out;
}

nlohmann::ordered_json to_json(const SweepReport& report) {
    nlohmann::ordered_json j;
    j["kind"] = "sweep";
    j["axis"] = report.axis == SweepAxis::lambda ? "lambda" : "k";
    j["series"] = report.series;
    j["seed"] = report.seed;
    j["config_digest"] = report.config_digest;
    auto points = nlohmann::ordered_json::array();
    for (const auto& p : report.points) {
        nlohmann::ordered_json pj;
        pj["value"] = p.value;
        pj["reference"] = p.reference;
        nlohmann::ordered_json series;
        for (std::size_t s = 0; s < p.series.size(); ++s) series[report.series[s]] = aggregates_json(p.series[s]);
        pj["series"] = std::move(series);
        points.push_back(std::move(pj));
    }
    j["points"] = std::move(points);
    j["warnings"] = report.warnings;
    return j;
}

SweepReport sweep_from_json(const nlohmann::json& j) {
    try {
        if (j.value("kind", std::string()) != "sweep") throw InputError("not a sweep report");
        SweepReport r;
        r.axis = j.at("axis").get<std::string>() == "k" ? SweepAxis::k : SweepAxis::lambda;
        r.series = j.at("series").get<std::vector<std::string>>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_digest = j.at("config_digest").get<std::string>();
        for (const auto& pj : j.at("points")) {
            SweepPoint p;
            p.value = pj.at("value").get<double>();
            p.reference = pj.at("reference").get<bool>();
            for (const auto& s : r.series) p.series.push_back(aggregates_from_json(pj.at("series").at(s)));
            r.points.push_back(std::move(p));
        }
        r.warnings = j.value("warnings", std::vector<std::string>{});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("invalid sweep report: {}", e.what()));
    }
}

std::string to_text(const SweepReport& report) {
    std::string out;
    out += fmt::format("{:<8}", report.axis == SweepAxis::lambda ? "lambda" : "k");
    for (const auto& s : report.series)
        out += fmt::format(" | {:>24} {:>10} {:>8} {:>8}", s + " consistency", "similarity", "vote", "icl");
    out += "\n";
    for (const auto& p : report.points) {
        auto v = report.axis == SweepAxis::lambda ? fmt::format("{:.2f}", p.value)
                                                  : fmt::format("{}", static_cast<std::size_t>(p.value));
        if (p.reference) v += "*";
        out += fmt::format("{:<8}", v);
        for (const auto& a : p.series)
            out += fmt::format(" | {:>24} {:>10} {:>8} {:>8}", pct(a.mean_consistency), pct(a.mean_similarity),
                               pct(a.vote_accuracy), pct(a.icl_accuracy));
        out += "\n";
    }
    if (report.axis == SweepAxis::lambda) out += "* reference row (original embeddings)\n";
    for (const auto& w : report.warnings) out += "warning: " + w + "\n";
    return out;
}

}  // namespace iclsel
