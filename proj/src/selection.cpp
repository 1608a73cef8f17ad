#include "iclsel/selection.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

namespace iclsel {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::random: return "random";
        case Method::bm25: return "bm25";
        case Method::topk: return "topk";
        case Method::topk_sd: return "topk_sd";
    }
    return "?";
}

std::string_view to_string(Ordering o) {
    switch (o) {
        case Ordering::similarity_ascending: return "similarity_ascending";
        case Ordering::similarity_descending: return "similarity_descending";
        case Ordering::pool_order: return "pool_order";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    for (auto m : {Method::random, Method::bm25, Method::topk, Method::topk_sd})
        if (s == to_string(m)) return m;
    throw InputError(fmt::format("unknown method '{}' (expected random, bm25, topk or topk_sd)", s));
}

Ordering parse_ordering(std::string_view s) {
    for (auto o : {Ordering::similarity_ascending, Ordering::similarity_descending, Ordering::pool_order})
        if (s == to_string(o)) return o;
    throw InputError(
        fmt::format("unknown ordering '{}' (expected similarity_ascending, similarity_descending or pool_order)", s));
}

void SelectorConfig::validate() const {
    if (k == 0) throw InputError("k must be positive");
    if (method == Method::topk_sd) {
        if (!lambda) throw InputError("topk_sd requires lambda");
        check_lambda(*lambda);
    } else if (lambda) {
        throw InputError(fmt::format("lambda is only valid with topk_sd, not {}", to_string(method)));
    }
    if (stage1_size) {
        if (method != Method::topk && method != Method::topk_sd)
            throw InputError("two-stage selection needs topk or topk_sd for stage 1");
        if (*stage1_size < k) throw InputError(fmt::format("stage1_size {} is smaller than k {}", *stage1_size, k));
    }
}

SelectorConfig SelectorConfig::canonical() const {
    SelectorConfig c;
    c.method = method;
    c.k = k;
    c.stage1_size = stage1_size;
    c.ordering = ordering;
    switch (method) {
        case Method::random: c.seed = seed; break;
        case Method::bm25: c.bm25 = bm25; break;
        case Method::topk: break;
        case Method::topk_sd:
            if (lambda && *lambda == 1.0) {
                c.method = Method::topk;
            } else {
                c.lambda = lambda;
                c.query_synthesis = query_synthesis;
            }
            break;
    }
    return c;
}

nlohmann::ordered_json to_json(const SelectorConfig& config) {
    auto c = config.canonical();
    nlohmann::ordered_json j;
    j["method"] = std::string(to_string(c.method));
    j["k"] = c.k;
    if (c.method == Method::topk_sd) {
        j["lambda"] = *c.lambda;
        j["query_synthesis"] = c.query_synthesis;
    }
    if (c.method == Method::random) j["seed"] = c.seed;
    if (c.method == Method::bm25) {
        j["k1"] = c.bm25.k1;
        j["b"] = c.bm25.b;
    }
    if (c.stage1_size) j["stage1_size"] = *c.stage1_size;
    j["ordering"] = std::string(to_string(c.ordering));
    return j;
}

SelectorConfig selector_config_from_json(const nlohmann::json& j) {
    SelectorConfig c;
    c.method = parse_method(j.at("method").get<std::string>());
    c.k = j.at("k").get<std::size_t>();
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("query_synthesis")) c.query_synthesis = j.at("query_synthesis").get<bool>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("k1")) c.bm25.k1 = j.at("k1").get<double>();
    if (j.contains("b")) c.bm25.b = j.at("b").get<double>();
    if (j.contains("stage1_size")) c.stage1_size = j.at("stage1_size").get<std::size_t>();
    if (j.contains("ordering")) c.ordering = parse_ordering(j.at("ordering").get<std::string>());
    c.validate();
    return c;
}

std::string to_jsonl_line(const SelectionResult& result) {
    nlohmann::ordered_json j;
    j["query_id"] = result.query_id;
    j["config"] = to_json(result.config);
    auto demos = nlohmann::ordered_json::array();
    for (const auto& d : result.demonstrations) {
        nlohmann::ordered_json dj;
        dj["id"] = d.id;
        dj["label"] = d.label;
        dj["sim_original"] = d.sim_original;
        dj["sim_selection"] = d.sim_selection;
        demos.push_back(std::move(dj));
    }
    j["demonstrations"] = std::move(demos);
    return j.dump() + "\n";
}

SelectionResult selection_from_json(const nlohmann::json& j) {
    SelectionResult r;
    r.query_id = j.at("query_id").get<ExampleId>();
    r.config = selector_config_from_json(j.at("config"));
    for (const auto& d : j.at("demonstrations")) {
        r.demonstrations.push_back({d.at("id").get<ExampleId>(), d.at("label").get<Label>(),
                                    d.at("sim_original").get<double>(), d.at("sim_selection").get<double>()});
    }
    return r;
}

std::vector<SelectionResult> parse_selections(std::string_view jsonl, std::string_view source) {
    std::vector<SelectionResult> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto end = nl == std::string_view::npos ? jsonl.size() : nl;
        ++line_no;
        auto line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            out.push_back(selection_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(fmt::format("{}:{}: invalid selection record: {}", source, line_no, e.what()));
        } catch (const InputError& e) {
            throw InputError(fmt::format("{}:{}: {}", source, line_no, e.what()));
        }
    }
    return out;
}

Stage2Strategy truncate_strategy() {
    return [](std::span<const Demonstration> candidates, const Query&, std::size_t k) {
        std::vector<ExampleId> ids;
        for (std::size_t i = 0; i < std::min(k, candidates.size()); ++i) ids.push_back(candidates[i].id);
        return ids;
    };
}

void apply_ordering(std::vector<Demonstration>& demos, Ordering ordering) {
    auto by_rank = [](const Demonstration& a, const Demonstration& b) {
        if (a.sim_selection != b.sim_selection) return a.sim_selection > b.sim_selection;
        return a.id < b.id;
    };
    switch (ordering) {
        case Ordering::similarity_descending: std::sort(demos.begin(), demos.end(), by_rank); break;
        case Ordering::similarity_ascending:
            std::sort(demos.begin(), demos.end(), by_rank);
            std::reverse(demos.begin(), demos.end());
            break;
        case Ordering::pool_order:
            std::sort(demos.begin(), demos.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
            break;
    }
}

std::uint64_t query_seed(std::uint64_t seed, ExampleId query_id) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (query_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Selector::Selector(const CandidatePool& pool, const SynthesizedPool* synthesized, SelectorConfig config,
                   Stage2Strategy stage2)
    : pool_(pool),
      synthesized_(synthesized),
      config_(std::move(config)),
      stage2_(std::move(stage2)),
      original_(pool.examples()) {
    config_.validate();
    if (config_.method == Method::topk_sd) {
        if (!synthesized_) throw InputError("topk_sd requires a synthesized pool");
        check_synthesized_matches(*synthesized_, pool_);
        if (synthesized_->lambda() != *config_.lambda)
            throw InputError(fmt::format("synthesized pool has lambda {} but the selector wants {}",
                                         synthesized_->lambda(), *config_.lambda));
        synthesized_index_.emplace(synthesized_->examples());
    }
    if (config_.method == Method::bm25) {
        for (const auto& e : pool_.examples())
            if (e.text.empty()) throw InputError(fmt::format("bm25 needs texts, but example {} has none", e.id));
        bm25_.emplace(pool_.examples(), config_.bm25);
    }
    if (config_.stage1_size && !stage2_) throw InputError("two-stage selection needs a stage-2 strategy");
}

std::vector<Demonstration> Selector::candidates(const Query& query, std::size_t count, bool* truncated,
                                                bool* zero_query) const {
    if (query.embedding.size() != pool_.dimension())
        throw InputError(fmt::format("query {} has dimension {}, pool has {}", query.id, query.embedding.size(),
                                     pool_.dimension()));
    RankedList ranked;
    bool original_space = false;
    switch (config_.method) {
        case Method::topk:
            ranked = original_.search(query.embedding, count);
            original_space = true;
            break;
        case Method::topk_sd: {
            Vector q = config_.query_synthesis
                           ? synthesize_query(query.embedding, synthesized_->reference(), *config_.lambda)
                           : query.embedding;
            if (zero_query) *zero_query = q.isZero(0.0);
            ranked = synthesized_index_->search(q, count);
            break;
        }
        case Method::bm25: ranked = bm25_->rank(query.text, count); break;
        case Method::random:
            ranked = random_select(pool_.examples(), count, query_seed(config_.seed, query.id));
            break;
    }
    if (truncated) *truncated = ranked.truncated;
    std::vector<Demonstration> out;
    out.reserve(ranked.size());
    for (const auto& e : ranked.entries) {
        double original = original_space ? e.score : original_.score(e.position, query.embedding);
        out.push_back({e.id, pool_[e.position].label, original, e.score});
    }
    return out;
}

SelectionResult Selector::select(const Query& query) const {
    SelectionResult result;
    result.query_id = query.id;
    result.config = config_.canonical();
    if (!config_.stage1_size) {
        result.demonstrations = candidates(query, config_.k, &result.truncated, &result.zero_query_vector);
    } else {
        auto pool_candidates = candidates(query, *config_.stage1_size, nullptr, &result.zero_query_vector);
        const std::size_t want = std::min(config_.k, pool_candidates.size());
        result.truncated = config_.k > pool_.size();
        auto ids = stage2_(pool_candidates, query, want);
        if (ids.size() != want)
            throw ContractError(fmt::format("stage-2 strategy returned {} ids, expected {}", ids.size(), want));
        std::unordered_set<ExampleId> seen;
        for (auto id : ids) {
            if (!seen.insert(id).second) throw ContractError(fmt::format("stage-2 strategy repeated id {}", id));
            auto it = std::find_if(pool_candidates.begin(), pool_candidates.end(),
                                   [id](const Demonstration& d) { return d.id == id; });
            if (it == pool_candidates.end())
                throw ContractError(fmt::format("stage-2 strategy returned id {} outside the candidate set", id));
            result.demonstrations.push_back(*it);
        }
    }
    apply_ordering(result.demonstrations, config_.ordering);
    return result;
}

SelectionResult select(const CandidatePool& pool, const SynthesizedPool* synthesized, const Query& query,
                       const SelectorConfig& config) {
    return Selector(pool, synthesized, config).select(query);
}

SelectionResult two_stage_select(const CandidatePool& pool, const SynthesizedPool* synthesized, const Query& query,
                                 const SelectorConfig& config, const Stage2Strategy& stage2) {
    if (!config.stage1_size) throw InputError("two_stage_select requires stage1_size");
    return Selector(pool, synthesized, config, stage2).select(query);
}

}  // namespace iclsel
