#include "iclsel/prompting.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "iclsel/error.hpp"
#include "iclsel/io.hpp"

namespace iclsel {

namespace {

constexpr std::string_view kText = "{text}";
constexpr std::string_view kLabel = "{label}";

/// Single left-to-right pass, so placeholder-looking text inside a
/// substituted value is never expanded again.
std::string substitute(std::string_view format, std::string_view text, const std::string* label) {
    std::string out;
    out.reserve(format.size() + text.size() + 16);
    std::size_t i = 0;
    while (i < format.size()) {
        if (format.substr(i, kText.size()) == kText) {
            out += text;
            i += kText.size();
        } else if (label && format.substr(i, kLabel.size()) == kLabel) {
            out += *label;
            i += kLabel.size();
        } else {
            out.push_back(format[i++]);
        }
    }
    return out;
}

}  // namespace

void PromptTemplate::validate(std::span<const Label> vocabulary) const {
    if (demonstration_format.find(kText) == std::string::npos ||
        demonstration_format.find(kLabel) == std::string::npos)
        throw InputError(fmt::format("template '{}': demonstration_format needs both {{text}} and {{label}}", task_name));
    if (query_format.find(kText) == std::string::npos)
        throw InputError(fmt::format("template '{}': query_format needs {{text}}", task_name));
    for (const auto& label : vocabulary)
        if (!verbalizer.contains(label))
            throw InputError(fmt::format("template '{}': no verbalizer entry for label '{}'", task_name, label));
    std::set<std::string> surfaces;
    for (const auto& [label, word] : verbalizer)
        if (!surfaces.insert(word).second)
            throw InputError(fmt::format("template '{}': verbalizer maps several labels to '{}'", task_name, word));
}

const std::string& PromptTemplate::verbalize(const Label& label) const {
    auto it = verbalizer.find(label);
    if (it == verbalizer.end())
        throw InputError(fmt::format("template '{}': no verbalizer entry for label '{}'", task_name, label));
    return it->second;
}

PromptTemplate template_from_json(const nlohmann::json& j) {
    try {
        PromptTemplate t;
        t.task_name = j.at("task_name").get<std::string>();
        t.demonstration_format = j.at("demonstration_format").get<std::string>();
        t.query_format = j.at("query_format").get<std::string>();
        t.separator = j.value("separator", std::string());
        t.verbalizer = j.at("verbalizer").get<std::map<Label, std::string>>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("invalid prompt template: {}", e.what()));
    }
}

PromptTemplate load_template(const std::filesystem::path& path) {
    try {
        return template_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string build_prompt(const PromptTemplate& tmpl, std::span<const PromptDemo> demos, const Query& query) {
    if (tmpl.demonstration_format.find(kText) == std::string::npos ||
        tmpl.demonstration_format.find(kLabel) == std::string::npos || tmpl.query_format.find(kText) == std::string::npos)
        throw InputError(fmt::format("template '{}' is missing a placeholder", tmpl.task_name));
    std::string out;
    for (const auto& d : demos) {
        out += substitute(tmpl.demonstration_format, d.text, &tmpl.verbalize(d.label));
        out += tmpl.separator;
    }
    out += substitute(tmpl.query_format, query.text, nullptr);
    return out;
}

std::vector<PromptDemo> prompt_demos(const CandidatePool& pool, const SelectionResult& selection) {
    std::vector<PromptDemo> out;
    out.reserve(selection.demonstrations.size());
    for (const auto& d : selection.demonstrations) {
        auto pos = pool.position_of(d.id);
        if (!pos) throw InputError(fmt::format("selection for query {} names unknown example {}", selection.query_id, d.id));
        out.push_back({pool[*pos].text, pool[*pos].label});
    }
    return out;
}

std::vector<DemoMeta> prompt_metadata(const PromptTemplate& tmpl, const SelectionResult& selection) {
    std::vector<DemoMeta> out;
    for (const auto& d : selection.demonstrations) out.push_back({tmpl.verbalize(d.label), d.sim_selection});
    return out;
}

LabelScores score_labels(const InferenceBackend& backend, const std::string& prompt, std::span<const Label> candidates,
                         const PromptTemplate& tmpl, std::span<const DemoMeta> metadata) {
    if (candidates.empty()) throw InputError("score_labels: no candidate labels");
    InferenceRequest request;
    request.prompt = prompt;
    for (const auto& c : candidates) request.candidates.push_back(tmpl.verbalize(c));
    request.demonstrations.assign(metadata.begin(), metadata.end());
    auto raw = backend.score(request);

    LabelScores out;
    out.backend = backend.name();
    out.prompt_digest = sha256_hex(prompt);
    double best = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto it = raw.find(request.candidates[i]);
        if (it == raw.end())
            throw ProtocolError(fmt::format("backend {} returned no score for '{}'", out.backend, request.candidates[i]));
        if (!std::isfinite(it->second))
            throw ProtocolError(fmt::format("backend {} returned a non-finite score for '{}'", out.backend, it->first));
        out.scores[candidates[i]] = it->second;
        if (i == 0 || it->second > best) {
            best = it->second;
            out.prediction = candidates[i];
        }
    }
    return out;
}

nlohmann::ordered_json to_json(const LabelScores& scores, ExampleId query_id) {
    nlohmann::ordered_json j;
    j["query_id"] = query_id;
    j["prediction"] = scores.prediction;
    nlohmann::ordered_json s = nlohmann::ordered_json::object();
    for (const auto& [label, v] : scores.scores) s[label] = v;
    j["scores"] = std::move(s);
    j["backend"] = scores.backend;
    j["prompt_digest"] = scores.prompt_digest;
    return j;
}

IclPredictor make_icl_predictor(const PromptTemplate& tmpl, const InferenceBackend& backend,
                                const CandidatePool& pool) {
    tmpl.validate(pool.label_vocabulary());
    return [&tmpl, &backend, &pool](const Query& query, const SelectionResult& selection) {
        auto demos = prompt_demos(pool, selection);
        auto prompt = build_prompt(tmpl, demos, query);
        auto meta = prompt_metadata(tmpl, selection);
        return score_labels(backend, prompt, pool.label_vocabulary(), tmpl, meta).prediction;
    };
}

}  // namespace iclsel
