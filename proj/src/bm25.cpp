#include "iclsel/bm25.hpp"

#include <cmath>

#include <fmt/format.h>

namespace iclsel {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        bool keep = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (keep) {
            current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Bm25Index::Bm25Index(std::span<const ExampleId> ids, std::span<const std::string> texts, Bm25Params params)
    : params_(params), ids_(ids.begin(), ids.end()) {
    if (ids.size() != texts.size()) throw InputError("bm25: ids and texts differ in length");
    build(texts);
}

Bm25Index::Bm25Index(std::span<const LabeledExample> examples, Bm25Params params) : params_(params) {
    std::vector<std::string> texts;
    texts.reserve(examples.size());
    for (const auto& e : examples) {
        ids_.push_back(e.id);
        texts.push_back(e.text);
    }
    build(texts);
}

void Bm25Index::build(std::span<const std::string> texts) {
    if (texts.empty()) throw InputError("bm25: empty corpus");
    if (params_.k1 < 0.0 || params_.b < 0.0 || params_.b > 1.0)
        throw InputError(fmt::format("bm25: invalid parameters k1={} b={}", params_.k1, params_.b));
    std::size_t total = 0;
    for (const auto& text : texts) {
        auto tokens = tokenize(text);
        std::unordered_map<std::string, std::size_t> tf;
        for (auto& t : tokens) ++tf[t];
        for (const auto& [term, _] : tf) ++doc_freqs_[term];
        lengths_.push_back(tokens.size());
        total += tokens.size();
        term_freqs_.push_back(std::move(tf));
    }
    avgdl_ = static_cast<double>(total) / static_cast<double>(texts.size());
}

double Bm25Index::idf(const std::string& term) const {
    auto it = doc_freqs_.find(term);
    double n = it == doc_freqs_.end() ? 0.0 : static_cast<double>(it->second);
    double docs = static_cast<double>(ids_.size());
    return std::log(1.0 + (docs - n + 0.5) / (n + 0.5));
}

std::vector<double> Bm25Index::scores(std::string_view query) const {
    std::vector<double> out(ids_.size(), 0.0);
    for (const auto& term : tokenize(query)) {
        if (!doc_freqs_.contains(term)) continue;
        const double w = idf(term);
        for (std::size_t d = 0; d < ids_.size(); ++d) {
            auto it = term_freqs_[d].find(term);
            if (it == term_freqs_[d].end()) continue;
            const double f = static_cast<double>(it->second);
            const double rel_len = avgdl_ > 0.0 ? static_cast<double>(lengths_[d]) / avgdl_ : 1.0;
            out[d] += w * f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * rel_len));
        }
    }
    return out;
}

RankedList Bm25Index::rank(std::string_view query, std::size_t k) const {
    auto s = scores(query);
    std::vector<RankedEntry> scored(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) scored[i] = {ids_[i], s[i], i};
    return top_k(scored, k);
}

RankedList bm25_rank(std::span<const LabeledExample> examples, std::string_view query, std::size_t k,
                     Bm25Params params) {
    return Bm25Index(examples, params).rank(query, k);
}

}  // namespace iclsel
