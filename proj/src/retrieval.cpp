#include "iclsel/retrieval.hpp"

#include <queue>
#include <random>

#include <fmt/format.h>

namespace iclsel {

namespace {

struct WorstOnTop {
    bool operator()(const RankedEntry& a, const RankedEntry& b) const { return ranks_before(a, b); }
};

}  // namespace

ExactIndex::ExactIndex(std::span<const LabeledExample> examples) : examples_(examples) {
    norms_.reserve(examples.size());
    for (const auto& e : examples) norms_.push_back(e.embedding.norm());
}

double ExactIndex::score(std::size_t position, const Vector& query) const {
    const auto& v = examples_[position].embedding;
    if (v.size() != query.size())
        throw InputError(fmt::format("query dimension {} does not match index dimension {}", query.size(), v.size()));
    return cosine_from_parts(v.dot(query), norms_[position], query.norm());
}

RankedList ExactIndex::search(const Vector& query, std::size_t k) const {
    if (examples_.empty()) throw InputError("knn: empty pool");
    if (k == 0) throw InputError("knn: k must be positive");
    if (query.size() != examples_.front().embedding.size())
        throw InputError(fmt::format("query dimension {} does not match index dimension {}", query.size(),
                                     examples_.front().embedding.size()));
    const double qn = query.norm();
    const std::size_t keep = std::min(k, examples_.size());
    std::priority_queue<RankedEntry, std::vector<RankedEntry>, WorstOnTop> heap;
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        RankedEntry entry{examples_[i].id, cosine_from_parts(examples_[i].embedding.dot(query), norms_[i], qn), i};
        if (heap.size() < keep) {
            heap.push(entry);
        } else if (ranks_before(entry, heap.top())) {
            heap.pop();
            heap.push(entry);
        }
    }
    RankedList out;
    out.truncated = k > examples_.size();
    out.entries.resize(heap.size());
    for (auto i = out.entries.size(); i-- > 0;) {
        out.entries[i] = heap.top();
        heap.pop();
    }
    return out;
}

RankedList knn(std::span<const LabeledExample> examples, const Vector& query, std::size_t k) {
    return ExactIndex(examples).search(query, k);
}

RankedList top_k(std::span<const RankedEntry> scored, std::size_t k) {
    if (scored.empty()) throw InputError("top_k: nothing to rank");
    if (k == 0) throw InputError("top_k: k must be positive");
    RankedList out;
    out.truncated = k > scored.size();
    out.entries.assign(scored.begin(), scored.end());
    auto mid = out.entries.begin() + static_cast<std::ptrdiff_t>(std::min(k, scored.size()));
    std::partial_sort(out.entries.begin(), mid, out.entries.end(), ranks_before);
    out.entries.erase(mid, out.entries.end());
    return out;
}

RankedList random_select(std::span<const LabeledExample> examples, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw InputError("random_select: k must be positive");
    if (k > examples.size())
        throw InputError(fmt::format("random_select: k={} exceeds pool size {}", k, examples.size()));
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    RankedList out;
    out.entries.reserve(k);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
        out.entries.push_back({examples[order[i]].id, 0.0, order[i]});
    }
    return out;
}

}  // namespace iclsel
