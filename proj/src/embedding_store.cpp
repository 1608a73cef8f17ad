#include "iclsel/embedding_store.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "iclsel/error.hpp"
#include "iclsel/io.hpp"

namespace iclsel {

namespace {

using nlohmann::json;

bool all_finite(const Vector& v) { return v.allFinite(); }

void append_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

std::string compute_digest(std::span<const LabeledExample> examples, Eigen::Index d, bool normalized) {
    std::string buf = fmt::format("iclsel-pool/1 d={} normalized={}\n", d, normalized ? 1 : 0);
    for (const auto& e : examples) {
        append_bytes(buf, &e.id, sizeof e.id);
        buf += e.label;
        buf.push_back('\0');
        buf += e.text;
        buf.push_back('\0');
        append_bytes(buf, e.embedding.data(), sizeof(double) * static_cast<std::size_t>(e.embedding.size()));
    }
    return sha256_hex(buf);
}

struct ParsedLine {
    ExampleId id = 0;
    std::string text;
    std::optional<Label> label;
    std::optional<Label> gold_label;
    Vector embedding;
};

[[noreturn]] void fail_at(std::string_view source, std::size_t line, const std::string& what) {
    throw InputError(fmt::format("{}:{}: {}", source, line, what));
}

std::optional<Label> optional_label(const json& obj, const char* key, std::string_view source, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) fail_at(source, line, fmt::format("'{}' must be a string", key));
    auto s = it->get<std::string>();
    if (s.empty()) fail_at(source, line, fmt::format("empty '{}' token", key));
    return s;
}

ParsedLine parse_line(std::string_view text, std::string_view source, std::size_t line) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::parse_error& e) {
        fail_at(source, line, fmt::format("malformed JSON: {}", e.what()));
    }
    if (!obj.is_object()) fail_at(source, line, "expected a JSON object");

    ParsedLine out;
    auto id = obj.find("id");
    if (id == obj.end() || !id->is_number_integer()) fail_at(source, line, "'id' must be an integer");
    if (id->is_number_unsigned()) {
        out.id = id->get<std::uint64_t>();
    } else {
        auto v = id->get<std::int64_t>();
        if (v < 0) fail_at(source, line, "'id' must be non-negative");
        out.id = static_cast<ExampleId>(v);
    }

    if (auto t = obj.find("text"); t != obj.end() && !t->is_null()) {
        if (!t->is_string()) fail_at(source, line, "'text' must be a string");
        out.text = t->get<std::string>();
    }
    out.label = optional_label(obj, "label", source, line);
    out.gold_label = optional_label(obj, "gold_label", source, line);

    auto emb = obj.find("embedding");
    if (emb == obj.end() || !emb->is_array()) fail_at(source, line, "'embedding' must be an array");
    if (emb->empty()) fail_at(source, line, "'embedding' is empty");
    out.embedding.resize(static_cast<Eigen::Index>(emb->size()));
    Eigen::Index i = 0;
    for (const auto& x : *emb) {
        if (!x.is_number()) fail_at(source, line, "'embedding' must contain only numbers");
        out.embedding[i++] = x.get<double>();
    }
    if (!all_finite(out.embedding)) fail_at(source, line, "'embedding' has non-finite values");
    return out;
}

/// Calls fn(line_text, line_number) for each non-blank line.
template <typename Fn>
void for_each_line(std::string_view jsonl, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto end = nl == std::string_view::npos ? jsonl.size() : nl;
        ++line_no;
        auto line = jsonl.substr(pos, end - pos);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) fn(line, line_no);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
}

void normalize_or_fail(Vector& v, bool normalize, bool allow_zero, std::string_view source, std::size_t line) {
    double n = v.norm();
    if (n == 0.0) {
        if (normalize) fail_at(source, line, "zero vector cannot be normalized");
        if (!allow_zero) fail_at(source, line, "zero vector");
        return;
    }
    if (normalize) v /= n;
}

nlohmann::ordered_json embedding_json(const Vector& v) {
    auto arr = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace

CandidatePool CandidatePool::from_examples(std::vector<LabeledExample> examples, bool normalized,
                                           bool allow_zero_vectors) {
    if (examples.empty()) throw InputError("candidate pool is empty");
    std::sort(examples.begin(), examples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    CandidatePool pool;
    pool.dimension_ = examples.front().embedding.size();
    if (pool.dimension_ < 1) throw InputError("embedding dimension must be at least 1");
    std::set<Label> labels;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        if (i > 0 && examples[i - 1].id == e.id) throw InputError(fmt::format("duplicate id {}", e.id));
        if (e.embedding.size() != pool.dimension_)
            throw InputError(fmt::format("id {}: dimension {} differs from pool dimension {}", e.id,
                                         e.embedding.size(), pool.dimension_));
        if (e.label.empty()) throw InputError(fmt::format("id {}: empty label", e.id));
        if (!e.embedding.allFinite()) throw InputError(fmt::format("id {}: non-finite embedding", e.id));
        if (!allow_zero_vectors && e.embedding.isZero(0.0))
            throw InputError(fmt::format("id {}: zero embedding", e.id));
        labels.insert(e.label);
    }
    pool.vocabulary_.assign(labels.begin(), labels.end());
    pool.normalized_ = normalized;
    pool.examples_ = std::move(examples);
    pool.digest_ = compute_digest(pool.examples_, pool.dimension_, normalized);
    return pool;
}

std::optional<std::size_t> CandidatePool::label_index(const Label& label) const {
    auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), label);
    if (it == vocabulary_.end() || *it != label) return std::nullopt;
    return static_cast<std::size_t>(it - vocabulary_.begin());
}

std::optional<std::size_t> CandidatePool::position_of(ExampleId id) const {
    auto it = std::lower_bound(examples_.begin(), examples_.end(), id,
                               [](const LabeledExample& e, ExampleId v) { return e.id < v; });
    if (it == examples_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - examples_.begin());
}

CandidatePool parse_pool(std::string_view jsonl, std::string_view source, const LoadOptions& options) {
    std::vector<LabeledExample> examples;
    std::unordered_set<ExampleId> seen;
    Eigen::Index dim = -1;
    for_each_line(jsonl, [&](std::string_view text, std::size_t line) {
        auto p = parse_line(text, source, line);
        if (dim < 0) dim = p.embedding.size();
        if (p.embedding.size() != dim)
            fail_at(source, line, fmt::format("dimension mismatch: got {}, expected {}", p.embedding.size(), dim));
        if (!p.label) fail_at(source, line, "missing 'label'");
        if (!seen.insert(p.id).second) fail_at(source, line, fmt::format("duplicate id {}", p.id));
        normalize_or_fail(p.embedding, options.normalize, options.allow_zero_vectors, source, line);
        examples.push_back({p.id, std::move(p.text), std::move(*p.label), std::move(p.embedding)});
    });
    if (examples.empty()) throw InputError(fmt::format("{}: no examples", source));
    return CandidatePool::from_examples(std::move(examples), options.normalize, options.allow_zero_vectors);
}

std::vector<Query> parse_queries(std::string_view jsonl, std::string_view source, const CandidatePool& pool,
                                 bool normalize) {
    std::vector<Query> queries;
    std::unordered_set<ExampleId> seen;
    for_each_line(jsonl, [&](std::string_view text, std::size_t line) {
        auto p = parse_line(text, source, line);
        if (p.embedding.size() != pool.dimension())
            fail_at(source, line,
                    fmt::format("dimension mismatch: got {}, pool has {}", p.embedding.size(), pool.dimension()));
        if (!seen.insert(p.id).second) fail_at(source, line, fmt::format("duplicate query id {}", p.id));
        auto gold = p.gold_label ? std::move(p.gold_label) : std::move(p.label);
        if (gold && !pool.label_index(*gold))
            fail_at(source, line, fmt::format("gold label '{}' is not in the pool vocabulary", *gold));
        normalize_or_fail(p.embedding, normalize, false, source, line);
        queries.push_back({p.id, std::move(p.text), std::move(p.embedding), std::move(gold)});
    });
    std::sort(queries.begin(), queries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return queries;
}

CandidatePool load_pool(const std::filesystem::path& path, bool normalize) {
    return load_pool(path, LoadOptions{normalize, false});
}

CandidatePool load_pool(const std::filesystem::path& path, const LoadOptions& options) {
    return parse_pool(read_file(path), path.string(), options);
}

std::vector<Query> load_queries(const std::filesystem::path& path, const CandidatePool& pool, bool normalize) {
    return parse_queries(read_file(path), path.string(), pool, normalize);
}

std::string pool_to_jsonl(const CandidatePool& pool) {
    std::string out;
    for (const auto& e : pool.examples()) {
        nlohmann::ordered_json obj;
        obj["id"] = e.id;
        obj["label"] = e.label;
        obj["text"] = e.text;
        obj["embedding"] = embedding_json(e.embedding);
        out += obj.dump();
        out.push_back('\n');
    }
    return out;
}

std::string queries_to_jsonl(std::span<const Query> queries) {
    std::string out;
    for (const auto& q : queries) {
        nlohmann::ordered_json obj;
        obj["id"] = q.id;
        obj["text"] = q.text;
        if (q.gold_label) obj["gold_label"] = *q.gold_label;
        obj["embedding"] = embedding_json(q.embedding);
        out += obj.dump();
        out.push_back('\n');
    }
    return out;
}

}  // namespace iclsel
