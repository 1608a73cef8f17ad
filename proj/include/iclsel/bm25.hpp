#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iclsel/embedding_store.hpp"
#include "iclsel/retrieval.hpp"

namespace iclsel {

/// Lowercases ASCII and splits on every ASCII non-alphanumeric byte. Bytes
/// >= 0x80 are kept inside tokens so UTF-8 words stay whole. No stemming, no
/// stop words.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;

    friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

/// Okapi BM25 over a fixed corpus.
///
///   score(D, Q) = sum_{t in Q} idf(t) * f(t,D) (k1 + 1) / (f(t,D) + k1 (1 - b + b |D| / avgdl))
///   idf(t)      = ln(1 + (N - n(t) + 0.5) / (n(t) + 0.5))
///
/// Repeated query tokens contribute once per occurrence. The idf form is the
/// non-negative variant, so every score is >= 0 and a document's score never
/// increases with its length at fixed term frequencies.
class Bm25Index {
  public:
    Bm25Index(std::span<const ExampleId> ids, std::span<const std::string> texts, Bm25Params params = {});
    /// Convenience: index the texts of `examples`.
    explicit Bm25Index(std::span<const LabeledExample> examples, Bm25Params params = {});

    std::vector<double> scores(std::string_view query) const;
    RankedList rank(std::string_view query, std::size_t k) const;

    double idf(const std::string& term) const;
    std::size_t size() const { return ids_.size(); }
    double average_length() const { return avgdl_; }

  private:
    void build(std::span<const std::string> texts);

    Bm25Params params_;
    std::vector<ExampleId> ids_;
    std::vector<std::unordered_map<std::string, std::size_t>> term_freqs_;
    std::vector<std::size_t> lengths_;
    std::unordered_map<std::string, std::size_t> doc_freqs_;
    double avgdl_ = 0.0;
};

RankedList bm25_rank(std::span<const LabeledExample> examples, std::string_view query, std::size_t k,
                     Bm25Params params = {});

}  // namespace iclsel
