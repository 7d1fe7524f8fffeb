#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qreform/corpus.hpp"

namespace qreform {

struct RankedResult {
    std::string doc_id;
    double score = 0.0;
};

/// Build-once, query-many retrieval backend. The evaluator and the HTTP
/// service only see this interface.
class SearchEngine {
public:
    virtual ~SearchEngine() = default;
    /// Non-increasing score, ties by doc_id ascending, at most top_n entries.
    /// Throws EmptyQuery when the query has no words.
    virtual std::vector<RankedResult> search(std::string_view query, std::size_t top_n) const = 0;
    virtual bool contains(std::string_view doc_id) const = 0;
    virtual std::size_t document_count() const = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::uint32_t doc = 0;  // ordinal
    std::uint32_t tf = 0;
};

/// Okapi BM25 over the tokenized concatenation of each document's text and code.
///   idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
///   w(t,d) = idf(t) * tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl))
/// Repeated query words contribute once per occurrence.
class Bm25Index final : public SearchEngine {
public:
    static constexpr int kFormatVersion = 1;

    static Bm25Index build(const SearchCorpus& corpus, Bm25Params params = {});

    std::vector<RankedResult> search(std::string_view query, std::size_t top_n) const override;
    std::vector<RankedResult> search_words(std::span<const std::string> words, std::size_t top_n) const;
    bool contains(std::string_view doc_id) const override;
    std::size_t document_count() const override { return doc_ids_.size(); }

    const Bm25Params& params() const noexcept { return params_; }
    double avg_doc_len() const noexcept { return avg_doc_len_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_len_; }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    /// Empty span when the term has no postings.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t term_count() const noexcept { return postings_.size(); }
    double idf(std::string_view term) const;

    /// First 200 bytes of the document text, cut at a word boundary.
    const std::string& snippet(std::string_view doc_id) const;

    /// JSON container with a "format_version" field.
    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

private:
    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::string> snippets_;
    std::vector<std::uint32_t> doc_len_;
    double avg_doc_len_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> ordinal_;

    void finalize();
};

}  // namespace qreform
