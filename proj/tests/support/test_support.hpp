#pragma once

// Test doubles and independent oracles shared by the unit and acceptance suites.
// Nothing here calls the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qreform/corpus.hpp"
#include "qreform/evaluator.hpp"
#include "qreform/expander.hpp"
#include "qreform/model.hpp"
#include "qreform/search.hpp"
#include "qreform/vocabulary.hpp"

namespace qreform::testing {

/// Scripted infiller: the prediction returned depends only on where the MASK
/// sits in the input. Unscripted positions yield an empty, terminated span.
class StubInfiller final : public SpanInfiller {
public:
    explicit StubInfiller(std::size_t vocab) : vocab_(vocab) {}

    void script(std::size_t mask_position, SpanPrediction prediction)
    {
        table_[mask_position] = std::move(prediction);
    }

    SpanPrediction infill(std::span<const TokenId> corrupted, std::size_t max_span,
                          const DecodeOptions&) const override
    {
        ++calls;
        const auto it = std::find(corrupted.begin(), corrupted.end(), kMaskId);
        const auto pos = static_cast<std::size_t>(it - corrupted.begin());
        auto found = table_.find(pos);
        if (found == table_.end()) {
            SpanPrediction empty;
            empty.distributions.push_back(one_hot(kSpanEndId));
            empty.terminated = true;
            return empty;
        }
        SpanPrediction p = found->second;
        if (p.span.size() > max_span) {
            p.span.resize(max_span);
            p.distributions.resize(max_span);
            p.terminated = false;
        }
        return p;
    }

    std::size_t vocab_size() const override { return vocab_; }

    std::vector<double> one_hot(TokenId id) const
    {
        std::vector<double> d(vocab_, 0.0);
        d[static_cast<std::size_t>(id)] = 1.0;
        return d;
    }

    /// Distribution with `peak` on `id` and the rest spread evenly.
    std::vector<double> peaked(TokenId id, double peak) const
    {
        std::vector<double> d(vocab_, (1.0 - peak) / static_cast<double>(vocab_ - 1));
        d[static_cast<std::size_t>(id)] = peak;
        return d;
    }

    /// Span of `ids` where every step has the given peak, then SPAN_END.
    SpanPrediction span(const TokenIds& ids, double peak) const
    {
        SpanPrediction p;
        p.span = ids;
        for (TokenId id : ids) {
            p.distributions.push_back(peaked(id, peak));
        }
        p.distributions.push_back(one_hot(kSpanEndId));
        p.terminated = true;
        return p;
    }

    mutable std::size_t calls = 0;

private:
    std::size_t vocab_;
    std::map<std::size_t, SpanPrediction> table_;
};

/// Entropy written out directly, for comparison against the library.
inline double oracle_entropy(const std::vector<double>& dist)
{
    double h = 0.0;
    for (double p : dist) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

/// Mean entropy over content steps, i.e. -IG.
inline double oracle_span_entropy(const SpanPrediction& p)
{
    double total = 0.0;
    for (std::size_t i = 0; i < p.span.size(); ++i) {
        total += oracle_entropy(p.distributions[i]);
    }
    return total / static_cast<double>(p.span.size());
}

/// BM25 scored by scanning raw token lists, no inverted index.
inline std::map<std::string, double> oracle_bm25(const SearchCorpus& corpus, const Words& query,
                                                 double k1 = 1.2, double b = 0.75)
{
    std::vector<Words> docs;
    double total_len = 0.0;
    for (const auto& d : corpus.documents) {
        Words w = split_words(d.text + " " + d.code);
        total_len += static_cast<double>(w.size());
        docs.push_back(std::move(w));
    }
    const double n = static_cast<double>(docs.size());
    const double avg = total_len / n;
    std::map<std::string, double> scores;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double s = 0.0;
        bool matched = false;
        for (const auto& term : query) {
            double df = 0.0;
            for (const auto& other : docs) {
                df += std::count(other.begin(), other.end(), term) > 0 ? 1.0 : 0.0;
            }
            const double tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), term));
            if (tf == 0.0) {
                continue;
            }
            matched = true;
            const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            s += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * static_cast<double>(docs[i].size()) / avg));
        }
        if (matched) {
            scores[corpus.documents[i].doc_id] = s;
        }
    }
    return scores;
}

/// Search engine returning canned result lists keyed by exact query text.
class FakeEngine final : public SearchEngine {
public:
    std::map<std::string, std::vector<std::string>> results;
    std::vector<std::string> docs;

    std::vector<RankedResult> search(std::string_view query, std::size_t top_n) const override
    {
        std::vector<RankedResult> out;
        auto it = results.find(std::string(query));
        if (it == results.end()) {
            return out;
        }
        for (std::size_t i = 0; i < it->second.size() && i < top_n; ++i) {
            out.push_back({it->second[i], 1.0 / static_cast<double>(i + 1)});
        }
        return out;
    }
    bool contains(std::string_view doc_id) const override
    {
        return std::find(docs.begin(), docs.end(), doc_id) != docs.end();
    }
    std::size_t document_count() const override { return docs.size(); }
};

class FakeReformulator final : public Reformulator {
public:
    std::map<std::string, std::vector<std::string>> rewrites;
    std::vector<std::string> reformulate(std::string_view query) const override
    {
        auto it = rewrites.find(std::string(query));
        return it == rewrites.end() ? std::vector<std::string>{} : it->second;
    }
};

inline QueryCorpus corpus_of(const std::vector<std::string>& queries)
{
    QueryCorpus c;
    for (const auto& q : queries) {
        c.queries.push_back(tokenize(q));
    }
    return c;
}

/// Small model settings that keep unit tests fast.
inline ModelConfig tiny_model_config()
{
    ModelConfig c;
    c.embed_dim = 16;
    c.layers = 1;
    c.heads = 2;
    c.feedforward_dim = 32;
    c.max_input_len = 16;
    return c;
}

}  // namespace qreform::testing
