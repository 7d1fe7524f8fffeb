#include "qreform/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "qreform/errors.hpp"

namespace qreform {

namespace {

constexpr std::size_t kSnippetBytes = 200;

std::string make_snippet(const std::string& text)
{
    if (text.size() <= kSnippetBytes) {
        return text;
    }
    std::size_t cut = text.rfind(' ', kSnippetBytes);
    if (cut == std::string::npos || cut == 0) {
        cut = kSnippetBytes;
        // don't split a UTF-8 sequence
        while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) {
            --cut;
        }
    }
    return text.substr(0, cut);
}

}  // namespace

Bm25Index Bm25Index::build(const SearchCorpus& corpus, Bm25Params params)
{
    if (corpus.documents.empty()) {
        throw Error(ErrorKind::ConfigError, "cannot index an empty corpus");
    }
    validate(corpus);

    Bm25Index index;
    index.params_ = params;
    for (std::size_t ord = 0; ord < corpus.documents.size(); ++ord) {
        const auto& doc = corpus.documents[ord];
        Words words = split_words(doc.text);
        Words code = split_words(doc.code);
        words.insert(words.end(), std::make_move_iterator(code.begin()), std::make_move_iterator(code.end()));

        std::map<std::string, std::uint32_t> tf;
        for (auto& w : words) {
            ++tf[w];
        }
        for (auto& [term, count] : tf) {
            // ordinals increase monotonically, so each list stays sorted
            index.postings_[term].push_back({static_cast<std::uint32_t>(ord), count});
        }
        index.doc_ids_.push_back(doc.doc_id);
        index.snippets_.push_back(make_snippet(doc.text));
        index.doc_len_.push_back(static_cast<std::uint32_t>(words.size()));
    }
    index.finalize();
    return index;
}

void Bm25Index::finalize()
{
    double total = 0.0;
    for (auto len : doc_len_) {
        total += len;
    }
    avg_doc_len_ = doc_len_.empty() ? 0.0 : total / static_cast<double>(doc_len_.size());
    ordinal_.clear();
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        ordinal_.emplace(doc_ids_[i], static_cast<std::uint32_t>(i));
    }
}

std::span<const Posting> Bm25Index::postings(std::string_view term) const
{
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) {
        return {};
    }
    return it->second;
}

double Bm25Index::idf(std::string_view term) const
{
    const auto n = static_cast<double>(doc_ids_.size());
    const auto df = static_cast<double>(postings(term).size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

bool Bm25Index::contains(std::string_view doc_id) const
{
    return ordinal_.contains(std::string(doc_id));
}

const std::string& Bm25Index::snippet(std::string_view doc_id) const
{
    auto it = ordinal_.find(std::string(doc_id));
    if (it == ordinal_.end()) {
        throw Error(ErrorKind::IndexError, "unknown doc_id '" + std::string(doc_id) + "'");
    }
    return snippets_[it->second];
}

std::vector<RankedResult> Bm25Index::search(std::string_view query, std::size_t top_n) const
{
    const Words words = tokenize(query);
    return search_words(words, top_n);
}

std::vector<RankedResult> Bm25Index::search_words(std::span<const std::string> words,
                                                  std::size_t top_n) const
{
    if (words.empty()) {
        throw Error(ErrorKind::EmptyQuery, "query has no words");
    }
    if (top_n == 0) {
        throw Error(ErrorKind::ConfigError, "top_n must be at least 1");
    }
    std::vector<double> scores(doc_ids_.size(), 0.0);
    std::vector<bool> hit(doc_ids_.size(), false);
    std::vector<std::uint32_t> matched;

    const double k1 = params_.k1;
    const double b = params_.b;
    for (const auto& w : words) {
        const auto list = postings(w);
        if (list.empty()) {
            continue;
        }
        const double w_idf = idf(w);
        for (const auto& p : list) {
            const double tf = p.tf;
            const double norm = 1.0 - b + b * doc_len_[p.doc] / avg_doc_len_;
            scores[p.doc] += w_idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            if (!hit[p.doc]) {
                hit[p.doc] = true;
                matched.push_back(p.doc);
            }
        }
    }

    auto better = [&](std::uint32_t a, std::uint32_t c) {
        return scores[a] != scores[c] ? scores[a] > scores[c] : doc_ids_[a] < doc_ids_[c];
    };
    const std::size_t n = std::min(top_n, matched.size());
    std::partial_sort(matched.begin(), matched.begin() + static_cast<std::ptrdiff_t>(n), matched.end(), better);

    std::vector<RankedResult> results;
    results.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        results.push_back({doc_ids_[matched[i]], scores[matched[i]]});
    }
    return results;
}

void Bm25Index::save(const std::filesystem::path& path) const
{
    // sorted term order keeps the file byte-stable across runs
    std::map<std::string_view, const std::vector<Posting>*> sorted;
    for (const auto& [term, list] : postings_) {
        sorted.emplace(term, &list);
    }
    nlohmann::json postings = nlohmann::json::object();
    for (const auto& [term, list] : sorted) {
        auto arr = nlohmann::json::array();
        for (const auto& p : *list) {
            arr.push_back({p.doc, p.tf});
        }
        postings[std::string(term)] = std::move(arr);
    }
    const nlohmann::json j = {
        {"format_version", kFormatVersion},
        {"k1", params_.k1},
        {"b", params_.b},
        {"doc_ids", doc_ids_},
        {"doc_len", doc_len_},
        {"snippets", snippets_},
        {"postings", std::move(postings)},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot write index " + path.string());
    }
    out << j.dump() << '\n';
}

Bm25Index Bm25Index::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open index " + path.string());
    }
    Bm25Index index;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format_version").get<int>() != kFormatVersion) {
            throw Error(ErrorKind::MalformedInput, "unsupported index format_version");
        }
        index.params_ = {j.at("k1").get<double>(), j.at("b").get<double>()};
        index.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
        index.doc_len_ = j.at("doc_len").get<std::vector<std::uint32_t>>();
        index.snippets_ = j.at("snippets").get<std::vector<std::string>>();
        for (const auto& [term, arr] : j.at("postings").items()) {
            auto& list = index.postings_[term];
            for (const auto& p : arr) {
                list.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("bad index file: ") + e.what());
    }
    if (index.doc_len_.size() != index.doc_ids_.size() || index.snippets_.size() != index.doc_ids_.size()) {
        throw Error(ErrorKind::MalformedInput, "index arrays disagree on document count");
    }
    index.finalize();
    return index;
}

}  // namespace qreform
