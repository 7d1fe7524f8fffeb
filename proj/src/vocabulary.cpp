#include "qreform/vocabulary.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>

#include "qreform/corpus.hpp"
#include "qreform/errors.hpp"
#include "qreform/hash.hpp"

namespace qreform {

namespace {

constexpr std::array<std::string_view, kReservedCount> kReserved = {
    kPadToken, kUnkToken, kMaskToken, kSpanStartToken, kSpanEndToken};

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens))
{
    std::uint64_t h = kFnvOffset;
    ids_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) {
            throw Error(ErrorKind::MalformedInput, "duplicate vocabulary token '" + tokens_[i] + "'");
        }
        h = fnv1a64(tokens_[i], h);
        h = fnv1a64(std::string_view("\n", 1), h);
    }
    hash_ = h;
}

Vocabulary Vocabulary::build(const QueryCorpus& corpus, const VocabularyOptions& options)
{
    if (corpus.queries.empty()) {
        throw Error(ErrorKind::ConfigError, "cannot build a vocabulary from an empty corpus");
    }
    if (options.max_size <= kReservedCount) {
        throw Error(ErrorKind::ConfigError, "max_size must exceed the reserved token count");
    }

    std::map<std::string, std::size_t> freq;
    for (const auto& query : corpus.queries) {
        for (const auto& word : query) {
            ++freq[word];
        }
    }

    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [word, count] : freq) {
        if (count >= options.min_freq) {
            ranked.emplace_back(word, count);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    ranked.resize(std::min(ranked.size(), options.max_size - kReservedCount));

    std::vector<std::string> tokens(kReserved.begin(), kReserved.end());
    for (auto& [word, count] : ranked) {
        tokens.push_back(std::move(word));
    }
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens)
{
    if (tokens.size() <= kReservedCount) {
        throw Error(ErrorKind::MalformedInput, "vocabulary needs at least one content token");
    }
    for (std::size_t i = 0; i < kReservedCount; ++i) {
        if (tokens[i] != kReserved[i]) {
            throw Error(ErrorKind::MalformedInput,
                        "vocabulary slot " + std::to_string(i) + " must be " + std::string(kReserved[i]));
        }
    }
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open vocabulary " + path.string());
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot write vocabulary " + path.string());
    }
    for (const auto& t : tokens_) {
        out << t << '\n';
    }
}

TokenId Vocabulary::id_of(std::string_view token) const
{
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error(ErrorKind::VocabMismatch, "token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const
{
    return ids_.contains(std::string(token));
}

TokenIds Vocabulary::encode(std::span<const std::string> words) const
{
    TokenIds ids;
    ids.reserve(words.size());
    for (const auto& w : words) {
        ids.push_back(id_of(w));
    }
    return ids;
}

Words Vocabulary::decode(std::span<const TokenId> ids) const
{
    Words words;
    words.reserve(ids.size());
    for (TokenId id : ids) {
        if (id != kPadId) {
            words.push_back(token_of(id));
        }
    }
    return words;
}

}  // namespace qreform
