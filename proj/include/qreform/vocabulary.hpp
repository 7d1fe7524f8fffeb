#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qreform/tokenizer.hpp"

namespace qreform {

struct QueryCorpus;

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// Reserved ids occupy the first five slots of every vocabulary. Their surface
// strings contain brackets, which the tokenizer never emits.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kMaskId = 2;
inline constexpr TokenId kSpanStartId = 3;
inline constexpr TokenId kSpanEndId = 4;
inline constexpr std::size_t kReservedCount = 5;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kSpanStartToken = "[SPAN_START]";
inline constexpr std::string_view kSpanEndToken = "[SPAN_END]";

struct VocabularyOptions {
    std::size_t max_size = 20000;  // including the reserved tokens
    std::size_t min_freq = 2;
};

class Vocabulary {
public:
    /// Reserved tokens followed by corpus tokens with frequency >= min_freq,
    /// ordered by descending frequency then lexicographically, truncated to
    /// max_size entries in total.
    static Vocabulary build(const QueryCorpus& corpus, const VocabularyOptions& options = {});

    /// Rebuilds a vocabulary from its id-ordered token list. The first five
    /// entries must be the reserved tokens.
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    /// One token per line, id order.
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    TokenId id_of(std::string_view token) const;
    const std::string& token_of(TokenId id) const;
    bool contains(std::string_view token) const;

    static constexpr bool is_reserved(TokenId id) noexcept
    {
        return id >= 0 && static_cast<std::size_t>(id) < kReservedCount;
    }

    TokenIds encode(std::span<const std::string> words) const;
    /// PAD ids are dropped; every other id maps to its surface string.
    Words decode(std::span<const TokenId> ids) const;

    /// FNV-1a over the id-ordered token list; identifies the vocabulary in checkpoints.
    std::uint64_t hash() const noexcept { return hash_; }

private:
    explicit Vocabulary(std::vector<std::string> tokens);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
    std::uint64_t hash_ = 0;
};

}  // namespace qreform
