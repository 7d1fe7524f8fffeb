#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qreform/model.hpp"
#include "qreform/vocabulary.hpp"

namespace qreform {

/// How insertion positions are chosen.
///  Rand: uniformly random positions.
///  Prob: highest mean log-probability of the generated tokens.
///  Entr: highest information gain (lowest mean entropy).
enum class Strategy { Rand, Prob, Entr };

const char* to_string(Strategy strategy) noexcept;
std::optional<Strategy> parse_strategy(std::string_view name);

struct ExpanderConfig {
    std::size_t k = 3;
    std::size_t m = 10;
    Strategy strategy = Strategy::Entr;
    DecodeOptions decode;

    void validate() const;
};

struct CandidateExpansion {
    std::size_t position = 0;  // 0 = before the first word, n = after the last
    Words span;
    double ig = 0.0;           // mean negative entropy over content steps, nats
    double score = 0.0;        // ranking key: ig (Entr, Rand) or mean log-prob (Prob)
    std::string reformulated;
};

/// The n+1 copies of `query` with a MASK inserted at each word boundary.
std::vector<TokenIds> enumerate_candidates(std::span<const TokenId> query);

/// sum_v p(v) ln p(v), with 0 ln 0 = 0.
double negative_entropy(std::span<const double> distribution);

/// Mean negative entropy over the content-token steps of a prediction; the
/// SPAN_END step is excluded. Throws EmptySpan when there are no content steps.
double information_gain(const SpanPrediction& prediction);

/// Mean log-probability of the emitted content tokens. Throws EmptySpan.
double mean_log_probability(const SpanPrediction& prediction);

/// Words before `position`, then `span`, then the rest, single-space joined.
/// Throws IndexError when position > words.size().
std::string splice(std::span<const std::string> words, std::size_t position,
                   std::span<const std::string> span);

class Expander {
public:
    Expander(const Vocabulary& vocab, const SpanInfiller& model, ExpanderConfig config = {});

    const ExpanderConfig& config() const noexcept { return config_; }

    /// Tokenizes and expands. `seed` only matters for Strategy::Rand and for
    /// sampled decoding.
    std::vector<CandidateExpansion> expand(std::string_view query, std::uint64_t seed = 101) const;
    std::vector<CandidateExpansion> expand(std::span<const std::string> words,
                                           std::uint64_t seed = 101) const;

private:
    std::optional<CandidateExpansion> expand_at(std::span<const std::string> words,
                                                std::span<const TokenId> masked,
                                                std::size_t position,
                                                std::uint64_t seed) const;

    const Vocabulary& vocab_;
    const SpanInfiller& model_;
    ExpanderConfig config_;
};

}  // namespace qreform
