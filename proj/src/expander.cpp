#include "qreform/expander.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "qreform/errors.hpp"
#include "qreform/hash.hpp"

namespace qreform {

const char* to_string(Strategy strategy) noexcept
{
    switch (strategy) {
    case Strategy::Rand: return "RAND";
    case Strategy::Prob: return "PROB";
    case Strategy::Entr: return "ENTR";
    }
    return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name)
{
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (upper == "RAND") return Strategy::Rand;
    if (upper == "PROB") return Strategy::Prob;
    if (upper == "ENTR") return Strategy::Entr;
    return std::nullopt;
}

void ExpanderConfig::validate() const
{
    if (k == 0 || m == 0) {
        throw Error(ErrorKind::ConfigError, "k and m must be at least 1");
    }
}

std::vector<TokenIds> enumerate_candidates(std::span<const TokenId> query)
{
    if (query.empty()) {
        throw Error(ErrorKind::EmptyQuery, "cannot expand an empty query");
    }
    std::vector<TokenIds> out;
    out.reserve(query.size() + 1);
    for (std::size_t pos = 0; pos <= query.size(); ++pos) {
        TokenIds masked(query.begin(), query.begin() + static_cast<std::ptrdiff_t>(pos));
        masked.push_back(kMaskId);
        masked.insert(masked.end(), query.begin() + static_cast<std::ptrdiff_t>(pos), query.end());
        out.push_back(std::move(masked));
    }
    return out;
}

double negative_entropy(std::span<const double> distribution)
{
    double sum = 0.0;
    for (double p : distribution) {
        if (p > 0.0) {
            sum += p * std::log(p);
        }
    }
    return sum;
}

namespace {

std::size_t content_steps(const SpanPrediction& prediction)
{
    const std::size_t steps = prediction.span.size();
    if (steps == 0) {
        throw Error(ErrorKind::EmptySpan, "prediction has no content tokens");
    }
    if (prediction.distributions.size() < steps) {
        throw Error(ErrorKind::MalformedInput, "prediction has fewer distributions than tokens");
    }
    return steps;
}

}  // namespace

double information_gain(const SpanPrediction& prediction)
{
    const std::size_t steps = content_steps(prediction);
    double total = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        total += negative_entropy(prediction.distributions[i]);
    }
    return total / static_cast<double>(steps);
}

double mean_log_probability(const SpanPrediction& prediction)
{
    const std::size_t steps = content_steps(prediction);
    double total = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const auto& dist = prediction.distributions[i];
        const auto id = static_cast<std::size_t>(prediction.span[i]);
        if (id >= dist.size()) {
            throw Error(ErrorKind::MalformedInput, "span token outside its distribution");
        }
        total += std::log(dist[id]);
    }
    return total / static_cast<double>(steps);
}

std::string splice(std::span<const std::string> words, std::size_t position,
                   std::span<const std::string> span)
{
    if (position > words.size()) {
        throw Error(ErrorKind::IndexError, "insertion position " + std::to_string(position)
                                               + " beyond query length " + std::to_string(words.size()));
    }
    Words out(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(position));
    out.insert(out.end(), span.begin(), span.end());
    out.insert(out.end(), words.begin() + static_cast<std::ptrdiff_t>(position), words.end());
    return join_words(out);
}

Expander::Expander(const Vocabulary& vocab, const SpanInfiller& model, ExpanderConfig config)
    : vocab_(vocab), model_(model), config_(config)
{
    config_.validate();
    if (model.vocab_size() != vocab.size()) {
        throw Error(ErrorKind::VocabMismatch, "model and vocabulary sizes differ");
    }
}

std::vector<CandidateExpansion> Expander::expand(std::string_view query, std::uint64_t seed) const
{
    const Words words = tokenize(query);
    return expand(words, seed);
}

std::optional<CandidateExpansion> Expander::expand_at(std::span<const std::string> words,
                                                      std::span<const TokenId> masked,
                                                      std::size_t position,
                                                      std::uint64_t seed) const
{
    DecodeOptions decode = config_.decode;
    decode.seed = derive_seed(decode.seed ^ seed, position);
    const SpanPrediction pred = model_.infill(masked, config_.m, decode);
    if (pred.span.empty()) {
        return std::nullopt;
    }
    Words span;
    for (TokenId id : pred.span) {
        // sentinels never appear in a rewritten query
        if (!Vocabulary::is_reserved(id)) {
            span.push_back(vocab_.token_of(id));
        }
    }
    if (span.empty()) {
        return std::nullopt;
    }
    CandidateExpansion c;
    c.position = position;
    c.ig = information_gain(pred);
    c.score = config_.strategy == Strategy::Prob ? mean_log_probability(pred) : c.ig;
    c.reformulated = splice(words, position, span);
    c.span = std::move(span);
    return c;
}

std::vector<CandidateExpansion> Expander::expand(std::span<const std::string> words,
                                                 std::uint64_t seed) const
{
    const TokenIds ids = vocab_.encode(words);
    const std::vector<TokenIds> masked = enumerate_candidates(ids);

    std::vector<std::size_t> positions(masked.size());
    std::iota(positions.begin(), positions.end(), 0);
    if (config_.strategy == Strategy::Rand) {
        // partial Fisher-Yates: the first `take` slots become a uniform sample
        const std::size_t take = std::min(config_.k, positions.size());
        std::mt19937_64 rng(derive_seed(seed, 0x52414E44u));
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
            std::swap(positions[i], positions[pick(rng)]);
        }
        positions.resize(take);
        std::sort(positions.begin(), positions.end());
    }

    std::vector<CandidateExpansion> candidates;
    for (std::size_t pos : positions) {
        if (auto c = expand_at(words, masked[pos], pos, seed)) {
            candidates.push_back(std::move(*c));
        }
    }
    if (config_.strategy == Strategy::Rand) {
        return candidates;
    }

    // keep the best-scoring copy of each distinct rewrite; positions ascend so
    // the first copy wins ties
    std::vector<CandidateExpansion> unique;
    std::unordered_map<std::string, std::size_t> seen;
    for (auto& c : candidates) {
        auto [it, inserted] = seen.emplace(c.reformulated, unique.size());
        if (inserted) {
            unique.push_back(std::move(c));
        } else if (c.score > unique[it->second].score) {
            unique[it->second] = std::move(c);
        }
    }
    std::stable_sort(unique.begin(), unique.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.position < b.position;
    });
    if (unique.size() > config_.k) {
        unique.resize(config_.k);
    }
    return unique;
}

}  // namespace qreform
