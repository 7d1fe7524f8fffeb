#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "qreform/vocabulary.hpp"

namespace qreform {

/// A query with one contiguous span replaced by a single MASK id.
struct CorruptedSample {
    TokenIds corrupted;
    TokenIds target_span;
    std::size_t span_start = 0;
    std::size_t span_len = 0;

    /// Splices target_span back in place of the MASK.
    TokenIds reconstruct() const;
};

/// Number of consecutive words masked in an n-word query: max(1, ceil(0.15 n)).
constexpr std::size_t masked_span_length(std::size_t n) noexcept
{
    // ceil(15 n / 100) in integer arithmetic
    const std::size_t len = (15 * n + 99) / 100;
    return len == 0 ? 1 : len;
}

/// Masks masked_span_length(n) words starting at `start`. Throws EmptyQuery
/// for an empty query and IndexError if the span would run past the end.
CorruptedSample corrupt_at(std::span<const TokenId> query, std::size_t start);

/// Masks a span of masked_span_length(n) words starting at a uniformly drawn
/// position. Throws EmptyQuery for an empty query.
CorruptedSample corrupt(std::span<const TokenId> query, std::mt19937_64& rng);

/// One fresh corruption per query for the given epoch. Sample i draws from a
/// stream seeded by (seed, epoch, i), so the output does not depend on
/// generation order.
std::vector<CorruptedSample> make_training_pairs(std::span<const TokenIds> queries,
                                                 std::uint64_t seed,
                                                 std::uint64_t epoch = 0);

}  // namespace qreform
