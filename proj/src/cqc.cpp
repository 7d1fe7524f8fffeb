#include "qreform/cqc.hpp"

#include "qreform/errors.hpp"
#include "qreform/hash.hpp"

namespace qreform {

TokenIds CorruptedSample::reconstruct() const
{
    TokenIds out;
    out.reserve(corrupted.size() + target_span.size());
    for (TokenId id : corrupted) {
        if (id == kMaskId) {
            out.insert(out.end(), target_span.begin(), target_span.end());
        } else {
            out.push_back(id);
        }
    }
    return out;
}

CorruptedSample corrupt_at(std::span<const TokenId> query, std::size_t start)
{
    const std::size_t n = query.size();
    if (n == 0) {
        throw Error(ErrorKind::EmptyQuery, "cannot corrupt an empty query");
    }
    CorruptedSample sample;
    sample.span_len = masked_span_length(n);
    if (start > n - sample.span_len) {
        throw Error(ErrorKind::IndexError, "span start " + std::to_string(start) + " runs past the query");
    }
    sample.span_start = start;

    const auto first = query.begin() + static_cast<std::ptrdiff_t>(sample.span_start);
    const auto last = first + static_cast<std::ptrdiff_t>(sample.span_len);
    sample.corrupted.assign(query.begin(), first);
    sample.corrupted.push_back(kMaskId);
    sample.corrupted.insert(sample.corrupted.end(), last, query.end());
    sample.target_span.assign(first, last);
    return sample;
}

CorruptedSample corrupt(std::span<const TokenId> query, std::mt19937_64& rng)
{
    if (query.empty()) {
        throw Error(ErrorKind::EmptyQuery, "cannot corrupt an empty query");
    }
    std::uniform_int_distribution<std::size_t> start(0, query.size() - masked_span_length(query.size()));
    return corrupt_at(query, start(rng));
}

std::vector<CorruptedSample> make_training_pairs(std::span<const TokenIds> queries,
                                                 std::uint64_t seed,
                                                 std::uint64_t epoch)
{
    std::vector<CorruptedSample> samples;
    samples.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::mt19937_64 rng(derive_seed(seed, epoch, i));
        samples.push_back(corrupt(queries[i], rng));
    }
    return samples;
}

}  // namespace qreform
