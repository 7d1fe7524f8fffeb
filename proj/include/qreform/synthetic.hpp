#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qreform/corpus.hpp"
#include "qreform/evaluator.hpp"

namespace qreform {

/// Intent benchmark: complete queries look like "... VERB a OBJECT in LANG",
/// where each OBJECT belongs to one LANG. Every (verb, object) pair has one
/// document per language that differ only in the language words, so without
/// the language a query cannot tell them apart.
struct IntentBenchmark {
    std::vector<std::string> pretrain_queries;
    SearchCorpus documents;
    std::vector<EvalCase> cases;  // queries with the "in LANG" suffix removed
};

struct IntentBenchmarkOptions {
    std::uint64_t seed = 101;
    std::size_t max_cases = 0;  // 0 = one case per (verb, object) pair
};

IntentBenchmark make_intent_benchmark(const IntentBenchmarkOptions& options = {});

/// `count` queries of 4..8 words drawn from a pool of random pseudo-words,
/// generated so every corruption is recoverable from its context.
std::vector<std::string> make_memorizable_queries(std::size_t count, std::uint64_t seed);

void write_query_corpus(const std::filesystem::path& path, const std::vector<std::string>& queries);
void write_search_corpus(const std::filesystem::path& path, const SearchCorpus& corpus);
void write_eval_cases(const std::filesystem::path& path, const std::vector<EvalCase>& cases);

}  // namespace qreform
