#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qreform/expander.hpp"
#include "qreform/search.hpp"

namespace qreform {

struct EvalCase {
    std::string query;
    std::string relevant_doc_id;
};

/// JSONL with "query" and "relevant_doc_id".
std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path);

/// Produces candidate rewrites of a query, best first.
class Reformulator {
public:
    virtual ~Reformulator() = default;
    virtual std::vector<std::string> reformulate(std::string_view query) const = 0;
};

/// Adapts an Expander. Rand draws are seeded from (seed, query text), so a
/// query gets the same rewrites regardless of its position in the case list.
class ExpanderReformulator final : public Reformulator {
public:
    ExpanderReformulator(const Expander& expander, std::uint64_t seed)
        : expander_(expander), seed_(seed)
    {}
    std::vector<std::string> reformulate(std::string_view query) const override;

private:
    const Expander& expander_;
    std::uint64_t seed_;
};

struct EvalOptions {
    std::size_t top_n = 100;
    std::size_t use_first = 3;
};

struct CaseResult {
    std::string query;
    std::optional<std::size_t> best_rank;  // 1-based, within top_n
    double reciprocal = 0.0;
    std::optional<std::string> chosen_reformulation;
};

struct EvalReport {
    double mrr = 0.0;
    std::vector<CaseResult> per_query;
    nlohmann::json config_snapshot = nlohmann::json::object();
};

/// Arithmetic mean. Throws EmptyEvaluation on an empty input.
double mrr(std::span<const double> reciprocals);

/// Without a reformulator the original query is searched. Otherwise the first
/// use_first rewrites are searched and the best rank of the relevant document
/// is kept; if the reformulator returns nothing the original query is used.
/// Misses outside top_n score 0. Throws CorruptFixture if a relevant document
/// is not in the engine.
EvalReport evaluate(const SearchEngine& engine, const Reformulator* reformulator,
                    std::span<const EvalCase> cases, const EvalOptions& options = {});

struct StrategyRow {
    std::string strategy;
    double mrr = 0.0;
    std::vector<double> per_seed;  // one entry per seed for Rand, one entry otherwise
};

struct StrategyAblation {
    double baseline_mrr = 0.0;  // no reformulation
    std::vector<StrategyRow> rows;
};

StrategyAblation ablate_strategy(const SearchEngine& engine, const Vocabulary& vocab,
                                 const SpanInfiller& model, std::span<const EvalCase> cases,
                                 std::span<const Strategy> strategies,
                                 std::span<const std::uint64_t> seeds,
                                 const ExpanderConfig& base = {}, const EvalOptions& options = {});

struct KRow {
    std::size_t k = 0;
    double mrr = 0.0;
};

struct KAblation {
    double baseline_mrr = 0.0;
    std::vector<KRow> rows;
};

/// Evaluates with use_first = k for each k; the expander is asked for
/// max(k_values) candidates so every k sees a prefix of the same list.
KAblation ablate_k(const SearchEngine& engine, const Vocabulary& vocab,
                   const SpanInfiller& model, std::span<const EvalCase> cases,
                   std::span<const std::size_t> k_values, std::uint64_t seed,
                   const ExpanderConfig& base = {}, const EvalOptions& options = {});

/// {"type":"config"...}, one {"type":"case"...} per query, then {"type":"summary"...}.
void write_report_jsonl(const EvalReport& report, std::ostream& out);
void print_report_table(const EvalReport& report, std::ostream& out);
void print_strategy_table(const StrategyAblation& table, std::ostream& out);
void print_k_table(const KAblation& table, std::ostream& out);

}  // namespace qreform
