#include "qreform/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "qreform/errors.hpp"
#include "qreform/hash.hpp"

namespace qreform {

namespace {

// Serves precomputed rewrites; lets the k ablation expand each query once.
class FixedReformulator final : public Reformulator {
public:
    explicit FixedReformulator(std::unordered_map<std::string, std::vector<std::string>> table)
        : table_(std::move(table))
    {}
    std::vector<std::string> reformulate(std::string_view query) const override
    {
        auto it = table_.find(std::string(query));
        return it == table_.end() ? std::vector<std::string>{} : it->second;
    }

private:
    std::unordered_map<std::string, std::vector<std::string>> table_;
};

std::string percent_change(double value, double baseline)
{
    if (baseline <= 0.0) {
        return "n/a";
    }
    std::ostringstream os;
    const double pct = 100.0 * (value - baseline) / baseline;
    os << (pct >= 0 ? "+" : "") << std::fixed << std::setprecision(2) << pct << '%';
    return os.str();
}

}  // namespace

std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<EvalCase> cases;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            cases.push_back({j.at("query").get<std::string>(), j.at("relevant_doc_id").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::MalformedInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cases;
}

std::vector<std::string> ExpanderReformulator::reformulate(std::string_view query) const
{
    std::vector<std::string> out;
    for (auto& c : expander_.expand(query, derive_seed(seed_, fnv1a64(query)))) {
        out.push_back(std::move(c.reformulated));
    }
    return out;
}

double mrr(std::span<const double> reciprocals)
{
    if (reciprocals.empty()) {
        throw Error(ErrorKind::EmptyEvaluation, "MRR of zero queries is undefined");
    }
    double sum = 0.0;
    for (double r : reciprocals) {
        sum += r;
    }
    return sum / static_cast<double>(reciprocals.size());
}

EvalReport evaluate(const SearchEngine& engine, const Reformulator* reformulator,
                    std::span<const EvalCase> cases, const EvalOptions& options)
{
    if (cases.empty()) {
        throw Error(ErrorKind::EmptyEvaluation, "no evaluation cases");
    }
    if (options.top_n == 0 || options.use_first == 0) {
        throw Error(ErrorKind::ConfigError, "top_n and use_first must be at least 1");
    }
    for (const auto& c : cases) {
        if (!engine.contains(c.relevant_doc_id)) {
            throw Error(ErrorKind::CorruptFixture,
                        "relevant document '" + c.relevant_doc_id + "' is not in the search corpus");
        }
    }

    EvalReport report;
    report.config_snapshot = {{"top_n", options.top_n},
                              {"use_first", options.use_first},
                              {"reformulation", reformulator != nullptr},
                              {"miss_reciprocal", 0.0}};
    std::vector<double> reciprocals;
    for (const auto& c : cases) {
        std::vector<std::string> rewrites;
        if (reformulator) {
            rewrites = reformulator->reformulate(c.query);
            if (rewrites.size() > options.use_first) {
                rewrites.resize(options.use_first);
            }
        }
        const bool reformulated = !rewrites.empty();
        if (!reformulated) {
            rewrites.push_back(c.query);
        }

        CaseResult result;
        result.query = c.query;
        for (const auto& q : rewrites) {
            const auto hits = engine.search(q, options.top_n);
            for (std::size_t i = 0; i < hits.size(); ++i) {
                if (hits[i].doc_id == c.relevant_doc_id) {
                    if (!result.best_rank || i + 1 < *result.best_rank) {
                        result.best_rank = i + 1;
                        if (reformulated) {
                            result.chosen_reformulation = q;
                        }
                    }
                    break;
                }
            }
        }
        result.reciprocal = result.best_rank ? 1.0 / static_cast<double>(*result.best_rank) : 0.0;
        reciprocals.push_back(result.reciprocal);
        report.per_query.push_back(std::move(result));
    }
    report.mrr = mrr(reciprocals);
    return report;
}

StrategyAblation ablate_strategy(const SearchEngine& engine, const Vocabulary& vocab,
                                 const SpanInfiller& model, std::span<const EvalCase> cases,
                                 std::span<const Strategy> strategies,
                                 std::span<const std::uint64_t> seeds,
                                 const ExpanderConfig& base, const EvalOptions& options)
{
    if (seeds.empty()) {
        throw Error(ErrorKind::ConfigError, "strategy ablation needs at least one seed");
    }
    StrategyAblation table;
    table.baseline_mrr = evaluate(engine, nullptr, cases, options).mrr;
    for (Strategy s : strategies) {
        ExpanderConfig cfg = base;
        cfg.strategy = s;
        const Expander expander(vocab, model, cfg);
        StrategyRow row;
        row.strategy = to_string(s);
        const std::size_t runs = s == Strategy::Rand ? seeds.size() : 1;
        for (std::size_t i = 0; i < runs; ++i) {
            const ExpanderReformulator reformulator(expander, seeds[i]);
            row.per_seed.push_back(evaluate(engine, &reformulator, cases, options).mrr);
        }
        row.mrr = std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0)
                  / static_cast<double>(row.per_seed.size());
        table.rows.push_back(std::move(row));
    }
    return table;
}

KAblation ablate_k(const SearchEngine& engine, const Vocabulary& vocab, const SpanInfiller& model,
                   std::span<const EvalCase> cases, std::span<const std::size_t> k_values,
                   std::uint64_t seed, const ExpanderConfig& base, const EvalOptions& options)
{
    if (k_values.empty() || std::find(k_values.begin(), k_values.end(), 0u) != k_values.end()) {
        throw Error(ErrorKind::ConfigError, "k values must be non-empty and positive");
    }
    KAblation table;
    table.baseline_mrr = evaluate(engine, nullptr, cases, options).mrr;

    ExpanderConfig cfg = base;
    cfg.k = *std::max_element(k_values.begin(), k_values.end());
    const Expander expander(vocab, model, cfg);
    const ExpanderReformulator live(expander, seed);
    std::unordered_map<std::string, std::vector<std::string>> rewrites;
    for (const auto& c : cases) {
        if (!rewrites.contains(c.query)) {
            rewrites.emplace(c.query, live.reformulate(c.query));
        }
    }
    const FixedReformulator fixed(std::move(rewrites));
    for (std::size_t k : k_values) {
        EvalOptions opts = options;
        opts.use_first = k;
        table.rows.push_back({k, evaluate(engine, &fixed, cases, opts).mrr});
    }
    return table;
}

void write_report_jsonl(const EvalReport& report, std::ostream& out)
{
    nlohmann::json config = report.config_snapshot;
    config["type"] = "config";
    out << config.dump() << '\n';
    for (const auto& r : report.per_query) {
        nlohmann::json line = {{"type", "case"}, {"query", r.query}, {"reciprocal", r.reciprocal}};
        line["best_rank"] = r.best_rank ? nlohmann::json(*r.best_rank) : nlohmann::json(nullptr);
        line["chosen_reformulation"] =
            r.chosen_reformulation ? nlohmann::json(*r.chosen_reformulation) : nlohmann::json(nullptr);
        out << line.dump() << '\n';
    }
    out << nlohmann::json({{"type", "summary"}, {"mrr", report.mrr}, {"cases", report.per_query.size()}}).dump()
        << '\n';
}

void print_report_table(const EvalReport& report, std::ostream& out)
{
    std::size_t hits = 0;
    for (const auto& r : report.per_query) {
        hits += r.best_rank.has_value();
    }
    out << std::left << std::setw(12) << "Cases" << report.per_query.size() << '\n'
        << std::setw(12) << "Retrieved" << hits << '\n'
        << std::setw(12) << "MRR" << std::fixed << std::setprecision(4) << report.mrr << '\n';
    out.unsetf(std::ios::floatfield);
}

void print_strategy_table(const StrategyAblation& table, std::ostream& out)
{
    out << std::left << std::setw(12) << "Strategy" << std::setw(10) << "MRR" << "Improvement\n";
    out << std::setw(12) << "none" << std::setw(10) << std::fixed << std::setprecision(4)
        << table.baseline_mrr << "-\n";
    for (const auto& row : table.rows) {
        out << std::setw(12) << row.strategy << std::setw(10) << row.mrr
            << percent_change(row.mrr, table.baseline_mrr) << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

void print_k_table(const KAblation& table, std::ostream& out)
{
    out << std::left << std::setw(12) << "Positions" << std::setw(10) << "MRR" << "Improvement\n";
    out << std::setw(12) << "none" << std::setw(10) << std::fixed << std::setprecision(4)
        << table.baseline_mrr << "-\n";
    for (const auto& row : table.rows) {
        out << std::setw(12) << row.k << std::setw(10) << row.mrr
            << percent_change(row.mrr, table.baseline_mrr) << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

}  // namespace qreform
