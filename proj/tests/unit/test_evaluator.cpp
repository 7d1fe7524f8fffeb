#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "qreform/errors.hpp"
#include "qreform/evaluator.hpp"
#include "test_support.hpp"

using namespace qreform;
using qreform::testing::FakeEngine;
using qreform::testing::FakeReformulator;
using qreform::testing::StubInfiller;

TEST_CASE("mean reciprocal rank")
{
    CHECK(mrr(std::vector<double>{1.0}) == 1.0);
    const std::vector<double> r{1.0, 0.5, 0.25};
    CHECK(std::abs(mrr(r) - 0.5833333333333334) < 1e-12);
    CHECK(mrr(std::vector<double>{0.0, 0.0}) == 0.0);
    CHECK_THROWS_AS(mrr(std::vector<double>{}), Error);

    std::vector<double> shuffled{0.2, 1.0, 0.0, 0.5, 0.125, 1.0 / 3};
    const double base = mrr(shuffled);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(std::abs(mrr(shuffled) - base) < 1e-15);
    }
}

TEST_CASE("best rank over the reformulations counts")
{
    FakeEngine engine;
    engine.docs = {"t", "x", "y"};
    engine.results["orig"] = {"x", "y", "t"};
    engine.results["better"] = {"t", "x"};
    engine.results["worse"] = {"x", "y"};
    FakeReformulator ref;
    ref.rewrites["orig"] = {"worse", "better"};
    const std::vector<EvalCase> cases{{"orig", "t"}};

    const auto none = evaluate(engine, nullptr, cases);
    CHECK(none.mrr == doctest::Approx(1.0 / 3));
    const auto with = evaluate(engine, &ref, cases);
    CHECK(with.mrr == 1.0);
    CHECK(with.per_query[0].best_rank == 1u);
    CHECK(with.per_query[0].chosen_reformulation == "better");

    EvalOptions only_first;
    only_first.use_first = 1;
    const auto first = evaluate(engine, &ref, cases, only_first);
    CHECK(first.mrr == 0.0);
    CHECK_FALSE(first.per_query[0].best_rank.has_value());
}

TEST_CASE("misses outside top_n score zero")
{
    FakeEngine engine;
    engine.docs = {"t", "x", "y"};
    engine.results["q"] = {"x", "y", "t"};
    EvalOptions opts;
    opts.top_n = 2;
    const std::vector<EvalCase> cases{{"q", "t"}};
    CHECK(evaluate(engine, nullptr, cases, opts).mrr == 0.0);
}

TEST_CASE("empty rewrites fall back to the original query")
{
    FakeEngine engine;
    engine.docs = {"t"};
    engine.results["q"] = {"t"};
    FakeReformulator ref;
    const std::vector<EvalCase> cases{{"q", "t"}};
    CHECK(evaluate(engine, &ref, cases).mrr == 1.0);
}

TEST_CASE("unknown relevant document is a corrupt fixture")
{
    FakeEngine engine;
    engine.docs = {"a"};
    const std::vector<EvalCase> cases{{"q", "missing"}};
    try {
        evaluate(engine, nullptr, cases);
        FAIL("expected CorruptFixture");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CorruptFixture);
    }
    CHECK_THROWS_AS(evaluate(engine, nullptr, std::vector<EvalCase>{}), Error);
}

TEST_CASE("plain evaluation equals a direct search oracle")
{
    SearchCorpus c;
    for (int i = 0; i < 30; ++i) {
        c.documents.push_back({"d" + std::to_string(i),
                               "topic" + std::to_string(i % 7) + " item" + std::to_string(i % 5) + " extra",
                               ""});
    }
    const auto idx = Bm25Index::build(c);
    std::vector<EvalCase> cases;
    for (int i = 0; i < 10; ++i) {
        cases.push_back({"topic" + std::to_string(i % 7) + " item" + std::to_string(i % 3),
                         "d" + std::to_string(3 * i)});
    }
    double total = 0.0;
    for (const auto& cs : cases) {
        const auto ranked = idx.search(cs.query, 100);
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            if (ranked[r].doc_id == cs.relevant_doc_id) {
                total += 1.0 / static_cast<double>(r + 1);
                break;
            }
        }
    }
    const auto report = evaluate(idx, nullptr, cases);
    CHECK(std::abs(report.mrr - total / 10.0) < 1e-12);
    CHECK(report.per_query.size() == 10);
    CHECK(report.config_snapshot["top_n"] == 100);
}

TEST_CASE("mrr does not drop as more reformulations are used")
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        FakeEngine engine;
        FakeReformulator ref;
        std::vector<EvalCase> cases;
        for (int d = 0; d < 10; ++d) {
            engine.docs.push_back("d" + std::to_string(d));
        }
        for (int q = 0; q < 8; ++q) {
            const std::string query = "q" + std::to_string(q);
            std::vector<std::string> rewrites;
            for (int r = 0; r < 5; ++r) {
                const std::string text = query + "r" + std::to_string(r);
                auto docs = engine.docs;
                std::shuffle(docs.begin(), docs.end(), rng);
                docs.resize(1 + rng() % 10);
                engine.results[text] = docs;
                rewrites.push_back(text);
            }
            ref.rewrites[query] = rewrites;
            cases.push_back({query, engine.docs[rng() % 10]});
        }
        double prev = -1.0;
        for (std::size_t k = 1; k <= 5; ++k) {
            EvalOptions o;
            o.use_first = k;
            const double m = evaluate(engine, &ref, cases, o).mrr;
            CHECK(m >= prev);
            prev = m;
        }
    }
}

TEST_CASE("ablation tables have one row per requested setting")
{
    SearchCorpus c;
    c.documents = {{"p", "list in python", ""}, {"j", "list in java", ""}};
    const auto idx = Bm25Index::build(c);
    const auto v = Vocabulary::build(qreform::testing::corpus_of({"list in python java"}), {100, 1});
    StubInfiller stub(v.size());
    stub.script(1, stub.span({v.id_of("in"), v.id_of("java")}, 0.9));
    stub.script(0, stub.span({v.id_of("python")}, 0.3));
    const std::vector<EvalCase> cases{{"list", "p"}};

    const std::vector<Strategy> strategies{Strategy::Rand, Strategy::Entr};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto table = ablate_strategy(idx, v, stub, cases, strategies, seeds);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].strategy == "RAND");
    CHECK(table.rows[0].per_seed.size() == 3);
    CHECK(table.rows[1].strategy == "ENTR");
    CHECK(table.rows[1].mrr == 1.0);
    CHECK(table.baseline_mrr == 0.5);

    const std::vector<std::size_t> ks{1, 2};
    const auto kt = ablate_k(idx, v, stub, cases, ks, 101);
    REQUIRE(kt.rows.size() == 2);
    CHECK(kt.rows[0].k == 1);
    CHECK(kt.rows[1].mrr >= kt.rows[0].mrr);

    std::ostringstream out;
    print_strategy_table(table, out);
    CHECK(out.str().find("ENTR") != std::string::npos);
}

TEST_CASE("report jsonl has config, case and summary lines")
{
    FakeEngine engine;
    engine.docs = {"t"};
    engine.results["q"] = {"t"};
    const std::vector<EvalCase> cases{{"q", "t"}, {"q", "t"}};
    const auto report = evaluate(engine, nullptr, cases);
    std::ostringstream out;
    write_report_jsonl(report, out);
    std::istringstream in(out.str());
    std::vector<nlohmann::json> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(nlohmann::json::parse(line));
    }
    REQUIRE(lines.size() == 4);
    CHECK(lines.front()["type"] == "config");
    CHECK(lines[1]["type"] == "case");
    CHECK(lines.back()["type"] == "summary");
    CHECK(lines.back()["mrr"] == 1.0);
}
