#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "qreform/errors.hpp"
#include "qreform/expander.hpp"
#include "test_support.hpp"

using namespace qreform;
using qreform::testing::corpus_of;
using qreform::testing::oracle_span_entropy;
using qreform::testing::StubInfiller;

namespace {

Vocabulary small_vocab()
{
    return Vocabulary::build(corpus_of({"convert string to list in python java fast", "a b c d e f g h"}), {100, 1});
}

bool is_subsequence(const Words& needle, const Words& hay)
{
    std::size_t j = 0;
    for (const auto& w : hay) {
        if (j < needle.size() && w == needle[j]) {
            ++j;
        }
    }
    return j == needle.size();
}

}  // namespace

TEST_CASE("one candidate per word boundary")
{
    const auto v = small_vocab();
    const auto q = v.encode(tokenize("convert string to list"));
    const auto cands = enumerate_candidates(q);
    REQUIRE(cands.size() == 5);
    CHECK(v.decode(cands.front()) == Words{"[MASK]", "convert", "string", "to", "list"});
    CHECK(v.decode(cands.back()) == Words{"convert", "string", "to", "list", "[MASK]"});
    CHECK(enumerate_candidates(TokenIds{7}).size() == 2);
    CHECK_THROWS_AS(enumerate_candidates(TokenIds{}), Error);
}

TEST_CASE("candidate enumeration invariants")
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        TokenIds q;
        const auto n = 1 + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) {
            q.push_back(static_cast<TokenId>(5 + rng() % 30));
        }
        const auto cands = enumerate_candidates(q);
        REQUIRE(cands.size() == n + 1);
        for (std::size_t p = 0; p < cands.size(); ++p) {
            const auto& c = cands[p];
            CHECK(c.size() == n + 1);
            CHECK(std::count(c.begin(), c.end(), kMaskId) == 1);
            CHECK(c[p] == kMaskId);
            TokenIds stripped;
            std::copy_if(c.begin(), c.end(), std::back_inserter(stripped), [](TokenId t) { return t != kMaskId; });
            CHECK(stripped == q);
        }
    }
}

TEST_CASE("information gain values")
{
    SpanPrediction uniform;
    uniform.span = {5};
    uniform.distributions = {std::vector<double>(1000, 1.0 / 1000)};
    CHECK(std::abs(information_gain(uniform) + std::log(1000.0)) < 1e-9);

    SpanPrediction onehot;
    onehot.span = {5};
    onehot.distributions = {std::vector<double>(10, 0.0)};
    onehot.distributions[0][3] = 1.0;
    CHECK(information_gain(onehot) == 0.0);

    // one step at (0.5, 0.5) and one one-hot step: mean of -ln 2 and 0
    SpanPrediction mixed;
    mixed.span = {5, 6};
    mixed.distributions = {{0.5, 0.5, 0.0}, {0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}};
    mixed.terminated = true;
    CHECK(std::abs(information_gain(mixed) - (-0.34657359027997264)) < 1e-6);

    SpanPrediction empty;
    empty.distributions = {{1.0, 0.0}};
    empty.terminated = true;
    CHECK_THROWS_AS(information_gain(empty), Error);
    CHECK_THROWS_AS(mean_log_probability(empty), Error);
}

TEST_CASE("mean log probability of emitted tokens")
{
    SpanPrediction p;
    p.span = {1, 0};
    p.distributions = {{0.5, 0.5}, {0.25, 0.75}};
    CHECK(std::abs(mean_log_probability(p) - 0.5 * (std::log(0.5) + std::log(0.25))) < 1e-12);
}

TEST_CASE("splice")
{
    const Words q{"convert", "string", "to", "list"};
    CHECK(splice(q, 4, Words{"in", "python"}) == "convert string to list in python");
    CHECK(splice(q, 0, Words{"how", "to"}) == "how to convert string to list");
    CHECK(splice(q, 2, Words{}) == "convert string to list");
    CHECK_THROWS_AS(splice(q, 5, Words{"x"}), Error);
}

TEST_CASE("entropy strategy ranks the most confident insertion first")
{
    const auto v = small_vocab();
    StubInfiller stub(v.size());
    const TokenId in = v.id_of("in");
    const TokenId python = v.id_of("python");
    const TokenId fast = v.id_of("fast");
    stub.script(0, stub.span({fast}, 0.4));
    stub.script(2, stub.span({in, python}, 0.95));
    stub.script(4, stub.span({in, python}, 0.7));
    Expander ex(v, stub, {3, 10, Strategy::Entr, {}});
    const auto out = ex.expand("convert string to list");
    REQUIRE(out.size() == 3);
    CHECK(out[0].position == 2);
    CHECK(out[0].reformulated == "convert string in python to list");
    CHECK(out[1].position == 4);
    CHECK(out[2].position == 0);
    CHECK(std::abs(out[0].ig + oracle_span_entropy(stub.span({in, python}, 0.95))) < 1e-12);
}

TEST_CASE("entropy top-k matches a brute force oracle")
{
    const auto v = small_vocab();
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = 1 + rng() % 6;
        Words words;
        for (std::size_t i = 0; i < n; ++i) {
            words.push_back(v.token_of(static_cast<TokenId>(5 + rng() % (v.size() - 5))));
        }
        StubInfiller stub(v.size());
        std::vector<SpanPrediction> scripted(n + 1);
        for (std::size_t p = 0; p <= n; ++p) {
            TokenIds span;
            const auto len = 1 + rng() % 3;
            for (std::size_t j = 0; j < len; ++j) {
                span.push_back(static_cast<TokenId>(5 + rng() % (v.size() - 5)));
            }
            scripted[p] = stub.span(span, 0.1 + 0.89 * static_cast<double>(rng() % 1000) / 1000.0);
            stub.script(p, scripted[p]);
        }
        const std::size_t k = 1 + rng() % 4;
        Expander ex(v, stub, {k, 10, Strategy::Entr, {}});
        const auto out = ex.expand(words);

        // oracle: score every position, dedupe on text keeping the best, sort
        std::vector<std::pair<double, std::size_t>> ranked;
        std::set<std::string> seen;
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t p = 0; p <= n; ++p) {
            all.push_back({-oracle_span_entropy(scripted[p]), p});
        }
        std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (const auto& [ig, p] : all) {
            const auto text = splice(words, p, v.decode(scripted[p].span));
            if (seen.insert(text).second) {
                ranked.push_back({ig, p});
            }
        }
        const auto expected = std::min(k, ranked.size());
        REQUIRE(out.size() == expected);
        for (std::size_t i = 0; i < expected; ++i) {
            CHECK(out[i].position == ranked[i].second);
            CHECK(std::abs(out[i].ig - ranked[i].first) < 1e-12);
            CHECK(out[i].ig <= 0.0);
            CHECK(out[i].ig >= -std::log(static_cast<double>(v.size())) - 1e-12);
            CHECK(is_subsequence(words, tokenize(out[i].reformulated)));
        }
        for (std::size_t i = 1; i < out.size(); ++i) {
            CHECK(out[i - 1].ig >= out[i].ig);
        }
    }
}

TEST_CASE("probability strategy ranks by mean log probability")
{
    const auto v = small_vocab();
    StubInfiller stub(v.size());
    stub.script(0, stub.span({v.id_of("fast")}, 0.9));
    stub.script(1, stub.span({v.id_of("in"), v.id_of("java")}, 0.6));
    Expander ex(v, stub, {2, 10, Strategy::Prob, {}});
    const auto out = ex.expand("list");
    REQUIRE(out.size() == 2);
    CHECK(out[0].position == 0);
    CHECK(std::abs(out[0].score - std::log(0.9)) < 1e-12);
    CHECK(out[1].score <= 0.0);
}

TEST_CASE("random strategy is reproducible and seed dependent")
{
    const auto v = small_vocab();
    StubInfiller stub(v.size());
    for (std::size_t p = 0; p <= 8; ++p) {
        stub.script(p, stub.span({v.id_of("fast")}, 0.5));
    }
    Expander ex(v, stub, {3, 10, Strategy::Rand, {}});
    const Words q{"a", "b", "c", "d", "e", "f", "g", "h"};
    const auto a = ex.expand(q, 7);
    const auto b = ex.expand(q, 7);
    REQUIRE(a.size() == 3);
    std::vector<std::size_t> pa, pb;
    for (std::size_t i = 0; i < 3; ++i) {
        pa.push_back(a[i].position);
        pb.push_back(b[i].position);
    }
    CHECK(pa == pb);
    CHECK(std::is_sorted(pa.begin(), pa.end()));
    bool differs = false;
    for (std::uint64_t s = 8; s < 20 && !differs; ++s) {
        const auto c = ex.expand(q, s);
        for (std::size_t i = 0; i < 3; ++i) {
            differs = differs || c[i].position != pa[i];
        }
    }
    CHECK(differs);
}

TEST_CASE("identical rewrites are reported once")
{
    const auto v = small_vocab();
    StubInfiller stub(v.size());
    const TokenId a = v.id_of("a");
    stub.script(0, stub.span({a}, 0.9));
    stub.script(1, stub.span({a}, 0.8));
    stub.script(2, stub.span({a}, 0.7));
    Expander ex(v, stub, {3, 10, Strategy::Entr, {}});
    const auto out = ex.expand("a a");
    REQUIRE(out.size() == 1);
    CHECK(out[0].reformulated == "a a a");
    CHECK(out[0].position == 0);
}

TEST_CASE("reserved-only spans are dropped and k caps the output")
{
    const auto v = small_vocab();
    StubInfiller stub(v.size());
    stub.script(0, stub.span({kUnkId}, 0.9));
    stub.script(1, stub.span({v.id_of("java")}, 0.9));
    Expander ex(v, stub, {5, 10, Strategy::Entr, {}});
    const auto out = ex.expand("list");
    REQUIRE(out.size() == 1);
    CHECK(out[0].reformulated == "list java");
}

TEST_CASE("expander configuration and defaults")
{
    ExpanderConfig c;
    CHECK(c.k == 3);
    CHECK(c.m == 10);
    CHECK(c.strategy == Strategy::Entr);
    c.k = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(parse_strategy("entr") == Strategy::Entr);
    CHECK(parse_strategy("PROB") == Strategy::Prob);
    CHECK_FALSE(parse_strategy("best").has_value());

    const auto v = small_vocab();
    StubInfiller wrong(v.size() + 1);
    CHECK_THROWS_AS(Expander(v, wrong), Error);
    StubInfiller stub(v.size());
    Expander ex(v, stub);
    CHECK_THROWS_AS(ex.expand("  "), Error);
}
