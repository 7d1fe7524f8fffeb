#include <doctest.h>

#include <set>

#include "qreform/cqc.hpp"
#include "qreform/synthetic.hpp"
#include "qreform/tokenizer.hpp"

using namespace qreform;

TEST_CASE("intent benchmark shape")
{
    const auto b = make_intent_benchmark();
    CHECK(b.pretrain_queries.size() == 576);
    CHECK(b.documents.documents.size() == 768);
    CHECK(b.cases.size() == 192);
    std::set<std::string> ids;
    for (const auto& d : b.documents.documents) {
        ids.insert(d.doc_id);
    }
    CHECK(ids.size() == 768);
    for (const auto& c : b.cases) {
        CHECK(ids.count(c.relevant_doc_id) == 1);
        CHECK(c.query.find(" in ") == std::string::npos);
    }
    const auto again = make_intent_benchmark();
    CHECK(again.pretrain_queries == b.pretrain_queries);
    CHECK(again.cases.front().relevant_doc_id == b.cases.front().relevant_doc_id);
}

TEST_CASE("memorizable queries have recoverable corruptions")
{
    const auto qs = make_memorizable_queries(200, 9);
    REQUIRE(qs.size() == 200);
    std::set<std::string> distinct(qs.begin(), qs.end());
    CHECK(distinct.size() == 200);
    std::set<std::string> contexts;
    for (const auto& q : qs) {
        const auto words = tokenize(q);
        CHECK(words.size() >= 4);
        CHECK(words.size() <= 8);
        const auto len = masked_span_length(words.size());
        for (std::size_t s = 0; s + len <= words.size(); ++s) {
            std::string key;
            for (std::size_t i = 0; i < words.size(); ++i) {
                if (i == s) {
                    key += "[MASK] ";
                } else if (i < s || i >= s + len) {
                    key += words[i] + " ";
                }
            }
            CHECK(contexts.insert(key).second);
        }
    }
}
