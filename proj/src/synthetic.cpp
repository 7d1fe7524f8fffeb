#include "qreform/synthetic.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "qreform/errors.hpp"
#include "qreform/hash.hpp"

namespace qreform {

namespace {

struct ObjectLang {
    std::string_view object;
    std::string_view lang;
};

constexpr std::array<std::string_view, 12> kVerbs = {
    "sort", "reverse", "parse", "serialize", "merge", "filter",
    "copy", "split", "hash", "compress", "validate", "clone"};

constexpr std::array<std::string_view, 4> kLangs = {"python", "java", "javascript", "rust"};

constexpr std::array<ObjectLang, 16> kObjects = {{
    {"dataframe", "python"}, {"dictionary", "python"}, {"tuple", "python"}, {"generator", "python"},
    {"arraylist", "java"}, {"hashmap", "java"}, {"bytebuffer", "java"}, {"treemap", "java"},
    {"promise", "javascript"}, {"nodelist", "javascript"}, {"blob", "javascript"}, {"typedarray", "javascript"},
    {"vec", "rust"}, {"slice", "rust"}, {"btreemap", "rust"}, {"refcell", "rust"},
}};

// Every template has at least seven words, so the masked span is two words
// long and can cover "in LANG" exactly.
constexpr std::array<std::string_view, 3> kTemplates = {
    "how to {v} a {o}",
    "how do i {v} the {o}",
    "what is the best way to {v} a {o}",
};

std::string fill(std::string_view tmpl, std::string_view verb, std::string_view object)
{
    std::string out(tmpl);
    out.replace(out.find("{v}"), 3, verb);
    out.replace(out.find("{o}"), 3, object);
    return out;
}

template <typename Fn>
void write_lines(const std::filesystem::path& path, std::size_t count, Fn&& line_at)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot write " + path.string());
    }
    for (std::size_t i = 0; i < count; ++i) {
        out << line_at(i).dump() << '\n';
    }
}

}  // namespace

IntentBenchmark make_intent_benchmark(const IntentBenchmarkOptions& options)
{
    IntentBenchmark bench;
    std::mt19937_64 rng(options.seed);

    for (auto tmpl : kTemplates) {
        for (auto verb : kVerbs) {
            for (const auto& ol : kObjects) {
                bench.pretrain_queries.push_back(fill(tmpl, verb, ol.object) + " in " + std::string(ol.lang));
            }
        }
    }

    // Docs for one (verb, object) pair differ only in the language word, so
    // they tie on any query without it. Hashed ids make the tie order arbitrary.
    for (auto verb : kVerbs) {
        for (const auto& ol : kObjects) {
            for (auto lang : kLangs) {
                const std::string key = std::string(verb) + "/" + std::string(ol.object) + "/" + std::string(lang);
                Document doc;
                doc.doc_id = "doc-" + to_hex(fnv1a64(key, options.seed)).substr(0, 12);
                doc.text = std::string(verb) + " a " + std::string(ol.object) + " with " + std::string(lang);
                doc.code = std::string(lang) + "_" + std::string(verb) + "_" + std::string(ol.object) + "(data)";
                bench.documents.documents.push_back(std::move(doc));
            }
        }
    }

    for (auto verb : kVerbs) {
        for (const auto& ol : kObjects) {
            const std::string key = std::string(verb) + "/" + std::string(ol.object) + "/" + std::string(ol.lang);
            const auto tmpl = kTemplates[rng() % kTemplates.size()];
            bench.cases.push_back({fill(tmpl, verb, ol.object),
                                   "doc-" + to_hex(fnv1a64(key, options.seed)).substr(0, 12)});
        }
    }
    if (options.max_cases > 0 && options.max_cases < bench.cases.size()) {
        for (std::size_t i = bench.cases.size(); i > 1; --i) {
            std::swap(bench.cases[i - 1], bench.cases[rng() % i]);
        }
        bench.cases.resize(options.max_cases);
    }
    return bench;
}

std::vector<std::string> make_memorizable_queries(std::size_t count, std::uint64_t seed)
{
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    std::mt19937_64 rng(seed);

    std::set<std::string> pool_set;
    const std::size_t pool_size = std::max<std::size_t>(64, count * 2);
    while (pool_set.size() < pool_size) {
        std::string w;
        for (int s = 0; s < 3; ++s) {
            w.push_back(consonants[rng() % consonants.size()]);
            w.push_back(vowels[rng() % vowels.size()]);
        }
        pool_set.insert(std::move(w));
    }
    const std::vector<std::string> pool(pool_set.begin(), pool_set.end());

    // Reject any query whose corrupted form (for any span start) collides with
    // one already accepted; the masked words are then determined by context.
    std::set<std::vector<std::string>> corrupted_forms;
    std::vector<std::string> queries;
    while (queries.size() < count) {
        const std::size_t n = 4 + rng() % 5;
        Words words;
        for (std::size_t i = 0; i < n; ++i) {
            words.push_back(pool[rng() % pool.size()]);
        }
        const std::size_t span = (15 * n + 99) / 100;
        std::vector<std::vector<std::string>> forms;
        bool clash = false;
        for (std::size_t start = 0; start + span <= n && !clash; ++start) {
            Words form(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(start));
            form.emplace_back("[MASK]");
            form.insert(form.end(), words.begin() + static_cast<std::ptrdiff_t>(start + span), words.end());
            clash = corrupted_forms.contains(form)
                    || std::find(forms.begin(), forms.end(), form) != forms.end();
            forms.push_back(std::move(form));
        }
        if (clash) {
            continue;
        }
        corrupted_forms.insert(forms.begin(), forms.end());
        queries.push_back(join_words(words));
    }
    return queries;
}

void write_query_corpus(const std::filesystem::path& path, const std::vector<std::string>& queries)
{
    write_lines(path, queries.size(), [&](std::size_t i) { return nlohmann::json{{"query", queries[i]}}; });
}

void write_search_corpus(const std::filesystem::path& path, const SearchCorpus& corpus)
{
    write_lines(path, corpus.documents.size(), [&](std::size_t i) {
        const auto& d = corpus.documents[i];
        return nlohmann::json{{"doc_id", d.doc_id}, {"text", d.text}, {"code", d.code}};
    });
}

void write_eval_cases(const std::filesystem::path& path, const std::vector<EvalCase>& cases)
{
    write_lines(path, cases.size(), [&](std::size_t i) {
        return nlohmann::json{{"query", cases[i].query}, {"relevant_doc_id", cases[i].relevant_doc_id}};
    });
}

}  // namespace qreform
