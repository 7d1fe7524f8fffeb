#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>

#include "qreform/corpus.hpp"
#include "qreform/cqc.hpp"
#include "qreform/errors.hpp"
#include "qreform/evaluator.hpp"
#include "qreform/expander.hpp"
#include "qreform/model.hpp"
#include "qreform/search.hpp"
#include "qreform/synthetic.hpp"
#include "qreform/tokenizer.hpp"
#include "qreform/vocabulary.hpp"

namespace py = pybind11;
using namespace qreform;

namespace {

QueryCorpus to_corpus(const std::vector<std::string>& queries)
{
    QueryCorpus c;
    for (const auto& q : queries) {
        auto words = split_words(q);
        if (!words.empty()) {
            c.queries.push_back(std::move(words));
        }
    }
    return c;
}

// Keeps the vocabulary and model alive for as long as the expander is.
struct PyExpander {
    Vocabulary vocab;
    InfillModel model;
    Expander expander;

    PyExpander(Vocabulary v, const InfillModel& m, ExpanderConfig cfg)
        : vocab(std::move(v)), model(m), expander(vocab, model, cfg)
    {}
};

}  // namespace

PYBIND11_MODULE(_qreform, m)
{
    m.doc() = "Query reformulation engine";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("tokenize", &tokenize, py::arg("text"));
    m.def("masked_span_length", &masked_span_length, py::arg("n"));

    py::class_<Vocabulary>(m, "Vocabulary")
        .def_static("build",
                    [](const std::vector<std::string>& queries, std::size_t max_size, std::size_t min_freq) {
                        return Vocabulary::build(to_corpus(queries), {max_size, min_freq});
                    },
                    py::arg("queries"), py::arg("max_size") = 20000, py::arg("min_freq") = 2)
        .def_static("load", &Vocabulary::load)
        .def("save", &Vocabulary::save)
        .def("__len__", &Vocabulary::size)
        .def_property_readonly("tokens", &Vocabulary::tokens)
        .def_property_readonly("hash", &Vocabulary::hash)
        .def("id_of", &Vocabulary::id_of)
        .def("token_of", &Vocabulary::token_of)
        .def("encode", [](const Vocabulary& v, const Words& w) { return v.encode(w); })
        .def("decode", [](const Vocabulary& v, const TokenIds& ids) { return v.decode(ids); });

    py::class_<CorruptedSample>(m, "CorruptedSample")
        .def_readonly("corrupted", &CorruptedSample::corrupted)
        .def_readonly("target_span", &CorruptedSample::target_span)
        .def_readonly("span_start", &CorruptedSample::span_start)
        .def_readonly("span_len", &CorruptedSample::span_len)
        .def("reconstruct", &CorruptedSample::reconstruct);
    m.def("corrupt",
          [](const TokenIds& q, std::uint64_t seed) {
              std::mt19937_64 rng(seed);
              return corrupt(q, rng);
          },
          py::arg("query"), py::arg("seed"));
    m.def("corrupt_at", [](const TokenIds& q, std::size_t start) { return corrupt_at(q, start); },
          py::arg("query"), py::arg("start"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("feedforward_dim", &ModelConfig::feedforward_dim)
        .def_readwrite("max_input_len", &ModelConfig::max_input_len)
        .def_readwrite("dropout", &ModelConfig::dropout)
        .def_readwrite("seed", &ModelConfig::seed)
        .def("validate", &ModelConfig::validate);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("grad_clip", &TrainConfig::grad_clip)
        .def_readwrite("shuffle", &TrainConfig::shuffle);

    py::class_<SpanPrediction>(m, "SpanPrediction")
        .def(py::init<>())
        .def_readwrite("span", &SpanPrediction::span)
        .def_readwrite("distributions", &SpanPrediction::distributions)
        .def_readwrite("terminated", &SpanPrediction::terminated);

    py::class_<InfillModel>(m, "InfillModel")
        .def(py::init<const ModelConfig&, std::size_t>(), py::arg("config"), py::arg("vocab_size"))
        .def_property_readonly("vocab_size", &InfillModel::vocab_size)
        .def_property_readonly("parameter_count", [](const InfillModel& self) { return self.parameters().size(); })
        .def("train_cqc",
             [](InfillModel& self, const std::vector<TokenIds>& queries, const TrainConfig& cfg) {
                 py::gil_scoped_release release;
                 return self.train_cqc(queries, cfg).per_epoch_loss;
             },
             py::arg("queries"), py::arg("config"))
        .def("loss", [](const InfillModel& self, const std::vector<CorruptedSample>& s) { return self.loss(s); })
        .def("infill",
             [](const InfillModel& self, const TokenIds& corrupted, std::size_t max_span) {
                 return self.infill(corrupted, max_span);
             },
             py::arg("corrupted"), py::arg("max_span") = 10)
        .def("save", &InfillModel::save, py::arg("path"), py::arg("vocab_hash"))
        .def_static("load", &InfillModel::load, py::arg("path"), py::arg("vocab_hash"));

    m.def("information_gain", &information_gain, py::arg("prediction"));
    m.def("enumerate_candidates", [](const TokenIds& q) { return enumerate_candidates(q); }, py::arg("query"));
    m.def("splice",
          [](const Words& words, std::size_t position, const Words& span) { return splice(words, position, span); },
          py::arg("words"), py::arg("position"), py::arg("span"));

    py::class_<CandidateExpansion>(m, "CandidateExpansion")
        .def_readonly("position", &CandidateExpansion::position)
        .def_readonly("span", &CandidateExpansion::span)
        .def_readonly("ig", &CandidateExpansion::ig)
        .def_readonly("score", &CandidateExpansion::score)
        .def_readonly("reformulated", &CandidateExpansion::reformulated);

    py::class_<PyExpander>(m, "Expander")
        .def(py::init([](const Vocabulary& vocab, const InfillModel& model, std::size_t k, std::size_t m,
                         const std::string& strategy) {
                 const auto s = parse_strategy(strategy);
                 if (!s) {
                     throw Error(ErrorKind::ConfigError, "unknown strategy " + strategy);
                 }
                 ExpanderConfig cfg;
                 cfg.k = k;
                 cfg.m = m;
                 cfg.strategy = *s;
                 cfg.validate();
                 return std::make_unique<PyExpander>(vocab, model, cfg);
             }),
             py::arg("vocab"), py::arg("model"), py::arg("k") = 3, py::arg("m") = 10, py::arg("strategy") = "entr")
        .def("expand",
             [](const PyExpander& self, const std::string& query, std::uint64_t seed) {
                 return self.expander.expand(query, seed);
             },
             py::arg("query"), py::arg("seed") = 101);

    py::class_<Document>(m, "Document")
        .def(py::init([](std::string id, std::string text, std::string code) {
                 return Document{std::move(id), std::move(text), std::move(code)};
             }),
             py::arg("doc_id"), py::arg("text"), py::arg("code") = "")
        .def_readonly("doc_id", &Document::doc_id)
        .def_readonly("text", &Document::text)
        .def_readonly("code", &Document::code);

    py::class_<Bm25Index>(m, "Bm25Index")
        .def_static("build",
                    [](const std::vector<Document>& docs, double k1, double b) {
                        return Bm25Index::build(SearchCorpus{docs}, {k1, b});
                    },
                    py::arg("documents"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
        .def_static("load", &Bm25Index::load)
        .def("save", &Bm25Index::save)
        .def("__len__", &Bm25Index::document_count)
        .def("search",
             [](const Bm25Index& self, const std::string& q, std::size_t top_n) {
                 std::vector<std::pair<std::string, double>> out;
                 for (auto& r : self.search(q, top_n)) {
                     out.emplace_back(std::move(r.doc_id), r.score);
                 }
                 return out;
             },
             py::arg("query"), py::arg("top_n") = 100);

    py::class_<EvalCase>(m, "EvalCase")
        .def(py::init([](std::string q, std::string d) { return EvalCase{std::move(q), std::move(d)}; }),
             py::arg("query"), py::arg("relevant_doc_id"))
        .def_readonly("query", &EvalCase::query)
        .def_readonly("relevant_doc_id", &EvalCase::relevant_doc_id);

    m.def("mrr", [](const std::vector<double>& r) { return mrr(r); }, py::arg("reciprocals"));
    m.def("evaluate",
          [](const Bm25Index& index, const std::vector<EvalCase>& cases, const PyExpander* expander,
             std::size_t top_n, std::size_t use_first, std::uint64_t seed) {
              EvalOptions opts{top_n, use_first};
              if (expander == nullptr) {
                  return evaluate(index, nullptr, cases, opts).mrr;
              }
              const ExpanderReformulator ref(expander->expander, seed);
              return evaluate(index, &ref, cases, opts).mrr;
          },
          py::arg("index"), py::arg("cases"), py::arg("expander") = nullptr, py::arg("top_n") = 100,
          py::arg("use_first") = 3, py::arg("seed") = 101);

    m.def("make_intent_benchmark",
          [](std::uint64_t seed) {
              const auto b = make_intent_benchmark({seed, 0});
              return py::make_tuple(b.pretrain_queries, b.documents.documents, b.cases);
          },
          py::arg("seed") = 101);
    m.def("make_memorizable_queries", &make_memorizable_queries, py::arg("count"), py::arg("seed"));
}
