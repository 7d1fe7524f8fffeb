// qreform: offline pipeline (synth, prepare, train, reformulate, evaluate,
// ablate) and the HTTP service (serve).

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qreform/corpus.hpp"
#include "qreform/errors.hpp"
#include "qreform/evaluator.hpp"
#include "qreform/expander.hpp"
#include "qreform/hash.hpp"
#include "qreform/model.hpp"
#include "qreform/search.hpp"
#include "qreform/service.hpp"
#include "qreform/synthetic.hpp"
#include "qreform/vocabulary.hpp"

namespace {

using namespace qreform;
using nlohmann::json;

struct Paths {
    std::string queries;
    std::string docs;
    std::string cases;
    std::string vocab;
    std::string index;
    std::string checkpoint;
    std::string report;
};

struct AppConfig {
    Paths paths;
    VocabularyOptions vocab;
    Bm25Params bm25;
    ModelConfig model;
    TrainConfig train;
    double grad_clip = 1.0;  // 0 disables clipping
    std::string optimizer = "adam";
    ExpanderConfig expander;
    std::string strategy = "entr";
    bool sample = false;
    std::uint64_t seed = 101;
    EvalOptions eval;
    std::vector<std::uint64_t> seeds{101, 102, 103, 104, 105};
    std::vector<std::size_t> k_values{1, 2, 3};
    std::string query;
    std::string out_dir = ".";
    std::size_t memorize = 0;
    std::string host = "127.0.0.1";
    int port = 8080;
};

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

json model_config_json(const ModelConfig& c)
{
    return {{"embed_dim", c.embed_dim}, {"layers", c.layers}, {"heads", c.heads},
            {"feedforward_dim", c.feedforward_dim}, {"max_input_len", c.max_input_len},
            {"dropout", c.dropout}, {"seed", c.seed}};
}

void finish_expander(AppConfig& cfg)
{
    const auto s = parse_strategy(cfg.strategy);
    if (!s) {
        throw UsageError("--strategy must be one of rand, prob, entr");
    }
    cfg.expander.strategy = *s;
    cfg.expander.decode.sample = cfg.sample;
    cfg.expander.decode.seed = cfg.seed;
}

LoadedModel load_model(const Paths& paths)
{
    auto vocab = Vocabulary::load(paths.vocab);
    auto model = InfillModel::load(paths.checkpoint, vocab.hash());
    return {std::move(vocab), std::move(model)};
}

int run_synth(const AppConfig& cfg)
{
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    if (cfg.memorize > 0) {
        const auto queries = make_memorizable_queries(cfg.memorize, cfg.seed);
        write_query_corpus(dir / "memorize.jsonl", queries);
        std::cout << "memorize.jsonl: " << queries.size() << " queries\n";
        return 0;
    }
    const auto bench = make_intent_benchmark({cfg.seed, 0});
    write_query_corpus(dir / "queries.jsonl", bench.pretrain_queries);
    write_search_corpus(dir / "docs.jsonl", bench.documents);
    write_eval_cases(dir / "cases.jsonl", bench.cases);
    std::cout << "queries.jsonl: " << bench.pretrain_queries.size() << " queries\n"
              << "docs.jsonl: " << bench.documents.documents.size() << " documents\n"
              << "cases.jsonl: " << bench.cases.size() << " cases\n";
    return 0;
}

int run_prepare(const AppConfig& cfg)
{
    QueryCorpusStats stats;
    const auto queries = load_query_corpus(cfg.paths.queries, &stats);
    if (queries.queries.empty()) {
        throw Error(ErrorKind::MalformedInput, "query corpus has no usable queries");
    }
    const auto vocab = Vocabulary::build(queries, cfg.vocab);
    vocab.save(cfg.paths.vocab);
    std::cout << "query lines: " << stats.lines << '\n'
              << "queries: " << queries.queries.size() << '\n'
              << "skipped: " << stats.skipped << '\n'
              << "vocabulary: " << vocab.size() << " (" << to_hex(vocab.hash()) << ")\n";
    if (!cfg.paths.docs.empty()) {
        const auto docs = load_search_corpus(cfg.paths.docs);
        const auto index = Bm25Index::build(docs, cfg.bm25);
        index.save(cfg.paths.index);
        std::cout << "documents: " << index.document_count() << '\n'
                  << "terms: " << index.term_count() << '\n';
    }
    return 0;
}

int run_train(AppConfig cfg)
{
    cfg.train.grad_clip = cfg.grad_clip > 0.0 ? std::optional<double>(cfg.grad_clip) : std::nullopt;
    if (cfg.optimizer == "adam") {
        cfg.train.optimizer = OptimizerKind::Adam;
    } else if (cfg.optimizer == "sgd") {
        cfg.train.optimizer = OptimizerKind::Sgd;
    } else {
        throw UsageError("--optimizer must be adam or sgd");
    }
    const auto vocab = Vocabulary::load(cfg.paths.vocab);
    const auto corpus = load_query_corpus(cfg.paths.queries);
    std::vector<TokenIds> ids;
    for (const auto& q : corpus.queries) {
        if (q.size() < cfg.model.max_input_len) {
            ids.push_back(vocab.encode(q));
        }
    }
    if (ids.empty()) {
        throw Error(ErrorKind::MalformedInput, "no trainable queries");
    }
    InfillModel model(cfg.model, vocab.size());
    std::cout << "parameters: " << model.parameters().size() << '\n';
    const std::uint64_t seed = cfg.model.seed;
    const auto report = model.train(
        [&ids, seed](std::size_t epoch) { return make_training_pairs(ids, seed, epoch); }, cfg.train,
        [](std::size_t epoch, double loss) {
            std::cout << "epoch " << epoch + 1 << " loss " << std::fixed << std::setprecision(6) << loss
                      << '\n' << std::defaultfloat;
        });
    model.save(cfg.paths.checkpoint, vocab.hash());
    std::cout << "checkpoint: " << cfg.paths.checkpoint << " (" << to_hex(hash_file(cfg.paths.checkpoint))
              << ")\n";
    if (!cfg.paths.report.empty()) {
        std::ofstream out(cfg.paths.report, std::ios::binary);
        out << json{{"per_epoch_loss", report.per_epoch_loss},
                    {"steps", report.steps},
                    {"samples_per_epoch", ids.size()},
                    {"model", model_config_json(cfg.model)},
                    {"train",
                     {{"epochs", cfg.train.epochs},
                      {"batch_size", cfg.train.batch_size},
                      {"learning_rate", cfg.train.learning_rate},
                      {"grad_clip", cfg.grad_clip},
                      {"optimizer", cfg.optimizer}}}}
                   .dump(2)
            << '\n';
    }
    return 0;
}

int run_reformulate(AppConfig cfg)
{
    if (split_words(cfg.query).empty()) {
        throw UsageError("--query must contain at least one word");
    }
    finish_expander(cfg);
    const auto loaded = load_model(cfg.paths);
    const Expander expander(loaded.vocab, loaded.model, cfg.expander);
    const auto candidates = expander.expand(cfg.query, cfg.seed);
    std::cout << std::fixed << std::setprecision(6);
    for (const auto& c : candidates) {
        std::cout << c.ig << '\t' << c.position << '\t' << c.reformulated << '\n';
    }
    return 0;
}

json snapshot(const AppConfig& cfg, bool reformulate)
{
    json s = {{"strategy", reformulate ? cfg.strategy : "none"},
              {"top_n", cfg.eval.top_n},
              {"use_first", cfg.eval.use_first},
              {"index_hash", to_hex(hash_file(cfg.paths.index))},
              {"cases_hash", to_hex(hash_file(cfg.paths.cases))}};
    if (reformulate) {
        s["k"] = cfg.expander.k;
        s["m"] = cfg.expander.m;
        s["seed"] = cfg.seed;
        s["decode"] = cfg.sample ? "sampled" : "greedy";
        s["vocab_hash"] = to_hex(hash_file(cfg.paths.vocab));
        s["checkpoint_hash"] = to_hex(hash_file(cfg.paths.checkpoint));
    }
    return s;
}

int run_evaluate(AppConfig cfg)
{
    const bool reformulate = cfg.strategy != "none";
    const auto index = Bm25Index::load(cfg.paths.index);
    const auto cases = load_eval_cases(cfg.paths.cases);
    EvalReport report;
    if (reformulate) {
        if (cfg.paths.vocab.empty() || cfg.paths.checkpoint.empty()) {
            throw UsageError("--vocab and --checkpoint are required unless --strategy none");
        }
        finish_expander(cfg);
        cfg.expander.k = std::max(cfg.expander.k, cfg.eval.use_first);
        const auto loaded = load_model(cfg.paths);
        const Expander expander(loaded.vocab, loaded.model, cfg.expander);
        const ExpanderReformulator reformulator(expander, cfg.seed);
        report = evaluate(index, &reformulator, cases, cfg.eval);
    } else {
        report = evaluate(index, nullptr, cases, cfg.eval);
    }
    const json base = report.config_snapshot;
    report.config_snapshot = snapshot(cfg, reformulate);
    report.config_snapshot.update(base);
    if (!cfg.paths.report.empty()) {
        std::ofstream out(cfg.paths.report, std::ios::binary);
        write_report_jsonl(report, out);
    }
    print_report_table(report, std::cout);
    return 0;
}

int run_ablate(AppConfig cfg)
{
    finish_expander(cfg);
    const auto index = Bm25Index::load(cfg.paths.index);
    const auto cases = load_eval_cases(cfg.paths.cases);
    const auto loaded = load_model(cfg.paths);
    const std::vector<Strategy> strategies{Strategy::Rand, Strategy::Prob, Strategy::Entr};
    const auto by_strategy =
        ablate_strategy(index, loaded.vocab, loaded.model, cases, strategies, cfg.seeds, cfg.expander, cfg.eval);
    const auto by_k = ablate_k(index, loaded.vocab, loaded.model, cases, cfg.k_values, cfg.seed, cfg.expander, cfg.eval);

    print_strategy_table(by_strategy, std::cout);
    std::cout << '\n';
    print_k_table(by_k, std::cout);

    if (!cfg.paths.report.empty()) {
        std::ofstream out(cfg.paths.report, std::ios::binary);
        json config = snapshot(cfg, true);
        config["type"] = "config";
        config["seeds"] = cfg.seeds;
        config["k_values"] = cfg.k_values;
        out << config.dump() << '\n';
        out << json{{"type", "baseline"}, {"mrr", by_strategy.baseline_mrr}}.dump() << '\n';
        for (const auto& row : by_strategy.rows) {
            out << json{{"type", "strategy"}, {"strategy", row.strategy}, {"mrr", row.mrr}, {"per_seed", row.per_seed}}
                       .dump()
                << '\n';
        }
        for (const auto& row : by_k.rows) {
            out << json{{"type", "positions"}, {"k", row.k}, {"mrr", row.mrr}}.dump() << '\n';
        }
    }
    return 0;
}

HttpServer* g_server = nullptr;

int run_serve(AppConfig cfg)
{
    finish_expander(cfg);
    std::optional<LoadedModel> model;
    if (!cfg.paths.checkpoint.empty()) {
        model = load_model(cfg.paths);
    }
    std::optional<Bm25Index> index;
    if (!cfg.paths.index.empty()) {
        index = Bm25Index::load(cfg.paths.index);
    }
    const Service service(std::move(model), std::move(index), {cfg.expander, cfg.seed, cfg.eval.top_n});
    HttpServer server(service);
    const int port = server.bind(cfg.host, cfg.port);
    if (port < 0) {
        throw Error(ErrorKind::Io, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    }
    std::cout << "listening on http://" << cfg.host << ':' << port << std::endl;
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    server.listen();
    g_server = nullptr;
    return 0;
}

void add_model_options(CLI::App& cmd, AppConfig& cfg)
{
    cmd.add_option("--embed-dim", cfg.model.embed_dim, "Embedding width")->capture_default_str();
    cmd.add_option("--layers", cfg.model.layers, "Encoder and decoder layers")->capture_default_str();
    cmd.add_option("--heads", cfg.model.heads, "Attention heads")->capture_default_str();
    cmd.add_option("--ff-dim", cfg.model.feedforward_dim, "Feed-forward width")->capture_default_str();
    cmd.add_option("--max-len", cfg.model.max_input_len, "Maximum input length in words")->capture_default_str();
    cmd.add_option("--dropout", cfg.model.dropout, "Dropout rate")->capture_default_str();
    cmd.add_option("--model-seed", cfg.model.seed, "Initialisation and corruption seed")->capture_default_str();
}

void add_expander_options(CLI::App& cmd, AppConfig& cfg)
{
    cmd.add_option("--k", cfg.expander.k, "Number of reformulations")->capture_default_str();
    cmd.add_option("--m", cfg.expander.m, "Maximum span length")->capture_default_str();
    cmd.add_option("--strategy", cfg.strategy, "Positioning strategy: rand, prob or entr")->capture_default_str();
    cmd.add_option("--seed", cfg.seed, "Seed for RAND positions and sampled decoding")->capture_default_str();
    cmd.add_flag("--sample", cfg.sample, "Sample spans instead of greedy decoding");
}

}  // namespace

int main(int argc, char** argv)
{
    AppConfig cfg;
    CLI::App app{"Self-supervised query reformulation for code search"};
    app.set_config("--config", "", "TOML/INI file with option values");
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Write the synthetic intent benchmark");
    synth->add_option("--out-dir", cfg.out_dir, "Output directory")->capture_default_str();
    synth->add_option("--seed", cfg.seed, "Generator seed")->capture_default_str();
    synth->add_option("--memorize", cfg.memorize, "Write N memorizable queries instead");

    auto* prepare = app.add_subcommand("prepare", "Tokenize corpora, build the vocabulary and index");
    prepare->add_option("--queries", cfg.paths.queries, "Query corpus (JSONL)")->required()->check(CLI::ExistingFile);
    prepare->add_option("--docs", cfg.paths.docs, "Search corpus (JSONL)")->check(CLI::ExistingFile);
    prepare->add_option("--vocab", cfg.paths.vocab, "Vocabulary output")->required();
    prepare->add_option("--index", cfg.paths.index, "Index output");
    prepare->add_option("--max-vocab", cfg.vocab.max_size, "Vocabulary size cap")->capture_default_str();
    prepare->add_option("--min-freq", cfg.vocab.min_freq, "Minimum token frequency")->capture_default_str();
    prepare->add_option("--k1", cfg.bm25.k1, "BM25 k1")->capture_default_str();
    prepare->add_option("--b", cfg.bm25.b, "BM25 b")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train the infill model with corrupted query completion");
    train->add_option("--queries", cfg.paths.queries, "Query corpus (JSONL)")->required()->check(CLI::ExistingFile);
    train->add_option("--vocab", cfg.paths.vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    train->add_option("--checkpoint", cfg.paths.checkpoint, "Checkpoint output")->required();
    train->add_option("--report", cfg.paths.report, "Training report output (JSON)");
    add_model_options(*train, cfg);
    train->add_option("--epochs", cfg.train.epochs, "Epochs")->capture_default_str();
    train->add_option("--batch-size", cfg.train.batch_size, "Batch size")->capture_default_str();
    train->add_option("--lr", cfg.train.learning_rate, "Learning rate")->capture_default_str();
    train->add_option("--grad-clip", cfg.grad_clip, "Gradient norm clip, 0 to disable")->capture_default_str();
    train->add_option("--optimizer", cfg.optimizer, "adam or sgd")->capture_default_str();

    auto* reform = app.add_subcommand("reformulate", "Print the top-k reformulations of a query");
    reform->add_option("--vocab", cfg.paths.vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    reform->add_option("--checkpoint", cfg.paths.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    reform->add_option("--query", cfg.query, "Query text")->required();
    add_expander_options(*reform, cfg);

    auto* eval = app.add_subcommand("evaluate", "Compute MRR with or without reformulation");
    eval->add_option("--index", cfg.paths.index, "Index")->required()->check(CLI::ExistingFile);
    eval->add_option("--cases", cfg.paths.cases, "Evaluation cases (JSONL)")->required()->check(CLI::ExistingFile);
    eval->add_option("--vocab", cfg.paths.vocab, "Vocabulary")->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", cfg.paths.checkpoint, "Checkpoint")->check(CLI::ExistingFile);
    eval->add_option("--report", cfg.paths.report, "Report output (JSONL)");
    eval->add_option("--top-n", cfg.eval.top_n, "Retrieval depth")->capture_default_str();
    eval->add_option("--use-first", cfg.eval.use_first, "Reformulations searched per query")->capture_default_str();
    add_expander_options(*eval, cfg);
    eval->get_option("--strategy")->description("Positioning strategy: none, rand, prob or entr");

    auto* ablate = app.add_subcommand("ablate", "Positioning-strategy and candidate-count ablations");
    ablate->add_option("--index", cfg.paths.index, "Index")->required()->check(CLI::ExistingFile);
    ablate->add_option("--cases", cfg.paths.cases, "Evaluation cases (JSONL)")->required()->check(CLI::ExistingFile);
    ablate->add_option("--vocab", cfg.paths.vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    ablate->add_option("--checkpoint", cfg.paths.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    ablate->add_option("--report", cfg.paths.report, "Report output (JSONL)");
    ablate->add_option("--top-n", cfg.eval.top_n, "Retrieval depth")->capture_default_str();
    ablate->add_option("--use-first", cfg.eval.use_first, "Reformulations searched per query")->capture_default_str();
    ablate->add_option("--seeds", cfg.seeds, "Seeds averaged for RAND")->capture_default_str();
    ablate->add_option("--k-values", cfg.k_values, "Candidate counts")->capture_default_str();
    add_expander_options(*ablate, cfg);

    auto* serve = app.add_subcommand("serve", "Serve /reformulate, /search and /health over HTTP");
    serve->add_option("--vocab", cfg.paths.vocab, "Vocabulary")->check(CLI::ExistingFile);
    serve->add_option("--checkpoint", cfg.paths.checkpoint, "Checkpoint")->check(CLI::ExistingFile)->needs("--vocab");
    serve->add_option("--index", cfg.paths.index, "Index")->check(CLI::ExistingFile);
    serve->add_option("--host", cfg.host, "Bind address")->capture_default_str();
    serve->add_option("--port", cfg.port, "Port, 0 for any")->capture_default_str();
    serve->add_option("--top-n", cfg.eval.top_n, "Default search depth")->capture_default_str();
    add_expander_options(*serve, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*synth) return run_synth(cfg);
        if (*prepare) return run_prepare(cfg);
        if (*train) return run_train(cfg);
        if (*reform) return run_reformulate(cfg);
        if (*eval) return run_evaluate(cfg);
        if (*ablate) return run_ablate(cfg);
        if (*serve) return run_serve(cfg);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
