#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qreform/hash.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args)
{
    const std::string cmd = std::string(QREFORM_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) {
        r.out.append(buf, n);
    }
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count_lines(const fs::path& p)
{
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        n += line.empty() ? 0 : 1;
    }
    return n;
}

struct Workspace {
    fs::path dir;
    Workspace()
    {
        dir = fs::temp_directory_path() / ("qreform_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

const std::string kTinyModel =
    " --embed-dim 16 --layers 1 --heads 2 --ff-dim 32 --max-len 16 --epochs 2 --batch-size 64";

}  // namespace

TEST_CASE("missing inputs and bad arguments fail with a message")
{
    auto r = run("prepare --queries /nonexistent.jsonl --vocab /tmp/x.txt");
    CHECK(r.code == 2);
    CHECK(r.out.find("nonexistent") != std::string::npos);
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("full pipeline")
{
    Workspace ws;
    REQUIRE(run("synth --out-dir " + ws.dir.string()).code == 0);
    const auto queries = ws / "queries.jsonl";

    SUBCASE("prepare counts and idempotence")
    {
        auto r = run("prepare --queries " + queries + " --docs " + (ws / "docs.jsonl") + " --vocab " +
                     (ws / "v1.txt") + " --index " + (ws / "index.json"));
        REQUIRE(r.code == 0);
        CHECK(r.out.find("query lines: " + std::to_string(count_lines(queries))) != std::string::npos);
        CHECK(r.out.find("documents: " + std::to_string(count_lines(ws / "docs.jsonl"))) != std::string::npos);
        REQUIRE(run("prepare --queries " + queries + " --vocab " + (ws / "v2.txt")).code == 0);
        CHECK(read_file(ws / "v1.txt") == read_file(ws / "v2.txt"));
    }

    SUBCASE("train, reformulate, evaluate")
    {
        REQUIRE(run("prepare --queries " + queries + " --docs " + (ws / "docs.jsonl") + " --vocab " +
                    (ws / "vocab.txt") + " --index " + (ws / "index.json"))
                    .code == 0);
        const std::string train = "train --queries " + queries + " --vocab " + (ws / "vocab.txt") + kTinyModel;
        auto t1 = run(train + " --checkpoint " + (ws / "a.ckpt") + " --report " + (ws / "train.json"));
        REQUIRE(t1.code == 0);
        CHECK(t1.out.find("epoch 2 loss") != std::string::npos);
        REQUIRE(run(train + " --checkpoint " + (ws / "b.ckpt")).code == 0);
        CHECK(qreform::hash_file(ws / "a.ckpt") == qreform::hash_file(ws / "b.ckpt"));
        const auto report = nlohmann::json::parse(read_file(ws / "train.json"));
        CHECK(report["per_epoch_loss"].size() == 2);

        const std::string model = " --vocab " + (ws / "vocab.txt") + " --checkpoint " + (ws / "a.ckpt");
        auto r = run("reformulate" + model + " --query \"how to sort a list\" --k 3");
        REQUIRE(r.code == 0);
        std::istringstream lines(r.out);
        double prev = 1.0;
        std::size_t count = 0;
        for (std::string line; std::getline(lines, line);) {
            const double ig = std::stod(line.substr(0, line.find('\t')));
            CHECK(ig <= prev);
            prev = ig;
            ++count;
        }
        CHECK(count >= 1);
        CHECK(count <= 3);
        CHECK(run("reformulate" + model + " --query \"   \"").code == 2);
        CHECK(run("reformulate" + model + " --query sort --strategy best").code != 0);

        const std::string eval = "evaluate --index " + (ws / "index.json") + " --cases " + (ws / "cases.jsonl");
        REQUIRE(run(eval + " --strategy none --report " + (ws / "none.jsonl")).code == 0);
        REQUIRE(run(eval + model + " --report " + (ws / "e1.jsonl")).code == 0);
        REQUIRE(run(eval + model + " --report " + (ws / "e2.jsonl")).code == 0);
        CHECK(read_file(ws / "e1.jsonl") == read_file(ws / "e2.jsonl"));
        std::istringstream in(read_file(ws / "e1.jsonl"));
        std::string first, last, line;
        std::getline(in, first);
        while (std::getline(in, line)) {
            last = line;
        }
        const auto config = nlohmann::json::parse(first);
        CHECK(config["type"] == "config");
        CHECK(config.contains("checkpoint_hash"));
        const double m = nlohmann::json::parse(last)["mrr"];
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);

        auto ab = run("ablate --index " + (ws / "index.json") + " --cases " + (ws / "cases.jsonl") + model +
                      " --seeds 1 2 --k-values 1 2 --report " + (ws / "ablate.jsonl"));
        REQUIRE(ab.code == 0);
        for (const char* name : {"RAND", "PROB", "ENTR"}) {
            CHECK(ab.out.find(name) != std::string::npos);
        }
    }
}

TEST_CASE("config file supplies options")
{
    Workspace ws;
    REQUIRE(run("synth --out-dir " + ws.dir.string()).code == 0);
    {
        std::ofstream cfg(ws / "prepare.toml");
        cfg << "[prepare]\nqueries = \"" << (ws / "queries.jsonl") << "\"\nvocab = \"" << (ws / "v.txt")
            << "\"\nmax-vocab = 12\n";
    }
    auto r = run("--config " + (ws / "prepare.toml") + " prepare");
    REQUIRE(r.code == 0);
    CHECK(count_lines(ws / "v.txt") == 12);
}
