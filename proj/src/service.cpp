#include "qreform/service.hpp"

#include <httplib.h>

#include "qreform/errors.hpp"

namespace qreform {

namespace {

using nlohmann::json;

Response error(int status, const std::string& message)
{
    return {status, json{{"error", message}}};
}

// Parses the body as a JSON object; nullopt on failure.
std::optional<json> parse_object(const std::string& body)
{
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return std::nullopt;
    }
    return j;
}

// Reads an optional positive integer field. Returns false if present but invalid.
bool read_count(const json& j, const char* key, std::size_t& out)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return true;
    }
    if (!it->is_number_integer() || it->get<long long>() < 1) {
        return false;
    }
    out = it->get<std::size_t>();
    return true;
}

std::optional<std::string> read_query(const json& j)
{
    auto it = j.find("query");
    if (it == j.end() || !it->is_string()) {
        return std::nullopt;
    }
    auto q = it->get<std::string>();
    if (split_words(q).empty()) {
        return std::nullopt;
    }
    return q;
}

}  // namespace

Service::Service(std::optional<LoadedModel> model, std::optional<Bm25Index> index, ServiceOptions options)
    : model_(std::move(model)), index_(std::move(index)), options_(options)
{
    options_.expander.validate();
    if (model_ && model_->model.vocab_size() != model_->vocab.size()) {
        throw Error(ErrorKind::VocabMismatch, "model and vocabulary sizes differ");
    }
}

Response Service::reformulate(const std::string& body) const
{
    if (!model_) {
        return error(503, "no checkpoint loaded");
    }
    const auto req = parse_object(body);
    if (!req) {
        return error(400, "request body must be a JSON object");
    }
    const auto query = read_query(*req);
    if (!query) {
        return error(400, "query must be a non-empty string");
    }
    ExpanderConfig cfg = options_.expander;
    if (!read_count(*req, "k", cfg.k) || !read_count(*req, "m", cfg.m)) {
        return error(400, "k and m must be positive integers");
    }
    if (cfg.m > model_->model.config().max_input_len) {
        return error(400, "m exceeds the model's maximum length");
    }
    if (auto it = req->find("strategy"); it != req->end() && !it->is_null()) {
        const auto parsed = it->is_string() ? parse_strategy(it->get<std::string>()) : std::nullopt;
        if (!parsed) {
            return error(400, "strategy must be one of RAND, PROB, ENTR");
        }
        cfg.strategy = *parsed;
    }

    try {
        const Expander expander(model_->vocab, model_->model, cfg);
        json candidates = json::array();
        for (const auto& c : expander.expand(*query, options_.seed)) {
            candidates.push_back({{"reformulated", c.reformulated},
                                  {"position", c.position},
                                  {"span", c.span},
                                  {"ig", c.ig}});
        }
        return {200, json{{"candidates", std::move(candidates)}}};
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::EmptyQuery || e.kind() == ErrorKind::MalformedInput) {
            return error(400, e.what());
        }
        return error(500, e.what());
    }
}

Response Service::search(const std::string& body) const
{
    if (!index_) {
        return error(503, "no index loaded");
    }
    const auto req = parse_object(body);
    if (!req) {
        return error(400, "request body must be a JSON object");
    }
    const auto query = read_query(*req);
    if (!query) {
        return error(400, "query must be a non-empty string");
    }
    std::size_t top_n = options_.default_top_n;
    if (!read_count(*req, "top_n", top_n)) {
        return error(400, "top_n must be a positive integer");
    }
    json results = json::array();
    for (const auto& r : index_->search(*query, top_n)) {
        results.push_back({{"doc_id", r.doc_id}, {"score", r.score}, {"text_snippet", index_->snippet(r.doc_id)}});
    }
    return {200, json{{"results", std::move(results)}}};
}

Response Service::health() const
{
    return {200, json{{"status", "ok"},
                      {"model_loaded", model_.has_value()},
                      {"index_docs", index_ ? index_->document_count() : 0}}};
}

struct HttpServer::Impl {
    explicit Impl(const Service& s) : service(s) {}
    const Service& service;
    httplib::Server server;
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>(service))
{
    auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    auto& svc = impl_->service;
    impl_->server.Post("/reformulate", [&svc, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.reformulate(req.body));
    });
    impl_->server.Post("/search", [&svc, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.search(req.body));
    });
    impl_->server.Get("/health", [&svc, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, svc.health());
    });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port)
{
    if (port == 0) {
        return impl_->server.bind_to_any_port(host);
    }
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace qreform
