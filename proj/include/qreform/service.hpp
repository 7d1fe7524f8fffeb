#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "qreform/expander.hpp"
#include "qreform/model.hpp"
#include "qreform/search.hpp"
#include "qreform/vocabulary.hpp"

namespace qreform {

struct LoadedModel {
    Vocabulary vocab;
    InfillModel model;
};

struct ServiceOptions {
    ExpanderConfig expander;
    std::uint64_t seed = 101;
    std::size_t default_top_n = 100;
};

struct Response {
    int status = 200;
    nlohmann::json body;
};

/// JSON request handling for the HTTP API. Model and index are fixed at
/// construction and only read afterwards, so handlers may run concurrently.
class Service {
public:
    Service(std::optional<LoadedModel> model, std::optional<Bm25Index> index,
            ServiceOptions options = {});

    /// POST /reformulate {query, k?, m?, strategy?}
    Response reformulate(const std::string& body) const;
    /// POST /search {query, top_n?}
    Response search(const std::string& body) const;
    /// GET /health
    Response health() const;

    bool model_loaded() const noexcept { return model_.has_value(); }

private:
    std::optional<LoadedModel> model_;
    std::optional<Bm25Index> index_;
    ServiceOptions options_;
};

/// httplib server wired to a Service.
class HttpServer {
public:
    explicit HttpServer(const Service& service);
    ~HttpServer();

    /// Binds and returns the port; port 0 picks a free one.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace qreform
