#pragma once

// OpenAI-compatible chat + embeddings over HTTP. Credentials come from the
// environment (AMEMGYM_API_KEY / AMEMGYM_BASE_URL), never from files or flags.

#include <cstdlib>
#include <memory>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "amemgym/backend.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

struct LiveEndpoint {
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string api_key;
    int timeout_s = 60;

    static LiveEndpoint from_env(int timeout_s = 60) {
        LiveEndpoint ep;
        const char* url = std::getenv("AMEMGYM_BASE_URL");
        const char* key = std::getenv("AMEMGYM_API_KEY");
        ep.base_url = url ? url : "https://api.openai.com/v1";
        ep.api_key = key ? key : "";
        ep.timeout_s = timeout_s;
        if (ep.api_key.empty())
            throw Error(ErrorKind::usage, "live backend needs AMEMGYM_API_KEY in the environment");
        return ep;
    }
};

namespace detail {

/// Split "scheme://host[:port]/prefix" into an origin httplib accepts and the
/// path prefix to prepend to endpoints.
inline std::pair<std::string, std::string> split_base_url(const std::string& base) {
    std::string b = base;
    while (!b.empty() && b.back() == '/') b.pop_back();
    std::size_t scheme = b.find("://");
    if (scheme == std::string::npos)
        throw Error(ErrorKind::usage, "base url needs a scheme: " + base);
    std::size_t path = b.find('/', scheme + 3);
    if (path == std::string::npos) return {b, ""};
    return {b.substr(0, path), b.substr(path)};
}

inline json post_json(const LiveEndpoint& ep, const std::string& endpoint, const json& payload) {
    auto [origin, prefix] = split_base_url(ep.base_url);
    httplib::Client client(origin);
    client.set_connection_timeout(ep.timeout_s, 0);
    client.set_read_timeout(ep.timeout_s, 0);
    client.set_write_timeout(ep.timeout_s, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + ep.api_key}};
    auto res = client.Post(prefix + endpoint, headers, payload.dump(), "application/json");
    if (!res)
        throw Error(ErrorKind::backend,
                    "transport: no response from " + origin + prefix + endpoint);
    if (res->status == 401 || res->status == 403)
        throw Error(ErrorKind::backend, "auth: HTTP " + std::to_string(res->status));
    if (res->status >= 400 && res->status < 500)
        throw Error(ErrorKind::backend,
                    "bad_request: HTTP " + std::to_string(res->status) + " " + res->body);
    if (res->status >= 500)
        throw Error(ErrorKind::backend, "transport: HTTP " + std::to_string(res->status));
    json j = json::parse(res->body, nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorKind::backend, "transport: non-JSON response body");
    return j;
}

}  // namespace detail

class LiveChatBackend : public ChatBackend {
public:
    LiveChatBackend(LiveEndpoint ep, std::string model)
        : ep_(std::move(ep)), model_(std::move(model)) {}

    std::string complete(const ChatRequest& request) override {
        json msgs = json::array();
        for (const auto& m : request.messages)
            msgs.push_back(json{{"role", role_name(m.role)}, {"content", m.content}});
        json payload{{"model", model_},
                     {"messages", msgs},
                     {"temperature", request.temperature},
                     {"max_tokens", request.max_tokens}};
        json j = detail::post_json(ep_, "/chat/completions", payload);
        if (!j.contains("choices") || j["choices"].empty())
            throw Error(ErrorKind::backend, "transport: response has no choices");
        return j["choices"][0].at("message").at("content").get<std::string>();
    }

    std::string descriptor() const override { return "live-chat(" + model_ + ")"; }

private:
    LiveEndpoint ep_;
    std::string model_;
};

class LiveEmbeddingBackend : public EmbeddingBackend {
public:
    LiveEmbeddingBackend(LiveEndpoint ep, std::string model, std::size_t dimension = 1536)
        : ep_(std::move(ep)), model_(std::move(model)), dim_(dimension) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        json payload{{"model", model_}, {"input", texts}};
        json j = detail::post_json(ep_, "/embeddings", payload);
        if (!j.contains("data"))
            throw Error(ErrorKind::backend, "transport: embeddings response has no data");
        std::vector<std::vector<double>> out(texts.size());
        for (const auto& item : j["data"]) {
            std::size_t idx = item.value("index", 0);
            if (idx >= out.size())
                throw Error(ErrorKind::backend, "transport: embedding index out of range");
            out[idx] = item.at("embedding").get<std::vector<double>>();
            if (!out[idx].empty()) dim_ = out[idx].size();
        }
        return out;
    }

    std::size_t dimension() const override { return dim_; }

    std::string descriptor() const override { return "live-embed(" + model_ + ")"; }

private:
    LiveEndpoint ep_;
    std::string model_;
    std::size_t dim_;
};

}  // namespace amemgym
