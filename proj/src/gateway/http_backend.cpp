#include "mhfa/gateway/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>

namespace mhfa::gateway {

using nlohmann::json;

namespace {

ErrorKind classify(httplib::Error err) {
    switch (err) {
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::Read:
            return ErrorKind::timeout;
        default:
            return ErrorKind::transport;
    }
}

}  // namespace

bool offline_blocked(std::string_view origin) {
    const char* flag = std::getenv("MHFA_OFFLINE");
    if (!flag || !*flag || std::string_view(flag) == "0") return false;
    auto host = origin.substr(origin.find("://") == std::string_view::npos ? 0 : origin.find("://") + 3);
    host = host.substr(0, host.find('/'));
    if (!host.empty() && host.front() == '[') {
        host = host.substr(1, host.find(']') - 1);
    } else {
        host = host.substr(0, host.find(':'));
    }
    return !(host == "localhost" || host == "::1" || host.rfind("127.", 0) == 0);
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
    const std::string& url = config_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("base_url", "base URL needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (prefix_.size() < 3 || prefix_.compare(prefix_.size() - 3, 3, "/v1") != 0) prefix_ += "/v1";
    if (config_.model.empty()) throw ValidationError("model", "model name is required for HTTP backends");
}

std::string HttpBackend::id() const { return "http:" + config_.model + "@" + origin_; }

json HttpBackend::post(const std::string& endpoint, const json& body) {
    if (offline_blocked(origin_)) throw GatewayError(ErrorKind::transport, "offline mode: refusing to contact " + origin_);
    httplib::Client cli(origin_);
    const auto ms = config_.timeout.count();
    cli.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
    cli.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
    cli.set_write_timeout(ms / 1000, (ms % 1000) * 1000);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    const std::string path = prefix_ + endpoint;
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        throw GatewayError(classify(err), "POST " + origin_ + path + " failed: " + httplib::to_string(err),
                           httplib::to_string(err));
    }
    if (res->status == 404 || res->status == 501) {
        throw GatewayError(ErrorKind::capability,
                           "backend does not serve " + endpoint + "; use a mock or an endpoint that supports it",
                           res->body, res->status);
    }
    if (res->status < 200 || res->status >= 300) {
        throw GatewayError(ErrorKind::http_status, "POST " + path + " returned HTTP " + std::to_string(res->status),
                           res->body, res->status);
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception&) {
        throw GatewayError(ErrorKind::malformed_response, "response body is not JSON", res->body, res->status);
    }
}

ChatResult HttpBackend::chat(std::span<const ChatMessage> messages, const GenParams& params) {
    json body;
    body["model"] = config_.model;
    body["messages"] = to_json(messages);
    body["max_tokens"] = params.max_tokens;
    body["temperature"] = params.temperature;
    if (params.seed) body["seed"] = *params.seed;
    if (!params.stop.empty()) body["stop"] = params.stop;
    const json resp = post("/chat/completions", body);
    try {
        const auto& choice = resp.at("choices").at(0);
        ChatResult r;
        r.text = choice.at("message").at("content").get<std::string>();
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
            r.finish_reason = choice["finish_reason"].get<std::string>();
        }
        return r;
    } catch (const json::exception& e) {
        throw GatewayError(ErrorKind::malformed_response, std::string("unexpected chat response: ") + e.what(),
                           resp.dump());
    }
}

std::vector<TokenLogprob> HttpBackend::score_logprobs(std::string_view text) {
    if (text.empty()) return {};
    json body;
    body["model"] = config_.model;
    body["prompt"] = std::string(text);
    body["max_tokens"] = 1;
    body["temperature"] = 0;
    body["echo"] = true;
    body["logprobs"] = 1;
    const json resp = post("/completions", body);
    const json* lp = nullptr;
    try {
        lp = &resp.at("choices").at(0).at("logprobs");
    } catch (const json::exception&) {
    }
    if (!lp || lp->is_null() || !lp->contains("tokens") || !lp->contains("token_logprobs")) {
        throw GatewayError(ErrorKind::capability,
                           "backend returned no prompt logprobs; scoring needs echo+logprobs support or a mock token table",
                           resp.dump());
    }
    try {
        const auto& tokens = lp->at("tokens");
        const auto& values = lp->at("token_logprobs");
        if (tokens.size() != values.size()) throw json::other_error::create(501, "token/logprob length mismatch", nullptr);
        std::vector<TokenLogprob> out;
        std::size_t consumed = 0;
        for (std::size_t i = 0; i < tokens.size() && consumed < text.size(); ++i) {
            const std::string tok = tokens[i].get<std::string>();
            consumed += tok.size();
            if (values[i].is_null()) continue;
            const double v = values[i].get<double>();
            if (v > 0) throw json::other_error::create(501, "positive logprob", nullptr);
            out.push_back({tok, v});
        }
        return out;
    } catch (const json::exception& e) {
        throw GatewayError(ErrorKind::malformed_response, std::string("unexpected logprob payload: ") + e.what(),
                           resp.dump());
    }
}

std::vector<double> HttpBackend::embed(std::string_view text) {
    json body;
    body["model"] = config_.model;
    body["input"] = std::string(text);
    const json resp = post("/embeddings", body);
    std::vector<double> v;
    try {
        v = resp.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw GatewayError(ErrorKind::malformed_response, std::string("unexpected embedding response: ") + e.what(),
                           resp.dump());
    }
    std::lock_guard lk(dim_mu_);
    if (dim_ == 0) {
        dim_ = v.size();
    } else if (dim_ != v.size()) {
        throw GatewayError(ErrorKind::malformed_response,
                           "embedding dimension changed from " + std::to_string(dim_) + " to " + std::to_string(v.size()),
                           resp.dump());
    }
    return v;
}

std::size_t HttpBackend::embedding_dim() const {
    std::lock_guard lk(dim_mu_);
    return dim_;
}

}  // namespace mhfa::gateway
