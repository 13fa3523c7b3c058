#pragma once

#include <chrono>
#include <mutex>
#include <string>

#include "mhfa/gateway/backend.hpp"

namespace mhfa::gateway {

struct HttpConfig {
    std::string base_url;  ///< scheme://host[:port][/prefix]; a trailing "/v1" is optional
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
};

/// Client for the common chat-completions JSON protocol:
/// POST /v1/chat/completions, /v1/completions (echo + logprobs), /v1/embeddings.
/// True when MHFA_OFFLINE is set and `origin` (scheme://host[:port]) is not a
/// loopback address. Outbound HTTP checks this before connecting so test runs
/// can prove they never leave the machine.
bool offline_blocked(std::string_view origin);

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpConfig config);

    std::string id() const override;
    ChatResult chat(std::span<const ChatMessage> messages, const GenParams& params) override;
    /// Tokens whose first logprob the server leaves null (nothing to condition
    /// on) are dropped, so the result covers the scored tokens only.
    std::vector<TokenLogprob> score_logprobs(std::string_view text) override;
    std::vector<double> embed(std::string_view text) override;
    std::size_t embedding_dim() const override;

    const HttpConfig& config() const { return config_; }

private:
    nlohmann::json post(const std::string& endpoint, const nlohmann::json& body);

    HttpConfig config_;
    std::string origin_;  ///< scheme://host:port
    std::string prefix_;  ///< path prefix ending in /v1
    mutable std::mutex dim_mu_;
    std::size_t dim_ = 0;
};

}  // namespace mhfa::gateway
