#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/gateway/backend.hpp"

namespace mhfa::gateway {

enum class RequestKind { chat, score, embed };

std::string_view request_kind_name(RequestKind k);

/// One backend call as recorded in the exchange log. Exactly one of the
/// response members is populated, matching `kind`.
struct BackendExchange {
    RequestKind kind = RequestKind::chat;
    std::vector<ChatMessage> messages;  ///< chat only
    GenParams params;                   ///< chat only
    std::string text;                   ///< score/embed only
    std::optional<ChatResult> completion;
    std::optional<std::vector<TokenLogprob>> logprobs;
    std::optional<std::vector<double>> embedding;
    double latency_ms = 0;
    std::string backend_id;
    std::string timestamp;  ///< RFC 3339, set when the entry is appended

    std::string request_hash() const;
    nlohmann::ordered_json to_json() const;
    static BackendExchange from_json(const nlohmann::json& j);
};

nlohmann::ordered_json request_json(std::span<const ChatMessage> messages, const GenParams& params);
std::string chat_request_hash(std::span<const ChatMessage> messages, const GenParams& params);
std::string text_request_hash(RequestKind kind, std::string_view text);

struct GatewayOptions {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double backoff_multiplier = 2.0;
    int inflight_cap = 4;
    std::optional<std::filesystem::path> log_path;
    bool memoize = true;
};

/// Thread-safe front door to one backend: bounded retries with exponential
/// backoff on retryable failures, an in-flight cap, per-session memoization
/// keyed by request hash (so a retried or repeated request is answered at most
/// once), and an append-only JSONL exchange log.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    ChatResult chat(std::span<const ChatMessage> messages, const GenParams& params = {});
    std::vector<TokenLogprob> score_logprobs(std::string_view text);
    std::vector<double> embed(std::string_view text);
    std::size_t embedding_dim() const { return backend_->embedding_dim(); }

    std::string backend_id() const { return backend_->id(); }
    const GatewayOptions& options() const { return options_; }
    /// Number of calls that reached the backend (attempts, including failed ones).
    std::size_t backend_calls() const;

private:
    BackendExchange run(const std::string& hash, BackendExchange request);
    BackendExchange dispatch(BackendExchange request);
    void append_log(BackendExchange exchange);

    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;
    std::counting_semaphore<1024> inflight_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_future<BackendExchange>> memo_;
    std::size_t backend_calls_ = 0;
    std::mutex log_mu_;
    std::ofstream log_;
};

/// Answers requests from a recorded exchange log by full request hash.
/// Requests absent from the log fail with ErrorKind::unmatched_request.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::vector<BackendExchange>& log, std::string id = "replay");
    static std::shared_ptr<ReplayBackend> load(const std::filesystem::path& path);

    std::string id() const override { return id_; }
    ChatResult chat(std::span<const ChatMessage> messages, const GenParams& params) override;
    std::vector<TokenLogprob> score_logprobs(std::string_view text) override;
    std::vector<double> embed(std::string_view text) override;
    std::size_t embedding_dim() const override { return dim_; }

private:
    std::map<std::string, BackendExchange> by_hash_;
    std::string id_;
    std::size_t dim_ = 0;
};

}  // namespace mhfa::gateway
