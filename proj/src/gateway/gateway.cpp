#include "mhfa/gateway/gateway.hpp"

#include <cmath>
#include <thread>

#include "mhfa/core/dates.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/hashing.hpp"

namespace mhfa::gateway {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view request_kind_name(RequestKind k) {
    switch (k) {
        case RequestKind::chat: return "chat";
        case RequestKind::score: return "score";
        case RequestKind::embed: return "embed";
    }
    return "chat";
}

namespace {

RequestKind parse_request_kind(const std::string& s) {
    if (s == "chat") return RequestKind::chat;
    if (s == "score") return RequestKind::score;
    if (s == "embed") return RequestKind::embed;
    throw ParseError("exchange log: unknown request kind '" + s + "'");
}

ordered_json params_json(const GenParams& p) {
    ordered_json j;
    j["max_tokens"] = p.max_tokens;
    j["temperature"] = p.temperature;
    j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
    j["stop"] = p.stop;
    return j;
}

GenParams params_from_json(const json& j) {
    GenParams p;
    p.max_tokens = j.at("max_tokens").get<int>();
    p.temperature = j.at("temperature").get<double>();
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
    if (j.contains("stop")) p.stop = j["stop"].get<std::vector<std::string>>();
    return p;
}

}  // namespace

ordered_json request_json(std::span<const ChatMessage> messages, const GenParams& params) {
    ordered_json j;
    j["kind"] = "chat";
    j["messages"] = to_json(messages);
    j["params"] = params_json(params);
    return j;
}

std::string chat_request_hash(std::span<const ChatMessage> messages, const GenParams& params) {
    return sha256_hex(request_json(messages, params).dump());
}

std::string text_request_hash(RequestKind kind, std::string_view text) {
    ordered_json j;
    j["kind"] = request_kind_name(kind);
    j["text"] = text;
    return sha256_hex(j.dump());
}

std::string BackendExchange::request_hash() const {
    if (kind == RequestKind::chat) return chat_request_hash(messages, params);
    return text_request_hash(kind, text);
}

ordered_json BackendExchange::to_json() const {
    ordered_json j;
    j["timestamp"] = timestamp;
    j["backend_id"] = backend_id;
    j["kind"] = request_kind_name(kind);
    j["request_hash"] = request_hash();
    ordered_json req;
    if (kind == RequestKind::chat) {
        req["messages"] = gateway::to_json(messages);
        req["params"] = params_json(params);
    } else {
        req["text"] = text;
    }
    j["request"] = req;
    ordered_json resp;
    if (completion) {
        resp["text"] = completion->text;
        resp["finish_reason"] = completion->finish_reason;
    } else if (logprobs) {
        ordered_json arr = ordered_json::array();
        for (const auto& t : *logprobs) arr.push_back({{"token", t.token_text}, {"logprob", t.logprob}});
        resp["logprobs"] = arr;
    } else if (embedding) {
        resp["embedding"] = *embedding;
    }
    j["response"] = resp;
    j["latency_ms"] = latency_ms;
    return j;
}

BackendExchange BackendExchange::from_json(const json& j) {
    BackendExchange e;
    try {
        e.kind = parse_request_kind(j.at("kind").get<std::string>());
        e.backend_id = j.value("backend_id", "");
        e.timestamp = j.value("timestamp", "");
        e.latency_ms = j.value("latency_ms", 0.0);
        const auto& req = j.at("request");
        const auto& resp = j.at("response");
        int populated = 0;
        if (e.kind == RequestKind::chat) {
            e.messages = messages_from_json(req.at("messages"));
            e.params = params_from_json(req.at("params"));
        } else {
            e.text = req.at("text").get<std::string>();
        }
        if (resp.contains("text")) {
            e.completion = ChatResult{resp["text"].get<std::string>(), resp.value("finish_reason", "stop")};
            ++populated;
        }
        if (resp.contains("logprobs")) {
            std::vector<TokenLogprob> lps;
            for (const auto& t : resp["logprobs"]) lps.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
            e.logprobs = std::move(lps);
            ++populated;
        }
        if (resp.contains("embedding")) {
            e.embedding = resp["embedding"].get<std::vector<double>>();
            ++populated;
        }
        if (populated != 1) throw ParseError("exchange log: exactly one response kind must be populated");
    } catch (const json::exception& ex) {
        throw ParseError(std::string("exchange log: ") + ex.what());
    }
    return e;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)), inflight_(std::max(1, options_.inflight_cap)) {
    if (!backend_) throw ValidationError("backend", "gateway needs a backend");
    if (options_.max_attempts < 1) throw ValidationError("max_attempts", "max_attempts must be >= 1");
    if (options_.inflight_cap < 1 || options_.inflight_cap > 1024) {
        throw ValidationError("inflight_cap", "inflight_cap must be in [1, 1024]");
    }
    if (options_.log_path) {
        if (options_.log_path->has_parent_path()) std::filesystem::create_directories(options_.log_path->parent_path());
        log_.open(*options_.log_path, std::ios::app);
        if (!log_) throw IoError(options_.log_path->string(), "cannot open exchange log");
    }
}

Gateway::~Gateway() = default;

std::size_t Gateway::backend_calls() const {
    std::lock_guard lk(mu_);
    return backend_calls_;
}

BackendExchange Gateway::dispatch(BackendExchange req) {
    std::chrono::milliseconds backoff = options_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        {
            std::lock_guard lk(mu_);
            ++backend_calls_;
        }
        inflight_.acquire();
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (req.kind) {
                case RequestKind::chat: req.completion = backend_->chat(req.messages, req.params); break;
                case RequestKind::score: req.logprobs = backend_->score_logprobs(req.text); break;
                case RequestKind::embed: req.embedding = backend_->embed(req.text); break;
            }
            inflight_.release();
        } catch (const GatewayError& e) {
            inflight_.release();
            if (!e.retryable() || attempt >= options_.max_attempts) {
                if (!e.retryable() || options_.max_attempts == 1) throw;
                throw GatewayError(e.kind(),
                                   std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)",
                                   e.raw_payload(), e.http_status());
            }
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(std::llround(backoff.count() * options_.backoff_multiplier)));
            continue;
        } catch (...) {
            inflight_.release();
            throw;
        }
        req.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        req.backend_id = backend_->id();
        return req;
    }
}

BackendExchange Gateway::run(const std::string& hash, BackendExchange request) {
    if (!options_.memoize) {
        auto ex = dispatch(std::move(request));
        append_log(ex);
        return ex;
    }
    std::promise<BackendExchange> promise;
    std::shared_future<BackendExchange> fut;
    bool owner = false;
    {
        std::lock_guard lk(mu_);
        auto it = memo_.find(hash);
        if (it != memo_.end()) {
            fut = it->second;
        } else {
            fut = promise.get_future().share();
            memo_.emplace(hash, fut);
            owner = true;
        }
    }
    if (owner) {
        try {
            promise.set_value(dispatch(std::move(request)));
        } catch (...) {
            {
                std::lock_guard lk(mu_);
                memo_.erase(hash);
            }
            promise.set_exception(std::current_exception());
        }
    }
    BackendExchange ex = fut.get();
    append_log(ex);
    return ex;
}

void Gateway::append_log(BackendExchange exchange) {
    if (!log_.is_open()) return;
    exchange.timestamp = format_rfc3339(std::chrono::system_clock::now());
    const std::string line = exchange.to_json().dump();
    std::lock_guard lk(log_mu_);
    log_ << line << '\n';
    log_.flush();
}

ChatResult Gateway::chat(std::span<const ChatMessage> messages, const GenParams& params) {
    validate_messages(messages);
    params.validate();
    BackendExchange req;
    req.kind = RequestKind::chat;
    req.messages.assign(messages.begin(), messages.end());
    req.params = params;
    const std::string hash = req.request_hash();
    return *run(hash, std::move(req)).completion;
}

std::vector<TokenLogprob> Gateway::score_logprobs(std::string_view text) {
    if (text.empty()) return {};
    BackendExchange req;
    req.kind = RequestKind::score;
    req.text = std::string(text);
    const std::string hash = req.request_hash();
    return *run(hash, std::move(req)).logprobs;
}

std::vector<double> Gateway::embed(std::string_view text) {
    BackendExchange req;
    req.kind = RequestKind::embed;
    req.text = std::string(text);
    const std::string hash = req.request_hash();
    return *run(hash, std::move(req)).embedding;
}

ReplayBackend::ReplayBackend(const std::vector<BackendExchange>& log, std::string id) : id_(std::move(id)) {
    for (const auto& e : log) {
        by_hash_.insert_or_assign(e.request_hash(), e);
        if (e.embedding && dim_ == 0) dim_ = e.embedding->size();
    }
}

std::shared_ptr<ReplayBackend> ReplayBackend::load(const std::filesystem::path& path) {
    std::vector<BackendExchange> log;
    for (const auto& j : read_jsonl(path)) log.push_back(BackendExchange::from_json(j));
    return std::make_shared<ReplayBackend>(log);
}

ChatResult ReplayBackend::chat(std::span<const ChatMessage> messages, const GenParams& params) {
    const auto hash = chat_request_hash(messages, params);
    auto it = by_hash_.find(hash);
    if (it == by_hash_.end() || !it->second.completion) {
        throw GatewayError(ErrorKind::unmatched_request, "replay log has no chat exchange " + hash, prompt_text(messages));
    }
    return *it->second.completion;
}

std::vector<TokenLogprob> ReplayBackend::score_logprobs(std::string_view text) {
    const auto hash = text_request_hash(RequestKind::score, text);
    auto it = by_hash_.find(hash);
    if (it == by_hash_.end() || !it->second.logprobs) {
        throw GatewayError(ErrorKind::unmatched_request, "replay log has no scoring exchange " + hash, std::string(text));
    }
    return *it->second.logprobs;
}

std::vector<double> ReplayBackend::embed(std::string_view text) {
    const auto hash = text_request_hash(RequestKind::embed, text);
    auto it = by_hash_.find(hash);
    if (it == by_hash_.end() || !it->second.embedding) {
        throw GatewayError(ErrorKind::unmatched_request, "replay log has no embedding exchange " + hash, std::string(text));
    }
    return *it->second.embedding;
}

}  // namespace mhfa::gateway
