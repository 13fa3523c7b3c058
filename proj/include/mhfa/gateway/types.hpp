#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/core/errors.hpp"

namespace mhfa::gateway {

enum class Role { system, user, assistant };

std::string_view role_name(Role r);
/// Throws ParseError for anything other than system/user/assistant.
Role parse_role(std::string_view name);

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

/// Throws ValidationError when a user or assistant message is empty.
void validate_messages(std::span<const ChatMessage> messages);

struct GenParams {
    int max_tokens = 1024;
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
    std::vector<std::string> stop;

    void validate() const;
};

struct ChatResult {
    std::string text;
    std::string finish_reason = "stop";

    bool operator==(const ChatResult&) const = default;
};

struct TokenLogprob {
    std::string token_text;
    double logprob = 0;  ///< natural log, <= 0

    bool operator==(const TokenLogprob&) const = default;
};

enum class ErrorKind { transport, timeout, http_status, malformed_response, capability, unmatched_request };

std::string_view error_kind_name(ErrorKind k);

/// Failure talking to a backend. Carries the raw payload (response body or
/// transport message) for diagnosis.
class GatewayError : public Error {
public:
    GatewayError(ErrorKind kind, const std::string& what, std::string raw = {}, int http_status = 0)
        : Error(what), kind_(kind), raw_(std::move(raw)), status_(http_status) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& raw_payload() const noexcept { return raw_; }
    int http_status() const noexcept { return status_; }
    bool retryable() const noexcept {
        return kind_ == ErrorKind::transport || kind_ == ErrorKind::timeout ||
               (kind_ == ErrorKind::http_status && (status_ == 429 || status_ >= 500));
    }

private:
    ErrorKind kind_;
    std::string raw_;
    int status_;
};

/// Message contents joined by blank lines; what substring matchers see.
std::string prompt_text(std::span<const ChatMessage> messages);
/// SHA-256 over the canonical JSON of the messages (roles and contents only).
std::string prompt_hash(std::span<const ChatMessage> messages);

nlohmann::json to_json(std::span<const ChatMessage> messages);
std::vector<ChatMessage> messages_from_json(const nlohmann::json& j);

}  // namespace mhfa::gateway
