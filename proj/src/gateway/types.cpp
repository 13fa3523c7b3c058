#include "mhfa/gateway/types.hpp"

#include "mhfa/core/hashing.hpp"

namespace mhfa::gateway {

std::string_view role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role parse_role(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    throw ParseError("unknown role: " + std::string(name));
}

void validate_messages(std::span<const ChatMessage> messages) {
    if (messages.empty()) throw ValidationError("messages", "at least one message is required");
    for (const auto& m : messages) {
        if (m.role != Role::system && m.content.empty()) {
            throw ValidationError("content", std::string(role_name(m.role)) + " message must not be empty");
        }
    }
}

void GenParams::validate() const {
    if (max_tokens < 1) throw ValidationError("max_tokens", "max_tokens must be >= 1");
    if (!(temperature >= 0)) throw ValidationError("temperature", "temperature must be >= 0");
}

std::string_view error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::transport: return "transport";
        case ErrorKind::timeout: return "timeout";
        case ErrorKind::http_status: return "http_status";
        case ErrorKind::malformed_response: return "malformed_response";
        case ErrorKind::capability: return "capability";
        case ErrorKind::unmatched_request: return "unmatched_request";
    }
    return "transport";
}

std::string prompt_text(std::span<const ChatMessage> messages) {
    std::string out;
    for (const auto& m : messages) {
        if (!out.empty()) out += "\n\n";
        out += m.content;
    }
    return out;
}

nlohmann::json to_json(std::span<const ChatMessage> messages) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : messages) arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    return arr;
}

std::vector<ChatMessage> messages_from_json(const nlohmann::json& j) {
    std::vector<ChatMessage> out;
    for (const auto& m : j) out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    return out;
}

std::string prompt_hash(std::span<const ChatMessage> messages) { return sha256_hex(to_json(messages).dump()); }

}  // namespace mhfa::gateway
