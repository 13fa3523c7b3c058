#include "mhfa/gateway/backend.hpp"

namespace mhfa::gateway {

ChatResult Backend::chat(std::span<const ChatMessage>, const GenParams&) {
    throw GatewayError(ErrorKind::capability, "backend '" + id() + "' does not support chat");
}

std::vector<TokenLogprob> Backend::score_logprobs(std::string_view) {
    throw GatewayError(ErrorKind::capability,
                       "backend '" + id() + "' cannot score logprobs; use a mock script with a token table "
                       "or an endpoint that supports echo with logprobs");
}

std::vector<double> Backend::embed(std::string_view) {
    throw GatewayError(ErrorKind::capability,
                       "backend '" + id() + "' does not provide embeddings; use a mock with hash_embeddings");
}

ChatResult CallbackBackend::chat(std::span<const ChatMessage> messages, const GenParams& params) {
    if (!chat_) return Backend::chat(messages, params);
    return chat_(messages, params);
}

std::vector<TokenLogprob> CallbackBackend::score_logprobs(std::string_view text) {
    if (!score_) return Backend::score_logprobs(text);
    return score_(text);
}

std::vector<double> CallbackBackend::embed(std::string_view text) {
    if (!embed_) return Backend::embed(text);
    return embed_(text);
}

}  // namespace mhfa::gateway
