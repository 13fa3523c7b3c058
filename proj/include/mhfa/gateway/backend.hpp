#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhfa/gateway/types.hpp"

namespace mhfa::gateway {

/// One inference endpoint. Implementations must be safe to call from several
/// threads. Capabilities a backend lacks throw GatewayError(capability).
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string id() const = 0;
    virtual ChatResult chat(std::span<const ChatMessage> messages, const GenParams& params);
    /// Tokens whose texts concatenate to `text` under the backend tokenizer.
    virtual std::vector<TokenLogprob> score_logprobs(std::string_view text);
    virtual std::vector<double> embed(std::string_view text);
    virtual std::size_t embedding_dim() const { return 0; }
};

/// Backend assembled from callables; a missing callable is a missing capability.
class CallbackBackend : public Backend {
public:
    using ChatFn = std::function<ChatResult(std::span<const ChatMessage>, const GenParams&)>;
    using ScoreFn = std::function<std::vector<TokenLogprob>(std::string_view)>;
    using EmbedFn = std::function<std::vector<double>(std::string_view)>;

    CallbackBackend(std::string id, ChatFn chat, ScoreFn score = {}, EmbedFn embed = {}, std::size_t dim = 0)
        : id_(std::move(id)), chat_(std::move(chat)), score_(std::move(score)), embed_(std::move(embed)), dim_(dim) {}

    std::string id() const override { return id_; }
    ChatResult chat(std::span<const ChatMessage> messages, const GenParams& params) override;
    std::vector<TokenLogprob> score_logprobs(std::string_view text) override;
    std::vector<double> embed(std::string_view text) override;
    std::size_t embedding_dim() const override { return dim_; }

private:
    std::string id_;
    ChatFn chat_;
    ScoreFn score_;
    EmbedFn embed_;
    std::size_t dim_;
};

}  // namespace mhfa::gateway
