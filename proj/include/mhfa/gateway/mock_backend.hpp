#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mhfa/gateway/backend.hpp"

namespace mhfa::gateway {

/// One scripted rule. `match` holds substrings that must all occur in the
/// request text; an entry of the form "sha256:<hex>" instead compares against
/// the prompt hash (chat) or the text hash (scoring, embedding). An empty
/// match list matches everything. Exactly one response field is set.
struct MockEntry {
    std::vector<std::string> match;
    std::optional<std::string> reply;
    bool echo = false;  ///< reply with the last user message verbatim
    std::optional<std::vector<double>> logprobs;
    std::optional<double> uniform_logprob;
    std::optional<std::vector<double>> embedding;
    std::optional<ErrorKind> error;  ///< simulate a failure for every matching request
};

/// Script loaded from YAML, either a bare list of entries or a map:
///
///   embedding_dim: 384
///   hash_embeddings: true
///   entries:
///     - match: "Phase 5"
///       reply: "... Outcome: 1"
///     - match: ["a b c"]
///       logprobs: [-1, -2, -3]
///
/// First matching entry that can answer the request kind wins; a request
/// nothing answers fails loudly with ErrorKind::unmatched_request.
struct MockScript {
    std::vector<MockEntry> entries;
    std::size_t embedding_dim = 384;
    bool hash_embeddings = false;
    std::optional<double> default_logprob;

    static MockScript from_yaml(const std::string& yaml_text);
    static MockScript load(const std::filesystem::path& path);
};

/// Deterministic backend: responses are a pure function of (script, request).
class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script, std::string id = "mock");

    std::string id() const override { return id_; }
    ChatResult chat(std::span<const ChatMessage> messages, const GenParams& params) override;
    std::vector<TokenLogprob> score_logprobs(std::string_view text) override;
    std::vector<double> embed(std::string_view text) override;
    std::size_t embedding_dim() const override { return script_.embedding_dim; }

    const MockScript& script() const { return script_; }

private:
    MockScript script_;
    std::string id_;
};

/// Signed feature hashing of lowercase word unigrams and bigrams, L2-normalized.
/// Empty or wordless text maps to the zero vector.
std::vector<double> hash_embedding(std::string_view text, std::size_t dim);

}  // namespace mhfa::gateway
