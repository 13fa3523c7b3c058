#include "mhfa/gateway/mock_backend.hpp"

#include <cctype>
#include <cmath>

#include <yaml-cpp/yaml.h>

#include "mhfa/core/files.hpp"
#include "mhfa/core/hashing.hpp"
#include "mhfa/gateway/tokenizer.hpp"

namespace mhfa::gateway {

namespace {

ErrorKind parse_error_kind(const std::string& name) {
    for (auto k : {ErrorKind::transport, ErrorKind::timeout, ErrorKind::http_status, ErrorKind::malformed_response,
                   ErrorKind::capability, ErrorKind::unmatched_request}) {
        if (error_kind_name(k) == name) return k;
    }
    throw ParseError("mock script: unknown error kind '" + name + "'");
}

MockEntry parse_entry(const YAML::Node& node, std::size_t index) {
    const std::string where = "mock script entry " + std::to_string(index);
    if (!node.IsMap()) throw ParseError(where + ": expected a map");
    MockEntry e;
    if (const auto m = node["match"]) {
        if (m.IsSequence()) {
            for (const auto& s : m) e.match.push_back(s.as<std::string>());
        } else {
            e.match.push_back(m.as<std::string>());
        }
    }
    int kinds = 0;
    if (const auto r = node["reply"]) {
        e.reply = r.as<std::string>();
        ++kinds;
    }
    if (const auto r = node["echo"]) {
        e.echo = r.as<bool>();
        if (e.echo) ++kinds;
    }
    if (const auto r = node["logprobs"]) {
        e.logprobs = r.as<std::vector<double>>();
        ++kinds;
    }
    if (const auto r = node["uniform_logprob"]) {
        e.uniform_logprob = r.as<double>();
        ++kinds;
    }
    if (const auto r = node["embedding"]) {
        e.embedding = r.as<std::vector<double>>();
        ++kinds;
    }
    if (const auto r = node["error"]) {
        e.error = parse_error_kind(r.as<std::string>());
        ++kinds;
    }
    if (kinds != 1) throw ParseError(where + ": exactly one of reply/echo/logprobs/uniform_logprob/embedding/error");
    auto check_lp = [&](double lp) {
        if (!(lp <= 0)) throw ParseError(where + ": logprobs must be <= 0");
    };
    if (e.logprobs) for (double lp : *e.logprobs) check_lp(lp);
    if (e.uniform_logprob) check_lp(*e.uniform_logprob);
    return e;
}

bool matches(const MockEntry& e, std::string_view text, const std::string& hash) {
    for (const auto& m : e.match) {
        if (m.rfind("sha256:", 0) == 0) {
            if (m.substr(7) != hash) return false;
        } else if (text.find(m) == std::string_view::npos) {
            return false;
        }
    }
    return true;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

MockScript MockScript::from_yaml(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ParseError(std::string("mock script: ") + e.what());
    }
    MockScript s;
    YAML::Node list;
    if (root.IsSequence()) {
        list = root;
    } else if (root.IsMap()) {
        if (root["embedding_dim"]) s.embedding_dim = root["embedding_dim"].as<std::size_t>();
        if (root["hash_embeddings"]) s.hash_embeddings = root["hash_embeddings"].as<bool>();
        if (root["default_logprob"]) s.default_logprob = root["default_logprob"].as<double>();
        list = root["entries"];
    } else if (!root.IsNull()) {
        throw ParseError("mock script: expected a list or a map");
    }
    try {
        if (list) {
            std::size_t i = 0;
            for (const auto& node : list) s.entries.push_back(parse_entry(node, i++));
        }
    } catch (const YAML::Exception& e) {
        throw ParseError(std::string("mock script: ") + e.what());
    }
    if (s.embedding_dim == 0) throw ParseError("mock script: embedding_dim must be >= 1");
    return s;
}

MockScript MockScript::load(const std::filesystem::path& path) { return from_yaml(read_file(path)); }

MockBackend::MockBackend(MockScript script, std::string id) : script_(std::move(script)), id_(std::move(id)) {}

ChatResult MockBackend::chat(std::span<const ChatMessage> messages, const GenParams&) {
    const std::string text = prompt_text(messages);
    const std::string hash = prompt_hash(messages);
    for (const auto& e : script_.entries) {
        const bool answers_chat = e.reply || e.echo || e.error;
        if (!answers_chat || !matches(e, text, hash)) continue;
        if (e.error) throw GatewayError(*e.error, "scripted failure", text, *e.error == ErrorKind::http_status ? 500 : 0);
        if (e.echo) {
            for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
                if (it->role == Role::user) return {it->content, "stop"};
            }
            return {"", "stop"};
        }
        return {*e.reply, "stop"};
    }
    throw GatewayError(ErrorKind::unmatched_request, "mock script has no reply for prompt " + hash, text);
}

std::vector<TokenLogprob> MockBackend::score_logprobs(std::string_view text) {
    if (text.empty()) return {};
    const auto tokens = reference_tokenize(text);
    const std::string hash = sha256_hex(text);
    auto uniform = [&](double lp) {
        std::vector<TokenLogprob> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back({t, lp});
        return out;
    };
    for (const auto& e : script_.entries) {
        const bool answers = e.logprobs || e.uniform_logprob || e.error;
        if (!answers || !matches(e, text, hash)) continue;
        if (e.error) throw GatewayError(*e.error, "scripted failure", std::string(text));
        if (e.uniform_logprob) return uniform(*e.uniform_logprob);
        if (e.logprobs->size() != tokens.size()) {
            throw GatewayError(ErrorKind::malformed_response,
                               "mock token table has " + std::to_string(e.logprobs->size()) + " entries but text has " +
                                   std::to_string(tokens.size()) + " tokens",
                               std::string(text));
        }
        std::vector<TokenLogprob> out;
        for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({tokens[i], (*e.logprobs)[i]});
        return out;
    }
    if (script_.default_logprob) return uniform(*script_.default_logprob);
    throw GatewayError(ErrorKind::unmatched_request, "mock script has no token table for text " + hash,
                       std::string(text));
}

std::vector<double> MockBackend::embed(std::string_view text) {
    const std::string hash = sha256_hex(text);
    for (const auto& e : script_.entries) {
        const bool answers = e.embedding || e.error;
        if (!answers || !matches(e, text, hash)) continue;
        if (e.error) throw GatewayError(*e.error, "scripted failure", std::string(text));
        if (e.embedding->size() != script_.embedding_dim) {
            throw GatewayError(ErrorKind::malformed_response, "scripted embedding has wrong dimension",
                               std::string(text));
        }
        return *e.embedding;
    }
    if (script_.hash_embeddings) return hash_embedding(text, script_.embedding_dim);
    throw GatewayError(ErrorKind::unmatched_request, "mock script has no embedding for text " + hash,
                       std::string(text));
}

std::vector<double> hash_embedding(std::string_view text, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    if (dim == 0) return v;
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || u >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    auto add = [&](std::string_view feature) {
        const std::uint64_t h = fnv1a(feature);
        v[h % dim] += (h >> 63) ? -1.0 : 1.0;
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
        add(words[i]);
        if (i + 1 < words.size()) add(words[i] + " " + words[i + 1]);
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

}  // namespace mhfa::gateway
