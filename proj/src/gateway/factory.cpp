#include "mhfa/gateway/factory.hpp"

#include <cstdlib>

#include "mhfa/gateway/http_backend.hpp"
#include "mhfa/gateway/mock_backend.hpp"

namespace mhfa::gateway {

namespace {

std::string env(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

long env_long(const char* name, long fallback) {
    const std::string v = env(name);
    if (v.empty()) return fallback;
    try {
        std::size_t used = 0;
        const long n = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ValidationError(name, std::string(name) + " must be an integer, got '" + v + "'");
    }
}

}  // namespace

std::shared_ptr<Backend> make_backend(const std::string& spec_in) {
    std::string spec = spec_in;
    if (spec.empty()) spec = env("MHFA_BACKEND");
    if (spec.empty()) spec = env("MHFA_BASE_URL");
    if (spec.empty()) {
        throw ValidationError("backend", "no backend configured; pass --backend or set MHFA_BASE_URL");
    }
    if (spec.rfind("mock:", 0) == 0) {
        const std::string path = spec.substr(5);
        return std::make_shared<MockBackend>(MockScript::load(path), "mock:" + std::filesystem::path(path).filename().string());
    }
    if (spec.rfind("replay:", 0) == 0) return ReplayBackend::load(spec.substr(7));
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        HttpConfig cfg;
        cfg.base_url = spec;
        cfg.model = env("MHFA_MODEL");
        cfg.api_key = env("MHFA_API_KEY");
        cfg.timeout = std::chrono::milliseconds(env_long("MHFA_TIMEOUT_MS", 60000));
        return std::make_shared<HttpBackend>(cfg);
    }
    throw ValidationError("backend", "unrecognized backend spec '" + spec + "' (expected mock:, replay: or http(s)://)");
}

GatewayOptions options_from_env() {
    GatewayOptions o;
    o.inflight_cap = static_cast<int>(env_long("MHFA_INFLIGHT", o.inflight_cap));
    return o;
}

}  // namespace mhfa::gateway
