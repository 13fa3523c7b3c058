#pragma once

#include <memory>
#include <string>

#include "mhfa/gateway/gateway.hpp"

namespace mhfa::gateway {

/// Builds a backend from a spec string:
///   mock:<script.yaml>   scripted MockBackend
///   replay:<log.jsonl>   ReplayBackend over a recorded exchange log
///   http(s)://...        HttpBackend (model/key/timeout from MHFA_MODEL,
///                        MHFA_API_KEY, MHFA_TIMEOUT_MS)
/// An empty spec falls back to MHFA_BACKEND, then MHFA_BASE_URL.
std::shared_ptr<Backend> make_backend(const std::string& spec);

/// Gateway options with the in-flight cap taken from MHFA_INFLIGHT when set.
GatewayOptions options_from_env();

}  // namespace mhfa::gateway
