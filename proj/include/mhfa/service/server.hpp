#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "mhfa/analysis/dialogue.hpp"
#include "mhfa/gateway/gateway.hpp"
#include "mhfa/service/events.hpp"
#include "mhfa/service/state.hpp"

namespace httplib {
class Server;
}

namespace mhfa::service {

struct ServiceConfig {
    std::filesystem::path store_dir = "store";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string bearer_token;  ///< empty disables auth
    std::string webhook_url;   ///< empty disables risk escalation
    std::string backend;       ///< backend spec, see gateway::make_backend
    std::optional<std::filesystem::path> cohort_seed;
    std::size_t snapshot_every = 50;
    std::size_t context_turns = 12;
    int utc_offset_minutes = 0;
    std::string cors_origin = "*";

    /// YAML keys match the field names; unknown keys are rejected.
    static ServiceConfig from_yaml(const std::filesystem::path& path);
};

/// Handler result, independent of the HTTP layer.
struct Response {
    int status = 200;
    nlohmann::ordered_json body;
};

/// Payload POSTed to the webhook when an analysis reports outcome 1.
nlohmann::ordered_json webhook_payload(const std::string& participant_id, int week,
                                       const analysis::AnalysisReport& report, const std::string& timestamp);

/// HTTP endpoints over an event-sourced store. Every
/// mutation is appended and synced to the event log before its handler
/// returns. Messages to one session are serialized; a second concurrent post
/// to the same session gets 409 instead of waiting.
class GuardService {
public:
    GuardService(ServiceConfig config, std::shared_ptr<gateway::Backend> backend,
                 analysis::Clock clock = [] { return std::chrono::system_clock::now(); });
    ~GuardService();

    GuardService(const GuardService&) = delete;
    GuardService& operator=(const GuardService&) = delete;

    Response open_session(const nlohmann::json& body);
    Response get_session(const std::string& id) const;
    Response post_message(const std::string& id, const nlohmann::json& body);
    Response submit_ema(const nlohmann::json& body);
    Response analyze(const std::string& participant_id, const std::string& week);
    Response get_report(const std::string& participant_id, const std::string& week) const;
    Response healthz() const;

    /// Bearer check against the configured token.
    bool authorized(const std::string& authorization_header) const;

    /// Binds and serves until stop(). Throws IoError when the port cannot be bound.
    void listen();
    /// Binds to `port` (0 picks a free one) and returns the bound port; serve with listen_after_bind().
    int bind(int port);
    void listen_after_bind();
    void stop();

    ServiceState state() const;
    const ServiceConfig& config() const { return config_; }
    /// Blocks until queued webhook deliveries have been attempted.
    void drain_webhooks();

private:
    SessionEvent commit(EventKind kind, const std::string& session_id, nlohmann::json payload,
                        std::string timestamp = {});
    /// Appends and applies the events, snapshotting when due. Caller holds commit_mu_.
    std::vector<SessionEvent> append_locked(std::vector<SessionEvent> events);
    std::mutex& session_mutex(const std::string& id);
    std::optional<int> latest_week(const std::string& participant_id) const;
    cohort::UserPortrait portrait_for(const std::string& participant_id) const;
    void enqueue_webhook(nlohmann::ordered_json payload);
    void webhook_loop();
    void install_routes();

    ServiceConfig config_;
    analysis::Clock clock_;
    CohortSeed seed_;
    std::unique_ptr<EventLog> log_;
    std::unique_ptr<gateway::Gateway> gateway_;

    mutable std::shared_mutex state_mu_;
    ServiceState state_;
    std::mutex commit_mu_;
    std::size_t since_snapshot_ = 0;

    std::mutex sessions_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> session_locks_;

    std::mutex webhook_mu_;
    std::condition_variable webhook_cv_;
    std::deque<nlohmann::ordered_json> webhook_queue_;
    std::size_t webhook_busy_ = 0;
    bool webhook_stop_ = false;
    std::thread webhook_thread_;

    std::unique_ptr<httplib::Server> server_;
};

/// Runs the service until SIGINT or SIGTERM, then flushes and snapshots.
int serve(const ServiceConfig& config);

}  // namespace mhfa::service
