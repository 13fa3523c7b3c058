#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mhfa::service {

enum class EventKind { session_opened, user_msg, assistant_msg, ema_submitted, report_generated };

std::string_view event_kind_name(EventKind k);
EventKind parse_event_kind(std::string_view name);

struct SessionEvent {
    std::uint64_t event_id = 0;
    std::string session_id;  ///< empty for participant-level events
    EventKind kind = EventKind::session_opened;
    nlohmann::json payload = nlohmann::json::object();
    std::string timestamp;

    nlohmann::ordered_json to_json() const;
    static SessionEvent from_json(const nlohmann::json& j);
};

/// Append-only JSONL event log. Every append is flushed and fsync'd before it
/// returns. Opening an existing log reads all complete lines; a torn final
/// line left by a crash is cut off so later appends start on a clean line.
class EventLog {
public:
    explicit EventLog(std::filesystem::path path);
    ~EventLog();

    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    /// Events recovered when the log was opened.
    const std::vector<SessionEvent>& recovered() const { return recovered_; }
    bool truncated_tail() const { return truncated_tail_; }

    /// Assigns the next event id and writes durably. Returns the stored event.
    SessionEvent append(SessionEvent event);
    /// Appends several events with one write and one sync.
    std::vector<SessionEvent> append(std::vector<SessionEvent> events);
    std::uint64_t last_event_id() const;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
    std::vector<SessionEvent> recovered_;
    bool truncated_tail_ = false;
    mutable std::mutex mu_;
    std::uint64_t last_id_ = 0;
};

}  // namespace mhfa::service
