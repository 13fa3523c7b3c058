#include "mhfa/service/events.hpp"

#include <cerrno>
#include <cstring>
#include <unistd.h>

#include "mhfa/core/dates.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"

namespace mhfa::service {

namespace fs = std::filesystem;

std::string_view event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::session_opened: return "session_opened";
        case EventKind::user_msg: return "user_msg";
        case EventKind::assistant_msg: return "assistant_msg";
        case EventKind::ema_submitted: return "ema_submitted";
        case EventKind::report_generated: return "report_generated";
    }
    return "session_opened";
}

EventKind parse_event_kind(std::string_view name) {
    for (auto k : {EventKind::session_opened, EventKind::user_msg, EventKind::assistant_msg, EventKind::ema_submitted,
                   EventKind::report_generated}) {
        if (event_kind_name(k) == name) return k;
    }
    throw ParseError("unknown event kind '" + std::string(name) + "'");
}

nlohmann::ordered_json SessionEvent::to_json() const {
    nlohmann::ordered_json j;
    j["event_id"] = event_id;
    j["session_id"] = session_id;
    j["kind"] = event_kind_name(kind);
    j["payload"] = payload;
    j["timestamp"] = timestamp;
    return j;
}

SessionEvent SessionEvent::from_json(const nlohmann::json& j) {
    try {
        SessionEvent e;
        e.event_id = j.at("event_id").get<std::uint64_t>();
        e.session_id = j.at("session_id").get<std::string>();
        e.kind = parse_event_kind(j.at("kind").get<std::string>());
        e.payload = j.at("payload");
        e.timestamp = j.at("timestamp").get<std::string>();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("event: ") + ex.what());
    }
}

EventLog::EventLog(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    std::uintmax_t keep = 0;
    if (fs::exists(path_)) {
        const std::string content = read_file(path_);
        std::size_t pos = 0;
        std::size_t lineno = 0;
        while (pos < content.size()) {
            const auto nl = content.find('\n', pos);
            ++lineno;
            if (nl == std::string::npos) {
                truncated_tail_ = true;  // torn write: no terminating newline
                break;
            }
            const std::string line = content.substr(pos, nl - pos);
            if (!line.empty()) {
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(line);
                } catch (const nlohmann::json::parse_error& e) {
                    throw ParseError(path_.string() + ":" + std::to_string(lineno) + ": corrupt event: " + e.what());
                }
                auto ev = SessionEvent::from_json(j);
                if (ev.event_id <= last_id_) {
                    throw ParseError(path_.string() + ":" + std::to_string(lineno) + ": event ids must increase");
                }
                last_id_ = ev.event_id;
                recovered_.push_back(std::move(ev));
            }
            pos = nl + 1;
            keep = pos;
        }
        if (truncated_tail_) fs::resize_file(path_, keep);
    }
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw IoError(path_.string(), std::string("cannot open event log: ") + std::strerror(errno));
}

EventLog::~EventLog() {
    if (file_) {
        std::fflush(file_);
        ::fsync(fileno(file_));
        std::fclose(file_);
    }
}

SessionEvent EventLog::append(SessionEvent event) {
    std::vector<SessionEvent> one;
    one.push_back(std::move(event));
    return append(std::move(one)).front();
}

std::vector<SessionEvent> EventLog::append(std::vector<SessionEvent> events) {
    std::lock_guard lk(mu_);
    std::string block;
    std::uint64_t id = last_id_;
    for (auto& e : events) {
        e.event_id = ++id;
        if (e.timestamp.empty()) e.timestamp = format_rfc3339(std::chrono::system_clock::now());
        block += e.to_json().dump();
        block += '\n';
    }
    if (std::fwrite(block.data(), 1, block.size(), file_) != block.size() || std::fflush(file_) != 0 ||
        ::fsync(fileno(file_)) != 0) {
        throw IoError(path_.string(), std::string("event log write failed: ") + std::strerror(errno));
    }
    last_id_ = id;
    return events;
}

std::uint64_t EventLog::last_event_id() const {
    std::lock_guard lk(mu_);
    return last_id_;
}

}  // namespace mhfa::service
