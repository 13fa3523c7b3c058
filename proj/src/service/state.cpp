#include "mhfa/service/state.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fcntl.h>
#include <unistd.h>

#include "mhfa/cohort/serialize.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"

namespace mhfa::service {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

EmaSubmission EmaSubmission::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("body", "EMA body must be a JSON object");
    EmaSubmission s;
    if (!j.contains("participant_id") || !j["participant_id"].is_string() ||
        j["participant_id"].get<std::string>().empty()) {
        throw ValidationError("participant_id", "participant_id must be a non-empty string");
    }
    s.participant_id = j["participant_id"].get<std::string>();
    if (!j.contains("date") || !j["date"].is_string()) throw ValidationError("date", "date must be YYYY-MM-DD");
    const auto d = parse_date(j["date"].get<std::string>());
    if (!d) throw ValidationError("date", "date must be YYYY-MM-DD");
    s.date = *d;
    if (!j.contains("indicators") || !j["indicators"].is_object() || j["indicators"].empty()) {
        throw ValidationError("indicators", "indicators must be a non-empty object of name to value");
    }
    // Catalog order so equal submissions serialize identically.
    for (const auto& [name, value] : j["indicators"].items()) {
        const auto kind = cohort::parse_indicator(name);
        if (!kind) throw ValidationError(name, "unknown indicator '" + name + "'");
        if (!value.is_number()) throw ValidationError(name, name + " must be a number");
        cohort::MentalIndicator ind{*kind, value.get<double>()};
        if (!ind.in_scale()) {
            throw ValidationError(name, name + " = " + value.dump() + " is outside [" +
                                            std::to_string(static_cast<int>(ind.scale_min())) + ", " +
                                            std::to_string(static_cast<int>(ind.scale_max())) + "]");
        }
        s.indicators.push_back(ind);
    }
    std::sort(s.indicators.begin(), s.indicators.end(),
              [](const auto& a, const auto& b) { return a.kind < b.kind; });
    return s;
}

ordered_json EmaSubmission::to_json() const {
    ordered_json inds = ordered_json::object();
    for (const auto& i : indicators) inds[std::string(cohort::indicator_name(i.kind))] = i.value;
    return {{"participant_id", participant_id}, {"date", format_date(date)}, {"indicators", inds}};
}

CohortSeed CohortSeed::load(const fs::path& path) {
    CohortSeed seed;
    const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
    const fs::path bundles = fs::is_directory(path) ? dir / "bundles.jsonl" : path;
    if (!fs::exists(bundles)) throw IoError(bundles.string(), "cohort seed not found");
    seed.bundles = cohort::read_bundles(bundles);
    if (const auto portraits = dir / "portraits.jsonl"; fs::exists(portraits)) {
        for (const auto& j : read_jsonl(portraits)) {
            auto p = cohort::portrait_from_json(j);
            seed.portraits[p.participant_id] = p;
        }
    }
    return seed;
}

const analysis::DialogueSession* ServiceState::session(const std::string& id) const {
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
}

std::string ServiceState::next_session_id() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s-%06llu", static_cast<unsigned long long>(session_count_ + 1));
    return buf;
}

namespace {

analysis::DialogueSession& require_session(std::map<std::string, analysis::DialogueSession>& sessions,
                                           const SessionEvent& e) {
    const auto it = sessions.find(e.session_id);
    if (it == sessions.end()) {
        throw ParseError("event " + std::to_string(e.event_id) + " refers to unknown session " + e.session_id);
    }
    return it->second;
}

}  // namespace

void ServiceState::apply(const SessionEvent& e) {
    if (e.event_id <= last_event_id_) {
        throw ParseError("event " + std::to_string(e.event_id) + " applied out of order");
    }
    const auto& p = e.payload;
    switch (e.kind) {
        case EventKind::session_opened: {
            analysis::DialogueSession s;
            s.session_id = e.session_id;
            s.participant_id = p.at("participant_id").get<std::string>();
            s.scenario = analysis::parse_scenario(p.at("scenario").get<std::string>());
            s.metadata["opened_at"] = e.timestamp;
            sessions_[s.session_id] = std::move(s);
            ++session_count_;
            break;
        }
        case EventKind::user_msg: {
            auto& s = require_session(sessions_, e);
            if (p.contains("resolved_scenario")) {
                s.metadata.emplace("resolved_scenario", p["resolved_scenario"].get<std::string>());
            }
            s.turns.push_back({gateway::Role::user, p.at("text").get<std::string>(), e.timestamp});
            break;
        }
        case EventKind::assistant_msg: {
            auto& s = require_session(sessions_, e);
            s.turns.push_back({gateway::Role::assistant, p.at("text").get<std::string>(), e.timestamp});
            break;
        }
        case EventKind::ema_submitted: {
            const auto sub = EmaSubmission::from_json(p);
            origins_.emplace(sub.participant_id, week_start(sub.date, std::chrono::Monday));
            auto& entries = ema_[sub.participant_id];
            auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& r) { return r.date == sub.date; });
            if (it == entries.end()) {
                it = entries.insert(std::upper_bound(entries.begin(), entries.end(), sub.date,
                                                     [](Date d, const auto& r) { return d < r.date; }),
                                    cohort::MentalRecordEntry{sub.date, {}});
            }
            for (const auto& ind : sub.indicators) it->set(ind.kind, ind.value);
            break;
        }
        case EventKind::report_generated: {
            const auto key = std::make_pair(p.at("participant_id").get<std::string>(), p.at("week").get<int>());
            reports_[key] = analysis::AnalysisReport::from_json(p.at("report"));
            break;
        }
    }
    last_event_id_ = e.event_id;
}

ordered_json ServiceState::to_json() const {
    ordered_json j;
    j["last_event_id"] = last_event_id_;
    j["session_count"] = session_count_;
    auto sessions = ordered_json::array();
    for (const auto& [_, s] : sessions_) sessions.push_back(s.to_json());
    j["sessions"] = sessions;
    auto ema = ordered_json::object();
    for (const auto& [pid, entries] : ema_) {
        auto arr = ordered_json::array();
        for (const auto& r : entries) arr.push_back(cohort::to_json(r));
        ema[pid] = arr;
    }
    j["ema"] = ema;
    auto origins = ordered_json::object();
    for (const auto& [pid, d] : origins_) origins[pid] = format_date(d);
    j["origins"] = origins;
    auto reports = ordered_json::array();
    for (const auto& [key, r] : reports_) {
        reports.push_back({{"participant_id", key.first}, {"week", key.second}, {"report", r.to_json()}});
    }
    j["reports"] = reports;
    return j;
}

ServiceState ServiceState::from_json(const nlohmann::json& j) {
    try {
        ServiceState st;
        st.last_event_id_ = j.at("last_event_id").get<std::uint64_t>();
        st.session_count_ = j.at("session_count").get<std::uint64_t>();
        for (const auto& s : j.at("sessions")) {
            auto session = analysis::DialogueSession::from_json(s);
            st.sessions_[session.session_id] = std::move(session);
        }
        for (const auto& [pid, arr] : j.at("ema").items()) {
            auto& entries = st.ema_[pid];
            for (const auto& r : arr) entries.push_back(cohort::record_from_json(r));
        }
        for (const auto& [pid, d] : j.at("origins").items()) {
            const auto date = parse_date(d.get<std::string>());
            if (!date) throw ParseError("snapshot: bad origin date for " + pid);
            st.origins_[pid] = *date;
        }
        for (const auto& r : j.at("reports")) {
            st.reports_[{r.at("participant_id").get<std::string>(), r.at("week").get<int>()}] =
                analysis::AnalysisReport::from_json(r.at("report"));
        }
        return st;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("snapshot: ") + e.what());
    }
}

std::optional<Date> week_origin(const CohortSeed& seed, const ServiceState& state, const std::string& pid) {
    std::optional<Date> origin;
    for (const auto& b : seed.bundles) {
        if (b.participant_id != pid) continue;
        const Date o = b.week_start - std::chrono::days{7 * b.week_index};
        if (!origin || o < *origin) origin = o;
    }
    if (origin) return origin;
    if (const auto it = state.origins().find(pid); it != state.origins().end()) return it->second;
    return std::nullopt;
}

int week_index_of(Date origin, Date date) {
    const auto diff = (date - origin).count();
    return static_cast<int>(diff >= 0 ? diff / 7 : -((-diff + 6) / 7));
}

std::optional<cohort::WeeklyBundle> current_bundle(const CohortSeed& seed, const ServiceState& state,
                                                   const std::string& pid, int week) {
    const auto origin = week_origin(seed, state, pid);
    if (!origin) return std::nullopt;
    cohort::WeeklyBundle bundle;
    bool found = false;
    for (const auto& b : seed.bundles) {
        if (b.participant_id == pid && b.week_index == week) {
            bundle = b;
            found = true;
            break;
        }
    }
    if (!found) {
        bundle.participant_id = pid;
        bundle.week_index = week;
        bundle.week_start = *origin + std::chrono::days{7 * week};
    }
    bool merged = false;
    if (const auto it = state.ema().find(pid); it != state.ema().end()) {
        for (const auto& entry : it->second) {
            if (week_index_of(*origin, entry.date) != week) continue;
            merged = true;
            auto rit = std::find_if(bundle.records.begin(), bundle.records.end(),
                                    [&](const auto& r) { return r.date == entry.date; });
            if (rit == bundle.records.end()) {
                rit = bundle.records.insert(std::upper_bound(bundle.records.begin(), bundle.records.end(), entry.date,
                                                             [](Date d, const auto& r) { return d < r.date; }),
                                            cohort::MentalRecordEntry{entry.date, {}});
            }
            for (const auto& ind : entry.indicators) rit->set(ind.kind, ind.value);
        }
    }
    if (!found && !merged) return std::nullopt;
    return bundle;
}

ServiceState load_snapshot(const fs::path& path) {
    if (!fs::exists(path)) return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": corrupt snapshot: " + e.what());
    }
    return ServiceState::from_json(j);
}

void write_snapshot(const ServiceState& state, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    const std::string body = state.to_json().dump();
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw IoError(tmp.string(), std::string("cannot write snapshot: ") + std::strerror(errno));
    std::size_t off = 0;
    while (off < body.size()) {
        const auto n = ::write(fd, body.data() + off, body.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            throw IoError(tmp.string(), std::string("cannot write snapshot: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    fs::rename(tmp, path);
    if (const int dfd = ::open(path.parent_path().empty() ? "." : path.parent_path().c_str(), O_RDONLY); dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

ServiceState recover(const fs::path& snapshot_path, const EventLog& log) {
    ServiceState state = load_snapshot(snapshot_path);
    for (const auto& e : log.recovered()) {
        if (e.event_id > state.last_event_id()) state.apply(e);
    }
    return state;
}

}  // namespace mhfa::service
