#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/analysis/analysis.hpp"
#include "mhfa/analysis/dialogue.hpp"
#include "mhfa/cohort/types.hpp"
#include "mhfa/service/events.hpp"

namespace mhfa::service {

struct EmaSubmission {
    std::string participant_id;
    Date date{};
    std::vector<cohort::MentalIndicator> indicators;

    /// Throws ValidationError naming the offending field.
    static EmaSubmission from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
};

/// Static per-participant data the service starts from: portraits and weekly
/// behavior. EMA records submitted through the service are layered on top.
struct CohortSeed {
    std::vector<cohort::WeeklyBundle> bundles;
    std::map<std::string, cohort::UserPortrait> portraits;

    static CohortSeed load(const std::filesystem::path& bundles_jsonl);
};

/// Everything the service knows, rebuilt purely by folding events in order.
class ServiceState {
public:
    /// Folds one event. Events must arrive in id order.
    void apply(const SessionEvent& event);

    const std::map<std::string, analysis::DialogueSession>& sessions() const { return sessions_; }
    const analysis::DialogueSession* session(const std::string& id) const;
    std::string next_session_id() const;

    /// EMA entries per participant, one per date, indicators merged per kind.
    const std::map<std::string, std::vector<cohort::MentalRecordEntry>>& ema() const { return ema_; }
    const std::map<std::pair<std::string, int>, analysis::AnalysisReport>& reports() const { return reports_; }
    /// Week-0 start per participant for EMA-only participants (first submission).
    const std::map<std::string, Date>& origins() const { return origins_; }
    std::uint64_t last_event_id() const { return last_event_id_; }

    nlohmann::ordered_json to_json() const;
    static ServiceState from_json(const nlohmann::json& j);

    bool operator==(const ServiceState& other) const { return to_json() == other.to_json(); }

private:
    std::map<std::string, analysis::DialogueSession> sessions_;
    std::map<std::string, std::vector<cohort::MentalRecordEntry>> ema_;
    std::map<std::pair<std::string, int>, analysis::AnalysisReport> reports_;
    std::map<std::string, Date> origins_;
    std::uint64_t session_count_ = 0;
    std::uint64_t last_event_id_ = 0;
};

/// Monday-anchored week-0 start for a participant: the seed's week 0 if the
/// participant is seeded, otherwise the week of their first EMA submission.
std::optional<Date> week_origin(const CohortSeed& seed, const ServiceState& state, const std::string& participant_id);

/// Week index of `date` relative to `origin` (negative before it).
int week_index_of(Date origin, Date date);

/// Current bundle for (participant, week): seeded behavior and records with
/// EMA entries of that week merged in (EMA wins per indicator). Nullopt when
/// nothing is known for that week.
std::optional<cohort::WeeklyBundle> current_bundle(const CohortSeed& seed, const ServiceState& state,
                                                   const std::string& participant_id, int week);

/// Latest snapshot, or an empty state when there is none. Snapshots are
/// written to a temporary file that replaces the old one after a sync.
ServiceState load_snapshot(const std::filesystem::path& path);
void write_snapshot(const ServiceState& state, const std::filesystem::path& path);

/// Snapshot (if any) plus every later event from the log.
ServiceState recover(const std::filesystem::path& snapshot_path, const EventLog& log);

}  // namespace mhfa::service
