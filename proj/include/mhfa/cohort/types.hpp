#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mhfa/core/dates.hpp"

namespace mhfa::cohort {

// ---------------------------------------------------------------------------
// Behavior data D
// ---------------------------------------------------------------------------

enum class BehaviorField {
    steps,
    calories_in,
    calories_burned,
    exercise_minutes,
    sleep_minutes,
    sleep_efficiency,
    resting_hr,
    phone_usage_minutes,
    location_variance,
};

inline constexpr std::array<BehaviorField, 9> kBehaviorFields = {
    BehaviorField::steps,           BehaviorField::calories_in,         BehaviorField::calories_burned,
    BehaviorField::exercise_minutes, BehaviorField::sleep_minutes,      BehaviorField::sleep_efficiency,
    BehaviorField::resting_hr,      BehaviorField::phone_usage_minutes, BehaviorField::location_variance,
};

std::string_view field_name(BehaviorField f);
/// Display unit, empty for unitless fields.
std::string_view field_unit(BehaviorField f);
std::optional<BehaviorField> parse_behavior_field(std::string_view name);

/// One calendar day of objective behavior. Every measurement is optional; a
/// missing value is absent, never zero.
struct DailyBehavior {
    Date date{};
    std::optional<double> steps;
    std::optional<double> calories_in;
    std::optional<double> calories_burned;
    std::optional<double> exercise_minutes;
    std::optional<double> sleep_minutes;
    std::optional<double> sleep_efficiency;
    std::optional<double> resting_hr;
    std::optional<double> phone_usage_minutes;
    std::optional<double> location_variance;

    std::optional<double>& operator[](BehaviorField f);
    const std::optional<double>& operator[](BehaviorField f) const;

    bool operator==(const DailyBehavior&) const = default;
};

/// Empty string when valid, otherwise the offending field and reason.
std::string validate_behavior(const DailyBehavior& day);

// ---------------------------------------------------------------------------
// Mental record R
// ---------------------------------------------------------------------------

enum class IndicatorKind {
    fatigue,
    mood,
    stress,
    sleep_quality_self,
    readiness,
    phq4,
    pss4,
    panas_pos,
    panas_neg,
};

inline constexpr std::array<IndicatorKind, 9> kIndicatorKinds = {
    IndicatorKind::fatigue,   IndicatorKind::mood, IndicatorKind::stress,
    IndicatorKind::sleep_quality_self, IndicatorKind::readiness, IndicatorKind::phq4,
    IndicatorKind::pss4,      IndicatorKind::panas_pos, IndicatorKind::panas_neg,
};

/// Instrument scale. `higher_is_worse` orients the scale for counterfactual
/// shifts; `neutral` is the benign reference point on it.
struct IndicatorScale {
    double min;
    double max;
    double neutral;
    bool higher_is_worse;
};

std::string_view indicator_name(IndicatorKind k);
std::optional<IndicatorKind> parse_indicator(std::string_view name);
const IndicatorScale& indicator_scale(IndicatorKind k);

struct MentalIndicator {
    IndicatorKind kind{};
    double value = 0;

    double scale_min() const { return indicator_scale(kind).min; }
    double scale_max() const { return indicator_scale(kind).max; }
    double neutral() const { return indicator_scale(kind).neutral; }
    bool in_scale() const { return value >= scale_min() && value <= scale_max(); }

    bool operator==(const MentalIndicator&) const = default;
};

struct MentalRecordEntry {
    Date date{};
    std::vector<MentalIndicator> indicators;

    const MentalIndicator* find(IndicatorKind k) const;
    MentalIndicator* find(IndicatorKind k);
    /// Inserts or replaces the value for `k`, keeping catalog order.
    void set(IndicatorKind k, double value);

    bool operator==(const MentalRecordEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Participants and weekly bundles
// ---------------------------------------------------------------------------

struct UserPortrait {
    std::string participant_id;
    std::string age_band;
    std::string gender;
    std::vector<std::string> traits;

    bool operator==(const UserPortrait&) const = default;
};

enum class LabelSource { rule, expert_override, synthetic };

std::string_view label_source_name(LabelSource s);
std::optional<LabelSource> parse_label_source(std::string_view name);

/// One participant-week pairing of behavior D and mental record R.
struct WeeklyBundle {
    std::string participant_id;
    int week_index = 0;
    Date week_start{};
    std::vector<DailyBehavior> behavior;
    std::vector<MentalRecordEntry> records;
    std::optional<int> label;
    std::optional<LabelSource> label_source;

    bool empty() const { return behavior.empty() && records.empty(); }
    bool operator==(const WeeklyBundle&) const = default;
};

struct Participant {
    UserPortrait portrait;
    std::vector<DailyBehavior> days;
    std::vector<MentalRecordEntry> records;

    const std::string& id() const { return portrait.participant_id; }
    bool operator==(const Participant&) const = default;
};

struct RejectedRow {
    std::string path;
    std::size_t line = 0;
    std::string reason;
    std::string raw;
};

struct FileError {
    std::string path;
    std::string message;
};

struct Cohort {
    std::string dataset;
    std::vector<Participant> participants;
    std::vector<RejectedRow> rejects;
    std::vector<FileError> file_errors;

    const Participant* find(std::string_view id) const;
};

}  // namespace mhfa::cohort
