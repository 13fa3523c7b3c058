#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "mhfa/cohort/types.hpp"

namespace mhfa::cohort {

/// Groups each participant's days and records into weeks starting on `anchor`.
/// Week 0 is the anchor-aligned week holding the participant's earliest date.
/// Partial weeks are kept; weeks with neither behavior nor records are omitted.
std::vector<WeeklyBundle> aggregate_weekly(const Cohort& cohort,
                                           std::chrono::weekday anchor = std::chrono::Monday);

/// Weekly roll-up of one field. Statistics are over present values only;
/// `coverage` counts the days that had a value.
struct FieldSummary {
    std::string field;
    std::size_t coverage = 0;
    std::size_t days = 0;
    std::optional<double> mean;
    std::optional<double> total;
    std::optional<double> min;
    std::optional<double> max;
};

FieldSummary summarize_field(const WeeklyBundle& bundle, BehaviorField f);
FieldSummary summarize_indicator(const WeeklyBundle& bundle, IndicatorKind k);

/// Most recent value of an indicator within the bundle, if any.
std::optional<double> latest_indicator(const WeeklyBundle& bundle, IndicatorKind k);

}  // namespace mhfa::cohort
