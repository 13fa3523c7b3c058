#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/cohort/types.hpp"

namespace mhfa::cohort {

// Canonical JSON forms. Key order is fixed and absent measurements are
// omitted, so equal values always serialize to equal bytes.

nlohmann::ordered_json to_json(const DailyBehavior& day);
nlohmann::ordered_json to_json(const MentalRecordEntry& entry);
nlohmann::ordered_json to_json(const UserPortrait& portrait);
nlohmann::ordered_json to_json(const WeeklyBundle& bundle);

DailyBehavior behavior_from_json(const nlohmann::json& j);
MentalRecordEntry record_from_json(const nlohmann::json& j);
UserPortrait portrait_from_json(const nlohmann::json& j);
/// Validates dates and indicator scales; a label needs its label_source.
WeeklyBundle bundle_from_json(const nlohmann::json& j);

/// One bundle per line, trailing newline.
std::string to_jsonl(const std::vector<WeeklyBundle>& bundles);
std::vector<WeeklyBundle> read_bundles(const std::filesystem::path& path);

}  // namespace mhfa::cohort
