#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/cohort/types.hpp"

namespace mhfa::cohort {

/// Binds CSV headers of one dataset layout to canonical fields. Each
/// participant lives in its own folder under the cohort root holding
/// `behavior_file`, `record_file` and an optional `portrait_file`.
struct ColumnMapping {
    std::string dataset;
    std::string behavior_file = "behavior.csv";
    std::string record_file;
    std::string portrait_file = "portrait.json";
    std::string date_column = "date";
    std::vector<std::pair<std::string, BehaviorField>> behavior_columns;
    std::vector<std::pair<std::string, IndicatorKind>> record_columns;

    static ColumnMapping pmdata();
    static ColumnMapping globem();
    /// Starts from the built-in layout named by "dataset" and applies overrides.
    static ColumnMapping from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Parses every participant folder under `root`. A missing root throws; bad rows
/// and bad files are reported in the returned cohort.
Cohort parse_cohort(const std::filesystem::path& root, const ColumnMapping& mapping);

Cohort parse_pmdata(const std::filesystem::path& root);
Cohort parse_globem(const std::filesystem::path& root);

/// Keeps round(fraction * n) participants chosen by a seeded shuffle of the
/// sorted ids. The result is sorted by id and independent of input order.
Cohort subsample(const Cohort& cohort, double fraction, std::uint64_t seed);

/// Writes the canonical normal form of `cohort` in the mapping's layout.
void write_cohort(const Cohort& cohort, const std::filesystem::path& root, const ColumnMapping& mapping);

}  // namespace mhfa::cohort
