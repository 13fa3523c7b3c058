#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/cohort/types.hpp"
#include "mhfa/core/errors.hpp"

namespace mhfa::cohort {

/// Declarative weekly risk rule. G=1 iff any clause fires:
///   mean mood <= mood_mean_max, or
///   max phq4 >= phq4_min, or
///   max pss4 >= pss4_min, or
///   mean stress >= stress_mean_min and mean sleep_minutes < sleep_mean_below.
/// A clause whose inputs are absent for the week does not fire.
struct LabelRule {
    double mood_mean_max = 2.0;
    double phq4_min = 6.0;
    double pss4_min = 9.0;
    double stress_mean_min = 4.0;
    double sleep_mean_below = 360.0;

    bool positive(const WeeklyBundle& bundle) const;

    static LabelRule from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct LabelOverride {
    std::string participant_id;
    int week_index = 0;
    int label = 0;
};

/// Reads `participant_id,week_index,label`.
std::vector<LabelOverride> read_overrides(const std::filesystem::path& path);

class UnknownBundleError : public Error {
public:
    explicit UnknownBundleError(std::vector<std::string> keys);
    const std::vector<std::string>& keys() const noexcept { return keys_; }

private:
    std::vector<std::string> keys_;
};

/// Labels every bundle by `rule`, then applies `overrides`. An override naming
/// a bundle that does not exist throws UnknownBundleError listing every such key.
std::vector<WeeklyBundle> assign_labels(std::vector<WeeklyBundle> bundles, const LabelRule& rule,
                                        const std::vector<LabelOverride>& overrides = {});

}  // namespace mhfa::cohort
