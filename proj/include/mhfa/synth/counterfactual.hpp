#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "mhfa/cohort/types.hpp"

namespace mhfa::synth {

/// Reasons a person may report their state as better than it is.
enum class CfLabel { personality_traits, stigma, lack_of_awareness };

inline constexpr std::array<CfLabel, 3> kCfLabels = {CfLabel::personality_traits, CfLabel::stigma,
                                                     CfLabel::lack_of_awareness};

std::string_view cf_label_name(CfLabel label);
/// Throws ValidationError for anything outside the three categories.
CfLabel parse_cf_label(std::string_view name);

struct CounterfactualBundle {
    cohort::WeeklyBundle bundle;
    CfLabel label{};
    std::vector<std::string> clues;  ///< one per modified indicator value
};

/// Rewrites the mental record so it conceals the underlying state, leaving
/// behavior untouched. Per label:
///   stigma             mood, stress, phq4, pss4, panas_neg on the adverse side
///                      of neutral are reported at neutral;
///   personality_traits every adverse indicator is understated halfway to neutral;
///   lack_of_awareness  fatigue, sleep_quality_self, readiness, phq4, pss4 on the
///                      adverse side are reported at neutral.
/// Values already at or on the benign side of neutral are never changed, so
/// the result always stays inside each scale.
CounterfactualBundle inject_counterfactual(const cohort::WeeklyBundle& bundle, CfLabel label);

/// SHA-256 over the canonical JSON of the bundle's behavior days.
std::string behavior_hash(const cohort::WeeklyBundle& bundle);

}  // namespace mhfa::synth
