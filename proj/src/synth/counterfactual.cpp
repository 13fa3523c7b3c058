#include "mhfa/synth/counterfactual.hpp"

#include <algorithm>

#include "mhfa/cohort/serialize.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/hashing.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::synth {

using namespace mhfa::cohort;

std::string_view cf_label_name(CfLabel label) {
    switch (label) {
        case CfLabel::personality_traits: return "personality_traits";
        case CfLabel::stigma: return "stigma";
        case CfLabel::lack_of_awareness: return "lack_of_awareness";
    }
    return "stigma";
}

CfLabel parse_cf_label(std::string_view name) {
    for (CfLabel l : kCfLabels) {
        if (cf_label_name(l) == name) return l;
    }
    throw ValidationError("cf_label", "unknown counterfactual label: " + std::string(name));
}

namespace {

bool affects(CfLabel label, IndicatorKind k) {
    switch (label) {
        case CfLabel::stigma:
            return k == IndicatorKind::mood || k == IndicatorKind::stress || k == IndicatorKind::phq4 ||
                   k == IndicatorKind::pss4 || k == IndicatorKind::panas_neg;
        case CfLabel::personality_traits:
            return true;
        case CfLabel::lack_of_awareness:
            return k == IndicatorKind::fatigue || k == IndicatorKind::sleep_quality_self ||
                   k == IndicatorKind::readiness || k == IndicatorKind::phq4 || k == IndicatorKind::pss4;
    }
    return false;
}

std::string_view reason(CfLabel label) {
    switch (label) {
        case CfLabel::stigma: return "concealment out of stigma about mental health";
        case CfLabel::personality_traits: return "understatement from a reserved personality";
        case CfLabel::lack_of_awareness: return "symptom not recognized (lack of awareness)";
    }
    return "";
}

}  // namespace

CounterfactualBundle inject_counterfactual(const WeeklyBundle& bundle, CfLabel label) {
    CounterfactualBundle out{bundle, label, {}};
    for (auto& entry : out.bundle.records) {
        for (auto& ind : entry.indicators) {
            if (!affects(label, ind.kind)) continue;
            const auto& scale = indicator_scale(ind.kind);
            const bool adverse = scale.higher_is_worse ? ind.value > scale.neutral : ind.value < scale.neutral;
            if (!adverse) continue;
            const double before = ind.value;
            const double after =
                label == CfLabel::personality_traits ? (before + scale.neutral) / 2.0 : scale.neutral;
            ind.value = std::clamp(after, scale.min, scale.max);
            out.clues.push_back(format_date(entry.date) + " " + std::string(indicator_name(ind.kind)) +
                                ": reported " + format_number(ind.value) + " instead of " +
                                format_number(before) + ", " + std::string(reason(label)));
        }
    }
    return out;
}

std::string behavior_hash(const WeeklyBundle& bundle) {
    nlohmann::ordered_json days = nlohmann::ordered_json::array();
    for (const auto& d : bundle.behavior) days.push_back(to_json(d));
    return sha256_hex(days.dump());
}

}  // namespace mhfa::synth
