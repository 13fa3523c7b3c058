#include "mhfa/cohort/types.hpp"

#include <algorithm>

namespace mhfa::cohort {

namespace {

struct FieldInfo {
    BehaviorField field;
    std::string_view name;
    std::string_view unit;
    std::optional<double> DailyBehavior::*member;
};

constexpr std::array<FieldInfo, 9> kFieldInfo = {{
    {BehaviorField::steps, "steps", "steps", &DailyBehavior::steps},
    {BehaviorField::calories_in, "calories_in", "kcal", &DailyBehavior::calories_in},
    {BehaviorField::calories_burned, "calories_burned", "kcal", &DailyBehavior::calories_burned},
    {BehaviorField::exercise_minutes, "exercise_minutes", "min", &DailyBehavior::exercise_minutes},
    {BehaviorField::sleep_minutes, "sleep_minutes", "min", &DailyBehavior::sleep_minutes},
    {BehaviorField::sleep_efficiency, "sleep_efficiency", "", &DailyBehavior::sleep_efficiency},
    {BehaviorField::resting_hr, "resting_hr", "bpm", &DailyBehavior::resting_hr},
    {BehaviorField::phone_usage_minutes, "phone_usage_minutes", "min", &DailyBehavior::phone_usage_minutes},
    {BehaviorField::location_variance, "location_variance", "", &DailyBehavior::location_variance},
}};

struct IndicatorInfo {
    IndicatorKind kind;
    std::string_view name;
    IndicatorScale scale;
};

// Daily wellness items use 1-5. PHQ-4 is 0-12 and PSS-4 is 0-16. PANAS uses the
// 5-item short form, 5-25 per affect.
constexpr std::array<IndicatorInfo, 9> kIndicatorInfo = {{
    {IndicatorKind::fatigue, "fatigue", {1, 5, 3, true}},
    {IndicatorKind::mood, "mood", {1, 5, 3, false}},
    {IndicatorKind::stress, "stress", {1, 5, 3, true}},
    {IndicatorKind::sleep_quality_self, "sleep_quality_self", {1, 5, 3, false}},
    {IndicatorKind::readiness, "readiness", {1, 5, 3, false}},
    {IndicatorKind::phq4, "phq4", {0, 12, 2, true}},
    {IndicatorKind::pss4, "pss4", {0, 16, 4, true}},
    {IndicatorKind::panas_pos, "panas_pos", {5, 25, 15, false}},
    {IndicatorKind::panas_neg, "panas_neg", {5, 25, 10, true}},
}};

}  // namespace

std::string_view field_name(BehaviorField f) { return kFieldInfo[static_cast<std::size_t>(f)].name; }
std::string_view field_unit(BehaviorField f) { return kFieldInfo[static_cast<std::size_t>(f)].unit; }

std::optional<BehaviorField> parse_behavior_field(std::string_view name) {
    for (const auto& info : kFieldInfo) {
        if (info.name == name) return info.field;
    }
    return std::nullopt;
}

std::optional<double>& DailyBehavior::operator[](BehaviorField f) {
    return this->*kFieldInfo[static_cast<std::size_t>(f)].member;
}

const std::optional<double>& DailyBehavior::operator[](BehaviorField f) const {
    return this->*kFieldInfo[static_cast<std::size_t>(f)].member;
}

std::string validate_behavior(const DailyBehavior& day) {
    for (BehaviorField f : kBehaviorFields) {
        const auto& v = day[f];
        if (!v) continue;
        if (!(*v >= 0)) return std::string(field_name(f)) + " must be >= 0";
    }
    if (day.sleep_efficiency && *day.sleep_efficiency > 1.0) return "sleep_efficiency must be in [0,1]";
    return {};
}

std::string_view indicator_name(IndicatorKind k) { return kIndicatorInfo[static_cast<std::size_t>(k)].name; }

std::optional<IndicatorKind> parse_indicator(std::string_view name) {
    for (const auto& info : kIndicatorInfo) {
        if (info.name == name) return info.kind;
    }
    return std::nullopt;
}

const IndicatorScale& indicator_scale(IndicatorKind k) {
    return kIndicatorInfo[static_cast<std::size_t>(k)].scale;
}

const MentalIndicator* MentalRecordEntry::find(IndicatorKind k) const {
    for (const auto& ind : indicators) {
        if (ind.kind == k) return &ind;
    }
    return nullptr;
}

MentalIndicator* MentalRecordEntry::find(IndicatorKind k) {
    for (auto& ind : indicators) {
        if (ind.kind == k) return &ind;
    }
    return nullptr;
}

void MentalRecordEntry::set(IndicatorKind k, double value) {
    if (auto* existing = find(k)) {
        existing->value = value;
        return;
    }
    indicators.push_back({k, value});
    std::sort(indicators.begin(), indicators.end(),
              [](const MentalIndicator& a, const MentalIndicator& b) { return a.kind < b.kind; });
}

std::string_view label_source_name(LabelSource s) {
    switch (s) {
        case LabelSource::rule: return "rule";
        case LabelSource::expert_override: return "expert_override";
        case LabelSource::synthetic: return "synthetic";
    }
    return "rule";
}

std::optional<LabelSource> parse_label_source(std::string_view name) {
    if (name == "rule") return LabelSource::rule;
    if (name == "expert_override") return LabelSource::expert_override;
    if (name == "synthetic") return LabelSource::synthetic;
    return std::nullopt;
}

const Participant* Cohort::find(std::string_view id) const {
    for (const auto& p : participants) {
        if (p.id() == id) return &p;
    }
    return nullptr;
}

}  // namespace mhfa::cohort
