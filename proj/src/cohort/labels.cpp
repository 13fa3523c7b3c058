#include "mhfa/cohort/labels.hpp"

#include <fstream>
#include <map>

#include "mhfa/cohort/weekly.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::cohort {

bool LabelRule::positive(const WeeklyBundle& b) const {
    const auto mood = summarize_indicator(b, IndicatorKind::mood);
    if (mood.mean && *mood.mean <= mood_mean_max) return true;
    const auto phq4 = summarize_indicator(b, IndicatorKind::phq4);
    if (phq4.max && *phq4.max >= phq4_min) return true;
    const auto pss4 = summarize_indicator(b, IndicatorKind::pss4);
    if (pss4.max && *pss4.max >= pss4_min) return true;
    const auto stress = summarize_indicator(b, IndicatorKind::stress);
    const auto sleep = summarize_field(b, BehaviorField::sleep_minutes);
    return stress.mean && sleep.mean && *stress.mean >= stress_mean_min && *sleep.mean < sleep_mean_below;
}

LabelRule LabelRule::from_json(const nlohmann::json& j) {
    LabelRule r;
    r.mood_mean_max = j.value("mood_mean_max", r.mood_mean_max);
    r.phq4_min = j.value("phq4_min", r.phq4_min);
    r.pss4_min = j.value("pss4_min", r.pss4_min);
    r.stress_mean_min = j.value("stress_mean_min", r.stress_mean_min);
    r.sleep_mean_below = j.value("sleep_mean_below", r.sleep_mean_below);
    return r;
}

nlohmann::json LabelRule::to_json() const {
    return {{"mood_mean_max", mood_mean_max},
            {"phq4_min", phq4_min},
            {"pss4_min", pss4_min},
            {"stress_mean_min", stress_mean_min},
            {"sleep_mean_below", sleep_mean_below}};
}

std::vector<LabelOverride> read_overrides(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open override file");
    std::vector<LabelOverride> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = parse_csv_line(line);
        if (lineno == 1 && !cells.empty() && trim(cells[0]) == "participant_id") continue;
        if (cells.size() != 3) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 3 cells");
        }
        LabelOverride o;
        o.participant_id = trim(cells[0]);
        try {
            o.week_index = std::stoi(trim(cells[1]));
            o.label = std::stoi(trim(cells[2]));
        } catch (const std::exception&) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad integer");
        }
        if (o.label != 0 && o.label != 1) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
        }
        out.push_back(std::move(o));
    }
    return out;
}

namespace {

std::string join_keys(const std::vector<std::string>& keys) {
    std::string s;
    for (const auto& k : keys) s += (s.empty() ? "" : ", ") + k;
    return s;
}

}  // namespace

UnknownBundleError::UnknownBundleError(std::vector<std::string> keys)
    : Error("override references unknown bundle(s): " + join_keys(keys)), keys_(std::move(keys)) {}

std::vector<WeeklyBundle> assign_labels(std::vector<WeeklyBundle> bundles, const LabelRule& rule,
                                        const std::vector<LabelOverride>& overrides) {
    std::map<std::pair<std::string, int>, std::size_t> index;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        auto& b = bundles[i];
        b.label = rule.positive(b) ? 1 : 0;
        b.label_source = LabelSource::rule;
        index[{b.participant_id, b.week_index}] = i;
    }
    std::vector<std::string> unknown;
    for (const auto& o : overrides) {
        if (!index.count({o.participant_id, o.week_index})) {
            unknown.push_back(o.participant_id + "/" + std::to_string(o.week_index));
        }
    }
    if (!unknown.empty()) throw UnknownBundleError(std::move(unknown));
    for (const auto& o : overrides) {
        auto& b = bundles[index.at({o.participant_id, o.week_index})];
        b.label = o.label;
        b.label_source = LabelSource::expert_override;
    }
    return bundles;
}

}  // namespace mhfa::cohort
