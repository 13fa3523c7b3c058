#include "mhfa/cohort/serialize.hpp"

#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"

namespace mhfa::cohort {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const DailyBehavior& day) {
    ordered_json j;
    j["date"] = format_date(day.date);
    for (BehaviorField f : kBehaviorFields) {
        if (day[f]) j[std::string(field_name(f))] = *day[f];
    }
    return j;
}

ordered_json to_json(const MentalRecordEntry& entry) {
    ordered_json j;
    j["date"] = format_date(entry.date);
    ordered_json inds = ordered_json::object();
    for (IndicatorKind k : kIndicatorKinds) {
        if (const auto* ind = entry.find(k)) inds[std::string(indicator_name(k))] = ind->value;
    }
    j["indicators"] = std::move(inds);
    return j;
}

ordered_json to_json(const UserPortrait& p) {
    ordered_json j;
    j["participant_id"] = p.participant_id;
    j["age_band"] = p.age_band;
    j["gender"] = p.gender;
    j["traits"] = p.traits;
    return j;
}

ordered_json to_json(const WeeklyBundle& b) {
    ordered_json j;
    j["participant_id"] = b.participant_id;
    j["week_index"] = b.week_index;
    j["week_start"] = format_date(b.week_start);
    ordered_json behavior = ordered_json::array();
    for (const auto& d : b.behavior) behavior.push_back(to_json(d));
    j["behavior"] = std::move(behavior);
    ordered_json records = ordered_json::array();
    for (const auto& r : b.records) records.push_back(to_json(r));
    j["records"] = std::move(records);
    j["label"] = b.label ? ordered_json(*b.label) : ordered_json(nullptr);
    j["label_source"] = b.label_source ? ordered_json(std::string(label_source_name(*b.label_source)))
                                       : ordered_json(nullptr);
    return j;
}

namespace {

Date date_field(const json& j, const char* key) {
    const auto text = j.at(key).get<std::string>();
    auto d = parse_date(text);
    if (!d) throw ParseError(std::string("bad ") + key + ": " + text);
    return *d;
}

}  // namespace

DailyBehavior behavior_from_json(const json& j) {
    DailyBehavior d;
    d.date = date_field(j, "date");
    for (const auto& [key, value] : j.items()) {
        if (key == "date") continue;
        auto f = parse_behavior_field(key);
        if (!f) throw ParseError("unknown behavior field: " + key);
        if (!value.is_null()) d[*f] = value.get<double>();
    }
    if (auto problem = validate_behavior(d); !problem.empty()) throw ValidationError("behavior", problem);
    return d;
}

MentalRecordEntry record_from_json(const json& j) {
    MentalRecordEntry e;
    e.date = date_field(j, "date");
    for (const auto& [key, value] : j.at("indicators").items()) {
        auto k = parse_indicator(key);
        if (!k) throw ParseError("unknown indicator: " + key);
        MentalIndicator ind{*k, value.get<double>()};
        if (!ind.in_scale()) throw ValidationError(key, key + " outside its scale");
        e.set(*k, ind.value);
    }
    return e;
}

UserPortrait portrait_from_json(const json& j) {
    UserPortrait p;
    p.participant_id = j.at("participant_id").get<std::string>();
    if (p.participant_id.empty()) throw ValidationError("participant_id", "participant_id must be non-empty");
    p.age_band = j.value("age_band", std::string{});
    p.gender = j.value("gender", std::string{});
    if (j.contains("traits")) p.traits = j.at("traits").get<std::vector<std::string>>();
    return p;
}

WeeklyBundle bundle_from_json(const json& j) {
    try {
        WeeklyBundle b;
        b.participant_id = j.at("participant_id").get<std::string>();
        b.week_index = j.at("week_index").get<int>();
        if (b.week_index < 0) throw ValidationError("week_index", "week_index must be >= 0");
        b.week_start = date_field(j, "week_start");
        for (const auto& d : j.at("behavior")) b.behavior.push_back(behavior_from_json(d));
        for (const auto& r : j.at("records")) b.records.push_back(record_from_json(r));
        const Date end = b.week_start + std::chrono::days{7};
        for (const auto& d : b.behavior) {
            if (d.date < b.week_start || d.date >= end) throw ValidationError("behavior", "date outside week");
        }
        for (const auto& r : b.records) {
            if (r.date < b.week_start || r.date >= end) throw ValidationError("records", "date outside week");
        }
        if (j.contains("label") && !j.at("label").is_null()) {
            b.label = j.at("label").get<int>();
            if (*b.label != 0 && *b.label != 1) throw ValidationError("label", "label must be 0 or 1");
        }
        if (j.contains("label_source") && !j.at("label_source").is_null()) {
            b.label_source = parse_label_source(j.at("label_source").get<std::string>());
            if (!b.label_source) throw ValidationError("label_source", "unknown label_source");
        }
        if (b.label && !b.label_source) throw ValidationError("label_source", "label present without label_source");
        return b;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad bundle: ") + e.what());
    }
}

std::string to_jsonl(const std::vector<WeeklyBundle>& bundles) {
    std::string out;
    for (const auto& b : bundles) {
        out += to_json(b).dump();
        out += '\n';
    }
    return out;
}

std::vector<WeeklyBundle> read_bundles(const std::filesystem::path& path) {
    std::vector<WeeklyBundle> out;
    for (const auto& j : read_jsonl(path)) out.push_back(bundle_from_json(j));
    return out;
}

}  // namespace mhfa::cohort
