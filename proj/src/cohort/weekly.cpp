#include "mhfa/cohort/weekly.hpp"

#include <algorithm>
#include <map>

namespace mhfa::cohort {

std::vector<WeeklyBundle> aggregate_weekly(const Cohort& cohort, std::chrono::weekday anchor) {
    std::vector<WeeklyBundle> out;
    for (const auto& p : cohort.participants) {
        std::optional<Date> first;
        for (const auto& d : p.days) first = first ? std::min(*first, d.date) : d.date;
        for (const auto& r : p.records) first = first ? std::min(*first, r.date) : r.date;
        if (!first) continue;
        const Date origin = week_start(*first, anchor);

        std::map<int, WeeklyBundle> weeks;
        auto bundle_for = [&](Date d) -> WeeklyBundle& {
            const int idx = static_cast<int>((d - origin).count() / 7);
            auto [it, inserted] = weeks.try_emplace(idx);
            if (inserted) {
                it->second.participant_id = p.id();
                it->second.week_index = idx;
                it->second.week_start = origin + std::chrono::days{7 * idx};
            }
            return it->second;
        };
        for (const auto& d : p.days) bundle_for(d.date).behavior.push_back(d);
        for (const auto& r : p.records) bundle_for(r.date).records.push_back(r);
        for (auto& [idx, b] : weeks) {
            std::sort(b.behavior.begin(), b.behavior.end(), [](auto& a, auto& c) { return a.date < c.date; });
            std::sort(b.records.begin(), b.records.end(), [](auto& a, auto& c) { return a.date < c.date; });
            out.push_back(std::move(b));
        }
    }
    return out;
}

namespace {

template <typename Getter>
FieldSummary summarize(std::string name, std::size_t days, std::size_t n, Getter get) {
    FieldSummary s;
    s.field = std::move(name);
    s.days = days;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto v = get(i);
        if (!v) continue;
        ++s.coverage;
        total += *v;
        s.min = s.min ? std::min(*s.min, *v) : *v;
        s.max = s.max ? std::max(*s.max, *v) : *v;
    }
    if (s.coverage > 0) {
        s.total = total;
        s.mean = total / static_cast<double>(s.coverage);
    }
    return s;
}

}  // namespace

FieldSummary summarize_field(const WeeklyBundle& bundle, BehaviorField f) {
    return summarize(std::string(field_name(f)), bundle.behavior.size(), bundle.behavior.size(),
                     [&](std::size_t i) { return bundle.behavior[i][f]; });
}

FieldSummary summarize_indicator(const WeeklyBundle& bundle, IndicatorKind k) {
    return summarize(std::string(indicator_name(k)), bundle.records.size(), bundle.records.size(),
                     [&](std::size_t i) -> std::optional<double> {
                         if (const auto* ind = bundle.records[i].find(k)) return ind->value;
                         return std::nullopt;
                     });
}

std::optional<double> latest_indicator(const WeeklyBundle& bundle, IndicatorKind k) {
    for (auto it = bundle.records.rbegin(); it != bundle.records.rend(); ++it) {
        if (const auto* ind = it->find(k)) return ind->value;
    }
    return std::nullopt;
}

}  // namespace mhfa::cohort
