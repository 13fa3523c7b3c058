#include "mhfa/report/format.hpp"

#include <set>

#include "mhfa/cohort/weekly.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::report {

using cohort::BehaviorField;
using nlohmann::json;

namespace {

constexpr std::array<Aggregate, 5> kAggregates = {Aggregate::mean, Aggregate::total, Aggregate::min, Aggregate::max,
                                                 Aggregate::coverage};

std::optional<Aggregate> parse_aggregate(std::string_view s) {
    for (auto a : kAggregates) {
        if (aggregate_name(a) == s) return a;
    }
    return std::nullopt;
}

std::map<std::string, std::string> header_vars(const cohort::WeeklyBundle& b) {
    return {
        {"participant_id", b.participant_id},
        {"week_index", std::to_string(b.week_index)},
        {"week_start", format_date(b.week_start)},
        {"week_end", format_date(b.week_start + std::chrono::days(6))},
        {"days", std::to_string(b.behavior.size())},
    };
}

std::string value_cell(double v, BehaviorField f, UnitsStyle style) {
    std::string s = format_number(v);
    if (style == UnitsStyle::inline_units && !cohort::field_unit(f).empty()) {
        s += ' ';
        s += cohort::field_unit(f);
    }
    return s;
}

}  // namespace

std::string_view aggregate_name(Aggregate a) {
    switch (a) {
        case Aggregate::mean: return "mean";
        case Aggregate::total: return "total";
        case Aggregate::min: return "min";
        case Aggregate::max: return "max";
        case Aggregate::coverage: return "coverage";
    }
    return "mean";
}

void FormatSpec::validate() const {
    if (version < 1) throw ValidationError("version", "version must be >= 1");
    if (column_order.empty()) throw ValidationError("column_order", "column_order must not be empty");
    std::set<std::string> seen;
    for (const auto& c : column_order) {
        if (!cohort::parse_behavior_field(c)) throw ValidationError(c, "unknown behavior field '" + c + "'");
        if (!seen.insert(c).second) throw ValidationError(c, "duplicate column '" + c + "'");
    }
    std::set<Aggregate> aggs;
    for (auto a : aggregation_rows) {
        if (!aggs.insert(a).second) {
            throw ValidationError("aggregation_rows", "duplicate aggregate '" + std::string(aggregate_name(a)) + "'");
        }
    }
    cohort::WeeklyBundle probe;
    fill_template(header_text, header_vars(probe));  // throws on unknown placeholders
}

nlohmann::ordered_json FormatSpec::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = version;
    j["column_order"] = column_order;
    j["units_style"] = units_style == UnitsStyle::header ? "header" : "inline";
    auto aggs = nlohmann::ordered_json::array();
    for (auto a : aggregation_rows) aggs.push_back(aggregate_name(a));
    j["aggregation_rows"] = aggs;
    j["header_text"] = header_text;
    j["omit_absent"] = omit_absent;
    return j;
}

FormatSpec FormatSpec::from_json(const json& j) {
    if (!j.is_object()) throw ParseError("format spec must be a JSON object");
    FormatSpec s;
    try {
        s.version = j.at("version").get<int>();
        s.column_order = j.at("column_order").get<std::vector<std::string>>();
        const auto units = j.at("units_style").get<std::string>();
        if (units == "header") {
            s.units_style = UnitsStyle::header;
        } else if (units == "inline") {
            s.units_style = UnitsStyle::inline_units;
        } else {
            throw ValidationError("units_style", "units_style must be 'inline' or 'header'");
        }
        for (const auto& a : j.at("aggregation_rows")) {
            const auto name = a.get<std::string>();
            const auto agg = parse_aggregate(name);
            if (!agg) throw ValidationError("aggregation_rows", "unknown aggregate '" + name + "'");
            s.aggregation_rows.push_back(*agg);
        }
        s.header_text = j.at("header_text").get<std::string>();
        s.omit_absent = j.at("omit_absent").get<bool>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("format spec: ") + e.what());
    }
    s.validate();
    return s;
}

FormatSpec FormatSpec::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

FormatSpec default_format_spec() { return FormatSpec::from_json(json::parse(templates::get("default_format_spec.json"))); }

std::string render(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait, const FormatSpec& spec) {
    spec.validate();
    std::vector<BehaviorField> fields;
    for (const auto& c : spec.column_order) fields.push_back(*cohort::parse_behavior_field(c));
    if (spec.omit_absent) {
        std::erase_if(fields, [&](BehaviorField f) {
            for (const auto& d : bundle.behavior) {
                if (d[f]) return false;
            }
            return true;
        });
    }

    std::string out = fill_template(spec.header_text, header_vars(bundle));
    out += '\n';
    if (!portrait.age_band.empty() || !portrait.gender.empty() || !portrait.traits.empty()) {
        out += "Profile:";
        std::string sep = " ";
        if (!portrait.age_band.empty()) {
            out += sep + "age " + portrait.age_band;
            sep = ", ";
        }
        if (!portrait.gender.empty()) {
            out += sep + portrait.gender;
            sep = ", ";
        }
        if (!portrait.traits.empty()) {
            out += sep + "traits ";
            for (std::size_t i = 0; i < portrait.traits.size(); ++i) {
                if (i) out += "/";
                out += portrait.traits[i];
            }
        }
        out += '\n';
    }
    if (bundle.behavior.empty() || fields.empty()) {
        out += kNoDataLine;
        out += '\n';
        return out;
    }

    const std::string absent = spec.omit_absent ? "-" : "NA";
    out += "date";
    for (auto f : fields) {
        out += '|';
        out += cohort::field_name(f);
        if (spec.units_style == UnitsStyle::header && !cohort::field_unit(f).empty()) {
            out += '(';
            out += cohort::field_unit(f);
            out += ')';
        }
    }
    out += '\n';
    for (const auto& day : bundle.behavior) {
        out += format_date(day.date);
        for (auto f : fields) {
            out += '|';
            out += day[f] ? value_cell(*day[f], f, spec.units_style) : absent;
        }
        out += '\n';
    }
    if (spec.aggregation_rows.empty()) return out;
    for (auto f : fields) {
        const auto s = cohort::summarize_field(bundle, f);
        out += cohort::field_name(f);
        std::string sep = " ";
        for (auto a : spec.aggregation_rows) {
            out += sep;
            sep = "; ";
            out += aggregate_name(a);
            out += ": ";
            auto num = [&](const std::optional<double>& v) {
                return v ? value_cell(std::stod(format_rounded(*v, 2)), f, spec.units_style) : absent;
            };
            switch (a) {
                case Aggregate::mean: out += num(s.mean); break;
                case Aggregate::total: out += num(s.total); break;
                case Aggregate::min: out += num(s.min); break;
                case Aggregate::max: out += num(s.max); break;
                case Aggregate::coverage:
                    out += std::to_string(s.coverage) + "/" + std::to_string(s.days);
                    break;
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace mhfa::report

namespace mhfa::report {

std::string render_records(const cohort::WeeklyBundle& bundle) {
    if (bundle.records.empty()) return "no records\n";
    std::string out;
    for (const auto& r : bundle.records) {
        out += format_date(r.date);
        out += ':';
        std::string sep = " ";
        for (const auto& ind : r.indicators) {
            out += sep;
            sep = ", ";
            out += cohort::indicator_name(ind.kind);
            out += ' ';
            out += format_number(ind.value);
        }
        out += '\n';
    }
    return out;
}

}  // namespace mhfa::report
