#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/cohort/types.hpp"

namespace mhfa::report {

enum class UnitsStyle { inline_units, header };

enum class Aggregate { mean, total, min, max, coverage };

std::string_view aggregate_name(Aggregate a);

/// Layout of the behavior table handed to the model. Persisted as JSON:
/// {"version", "column_order", "units_style": "inline"|"header",
///  "aggregation_rows": ["mean", "total", "min", "max", "coverage"],
///  "header_text", "omit_absent"}.
struct FormatSpec {
    int version = 1;
    std::vector<std::string> column_order;
    UnitsStyle units_style = UnitsStyle::header;
    std::vector<Aggregate> aggregation_rows;
    /// May use {{participant_id}}, {{week_index}}, {{week_start}}, {{week_end}}, {{days}}.
    std::string header_text;
    bool omit_absent = true;

    /// Throws ValidationError naming the offending field.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    /// Parses and validates; ParseError on shape problems, ValidationError on content.
    static FormatSpec from_json(const nlohmann::json& j);
    static FormatSpec load(const std::filesystem::path& path);

    bool operator==(const FormatSpec&) const = default;
};

/// The shipped starting layout.
FormatSpec default_format_spec();

/// Renders one week of behavior as a compact pipe-delimited table: header line,
/// portrait line, one row per day, then the weekly summary rows. Deterministic.
std::string render(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait, const FormatSpec& spec);

inline constexpr std::string_view kNoDataLine = "no data";

}  // namespace mhfa::report

namespace mhfa::report {

/// Mental record entries as text, one line per day:
/// "2024-01-03: mood 2, stress 4, phq4 6". Returns "no records\n" when empty.
std::string render_records(const cohort::WeeklyBundle& bundle);

}  // namespace mhfa::report
