#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mhfa {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Shortest decimal text that round-trips to the same double ("1000", "0.85").
std::string format_number(double v);

/// Fixed decimals with trailing zeros removed ("1000", "7.39").
std::string format_rounded(double v, int decimals);

/// Replaces `{{name}}` placeholders. Throws ValidationError on an unknown placeholder.
std::string fill_template(std::string_view tpl, const std::map<std::string, std::string>& vars);

/// Splits one CSV record. Supports double-quoted cells with "" escapes.
std::vector<std::string> parse_csv_line(std::string_view line);

/// Quotes a cell only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view cell);

}  // namespace mhfa
