#include "mhfa/analysis/outcome.hpp"

#include <cctype>

#include "mhfa/core/text.hpp"

namespace mhfa::analysis {

namespace {
constexpr std::string_view kMarker = "outcome:";
}

std::size_t find_outcome_marker(std::string_view text) {
    const std::string lower = to_lower(text);
    return lower.rfind(kMarker);
}

int parse_outcome(std::string_view text) {
    const auto pos = find_outcome_marker(text);
    if (pos == std::string_view::npos) throw ParseError("no 'Outcome:' marker in model output");
    std::size_t i = pos + kMarker.size();
    auto skippable = [](char c) { return c == ' ' || c == '\t' || c == '*' || c == '`' || c == '"' || c == '['; };
    while (i < text.size() && skippable(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view token = text.substr(i, j - i);
    if (token == "0") return 0;
    if (token == "1") return 1;
    throw ParseError("outcome is not binary: '" + std::string(token.empty() ? text.substr(i, 16) : token) + "'");
}

}  // namespace mhfa::analysis
