#pragma once

#include <string>
#include <string_view>

#include "mhfa/core/errors.hpp"

namespace mhfa::analysis {

/// Reads the binary outcome from model output: the last case-insensitive
/// "Outcome:" marker must be followed by 0 or 1. Throws ParseError otherwise.
int parse_outcome(std::string_view text);

/// Position of the last "Outcome:" marker, or npos.
std::size_t find_outcome_marker(std::string_view text);

}  // namespace mhfa::analysis
