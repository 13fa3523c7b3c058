#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mhfa/eval/evaluations.hpp"

namespace mhfa::eval {

/// "mood,sentiment" rows in curve order.
std::string tone_curve_csv(const ToneResult& tone);
/// "scenario,indicators_expected,indicators_mentioned,recall_fraction"; lists are ';'-joined.
std::string recall_csv(const std::vector<RecallReport>& reports);

/// Scatter of the tone curve with the neutral mood marked.
std::string tone_curve_svg(const ToneResult& tone);
/// Mean recall per scenario as bars.
std::string recall_svg(const std::vector<RecallReport>& reports);

}  // namespace mhfa::eval
