#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/cohort/types.hpp"
#include "mhfa/gateway/gateway.hpp"
#include "mhfa/report/format.hpp"

namespace mhfa::analysis {

inline constexpr std::array<std::string_view, 5> kPhaseNames = {
    "Synthesis", "Behavior Analysis", "Correlation Analysis", "Recommendation", "Outcome"};

/// Header line exactly as the prompt template spells it for phase `p` (1 to 5).
std::string phase_header(int phase);

struct EvidenceSpan {
    int phase = 0;           ///< 1..5
    std::size_t begin = 0;   ///< byte offsets into raw_text, half-open
    std::size_t end = 0;
};

struct AnalysisReport {
    std::array<std::string, 5> phases;
    int outcome = 0;
    std::vector<EvidenceSpan> evidence_spans;
    std::string raw_text;
    int attempts = 1;

    nlohmann::ordered_json to_json() const;
    static AnalysisReport from_json(const nlohmann::json& j);
};

/// Raised when a reply cannot be split into five phases with an outcome.
class AnalysisParseError : public ParseError {
public:
    AnalysisParseError(const std::string& what, std::string raw) : ParseError(what), raw_(std::move(raw)) {}
    const std::string& raw_text() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Splits model output on the five phase headers. A header line is
/// "Phase N" followed by an em dash, en dash, hyphen, colon or period and the
/// phase name, optionally wrapped in markdown emphasis or heading marks. Each
/// phase must appear, in order; phase 5 must carry the outcome marker.
AnalysisReport parse_analysis(std::string_view text);

/// Prompt for one bundle: the five-phase template filled with the rendered
/// behavior table and mental record.
std::string analysis_prompt(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                            const report::FormatSpec& spec);

/// One chat call; if the reply is malformed, a single retry with a reminder
/// appended; then AnalysisParseError carrying the last raw reply.
AnalysisReport generate_analysis(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                                 gateway::Gateway& gw, const report::FormatSpec& spec,
                                 const gateway::GenParams& params = {});

}  // namespace mhfa::analysis
