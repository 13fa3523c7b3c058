#include "mhfa/analysis/analysis.hpp"

#include <cctype>

#include "mhfa/analysis/outcome.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::analysis {

namespace {

struct HeaderHit {
    int phase = 0;
    std::size_t line_begin = 0;
    std::size_t body_begin = 0;
};

/// Phase number when `line` is a phase header, else 0.
int header_phase(std::string_view line) {
    std::size_t i = 0;
    auto skip = [&](std::string_view chars) {
        while (i < line.size() && chars.find(line[i]) != std::string_view::npos) ++i;
    };
    skip(" \t#*_>");
    if (!starts_with_ci(line.substr(i), "phase")) return 0;
    i += 5;
    skip(" \t");
    if (i >= line.size() || line[i] < '1' || line[i] > '5') return 0;
    const int phase = line[i] - '0';
    ++i;
    skip(" \t*_");
    const std::string_view rest = line.substr(i);
    std::size_t sep = 0;
    for (std::string_view s : {"\xE2\x80\x94", "\xE2\x80\x93", "-", ":", "."}) {
        if (rest.substr(0, s.size()) == s) {
            sep = s.size();
            break;
        }
    }
    if (sep == 0) return 0;
    i += sep;
    skip(" \t*_");
    if (!starts_with_ci(line.substr(i), kPhaseNames[static_cast<std::size_t>(phase - 1)])) return 0;
    return phase;
}

std::pair<std::size_t, std::size_t> trimmed_range(std::string_view text, std::size_t b, std::size_t e) {
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    return {b, e};
}

}  // namespace

std::string phase_header(int phase) {
    if (phase < 1 || phase > 5) throw ValidationError("phase", "phase must be in 1..5");
    return "Phase " + std::to_string(phase) + " \xE2\x80\x94 " + std::string(kPhaseNames[static_cast<std::size_t>(phase - 1)]);
}

AnalysisReport parse_analysis(std::string_view text) {
    std::vector<HeaderHit> hits;
    int expected = 1;
    std::size_t pos = 0;
    while (pos <= text.size() && expected <= 5) {
        auto nl = text.find('\n', pos);
        const std::size_t line_end = nl == std::string_view::npos ? text.size() : nl;
        if (header_phase(text.substr(pos, line_end - pos)) == expected) {
            hits.push_back({expected, pos, nl == std::string_view::npos ? text.size() : nl + 1});
            ++expected;
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (expected <= 5) {
        throw AnalysisParseError("analysis is missing the header '" + phase_header(expected) + "'", std::string(text));
    }
    AnalysisReport r;
    r.raw_text = std::string(text);
    for (std::size_t k = 0; k < hits.size(); ++k) {
        const std::size_t end = k + 1 < hits.size() ? hits[k + 1].line_begin : text.size();
        const auto [b, e] = trimmed_range(text, hits[k].body_begin, std::max(end, hits[k].body_begin));
        r.phases[k] = std::string(text.substr(b, e - b));
        r.evidence_spans.push_back({hits[k].phase, b, e});
    }
    try {
        r.outcome = parse_outcome(r.phases[4]);
    } catch (const ParseError& e) {
        throw AnalysisParseError(std::string("phase 5: ") + e.what(), std::string(text));
    }
    return r;
}

nlohmann::ordered_json AnalysisReport::to_json() const {
    nlohmann::ordered_json j;
    auto phases_json = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < phases.size(); ++i) {
        phases_json.push_back({{"name", kPhaseNames[i]}, {"text", phases[i]}});
    }
    j["phases"] = phases_json;
    j["outcome"] = outcome;
    auto spans = nlohmann::ordered_json::array();
    for (const auto& s : evidence_spans) spans.push_back({{"phase", s.phase}, {"begin", s.begin}, {"end", s.end}});
    j["evidence_spans"] = spans;
    j["raw_text"] = raw_text;
    j["attempts"] = attempts;
    return j;
}

AnalysisReport AnalysisReport::from_json(const nlohmann::json& j) {
    try {
        AnalysisReport r;
        const auto& phases_json = j.at("phases");
        if (!phases_json.is_array() || phases_json.size() != 5) throw ParseError("report must have 5 phases");
        for (std::size_t i = 0; i < 5; ++i) r.phases[i] = phases_json[i].at("text").get<std::string>();
        r.outcome = j.at("outcome").get<int>();
        if (r.outcome != 0 && r.outcome != 1) throw ParseError("outcome must be 0 or 1");
        for (const auto& s : j.at("evidence_spans")) {
            r.evidence_spans.push_back({s.at("phase").get<int>(), s.at("begin").get<std::size_t>(), s.at("end").get<std::size_t>()});
        }
        r.raw_text = j.at("raw_text").get<std::string>();
        r.attempts = j.value("attempts", 1);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("analysis report: ") + e.what());
    }
}

std::string analysis_prompt(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                            const report::FormatSpec& spec) {
    return fill_template(templates::get("analysis_five_phase.txt"),
                         {{"participant_id", bundle.participant_id},
                          {"behavior_table", report::render(bundle, portrait, spec)},
                          {"mental_records", report::render_records(bundle)}});
}

AnalysisReport generate_analysis(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                                 gateway::Gateway& gw, const report::FormatSpec& spec,
                                 const gateway::GenParams& params) {
    if (bundle.records.empty()) {
        throw ValidationError("records", "bundle " + bundle.participant_id + "/" + std::to_string(bundle.week_index) +
                                             " has no mental record days");
    }
    const std::string prompt = analysis_prompt(bundle, portrait, spec);
    const std::vector<gateway::ChatMessage> first = {{gateway::Role::user, prompt}};
    const std::string reply = gw.chat(first, params).text;
    try {
        return parse_analysis(reply);
    } catch (const AnalysisParseError&) {
    }
    const std::vector<gateway::ChatMessage> second = {
        {gateway::Role::user, prompt + "\n\n" + trim(templates::get("analysis_reminder.txt"))}};
    const std::string retry = gw.chat(second, params).text;
    AnalysisReport r = parse_analysis(retry);
    r.attempts = 2;
    return r;
}

}  // namespace mhfa::analysis
