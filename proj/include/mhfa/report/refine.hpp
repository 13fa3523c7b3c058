#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/gateway/gateway.hpp"
#include "mhfa/report/format.hpp"

namespace mhfa::report {

struct Measurement {
    std::size_t token_count = 0;
    double perplexity = 0;
};

/// Scores `text` through the gateway: perplexity = exp(-mean token logprob).
/// Empty text has no mean and is rejected.
Measurement measure(std::string_view text, gateway::Gateway& gw);

/// Closed form used by measure(), exposed for callers holding logprobs already.
double perplexity_of(const std::vector<gateway::TokenLogprob>& tokens);

struct BehaviorReport {
    std::string text;
    std::size_t token_count = 0;
    double perplexity = 0;
    int format_version = 0;
};

BehaviorReport build_report(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                            const FormatSpec& spec, gateway::Gateway& gw);

struct RefineStep {
    int iteration = 0;
    std::string feedback_text;
    std::optional<FormatSpec> candidate_spec;  ///< absent when the proposal did not parse
    std::optional<double> candidate_perplexity;
    std::optional<std::size_t> candidate_tokens;
    bool accepted = false;
    std::string error;  ///< parse or validation message for rejected proposals

    nlohmann::ordered_json to_json() const;
};

struct RefineResult {
    FormatSpec best;
    double best_perplexity = 0;
    double initial_perplexity = 0;
    std::vector<RefineStep> trace;
};

/// Iterative self-feedback loop. Each iteration asks for a critique of the
/// current table and then for a revised FormatSpec as JSON. The revision is
/// kept only when its rendered table scores a strictly lower perplexity.
/// Stops after `max_iters` iterations or two consecutive rejections.
RefineResult self_refine(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                         const FormatSpec& initial, gateway::Gateway& gw, int max_iters,
                         const gateway::GenParams& params = {});

/// Pulls the first balanced JSON object out of a model reply (fenced or bare).
std::optional<std::string> extract_json_object(std::string_view reply);

}  // namespace mhfa::report
