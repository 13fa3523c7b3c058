#include "mhfa/report/refine.hpp"

#include <cmath>

#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::report {

using gateway::ChatMessage;
using gateway::Role;

double perplexity_of(const std::vector<gateway::TokenLogprob>& tokens) {
    if (tokens.empty()) throw Error("perplexity is undefined for zero scored tokens");
    long double sum = 0;
    for (const auto& t : tokens) sum += t.logprob;
    return static_cast<double>(std::exp(-sum / static_cast<long double>(tokens.size())));
}

Measurement measure(std::string_view text, gateway::Gateway& gw) {
    if (text.empty()) throw ValidationError("text", "cannot measure empty text");
    const auto tokens = gw.score_logprobs(text);
    return {tokens.size(), perplexity_of(tokens)};
}

BehaviorReport build_report(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                            const FormatSpec& spec, gateway::Gateway& gw) {
    BehaviorReport r;
    r.text = render(bundle, portrait, spec);
    const auto m = measure(r.text, gw);
    r.token_count = m.token_count;
    r.perplexity = m.perplexity;
    r.format_version = spec.version;
    return r;
}

nlohmann::ordered_json RefineStep::to_json() const {
    nlohmann::ordered_json j;
    j["iteration"] = iteration;
    j["feedback_text"] = feedback_text;
    j["candidate_spec"] = candidate_spec ? candidate_spec->to_json() : nlohmann::ordered_json(nullptr);
    j["candidate_perplexity"] = candidate_perplexity ? nlohmann::ordered_json(*candidate_perplexity) : nlohmann::ordered_json(nullptr);
    j["candidate_tokens"] = candidate_tokens ? nlohmann::ordered_json(*candidate_tokens) : nlohmann::ordered_json(nullptr);
    j["accepted"] = accepted;
    j["error"] = error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(error);
    return j;
}

std::optional<std::string> extract_json_object(std::string_view reply) {
    const auto start = reply.find('{');
    if (start == std::string_view::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < reply.size(); ++i) {
        const char c = reply[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}' && --depth == 0) {
            return std::string(reply.substr(start, i - start + 1));
        }
    }
    return std::nullopt;
}

RefineResult self_refine(const cohort::WeeklyBundle& bundle, const cohort::UserPortrait& portrait,
                         const FormatSpec& initial, gateway::Gateway& gw, int max_iters,
                         const gateway::GenParams& params) {
    if (max_iters < 0) throw ValidationError("max_iters", "max_iters must be >= 0");
    initial.validate();
    RefineResult result;
    result.best = initial;
    if (max_iters == 0) return result;

    std::string table = render(bundle, portrait, initial);
    result.best_perplexity = measure(table, gw).perplexity;
    result.initial_perplexity = result.best_perplexity;

    std::string field_list;
    for (auto f : cohort::kBehaviorFields) {
        if (!field_list.empty()) field_list += ", ";
        field_list += cohort::field_name(f);
    }

    int consecutive_rejections = 0;
    for (int it = 1; it <= max_iters && consecutive_rejections < 2; ++it) {
        RefineStep step;
        step.iteration = it;
        const std::string spec_json = result.best.to_json().dump(2);
        const std::vector<ChatMessage> feedback_prompt = {
            {Role::user, fill_template(templates::get("refine_feedback.txt"), {{"spec", spec_json}, {"table", table}})}};
        step.feedback_text = gw.chat(feedback_prompt, params).text;

        const std::vector<ChatMessage> revise_prompt = {
            {Role::user, fill_template(templates::get("refine_revise.txt"), {{"spec", spec_json},
                                                                               {"table", table},
                                                                               {"feedback", step.feedback_text},
                                                                               {"fields", field_list}})}};
        const std::string reply = gw.chat(revise_prompt, params).text;

        try {
            const auto obj = extract_json_object(reply);
            if (!obj) throw ParseError("revised layout reply contains no JSON object");
            nlohmann::json parsed;
            try {
                parsed = nlohmann::json::parse(*obj);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(std::string("revised layout is not valid JSON: ") + e.what());
            }
            step.candidate_spec = FormatSpec::from_json(parsed);
        } catch (const Error& e) {
            step.error = e.what();
        }

        if (step.candidate_spec) {
            const std::string candidate_table = render(bundle, portrait, *step.candidate_spec);
            const auto m = measure(candidate_table, gw);
            step.candidate_perplexity = m.perplexity;
            step.candidate_tokens = m.token_count;
            if (m.perplexity < result.best_perplexity) {
                step.accepted = true;
                result.best = *step.candidate_spec;
                result.best_perplexity = m.perplexity;
                table = candidate_table;
            }
        }
        consecutive_rejections = step.accepted ? 0 : consecutive_rejections + 1;
        result.trace.push_back(std::move(step));
    }
    return result;
}

}  // namespace mhfa::report
