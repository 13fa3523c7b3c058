#include "mhfa/analysis/dialogue.hpp"

#include "mhfa/cohort/weekly.hpp"
#include "mhfa/core/dates.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"

#include <fstream>

namespace mhfa::analysis {

using gateway::ChatMessage;
using gateway::Role;
using nlohmann::ordered_json;

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::physical_activity: return "physical_activity";
        case Scenario::nutrition: return "nutrition";
        case Scenario::rest_sleep: return "rest_sleep";
        case Scenario::mental_health: return "mental_health";
        case Scenario::open: return "open";
    }
    return "open";
}

Scenario parse_scenario(std::string_view name) {
    for (auto s : {Scenario::physical_activity, Scenario::nutrition, Scenario::rest_sleep, Scenario::mental_health,
                   Scenario::open}) {
        if (scenario_name(s) == name) return s;
    }
    throw ValidationError("scenario", "unknown scenario '" + std::string(name) + "'");
}

Scenario resolve_scenario(Scenario s, int local_hour) {
    if (s != Scenario::open) return s;
    const int h = ((local_hour % 24) + 24) % 24;
    if (h >= 21 || h < 5) return Scenario::rest_sleep;
    if (h < 11) return Scenario::physical_activity;
    if (h < 14) return Scenario::nutrition;
    if (h < 18) return Scenario::mental_health;
    return Scenario::nutrition;
}

std::string_view tone_name(Tone t) {
    switch (t) {
        case Tone::supportive: return "supportive";
        case Tone::neutral: return "neutral";
        case Tone::encouraging: return "encouraging";
    }
    return "neutral";
}

Tone tone_for(std::optional<double> mood) {
    if (!mood) return Tone::neutral;
    if (*mood < 3) return Tone::supportive;
    if (*mood > 3) return Tone::encouraging;
    return Tone::neutral;
}

std::string tone_directive(Tone t) { return trim(templates::get("tone_" + std::string(tone_name(t)) + ".txt")); }

namespace {

int local_hour(std::chrono::system_clock::time_point tp, int offset_minutes) {
    const auto local = tp + std::chrono::minutes(offset_minutes);
    const auto day = std::chrono::floor<std::chrono::days>(local);
    return static_cast<int>(std::chrono::duration_cast<std::chrono::hours>(local - day).count());
}

std::string next_timestamp(const DialogueSession& s, std::chrono::system_clock::time_point now) {
    if (!s.turns.empty()) {
        if (auto last = parse_rfc3339(s.turns.back().timestamp); last && now <= *last) {
            now = *last + std::chrono::milliseconds(1);
        }
    }
    return format_rfc3339(now);
}

std::string behavior_block(const DialogueSession& s, const report::FormatSpec& spec) {
    if (!s.bundle) return "no behavior data available\n";
    return report::render(*s.bundle, s.portrait.value_or(cohort::UserPortrait{}), spec);
}

std::vector<ChatMessage> history(const DialogueSession& s, std::size_t n, bool flip) {
    const std::size_t from = s.turns.size() > n ? s.turns.size() - n : 0;
    std::vector<ChatMessage> out;
    for (std::size_t i = from; i < s.turns.size(); ++i) {
        Role r = s.turns[i].role;
        if (flip) r = r == Role::assistant ? Role::user : Role::assistant;
        out.push_back({r, s.turns[i].text});
    }
    return out;
}

std::string scenario_guidance(Scenario resolved) {
    return trim(templates::get("scenario_" + std::string(scenario_name(resolved)) + ".txt"));
}

}  // namespace

ordered_json DialogueSession::to_json() const {
    ordered_json j;
    j["session_id"] = session_id;
    j["participant_id"] = participant_id;
    j["scenario"] = scenario_name(scenario);
    j["mood_context"] = mood_context ? ordered_json(*mood_context) : ordered_json(nullptr);
    j["bundle_ref"] = bundle ? ordered_json{{"participant_id", bundle->participant_id}, {"week_index", bundle->week_index}}
                             : ordered_json(nullptr);
    auto turns_json = ordered_json::array();
    for (const auto& t : turns) {
        turns_json.push_back({{"role", gateway::role_name(t.role)}, {"text", t.text}, {"timestamp", t.timestamp}});
    }
    j["turns"] = turns_json;
    j["metadata"] = metadata;
    j["closed"] = closed;
    j["failure"] = failure.empty() ? ordered_json(nullptr) : ordered_json(failure);
    return j;
}

DialogueSession DialogueSession::from_json(const nlohmann::json& j) {
    try {
        DialogueSession s;
        s.session_id = j.at("session_id").get<std::string>();
        s.participant_id = j.at("participant_id").get<std::string>();
        s.scenario = parse_scenario(j.at("scenario").get<std::string>());
        if (j.contains("mood_context") && !j["mood_context"].is_null()) s.mood_context = j["mood_context"].get<double>();
        for (const auto& t : j.at("turns")) {
            s.turns.push_back({gateway::parse_role(t.at("role").get<std::string>()), t.at("text").get<std::string>(),
                               t.at("timestamp").get<std::string>()});
        }
        if (j.contains("metadata")) s.metadata = j["metadata"].get<std::map<std::string, std::string>>();
        s.closed = j.value("closed", false);
        if (j.contains("failure") && j["failure"].is_string()) s.failure = j["failure"].get<std::string>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("session: ") + e.what());
    }
}

std::string assistant_system_prompt(const DialogueSession& session, Scenario resolved, const MonitorOptions& opts) {
    std::string prompt = fill_template(templates::get("monitor_persona.txt"),
                                       {{"participant_id", session.participant_id},
                                        {"scenario_guidance", scenario_guidance(resolved)},
                                        {"tone_directive", tone_directive(tone_for(session.mood_context))},
                                        {"behavior_table", behavior_block(session, opts.spec)}});
    if (!opts.persona_prefix.empty()) prompt = opts.persona_prefix + "\n\n" + prompt;
    return prompt;
}

namespace {

Scenario session_resolved(const DialogueSession& s, std::chrono::system_clock::time_point now, int offset) {
    if (auto it = s.metadata.find("resolved_scenario"); it != s.metadata.end()) return parse_scenario(it->second);
    return resolve_scenario(s.scenario, local_hour(now, offset));
}

}  // namespace

std::vector<ChatMessage> assemble_monitor_prompt(const DialogueSession& session,
                                                 std::optional<std::string_view> user_message,
                                                 const MonitorOptions& opts) {
    const Scenario resolved = session_resolved(session, opts.clock(), opts.utc_offset_minutes);
    std::vector<ChatMessage> msgs;
    msgs.push_back({Role::system, assistant_system_prompt(session, resolved, opts)});
    for (auto& m : history(session, opts.context_turns, false)) msgs.push_back(std::move(m));
    if (user_message) msgs.push_back({Role::user, std::string(*user_message)});
    return msgs;
}

std::string open_session(DialogueSession& session, gateway::Gateway& gw, const MonitorOptions& opts) {
    if (session.closed) throw ValidationError("session", "session " + session.session_id + " is closed");
    if (!session.turns.empty()) throw ValidationError("session", "session " + session.session_id + " already started");
    const auto now = opts.clock();
    const Scenario resolved = resolve_scenario(session.scenario, local_hour(now, opts.utc_offset_minutes));
    const std::string opener_id = "opener_" + std::string(scenario_name(resolved));
    std::vector<ChatMessage> msgs = {{Role::system, assistant_system_prompt(session, resolved, opts)},
                                     {Role::user, trim(templates::get(opener_id + ".txt"))}};
    const std::string reply = gw.chat(msgs, opts.params).text;
    session.metadata["resolved_scenario"] = std::string(scenario_name(resolved));
    session.metadata["opener_template"] = opener_id;
    session.turns.push_back({Role::assistant, reply, next_timestamp(session, now)});
    return reply;
}

std::string monitor_turn(DialogueSession& session, std::string_view user_message, gateway::Gateway& gw,
                         const MonitorOptions& opts) {
    if (session.closed) throw ValidationError("session", "session " + session.session_id + " is closed");
    if (trim(user_message).empty()) throw ValidationError("content", "user message must not be empty");
    const auto msgs = assemble_monitor_prompt(session, user_message, opts);
    const std::string reply = gw.chat(msgs, opts.params).text;
    const auto now = opts.clock();
    if (!session.metadata.count("resolved_scenario")) {
        session.metadata["resolved_scenario"] =
            std::string(scenario_name(resolve_scenario(session.scenario, local_hour(now, opts.utc_offset_minutes))));
    }
    session.turns.push_back({Role::user, std::string(user_message), next_timestamp(session, now)});
    session.turns.push_back({Role::assistant, reply, next_timestamp(session, now)});
    return reply;
}

DialogueSession simulate_dialogue(const AgentConfig& assistant, const AgentConfig& user, Scenario scenario,
                                  std::size_t max_turns, const SimulationOptions& opts) {
    if (assistant.role != Role::assistant || user.role != Role::user) {
        throw ValidationError("role", "simulation needs one assistant agent and one user agent");
    }
    if (!assistant.bundle) throw ValidationError("bundle", "assistant agent needs a weekly bundle");
    if (!assistant.gateway || !user.gateway) throw ValidationError("gateway", "both agents need a gateway");

    DialogueSession s;
    s.session_id = opts.session_id;
    s.participant_id = assistant.bundle->participant_id;
    s.scenario = scenario;
    s.bundle = assistant.bundle;
    s.portrait = assistant.portrait;
    s.mood_context = cohort::latest_indicator(*assistant.bundle, cohort::IndicatorKind::mood);

    std::size_t tick = 0;
    MonitorOptions mo;
    mo.context_turns = opts.context_turns;
    mo.clock = [&] { return opts.start + opts.step * static_cast<long>(tick); };
    mo.spec = opts.spec;
    mo.params = opts.params;
    mo.persona_prefix = assistant.persona_prompt;

    try {
        while (s.turns.size() < max_turns) {
            if (s.turns.empty()) {
                open_session(s, *assistant.gateway, mo);
            } else if (s.turns.back().role == Role::user) {
                const auto msgs = assemble_monitor_prompt(s, std::nullopt, mo);
                const std::string reply = assistant.gateway->chat(msgs, mo.params).text;
                s.turns.push_back({Role::assistant, reply, next_timestamp(s, mo.clock())});
            } else {
                const Scenario resolved = parse_scenario(s.metadata.at("resolved_scenario"));
                std::vector<ChatMessage> msgs = {
                    {Role::system, fill_template(templates::get("user_agent.txt"),
                                                 {{"persona", user.persona_prompt.empty() ? "an ordinary adult" : user.persona_prompt},
                                                  {"scenario", std::string(scenario_name(resolved))},
                                                  {"stop_token", std::string(kStopToken)}})}};
                for (auto& m : history(s, opts.context_turns, true)) msgs.push_back(std::move(m));
                const std::string reply = user.gateway->chat(msgs, opts.params).text;
                s.turns.push_back({Role::user, reply, next_timestamp(s, mo.clock())});
                if (reply.find(kStopToken) != std::string::npos) {
                    ++tick;
                    break;
                }
            }
            ++tick;
        }
    } catch (const Error& e) {
        s.failure = e.what();
    }
    s.closed = true;
    if (opts.transcript_path) {
        if (opts.transcript_path->has_parent_path()) std::filesystem::create_directories(opts.transcript_path->parent_path());
        std::ofstream out(*opts.transcript_path, std::ios::app);
        if (!out) throw IoError(opts.transcript_path->string(), "cannot open transcript file");
        out << s.to_json().dump() << '\n';
    }
    return s;
}

}  // namespace mhfa::analysis
