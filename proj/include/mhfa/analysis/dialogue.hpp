#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/cohort/types.hpp"
#include "mhfa/gateway/gateway.hpp"
#include "mhfa/report/format.hpp"

namespace mhfa::analysis {

enum class Scenario { physical_activity, nutrition, rest_sleep, mental_health, open };

std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

/// Topic for an "open" session from the local hour:
/// 21:00-04:59 rest_sleep, 05:00-10:59 physical_activity, 11:00-13:59 nutrition,
/// 14:00-17:59 mental_health, 18:00-20:59 nutrition. Other scenarios pass through.
Scenario resolve_scenario(Scenario s, int local_hour);

enum class Tone { supportive, neutral, encouraging };

std::string_view tone_name(Tone t);
/// mood < 3 supportive, mood == 3 neutral, mood > 3 encouraging; no mood is neutral.
Tone tone_for(std::optional<double> mood);
/// Directive text placed in the assistant prompt.
std::string tone_directive(Tone t);

inline constexpr std::string_view kStopToken = "[END_CHAT]";

struct Turn {
    gateway::Role role = gateway::Role::user;
    std::string text;
    std::string timestamp;  ///< RFC 3339 UTC
};

struct DialogueSession {
    std::string session_id;
    std::string participant_id;
    Scenario scenario = Scenario::open;
    std::vector<Turn> turns;
    std::optional<double> mood_context;
    std::optional<cohort::WeeklyBundle> bundle;
    std::optional<cohort::UserPortrait> portrait;
    std::map<std::string, std::string> metadata;
    bool closed = false;
    std::string failure;  ///< set when a simulation stopped on an error

    /// Transcript form; the bundle is referenced, not embedded.
    nlohmann::ordered_json to_json() const;
    static DialogueSession from_json(const nlohmann::json& j);
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct MonitorOptions {
    std::size_t context_turns = 12;
    Clock clock = [] { return std::chrono::system_clock::now(); };
    int utc_offset_minutes = 0;  ///< local time = UTC + offset, for scenario selection
    report::FormatSpec spec = report::default_format_spec();
    gateway::GenParams params;
    std::string persona_prefix;  ///< extra system text placed before the persona template
};

/// System prompt for the assistant. The rendered bundle follows the persona and tone guidance.
std::string assistant_system_prompt(const DialogueSession& session, Scenario resolved, const MonitorOptions& opts);

/// Full message list for the next assistant reply: system prompt, the last
/// `context_turns` turns, then `user_message` if given.
std::vector<gateway::ChatMessage> assemble_monitor_prompt(const DialogueSession& session,
                                                          std::optional<std::string_view> user_message,
                                                          const MonitorOptions& opts);

/// Assistant speaks first. The opener template is chosen from the scenario
/// (resolved by local time for open sessions) and recorded in
/// metadata["opener_template"].
std::string open_session(DialogueSession& session, gateway::Gateway& gw, const MonitorOptions& opts);

/// Appends the user message and the assistant reply. On gateway failure the
/// session is left unchanged and the error propagates.
std::string monitor_turn(DialogueSession& session, std::string_view user_message, gateway::Gateway& gw,
                         const MonitorOptions& opts);

struct AgentConfig {
    gateway::Role role = gateway::Role::assistant;
    std::string persona_prompt;
    std::optional<cohort::WeeklyBundle> bundle;
    std::optional<cohort::UserPortrait> portrait;
    gateway::Gateway* gateway = nullptr;
};

struct SimulationOptions {
    std::string session_id = "sim-0001";
    std::chrono::system_clock::time_point start = std::chrono::sys_days{std::chrono::year{2024} / 1 / 1} + std::chrono::hours(9);
    std::chrono::seconds step{60};
    std::size_t context_turns = 12;
    report::FormatSpec spec = report::default_format_spec();
    gateway::GenParams params;
    std::optional<std::filesystem::path> transcript_path;  ///< JSONL, one line appended per session
};

/// Assistant and user agents alternate, assistant first, until `max_turns`
/// messages or the user emits the stop token. Timestamps come from a
/// deterministic clock so transcripts are reproducible. Agent errors end the
/// loop with `failure` set; the partial transcript is still returned and persisted.
DialogueSession simulate_dialogue(const AgentConfig& assistant, const AgentConfig& user, Scenario scenario,
                                  std::size_t max_turns, const SimulationOptions& opts = {});

}  // namespace mhfa::analysis
