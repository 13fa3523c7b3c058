#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/gateway/gateway.hpp"
#include "mhfa/report/format.hpp"
#include "mhfa/synth/counterfactual.hpp"

namespace mhfa::forge {

struct Provenance {
    std::string source;  ///< "imhi", "cpsycoun", "bundle" or "counterfactual"
    std::string teacher;
    std::string prompt_hash;
};

struct SftPair {
    std::string id;
    std::string instruction;
    std::string input;
    std::string output;
    std::optional<synth::CfLabel> cf_label;
    std::optional<std::vector<std::string>> clues;
    Provenance provenance;

    nlohmann::ordered_json to_json() const;
    static SftPair from_json(const nlohmann::json& j);
};

/// Schema violations of one serialized pair; empty when valid.
std::vector<std::string> validate_pair_json(const nlohmann::json& j);

struct ImhiSeed {
    std::string id;
    std::string post_text;
    std::string condition_label;
};

struct DialogueTurn {
    std::string role;
    std::string text;
};

struct CpsycounSeed {
    std::string id;
    std::string report;
    std::vector<DialogueTurn> turns;
};

using SeedRecord = std::variant<ImhiSeed, CpsycounSeed>;

std::string seed_id(const SeedRecord& seed);
/// Reads a JSONL file of seeds; each line's schema is detected from its keys.
std::vector<SeedRecord> read_seeds(const std::filesystem::path& path);
SeedRecord seed_from_json(const nlohmann::json& j);

/// Instruction and input for a seed, before the teacher is asked.
std::pair<std::string, std::string> seed_prompt(const SeedRecord& seed);

struct SkippedSeed {
    std::string id;
    std::string reason;
};

struct SftBuildResult {
    std::vector<SftPair> pairs;
    std::vector<SkippedSeed> skipped;
};

/// One pair per seed: the teacher receives `protocol_prompt` as the system
/// message and the seed's instruction + input as the user message; its reply
/// is stored verbatim. Calls run concurrently; result order follows the seeds.
/// Duplicate seed ids are rejected up front with a ValidationError naming the id.
SftBuildResult build_sft_pairs(const std::vector<SeedRecord>& seeds, gateway::Gateway& teacher,
                               const std::string& protocol_prompt, const gateway::GenParams& params = {});

/// One pair per weekly bundle: input is the rendered behavior table, then
/// kRecordMarker, then the rendered mental record; output is the teacher's
/// reply to the five-phase analysis prompt. Ids are "<participant>-w<week>".
SftBuildResult build_bundle_pairs(const std::vector<cohort::WeeklyBundle>& bundles,
                                  const std::map<std::string, cohort::UserPortrait>& portraits,
                                  gateway::Gateway& teacher, const report::FormatSpec& spec,
                                  const gateway::GenParams& params = {});

/// Marks the start of the mental-record part of a pair input. Text before it
/// (the behavior block) is carried over untouched by augmentation.
inline constexpr std::string_view kRecordMarker = "Mental record:\n";

/// Splits a pair input into (behavior block, record text).
std::pair<std::string, std::string> split_input(std::string_view input);

struct CfResponse {
    std::string modified_record;
    std::vector<std::string> clues;
    std::string output;
};

/// Parses the "Modified Record:", "Clues:", "Output:" sections of a teacher reply.
/// Throws ParseError when the record or clue section is missing or empty.
CfResponse parse_cf_response(std::string_view reply);

struct AugmentOutcome {
    std::optional<SftPair> pair;
    std::string rejection;  ///< set when `pair` is empty
};

/// Asks the teacher for a counterfactual version of `pair` under `label`.
/// The behavior block of the input is kept byte for byte; only the record is
/// replaced. When the original output states "Outcome: G" the new output must
/// state the same G. Throws ValidationError when `pair` already has a label.
AugmentOutcome augment_counterfactual(const SftPair& pair, synth::CfLabel label, gateway::Gateway& teacher,
                                      const gateway::GenParams& params = {});

/// Chooses which originals to augment and with which label: a seeded subset of
/// round(n * cf_fraction) pairs, labels assigned round-robin in catalog order.
std::vector<std::pair<std::size_t, synth::CfLabel>> plan_counterfactuals(std::size_t n_pairs, std::uint64_t seed,
                                                                         double cf_fraction = 0.5);

struct MixResult {
    std::vector<SftPair> pairs;
    std::map<std::string, std::size_t> counts;  ///< "none" plus one entry per label present
};

/// Concatenates and shuffles deterministically.
MixResult mix_sft(const std::vector<SftPair>& original, const std::vector<SftPair>& cf, std::uint64_t shuffle_seed);

std::string to_jsonl(const std::vector<SftPair>& pairs);

struct Violation {
    std::size_t line = 0;
    std::string message;
};

/// Checks every line of a forge JSONL output.
std::vector<Violation> validate_sft_jsonl(std::string_view content);

}  // namespace mhfa::forge
