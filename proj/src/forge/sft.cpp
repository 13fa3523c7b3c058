#include "mhfa/forge/sft.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mhfa/analysis/analysis.hpp"
#include "mhfa/analysis/outcome.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/parallel.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::forge {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string_view label_description(synth::CfLabel label) {
    switch (label) {
        case synth::CfLabel::personality_traits:
            return "a reserved, self-reliant temperament that leads the person to play down their difficulties";
        case synth::CfLabel::stigma:
            return "fear of being judged or labeled, which leads the person to conceal negative feelings";
        case synth::CfLabel::lack_of_awareness:
            return "limited insight into their own symptoms, so the person does not recognize or report them";
    }
    return "";
}

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ParseError(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

}  // namespace

ordered_json SftPair::to_json() const {
    ordered_json j;
    j["id"] = id;
    j["instruction"] = instruction;
    j["input"] = input;
    j["output"] = output;
    j["cf_label"] = cf_label ? ordered_json(synth::cf_label_name(*cf_label)) : ordered_json(nullptr);
    j["clues"] = clues ? ordered_json(*clues) : ordered_json(nullptr);
    j["provenance"] = {{"source", provenance.source},
                       {"teacher", provenance.teacher},
                       {"prompt_hash", provenance.prompt_hash}};
    return j;
}

SftPair SftPair::from_json(const json& j) {
    const auto problems = validate_pair_json(j);
    if (!problems.empty()) throw ParseError("invalid SFT pair: " + problems.front());
    SftPair p;
    p.id = j["id"].get<std::string>();
    p.instruction = j["instruction"].get<std::string>();
    p.input = j["input"].get<std::string>();
    p.output = j["output"].get<std::string>();
    if (!j["cf_label"].is_null()) p.cf_label = synth::parse_cf_label(j["cf_label"].get<std::string>());
    if (!j["clues"].is_null()) p.clues = j["clues"].get<std::vector<std::string>>();
    const auto& prov = j["provenance"];
    p.provenance.source = prov.value("source", "");
    p.provenance.teacher = prov.value("teacher", "");
    p.provenance.prompt_hash = prov.value("prompt_hash", "");
    return p;
}

std::vector<std::string> validate_pair_json(const json& j) {
    std::vector<std::string> out;
    if (!j.is_object()) return {"pair is not a JSON object"};
    for (const char* key : {"id", "instruction", "output"}) {
        if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
            out.push_back(std::string("'") + key + "' must be a non-empty string");
        }
    }
    if (!j.contains("input") || !j["input"].is_string()) out.push_back("'input' must be a string");
    const bool has_label = j.contains("cf_label") && !j["cf_label"].is_null();
    const bool has_clues = j.contains("clues") && !j["clues"].is_null();
    if (!j.contains("cf_label")) out.push_back("'cf_label' key missing");
    if (!j.contains("clues")) out.push_back("'clues' key missing");
    if (has_label) {
        try {
            if (!j["cf_label"].is_string()) throw ValidationError("cf_label", "not a string");
            synth::parse_cf_label(j["cf_label"].get<std::string>());
        } catch (const Error&) {
            out.push_back("'cf_label' must be personality_traits, stigma or lack_of_awareness");
        }
    }
    if (has_clues) {
        const auto& c = j["clues"];
        if (!c.is_array() || c.empty() ||
            !std::all_of(c.begin(), c.end(), [](const json& x) { return x.is_string() && !x.get<std::string>().empty(); })) {
            out.push_back("'clues' must be a non-empty list of non-empty strings");
        }
    }
    if (has_label != has_clues) out.push_back("'cf_label' and 'clues' must be present together");
    if (!j.contains("provenance") || !j["provenance"].is_object()) out.push_back("'provenance' must be an object");
    return out;
}

std::string seed_id(const SeedRecord& seed) {
    return std::visit([](const auto& s) { return s.id; }, seed);
}

SeedRecord seed_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("seed must be a JSON object");
    if (j.contains("turns")) {
        CpsycounSeed s;
        s.id = require_string(j, "id");
        s.report = require_string(j, "report");
        if (!j["turns"].is_array()) throw ParseError("'turns' must be a list");
        for (const auto& t : j["turns"]) {
            s.turns.push_back({require_string(t, "role"), require_string(t, "text")});
        }
        if (s.turns.empty()) throw ParseError("seed " + s.id + " has no turns");
        return s;
    }
    ImhiSeed s;
    s.id = require_string(j, "id");
    s.post_text = require_string(j, "post_text");
    s.condition_label = j.contains("condition_label") && j["condition_label"].is_string()
                            ? j["condition_label"].get<std::string>()
                            : std::string();
    return s;
}

std::vector<SeedRecord> read_seeds(const std::filesystem::path& path) {
    std::vector<SeedRecord> seeds;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            seeds.push_back(seed_from_json(j));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": seed " + std::to_string(line) + ": " + e.what());
        }
    }
    return seeds;
}

std::pair<std::string, std::string> seed_prompt(const SeedRecord& seed) {
    if (const auto* s = std::get_if<ImhiSeed>(&seed)) {
        const std::string condition = s->condition_label.empty() ? "a mental health condition" : s->condition_label;
        return {trim(fill_template(templates::get("sft_imhi_instruction.txt"), {{"condition", condition}})),
                s->post_text};
    }
    const auto& c = std::get<CpsycounSeed>(seed);
    std::string input = "Case report:\n" + c.report + "\n\nConversation so far:\n";
    for (const auto& t : c.turns) input += t.role + ": " + t.text + "\n";
    return {trim(templates::get("sft_cpsycoun_instruction.txt")), input};
}

SftBuildResult build_sft_pairs(const std::vector<SeedRecord>& seeds, gateway::Gateway& teacher,
                               const std::string& protocol_prompt, const gateway::GenParams& params) {
    std::set<std::string> ids;
    for (const auto& s : seeds) {
        const auto id = seed_id(s);
        if (id.empty()) throw ValidationError("id", "seed id must not be empty");
        if (!ids.insert(id).second) throw ValidationError("id", "duplicate seed id '" + id + "'");
    }
    std::vector<std::optional<SftPair>> slots(seeds.size());
    std::vector<std::string> failures(seeds.size());
    parallel_for(seeds.size(), static_cast<std::size_t>(teacher.options().inflight_cap), [&](std::size_t i) {
        auto [instruction, input] = seed_prompt(seeds[i]);
        std::vector<gateway::ChatMessage> msgs;
        if (!protocol_prompt.empty()) msgs.push_back({gateway::Role::system, protocol_prompt});
        msgs.push_back({gateway::Role::user, instruction + "\n\n" + input});
        try {
            const auto reply = teacher.chat(msgs, params);
            SftPair p;
            p.id = seed_id(seeds[i]);
            p.instruction = std::move(instruction);
            p.input = std::move(input);
            p.output = reply.text;
            p.provenance.source = std::holds_alternative<ImhiSeed>(seeds[i]) ? "imhi" : "cpsycoun";
            p.provenance.teacher = teacher.backend_id();
            p.provenance.prompt_hash = gateway::prompt_hash(msgs);
            if (p.output.empty()) {
                failures[i] = "teacher returned an empty reply";
            } else {
                slots[i] = std::move(p);
            }
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    SftBuildResult r;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (slots[i]) {
            r.pairs.push_back(std::move(*slots[i]));
        } else {
            r.skipped.push_back({seed_id(seeds[i]), failures[i]});
        }
    }
    return r;
}

SftBuildResult build_bundle_pairs(const std::vector<cohort::WeeklyBundle>& bundles,
                                  const std::map<std::string, cohort::UserPortrait>& portraits,
                                  gateway::Gateway& teacher, const report::FormatSpec& spec,
                                  const gateway::GenParams& params) {
    auto id_of = [](const cohort::WeeklyBundle& b) { return b.participant_id + "-w" + std::to_string(b.week_index); };
    std::set<std::string> ids;
    for (const auto& b : bundles) {
        if (!ids.insert(id_of(b)).second) throw ValidationError("id", "duplicate bundle '" + id_of(b) + "'");
    }
    std::vector<std::optional<SftPair>> slots(bundles.size());
    std::vector<std::string> failures(bundles.size());
    parallel_for(bundles.size(), static_cast<std::size_t>(teacher.options().inflight_cap), [&](std::size_t i) {
        const auto& b = bundles[i];
        cohort::UserPortrait portrait;
        portrait.participant_id = b.participant_id;
        if (const auto it = portraits.find(b.participant_id); it != portraits.end()) portrait = it->second;
        const std::vector<gateway::ChatMessage> msgs = {
            {gateway::Role::user, analysis::analysis_prompt(b, portrait, spec)}};
        try {
            SftPair p;
            p.id = id_of(b);
            p.instruction = trim(templates::get("sft_bundle_instruction.txt"));
            p.input = report::render(b, portrait, spec) + "\n" + std::string(kRecordMarker) + report::render_records(b);
            p.output = teacher.chat(msgs, params).text;
            p.provenance.source = "bundle";
            p.provenance.teacher = teacher.backend_id();
            p.provenance.prompt_hash = gateway::prompt_hash(msgs);
            if (p.output.empty()) {
                failures[i] = "teacher returned an empty reply";
            } else {
                slots[i] = std::move(p);
            }
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    SftBuildResult r;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        if (slots[i]) {
            r.pairs.push_back(std::move(*slots[i]));
        } else {
            r.skipped.push_back({id_of(bundles[i]), failures[i]});
        }
    }
    return r;
}

std::pair<std::string, std::string> split_input(std::string_view input) {
    const auto pos = input.find(kRecordMarker);
    if (pos == std::string_view::npos) return {"", std::string(input)};
    return {std::string(input.substr(0, pos)), std::string(input.substr(pos + kRecordMarker.size()))};
}

CfResponse parse_cf_response(std::string_view reply) {
    enum class Sec { none, record, clues, output };
    Sec sec = Sec::none;
    std::string record, clues_text, output;
    bool saw_record = false, saw_clues = false;
    for (const auto& raw : split(reply, '\n')) {
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string probe = trim(line);
        while (!probe.empty() && (probe[0] == '#' || probe[0] == '*')) probe.erase(0, 1);
        probe = trim(probe);
        std::string rest;
        Sec next = Sec::none;
        for (auto [name, s] : {std::pair{"modified record", Sec::record}, {"clues", Sec::clues}, {"output", Sec::output}}) {
            const std::string_view n = name;
            if (starts_with_ci(probe, n)) {
                auto after = probe.substr(n.size());
                while (!after.empty() && after[0] == '*') after.erase(0, 1);
                if (!after.empty() && after[0] == ':') {
                    rest = after.substr(1);
                    while (!rest.empty() && rest[0] == '*') rest.erase(0, 1);
                    rest = trim(rest);
                    next = s;
                }
                break;
            }
        }
        if (next != Sec::none) {
            sec = next;
            if (sec == Sec::record) saw_record = true;
            if (sec == Sec::clues) saw_clues = true;
            if (rest.empty()) continue;
            line = rest;
        }
        std::string* target = sec == Sec::record ? &record : sec == Sec::clues ? &clues_text : sec == Sec::output ? &output : nullptr;
        if (!target) continue;
        *target += line;
        *target += '\n';
    }
    CfResponse r;
    r.modified_record = trim(record);
    r.output = trim(output);
    for (const auto& raw : split(clues_text, '\n')) {
        std::string c = trim(raw);
        if (c.empty()) continue;
        if (c[0] == '-' || c[0] == '*') {
            c = trim(c.substr(1));
        } else {
            std::size_t k = 0;
            while (k < c.size() && std::isdigit(static_cast<unsigned char>(c[k]))) ++k;
            if (k > 0 && k < c.size() && (c[k] == '.' || c[k] == ')')) c = trim(c.substr(k + 1));
        }
        if (!c.empty()) r.clues.push_back(c);
    }
    if (!saw_record || r.modified_record.empty()) throw ParseError("reply has no 'Modified Record:' section");
    if (!saw_clues || r.clues.empty()) throw ParseError("reply has no 'Clues:' section");
    return r;
}

AugmentOutcome augment_counterfactual(const SftPair& pair, synth::CfLabel label, gateway::Gateway& teacher,
                                      const gateway::GenParams& params) {
    if (pair.cf_label) throw ValidationError("cf_label", "pair " + pair.id + " is already counterfactual");
    const bool has_marker = pair.input.find(kRecordMarker) != std::string::npos;
    const auto [behavior, record] = split_input(pair.input);
    const std::vector<gateway::ChatMessage> msgs = {
        {gateway::Role::user, fill_template(templates::get("counterfactual.txt"),
                                            {{"label", std::string(synth::cf_label_name(label))},
                                             {"label_description", std::string(label_description(label))},
                                             {"record", record},
                                             {"output", pair.output}})}};
    AugmentOutcome out;
    CfResponse resp;
    try {
        resp = parse_cf_response(teacher.chat(msgs, params).text);
    } catch (const Error& e) {
        out.rejection = e.what();
        return out;
    }

    std::string output = resp.output.empty() ? pair.output : resp.output;
    std::optional<int> original_outcome;
    try {
        original_outcome = analysis::parse_outcome(pair.output);
    } catch (const ParseError&) {
    }
    if (original_outcome) {
        std::optional<int> new_outcome;
        try {
            new_outcome = analysis::parse_outcome(output);
        } catch (const ParseError&) {
        }
        if (!new_outcome) {
            output += "\n\nOutcome: " + std::to_string(*original_outcome);
        } else if (*new_outcome != *original_outcome) {
            out.rejection = "counterfactual output changes the outcome from " + std::to_string(*original_outcome) +
                            " to " + std::to_string(*new_outcome);
            return out;
        }
    }

    SftPair p;
    p.id = pair.id + "-cf-" + std::string(synth::cf_label_name(label));
    p.instruction = pair.instruction;
    p.input = has_marker ? behavior + std::string(kRecordMarker) + resp.modified_record : resp.modified_record;
    p.output = std::move(output);
    p.cf_label = label;
    p.clues = std::move(resp.clues);
    p.provenance.source = "counterfactual";
    p.provenance.teacher = teacher.backend_id();
    p.provenance.prompt_hash = gateway::prompt_hash(msgs);
    out.pair = std::move(p);
    return out;
}

std::vector<std::pair<std::size_t, synth::CfLabel>> plan_counterfactuals(std::size_t n_pairs, std::uint64_t seed,
                                                                         double cf_fraction) {
    if (!(cf_fraction >= 0 && cf_fraction <= 1)) throw ValidationError("cf_fraction", "cf_fraction must be in [0, 1]");
    std::vector<std::size_t> order(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n_pairs) * cf_fraction));
    order.resize(k);
    std::sort(order.begin(), order.end());
    std::vector<std::pair<std::size_t, synth::CfLabel>> plan;
    for (std::size_t i = 0; i < order.size(); ++i) plan.push_back({order[i], synth::kCfLabels[i % synth::kCfLabels.size()]});
    return plan;
}

MixResult mix_sft(const std::vector<SftPair>& original, const std::vector<SftPair>& cf, std::uint64_t shuffle_seed) {
    MixResult r;
    r.pairs = original;
    r.pairs.insert(r.pairs.end(), cf.begin(), cf.end());
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(r.pairs.begin(), r.pairs.end(), rng);
    r.counts["none"] = 0;
    for (auto l : synth::kCfLabels) r.counts[std::string(synth::cf_label_name(l))] = 0;
    for (const auto& p : r.pairs) ++r.counts[p.cf_label ? std::string(synth::cf_label_name(*p.cf_label)) : "none"];
    return r;
}

std::string to_jsonl(const std::vector<SftPair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += p.to_json().dump();
        out += '\n';
    }
    return out;
}

std::vector<Violation> validate_sft_jsonl(std::string_view content) {
    std::vector<Violation> out;
    std::set<std::string> ids;
    std::size_t lineno = 0;
    for (const auto& line : split(content, '\n')) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            out.push_back({lineno, std::string("not JSON: ") + e.what()});
            continue;
        }
        for (auto& m : validate_pair_json(j)) out.push_back({lineno, std::move(m)});
        if (j.is_object() && j.contains("id") && j["id"].is_string() && !ids.insert(j["id"].get<std::string>()).second) {
            out.push_back({lineno, "duplicate id '" + j["id"].get<std::string>() + "'"});
        }
    }
    return out;
}

}  // namespace mhfa::forge
