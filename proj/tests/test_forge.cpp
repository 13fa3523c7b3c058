#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "mhfa/core/files.hpp"
#include "mhfa/core/hashing.hpp"
#include "mhfa/core/text.hpp"
#include "mhfa/forge/corpus.hpp"
#include "mhfa/forge/sft.hpp"
#include "mhfa/gateway/tokenizer.hpp"
#include "support.hpp"

using namespace mhfa;
using namespace mhfa::forge;
using gateway::ChatMessage;
using gateway::ChatResult;
using gateway::GenParams;
using nlohmann::json;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

std::string repeat(const std::string& s, int n) {
    std::string out;
    for (int i = 0; i < n; ++i) out += s;
    return out;
}

CorpusDoc doc(const std::string& id, std::size_t tokens) {
    CorpusDoc d;
    d.doc_id = id;
    d.source_path = id;
    d.token_count = tokens;
    return d;
}

/// Reply in the three-section counterfactual layout.
std::string cf_reply(const std::string& record, const std::vector<std::string>& clues, const std::string& output) {
    std::string r = "Modified Record:\n" + record + "\nClues:\n";
    for (const auto& c : clues) r += "- " + c + "\n";
    if (!output.empty()) r += "Output:\n" + output + "\n";
    return r;
}

SftPair original_pair(const std::string& id, const std::string& output = "Sleep is short.\nOutcome: 1") {
    SftPair p;
    p.id = id;
    p.instruction = "Analyze the week.";
    p.input = "date|steps\n2024-01-01|1200\n" + std::string(kRecordMarker) + "2024-01-01: mood 2\n";
    p.output = output;
    p.provenance.source = "bundle";
    return p;
}

}  // namespace

TEST(Keywords, BuiltinTableHasThirteenCategories) {
    const auto t = KeywordTable::builtin();
    EXPECT_EQ(t.categories.size(), 13u);
    EXPECT_TRUE(t.has("anxiety"));
    EXPECT_TRUE(t.has("substance_abuse"));
    EXPECT_FALSE(t.has("gardening"));
}

TEST(Keywords, WholeWordCaseInsensitiveCounting) {
    EXPECT_EQ(count_phrase("Anxiety, anxiety; ANXIETY. anxieties", "anxiety"), 3u);
    EXPECT_EQ(count_phrase("Mental health first aid and mental   health", "mental health"), 2u);
    EXPECT_EQ(count_phrase("", "grief"), 0u);
}

TEST(Keywords, RepeatedTermAssignsCategory) {
    test::TempDir dir;
    write(dir / "docs/a.txt", repeat("anxiety ", 10));
    write(dir / "docs/b.txt", "nothing relevant here");
    const auto r = filter_by_keywords(dir / "docs", KeywordTable::builtin());
    ASSERT_EQ(r.matched.size(), 1u);
    EXPECT_EQ(r.matched[0].category, "anxiety");
    EXPECT_EQ(r.matched[0].doc_id, "a.txt");
    ASSERT_EQ(r.unmatched.size(), 1u);
}

TEST(Keywords, FixtureFolderMatchesHandTally) {
    const auto r = filter_by_keywords(test::fixture("corpus/domain"), KeywordTable::builtin());
    std::map<std::string, int> counts;
    for (const auto& d : r.matched) ++counts[*d.category];
    const std::map<std::string, int> expected = {{"anxiety", 5}, {"depression", 4}, {"grief", 3}};
    EXPECT_EQ(counts, expected);
    EXPECT_EQ(r.unmatched.size(), 2u);
    EXPECT_TRUE(r.errors.empty());
}

TEST(Keywords, PriorityOrderBreaksTies) {
    test::TempDir dir;
    write(dir / "d/x.txt", repeat("depression anxiety ", 3));
    const auto r = filter_by_keywords(dir / "d", KeywordTable::builtin());
    ASSERT_EQ(r.matched.size(), 1u);
    EXPECT_EQ(r.matched[0].category, "depression");
}

TEST(Keywords, TableParseErrors) {
    EXPECT_THROW(KeywordTable::parse("no tab here\n"), ParseError);
    EXPECT_THROW(KeywordTable::parse("# only comments\n"), ParseError);
    EXPECT_THROW(KeywordTable::parse("a\tx\na\ty\n"), ParseError);
    EXPECT_EQ(KeywordTable::parse("a\tx; y ;\n").categories[0].terms, (std::vector<std::string>{"x", "y"}));
}

TEST(Clean, EchoingTeacherKeepsText) {
    auto gw = test::callback_gateway([](std::span<const ChatMessage> m, const GenParams&) -> ChatResult {
        const auto& p = m.back().content;
        return {trim(p.substr(p.find("Text:\n") + 6)), "stop"};
    });
    const auto r = clean_doc("Plain paragraph.", *gw);
    EXPECT_TRUE(r.cleaned);
    EXPECT_EQ(r.text, "Plain paragraph.");
    EXPECT_EQ(r.original, "Plain paragraph.");
}

TEST(Clean, ScriptedArtifactRemoval) {
    auto gw = test::callback_gateway([](std::span<const ChatMessage> m, const GenParams&) -> ChatResult {
        std::string t = m.back().content.substr(m.back().content.find("Text:\n") + 6);
        for (auto pos = t.find("~~PAGE 12~~"); pos != std::string::npos; pos = t.find("~~PAGE 12~~")) t.erase(pos, 11);
        return {trim(t), "stop"};
    });
    const auto r = clean_doc("Coping with grief~~PAGE 12~~ takes time.", *gw);
    EXPECT_EQ(r.text.find("~~PAGE"), std::string::npos);
    EXPECT_EQ(r.text, "Coping with grief takes time.");
}

TEST(Clean, EmptyAndFailingDocs) {
    auto gw = test::mock_gateway("- error: capability\n");
    const auto empty = clean_doc("   \n", *gw);
    EXPECT_FALSE(empty.cleaned);
    EXPECT_FALSE(empty.warning.empty());
    EXPECT_EQ(gw->backend_calls(), 0u);
    const auto failed = clean_doc("Some text.", *gw);
    EXPECT_FALSE(failed.cleaned);
    EXPECT_EQ(failed.text, "Some text.");
    EXPECT_NE(failed.warning.find("cleaning failed"), std::string::npos);
}

TEST(Manifest, TwoToOneWithinTolerance) {
    std::vector<CorpusDoc> general, domain;
    std::mt19937 rng(5);
    for (int i = 0; i < 200; ++i) general.push_back(doc("g" + std::to_string(i), 50 + rng() % 100));
    for (int i = 0; i < 100; ++i) domain.push_back(doc("d" + std::to_string(i), 50 + rng() % 100));
    const auto m = build_manifest(domain, general, 2, 1, 42);
    std::uint64_t g = 0, d = 0;
    for (const auto& x : m.general_docs) g += x.token_count;
    for (const auto& x : m.domain_docs) d += x.token_count;
    EXPECT_EQ(m.general_tokens, g);
    EXPECT_EQ(m.domain_tokens, d);
    EXPECT_NEAR(static_cast<double>(g) / static_cast<double>(d), 2.0, 2.0 * 0.05);
    EXPECT_EQ(m.mix_ratio, static_cast<double>(g) / static_cast<double>(d));
    EXPECT_EQ(m.general_docs.size() + m.domain_docs.size() + m.dropped.size(), 300u);
    EXPECT_EQ(m.to_json().dump(), build_manifest(domain, general, 2, 1, 42).to_json().dump());
}

TEST(Manifest, DownsamplesDomainWhenOverRepresented) {
    std::vector<CorpusDoc> general, domain;
    for (int i = 0; i < 20; ++i) general.push_back(doc("g" + std::to_string(i), 100));
    for (int i = 0; i < 30; ++i) domain.push_back(doc("d" + std::to_string(i), 100));
    const auto m = build_manifest(domain, general, 2, 1, 1);
    EXPECT_EQ(m.general_tokens, 2000u);
    EXPECT_EQ(m.domain_tokens, 1000u);
    EXPECT_EQ(m.dropped.size(), 20u);
}

TEST(Manifest, RejectsDegenerateInputs) {
    const std::vector<CorpusDoc> pool = {doc("a", 10)};
    EXPECT_THROW(build_manifest(pool, pool, 1, 0, 1), ValidationError);
    EXPECT_THROW(build_manifest(pool, {}, 2, 1, 1), ValidationError);
    EXPECT_THROW(build_manifest({}, pool, 2, 1, 1), ValidationError);
    // A single huge document cannot be split, so the band is unreachable.
    EXPECT_THROW(build_manifest({doc("d", 1000)}, {doc("g", 10)}, 2, 1, 1), Error);
}

TEST(Manifest, TotalsEqualMemberSumsProperty) {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<CorpusDoc> general, domain;
        const int ng = 5 + static_cast<int>(rng() % 60), nd = 5 + static_cast<int>(rng() % 60);
        for (int i = 0; i < ng; ++i) general.push_back(doc("g" + std::to_string(i), 1 + rng() % 20));
        for (int i = 0; i < nd; ++i) domain.push_back(doc("d" + std::to_string(i), 1 + rng() % 20));
        CorpusManifest m;
        try {
            m = build_manifest(domain, general, 1 + rng() % 3, 1, rng(), 0.1);
        } catch (const ValidationError&) {
            throw;
        } catch (const Error&) {
            continue;
        }
        std::uint64_t g = 0, d = 0;
        for (const auto& x : m.general_docs) g += x.token_count;
        for (const auto& x : m.domain_docs) d += x.token_count;
        EXPECT_EQ(m.general_tokens, g);
        EXPECT_EQ(m.domain_tokens, d);
        EXPECT_NEAR(m.mix_ratio / m.target_ratio, 1.0, 0.1 + 1e-12);
    }
}

TEST(Manifest, TokenCountsComeFromScorer) {
    auto gw = test::mock_gateway("default_logprob: -1\nentries: []\n");
    auto docs = list_general_docs(test::fixture("corpus/general"));
    ASSERT_EQ(docs.size(), 8u);
    count_tokens(docs, *gw);
    for (const auto& d : docs) {
        EXPECT_EQ(d.token_count, gateway::reference_tokenize(read_file(d.source_path)).size());
        EXPECT_FALSE(d.category);
    }
}

TEST(Sft, SeedsProduceScriptedPairs) {
    const auto seeds = read_seeds(test::fixture("seeds/seeds.jsonl"));
    ASSERT_EQ(seeds.size(), 5u);
    auto gw = test::callback_gateway([](std::span<const ChatMessage> m, const GenParams&) -> ChatResult {
        EXPECT_EQ(m.front().role, gateway::Role::system);
        return {"teacher:" + sha256_hex(m.back().content).substr(0, 8), "stop"};
    });
    const auto r = build_sft_pairs(seeds, *gw, "protocol");
    ASSERT_EQ(r.pairs.size(), 5u);
    EXPECT_TRUE(r.skipped.empty());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& p = r.pairs[i];
        EXPECT_EQ(p.id, seed_id(seeds[i]));
        EXPECT_EQ(p.output, "teacher:" + sha256_hex(p.instruction + "\n\n" + p.input).substr(0, 8));
        EXPECT_TRUE(validate_pair_json(p.to_json()).empty());
    }
    EXPECT_EQ(r.pairs[0].provenance.source, "imhi");
    EXPECT_EQ(r.pairs[4].provenance.source, "cpsycoun");
    EXPECT_TRUE(validate_sft_jsonl(to_jsonl(r.pairs)).empty());
}

TEST(Sft, MultiTurnSeedEmbedsTranscript) {
    const auto seeds = read_seeds(test::fixture("seeds/seeds.jsonl"));
    const auto [instruction, input] = seed_prompt(seeds[4]);
    EXPECT_NE(input.find("client: I lost my job last month.\n"
                         "counselor: That sounds hard. How have you been sleeping?\n"
                         "client: Barely, maybe four hours.\n"),
              std::string::npos);
    EXPECT_NE(input.find("Client reports low mood after job loss."), std::string::npos);
}

TEST(Sft, DuplicateIdsAndTeacherFailures) {
    auto gw = test::mock_gateway("- match: sleep\n  error: capability\n- reply: fine\n");
    const std::vector<SeedRecord> dup = {ImhiSeed{"x", "a", ""}, ImhiSeed{"x", "b", ""}};
    try {
        build_sft_pairs(dup, *gw, "");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
    }
    const std::vector<SeedRecord> seeds = {ImhiSeed{"a", "cannot sleep", ""}, ImhiSeed{"b", "ok day", ""}};
    const auto r = build_sft_pairs(seeds, *gw, "");
    ASSERT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.pairs[0].id, "b");
    ASSERT_EQ(r.skipped.size(), 1u);
    EXPECT_EQ(r.skipped[0].id, "a");
}

TEST(Sft, BundlePairsSplitAtRecordMarker) {
    auto gw = test::mock_gateway("- reply: \"Phase 5 - Outcome\\nOutcome: 0\"\n");
    auto b = test::full_week("P02", 4, 1);
    const auto r = build_bundle_pairs({b}, {{"P02", test::portrait("P02")}}, *gw, report::default_format_spec());
    ASSERT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.pairs[0].id, "P02-w1");
    const auto [behavior, record] = split_input(r.pairs[0].input);
    EXPECT_EQ(behavior, report::render(b, test::portrait("P02"), report::default_format_spec()) + "\n");
    EXPECT_EQ(record, report::render_records(b));
    EXPECT_THROW(build_bundle_pairs({b, b}, {}, *gw, report::default_format_spec()), ValidationError);
}

TEST(CfAugment, ParsesFigureStylePayload) {
    const auto r = parse_cf_response(
        "**Modified Record:** I've been doing fine, just a bit busy.\n"
        "**Clues:**\n1. Says fine despite four hours of sleep.\n2) Avoids naming stress\n"
        "**Output:** Analysis.\nOutcome: 1\n");
    EXPECT_EQ(r.modified_record, "I've been doing fine, just a bit busy.");
    EXPECT_EQ(r.clues, (std::vector<std::string>{"Says fine despite four hours of sleep.", "Avoids naming stress"}));
    EXPECT_EQ(r.output, "Analysis.\nOutcome: 1");
    EXPECT_THROW(parse_cf_response("Modified Record:\nx\nOutput:\ny\n"), ParseError);
    EXPECT_THROW(parse_cf_response("Clues:\n- a\n"), ParseError);
}

TEST(CfAugment, StigmaAugmentationKeepsBehavior) {
    auto gw = test::mock_gateway("- reply: |\n    Modified Record:\n    2024-01-01: mood 4\n    Clues:\n"
                                 "    - mood reported as good while steps collapsed\n    Output:\n"
                                 "    The stated mood conflicts with activity.\n    Outcome: 1\n");
    const auto orig = original_pair("p1");
    const auto out = augment_counterfactual(orig, synth::CfLabel::stigma, *gw);
    ASSERT_TRUE(out.pair) << out.rejection;
    const auto& p = *out.pair;
    EXPECT_EQ(p.cf_label, synth::CfLabel::stigma);
    ASSERT_TRUE(p.clues);
    EXPECT_FALSE(p.clues->empty());
    EXPECT_EQ(p.id, "p1-cf-stigma");
    EXPECT_EQ(split_input(p.input).first, split_input(orig.input).first);
    EXPECT_EQ(split_input(p.input).second, "2024-01-01: mood 4");
    EXPECT_TRUE(validate_pair_json(p.to_json()).empty());
    EXPECT_THROW(augment_counterfactual(p, synth::CfLabel::stigma, *gw), ValidationError);
    EXPECT_THROW(synth::parse_cf_label("denial"), ValidationError);
}

TEST(CfAugment, OutcomeIsPreservedOrAppended) {
    auto keep = test::mock_gateway("- reply: \"Modified Record:\\nfine\\nClues:\\n- c\\nOutput:\\nno verdict\\n\"\n");
    const auto appended = augment_counterfactual(original_pair("p"), synth::CfLabel::lack_of_awareness, *keep);
    ASSERT_TRUE(appended.pair);
    EXPECT_NE(appended.pair->output.find("Outcome: 1"), std::string::npos);

    auto flip = test::mock_gateway("- reply: \"Modified Record:\\nfine\\nClues:\\n- c\\nOutput:\\nOutcome: 0\\n\"\n");
    const auto flipped = augment_counterfactual(original_pair("p"), synth::CfLabel::stigma, *flip);
    EXPECT_FALSE(flipped.pair);
    EXPECT_NE(flipped.rejection.find("changes the outcome"), std::string::npos);

    auto missing = test::mock_gateway("- reply: \"Modified Record:\\nfine\\nOutput:\\nOutcome: 1\\n\"\n");
    const auto rejected = augment_counterfactual(original_pair("p"), synth::CfLabel::stigma, *missing);
    EXPECT_FALSE(rejected.pair);
    EXPECT_NE(rejected.rejection.find("Clues"), std::string::npos);
}

TEST(CfAugment, BehaviorBlockHashUnchangedProperty) {
    std::mt19937 rng(8);
    auto gw = test::callback_gateway([&](std::span<const ChatMessage>, const GenParams&) -> ChatResult {
        return {cf_reply("2024-01-0" + std::to_string(1 + rng() % 7) + ": mood " + std::to_string(3 + rng() % 3),
                         {"clue " + std::to_string(rng() % 100)}, ""),
                "stop"};
    });
    for (int i = 0; i < 100; ++i) {
        auto orig = original_pair("q" + std::to_string(i));
        orig.input = "date|steps\n2024-01-01|" + std::to_string(rng() % 20000) + "\n" + std::string(kRecordMarker) + "x\n";
        const auto label = synth::kCfLabels[static_cast<std::size_t>(i) % 3];
        const auto out = augment_counterfactual(orig, label, *gw);
        ASSERT_TRUE(out.pair);
        EXPECT_EQ(sha256_hex(split_input(out.pair->input).first), sha256_hex(split_input(orig.input).first));
        EXPECT_EQ(out.pair->cf_label.has_value(), out.pair->clues.has_value());
    }
}

TEST(Mix, TenOriginalsFiveCounterfactuals) {
    std::vector<SftPair> orig, cf;
    for (int i = 0; i < 10; ++i) orig.push_back(original_pair("o" + std::to_string(i)));
    for (int i = 0; i < 5; ++i) {
        auto p = original_pair("c" + std::to_string(i));
        p.cf_label = synth::kCfLabels[static_cast<std::size_t>(i) % 3];
        p.clues = std::vector<std::string>{"clue"};
        cf.push_back(p);
    }
    const auto m = mix_sft(orig, cf, 3);
    ASSERT_EQ(m.pairs.size(), 15u);
    EXPECT_EQ(m.counts.at("none"), 10u);
    EXPECT_EQ(m.counts.at("personality_traits") + m.counts.at("stigma") + m.counts.at("lack_of_awareness"), 5u);
    EXPECT_EQ(m.counts.at("personality_traits"), 2u);
    const std::string a = to_jsonl(m.pairs);
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 15);
    EXPECT_EQ(a, to_jsonl(mix_sft(orig, cf, 3).pairs));
    EXPECT_TRUE(validate_sft_jsonl(a).empty());

    const auto only = mix_sft(orig, {}, 3);
    auto sorted_ids = [](std::vector<SftPair> v) {
        std::vector<std::string> ids;
        for (const auto& p : v) ids.push_back(p.id);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    EXPECT_EQ(sorted_ids(only.pairs), sorted_ids(orig));
}

TEST(Mix, PlanIsBalancedAndSeeded) {
    const auto plan = plan_counterfactuals(30, 9);
    ASSERT_EQ(plan.size(), 15u);
    std::map<synth::CfLabel, int> per;
    for (const auto& [idx, label] : plan) {
        EXPECT_LT(idx, 30u);
        ++per[label];
    }
    for (auto l : synth::kCfLabels) EXPECT_EQ(per[l], 5);
    EXPECT_EQ(plan, plan_counterfactuals(30, 9));
    EXPECT_THROW(plan_counterfactuals(3, 1, 1.5), ValidationError);
}

TEST(Validator, FlagsSchemaViolations) {
    const std::string content =
        "not json\n"
        "{\"id\":\"a\",\"instruction\":\"i\",\"input\":\"\",\"output\":\"o\",\"cf_label\":\"stigma\",\"clues\":null,\"provenance\":{}}\n"
        "{\"id\":\"b\",\"instruction\":\"i\",\"input\":\"\",\"output\":\"o\",\"cf_label\":null,\"clues\":null,\"provenance\":{}}\n"
        "{\"id\":\"b\",\"instruction\":\"i\",\"input\":\"\",\"output\":\"o\",\"cf_label\":null,\"clues\":null,\"provenance\":{}}\n";
    const auto v = validate_sft_jsonl(content);
    std::set<std::size_t> lines;
    for (const auto& x : v) lines.insert(x.line);
    EXPECT_EQ(lines, (std::set<std::size_t>{1, 2, 4}));
}
