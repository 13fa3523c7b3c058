#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mhfa/gateway/tokenizer.hpp"
#include "mhfa/report/format.hpp"
#include "mhfa/report/refine.hpp"
#include "mhfa/synth/synth.hpp"
#include "support.hpp"

using namespace mhfa;
using namespace mhfa::report;
using gateway::ChatMessage;
using gateway::ChatResult;
using gateway::GenParams;
using gateway::TokenLogprob;
using nlohmann::json;

namespace {

/// Scorer whose per-token logprob depends only on the text, so a test can
/// decide which layouts look more familiar.
gateway::CallbackBackend::ScoreFn scorer(std::function<double(std::string_view)> lp_of) {
    return [lp_of](std::string_view text) {
        std::vector<TokenLogprob> out;
        for (const auto& t : gateway::reference_tokenize(text)) out.push_back({t, lp_of(text)});
        return out;
    };
}

/// Chat stub that critiques generically and answers revise prompts with the
/// next layout from `proposals`.
gateway::CallbackBackend::ChatFn proposer(std::vector<std::string> proposals, std::shared_ptr<int> cursor) {
    return [proposals, cursor](std::span<const ChatMessage> m, const GenParams&) -> ChatResult {
        if (m.back().content.find("Critique:") == std::string::npos) return {"Units repeat on every row.", "stop"};
        const auto& p = proposals[static_cast<std::size_t>(*cursor) % proposals.size()];
        ++*cursor;
        return {"Here is the layout:\n```json\n" + p + "\n```", "stop"};
    };
}

std::string spec_with(const std::function<void(json&)>& edit) {
    json j = default_format_spec().to_json();
    edit(j);
    return j.dump();
}

}  // namespace

TEST(Render, StepsMeanSummaryRow) {
    auto b = test::full_week();
    for (auto& d : b.behavior) d.steps = 1000;
    const auto text = render(b, test::portrait(), default_format_spec());
    EXPECT_NE(text.find("steps mean: 1000"), std::string::npos) << text;
    EXPECT_NE(text.find("coverage: 7/7"), std::string::npos);
}

TEST(Render, EmptyBundleIsHeaderPlusSentinel) {
    cohort::WeeklyBundle b;
    b.participant_id = "P09";
    b.week_start = test::day(2024, 3, 4);
    const auto text = render(b, cohort::UserPortrait{"P09", "", "", {}}, default_format_spec());
    EXPECT_EQ(text, "Behavior of P09, 2024-03-04 to 2024-03-10\nno data\n");
}

TEST(Render, LayoutFollowsSpec) {
    auto b = test::full_week();
    auto spec = default_format_spec();
    spec.column_order = {"sleep_minutes", "steps"};
    spec.units_style = UnitsStyle::inline_units;
    spec.aggregation_rows = {Aggregate::min, Aggregate::max};
    const auto text = render(b, test::portrait(), spec);
    EXPECT_NE(text.find("date|sleep_minutes|steps\n"), std::string::npos) << text;
    EXPECT_NE(text.find("2024-01-01|420 min|8000"), std::string::npos) << text;
    EXPECT_NE(text.find("sleep_minutes min: 390 min; max: 420 min"), std::string::npos) << text;
    EXPECT_NE(text.find("Profile: age 25-34, female, traits calm"), std::string::npos);
    EXPECT_LT(text.find("sleep_minutes"), text.find("|steps"));
}

TEST(Render, AbsentValuesAndColumns) {
    auto b = test::full_week();
    b.behavior[2].steps.reset();
    for (auto& d : b.behavior) d.location_variance.reset();
    auto spec = default_format_spec();
    const auto omitted = render(b, test::portrait(), spec);
    EXPECT_EQ(omitted.find("location_variance"), std::string::npos);
    EXPECT_NE(omitted.find("2024-01-03|-|"), std::string::npos) << omitted;
    EXPECT_NE(omitted.find("coverage: 6/7"), std::string::npos);
    spec.omit_absent = false;
    const auto kept = render(b, test::portrait(), spec);
    EXPECT_NE(kept.find("location_variance"), std::string::npos);
    EXPECT_NE(kept.find("2024-01-03|NA|"), std::string::npos);
}

TEST(Render, DeterministicAcrossCalls) {
    const auto b = test::full_week();
    EXPECT_EQ(render(b, test::portrait(), default_format_spec()), render(b, test::portrait(), default_format_spec()));
}

TEST(Render, RecordsText) {
    cohort::WeeklyBundle b;
    EXPECT_EQ(render_records(b), "no records\n");
    cohort::MentalRecordEntry r;
    r.date = test::day(2024, 1, 3);
    r.set(cohort::IndicatorKind::mood, 2);
    r.set(cohort::IndicatorKind::stress, 4);
    r.set(cohort::IndicatorKind::phq4, 6);
    b.records.push_back(r);
    EXPECT_EQ(render_records(b), "2024-01-03: mood 2, stress 4, phq4 6\n");
}

TEST(FormatSpec, JsonRoundTripAndValidation) {
    const auto spec = default_format_spec();
    EXPECT_EQ(FormatSpec::from_json(json::parse(spec.to_json().dump())), spec);
    auto bad = [&](const std::function<void(json&)>& edit) {
        json j = spec.to_json();
        edit(j);
        return FormatSpec::from_json(j);
    };
    EXPECT_THROW(bad([](json& j) { j["column_order"] = json::array(); }), ValidationError);
    EXPECT_THROW(bad([](json& j) { j["column_order"] = {"steps", "steps"}; }), ValidationError);
    EXPECT_THROW(bad([](json& j) { j["column_order"] = {"heartbeat"}; }), ValidationError);
    EXPECT_THROW(bad([](json& j) { j["units_style"] = "sideways"; }), ValidationError);
    EXPECT_THROW(bad([](json& j) { j["aggregation_rows"] = {"median"}; }), ValidationError);
    EXPECT_THROW(bad([](json& j) { j["header_text"] = "{{nope}}"; }), Error);
    EXPECT_THROW(bad([](json& j) { j.erase("omit_absent"); }), ParseError);
    EXPECT_THROW(FormatSpec::from_json(json::array()), ParseError);
}

TEST(Measure, ClosedFormPerplexity) {
    auto uniform = test::mock_gateway("default_logprob: -0.6931471805599453\nentries: []\n");
    const auto m = measure("sleep was short on three nights", *uniform);
    EXPECT_EQ(m.perplexity, 2.0);
    EXPECT_EQ(m.token_count, gateway::reference_tokenize("sleep was short on three nights").size());

    auto table = test::mock_gateway("- match: \"a b c\"\n  logprobs: [-1, -2, -3]\n");
    EXPECT_NEAR(measure("a b c", *table).perplexity, std::exp(2.0), 1e-12);
    EXPECT_THROW(measure("", *table), ValidationError);
    EXPECT_THROW(perplexity_of({}), Error);
}

TEST(Measure, AgreesWithClosedFormOnRandomTables) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> lp(-8.0, 0.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TokenLogprob> toks(1 + rng() % 40);
        double sum = 0;
        for (auto& t : toks) {
            t.logprob = lp(rng);
            sum += t.logprob;
        }
        const double expected = std::exp(-sum / static_cast<double>(toks.size()));
        EXPECT_NEAR(perplexity_of(toks), expected, 1e-12 * expected);
    }
}

TEST(BuildReport, CarriesMeasurement) {
    auto gw = test::mock_gateway("default_logprob: -0.6931471805599453\nentries: []\n");
    const auto r = build_report(test::full_week(), test::portrait(), default_format_spec(), *gw);
    EXPECT_EQ(r.perplexity, 2.0);
    EXPECT_EQ(r.token_count, gateway::reference_tokenize(r.text).size());
    EXPECT_EQ(r.format_version, 1);
}

TEST(TokenBudget, FullWeekFitsUnderDefaultSpec) {
    const auto spec = default_format_spec();
    EXPECT_LE(gateway::reference_tokenize(render(test::full_week(), test::portrait(), spec)).size(), 512u);
    synth::SynthConfig cfg;
    cfg.n_participants = 10;
    cfg.weeks_per_participant = 2;
    const auto synthetic = synth::generate(cfg);
    for (const auto& b : synthetic.bundles) {
        const auto text = render(b, synthetic.cohort.find(b.participant_id)->portrait, spec);
        EXPECT_LE(gateway::reference_tokenize(text).size(), 512u) << b.participant_id;
    }
}

TEST(SelfRefine, AcceptsLowerPerplexityProposal) {
    const auto inline_spec = spec_with([](json& j) {
        j["version"] = 2;
        j["units_style"] = "inline";
    });
    auto cursor = std::make_shared<int>(0);
    // Unit brackets in the header row read as unfamiliar; inline units score better.
    auto gw = test::callback_gateway(proposer({inline_spec, inline_spec}, cursor),
                                     scorer([](std::string_view t) { return t.find('(') == std::string_view::npos ? -0.5 : -1.0; }));
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = self_refine(test::full_week(), test::portrait(), default_format_spec(), *gw, 5);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
    ASSERT_GE(r.trace.size(), 1u);
    EXPECT_TRUE(r.trace[0].accepted);
    EXPECT_EQ(r.best.units_style, UnitsStyle::inline_units);
    EXPECT_NEAR(r.initial_perplexity, std::exp(1.0), 1e-12);
    EXPECT_NEAR(r.best_perplexity, std::exp(0.5), 1e-12);
    // Re-proposing the same layout cannot improve on it, so the loop halts after two rejections.
    EXPECT_EQ(r.trace.size(), 3u);
    EXPECT_FALSE(r.trace[1].accepted);
    EXPECT_FALSE(r.trace[2].accepted);
}

TEST(SelfRefine, RejectsWorseProposals) {
    const auto longer = spec_with([](json& j) { j["aggregation_rows"] = {"mean", "total", "min", "max", "coverage"}; });
    auto cursor = std::make_shared<int>(0);
    auto gw = test::callback_gateway(proposer({longer}, cursor), scorer([](std::string_view t) {
                                         return -1.0 - static_cast<double>(t.size()) / 1000.0;
                                     }));
    const auto r = self_refine(test::full_week(), test::portrait(), default_format_spec(), *gw, 10);
    EXPECT_EQ(r.best, default_format_spec());
    ASSERT_EQ(r.trace.size(), 2u);
    for (const auto& s : r.trace) {
        EXPECT_FALSE(s.accepted);
        ASSERT_TRUE(s.candidate_perplexity);
        EXPECT_GT(*s.candidate_perplexity, r.best_perplexity);
    }
}

TEST(SelfRefine, UnparseableProposalIsRecordedNotFatal) {
    auto cursor = std::make_shared<int>(0);
    auto gw = test::callback_gateway(proposer({"not json at all", "{\"version\": 2}"}, cursor),
                                     scorer([](std::string_view) { return -1.0; }));
    const auto r = self_refine(test::full_week(), test::portrait(), default_format_spec(), *gw, 4);
    ASSERT_EQ(r.trace.size(), 2u);
    EXPECT_FALSE(r.trace[0].candidate_spec);
    EXPECT_FALSE(r.trace[0].error.empty());
    EXPECT_FALSE(r.trace[1].candidate_spec);
    EXPECT_TRUE(r.trace[1].to_json()["candidate_spec"].is_null());
}

TEST(SelfRefine, AcceptedSequenceStrictlyDecreasesUnderRandomScripts) {
    std::mt19937 rng(21);
    const std::vector<std::string> units = {"inline", "header"};
    const std::vector<std::vector<std::string>> aggs = {{"mean"}, {"mean", "coverage"}, {"min", "max"}, {}};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> proposals;
        for (int i = 0; i < 6; ++i) {
            proposals.push_back(spec_with([&](json& j) {
                j["version"] = 2 + i;
                j["units_style"] = units[rng() % units.size()];
                j["aggregation_rows"] = aggs[rng() % aggs.size()];
            }));
        }
        const double salt = static_cast<double>(rng() % 1000);
        auto cursor = std::make_shared<int>(0);
        auto gw = test::callback_gateway(proposer(proposals, cursor), scorer([salt](std::string_view t) {
                                             const double h = std::fmod(static_cast<double>(t.size()) * 7.3 + salt, 10.0);
                                             return -0.1 - h / 10.0;
                                         }));
        const int max_iters = 6;
        const auto r = self_refine(test::full_week(), test::portrait(), default_format_spec(), *gw, max_iters);
        EXPECT_LE(r.trace.size(), static_cast<std::size_t>(max_iters));
        double best = r.initial_perplexity;
        for (const auto& s : r.trace) {
            if (!s.accepted) continue;
            EXPECT_LT(*s.candidate_perplexity, best);
            best = *s.candidate_perplexity;
        }
        EXPECT_EQ(best, r.best_perplexity);
    }
}

TEST(ExtractJson, FindsBalancedObject) {
    EXPECT_EQ(extract_json_object("text {\"a\": {\"b\": \"}\"}} tail"), "{\"a\": {\"b\": \"}\"}}");
    EXPECT_FALSE(extract_json_object("no braces"));
    EXPECT_FALSE(extract_json_object("{ unterminated"));
}
