#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mhfa/eval/evaluations.hpp"
#include "mhfa/eval/metrics.hpp"
#include "mhfa/eval/output.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mhfa;
using namespace mhfa::eval;
using analysis::DialogueSession;
using analysis::Scenario;
using gateway::Role;

namespace {

DialogueSession said(std::vector<std::string> assistant_lines, std::vector<std::string> user_lines = {}) {
    DialogueSession s;
    s.session_id = "s1";
    s.participant_id = "P01";
    for (auto& u : user_lines) s.turns.push_back({Role::user, std::move(u), "2024-01-08T09:00:00Z"});
    for (auto& a : assistant_lines) s.turns.push_back({Role::assistant, std::move(a), "2024-01-08T09:00:01Z"});
    return s;
}

}  // namespace

TEST(Metrics, HandFixture) {
    const std::vector<int> labels = {1, 0, 1, 1, 0};
    const std::vector<int> preds = {1, 0, 0, 1, 1};
    const auto m = classification_metrics(preds, labels);
    EXPECT_EQ(m.tp, 2u);
    EXPECT_EQ(m.fp, 1u);
    EXPECT_EQ(m.tn, 1u);
    EXPECT_EQ(m.fn, 1u);
    EXPECT_DOUBLE_EQ(*m.accuracy, 0.6);
    EXPECT_DOUBLE_EQ(*m.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*m.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*m.f1, 2.0 / 3.0);
}

TEST(Metrics, PerfectAndUndefined) {
    const std::vector<int> y = {1, 0, 1, 0};
    const auto perfect = classification_metrics(y, y);
    EXPECT_DOUBLE_EQ(*perfect.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(*perfect.f1, 1.0);

    const std::vector<int> zeros = {0, 0, 0, 0};
    const auto none = classification_metrics(zeros, y);
    EXPECT_FALSE(none.precision.has_value());
    EXPECT_DOUBLE_EQ(*none.recall, 0.0);
    EXPECT_FALSE(none.f1.has_value());
    EXPECT_EQ(none.to_json()["precision"], "undefined");
}

TEST(Metrics, RejectsBadInput) {
    const std::vector<int> a = {1, 0}, b = {1}, c = {2, 0}, e;
    EXPECT_THROW(classification_metrics(a, b), ValidationError);
    EXPECT_THROW(classification_metrics(c, a), ValidationError);
    EXPECT_THROW(classification_metrics(e, e), ValidationError);
}

TEST(Metrics, F1From) {
    EXPECT_DOUBLE_EQ(*f1_from(0.5, 1.0), 2.0 / 3.0);
    EXPECT_FALSE(f1_from(0, 0).has_value());
}

TEST(Metrics, AgreesWithOracleOnRandomInputs) {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 40);
        std::vector<int> p(n), y(n);
        for (int i = 0; i < n; ++i) {
            p[i] = static_cast<int>(rng() % 2);
            y[i] = static_cast<int>(rng() % 2);
        }
        const auto m = classification_metrics(p, y);
        const auto o = oracle::confusion(p, y);
        ASSERT_NEAR(*m.accuracy, o.accuracy, 1e-12) << trial;
        ASSERT_EQ(m.precision.has_value(), o.precision.has_value()) << trial;
        if (o.precision) ASSERT_NEAR(*m.precision, *o.precision, 1e-12);
        ASSERT_EQ(m.recall.has_value(), o.recall.has_value()) << trial;
        if (o.recall) ASSERT_NEAR(*m.recall, *o.recall, 1e-12);
        ASSERT_EQ(m.f1.has_value(), o.f1.has_value()) << trial;
        if (o.f1) ASSERT_NEAR(*m.f1, *o.f1, 1e-12);
    }
}

TEST(Pearson, HandValues) {
    const std::vector<double> x = {1, 2, 3, 4};
    EXPECT_NEAR(pearson(x, std::vector<double>{2, 4, 6, 8}), 1.0, 1e-12);
    EXPECT_NEAR(pearson(x, std::vector<double>{-1, -2, -3, -4}), -1.0, 1e-12);
    EXPECT_NEAR(pearson(x, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-12);
}

TEST(Pearson, UndefinedAndInvalid) {
    const std::vector<double> x = {1, 2, 3}, flat = {2, 2, 2};
    EXPECT_THROW(pearson(x, flat), UndefinedMetricError);
    EXPECT_FALSE(try_pearson(x, flat).has_value());
    EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), ValidationError);
    EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
}

TEST(Pearson, AgreesWithOracleOnRandomInputs) {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 30;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = g(rng);
            y[i] = 0.5 * x[i] + g(rng);
        }
        const auto want = oracle::pearson(x, y);
        ASSERT_TRUE(want.has_value());
        const double got = pearson(x, y);
        ASSERT_NEAR(got, *want, 1e-9) << trial;
        ASSERT_LE(std::abs(got), 1.0);
    }
}

TEST(Silhouette, TwoTightPairs) {
    const std::vector<std::vector<double>> pts = {{0}, {1}, {10}, {11}};
    const std::vector<int> labels = {0, 0, 1, 1};
    EXPECT_NEAR(silhouette(pts, labels), 359.0 / 399.0, 1e-12);
}

TEST(Silhouette, CoincidentClustersAndDegenerateCases) {
    const std::vector<std::vector<double>> apart = {{0, 0}, {0, 0}, {5, 5}, {5, 5}};
    const std::vector<int> labels = {0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(silhouette(apart, labels), 1.0);

    const std::vector<std::vector<double>> same(4, std::vector<double>{1, 1});
    EXPECT_DOUBLE_EQ(silhouette(same, labels), 0.0);

    const std::vector<int> one_cluster = {0, 0, 0, 0};
    EXPECT_THROW(silhouette(same, one_cluster), ValidationError);
}

TEST(Silhouette, AgreesWithOracleOnRandomInputs) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng() % 20;
        const int k = 2 + static_cast<int>(rng() % 3);
        std::vector<std::vector<double>> pts(n, std::vector<double>(3));
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(i % static_cast<std::size_t>(k));
            for (auto& v : pts[i]) v = g(rng) + labels[i];
        }
        ASSERT_NEAR(silhouette(pts, labels), oracle::silhouette(pts, labels), 1e-9) << trial;
    }
}

TEST(Folds, StratifiedAndDeterministic) {
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[i] = i < 20 ? 0 : 1;
    const auto f = stratified_folds(labels, 5, 3);
    EXPECT_EQ(f, stratified_folds(labels, 5, 3));
    for (int fold = 0; fold < 5; ++fold) {
        int zeros = 0, ones = 0;
        for (int i = 0; i < 30; ++i) {
            if (f[i] != fold) continue;
            (labels[i] == 0 ? zeros : ones)++;
        }
        EXPECT_EQ(zeros, 4);
        EXPECT_EQ(ones, 2);
    }
}

TEST(Logistic, SeparatesLinearData) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
        x.push_back({static_cast<double>(i) - 9.5});
        y.push_back(i >= 10 ? 1 : 0);
    }
    const auto m = LogisticModel::fit(x, y);
    EXPECT_GT(m.weights()[0], 0);
    EXPECT_EQ(m.predict(std::vector<double>{-5}), 0);
    EXPECT_EQ(m.predict(std::vector<double>{5}), 1);
    EXPECT_NEAR(kfold_accuracy(x, y, 5), 1.0, 1e-12);
}

TEST(Sentiment, BuiltinLexicon) {
    const auto lex = SentimentLexicon::builtin();
    EXPECT_GT(lex.size(), 100u);
    EXPECT_DOUBLE_EQ(lex.score("Wonderful, excellent, amazing!"), 5.0);
    EXPECT_DOUBLE_EQ(lex.score("the table is blue"), kNeutralSentiment);
    EXPECT_DOUBLE_EQ(lex.score("A wonderful day but I feel sad"), (5.0 + 1.0) / 2.0);
    EXPECT_THROW(lex.score("   "), ValidationError);
}

TEST(Sentiment, ParseRules) {
    const auto lex = SentimentLexicon::parse("# comment\nHappy\t4.5\n\ngloomy\t0.5\n");
    EXPECT_EQ(lex.size(), 2u);
    EXPECT_DOUBLE_EQ(*lex.valence("happy"), 4.5);
    EXPECT_THROW(SentimentLexicon::parse("bad\t7\n"), ValidationError);
    EXPECT_THROW(SentimentLexicon::parse("bad 3\n"), ParseError);
    EXPECT_THROW(SentimentLexicon::parse("bad\tx\n"), ParseError);
}

TEST(Sentiment, ViaBackendReadsFirstNumberAndClamps) {
    auto gw = test::mock_gateway(R"(
entries:
  - match: ["steady"]
    reply: "Rating: 3.5 out of 5"
  - match: ["glowing"]
    reply: "9"
  - match: ["shrug"]
    reply: "no idea"
)");
    EXPECT_DOUBLE_EQ(sentiment_via_backend("a steady week", *gw), 3.5);
    EXPECT_DOUBLE_EQ(sentiment_via_backend("glowing praise", *gw), 5.0);
    EXPECT_THROW(sentiment_via_backend("shrug", *gw), ParseError);
    EXPECT_THROW(sentiment_via_backend("", *gw), ValidationError);
}

TEST(Tone, ExactVShape) {
    const std::vector<ToneCurvePoint> pts = {{1, 4}, {1.5, 3.5}, {2, 3}, {3, 2}, {4, 3}, {4.5, 3.5}, {5, 4}};
    const auto r = tone_adaptation_eval(pts);
    EXPECT_NEAR(*r.r_low, -1.0, 1e-12);
    EXPECT_NEAR(*r.r_high, 1.0, 1e-12);
    EXPECT_EQ(r.curve.size(), pts.size());
    EXPECT_EQ(r.curve.front().mood, 1);
}

TEST(Tone, FlatSentimentIsUndefined) {
    const auto r = tone_adaptation_eval({{1, 3}, {2, 3}, {4, 3}, {5, 3}});
    EXPECT_FALSE(r.r_low.has_value());
    EXPECT_FALSE(r.r_high.has_value());
    EXPECT_EQ(r.to_json()["r_low"], "undefined");
}

TEST(Tone, NoisyVKeepsSigns) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> mood(1, 5), noise(-0.3, 0.3);
    std::vector<ToneCurvePoint> pts;
    for (int i = 0; i < 200; ++i) {
        const double m = mood(rng);
        pts.push_back({m, std::clamp(2 + std::abs(m - 3) + noise(rng), 0.0, 5.0)});
    }
    const auto r = tone_adaptation_eval(pts);
    EXPECT_LT(*r.r_low, -0.5);
    EXPECT_GT(*r.r_high, 0.5);
}

TEST(Tone, IndependentOfInputOrder) {
    std::vector<ToneCurvePoint> pts = {{1, 4}, {2, 2.5}, {2.5, 3}, {4, 3.2}, {5, 4.1}, {4.5, 3}};
    const auto a = tone_adaptation_eval(pts);
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(pts.begin(), pts.end(), rng);
        const auto b = tone_adaptation_eval(pts);
        EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
    }
}

TEST(Tone, FromTranscriptsScoresAssistantTurnsOnly) {
    const auto lex = SentimentLexicon::builtin();
    std::vector<DialogueSession> t = {said({"wonderful"}, {"sad"}), said({"sad"}, {"wonderful"}), said({}, {"hi"})};
    const std::vector<double> moods = {4, 5, 2};
    const auto r = tone_adaptation_eval(t, moods, [&](std::string_view s) { return lex.score(s); });
    ASSERT_EQ(r.curve.size(), 2u);
    EXPECT_DOUBLE_EQ(r.curve[0].sentiment, 5.0);
    EXPECT_DOUBLE_EQ(r.curve[1].sentiment, 1.0);
    EXPECT_THROW(tone_adaptation_eval(t, std::vector<double>{1}, [](std::string_view) { return 0.0; }),
                 ValidationError);
}

TEST(Robustness, DropArithmetic) {
    const std::vector<int> truth(10, 1);
    std::vector<int> g(10, 0), c(10, 0);
    for (int i = 0; i < 7; ++i) g[i] = 1;
    for (int i = 0; i < 4; ++i) c[i] = 1;
    const auto r = robustness_from_predictions(g, truth, c, truth);
    EXPECT_DOUBLE_EQ(*r.recall_general, 0.7);
    EXPECT_DOUBLE_EQ(*r.recall_cf, 0.4);
    EXPECT_NEAR(*r.relative_drop, 3.0 / 7.0, 1e-12);

    const std::vector<int> zeros(10, 0);
    EXPECT_DOUBLE_EQ(*robustness_from_predictions(truth, truth, zeros, truth).relative_drop, 1.0);
    EXPECT_DOUBLE_EQ(*robustness_from_predictions(truth, truth, truth, truth).relative_drop, 0.0);
    EXPECT_FALSE(robustness_from_predictions(zeros, truth, zeros, truth).relative_drop.has_value());
}

TEST(Consistency, OneHotClustersSeparate) {
    std::vector<std::vector<double>> e;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        labels.push_back(i % 2);
        e.push_back(i % 2 ? std::vector<double>{0, 1} : std::vector<double>{1, 0});
    }
    const auto r = consistency_from_embeddings(e, labels, 5, 1);
    EXPECT_GE(*r.silhouette, 0.9);
    EXPECT_DOUBLE_EQ(r.kfold_accuracy, 1.0);
    EXPECT_EQ(r.embedding_dim, 2u);
}

TEST(Consistency, IdenticalVectorsFallBackToMajority) {
    const std::vector<std::vector<double>> e(10, std::vector<double>{1, 1});
    const std::vector<int> labels = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
    const auto r = consistency_from_embeddings(e, labels, 2, 0);
    EXPECT_DOUBLE_EQ(*r.silhouette, 0.0);
    EXPECT_NEAR(r.kfold_accuracy, 0.6, 1e-12);
}

TEST(Consistency, RejectsTooFewSamples) {
    const std::vector<std::vector<double>> e(3, std::vector<double>{1});
    const std::vector<int> labels = {0, 1, 0};
    EXPECT_THROW(consistency_from_embeddings(e, labels, 5), ValidationError);
    EXPECT_THROW(consistency_from_embeddings(e, labels, 1), ValidationError);
}

TEST(Consistency, EmbedsEvidenceThroughGateway) {
    std::vector<analysis::AnalysisReport> reports(6);
    for (int i = 0; i < 6; ++i) {
        reports[i].outcome = i % 2;
        for (auto& p : reports[i].phases) p = i % 2 ? "worsening sleep and low mood" : "steady routine";
        reports[i].phases[4] = "outcome differs " + std::to_string(i);
    }
    EXPECT_EQ(evidence_text(reports[0]).find("outcome differs"), std::string::npos);
    auto gw = test::mock_gateway("hash_embeddings: true\n");
    const auto r = consistency_eval(reports, *gw, 3);
    EXPECT_EQ(r.embedding_dim, 384u);
    EXPECT_DOUBLE_EQ(*r.silhouette, 1.0);
}

TEST(Recall, ExtractNumbers) {
    EXPECT_EQ(extract_numbers("8,432 steps, 7.5 hours, 8.4k and 12"),
              (std::vector<double>{8432, 7.5, 8400, 12}));
    EXPECT_TRUE(extract_numbers("no digits").empty());
}

TEST(Recall, StepsMeanCountsWithinTolerance) {
    auto b = test::full_week();
    for (auto& d : b.behavior) d.steps = 1000;
    const auto hit = behavior_recall(said({"You averaged 1,000 steps a day."}), b, Scenario::physical_activity);
    EXPECT_EQ(hit.indicators_mentioned, std::vector<std::string>{"steps"});
    EXPECT_NEAR(hit.recall_fraction, 1.0 / 3.0, 1e-12);

    const auto miss = behavior_recall(said({"You walked about 1100 steps."}), b, Scenario::physical_activity);
    EXPECT_TRUE(miss.indicators_mentioned.empty());
}

TEST(Recall, UnitScalingAndPhrases) {
    const auto b = test::full_week("P01", 4);
    const auto r = behavior_recall(said({"Exercise came to 0.55 hours a day."}), b, Scenario::physical_activity);
    EXPECT_EQ(r.indicators_mentioned, std::vector<std::string>{"exercise_minutes"});

    const auto m = behavior_recall(said({"Your mood has been good, with moderate stress."}), b, Scenario::mental_health);
    EXPECT_EQ(m.indicators_mentioned, (std::vector<std::string>{"mood", "stress"}));
}

TEST(Recall, UserTurnsDoNotCount) {
    const auto b = test::full_week();
    const auto r = behavior_recall(said({"How was your week?"}, {"I ate 2130 calories"}), b, Scenario::nutrition);
    EXPECT_DOUBLE_EQ(r.recall_fraction, 0.0);
}

TEST(Recall, OpenScenarioNeedsResolution) {
    const auto b = test::full_week();
    auto s = said({"You ate around 2130 calories."});
    EXPECT_THROW(behavior_recall(s, b, Scenario::open), ValidationError);
    s.metadata["resolved_scenario"] = "nutrition";
    EXPECT_DOUBLE_EQ(behavior_recall(s, b, Scenario::open).recall_fraction, 1.0);
}

TEST(Output, CsvAndSvg) {
    const auto tone = tone_adaptation_eval({{2, 1.5}, {1, 3}});
    EXPECT_EQ(tone_curve_csv(tone), "mood,sentiment\n1,3\n2,1.5\n");
    const auto svg = tone_curve_svg(tone);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::size_t circles = 0;
    for (auto at = svg.find("<circle"); at != std::string::npos; at = svg.find("<circle", at + 1)) ++circles;
    EXPECT_EQ(circles, 2u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);

    RecallReport r{"nutrition", {"calories_in"}, {"calories_in"}, 1.0};
    EXPECT_EQ(recall_csv({r}), "scenario,indicators_expected,indicators_mentioned,recall_fraction\n"
                               "nutrition,calories_in,calories_in,1\n");
    EXPECT_NE(recall_svg({r}).find("nutrition"), std::string::npos);
}
