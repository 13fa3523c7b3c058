#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/analysis/analysis.hpp"
#include "mhfa/analysis/dialogue.hpp"
#include "mhfa/cohort/types.hpp"
#include "mhfa/eval/metrics.hpp"
#include "mhfa/gateway/gateway.hpp"

namespace mhfa::eval {

// ---------------------------------------------------------------------------
// Counterfactual robustness
// ---------------------------------------------------------------------------

struct LabeledCase {
    cohort::WeeklyBundle bundle;
    cohort::UserPortrait portrait;
    int truth = 0;
};

struct RobustnessResult {
    Metric recall_general;
    Metric recall_cf;
    Metric relative_drop;
    MetricsSummary general;
    MetricsSummary cf;
    std::size_t unparseable_general = 0;
    std::size_t unparseable_cf = 0;

    nlohmann::ordered_json to_json() const;
};

/// Runs the five-phase analysis on both sets. A reply that cannot be parsed
/// counts as prediction 0 and is tallied. relative_drop = (Rg - Rcf) / Rg.
RobustnessResult counterfactual_robustness(gateway::Gateway& gw, const std::vector<LabeledCase>& originals,
                                           const std::vector<LabeledCase>& counterfactuals,
                                           const report::FormatSpec& spec);

/// Same arithmetic from predictions already in hand.
RobustnessResult robustness_from_predictions(std::span<const int> pred_general, std::span<const int> truth_general,
                                             std::span<const int> pred_cf, std::span<const int> truth_cf);

// ---------------------------------------------------------------------------
// Sentiment and tone
// ---------------------------------------------------------------------------

/// Word valences on the 0..5 scale.
class SentimentLexicon {
public:
    /// Lines "word<TAB>valence"; '#' comments. Valences outside [0,5] are rejected.
    static SentimentLexicon parse(std::string_view tsv);
    static SentimentLexicon builtin();

    void set(std::string word, double valence);
    std::optional<double> valence(std::string_view word) const;
    std::size_t size() const { return words_.size(); }

    /// Mean valence of the words found in the lexicon; 2.5 when none are.
    /// Throws ValidationError for empty or whitespace-only text.
    double score(std::string_view text) const;

private:
    std::map<std::string, double, std::less<>> words_;
};

inline constexpr double kNeutralSentiment = 2.5;

/// Asks the backend to rate the text from 0 to 5 and reads the first number of
/// the reply, clamped to [0,5]. Throws ParseError when the reply has no number.
double sentiment_via_backend(std::string_view text, gateway::Gateway& gw);

using SentimentScorer = std::function<double(std::string_view)>;

struct ToneCurvePoint {
    double mood = 0;       ///< 1..5
    double sentiment = 0;  ///< 0..5
};

struct ToneResult {
    Metric r_low;   ///< mood < 3
    Metric r_high;  ///< mood > 3
    std::vector<ToneCurvePoint> curve;  ///< sorted by (mood, sentiment)

    nlohmann::ordered_json to_json() const;
};

/// Pearson correlation of sentiment against mood separately below and above
/// the neutral mood 3. Independent of the input order.
ToneResult tone_adaptation_eval(std::vector<ToneCurvePoint> points);

/// One point per transcript: the mean score of its assistant turns against
/// the paired mood. Transcripts without assistant turns are skipped.
ToneResult tone_adaptation_eval(const std::vector<analysis::DialogueSession>& transcripts,
                                std::span<const double> moods, const SentimentScorer& scorer);

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

struct ConsistencyResult {
    Metric silhouette;
    double kfold_accuracy = 0;
    int k = 0;
    std::size_t embedding_dim = 0;

    nlohmann::ordered_json to_json() const;
};

/// Phases 1-4 of a report, the text that gets embedded.
std::string evidence_text(const analysis::AnalysisReport& report);

/// Embeds each report's evidence text, scores clustering by outcome with the
/// silhouette and separability with stratified k-fold logistic regression.
/// Throws ValidationError when there are fewer reports than k.
ConsistencyResult consistency_eval(const std::vector<analysis::AnalysisReport>& reports, gateway::Gateway& gw, int k,
                                   std::uint64_t seed = 0);

/// Same, starting from embeddings and labels.
ConsistencyResult consistency_from_embeddings(const std::vector<std::vector<double>>& embeddings,
                                              std::span<const int> labels, int k, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Behavior recall
// ---------------------------------------------------------------------------

/// A phrase that counts as a mention when the indicator's weekly mean lies in [min, max].
struct PhraseBand {
    double min = -1e300;
    double max = 1e300;
    std::vector<std::string> phrases;
};

struct IndicatorMatcher {
    std::string indicator;      ///< behavior field or mental indicator name
    bool numeric = true;        ///< match quoted values within the tolerance
    std::vector<double> scales; ///< alternative units: a quoted number n matches when n*scale is within tolerance
    std::vector<PhraseBand> bands;
};

struct MatcherTable {
    std::map<std::string, std::vector<std::string>> expected;  ///< scenario -> indicators
    std::map<std::string, IndicatorMatcher> matchers;
    double tolerance = 0.05;

    static MatcherTable from_json(const nlohmann::json& j);
    static MatcherTable builtin();
};

struct RecallReport {
    std::string scenario;
    std::vector<std::string> indicators_expected;
    std::vector<std::string> indicators_mentioned;
    double recall_fraction = 0;

    nlohmann::ordered_json to_json() const;
};

/// Numbers quoted in text ("8,432", "7.5", "8.4k").
std::vector<double> extract_numbers(std::string_view text);

/// Which of the scenario's indicators the assistant turns of the transcript
/// mention: a quoted number within ±tolerance of the weekly mean or of any
/// daily value (also after unit scaling), or a phrase from the band holding
/// the weekly mean. An "open" scenario uses the session's resolved scenario.
RecallReport behavior_recall(const analysis::DialogueSession& transcript, const cohort::WeeklyBundle& bundle,
                             analysis::Scenario scenario, const MatcherTable& table = MatcherTable::builtin());

}  // namespace mhfa::eval
