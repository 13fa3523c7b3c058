#include "mhfa/eval/evaluations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>

#include "mhfa/cohort/weekly.hpp"
#include "mhfa/core/parallel.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"
#include "mhfa/forge/corpus.hpp"

namespace mhfa::eval {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Counterfactual robustness

ordered_json RobustnessResult::to_json() const {
    ordered_json j;
    j["recall_general"] = metric_json(recall_general);
    j["recall_cf"] = metric_json(recall_cf);
    j["relative_drop"] = metric_json(relative_drop);
    j["general"] = general.to_json();
    j["cf"] = cf.to_json();
    j["unparseable_general"] = unparseable_general;
    j["unparseable_cf"] = unparseable_cf;
    return j;
}

RobustnessResult robustness_from_predictions(std::span<const int> pred_general, std::span<const int> truth_general,
                                             std::span<const int> pred_cf, std::span<const int> truth_cf) {
    RobustnessResult r;
    r.general = classification_metrics(pred_general, truth_general);
    r.cf = classification_metrics(pred_cf, truth_cf);
    r.recall_general = r.general.recall;
    r.recall_cf = r.cf.recall;
    if (r.recall_general && r.recall_cf && *r.recall_general > 0) {
        r.relative_drop = (*r.recall_general - *r.recall_cf) / *r.recall_general;
    }
    return r;
}

RobustnessResult counterfactual_robustness(gateway::Gateway& gw, const std::vector<LabeledCase>& originals,
                                           const std::vector<LabeledCase>& counterfactuals,
                                           const report::FormatSpec& spec) {
    if (originals.size() != counterfactuals.size()) {
        throw ValidationError("counterfactuals", "each counterfactual case must mirror an original case");
    }
    auto run = [&](const std::vector<LabeledCase>& cases, std::vector<int>& preds, std::vector<int>& truth) {
        preds.assign(cases.size(), 0);
        truth.resize(cases.size());
        std::vector<char> bad(cases.size(), 0);
        parallel_for(cases.size(), static_cast<std::size_t>(gw.options().inflight_cap), [&](std::size_t i) {
            truth[i] = cases[i].truth;
            try {
                preds[i] = analysis::generate_analysis(cases[i].bundle, cases[i].portrait, gw, spec).outcome;
            } catch (const analysis::AnalysisParseError&) {
                bad[i] = 1;
            }
        });
        return static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1));
    };
    std::vector<int> pg, tg, pc, tc;
    const auto bad_g = run(originals, pg, tg);
    const auto bad_c = run(counterfactuals, pc, tc);
    auto r = robustness_from_predictions(pg, tg, pc, tc);
    r.unparseable_general = bad_g;
    r.unparseable_cf = bad_c;
    return r;
}

// ---------------------------------------------------------------------------
// Sentiment and tone

namespace {

std::vector<std::string> lower_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u) || c == '\'') {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

}  // namespace

SentimentLexicon SentimentLexicon::parse(std::string_view tsv) {
    SentimentLexicon lex;
    std::size_t lineno = 0;
    for (const auto& raw : split(tsv, '\n')) {
        ++lineno;
        const auto line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line, '\t');
        if (cells.size() != 2) throw ParseError("lexicon line " + std::to_string(lineno) + ": expected word<TAB>valence");
        double v = 0;
        try {
            v = std::stod(cells[1]);
        } catch (const std::exception&) {
            throw ParseError("lexicon line " + std::to_string(lineno) + ": valence is not a number");
        }
        lex.set(to_lower(trim(cells[0])), v);
    }
    return lex;
}

SentimentLexicon SentimentLexicon::builtin() { return parse(templates::get("valence_lexicon.tsv")); }

void SentimentLexicon::set(std::string word, double valence) {
    if (!(valence >= 0 && valence <= 5)) throw ValidationError("valence", "valence for '" + word + "' outside [0,5]");
    words_[std::move(word)] = valence;
}

std::optional<double> SentimentLexicon::valence(std::string_view word) const {
    auto it = words_.find(word);
    if (it == words_.end()) return std::nullopt;
    return it->second;
}

double SentimentLexicon::score(std::string_view text) const {
    if (trim(text).empty()) throw ValidationError("text", "cannot score empty text");
    double sum = 0;
    std::size_t hits = 0;
    for (const auto& w : lower_words(text)) {
        if (auto v = valence(w)) {
            sum += *v;
            ++hits;
        }
    }
    return hits == 0 ? kNeutralSentiment : sum / static_cast<double>(hits);
}

double sentiment_via_backend(std::string_view text, gateway::Gateway& gw) {
    if (trim(text).empty()) throw ValidationError("text", "cannot score empty text");
    const std::vector<gateway::ChatMessage> msgs = {
        {gateway::Role::user, fill_template(templates::get("sentiment_rating.txt"), {{"text", std::string(text)}})}};
    const std::string reply = gw.chat(msgs).text;
    const auto nums = extract_numbers(reply);
    if (nums.empty()) throw ParseError("sentiment reply has no number: " + reply);
    return std::clamp(nums.front(), 0.0, 5.0);
}

ordered_json ToneResult::to_json() const {
    ordered_json j;
    j["r_low"] = metric_json(r_low);
    j["r_high"] = metric_json(r_high);
    auto pts = ordered_json::array();
    for (const auto& p : curve) pts.push_back({{"mood", p.mood}, {"sentiment", p.sentiment}});
    j["curve"] = pts;
    return j;
}

ToneResult tone_adaptation_eval(std::vector<ToneCurvePoint> points) {
    for (const auto& p : points) {
        if (!(p.mood >= 1 && p.mood <= 5)) throw ValidationError("mood", "mood must be in [1,5]");
        if (!(p.sentiment >= 0 && p.sentiment <= 5)) throw ValidationError("sentiment", "sentiment must be in [0,5]");
    }
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
        return a.mood != b.mood ? a.mood < b.mood : a.sentiment < b.sentiment;
    });
    std::vector<double> lx, ly, hx, hy;
    for (const auto& p : points) {
        if (p.mood < 3) {
            lx.push_back(p.mood);
            ly.push_back(p.sentiment);
        } else if (p.mood > 3) {
            hx.push_back(p.mood);
            hy.push_back(p.sentiment);
        }
    }
    ToneResult r;
    r.r_low = try_pearson(lx, ly);
    r.r_high = try_pearson(hx, hy);
    r.curve = std::move(points);
    return r;
}

ToneResult tone_adaptation_eval(const std::vector<analysis::DialogueSession>& transcripts,
                                std::span<const double> moods, const SentimentScorer& scorer) {
    if (transcripts.size() != moods.size()) throw ValidationError("moods", "one mood per transcript is required");
    std::vector<ToneCurvePoint> points;
    for (std::size_t i = 0; i < transcripts.size(); ++i) {
        double sum = 0;
        std::size_t n = 0;
        for (const auto& t : transcripts[i].turns) {
            if (t.role != gateway::Role::assistant || trim(t.text).empty()) continue;
            sum += scorer(t.text);
            ++n;
        }
        if (n > 0) points.push_back({moods[i], sum / static_cast<double>(n)});
    }
    return tone_adaptation_eval(std::move(points));
}

// ---------------------------------------------------------------------------
// Consistency

ordered_json ConsistencyResult::to_json() const {
    ordered_json j;
    j["silhouette"] = metric_json(silhouette);
    j["kfold_accuracy"] = kfold_accuracy;
    j["k"] = k;
    j["embedding_dim"] = embedding_dim;
    return j;
}

std::string evidence_text(const analysis::AnalysisReport& report) {
    std::string out;
    for (std::size_t i = 0; i < 4; ++i) {
        if (i) out += "\n\n";
        out += report.phases[i];
    }
    return out;
}

ConsistencyResult consistency_from_embeddings(const std::vector<std::vector<double>>& embeddings,
                                              std::span<const int> labels, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k", "k must be >= 2");
    if (embeddings.size() < static_cast<std::size_t>(k)) {
        throw ValidationError("k", "need at least k=" + std::to_string(k) + " reports, got " +
                                       std::to_string(embeddings.size()));
    }
    ConsistencyResult r;
    r.k = k;
    r.embedding_dim = embeddings.front().size();
    if (std::set<int>(labels.begin(), labels.end()).size() >= 2) r.silhouette = silhouette(embeddings, labels);
    r.kfold_accuracy = kfold_accuracy(embeddings, labels, k, seed);
    return r;
}

ConsistencyResult consistency_eval(const std::vector<analysis::AnalysisReport>& reports, gateway::Gateway& gw, int k,
                                   std::uint64_t seed) {
    if (k < 2) throw ValidationError("k", "k must be >= 2");
    if (reports.size() < static_cast<std::size_t>(k)) {
        throw ValidationError("k", "need at least k=" + std::to_string(k) + " reports, got " +
                                       std::to_string(reports.size()));
    }
    std::vector<std::vector<double>> emb(reports.size());
    std::vector<int> labels(reports.size());
    parallel_for(reports.size(), static_cast<std::size_t>(gw.options().inflight_cap), [&](std::size_t i) {
        emb[i] = gw.embed(evidence_text(reports[i]));
        labels[i] = reports[i].outcome;
    });
    return consistency_from_embeddings(emb, labels, k, seed);
}

// ---------------------------------------------------------------------------
// Behavior recall

MatcherTable MatcherTable::from_json(const nlohmann::json& j) {
    MatcherTable t;
    try {
        t.tolerance = j.value("tolerance", 0.05);
        for (const auto& [scenario, list] : j.at("expected").items()) {
            analysis::parse_scenario(scenario);
            t.expected[scenario] = list.get<std::vector<std::string>>();
        }
        for (const auto& [name, m] : j.at("matchers").items()) {
            IndicatorMatcher im;
            im.indicator = name;
            im.numeric = m.value("numeric", true);
            im.scales = m.value("scales", std::vector<double>{1.0});
            if (im.scales.empty()) im.scales = {1.0};
            if (m.contains("bands")) {
                for (const auto& b : m["bands"]) {
                    PhraseBand band;
                    band.min = b.value("min", -1e300);
                    band.max = b.value("max", 1e300);
                    band.phrases = b.at("phrases").get<std::vector<std::string>>();
                    im.bands.push_back(std::move(band));
                }
            }
            if (!cohort::parse_behavior_field(name) && !cohort::parse_indicator(name)) {
                throw ValidationError(name, "matcher for unknown indicator '" + name + "'");
            }
            t.matchers[name] = std::move(im);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("matcher table: ") + e.what());
    }
    for (const auto& [scenario, list] : t.expected) {
        for (const auto& ind : list) {
            if (!t.matchers.count(ind)) throw ValidationError(ind, "no matcher for expected indicator '" + ind + "'");
        }
    }
    return t;
}

MatcherTable MatcherTable::builtin() {
    static const MatcherTable table = from_json(nlohmann::json::parse(templates::get("recall_matchers.json")));
    return table;
}

ordered_json RecallReport::to_json() const {
    ordered_json j;
    j["scenario"] = scenario;
    j["indicators_expected"] = indicators_expected;
    j["indicators_mentioned"] = indicators_mentioned;
    j["recall_fraction"] = recall_fraction;
    return j;
}

std::vector<double> extract_numbers(std::string_view text) {
    static const std::regex re(R"((\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?([kK](?![A-Za-z]))?)");
    std::vector<double> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        std::string digits = (*it)[1].str();
        std::erase(digits, ',');
        double v = std::stod(digits + (*it)[2].str());
        if ((*it)[3].matched) v *= 1000;
        out.push_back(v);
    }
    return out;
}

RecallReport behavior_recall(const analysis::DialogueSession& transcript, const cohort::WeeklyBundle& bundle,
                             analysis::Scenario scenario, const MatcherTable& table) {
    if (scenario == analysis::Scenario::open) {
        auto it = transcript.metadata.find("resolved_scenario");
        if (it == transcript.metadata.end()) {
            throw ValidationError("scenario", "open session has no resolved scenario to score against");
        }
        scenario = analysis::parse_scenario(it->second);
    }
    RecallReport r;
    r.scenario = std::string(analysis::scenario_name(scenario));
    auto ex = table.expected.find(r.scenario);
    if (ex == table.expected.end()) throw ValidationError("scenario", "no expected indicators for " + r.scenario);
    r.indicators_expected = ex->second;

    std::string text;
    for (const auto& t : transcript.turns) {
        if (t.role == gateway::Role::assistant) text += t.text + "\n";
    }
    if (trim(text).empty()) return r;
    const auto numbers = extract_numbers(text);

    for (const auto& name : r.indicators_expected) {
        const auto& m = table.matchers.at(name);
        std::optional<double> mean;
        std::vector<double> values;
        if (auto f = cohort::parse_behavior_field(name)) {
            mean = cohort::summarize_field(bundle, *f).mean;
            for (const auto& d : bundle.behavior) {
                if (d[*f]) values.push_back(*d[*f]);
            }
        } else if (auto k = cohort::parse_indicator(name)) {
            mean = cohort::summarize_indicator(bundle, *k).mean;
            for (const auto& rec : bundle.records) {
                if (const auto* ind = rec.find(*k)) values.push_back(ind->value);
            }
        }
        if (mean) values.push_back(*mean);
        bool hit = false;
        if (m.numeric) {
            for (double v : values) {
                for (double n : numbers) {
                    for (double s : m.scales) {
                        if (std::abs(n * s - v) <= table.tolerance * std::abs(v)) hit = true;
                    }
                }
            }
        }
        if (!hit && mean) {
            for (const auto& band : m.bands) {
                if (*mean < band.min || *mean > band.max) continue;
                for (const auto& p : band.phrases) {
                    if (forge::count_phrase(text, p) > 0) hit = true;
                }
            }
        }
        if (hit) r.indicators_mentioned.push_back(name);
    }
    r.recall_fraction = r.indicators_expected.empty()
                            ? 0.0
                            : static_cast<double>(r.indicators_mentioned.size()) /
                                  static_cast<double>(r.indicators_expected.size());
    return r;
}

}  // namespace mhfa::eval
