// mhfa: command-line front end for the analysis workbench.
//
// Every subcommand writes its artifacts under --out, prints a one-line JSON
// summary on stdout and, on failure, a JSON error object on stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mhfa/analysis/analysis.hpp"
#include "mhfa/analysis/dialogue.hpp"
#include "mhfa/cohort/ingest.hpp"
#include "mhfa/cohort/labels.hpp"
#include "mhfa/cohort/serialize.hpp"
#include "mhfa/cohort/weekly.hpp"
#include "mhfa/core/dates.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/parallel.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"
#include "mhfa/eval/evaluations.hpp"
#include "mhfa/eval/metrics.hpp"
#include "mhfa/eval/output.hpp"
#include "mhfa/forge/corpus.hpp"
#include "mhfa/forge/sft.hpp"
#include "mhfa/gateway/factory.hpp"
#include "mhfa/report/refine.hpp"
#include "mhfa/service/server.hpp"
#include "mhfa/service/state.hpp"
#include "mhfa/synth/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Common {
    std::string backend;
    std::string exchange_log;
    std::string template_dir;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--backend", c.backend, "Model backend: mock:<script.yaml>, replay:<log.jsonl> or an http(s) URL");
    sub->add_option("--exchange-log", c.exchange_log, "Append every backend exchange to this JSONL file");
    sub->add_option("--template-dir", c.template_dir, "Directory whose files override the built-in templates");
}

std::unique_ptr<mhfa::gateway::Gateway> make_gateway(const Common& c, const std::string& spec) {
    auto opts = mhfa::gateway::options_from_env();
    if (!c.exchange_log.empty()) opts.log_path = c.exchange_log;
    return std::make_unique<mhfa::gateway::Gateway>(mhfa::gateway::make_backend(spec), opts);
}

std::unique_ptr<mhfa::gateway::Gateway> make_gateway(const Common& c) { return make_gateway(c, c.backend); }

void write_lines(const fs::path& path, const std::vector<ordered_json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    mhfa::write_file(path, out);
}

void summary(const ordered_json& j) { std::cout << j.dump() << std::endl; }

mhfa::report::FormatSpec load_spec(const std::string& path) {
    return path.empty() ? mhfa::report::default_format_spec() : mhfa::report::FormatSpec::load(path);
}

std::vector<mhfa::cohort::WeeklyBundle> select_bundles(const mhfa::service::CohortSeed& seed,
                                                       const std::string& participant, std::optional<int> week) {
    std::vector<mhfa::cohort::WeeklyBundle> out;
    for (const auto& b : seed.bundles) {
        if (!participant.empty() && b.participant_id != participant) continue;
        if (week && b.week_index != *week) continue;
        out.push_back(b);
    }
    if (out.empty()) throw mhfa::ValidationError("bundles", "no bundle matches the selection");
    return out;
}

mhfa::cohort::UserPortrait portrait_of(const mhfa::service::CohortSeed& seed, const std::string& pid) {
    if (const auto it = seed.portraits.find(pid); it != seed.portraits.end()) return it->second;
    mhfa::cohort::UserPortrait p;
    p.participant_id = pid;
    return p;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string dataset, root, out, mapping, rule, overrides, anchor = "monday";
    double fraction = 1.0;
    std::uint64_t seed = 0;
};

int run_ingest(const IngestArgs& a) {
    using namespace mhfa::cohort;
    ColumnMapping mapping;
    if (!a.mapping.empty()) {
        mapping = ColumnMapping::from_json(json::parse(mhfa::read_file(a.mapping)));
    } else if (a.dataset == "pmdata") {
        mapping = ColumnMapping::pmdata();
    } else if (a.dataset == "globem") {
        mapping = ColumnMapping::globem();
    } else {
        throw mhfa::ValidationError("dataset", "dataset must be pmdata or globem (or pass --mapping)");
    }
    const auto anchor = mhfa::parse_weekday(a.anchor);
    if (!anchor) throw mhfa::ValidationError("anchor", "unknown weekday '" + a.anchor + "'");
    Cohort cohort = parse_cohort(a.root, mapping);
    if (a.fraction < 1.0) cohort = subsample(cohort, a.fraction, a.seed);
    const LabelRule rule = a.rule.empty() ? LabelRule{} : LabelRule::from_json(json::parse(mhfa::read_file(a.rule)));
    const auto overrides = a.overrides.empty() ? std::vector<LabelOverride>{} : read_overrides(a.overrides);
    const auto bundles = assign_labels(aggregate_weekly(cohort, *anchor), rule, overrides);

    fs::create_directories(a.out);
    mhfa::write_file(fs::path(a.out) / "bundles.jsonl", to_jsonl(bundles));
    std::vector<ordered_json> portraits, rejects;
    for (const auto& p : cohort.participants) portraits.push_back(to_json(p.portrait));
    for (const auto& r : cohort.rejects) {
        rejects.push_back({{"path", r.path}, {"line", r.line}, {"reason", r.reason}, {"raw", r.raw}});
    }
    for (const auto& f : cohort.file_errors) rejects.push_back({{"path", f.path}, {"reason", f.message}});
    write_lines(fs::path(a.out) / "portraits.jsonl", portraits);
    write_lines(fs::path(a.out) / "rejects.jsonl", rejects);
    summary({{"participants", cohort.participants.size()}, {"bundles", bundles.size()}, {"rejects", rejects.size()}});
    return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    mhfa::synth::SynthConfig config;
    std::string out;
    std::string start;
};

int run_synth(SynthArgs a) {
    if (!a.start.empty()) {
        const auto d = mhfa::parse_date(a.start);
        if (!d) throw mhfa::ValidationError("start", "start must be YYYY-MM-DD");
        a.config.start = *d;
    }
    const auto cohort = mhfa::synth::generate(a.config);
    fs::create_directories(a.out);
    mhfa::write_file(fs::path(a.out) / "bundles.jsonl", mhfa::cohort::to_jsonl(cohort.bundles));
    std::vector<ordered_json> portraits, clamped;
    for (const auto& p : cohort.cohort.participants) portraits.push_back(mhfa::cohort::to_json(p.portrait));
    for (const auto& c : cohort.clamped) {
        clamped.push_back({{"participant_id", c.participant_id},
                           {"date", mhfa::format_date(c.date)},
                           {"indicator", mhfa::cohort::indicator_name(c.kind)},
                           {"raw", c.raw}});
    }
    write_lines(fs::path(a.out) / "portraits.jsonl", portraits);
    write_lines(fs::path(a.out) / "clamped.jsonl", clamped);
    mhfa::write_file(fs::path(a.out) / "truth.csv", mhfa::synth::truth_csv(cohort.truth));
    summary({{"participants", cohort.cohort.participants.size()},
             {"bundles", cohort.bundles.size()},
             {"clamped", cohort.clamped.size()}});
    return 0;
}

// ---------------------------------------------------------------------------

struct RefineArgs {
    std::string bundles, participant, spec, out;
    std::optional<int> week;
    int max_iters = 5;
};

int run_refine(const RefineArgs& a, const Common& c) {
    const auto seed = mhfa::service::CohortSeed::load(a.bundles);
    const auto bundle = select_bundles(seed, a.participant, a.week).front();
    auto gw = make_gateway(c);
    const auto result = mhfa::report::self_refine(bundle, portrait_of(seed, bundle.participant_id), load_spec(a.spec),
                                                  *gw, a.max_iters);
    fs::create_directories(a.out);
    mhfa::write_file(fs::path(a.out) / "format_spec.json", result.best.to_json().dump(2) + "\n");
    std::vector<ordered_json> trace;
    for (const auto& s : result.trace) trace.push_back(s.to_json());
    write_lines(fs::path(a.out) / "refine_trace.jsonl", trace);
    summary({{"participant_id", bundle.participant_id},
             {"week_index", bundle.week_index},
             {"initial_perplexity", result.initial_perplexity},
             {"best_perplexity", result.best_perplexity},
             {"best_version", result.best.version},
             {"iterations", result.trace.size()}});
    return 0;
}

// ---------------------------------------------------------------------------

struct ForgePtArgs {
    std::string domain, general, keywords, out;
    std::size_t min_hits = 3;
    double ratio_general = 2, ratio_domain = 1, tolerance = 0.05;
    std::uint64_t seed = 0;
    bool clean = false;
};

int run_forge_pt(const ForgePtArgs& a, const Common& c) {
    using namespace mhfa::forge;
    const auto table = a.keywords.empty() ? KeywordTable::builtin() : KeywordTable::load(a.keywords);
    auto filtered = filter_by_keywords(a.domain, table, a.min_hits);
    auto general = list_general_docs(a.general);
    auto gw = make_gateway(c);
    fs::create_directories(a.out);

    std::vector<ordered_json> rejects;
    for (const auto& u : filtered.unmatched) rejects.push_back({{"path", u}, {"reason", "below keyword threshold"}});
    for (const auto& e : filtered.errors) rejects.push_back({{"path", e.path}, {"reason", e.message}});

    if (a.clean) {
        const fs::path dir = fs::path(a.out) / "cleaned";
        fs::create_directories(dir);
        auto clean_all = [&](std::vector<CorpusDoc>& docs) {
            std::vector<std::string> warnings(docs.size());
            mhfa::parallel_for(docs.size(), static_cast<std::size_t>(gw->options().inflight_cap), [&](std::size_t i) {
                const auto r = clean_doc(mhfa::read_file(docs[i].source_path), *gw);
                std::string name = docs[i].doc_id;
                for (auto& ch : name) {
                    if (ch == '/' || ch == '\\') ch = '_';
                }
                const auto path = dir / (name + ".txt");
                mhfa::write_file(path, r.text);
                docs[i].source_path = path.string();
                docs[i].cleaned = r.cleaned;
                warnings[i] = r.warning;
            });
            for (std::size_t i = 0; i < docs.size(); ++i) {
                if (!warnings[i].empty()) rejects.push_back({{"path", docs[i].doc_id}, {"reason", warnings[i]}});
            }
        };
        clean_all(filtered.matched);
        clean_all(general);
    }
    count_tokens(filtered.matched, *gw);
    count_tokens(general, *gw);
    const auto manifest =
        build_manifest(filtered.matched, general, a.ratio_general, a.ratio_domain, a.seed, a.tolerance);
    mhfa::write_file(fs::path(a.out) / "pt_manifest.json", manifest.to_json().dump(2) + "\n");
    write_lines(fs::path(a.out) / "pt_rejects.jsonl", rejects);
    summary({{"domain_docs", manifest.domain_docs.size()},
             {"general_docs", manifest.general_docs.size()},
             {"domain_tokens", manifest.domain_tokens},
             {"general_tokens", manifest.general_tokens},
             {"mix_ratio", manifest.mix_ratio}});
    return 0;
}

// ---------------------------------------------------------------------------

struct ForgeSftArgs {
    std::string seeds, bundles, protocol, spec, out;
};

int run_forge_sft(const ForgeSftArgs& a, const Common& c) {
    using namespace mhfa::forge;
    if (a.seeds.empty() && a.bundles.empty()) throw mhfa::ValidationError("seeds", "pass --seeds and/or --bundles");
    auto gw = make_gateway(c);
    const std::string protocol =
        a.protocol.empty() ? mhfa::trim(mhfa::templates::get("orca_system.txt")) : mhfa::read_file(a.protocol);
    SftBuildResult all;
    if (!a.seeds.empty()) all = build_sft_pairs(read_seeds(a.seeds), *gw, protocol);
    if (!a.bundles.empty()) {
        const auto seed = mhfa::service::CohortSeed::load(a.bundles);
        auto r = build_bundle_pairs(seed.bundles, seed.portraits, *gw, load_spec(a.spec));
        for (auto& p : r.pairs) all.pairs.push_back(std::move(p));
        for (auto& s : r.skipped) all.skipped.push_back(std::move(s));
    }
    std::set<std::string> ids;
    for (const auto& p : all.pairs) {
        if (!ids.insert(p.id).second) throw mhfa::ValidationError("id", "duplicate pair id '" + p.id + "'");
    }
    fs::create_directories(a.out);
    const std::string content = to_jsonl(all.pairs);
    if (const auto v = validate_sft_jsonl(content); !v.empty()) {
        throw mhfa::ValidationError("sft", "line " + std::to_string(v.front().line) + ": " + v.front().message);
    }
    mhfa::write_file(fs::path(a.out) / "sft.jsonl", content);
    std::vector<ordered_json> rejects;
    for (const auto& s : all.skipped) rejects.push_back({{"id", s.id}, {"reason", s.reason}});
    write_lines(fs::path(a.out) / "sft_rejects.jsonl", rejects);
    summary({{"pairs", all.pairs.size()}, {"skipped", all.skipped.size()}});
    return 0;
}

// ---------------------------------------------------------------------------

struct AugmentArgs {
    std::string sft, out;
    std::uint64_t seed = 0;
    double fraction = 0.5;
};

int run_augment(const AugmentArgs& a, const Common& c) {
    using namespace mhfa::forge;
    std::vector<SftPair> originals;
    for (const auto& j : mhfa::read_jsonl(a.sft)) {
        auto p = SftPair::from_json(j);
        if (!p.cf_label) originals.push_back(std::move(p));
    }
    auto gw = make_gateway(c);
    const auto plan = plan_counterfactuals(originals.size(), a.seed, a.fraction);
    std::vector<AugmentOutcome> outcomes(plan.size());
    mhfa::parallel_for(plan.size(), static_cast<std::size_t>(gw->options().inflight_cap), [&](std::size_t i) {
        outcomes[i] = augment_counterfactual(originals[plan[i].first], plan[i].second, *gw);
    });
    std::vector<SftPair> cf;
    std::vector<ordered_json> rejects;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (outcomes[i].pair) {
            cf.push_back(*outcomes[i].pair);
        } else {
            rejects.push_back({{"id", originals[plan[i].first].id},
                               {"cf_label", mhfa::synth::cf_label_name(plan[i].second)},
                               {"reason", outcomes[i].rejection}});
        }
    }
    const auto mixed = mix_sft(originals, cf, a.seed);
    fs::create_directories(a.out);
    mhfa::write_file(fs::path(a.out) / "sft_cf.jsonl", to_jsonl(cf));
    mhfa::write_file(fs::path(a.out) / "sft_mixed.jsonl", to_jsonl(mixed.pairs));
    write_lines(fs::path(a.out) / "cf_rejects.jsonl", rejects);
    summary({{"originals", originals.size()}, {"counterfactuals", cf.size()}, {"rejected", rejects.size()},
             {"counts", mixed.counts}});
    return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string bundles, participant, spec, out;
    std::optional<int> week;
};

int run_analyze(const AnalyzeArgs& a, const Common& c) {
    const auto seed = mhfa::service::CohortSeed::load(a.bundles);
    const auto bundles = select_bundles(seed, a.participant, a.week);
    const auto spec = load_spec(a.spec);
    auto gw = make_gateway(c);
    std::vector<std::optional<mhfa::analysis::AnalysisReport>> reports(bundles.size());
    std::vector<ordered_json> errors(bundles.size());
    mhfa::parallel_for(bundles.size(), static_cast<std::size_t>(gw->options().inflight_cap), [&](std::size_t i) {
        try {
            reports[i] =
                mhfa::analysis::generate_analysis(bundles[i], portrait_of(seed, bundles[i].participant_id), *gw, spec);
        } catch (const mhfa::analysis::AnalysisParseError& e) {
            errors[i] = {{"reason", e.what()}, {"raw_text", e.raw_text()}};
        } catch (const mhfa::Error& e) {
            errors[i] = {{"reason", e.what()}};
        }
    });
    std::vector<ordered_json> analyses, preds, errs;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const ordered_json key{{"participant_id", bundles[i].participant_id}, {"week_index", bundles[i].week_index}};
        if (reports[i]) {
            auto row = key;
            row["report"] = reports[i]->to_json();
            analyses.push_back(row);
            auto p = key;
            p["prediction"] = reports[i]->outcome;
            preds.push_back(p);
        } else {
            auto row = key;
            row.update(errors[i]);
            errs.push_back(row);
        }
    }
    fs::create_directories(a.out);
    write_lines(fs::path(a.out) / "analyses.jsonl", analyses);
    write_lines(fs::path(a.out) / "predictions.jsonl", preds);
    write_lines(fs::path(a.out) / "analyze_errors.jsonl", errs);
    summary({{"analyzed", analyses.size()}, {"failed", errs.size()}});
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string bundles, participant, scenario = "open", user_backend, user_persona, assistant_persona, session_id,
        out, start;
    std::optional<int> week;
    std::size_t max_turns = 10;
    std::size_t context_turns = 12;
};

int run_simulate(const SimulateArgs& a, const Common& c) {
    const auto seed = mhfa::service::CohortSeed::load(a.bundles);
    const auto bundles = select_bundles(seed, a.participant, a.week);
    auto assistant_gw = make_gateway(c);
    auto user_gw = a.user_backend.empty() ? nullptr : make_gateway(c, a.user_backend);
    const auto scenario = mhfa::analysis::parse_scenario(a.scenario);

    mhfa::analysis::SimulationOptions opts;
    opts.context_turns = a.context_turns;
    opts.transcript_path = fs::path(a.out) / "transcripts.jsonl";
    if (!a.start.empty()) {
        const auto t = mhfa::parse_rfc3339(a.start);
        if (!t) throw mhfa::ValidationError("start", "start must be an RFC 3339 timestamp");
        opts.start = *t;
    }
    fs::create_directories(a.out);
    if (fs::exists(*opts.transcript_path)) fs::remove(*opts.transcript_path);

    std::size_t failed = 0, turns = 0;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        mhfa::analysis::AgentConfig assistant;
        assistant.role = mhfa::gateway::Role::assistant;
        assistant.bundle = bundles[i];
        assistant.portrait = portrait_of(seed, bundles[i].participant_id);
        assistant.gateway = assistant_gw.get();
        if (!a.assistant_persona.empty()) assistant.persona_prompt = mhfa::read_file(a.assistant_persona);
        mhfa::analysis::AgentConfig user;
        user.role = mhfa::gateway::Role::user;
        user.gateway = user_gw ? user_gw.get() : assistant_gw.get();
        if (!a.user_persona.empty()) user.persona_prompt = mhfa::read_file(a.user_persona);
        opts.session_id = a.session_id.empty() || bundles.size() > 1
                              ? "sim-" + bundles[i].participant_id + "-w" + std::to_string(bundles[i].week_index)
                              : a.session_id;
        const auto s = mhfa::analysis::simulate_dialogue(assistant, user, scenario, a.max_turns, opts);
        if (!s.failure.empty()) ++failed;
        turns += s.turns.size();
    }
    summary({{"sessions", bundles.size()}, {"failed", failed}, {"turns", turns}});
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string preds, labels, cf_preds, cf_labels, transcripts, bundles, analyses, matchers, sentiment = "lexicon",
        out = ".";
    int k = 5;
    std::uint64_t seed = 0;
    bool emit_plots = false;
};

std::string row_key(const json& j, std::size_t line) {
    if (j.contains("id")) return j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (j.contains("participant_id") && j.contains("week_index")) {
        return j["participant_id"].get<std::string>() + "/" + j["week_index"].dump();
    }
    return "#" + std::to_string(line);
}

int binary_field(const json& j, std::initializer_list<const char*> names, const std::string& path, std::size_t line) {
    for (const char* n : names) {
        if (j.contains(n) && j[n].is_number_integer()) {
            const int v = j[n].get<int>();
            if (v == 0 || v == 1) return v;
        }
    }
    throw mhfa::ValidationError(*names.begin(), path + ":" + std::to_string(line) + ": expected a 0/1 '" +
                                                    *names.begin() + "' field");
}

/// Joins predictions to labels by id, or by (participant_id, week_index), or by line.
std::pair<std::vector<int>, std::vector<int>> join_predictions(const std::string& preds_path,
                                                               const std::string& labels_path) {
    std::map<std::string, int> labels;
    std::size_t line = 0;
    for (const auto& j : mhfa::read_jsonl(labels_path)) {
        ++line;
        labels[row_key(j, line)] = binary_field(j, {"label", "g_truth", "truth"}, labels_path, line);
    }
    std::vector<int> p, l;
    line = 0;
    for (const auto& j : mhfa::read_jsonl(preds_path)) {
        ++line;
        const auto key = row_key(j, line);
        const auto it = labels.find(key);
        if (it == labels.end()) throw mhfa::ValidationError("labels", "no label for prediction '" + key + "'");
        p.push_back(binary_field(j, {"prediction", "pred", "outcome"}, preds_path, line));
        l.push_back(it->second);
    }
    if (p.empty()) throw mhfa::ValidationError("preds", preds_path + " holds no predictions");
    return {p, l};
}

int run_evaluate(const EvaluateArgs& a, const Common& c) {
    using namespace mhfa::eval;
    fs::create_directories(a.out);
    ordered_json result = ordered_json::object();
    const fs::path out(a.out);

    if (!a.preds.empty() || !a.labels.empty()) {
        if (a.preds.empty() || a.labels.empty()) throw mhfa::ValidationError("preds", "--preds needs --labels");
        const auto [p, l] = join_predictions(a.preds, a.labels);
        ordered_json metrics = classification_metrics(p, l).to_json();
        if (!a.cf_preds.empty()) {
            if (a.cf_labels.empty()) throw mhfa::ValidationError("cf_labels", "--cf-preds needs --cf-labels");
            const auto [cp, cl] = join_predictions(a.cf_preds, a.cf_labels);
            metrics["robustness"] = robustness_from_predictions(p, l, cp, cl).to_json();
        }
        mhfa::write_file(out / "metrics.json", metrics.dump(2) + "\n");
        result["metrics"] = metrics;
    }

    if (!a.transcripts.empty()) {
        if (a.bundles.empty()) throw mhfa::ValidationError("bundles", "--transcripts needs --bundles");
        const auto seed = mhfa::service::CohortSeed::load(a.bundles);
        std::unique_ptr<mhfa::gateway::Gateway> gw;
        SentimentScorer scorer;
        const auto lexicon = SentimentLexicon::builtin();
        if (a.sentiment == "lexicon") {
            scorer = [&](std::string_view t) { return lexicon.score(t); };
        } else if (a.sentiment == "backend") {
            gw = make_gateway(c);
            scorer = [&](std::string_view t) { return sentiment_via_backend(t, *gw); };
        } else {
            throw mhfa::ValidationError("sentiment", "sentiment must be lexicon or backend");
        }
        const auto table = a.matchers.empty() ? MatcherTable::builtin()
                                              : MatcherTable::from_json(json::parse(mhfa::read_file(a.matchers)));
        std::vector<mhfa::analysis::DialogueSession> sessions;
        std::vector<double> moods;
        std::vector<RecallReport> recalls;
        for (const auto& j : mhfa::read_jsonl(a.transcripts)) {
            auto s = mhfa::analysis::DialogueSession::from_json(j);
            std::optional<mhfa::cohort::WeeklyBundle> bundle;
            if (j.contains("bundle_ref") && j["bundle_ref"].is_object()) {
                const auto pid = j["bundle_ref"].at("participant_id").get<std::string>();
                const int week = j["bundle_ref"].at("week_index").get<int>();
                for (const auto& b : seed.bundles) {
                    if (b.participant_id == pid && b.week_index == week) bundle = b;
                }
            }
            if (!bundle) throw mhfa::ValidationError("bundles", "no bundle for transcript " + s.session_id);
            const auto mood = s.mood_context ? s.mood_context
                                             : mhfa::cohort::latest_indicator(*bundle, mhfa::cohort::IndicatorKind::mood);
            if (mood) {
                sessions.push_back(s);
                moods.push_back(*mood);
            }
            const auto it = s.metadata.find("resolved_scenario");
            const auto scenario = it != s.metadata.end() ? mhfa::analysis::parse_scenario(it->second) : s.scenario;
            recalls.push_back(behavior_recall(s, *bundle, scenario, table));
        }
        const auto tone = tone_adaptation_eval(sessions, moods, scorer);
        mhfa::write_file(out / "tone_curve.csv", tone_curve_csv(tone));
        mhfa::write_file(out / "recall.csv", recall_csv(recalls));
        result["tone"] = tone.to_json();
        auto rj = ordered_json::array();
        for (const auto& r : recalls) rj.push_back(r.to_json());
        result["recall"] = rj;
        if (a.emit_plots) {
            mhfa::write_file(out / "tone_curve.svg", tone_curve_svg(tone));
            mhfa::write_file(out / "recall.svg", recall_svg(recalls));
        }
    }

    if (!a.analyses.empty()) {
        std::vector<mhfa::analysis::AnalysisReport> reports;
        for (const auto& j : mhfa::read_jsonl(a.analyses)) {
            reports.push_back(mhfa::analysis::AnalysisReport::from_json(j.contains("report") ? j["report"] : j));
        }
        auto gw = make_gateway(c);
        const auto consistency = consistency_eval(reports, *gw, a.k, a.seed);
        mhfa::write_file(out / "consistency.json", consistency.to_json().dump(2) + "\n");
        result["consistency"] = consistency.to_json();
    }

    if (result.empty()) {
        throw mhfa::ValidationError("evaluate", "nothing to evaluate: pass --preds/--labels, --transcripts or --analyses");
    }
    summary(result);
    return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
    std::string config, store, host, token, webhook, cohort_seed;
    std::optional<int> port;
};

int run_serve(const ServeArgs& a, const Common& c) {
    mhfa::service::ServiceConfig cfg = a.config.empty() ? mhfa::service::ServiceConfig{}
                                                        : mhfa::service::ServiceConfig::from_yaml(a.config);
    if (!a.store.empty()) cfg.store_dir = a.store;
    if (!a.host.empty()) cfg.host = a.host;
    if (a.port) cfg.port = *a.port;
    if (!a.token.empty()) cfg.bearer_token = a.token;
    if (!a.webhook.empty()) cfg.webhook_url = a.webhook;
    if (!a.cohort_seed.empty()) cfg.cohort_seed = a.cohort_seed;
    if (!c.backend.empty()) cfg.backend = c.backend;
    if (cfg.bearer_token.empty()) {
        if (const char* t = std::getenv("MHFA_TOKEN")) cfg.bearer_token = t;
    }
    return mhfa::service::serve(cfg);
}

void print_error(const std::string& kind, const std::string& message, ordered_json extra = ordered_json::object()) {
    ordered_json j{{"error", kind}, {"message", message}};
    j.update(extra);
    std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wearable behavior and mental record analysis workbench"};
    app.name("mhfa");
    app.require_subcommand(1);
    app.fallthrough(false);

    Common common;

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Parse a cohort folder into labeled weekly bundles");
    s_ingest->add_option("--dataset", ingest.dataset, "Built-in layout: pmdata or globem");
    s_ingest->add_option("--root", ingest.root, "Cohort root, one folder per participant")->required();
    s_ingest->add_option("--out", ingest.out, "Output directory")->required();
    s_ingest->add_option("--mapping", ingest.mapping, "Column mapping JSON");
    s_ingest->add_option("--rule", ingest.rule, "Label rule JSON");
    s_ingest->add_option("--overrides", ingest.overrides, "Expert label overrides CSV");
    s_ingest->add_option("--fraction", ingest.fraction, "Participant subsample fraction")->check(CLI::Range(0.0, 1.0));
    s_ingest->add_option("--seed", ingest.seed, "Subsample seed");
    s_ingest->add_option("--anchor", ingest.anchor, "First weekday of each week");
    add_common(s_ingest, common);

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a synthetic cohort with hidden truth labels");
    s_synth->add_option("--seed", synth.config.seed, "Generator seed");
    s_synth->add_option("--n", synth.config.n_participants, "Participants");
    s_synth->add_option("--weeks", synth.config.weeks_per_participant, "Weeks per participant");
    s_synth->add_option("--k-d", synth.config.k_d, "Behavior coupling");
    s_synth->add_option("--k-r", synth.config.k_r, "Record coupling");
    s_synth->add_option("--u-sigma", synth.config.u_sigma, "Self-report noise sd");
    s_synth->add_option("--threshold", synth.config.label_threshold, "Latent level at which G=1");
    s_synth->add_option("--start", synth.start, "First day, YYYY-MM-DD");
    s_synth->add_option("--out", synth.out, "Output directory")->required();
    add_common(s_synth, common);

    RefineArgs refine;
    auto* s_refine = app.add_subcommand("refine-format", "Self-refine the behavior table format by perplexity");
    s_refine->add_option("--bundles", refine.bundles, "bundles.jsonl or a directory holding it")->required();
    s_refine->add_option("--participant", refine.participant, "Participant to render (default: first)");
    s_refine->add_option("--week", refine.week, "Week index (default: first)");
    s_refine->add_option("--spec", refine.spec, "Initial FormatSpec JSON (default: built-in)");
    s_refine->add_option("--max-iters", refine.max_iters, "Refinement iterations")->check(CLI::Range(0, 100));
    s_refine->add_option("--out", refine.out, "Output directory")->required();
    add_common(s_refine, common);

    ForgePtArgs pt;
    auto* s_pt = app.add_subcommand("forge-pt", "Build the pre-training corpus manifest");
    s_pt->add_option("--domain", pt.domain, "Folder of domain documents")->required();
    s_pt->add_option("--general", pt.general, "Folder of general documents")->required();
    s_pt->add_option("--keywords", pt.keywords, "Keyword table TSV (default: built-in)");
    s_pt->add_option("--min-hits", pt.min_hits, "Keyword hits needed to keep a domain document");
    s_pt->add_option("--ratio-general", pt.ratio_general, "General share of the token mix");
    s_pt->add_option("--ratio-domain", pt.ratio_domain, "Domain share of the token mix");
    s_pt->add_option("--tolerance", pt.tolerance, "Allowed relative deviation from the ratio");
    s_pt->add_option("--seed", pt.seed, "Down-sampling seed");
    s_pt->add_flag("--clean", pt.clean, "Clean every document through the backend first");
    s_pt->add_option("--out", pt.out, "Output directory")->required();
    add_common(s_pt, common);

    ForgeSftArgs sft;
    auto* s_sft = app.add_subcommand("forge-sft", "Build instruction pairs with a teacher model");
    s_sft->add_option("--seeds", sft.seeds, "Seed records JSONL");
    s_sft->add_option("--bundles", sft.bundles, "Weekly bundles to turn into analysis pairs");
    s_sft->add_option("--protocol", sft.protocol, "Teacher system prompt file (default: built-in)");
    s_sft->add_option("--spec", sft.spec, "FormatSpec for bundle pairs");
    s_sft->add_option("--out", sft.out, "Output directory")->required();
    add_common(s_sft, common);

    AugmentArgs aug;
    auto* s_aug = app.add_subcommand("augment-cf", "Add counterfactual pairs and mix them into one dataset");
    s_aug->add_option("--sft", aug.sft, "sft.jsonl")->required();
    s_aug->add_option("--seed", aug.seed, "Planning and shuffle seed");
    s_aug->add_option("--fraction", aug.fraction, "Fraction of pairs to augment")->check(CLI::Range(0.0, 1.0));
    s_aug->add_option("--out", aug.out, "Output directory")->required();
    add_common(s_aug, common);

    AnalyzeArgs an;
    auto* s_an = app.add_subcommand("analyze", "Run the five-phase analysis over weekly bundles");
    s_an->add_option("--bundles", an.bundles, "bundles.jsonl or a directory holding it")->required();
    s_an->add_option("--participant", an.participant, "Only this participant");
    s_an->add_option("--week", an.week, "Only this week index");
    s_an->add_option("--spec", an.spec, "FormatSpec JSON (default: built-in)");
    s_an->add_option("--out", an.out, "Output directory")->required();
    add_common(s_an, common);

    SimulateArgs sim;
    auto* s_sim = app.add_subcommand("simulate", "Simulate assistant and user dialogues");
    s_sim->add_option("--bundles", sim.bundles, "bundles.jsonl or a directory holding it")->required();
    s_sim->add_option("--participant", sim.participant, "Only this participant");
    s_sim->add_option("--week", sim.week, "Only this week index");
    s_sim->add_option("--scenario", sim.scenario, "physical_activity, nutrition, rest_sleep, mental_health or open");
    s_sim->add_option("--max-turns", sim.max_turns, "Messages per session");
    s_sim->add_option("--context-turns", sim.context_turns, "Turns of history sent with each request");
    s_sim->add_option("--user-backend", sim.user_backend, "Backend for the user agent (default: --backend)");
    s_sim->add_option("--user-persona", sim.user_persona, "User agent persona file");
    s_sim->add_option("--assistant-persona", sim.assistant_persona, "Extra assistant system text file");
    s_sim->add_option("--session-id", sim.session_id, "Session id for a single-bundle run");
    s_sim->add_option("--start", sim.start, "Clock start, RFC 3339");
    s_sim->add_option("--out", sim.out, "Output directory")->required();
    add_common(s_sim, common);

    EvaluateArgs ev;
    auto* s_ev = app.add_subcommand("evaluate", "Compute evaluation metrics and plot-ready tables");
    s_ev->add_option("--preds", ev.preds, "Predictions JSONL");
    s_ev->add_option("--labels", ev.labels, "Labels JSONL");
    s_ev->add_option("--cf-preds", ev.cf_preds, "Counterfactual predictions JSONL");
    s_ev->add_option("--cf-labels", ev.cf_labels, "Counterfactual labels JSONL");
    s_ev->add_option("--transcripts", ev.transcripts, "Dialogue transcripts JSONL");
    s_ev->add_option("--bundles", ev.bundles, "Bundles referenced by the transcripts");
    s_ev->add_option("--matchers", ev.matchers, "Recall matcher table JSON (default: built-in)");
    s_ev->add_option("--sentiment", ev.sentiment, "Sentiment scorer: lexicon or backend");
    s_ev->add_option("--analyses", ev.analyses, "analyses.jsonl for the consistency evaluation");
    s_ev->add_option("--k", ev.k, "Cross-validation folds")->check(CLI::Range(2, 1000));
    s_ev->add_option("--seed", ev.seed, "Fold assignment seed");
    s_ev->add_flag("--emit-plots", ev.emit_plots, "Also write SVG charts next to the CSVs");
    s_ev->add_option("--out", ev.out, "Output directory");
    add_common(s_ev, common);

    ServeArgs sv;
    auto* s_sv = app.add_subcommand("serve", "Run the HTTP service");
    s_sv->add_option("--config", sv.config, "Service config YAML");
    s_sv->add_option("--store", sv.store, "Store directory");
    s_sv->add_option("--host", sv.host, "Bind address");
    s_sv->add_option("--port", sv.port, "Port")->check(CLI::Range(0, 65535));
    s_sv->add_option("--token", sv.token, "Bearer token (or MHFA_TOKEN)");
    s_sv->add_option("--webhook", sv.webhook, "Risk escalation webhook URL");
    s_sv->add_option("--cohort-seed", sv.cohort_seed, "bundles.jsonl or directory with portraits");
    add_common(s_sv, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        const CLI::App* active = &app;
        for (auto* sub : app.get_subcommands()) active = sub;
        std::cerr << active->help();
        return 2;
    }

    try {
        if (!common.template_dir.empty()) mhfa::templates::set_override_dir(common.template_dir);
        if (s_ingest->parsed()) return run_ingest(ingest);
        if (s_synth->parsed()) return run_synth(synth);
        if (s_refine->parsed()) return run_refine(refine, common);
        if (s_pt->parsed()) return run_forge_pt(pt, common);
        if (s_sft->parsed()) return run_forge_sft(sft, common);
        if (s_aug->parsed()) return run_augment(aug, common);
        if (s_an->parsed()) return run_analyze(an, common);
        if (s_sim->parsed()) return run_simulate(sim, common);
        if (s_ev->parsed()) return run_evaluate(ev, common);
        if (s_sv->parsed()) return run_serve(sv, common);
    } catch (const mhfa::ValidationError& e) {
        print_error("validation", e.what(), {{"field", e.field()}});
        return 1;
    } catch (const mhfa::IoError& e) {
        print_error("io", e.what(), {{"path", e.path()}});
        return 1;
    } catch (const mhfa::gateway::GatewayError& e) {
        print_error("backend", e.what(), {{"kind", mhfa::gateway::error_kind_name(e.kind())}});
        return 1;
    } catch (const mhfa::ParseError& e) {
        print_error("parse", e.what());
        return 1;
    } catch (const mhfa::Error& e) {
        print_error("error", e.what());
        return 1;
    } catch (const nlohmann::json::exception& e) {
        print_error("parse", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
    return 0;
}
