#include "mhfa/synth/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <cstdio>

#include "mhfa/core/errors.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::synth {

using namespace mhfa::cohort;

void SynthConfig::validate() const {
    if (n_participants < 1) throw ValidationError("n_participants", "n_participants must be >= 1");
    if (weeks_per_participant < 1) throw ValidationError("weeks_per_participant", "weeks must be >= 1");
    if (!std::isfinite(k_d) || !std::isfinite(k_r)) throw ValidationError("k_d", "couplings must be finite");
    if (!(u_sigma >= 0)) throw ValidationError("u_sigma", "u_sigma must be >= 0");
    if (!(frame_prior.lo < frame_prior.hi) || !(frame_prior.sd > 0)) {
        throw ValidationError("frame_prior", "prior needs lo < hi and sd > 0");
    }
    if (label_threshold < frame_prior.lo || label_threshold > frame_prior.hi) {
        throw ValidationError("label_threshold", "label_threshold must lie within the M range");
    }
}

namespace {

struct Knot {
    double x;
    double y;
};

template <std::size_t N>
double piecewise(const std::array<Knot, N>& knots, double x) {
    if (x <= knots.front().x) return knots.front().y;
    for (std::size_t i = 1; i < N; ++i) {
        if (x <= knots[i].x) {
            const double t = (x - knots[i - 1].x) / (knots[i].x - knots[i - 1].x);
            return knots[i - 1].y + t * (knots[i].y - knots[i - 1].y);
        }
    }
    return knots.back().y;
}

// Breakpoints of the behavior coupling, x in [0, 5].
constexpr std::array<Knot, 3> kSteps{{{0, 11000}, {2.5, 7000}, {5, 2500}}};
constexpr std::array<Knot, 3> kSleep{{{0, 480}, {2.5, 420}, {5, 300}}};
constexpr std::array<Knot, 3> kExercise{{{0, 60}, {2.5, 30}, {5, 5}}};
constexpr std::array<Knot, 2> kBurned{{{0, 2800}, {5, 2000}}};
constexpr std::array<Knot, 3> kIntake{{{0, 2200}, {2.5, 2100}, {5, 1600}}};
constexpr std::array<Knot, 2> kRestingHr{{{0, 58}, {5, 76}}};
constexpr std::array<Knot, 2> kEfficiency{{{0, 0.95}, {5, 0.75}}};
constexpr std::array<Knot, 2> kPhone{{{0, 120}, {5, 360}}};
constexpr std::array<Knot, 2> kLocation{{{0, 1.0}, {5, 0.2}}};

double round_to(double v, int decimals) {
    const double f = std::pow(10.0, decimals);
    return std::round(v * f) / f;
}

constexpr std::array<const char*, 5> kAgeBands = {"18-25", "25-30", "30-40", "40-50", "50-60"};

}  // namespace

DailyBehavior behavior_at(double coupled_level, Date date) {
    const double x = std::clamp(coupled_level, 0.0, 5.0);
    DailyBehavior d;
    d.date = date;
    d.steps = std::round(piecewise(kSteps, x));
    d.calories_in = std::round(piecewise(kIntake, x));
    d.calories_burned = std::round(piecewise(kBurned, x));
    d.exercise_minutes = std::round(piecewise(kExercise, x));
    d.sleep_minutes = std::round(piecewise(kSleep, x));
    d.sleep_efficiency = round_to(piecewise(kEfficiency, x), 2);
    d.resting_hr = std::round(piecewise(kRestingHr, x));
    d.phone_usage_minutes = std::round(piecewise(kPhone, x));
    d.location_variance = round_to(piecewise(kLocation, x), 2);
    return d;
}

double raw_indicator(IndicatorKind kind, double m_level, double k_r, double noise) {
    return (k_r * m_level + noise) * indicator_scale(kind).max / 5.0;
}

SynthCohort generate(const SynthConfig& config) {
    config.validate();
    SynthCohort out;
    out.cohort.dataset = "synthetic";
    const int width = config.n_participants >= 1000 ? 4 : 3;

    for (int pi = 0; pi < config.n_participants; ++pi) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed & 0xffffffffu),
                          static_cast<std::uint32_t>(config.seed >> 32), static_cast<std::uint32_t>(pi)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> prior(config.frame_prior.mean, config.frame_prior.sd);
        std::normal_distribution<double> noise(0.0, 1.0);

        char id[16];
        std::snprintf(id, sizeof id, width == 4 ? "S%04d" : "S%03d", pi + 1);
        Participant p;
        p.portrait.participant_id = id;
        p.portrait.age_band = kAgeBands[static_cast<std::size_t>(pi) % kAgeBands.size()];
        p.portrait.gender = pi % 2 == 0 ? "female" : "male";

        for (int w = 0; w < config.weeks_per_participant; ++w) {
            double m = 0;
            do {
                m = prior(rng);
            } while (m < config.frame_prior.lo || m > config.frame_prior.hi);

            WeeklyBundle bundle;
            bundle.participant_id = p.id();
            bundle.week_index = w;
            bundle.week_start = config.start + std::chrono::days{7 * w};
            const int g = m >= config.label_threshold ? 1 : 0;
            bundle.label = g;
            bundle.label_source = LabelSource::synthetic;

            for (int day = 0; day < 7; ++day) {
                const Date date = bundle.week_start + std::chrono::days{day};
                DailyBehavior b = behavior_at(config.k_d * m, date);
                MentalRecordEntry entry;
                entry.date = date;
                auto emit = [&](IndicatorKind kind) {
                    const double u = config.u_sigma > 0 ? config.u_sigma * noise(rng) : 0.0;
                    const double raw = raw_indicator(kind, m, config.k_r, u);
                    const auto& scale = indicator_scale(kind);
                    double v = round_to(raw, 2);
                    if (v < scale.min || v > scale.max) {
                        out.clamped.push_back({p.id(), date, kind, raw});
                        v = std::clamp(v, scale.min, scale.max);
                    }
                    entry.set(kind, v);
                };
                for (auto kind : kDailyIndicators) emit(kind);
                if (day == 0) {
                    for (auto kind : kWeeklyIndicators) emit(kind);
                }
                bundle.behavior.push_back(b);
                bundle.records.push_back(entry);
                p.days.push_back(b);
                p.records.push_back(entry);
            }
            out.truth.push_back({p.id(), w, m, g});
            out.bundles.push_back(std::move(bundle));
        }
        out.cohort.participants.push_back(std::move(p));
    }
    return out;
}

std::string truth_csv(const std::vector<TruthRow>& rows) {
    std::string out = "participant_id,week_index,m_level,g_truth\n";
    for (const auto& r : rows) {
        out += csv_escape(r.participant_id) + "," + std::to_string(r.week_index) + "," +
               format_number(r.m_level) + "," + std::to_string(r.g_truth) + "\n";
    }
    return out;
}

}  // namespace mhfa::synth
