#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhfa/cohort/types.hpp"

namespace mhfa::synth {

/// Latent mental status M for one participant-week, together with the
/// couplings that generate its observations:
///   D = k_d * M                 (behavior, through fixed monotone curves)
///   R = k_r * M + U,  U ~ N(0, u_sigma^2)   (each self-report)
struct CausalFrame {
    double m_level = 0;  ///< in [0, 5]; higher is more severe
    double k_d = 1;
    double k_r = 1;
    double u_sigma = 0;
    std::uint64_t seed = 0;
};

struct MPrior {
    double mean = 2.2;
    double sd = 1.0;
    double lo = 0.0;
    double hi = 5.0;
};

struct SynthConfig {
    int n_participants = 40;
    int weeks_per_participant = 4;
    MPrior frame_prior;
    double label_threshold = 3.5;
    double k_d = 1.0;
    double k_r = 1.0;
    double u_sigma = 0.5;
    std::uint64_t seed = 7;
    Date start = Date{std::chrono::year{2024} / std::chrono::January / 1};

    /// Throws ValidationError on counts < 1, u_sigma < 0, non-finite couplings
    /// or a threshold outside the prior's range.
    void validate() const;
};

struct TruthRow {
    std::string participant_id;
    int week_index = 0;
    double m_level = 0;
    int g_truth = 0;
};

/// An indicator value that hit its scale bound and was clamped.
struct ClampEvent {
    std::string participant_id;
    Date date{};
    cohort::IndicatorKind kind{};
    double raw = 0;
};

struct SynthCohort {
    cohort::Cohort cohort;
    std::vector<cohort::WeeklyBundle> bundles;  ///< labeled, label_source=synthetic
    std::vector<TruthRow> truth;
    std::vector<ClampEvent> clamped;
};

/// Behavior for one day at coupled level x = k_d * M, clamped to [0, 5].
/// Piecewise-linear and monotone. Higher x lowers activity and sleep while
/// raising resting heart rate and phone use; x = 0 is the healthy end.
cohort::DailyBehavior behavior_at(double coupled_level, Date date);

/// Value reported for one indicator before clamping: (k_r*M + noise) scaled by
/// scale_max/5, so 1-5 instruments read k_r*M + noise directly.
double raw_indicator(cohort::IndicatorKind kind, double m_level, double k_r, double noise);

/// Generates the cohort. Each participant draws from its own stream keyed by
/// (seed, participant index), so output is independent of generation order.
SynthCohort generate(const SynthConfig& config);

std::string truth_csv(const std::vector<TruthRow>& rows);

/// Daily items generated for every synthetic day; weekly items go on the
/// first day of each week.
inline constexpr std::array<cohort::IndicatorKind, 3> kDailyIndicators = {
    cohort::IndicatorKind::mood, cohort::IndicatorKind::stress, cohort::IndicatorKind::fatigue};
inline constexpr std::array<cohort::IndicatorKind, 2> kWeeklyIndicators = {
    cohort::IndicatorKind::phq4, cohort::IndicatorKind::pss4};

}  // namespace mhfa::synth
