#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mhfa/cohort/types.hpp"
#include "mhfa/gateway/backend.hpp"
#include "mhfa/gateway/gateway.hpp"
#include "mhfa/gateway/mock_backend.hpp"

namespace mhfa::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tpl = (std::filesystem::temp_directory_path() / "mhfa-test-XXXXXX").string();
        if (!mkdtemp(tpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(MHFA_FIXTURES) / rel; }

/// Fast-failing options so error-path tests do not sleep through backoff.
inline gateway::GatewayOptions quick_options() {
    gateway::GatewayOptions o;
    o.initial_backoff = std::chrono::milliseconds(1);
    return o;
}

inline std::unique_ptr<gateway::Gateway> mock_gateway(const std::string& yaml,
                                                      gateway::GatewayOptions opts = quick_options()) {
    auto backend = std::make_shared<gateway::MockBackend>(gateway::MockScript::from_yaml(yaml));
    return std::make_unique<gateway::Gateway>(backend, opts);
}

inline std::unique_ptr<gateway::Gateway> callback_gateway(gateway::CallbackBackend::ChatFn chat,
                                                          gateway::CallbackBackend::ScoreFn score = {},
                                                          gateway::CallbackBackend::EmbedFn embed = {},
                                                          std::size_t dim = 0,
                                                          gateway::GatewayOptions opts = quick_options()) {
    auto backend = std::make_shared<gateway::CallbackBackend>("callback", std::move(chat), std::move(score),
                                                              std::move(embed), dim);
    return std::make_unique<gateway::Gateway>(backend, opts);
}

inline Date day(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

/// Seven full days starting 2024-01-01 with steady values and a daily mood.
inline cohort::WeeklyBundle full_week(const std::string& pid = "P01", double mood = 3, int week = 0) {
    cohort::WeeklyBundle b;
    b.participant_id = pid;
    b.week_index = week;
    b.week_start = day(2024, 1, 1) + std::chrono::days{7 * week};
    for (int i = 0; i < 7; ++i) {
        cohort::DailyBehavior d;
        d.date = b.week_start + std::chrono::days{i};
        d.steps = 8000 + 250 * i;
        d.calories_in = 2100 + 10 * i;
        d.calories_burned = 2300 + 15 * i;
        d.exercise_minutes = 30 + i;
        d.sleep_minutes = 420 - 5 * i;
        d.sleep_efficiency = 0.9;
        d.resting_hr = 60 + (i % 3);
        d.phone_usage_minutes = 180 + 4 * i;
        d.location_variance = 0.25;
        b.behavior.push_back(d);
        cohort::MentalRecordEntry r;
        r.date = d.date;
        r.set(cohort::IndicatorKind::mood, mood);
        r.set(cohort::IndicatorKind::stress, 3);
        r.set(cohort::IndicatorKind::fatigue, 2);
        b.records.push_back(r);
    }
    return b;
}

inline cohort::UserPortrait portrait(const std::string& pid = "P01") {
    return {pid, "25-34", "female", {"calm"}};
}

}  // namespace mhfa::test
