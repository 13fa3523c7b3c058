#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <future>
#include <thread>

#include <httplib.h>

#include "mhfa/analysis/analysis.hpp"
#include "mhfa/cohort/serialize.hpp"
#include "mhfa/core/dates.hpp"
#include "mhfa/core/text.hpp"
#include "mhfa/service/events.hpp"
#include "mhfa/service/server.hpp"
#include "mhfa/service/state.hpp"
#include "support.hpp"

using namespace mhfa;
using namespace mhfa::service;
using gateway::ChatMessage;
using gateway::ChatResult;
using gateway::GenParams;
using nlohmann::json;

namespace {

std::string five_phase(int outcome) {
    std::string out;
    const char* bodies[] = {"Sleep shortened.", "Steps fell.", "Mood tracks activity.", "Walk daily.", ""};
    for (int p = 1; p <= 5; ++p) out += analysis::phase_header(p) + "\n" + bodies[p - 1] + "\n";
    return out + "Outcome: " + std::to_string(outcome) + "\n";
}

analysis::Clock fixed_clock() {
    return [] { return std::chrono::sys_days{std::chrono::year{2024} / 1 / 8} + std::chrono::hours(15); };
}

/// Analysis prompts get a five-phase reply with `outcome`; other prompts get
/// a short acknowledgement that quotes the user's last message.
std::shared_ptr<gateway::Backend> scripted(int outcome = 1) {
    return std::make_shared<gateway::CallbackBackend>(
        "callback", [outcome](std::span<const ChatMessage> m, const GenParams&) -> ChatResult {
            if (m.back().content.find(analysis::phase_header(1)) != std::string::npos) return {five_phase(outcome), "stop"};
            return {"Thanks for sharing: " + m.back().content, "stop"};
        });
}

ServiceConfig config_in(const test::TempDir& dir) {
    ServiceConfig c;
    c.store_dir = dir / "store";
    return c;
}

SessionEvent event(EventKind kind, std::string sid, json payload) {
    return {0, std::move(sid), kind, std::move(payload), "2024-01-08T15:00:00Z"};
}

json ema(const std::string& pid, const std::string& date, json indicators) {
    return {{"participant_id", pid}, {"date", date}, {"indicators", std::move(indicators)}};
}

}  // namespace

TEST(EventLog, AssignsSequentialIdsAndRecovers) {
    test::TempDir dir;
    {
        EventLog log(dir / "events.jsonl");
        EXPECT_EQ(log.append(event(EventKind::session_opened, "s-000001", {{"participant_id", "P01"}})).event_id, 1u);
        const auto batch = log.append(std::vector<SessionEvent>{event(EventKind::user_msg, "s-000001", {{"text", "a"}}),
                                                               event(EventKind::assistant_msg, "s-000001", {{"text", "b"}})});
        EXPECT_EQ(batch[0].event_id, 2u);
        EXPECT_EQ(batch[1].event_id, 3u);
    }
    EventLog again(dir / "events.jsonl");
    ASSERT_EQ(again.recovered().size(), 3u);
    EXPECT_FALSE(again.truncated_tail());
    EXPECT_EQ(again.recovered()[2].payload["text"], "b");
    EXPECT_EQ(again.append(event(EventKind::user_msg, "s-000001", {{"text", "c"}})).event_id, 4u);
}

TEST(EventLog, TornTailIsCutOff) {
    test::TempDir dir;
    {
        EventLog log(dir / "events.jsonl");
        log.append(event(EventKind::session_opened, "s-000001", {{"participant_id", "P01"}}));
    }
    {
        std::ofstream out(dir / "events.jsonl", std::ios::app);
        out << R"({"event_id":2,"session_id":"s-000001","ki)";
    }
    {
        EventLog log(dir / "events.jsonl");
        EXPECT_TRUE(log.truncated_tail());
        EXPECT_EQ(log.recovered().size(), 1u);
        EXPECT_EQ(log.append(event(EventKind::user_msg, "s-000001", {{"text", "after"}})).event_id, 2u);
    }
    EventLog log(dir / "events.jsonl");
    EXPECT_FALSE(log.truncated_tail());
    ASSERT_EQ(log.recovered().size(), 2u);
    EXPECT_EQ(log.recovered()[1].payload["text"], "after");
}

TEST(EventLog, CorruptCompleteLineIsAnError) {
    test::TempDir dir;
    {
        std::ofstream out(dir / "events.jsonl");
        out << "not json\n";
    }
    EXPECT_THROW(EventLog(dir / "events.jsonl"), ParseError);
}

TEST(State, ReplayIsDeterministicAndSnapshotsRoundTrip) {
    test::TempDir dir;
    EventLog log(dir / "events.jsonl");
    std::vector<SessionEvent> events = {
        event(EventKind::session_opened, "s-000001", {{"participant_id", "P01"}, {"scenario", "open"}}),
        event(EventKind::user_msg, "s-000001", {{"text", "hi"}, {"resolved_scenario", "mental_health"}}),
        event(EventKind::assistant_msg, "s-000001", {{"text", "hello"}}),
        event(EventKind::ema_submitted, "", ema("P01", "2024-01-03", {{"mood", 2}})),
        event(EventKind::ema_submitted, "", ema("P01", "2024-01-03", {{"stress", 4}})),
    };
    events = log.append(events);

    ServiceState a, b;
    for (const auto& e : events) a.apply(e);
    for (const auto& e : events) b.apply(e);
    EXPECT_EQ(a, b);
    ASSERT_NE(a.session("s-000001"), nullptr);
    EXPECT_EQ(a.session("s-000001")->turns.size(), 2u);
    EXPECT_EQ(a.next_session_id(), "s-000002");
    ASSERT_EQ(a.ema().at("P01").size(), 1u);
    EXPECT_EQ(a.ema().at("P01")[0].indicators.size(), 2u);
    EXPECT_EQ(format_date(a.origins().at("P01")), "2024-01-01");

    ServiceState mid;
    for (std::size_t i = 0; i < 2; ++i) mid.apply(events[i]);
    write_snapshot(mid, dir / "snapshot.json");
    EXPECT_EQ(load_snapshot(dir / "snapshot.json"), mid);
    const EventLog reopened(dir / "events.jsonl");
    EXPECT_EQ(recover(dir / "snapshot.json", reopened), a);
    EXPECT_EQ(recover(dir / "missing.json", reopened), a);
    EXPECT_EQ(ServiceState::from_json(a.to_json()), a);
}

TEST(State, WeekIndexAndOrigin) {
    EXPECT_EQ(week_index_of(test::day(2024, 1, 1), test::day(2024, 1, 7)), 0);
    EXPECT_EQ(week_index_of(test::day(2024, 1, 1), test::day(2024, 1, 8)), 1);
    EXPECT_EQ(week_index_of(test::day(2024, 1, 1), test::day(2023, 12, 31)), -1);
}

TEST(Handlers, SessionLifecycle) {
    test::TempDir dir;
    GuardService svc(config_in(dir), scripted(), fixed_clock());
    const auto opened = svc.open_session({{"participant_id", "P01"}, {"scenario", "rest_sleep"}});
    ASSERT_EQ(opened.status, 201);
    EXPECT_EQ(opened.body["session_id"], "s-000001");
    EXPECT_TRUE(opened.body["turns"].empty());

    const auto reply = svc.post_message("s-000001", {{"text", "I slept badly."}});
    ASSERT_EQ(reply.status, 200) << reply.body.dump();
    EXPECT_EQ(reply.body["reply"], "Thanks for sharing: I slept badly.");
    EXPECT_EQ(reply.body["session"]["turns"].size(), 2u);
    EXPECT_EQ(svc.get_session("s-000001").body, reply.body["session"]);
    EXPECT_EQ(svc.healthz().body["last_event_id"], 3);
}

TEST(Handlers, ErrorStatuses) {
    test::TempDir dir;
    GuardService svc(config_in(dir), scripted(), fixed_clock());
    EXPECT_EQ(svc.get_session("s-999999").status, 404);
    EXPECT_EQ(svc.post_message("s-999999", {{"text", "x"}}).status, 404);
    const auto missing = svc.open_session(json::object());
    EXPECT_EQ(missing.status, 422);
    EXPECT_EQ(missing.body["field"], "participant_id");
    EXPECT_EQ(svc.open_session({{"participant_id", "P01"}, {"scenario", "gardening"}}).status, 422);
    svc.open_session({{"participant_id", "P01"}});
    EXPECT_EQ(svc.post_message("s-000001", {{"text", "   "}}).status, 422);
    EXPECT_EQ(svc.post_message("s-000001", {{"txt", "x"}}).status, 422);
    EXPECT_EQ(svc.analyze("P01", "abc").status, 422);
    EXPECT_EQ(svc.analyze("NOBODY", "0").status, 404);
    EXPECT_EQ(svc.get_report("NOBODY", "0").status, 404);
    EXPECT_EQ(svc.state().last_event_id(), 1u);
}

TEST(Handlers, BackendFailureLeavesSessionUnchanged) {
    test::TempDir dir;
    auto failing = std::make_shared<gateway::CallbackBackend>(
        "callback", [](std::span<const ChatMessage>, const GenParams&) -> ChatResult {
            throw gateway::GatewayError(gateway::ErrorKind::http_status, "HTTP 400: bad request", "", 400);
        });
    GuardService svc(config_in(dir), failing, fixed_clock());
    svc.open_session({{"participant_id", "P01"}});
    const auto r = svc.post_message("s-000001", {{"text", "hello"}});
    EXPECT_EQ(r.status, 502);
    EXPECT_TRUE(svc.get_session("s-000001").body["turns"].empty());
    EXPECT_EQ(svc.state().last_event_id(), 1u);
}

TEST(Handlers, SecondConcurrentPostToSameSessionGets409) {
    test::TempDir dir;
    std::promise<void> entered, release;
    auto released = release.get_future().share();
    std::atomic<int> calls{0};
    auto slow = std::make_shared<gateway::CallbackBackend>(
        "callback", [&](std::span<const ChatMessage>, const GenParams&) -> ChatResult {
            if (calls++ == 0) {
                entered.set_value();
                released.wait();
            }
            return {"ok", "stop"};
        });
    GuardService svc(config_in(dir), slow, fixed_clock());
    svc.open_session({{"participant_id", "P01"}});
    auto first = std::async(std::launch::async, [&] { return svc.post_message("s-000001", {{"text", "one"}}); });
    entered.get_future().wait();
    EXPECT_EQ(svc.post_message("s-000001", {{"text", "two"}}).status, 409);
    release.set_value();
    EXPECT_EQ(first.get().status, 200);
    EXPECT_EQ(svc.get_session("s-000001").body["turns"].size(), 2u);
}

TEST(Handlers, DistinctSessionsRunConcurrently) {
    test::TempDir dir;
    GuardService svc(config_in(dir), scripted(), fixed_clock());
    constexpr int kSessions = 8, kMessages = 5;
    for (int i = 0; i < kSessions; ++i) ASSERT_EQ(svc.open_session({{"participant_id", "P0" + std::to_string(i)}}).status, 201);
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int i = 0; i < kSessions; ++i) {
        threads.emplace_back([&, i] {
            char id[16];
            std::snprintf(id, sizeof id, "s-%06d", i + 1);
            for (int m = 0; m < kMessages; ++m) {
                if (svc.post_message(id, {{"text", "message " + std::to_string(m)}}).status == 200) ++ok;
            }
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok, kSessions * kMessages);
    const auto st = svc.state();
    EXPECT_EQ(st.last_event_id(), static_cast<std::uint64_t>(kSessions + 2 * kSessions * kMessages));
    for (const auto& [id, s] : st.sessions()) {
        ASSERT_EQ(s.turns.size(), 2u * kMessages) << id;
        for (int m = 0; m < kMessages; ++m) EXPECT_EQ(s.turns[2 * m].text, "message " + std::to_string(m));
    }
}

TEST(Handlers, EmaValidationAndSupersede) {
    test::TempDir dir;
    GuardService svc(config_in(dir), scripted(), fixed_clock());
    const auto bad = svc.submit_ema(ema("P01", "2024-01-03", {{"phq4", 13}}));
    EXPECT_EQ(bad.status, 422);
    EXPECT_EQ(bad.body["field"], "phq4");
    EXPECT_EQ(svc.submit_ema(ema("P01", "2024-13-03", {{"mood", 3}})).status, 422);
    EXPECT_EQ(svc.submit_ema(ema("P01", "2024-01-03", {{"wellbeing", 3}})).status, 422);
    EXPECT_EQ(svc.submit_ema(ema("P01", "2024-01-03", json::object())).status, 422);

    ASSERT_EQ(svc.submit_ema(ema("P01", "2024-01-03", {{"mood", 2}, {"stress", 4}})).status, 200);
    const auto second = svc.submit_ema(ema("P01", "2024-01-03", {{"mood", 4}}));
    ASSERT_EQ(second.status, 200);
    EXPECT_EQ(second.body["week"], 0);
    const auto& records = second.body["bundle"]["records"];
    ASSERT_EQ(records.size(), 1u);
    const auto rec = cohort::record_from_json(records[0]);
    EXPECT_EQ(rec.find(cohort::IndicatorKind::mood)->value, 4);
    EXPECT_EQ(rec.find(cohort::IndicatorKind::stress)->value, 4);

    EXPECT_EQ(svc.submit_ema(ema("P01", "2024-01-10", {{"mood", 3}})).body["week"], 1);
    EXPECT_EQ(svc.submit_ema(ema("P01", "2023-12-20", {{"mood", 3}})).status, 422);
}

TEST(Handlers, AnalyzeStoresReportAndFiresWebhook) {
    test::TempDir dir;
    httplib::Server hook;
    std::mutex mu;
    std::vector<json> received;
    hook.Post("/hook", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lk(mu);
        received.push_back(json::parse(req.body));
        res.status = 204;
    });
    const int port = hook.bind_to_any_port("127.0.0.1");
    std::thread hook_thread([&] { hook.listen_after_bind(); });

    {
        auto cfg = config_in(dir);
        cfg.webhook_url = "http://127.0.0.1:" + std::to_string(port) + "/hook";
        GuardService svc(cfg, scripted(1), fixed_clock());
        svc.submit_ema(ema("P01", "2024-01-02", {{"mood", 1}, {"phq4", 9}}));
        const auto r = svc.analyze("P01", "0");
        ASSERT_EQ(r.status, 200) << r.body.dump();
        EXPECT_EQ(r.body["outcome"], 1);
        svc.drain_webhooks();

        const auto stored = svc.get_report("P01", "0");
        ASSERT_EQ(stored.status, 200);
        EXPECT_EQ(stored.body["report"], r.body);
        EXPECT_EQ(stored.body["bundle"]["participant_id"], "P01");
    }
    hook.stop();
    hook_thread.join();
    ASSERT_EQ(received.size(), 1u);
    EXPECT_EQ(received[0]["event"], "risk_escalation");
    EXPECT_EQ(received[0]["participant_id"], "P01");
    EXPECT_EQ(received[0]["week"], 0);
    EXPECT_EQ(received[0]["recommendation"], "Walk daily.");
}

TEST(Handlers, HealthyOutcomeSendsNoWebhook) {
    test::TempDir dir;
    auto cfg = config_in(dir);
    cfg.webhook_url = "http://127.0.0.1:1/hook";
    GuardService svc(cfg, scripted(0), fixed_clock());
    svc.submit_ema(ema("P01", "2024-01-02", {{"mood", 4}}));
    EXPECT_EQ(svc.analyze("P01", "0").body["outcome"], 0);
    svc.drain_webhooks();
}

TEST(Handlers, StateSurvivesRestart) {
    test::TempDir dir;
    ServiceState before;
    {
        GuardService svc(config_in(dir), scripted(), fixed_clock());
        svc.open_session({{"participant_id", "P01"}});
        svc.post_message("s-000001", {{"text", "hello"}});
        svc.submit_ema(ema("P01", "2024-01-02", {{"mood", 2}}));
        before = svc.state();
    }
    GuardService again(config_in(dir), scripted(), fixed_clock());
    EXPECT_EQ(again.state(), before);
    EXPECT_EQ(again.open_session({{"participant_id", "P02"}}).body["session_id"], "s-000002");
}

TEST(Handlers, SeededCohortProvidesBundles) {
    test::TempDir dir;
    {
        std::ofstream out(dir / "bundles.jsonl");
        out << cohort::to_jsonl({test::full_week("P01", 2)});
    }
    auto cfg = config_in(dir);
    cfg.cohort_seed = dir / "bundles.jsonl";
    GuardService svc(cfg, scripted(), fixed_clock());
    const auto r = svc.get_report("P01", "0");
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["bundle"]["behavior"].size(), 7u);
    EXPECT_TRUE(r.body["report"].is_null());
    const auto merged = svc.submit_ema(ema("P01", "2024-01-03", {{"mood", 5}}));
    EXPECT_EQ(merged.body["week"], 0);
    EXPECT_EQ(merged.body["bundle"]["behavior"].size(), 7u);
}

TEST(Http, RoutesAuthAndCors) {
    test::TempDir dir;
    auto cfg = config_in(dir);
    cfg.bearer_token = "secret";
    GuardService svc(cfg, scripted(), fixed_clock());
    const int port = svc.bind(0);
    std::thread server([&] { svc.listen_after_bind(); });

    httplib::Client cli("127.0.0.1", port);
    const httplib::Headers auth = {{"Authorization", "Bearer secret"}};
    auto health = cli.Get("/healthz");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

    auto denied = cli.Post("/sessions", R"({"participant_id":"P01"})", "application/json");
    ASSERT_TRUE(denied);
    EXPECT_EQ(denied->status, 401);
    EXPECT_EQ(cli.Post("/sessions", {{"Authorization", "Bearer wrong"}}, "{}", "application/json")->status, 401);

    auto preflight = cli.Options("/sessions");
    ASSERT_TRUE(preflight);
    EXPECT_EQ(preflight->status, 204);
    EXPECT_NE(preflight->get_header_value("Access-Control-Allow-Headers").find("Authorization"), std::string::npos);

    auto opened = cli.Post("/sessions", auth, R"({"participant_id":"P01"})", "application/json");
    ASSERT_TRUE(opened);
    EXPECT_EQ(opened->status, 201);
    const auto id = json::parse(opened->body)["session_id"].get<std::string>();

    auto msg = cli.Post("/sessions/" + id + "/messages", auth, R"({"text":"hi"})", "application/json");
    ASSERT_TRUE(msg);
    EXPECT_EQ(msg->status, 200);
    EXPECT_EQ(json::parse(msg->body)["reply"], "Thanks for sharing: hi");

    EXPECT_EQ(cli.Get("/sessions/" + id, auth)->status, 200);
    EXPECT_EQ(cli.Get("/sessions/s-999999", auth)->status, 404);
    EXPECT_EQ(cli.Post("/sessions", auth, "{oops", "application/json")->status, 400);

    auto ema_res = cli.Post("/ema", auth, ema("P01", "2024-01-02", {{"mood", 2}}).dump(), "application/json");
    EXPECT_EQ(ema_res->status, 200);
    auto analyzed = cli.Post("/participants/P01/analyze?week=0", auth, "", "application/json");
    ASSERT_TRUE(analyzed);
    EXPECT_EQ(analyzed->status, 200);
    auto report = cli.Get("/participants/P01/weeks/0/report", auth);
    ASSERT_TRUE(report);
    EXPECT_EQ(json::parse(report->body)["report"], json::parse(analyzed->body));

    auto unknown = cli.Get("/nowhere", auth);
    ASSERT_TRUE(unknown);
    EXPECT_EQ(unknown->status, 404);
    EXPECT_TRUE(json::parse(unknown->body).contains("error"));

    svc.stop();
    server.join();
}

TEST(Config, FromYaml) {
    test::TempDir dir;
    {
        std::ofstream out(dir / "service.yaml");
        out << "store_dir: data\nport: 9000\nbearer_token: t\nbackend: mock:script.yaml\nsnapshot_every: 10\n"
               "utc_offset_minutes: -300\n";
    }
    const auto c = ServiceConfig::from_yaml(dir / "service.yaml");
    EXPECT_EQ(c.store_dir, dir / "data");
    EXPECT_EQ(c.port, 9000);
    EXPECT_EQ(c.bearer_token, "t");
    EXPECT_EQ(c.backend, "mock:" + (dir / "script.yaml").string());
    EXPECT_EQ(c.snapshot_every, 10u);
    EXPECT_EQ(c.utc_offset_minutes, -300);

    {
        std::ofstream out(dir / "bad.yaml");
        out << "prot: 1\n";
    }
    EXPECT_THROW(ServiceConfig::from_yaml(dir / "bad.yaml"), ValidationError);
    {
        std::ofstream out(dir / "zero.yaml");
        out << "snapshot_every: 0\n";
    }
    EXPECT_THROW(ServiceConfig::from_yaml(dir / "zero.yaml"), ValidationError);
    EXPECT_THROW(ServiceConfig::from_yaml(dir / "absent.yaml"), IoError);
}
