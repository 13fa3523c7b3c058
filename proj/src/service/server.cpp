#include "mhfa/service/server.hpp"

#include <csignal>
#include <pthread.h>

#include <httplib.h>
#include <yaml-cpp/yaml.h>

#include "mhfa/cohort/serialize.hpp"
#include "mhfa/cohort/weekly.hpp"
#include "mhfa/core/dates.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/text.hpp"
#include "mhfa/gateway/factory.hpp"
#include "mhfa/gateway/http_backend.hpp"

namespace mhfa::service {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

ServiceConfig ServiceConfig::from_yaml(const fs::path& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::BadFile&) {
        throw IoError(path.string(), "cannot read service config");
    } catch (const YAML::Exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    ServiceConfig c;
    if (!root || root.IsNull()) return c;
    if (!root.IsMap()) throw ParseError(path.string() + ": config must be a mapping");
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() || base.empty() ? fs::path(p) : base / p; };
    try {
        for (const auto& kv : root) {
            const auto key = kv.first.as<std::string>();
            const auto& v = kv.second;
            if (key == "store_dir") c.store_dir = resolve(v.as<std::string>());
            else if (key == "host") c.host = v.as<std::string>();
            else if (key == "port") c.port = v.as<int>();
            else if (key == "bearer_token") c.bearer_token = v.as<std::string>();
            else if (key == "webhook_url") c.webhook_url = v.as<std::string>();
            else if (key == "backend") {
                c.backend = v.as<std::string>();
                if (c.backend.rfind("mock:", 0) == 0) c.backend = "mock:" + resolve(c.backend.substr(5)).string();
                if (c.backend.rfind("replay:", 0) == 0) c.backend = "replay:" + resolve(c.backend.substr(7)).string();
            } else if (key == "cohort_seed") c.cohort_seed = resolve(v.as<std::string>());
            else if (key == "snapshot_every") c.snapshot_every = v.as<std::size_t>();
            else if (key == "context_turns") c.context_turns = v.as<std::size_t>();
            else if (key == "utc_offset_minutes") c.utc_offset_minutes = v.as<int>();
            else if (key == "cors_origin") c.cors_origin = v.as<std::string>();
            else throw ValidationError(key, path.string() + ": unknown config key '" + key + "'");
        }
    } catch (const YAML::Exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (c.port < 0 || c.port > 65535) throw ValidationError("port", "port must be in [0, 65535]");
    if (c.snapshot_every == 0) throw ValidationError("snapshot_every", "snapshot_every must be at least 1");
    return c;
}

ordered_json webhook_payload(const std::string& participant_id, int week, const analysis::AnalysisReport& report,
                             const std::string& timestamp) {
    return {{"event", "risk_escalation"},
            {"participant_id", participant_id},
            {"week", week},
            {"outcome", report.outcome},
            {"recommendation", report.phases[3]},
            {"timestamp", timestamp}};
}

namespace {

Response error(int status, const std::string& message, const std::string& field = {}) {
    ordered_json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    return {status, body};
}

template <typename Fn>
Response guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        return error(422, e.what(), e.field());
    } catch (const analysis::AnalysisParseError& e) {
        auto r = error(502, std::string("model reply could not be parsed: ") + e.what());
        r.body["raw_text"] = e.raw_text();
        return r;
    } catch (const gateway::GatewayError& e) {
        auto r = error(502, e.what());
        r.body["kind"] = gateway::error_kind_name(e.kind());
        return r;
    } catch (const ParseError& e) {
        return error(400, e.what());
    } catch (const std::exception& e) {
        return error(500, e.what());
    }
}

std::optional<int> parse_week(const std::string& text) {
    if (text.empty() || text.size() > 6) return std::nullopt;
    for (char c : text) {
        if (c < '0' || c > '9') return std::nullopt;
    }
    return std::stoi(text);
}

}  // namespace

GuardService::GuardService(ServiceConfig config, std::shared_ptr<gateway::Backend> backend, analysis::Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)) {
    if (!backend) throw ValidationError("backend", "service needs a model backend");
    std::error_code ec;
    fs::create_directories(config_.store_dir, ec);
    if (ec) throw IoError(config_.store_dir.string(), "cannot create store: " + ec.message());
    if (config_.cohort_seed) seed_ = CohortSeed::load(*config_.cohort_seed);
    log_ = std::make_unique<EventLog>(config_.store_dir / "events.jsonl");
    state_ = recover(config_.store_dir / "snapshot.json", *log_);
    auto opts = gateway::options_from_env();
    opts.memoize = false;
    opts.log_path = config_.store_dir / "exchanges.jsonl";
    gateway_ = std::make_unique<gateway::Gateway>(std::move(backend), opts);
    webhook_thread_ = std::thread([this] { webhook_loop(); });
}

GuardService::~GuardService() {
    stop();
    drain_webhooks();
    {
        std::lock_guard lk(webhook_mu_);
        webhook_stop_ = true;
    }
    webhook_cv_.notify_all();
    if (webhook_thread_.joinable()) webhook_thread_.join();
    try {
        std::shared_lock lk(state_mu_);
        write_snapshot(state_, config_.store_dir / "snapshot.json");
    } catch (...) {
        // The event log alone is sufficient for recovery.
    }
}

ServiceState GuardService::state() const {
    std::shared_lock lk(state_mu_);
    return state_;
}

bool GuardService::authorized(const std::string& header) const {
    if (config_.bearer_token.empty()) return true;
    const std::string expected = "Bearer " + config_.bearer_token;
    if (header.size() != expected.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < header.size(); ++i) diff |= static_cast<unsigned char>(header[i] ^ expected[i]);
    return diff == 0;
}

SessionEvent GuardService::commit(EventKind kind, const std::string& session_id, nlohmann::json payload,
                                  std::string timestamp) {
    std::lock_guard lk(commit_mu_);
    std::vector<SessionEvent> events;
    events.push_back({0, session_id, kind, std::move(payload),
                      timestamp.empty() ? format_rfc3339(clock_()) : std::move(timestamp)});
    return append_locked(std::move(events)).front();
}

std::vector<SessionEvent> GuardService::append_locked(std::vector<SessionEvent> events) {
    events = log_->append(std::move(events));
    {
        std::unique_lock slk(state_mu_);
        for (const auto& e : events) state_.apply(e);
    }
    since_snapshot_ += events.size();
    if (since_snapshot_ >= config_.snapshot_every) {
        since_snapshot_ = 0;
        std::shared_lock slk(state_mu_);
        write_snapshot(state_, config_.store_dir / "snapshot.json");
    }
    return events;
}

std::mutex& GuardService::session_mutex(const std::string& id) {
    std::lock_guard lk(sessions_mu_);
    auto& m = session_locks_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
}

std::optional<int> GuardService::latest_week(const std::string& pid) const {
    std::optional<int> week;
    for (const auto& b : seed_.bundles) {
        if (b.participant_id == pid && (!week || b.week_index > *week)) week = b.week_index;
    }
    std::shared_lock lk(state_mu_);
    const auto origin = week_origin(seed_, state_, pid);
    if (const auto it = state_.ema().find(pid); origin && it != state_.ema().end() && !it->second.empty()) {
        const int w = week_index_of(*origin, it->second.back().date);
        if (!week || w > *week) week = w;
    }
    return week;
}

cohort::UserPortrait GuardService::portrait_for(const std::string& pid) const {
    if (const auto it = seed_.portraits.find(pid); it != seed_.portraits.end()) return it->second;
    cohort::UserPortrait p;
    p.participant_id = pid;
    return p;
}

Response GuardService::open_session(const nlohmann::json& body) {
    return guarded([&]() -> Response {
        if (!body.is_object()) throw ValidationError("body", "body must be a JSON object");
        if (!body.contains("participant_id") || !body["participant_id"].is_string() ||
            body["participant_id"].get<std::string>().empty()) {
            throw ValidationError("participant_id", "participant_id must be a non-empty string");
        }
        std::string scenario = "open";
        if (body.contains("scenario")) {
            if (!body["scenario"].is_string()) throw ValidationError("scenario", "scenario must be a string");
            scenario = body["scenario"].get<std::string>();
            try {
                analysis::parse_scenario(scenario);
            } catch (const Error&) {
                throw ValidationError("scenario", "unknown scenario '" + scenario + "'");
            }
        }
        std::string id;
        {
            // Reserve the id and append under one lock so ids stay sequential.
            std::lock_guard lk(commit_mu_);
            {
                std::shared_lock slk(state_mu_);
                id = state_.next_session_id();
            }
            std::vector<SessionEvent> events;
            events.push_back({0, id, EventKind::session_opened,
                              {{"participant_id", body["participant_id"]}, {"scenario", scenario}},
                              format_rfc3339(clock_())});
            append_locked(std::move(events));
        }
        std::shared_lock slk(state_mu_);
        return {201, state_.session(id)->to_json()};
    });
}

Response GuardService::get_session(const std::string& id) const {
    std::shared_lock lk(state_mu_);
    const auto* s = state_.session(id);
    if (!s) return error(404, "no session " + id);
    return {200, s->to_json()};
}

Response GuardService::post_message(const std::string& id, const nlohmann::json& body) {
    analysis::DialogueSession session;
    {
        std::shared_lock lk(state_mu_);
        const auto* s = state_.session(id);
        if (!s) return error(404, "no session " + id);
        session = *s;
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
        return error(422, "body must be {\"text\": string}", "text");
    }
    const std::string text = body["text"].get<std::string>();
    if (trim(text).empty()) return error(422, "text must not be empty", "text");

    std::unique_lock turn_lock(session_mutex(id), std::try_to_lock);
    if (!turn_lock.owns_lock()) return error(409, "session " + id + " is busy with another message");
    {
        // Reload under the session lock so the turn extends the latest transcript.
        std::shared_lock lk(state_mu_);
        session = *state_.session(id);
    }
    return guarded([&]() -> Response {
        if (const auto week = latest_week(session.participant_id)) {
            std::shared_lock lk(state_mu_);
            session.bundle = current_bundle(seed_, state_, session.participant_id, *week);
        }
        if (session.bundle) {
            session.mood_context = cohort::latest_indicator(*session.bundle, cohort::IndicatorKind::mood);
        }
        session.portrait = portrait_for(session.participant_id);
        analysis::MonitorOptions opts;
        opts.context_turns = config_.context_turns;
        opts.clock = clock_;
        opts.utc_offset_minutes = config_.utc_offset_minutes;
        const std::string reply = analysis::monitor_turn(session, text, *gateway_, opts);
        const auto& user_turn = session.turns[session.turns.size() - 2];
        const auto& bot_turn = session.turns.back();

        std::vector<SessionEvent> events;
        events.push_back({0, id, EventKind::user_msg,
                          {{"text", text}, {"resolved_scenario", session.metadata.at("resolved_scenario")}},
                          user_turn.timestamp});
        events.push_back({0, id, EventKind::assistant_msg, {{"text", reply}}, bot_turn.timestamp});
        {
            std::lock_guard lk(commit_mu_);
            append_locked(std::move(events));
        }
        std::shared_lock slk(state_mu_);
        return {200, {{"reply", reply}, {"session", state_.session(id)->to_json()}}};
    });
}

Response GuardService::submit_ema(const nlohmann::json& body) {
    return guarded([&]() -> Response {
        const auto sub = EmaSubmission::from_json(body);
        {
            std::shared_lock lk(state_mu_);
            const auto origin = week_origin(seed_, state_, sub.participant_id);
            if (origin && sub.date < *origin) {
                throw ValidationError("date", "date " + format_date(sub.date) + " precedes the participant's first week");
            }
        }
        const auto e = commit(EventKind::ema_submitted, "", sub.to_json());
        std::shared_lock lk(state_mu_);
        const auto origin = week_origin(seed_, state_, sub.participant_id);
        const int week = week_index_of(*origin, sub.date);
        const auto bundle = current_bundle(seed_, state_, sub.participant_id, week);
        return {200, {{"event_id", e.event_id}, {"week", week}, {"bundle", cohort::to_json(*bundle)}}};
    });
}

Response GuardService::analyze(const std::string& pid, const std::string& week_text) {
    const auto week = parse_week(week_text);
    if (!week) return error(422, "week must be a non-negative integer", "week");
    std::optional<cohort::WeeklyBundle> bundle;
    {
        std::shared_lock lk(state_mu_);
        bundle = current_bundle(seed_, state_, pid, *week);
    }
    if (!bundle) return error(404, "no data for participant " + pid + " week " + week_text);
    return guarded([&]() -> Response {
        const auto report = analysis::generate_analysis(*bundle, portrait_for(pid), *gateway_,
                                                        report::default_format_spec());
        const auto e = commit(EventKind::report_generated, "",
                              {{"participant_id", pid}, {"week", *week}, {"report", report.to_json()}});
        if (report.outcome == 1 && !config_.webhook_url.empty()) {
            enqueue_webhook(webhook_payload(pid, *week, report, e.timestamp));
        }
        return {200, report.to_json()};
    });
}

Response GuardService::get_report(const std::string& pid, const std::string& week_text) const {
    const auto week = parse_week(week_text);
    if (!week) return error(422, "week must be a non-negative integer", "week");
    std::shared_lock lk(state_mu_);
    const auto bundle = current_bundle(seed_, state_, pid, *week);
    const auto it = state_.reports().find({pid, *week});
    if (!bundle && it == state_.reports().end()) return error(404, "no data for participant " + pid + " week " + week_text);
    ordered_json body;
    body["bundle"] = bundle ? cohort::to_json(*bundle) : ordered_json(nullptr);
    body["report"] = it != state_.reports().end() ? it->second.to_json() : ordered_json(nullptr);
    return {200, body};
}

Response GuardService::healthz() const {
    std::shared_lock lk(state_mu_);
    return {200,
            {{"status", "ok"},
             {"last_event_id", state_.last_event_id()},
             {"sessions", state_.sessions().size()},
             {"backend", gateway_->backend_id()}}};
}

void GuardService::enqueue_webhook(ordered_json payload) {
    {
        std::lock_guard lk(webhook_mu_);
        webhook_queue_.push_back(std::move(payload));
    }
    webhook_cv_.notify_all();
}

void GuardService::drain_webhooks() {
    std::unique_lock lk(webhook_mu_);
    webhook_cv_.wait(lk, [&] { return webhook_stop_ || (webhook_queue_.empty() && webhook_busy_ == 0); });
}

void GuardService::webhook_loop() {
    const auto scheme_end = config_.webhook_url.find("://");
    const auto path_start =
        scheme_end == std::string::npos ? std::string::npos : config_.webhook_url.find('/', scheme_end + 3);
    const std::string base = config_.webhook_url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : config_.webhook_url.substr(path_start);
    for (;;) {
        ordered_json payload;
        {
            std::unique_lock lk(webhook_mu_);
            webhook_cv_.wait(lk, [&] { return webhook_stop_ || !webhook_queue_.empty(); });
            if (webhook_queue_.empty()) return;
            payload = std::move(webhook_queue_.front());
            webhook_queue_.pop_front();
            ++webhook_busy_;
        }
        // Best effort: the first attempt plus up to three retries.
        auto backoff = std::chrono::milliseconds(100);
        for (int attempt = 0; attempt < 4 && !gateway::offline_blocked(base); ++attempt) {
            httplib::Client cli(base);
            cli.set_connection_timeout(std::chrono::seconds(2));
            cli.set_read_timeout(std::chrono::seconds(5));
            const auto res = cli.Post(path, payload.dump(), "application/json");
            if (res && res->status >= 200 && res->status < 300) break;
            if (attempt < 3) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
        {
            std::lock_guard lk(webhook_mu_);
            --webhook_busy_;
        }
        webhook_cv_.notify_all();
    }
}

void GuardService::install_routes() {
    server_ = std::make_unique<httplib::Server>();
    auto& svr = *server_;
    svr.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                             {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    auto send = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    svr.set_pre_routing_handler([this, send](const httplib::Request& req, httplib::Response& res) {
        if (req.method == "OPTIONS") {
            res.status = 204;
            return httplib::Server::HandlerResponse::Handled;
        }
        if (req.path != "/healthz" && !authorized(req.get_header_value("Authorization"))) {
            send(res, error(401, "missing or invalid bearer token"));
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });
    auto parse_body = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
        if (req.body.empty()) return nlohmann::json::object();
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error&) {
            return std::nullopt;
        }
    };
    auto bad_json = error(400, "request body is not valid JSON");

    svr.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        send(res, body ? open_session(*body) : bad_json);
    });
    svr.Get(R"(/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, get_session(req.matches[1]));
    });
    svr.Post(R"(/sessions/([^/]+)/messages)", [=, this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        send(res, body ? post_message(req.matches[1], *body) : bad_json);
    });
    svr.Post("/ema", [=, this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        send(res, body ? submit_ema(*body) : bad_json);
    });
    svr.Post(R"(/participants/([^/]+)/analyze)", [=, this](const httplib::Request& req, httplib::Response& res) {
        send(res, analyze(req.matches[1], req.get_param_value("week")));
    });
    svr.Get(R"(/participants/([^/]+)/weeks/([^/]+)/report)",
            [=, this](const httplib::Request& req, httplib::Response& res) {
                send(res, get_report(req.matches[1], req.matches[2]));
            });
    svr.Get("/healthz", [=, this](const httplib::Request&, httplib::Response& res) { send(res, healthz()); });
    svr.set_error_handler([=](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send(res, error(res.status, httplib::status_message(res.status)));
    });
}

int GuardService::bind(int port) {
    if (!server_) install_routes();
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(config_.host);
    } else if (!server_->bind_to_port(config_.host, port)) {
        bound = -1;
    }
    if (bound < 0) throw IoError(config_.host + ":" + std::to_string(port), "cannot bind service port");
    return bound;
}

void GuardService::listen_after_bind() { server_->listen_after_bind(); }

void GuardService::listen() {
    bind(config_.port);
    listen_after_bind();
}

void GuardService::stop() {
    if (server_) server_->stop();
}

int serve(const ServiceConfig& config) {
    // Signals are taken synchronously by a dedicated thread; every other
    // thread inherits the blocked mask.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    GuardService svc(config, gateway::make_backend(config.backend));
    const int port = svc.bind(config.port);
    std::fprintf(stderr, "mhfa serve: listening on %s:%d\n", config.host.c_str(), port);
    std::atomic<bool> done{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        if (!done) svc.stop();
    });
    svc.listen_after_bind();
    done = true;
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

}  // namespace mhfa::service
