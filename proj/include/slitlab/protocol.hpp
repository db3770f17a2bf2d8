#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "slitlab/analytics.hpp"
#include "slitlab/engine.hpp"
#include "slitlab/json_io.hpp"
#include "slitlab/session.hpp"
#include "slitlab/session_file.hpp"

// Realtime steering protocol. Every frame is one JSON object; see
// docs/protocol.md for the schema.
namespace slitlab {

struct ClientMessage {
    enum class Type { StartSession, StartAttempt, ToggleWarmup, EndSession, Steer };
    Type type = Type::Steer;
    Steering input = Steering::None;
    std::optional<SubjectMeta> subject; // start-session only
};

inline ClientMessage parse_client_message(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(Errc::malformed_record, e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw Error(Errc::malformed_record, "message needs a string 'type'");
    const auto type = j["type"].get<std::string>();
    ClientMessage m;
    if (type == "start-session") {
        m.type = ClientMessage::Type::StartSession;
        if (j.contains("subject")) m.subject = j["subject"].get<SubjectMeta>();
    } else if (type == "start-attempt") {
        m.type = ClientMessage::Type::StartAttempt;
    } else if (type == "toggle-warmup") {
        m.type = ClientMessage::Type::ToggleWarmup;
    } else if (type == "end-session") {
        m.type = ClientMessage::Type::EndSession;
    } else if (type == "steer") {
        m.type = ClientMessage::Type::Steer;
        m.input = parse_steering(j.value("input", "none"));
    } else {
        throw Error(Errc::malformed_record, "unknown message type '" + type + "'");
    }
    return m;
}

inline std::string encode(const ClientMessage& m) {
    json j;
    switch (m.type) {
    case ClientMessage::Type::StartSession:
        j = {{"type", "start-session"}};
        if (m.subject) j["subject"] = *m.subject;
        break;
    case ClientMessage::Type::StartAttempt: j = {{"type", "start-attempt"}}; break;
    case ClientMessage::Type::ToggleWarmup: j = {{"type", "toggle-warmup"}}; break;
    case ClientMessage::Type::EndSession: j = {{"type", "end-session"}}; break;
    case ClientMessage::Type::Steer: j = {{"type", "steer"}, {"input", std::string(to_string(m.input))}}; break;
    }
    return j.dump();
}

struct HostConfig {
    WorldConfig world;
    std::size_t attempts = 100;
    std::string session_id = "session";
    SubjectMeta subject;
    bool live_histogram = false;
    RecordOptions record;
};

/// Opens the record stream once the session goes live.
using RecordSink = std::function<std::unique_ptr<std::ostream>(const Session&)>;

/// One subject's session: warm-up practice, then a fixed number of live
/// attempts that are appended to the record file as they finish.
/// Single-threaded; the caller feeds client messages and calls advance()
/// once per server tick.
class SessionHost {
public:
    enum class Mode { Practice, Live, Finished };

    SessionHost(HostConfig config, RecordSink sink)
        : config_(std::move(config)), sink_(std::move(sink)), engine_(set_warmup(config_.world, true)) {}

    [[nodiscard]] Mode mode() const noexcept { return mode_; }
    [[nodiscard]] bool finished() const noexcept { return mode_ == Mode::Finished; }
    [[nodiscard]] bool mushrooms_visible() const noexcept { return mode_ == Mode::Practice && visible_; }
    [[nodiscard]] const Engine& engine() const noexcept { return engine_; }
    [[nodiscard]] const Session& session() const noexcept { return session_; }
    [[nodiscard]] std::ostream* record_stream() const noexcept { return record_.get(); }
    [[nodiscard]] std::uint64_t server_tick() const noexcept { return server_tick_; }
    [[nodiscard]] std::size_t attempts_remaining() const noexcept {
        return mode_ == Mode::Live ? config_.attempts - session_.attempts.size()
                                   : mode_ == Mode::Practice ? config_.attempts : 0;
    }

    /// Applies one client frame. Steering takes effect on the next tick.
    void receive(const std::string& frame) {
        try {
            receive(parse_client_message(frame));
        } catch (const Error& e) {
            emit_error(e.what());
        }
    }

    void receive(const ClientMessage& m) {
        if (finished()) return emit_error("session is over");
        switch (m.type) {
        case ClientMessage::Type::Steer: engine_.steer(m.input); break;
        case ClientMessage::Type::ToggleWarmup:
            if (mode_ != Mode::Practice) return emit_error("warm-up is only available before the session starts");
            visible_ = !visible_;
            break;
        case ClientMessage::Type::StartAttempt:
            if (engine_.attempt_active()) return emit_error("an attempt is already in flight");
            engine_.begin_attempt();
            break;
        case ClientMessage::Type::StartSession:
            if (mode_ != Mode::Practice) return emit_error("session already started");
            go_live(m.subject);
            break;
        case ClientMessage::Type::EndSession: end(false); break;
        }
    }

    /// One server tick: moves the particle if an attempt is in flight and
    /// queues the resulting tick message.
    void advance() {
        if (finished()) return;
        if (engine_.in_flight()) engine_.step();
        ++server_tick_;
        emit_tick();
        if (engine_.attempt_active() && !engine_.in_flight()) on_attempt_done(engine_.finish());
    }

    /// Transport loss: an attempt in flight is voided, the file is closed.
    void disconnect() { end(true); }

    /// Drains queued server frames.
    std::vector<std::string> take_outbox() { return std::exchange(outbox_, {}); }

private:
    void go_live(const std::optional<SubjectMeta>& subject) {
        engine_.set_warmup(false);
        visible_ = false;
        mode_ = Mode::Live;
        session_.id = config_.session_id;
        session_.subject = subject.value_or(config_.subject);
        session_.world = engine_.config();
        session_.created_at = now_iso8601();
        record_ = sink_(session_);
        if (record_) writer_.emplace(*record_, session_, config_.record);
        if (config_.attempts == 0) end(false);
    }

    void on_attempt_done(Attempt a) {
        outbox_.push_back(json{{"type", "attempt-end"},
                               {"attempt", a.seq()},
                               {"live", mode_ == Mode::Live},
                               {"outcome", std::string(to_string(a.outcome()))},
                               {"channel", a.channel() ? json(*a.channel()) : json(nullptr)},
                               {"touched_mushroom", a.touched_mushroom()},
                               {"excluded", a.excluded()}}
                              .dump());
        if (mode_ != Mode::Live) return;
        record(std::move(a));
        if (config_.live_histogram) emit_histogram();
        if (session_.attempts.size() >= config_.attempts) end(false);
    }

    void record(Attempt a) {
        if (writer_) writer_->append(a);
        session_.attempts.push_back(std::move(a));
    }

    void end(bool disconnected) {
        if (finished()) return;
        if (engine_.attempt_active()) {
            Attempt a = engine_.abort_disconnected();
            if (mode_ == Mode::Live) record(std::move(a));
        }
        if (writer_) writer_->close();
        const bool was_live = mode_ == Mode::Live;
        mode_ = Mode::Finished;
        if (disconnected) return;
        if (was_live) emit_histogram();
        const auto summary = summarize(session_.attempts);
        outbox_.push_back(json{{"type", "session-end"},
                               {"session", session_.id},
                               {"registered", summary.registered},
                               {"excluded", summary.excluded},
                               {"blocked", summary.blocked},
                               {"missed", summary.missed},
                               {"total", summary.total}}
                              .dump());
    }

    void emit_histogram() {
        const auto h = build_histogram(session_);
        outbox_.push_back(
            json{{"type", "histogram"}, {"bins", h.bins}, {"registered", h.n_attempts_registered}}.dump());
    }

    void emit_tick() {
        const auto& st = engine_.state();
        json j{{"type", "tick"},
               {"session", config_.session_id},
               {"tick", server_tick_},
               {"live", mode_ == Mode::Live},
               {"attempt", engine_.attempt_active() ? json(engine_.next_seq()) : json(nullptr)},
               {"x", st.x},
               {"y", st.y},
               {"phase", engine_.attempt_active() ? std::string(to_string(st.phase)) : std::string("idle")},
               {"channel", st.channel ? json(*st.channel) : json(nullptr)},
               {"revealed", points_to_json(engine_.field().revealed)},
               {"warmup", mushrooms_visible()},
               {"attempts_remaining", attempts_remaining()}};
        if (mushrooms_visible()) j["mushrooms"] = points_to_json(engine_.field().positions);
        outbox_.push_back(j.dump());
    }

    void emit_error(const std::string& message) {
        outbox_.push_back(json{{"type", "error"}, {"message", message}}.dump());
    }

    HostConfig config_;
    RecordSink sink_;
    Engine engine_;
    Mode mode_ = Mode::Practice;
    bool visible_ = false;
    Session session_;
    std::unique_ptr<std::ostream> record_;
    std::optional<SessionWriter> writer_;
    std::vector<std::string> outbox_;
    std::uint64_t server_tick_ = 0;
};

/// Frame channel to one client.
class Transport {
public:
    virtual ~Transport() = default;
    /// Frames received since the last call.
    virtual std::vector<std::string> receive() = 0;
    virtual void send(const std::string& frame) = 0;
    [[nodiscard]] virtual bool is_open() const = 0;
};

/// Blocking session loop: at each tick, applies received frames, advances
/// the host and sends its frames. tick_rate <= 0 runs without sleeping.
inline void run_session(SessionHost& host, Transport& transport, double tick_rate = 30.0) {
    using clock = std::chrono::steady_clock;
    const auto period = tick_rate > 0.0 ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / tick_rate))
                                        : clock::duration::zero();
    auto next = clock::now();
    while (!host.finished()) {
        if (!transport.is_open()) {
            host.disconnect();
            break;
        }
        for (const auto& frame : transport.receive()) host.receive(frame);
        host.advance();
        for (const auto& frame : host.take_outbox()) transport.send(frame);
        if (period > clock::duration::zero()) {
            next += period;
            std::this_thread::sleep_until(next);
        }
    }
    for (const auto& frame : host.take_outbox())
        if (transport.is_open()) transport.send(frame);
}

} // namespace slitlab
