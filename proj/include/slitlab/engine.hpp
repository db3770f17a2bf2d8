#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slitlab/error.hpp"
#include "slitlab/geometry.hpp"
#include "slitlab/random.hpp"

namespace slitlab {

enum class Steering : std::uint8_t { None, Left, Right };

constexpr std::string_view to_string(Steering s) noexcept {
    switch (s) {
    case Steering::None: return "none";
    case Steering::Left: return "left";
    case Steering::Right: return "right";
    }
    return "none";
}

inline Steering parse_steering(std::string_view name) {
    for (auto s : {Steering::None, Steering::Left, Steering::Right})
        if (name == to_string(s)) return s;
    throw Error(Errc::invalid_parameter, "unknown steering input '" + std::string(name) + "'");
}

enum class Phase : std::uint8_t { InFlight, Blocked, Registered, Missed };

constexpr std::string_view to_string(Phase p) noexcept {
    switch (p) {
    case Phase::InFlight: return "in_flight";
    case Phase::Blocked: return "blocked";
    case Phase::Registered: return "registered";
    case Phase::Missed: return "missed";
    }
    return "in_flight";
}

inline Phase parse_phase(std::string_view name) {
    for (auto p : {Phase::InFlight, Phase::Blocked, Phase::Registered, Phase::Missed})
        if (name == to_string(p)) return p;
    throw Error(Errc::malformed_record, "unknown phase '" + std::string(name) + "'");
}

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Steering input received while tick `tick` was pending.
struct SteeringEvent {
    std::uint32_t tick = 0;
    Steering input = Steering::None;
    bool operator==(const SteeringEvent&) const = default;
};

using InputLog = std::vector<SteeringEvent>;

struct WorldConfig {
    Geometry geometry;
    Screen screen = Screen::TwoSlit;
    std::size_t mushroom_count = 20;
    double mushroom_radius = 0.75;
    double lateral_speed = 1.0;  // channel units per tick
    double vertical_speed = 1.0; // channel units per tick
    std::uint64_t rng_seed = 0;
    bool warmup = false;

    bool operator==(const WorldConfig&) const = default;
};

/// Throws Errc::configuration listing every problem with `w`.
inline void validate_world(const WorldConfig& w) {
    std::string problems;
    for (const auto& v : validate_geometry(w.geometry)) problems += v + "; ";
    if (!(w.lateral_speed > 0.0)) problems += "lateral_speed must be positive; ";
    if (!(w.vertical_speed > 0.0)) problems += "vertical_speed must be positive; ";
    if (!(w.mushroom_radius >= 0.0)) problems += "mushroom_radius must be nonnegative; ";
    if (!problems.empty()) throw Error(Errc::configuration, problems.substr(0, problems.size() - 2));
}

/// Toggles mushroom visibility. Re-randomizing the field on warm-up -> live is Engine's job.
inline WorldConfig set_warmup(WorldConfig w, bool visible) {
    w.warmup = visible;
    return w;
}

/// Hidden mushrooms in the forest. `revealed` lists the ones picked during the current attempt.
struct MushroomField {
    std::vector<Point> positions;
    std::vector<Point> revealed;
    bool operator==(const MushroomField&) const = default;
};

struct ObjectState {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    Phase phase = Phase::InFlight;
    std::optional<int> channel;
    bool operator==(const ObjectState&) const = default;
};

struct TickEvent {
    enum class Kind { MushroomRevealed, PassedScreen, Blocked, Registered, Missed };
    Kind kind;
    Point where;
    std::optional<int> channel;
};

struct TickResult {
    ObjectState state;
    std::vector<TickEvent> events;
    bool touched_mushroom = false;
};

/// One finished flight. Immutable; `excluded` is derived, never stored.
class Attempt {
public:
    struct Data {
        std::size_t seq = 0;
        Screen screen = Screen::TwoSlit;
        Phase outcome = Phase::Missed;
        std::optional<int> channel;
        bool touched_mushroom = false;
        bool disconnected = false;
        std::uint32_t ticks = 0;
        std::vector<Point> trajectory;
        InputLog input_log;
        std::vector<Point> revealed;
        bool operator==(const Data&) const = default;
    };

    explicit Attempt(Data d, int n_channels = 63) : d_(std::move(d)) {
        if (d_.outcome == Phase::InFlight)
            throw Error(Errc::contract_violation, "attempt cannot end in flight");
        if (d_.outcome == Phase::Registered) {
            if (!d_.channel || *d_.channel < 1 || *d_.channel > n_channels)
                throw Error(Errc::contract_violation, "registered attempt needs a channel in range");
        } else if (d_.channel) {
            throw Error(Errc::contract_violation, "only registered attempts carry a channel");
        }
        if (d_.disconnected && d_.outcome != Phase::Missed)
            throw Error(Errc::contract_violation, "disconnected attempts are recorded as missed");
    }

    [[nodiscard]] std::size_t seq() const noexcept { return d_.seq; }
    [[nodiscard]] Screen screen() const noexcept { return d_.screen; }
    [[nodiscard]] Phase outcome() const noexcept { return d_.outcome; }
    [[nodiscard]] std::optional<int> channel() const noexcept { return d_.channel; }
    [[nodiscard]] bool touched_mushroom() const noexcept { return d_.touched_mushroom; }
    [[nodiscard]] bool disconnected() const noexcept { return d_.disconnected; }
    [[nodiscard]] bool excluded() const noexcept { return d_.touched_mushroom || d_.outcome != Phase::Registered; }
    [[nodiscard]] std::uint32_t ticks() const noexcept { return d_.ticks; }
    [[nodiscard]] const std::vector<Point>& trajectory() const noexcept { return d_.trajectory; }
    [[nodiscard]] const InputLog& input_log() const noexcept { return d_.input_log; }
    [[nodiscard]] const std::vector<Point>& revealed() const noexcept { return d_.revealed; }
    [[nodiscard]] const Data& data() const noexcept { return d_; }

    bool operator==(const Attempt&) const = default;

private:
    Data d_;
};

namespace detail {

inline double forest_half_width(const WorldConfig& w) { return w.geometry.n_channels / 2.0; }

inline double distance_to_segment(Point p, Point a, Point b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

inline bool in_aperture(const WorldConfig& w, double x) {
    const double half = w.geometry.slit_width / 2.0;
    for (double c : slit_centers_for(w.screen, w.geometry.separation))
        if (x >= c - half && x <= c + half) return true;
    return false;
}

} // namespace detail

/// Uniform point in the forest (source-to-screen and screen-to-plane rectangles),
/// keeping a margin of mushroom_radius from every wall.
inline Point random_forest_point(const WorldConfig& w, Rng& rng) {
    const double r = w.mushroom_radius;
    const double hw = detail::forest_half_width(w);
    const double lower_height = std::max(0.0, w.geometry.source_distance - 2.0 * r);
    const double upper_height = std::max(0.0, w.geometry.distance - 2.0 * r);
    const double x = uniform(rng, -hw + r, hw - r);
    const double pick = uniform(rng, 0.0, lower_height + upper_height);
    const double y = pick < lower_height ? -w.geometry.source_distance + r + pick : r + (pick - lower_height);
    return {x, y};
}

inline MushroomField randomize_field(const WorldConfig& w, Rng& rng) {
    MushroomField field;
    field.positions.reserve(w.mushroom_count);
    for (std::size_t i = 0; i < w.mushroom_count; ++i) field.positions.push_back(random_forest_point(w, rng));
    return field;
}

/// Fresh particle at the source.
inline ObjectState spawn_attempt(const WorldConfig& w) {
    return {0.0, -w.geometry.source_distance, 0.0, Phase::InFlight, std::nullopt};
}

/// Sets lateral velocity from a held input. Terminal states are returned unchanged.
inline ObjectState apply_steering(ObjectState st, Steering input, double lateral_speed) {
    if (st.phase != Phase::InFlight) return st;
    switch (input) {
    case Steering::Left: st.vx = -lateral_speed; break;
    case Steering::Right: st.vx = lateral_speed; break;
    case Steering::None: st.vx = 0.0; break;
    }
    return st;
}

/// Advances one tick: moves the particle, resolves the screen and plane crossings
/// and picks any mushroom within mushroom_radius of the travelled segment.
inline TickResult tick(const WorldConfig& w, MushroomField& field, ObjectState st, Rng& rng) {
    if (st.phase != Phase::InFlight) throw Error(Errc::contract_violation, "tick on a finished attempt");

    const Point start{st.x, st.y};
    Point end{st.x + st.vx, st.y + w.vertical_speed};
    const double screen_y = 0.0;
    const double plane_y = w.geometry.distance;

    auto crossing_x = [&](double level) {
        const double t = (level - start.y) / (end.y - start.y);
        return start.x + t * (end.x - start.x);
    };

    TickResult result;
    std::optional<TickEvent> terminal;
    bool passed_screen = false;
    if (start.y < screen_y && end.y >= screen_y) {
        const double xc = crossing_x(screen_y);
        if (detail::in_aperture(w, xc)) {
            passed_screen = true;
        } else {
            end = {xc, screen_y};
            st.phase = Phase::Blocked;
            terminal = TickEvent{TickEvent::Kind::Blocked, end, std::nullopt};
        }
    }
    if (!terminal && start.y < plane_y && end.y >= plane_y) {
        end = {crossing_x(plane_y), plane_y};
        st.channel = channel_of(end.x, w.geometry.n_channels);
        st.phase = st.channel ? Phase::Registered : Phase::Missed;
        terminal = TickEvent{st.channel ? TickEvent::Kind::Registered : TickEvent::Kind::Missed, end, st.channel};
    }

    for (auto& m : field.positions) {
        if (detail::distance_to_segment(m, start, end) > w.mushroom_radius) continue;
        result.touched_mushroom = true;
        result.events.push_back({TickEvent::Kind::MushroomRevealed, m, std::nullopt});
        field.revealed.push_back(m);
        Point fresh{};
        int tries = 0;
        do {
            if (++tries > 10000) throw Error(Errc::contract_violation, "no room to respawn a mushroom");
            fresh = random_forest_point(w, rng);
        } while (std::hypot(fresh.x - end.x, fresh.y - end.y) <= w.mushroom_radius);
        m = fresh;
    }

    if (passed_screen) result.events.push_back({TickEvent::Kind::PassedScreen, {crossing_x(screen_y), screen_y}, {}});
    if (terminal) result.events.push_back(*terminal);
    st.x = end.x;
    st.y = end.y;
    result.state = st;
    return result;
}

/// Seals a terminal state into an Attempt. `disconnected` forces a Missed outcome.
inline Attempt finalize_attempt(std::size_t seq, const WorldConfig& w, const ObjectState& st, bool touched,
                                std::uint32_t ticks, std::vector<Point> trajectory, InputLog input_log,
                                std::vector<Point> revealed, bool disconnected = false) {
    if (st.phase == Phase::InFlight && !disconnected)
        throw Error(Errc::contract_violation, "cannot finalize an attempt still in flight");
    Attempt::Data d;
    d.seq = seq;
    d.screen = w.screen;
    d.outcome = disconnected ? Phase::Missed : st.phase;
    d.channel = disconnected ? std::nullopt : st.channel;
    d.touched_mushroom = touched;
    d.disconnected = disconnected;
    d.ticks = ticks;
    d.trajectory = std::move(trajectory);
    d.input_log = std::move(input_log);
    d.revealed = std::move(revealed);
    return Attempt(std::move(d), w.geometry.n_channels);
}

/// One live world: config, mushroom field and the attempt in progress.
/// Single-threaded; one instance per session.
class Engine {
public:
    static constexpr std::uint64_t warmup_stream = 1;

    explicit Engine(WorldConfig config) : config_(std::move(config)) {
        validate_world(config_);
        reseed();
    }

    [[nodiscard]] const WorldConfig& config() const noexcept { return config_; }
    [[nodiscard]] const MushroomField& field() const noexcept { return field_; }
    [[nodiscard]] const ObjectState& state() const noexcept { return state_; }
    [[nodiscard]] bool in_flight() const noexcept { return active_ && state_.phase == Phase::InFlight; }
    [[nodiscard]] bool attempt_active() const noexcept { return active_; }
    [[nodiscard]] std::uint32_t tick_index() const noexcept { return tick_; }
    [[nodiscard]] std::size_t next_seq() const noexcept { return seq_; }
    [[nodiscard]] std::size_t ignored_inputs() const noexcept { return ignored_inputs_; }

    /// Switching warm-up off draws a new live field from the configured seed
    /// and restarts attempt numbering.
    void set_warmup(bool visible) {
        const bool going_live = config_.warmup && !visible;
        config_ = slitlab::set_warmup(config_, visible);
        if (going_live) {
            active_ = false;
            seq_ = 0;
            reseed();
        }
    }

    void begin_attempt() {
        state_ = spawn_attempt(config_);
        active_ = true;
        touched_ = false;
        tick_ = 0;
        trajectory_.assign(1, Point{state_.x, state_.y});
        input_log_.clear();
        field_.revealed.clear();
    }

    /// Held input for the next tick. Several inputs before one tick: the last wins.
    void steer(Steering input) {
        if (!in_flight()) {
            ++ignored_inputs_;
            return;
        }
        state_ = apply_steering(state_, input, config_.lateral_speed);
        if (!input_log_.empty() && input_log_.back().tick == tick_)
            input_log_.back().input = input;
        else
            input_log_.push_back({tick_, input});
    }

    TickResult step() {
        if (!in_flight()) throw Error(Errc::contract_violation, "no attempt in flight");
        auto result = tick(config_, field_, state_, rng_);
        state_ = result.state;
        touched_ = touched_ || result.touched_mushroom;
        ++tick_;
        trajectory_.push_back({state_.x, state_.y});
        return result;
    }

    Attempt finish() {
        if (!active_) throw Error(Errc::contract_violation, "no attempt to finish");
        auto a = finalize_attempt(seq_, config_, state_, touched_, tick_, trajectory_, input_log_, field_.revealed);
        active_ = false;
        ++seq_;
        return a;
    }

    /// Ends the current attempt as missed because the client went away.
    Attempt abort_disconnected() {
        if (!active_) throw Error(Errc::contract_violation, "no attempt to abort");
        auto a = finalize_attempt(seq_, config_, state_, touched_, tick_, trajectory_, input_log_, field_.revealed,
                                  true);
        active_ = false;
        ++seq_;
        return a;
    }

    /// Flies one attempt from a recorded input log (events sorted by tick).
    Attempt run_attempt(const InputLog& log) {
        begin_attempt();
        std::size_t i = 0;
        while (in_flight()) {
            while (i < log.size() && log[i].tick <= tick_) {
                if (log[i].tick < tick_) throw Error(Errc::contract_violation, "input log is not sorted by tick");
                steer(log[i++].input);
            }
            step();
        }
        ignored_inputs_ += log.size() - i;
        return finish();
    }

    /// Replays a partial attempt that was cut off after `ticks` ticks.
    Attempt run_disconnected(const InputLog& log, std::uint32_t ticks) {
        begin_attempt();
        std::size_t i = 0;
        while (in_flight() && tick_ < ticks) {
            while (i < log.size() && log[i].tick == tick_) steer(log[i++].input);
            step();
        }
        while (i < log.size() && log[i].tick == tick_) steer(log[i++].input);
        return abort_disconnected();
    }

private:
    void reseed() {
        rng_.seed(config_.warmup ? derive_seed(config_.rng_seed, warmup_stream) : config_.rng_seed);
        field_ = randomize_field(config_, rng_);
    }

    WorldConfig config_;
    Rng rng_;
    MushroomField field_;
    ObjectState state_;
    bool active_ = false;
    bool touched_ = false;
    std::uint32_t tick_ = 0;
    std::size_t seq_ = 0;
    std::size_t ignored_inputs_ = 0;
    std::vector<Point> trajectory_;
    InputLog input_log_;
};

} // namespace slitlab
