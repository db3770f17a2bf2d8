#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "slitlab/engine.hpp"
#include "slitlab/physics_model.hpp"
#include "slitlab/random.hpp"
#include "slitlab/session.hpp"

namespace slitlab {

/// Inverse-CDF draw of a 1-based channel from a probability vector.
inline int sample_channel(std::span<const double> dist, Rng& rng) {
    if (dist.empty()) throw Error(Errc::invalid_parameter, "empty distribution");
    double total = 0.0;
    for (double p : dist) {
        if (!(p >= 0.0)) throw Error(Errc::invalid_parameter, "distribution has a negative entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(Errc::invalid_parameter, "distribution does not sum to 1");

    const double u = uniform01(rng) * total;
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] <= 0.0) continue;
        cumulative += dist[i];
        last_positive = i;
        if (u < cumulative) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(last_positive) + 1;
}

/// Open-loop input log that drifts to a slit center before the screen, then
/// to the target before the registration plane. The slit needing the least
/// lateral travel after the screen is used; ties go to the left slit.
inline InputLog plan_path(int target, const WorldConfig& w) {
    const int n = w.geometry.n_channels;
    if (target < 1 || target > n) throw PlanningError("target channel " + std::to_string(target) + " out of range");

    const double v = w.lateral_speed;
    const double u = w.vertical_speed;
    const double s = w.geometry.source_distance;
    const double target_x = channel_x(target, n);
    // Ticks that end at or below the screen, and the first tick that starts on or above it.
    const auto before_screen = static_cast<std::uint32_t>(std::floor(s / u));
    const auto after_screen = static_cast<std::uint32_t>(std::ceil(s / u));
    const auto before_plane = static_cast<std::uint32_t>(std::floor((s + w.geometry.distance) / u));

    auto centers = slit_centers_for(w.screen, w.geometry.separation);
    std::sort(centers.begin(), centers.end());
    const auto best = std::min_element(centers.begin(), centers.end(), [&](double a, double b) {
        return std::abs(target_x - a) < std::abs(target_x - b);
    });
    const double slit = *best;

    const auto n1 = static_cast<std::uint32_t>(std::lround(std::abs(slit) / v));
    const double x1 = std::copysign(n1 * v, slit);
    if (n1 > before_screen || std::abs(x1 - slit) > w.geometry.slit_width / 2.0)
        throw PlanningError("slit at " + std::to_string(slit) + " is not reachable before the screen");

    const double gap = target_x - x1;
    const auto n2 = static_cast<std::uint32_t>(std::lround(std::abs(gap) / v));
    const double x2 = x1 + std::copysign(n2 * v, gap);
    if (after_screen + n2 > before_plane || channel_of(x2, n) != target)
        throw PlanningError("channel " + std::to_string(target) + " is not reachable at the current speeds");

    InputLog log;
    if (n1 > 0) {
        log.push_back({0, slit < 0 ? Steering::Left : Steering::Right});
        log.push_back({n1, Steering::None});
    }
    if (n2 > 0) {
        if (!log.empty() && log.back().tick == after_screen) log.pop_back();
        log.push_back({after_screen, gap < 0 ? Steering::Left : Steering::Right});
        log.push_back({after_screen + n2, Steering::None});
    }
    return log;
}

/// Plans a path to `target` and flies it. The agent ignores mushrooms.
inline Attempt plan_and_fly(int target, Engine& engine) { return engine.run_attempt(plan_path(target, engine.config())); }

/// Draws targets from a model's predicted channel distribution.
struct ModelSampler {
    ModelParams params;
};
/// Draws targets uniformly over all channels.
struct UniformTargets {};
/// Never steers.
struct Ballistic {};
/// Re-flies recorded input logs, one per attempt.
struct Replay {
    std::vector<InputLog> logs;
};

using AgentKind = std::variant<ModelSampler, UniformTargets, Ballistic, Replay>;

struct AgentSpec {
    AgentKind kind;
    std::size_t attempts = 100;
    std::uint64_t rng_seed = 0;
};

inline std::string agent_name(const AgentKind& kind) {
    struct Visitor {
        std::string operator()(const ModelSampler&) const { return "model-sampler"; }
        std::string operator()(const UniformTargets&) const { return "uniform"; }
        std::string operator()(const Ballistic&) const { return "ballistic"; }
        std::string operator()(const Replay&) const { return "replay"; }
    };
    return std::visit(Visitor{}, kind);
}

/// Runs a synthetic subject through a fresh live engine. Deterministic in
/// (spec.rng_seed, world.rng_seed).
inline Session run_agent(const AgentSpec& spec, const WorldConfig& world, SubjectMeta subject = {}) {
    Engine engine(set_warmup(world, false));
    Rng rng(spec.rng_seed);

    std::vector<double> dist;
    if (const auto* ms = std::get_if<ModelSampler>(&spec.kind)) {
        dist = predicted_channel_distribution(ms->params, world.screen);
    } else if (std::holds_alternative<UniformTargets>(spec.kind)) {
        dist.assign(static_cast<std::size_t>(world.geometry.n_channels), 1.0 / world.geometry.n_channels);
    } else if (const auto* rp = std::get_if<Replay>(&spec.kind)) {
        if (rp->logs.size() != spec.attempts)
            throw Error(Errc::configuration, "replay agent needs one input log per attempt");
    }

    Session session;
    session.id = agent_name(spec.kind) + "-" + std::to_string(spec.rng_seed);
    if (subject.label.empty()) subject.label = agent_name(spec.kind);
    session.subject = std::move(subject);
    session.world = engine.config();
    session.created_at = now_iso8601();
    session.attempts.reserve(spec.attempts);

    for (std::size_t i = 0; i < spec.attempts; ++i) {
        try {
            if (std::holds_alternative<Ballistic>(spec.kind)) {
                session.attempts.push_back(engine.run_attempt({}));
            } else if (const auto* rp = std::get_if<Replay>(&spec.kind)) {
                session.attempts.push_back(engine.run_attempt(rp->logs[i]));
            } else {
                session.attempts.push_back(plan_and_fly(sample_channel(dist, rng), engine));
            }
        } catch (const PlanningError& e) {
            throw PlanningError(e.reason(), i);
        }
    }
    return session;
}

} // namespace slitlab
