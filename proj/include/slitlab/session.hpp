#pragma once

#include <chrono>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include "slitlab/engine.hpp"

namespace slitlab {

/// Free-form description of who (or what) produced a session.
struct SubjectMeta {
    std::string label;
    std::optional<int> age;
    std::string gender;
    bool operator==(const SubjectMeta&) const = default;
};

/// Ordered attempts of one subject under one world configuration.
struct Session {
    std::string id;
    SubjectMeta subject;
    WorldConfig world;
    std::vector<Attempt> attempts;
    std::string created_at;

    [[nodiscard]] Screen screen() const noexcept { return world.screen; }
};

/// Throws Errc::configuration if an attempt was flown under another screen.
inline void check_session(const Session& s) {
    for (const auto& a : s.attempts)
        if (a.screen() != s.world.screen)
            throw Error(Errc::configuration, "attempt " + std::to_string(a.seq()) + " uses a different screen");
}

/// UTC timestamp, e.g. 2026-10-15T12:00:00Z.
inline std::string now_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace slitlab
