#pragma once

#include "json.hpp"

#include "slitlab/engine.hpp"
#include "slitlab/geometry.hpp"
#include "slitlab/session.hpp"

// JSON mappings for configuration and record types. Unknown keys are
// ignored and missing keys keep their defaults.
namespace slitlab {

using json = nlohmann::json;

namespace detail {

template <typename T>
void read_optional(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

} // namespace detail

inline void to_json(json& j, const Geometry& g) {
    j = json{{"t", g.thickness},           {"w", g.slit_width}, {"lambda", g.wavelength},
             {"d", g.separation},          {"D", g.distance},   {"s", g.source_distance},
             {"n_channels", g.n_channels}, {"slit_centers", g.slit_centers}};
}

inline void from_json(const json& j, Geometry& g) {
    detail::read_optional(j, "t", g.thickness);
    detail::read_optional(j, "w", g.slit_width);
    detail::read_optional(j, "lambda", g.wavelength);
    detail::read_optional(j, "d", g.separation);
    detail::read_optional(j, "D", g.distance);
    detail::read_optional(j, "s", g.source_distance);
    detail::read_optional(j, "n_channels", g.n_channels);
    detail::read_optional(j, "slit_centers", g.slit_centers);
}

inline void to_json(json& j, const WorldConfig& w) {
    j = json{{"geometry", w.geometry},
             {"screen", std::string(to_string(w.screen))},
             {"mushroom_count", w.mushroom_count},
             {"mushroom_radius", w.mushroom_radius},
             {"lateral_speed", w.lateral_speed},
             {"vertical_speed", w.vertical_speed},
             {"rng_seed", w.rng_seed},
             {"warmup", w.warmup}};
}

inline void from_json(const json& j, WorldConfig& w) {
    detail::read_optional(j, "geometry", w.geometry);
    if (auto it = j.find("screen"); it != j.end()) w.screen = parse_screen(it->get<std::string>());
    detail::read_optional(j, "mushroom_count", w.mushroom_count);
    detail::read_optional(j, "mushroom_radius", w.mushroom_radius);
    detail::read_optional(j, "lateral_speed", w.lateral_speed);
    detail::read_optional(j, "vertical_speed", w.vertical_speed);
    detail::read_optional(j, "rng_seed", w.rng_seed);
    detail::read_optional(j, "warmup", w.warmup);
    w.geometry = with_screen(w.geometry, w.screen);
}

inline void to_json(json& j, const SubjectMeta& m) {
    j = json{{"label", m.label}, {"gender", m.gender}};
    j["age"] = m.age ? json(*m.age) : json(nullptr);
}

inline void from_json(const json& j, SubjectMeta& m) {
    detail::read_optional(j, "label", m.label);
    detail::read_optional(j, "gender", m.gender);
    if (auto it = j.find("age"); it != j.end() && !it->is_null()) m.age = it->get<int>();
}

inline json to_json(const InputLog& log) {
    json arr = json::array();
    for (const auto& e : log) arr.push_back(json::array({e.tick, std::string(to_string(e.input))}));
    return arr;
}

inline InputLog input_log_from_json(const json& arr) {
    InputLog log;
    for (const auto& e : arr) log.push_back({e.at(0).get<std::uint32_t>(), parse_steering(e.at(1).get<std::string>())});
    return log;
}

inline json points_to_json(const std::vector<Point>& pts) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back(json::array({p.x, p.y}));
    return arr;
}

} // namespace slitlab
