#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slitlab/error.hpp"

namespace slitlab {

/// Which apertures are cut into the screen.
enum class Screen { TwoSlit, OneSlitLeft, OneSlitRight, OneSlitCenter };

constexpr std::string_view to_string(Screen s) noexcept {
    switch (s) {
    case Screen::TwoSlit: return "two-slit";
    case Screen::OneSlitLeft: return "one-slit-left";
    case Screen::OneSlitRight: return "one-slit-right";
    case Screen::OneSlitCenter: return "one-slit-center";
    }
    return "two-slit";
}

inline Screen parse_screen(std::string_view name) {
    for (auto s : {Screen::TwoSlit, Screen::OneSlitLeft, Screen::OneSlitRight, Screen::OneSlitCenter})
        if (name == to_string(s)) return s;
    throw Error(Errc::invalid_parameter, "unknown screen '" + std::string(name) + "'");
}

constexpr bool is_two_slit(Screen s) noexcept { return s == Screen::TwoSlit; }

/// Lateral slit offsets (channel units) for a screen with slit separation `separation`.
inline std::vector<double> slit_centers_for(Screen screen, double separation) {
    const double half = separation / 2.0;
    switch (screen) {
    case Screen::TwoSlit: return {-half, half};
    case Screen::OneSlitLeft: return {-half};
    case Screen::OneSlitRight: return {half};
    case Screen::OneSlitCenter: return {0.0};
    }
    return {};
}

/// Spatial parameters of the apparatus. All lengths are in channel units.
/// Defaults: the two-slit layout with slits over channels 25 and 39.
struct Geometry {
    double thickness = 0.5;        // t
    double slit_width = 2.0;       // w
    double wavelength = 4.0;       // lambda
    double separation = 14.0;      // d
    double distance = 40.0;        // D, screen to registration plane
    double source_distance = 100.0; // s, source to screen
    int n_channels = 63;
    std::vector<double> slit_centers{-7.0, 7.0};

    bool operator==(const Geometry&) const = default;
};

/// Same geometry with the slit centers of `screen`.
inline Geometry with_screen(Geometry g, Screen screen) {
    g.slit_centers = slit_centers_for(screen, g.separation);
    return g;
}

/// Center channel index, e.g. 32 for 63 channels.
constexpr double center_channel(int n_channels) noexcept { return (n_channels + 1) / 2.0; }

/// Lateral coordinate of channel `c` (1-based).
constexpr double channel_x(int c, int n_channels) noexcept { return c - center_channel(n_channels); }

/// Channel whose bin contains `x`, or nullopt when `x` falls outside the plane.
inline std::optional<int> channel_of(double x, int n_channels) {
    const double c = std::round(x) + center_channel(n_channels);
    if (!(c >= 1.0 && c <= static_cast<double>(n_channels))) return std::nullopt;
    return static_cast<int>(c);
}

/// Returns every violated link of t < w < lambda < d < D < s; empty means valid.
/// Throws if a field is not positive.
inline std::vector<std::string> validate_geometry(const Geometry& g) {
    struct Field {
        const char* name;
        double value;
    };
    const Field chain[] = {{"t", g.thickness},  {"w", g.slit_width}, {"lambda", g.wavelength},
                           {"d", g.separation}, {"D", g.distance},   {"s", g.source_distance}};
    for (const auto& f : chain)
        if (!(f.value > 0.0))
            throw Error(Errc::invalid_parameter, std::string("field '") + f.name + "' must be positive");
    if (g.n_channels <= 0) throw Error(Errc::invalid_parameter, "field 'n_channels' must be positive");

    std::vector<std::string> violations;
    for (std::size_t i = 0; i + 1 < std::size(chain); ++i)
        if (!(chain[i].value < chain[i + 1].value))
            violations.push_back(std::string(chain[i].name) + " < " + chain[i + 1].name + " fails");
    return violations;
}

} // namespace slitlab
