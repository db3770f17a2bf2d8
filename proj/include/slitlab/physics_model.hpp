#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <ostream>
#include <vector>

#include "slitlab/error.hpp"
#include "slitlab/format.hpp"
#include "slitlab/geometry.hpp"

namespace slitlab {

/// Parameters of the closed-form registration-plane models.
///
/// interference_sign = +1 selects the two-slit sum (cross term added),
/// -1 selects the one-slit dip model where two hidden sources sit at
/// slit_center +/- hd/2 and the cross term is subtracted.
struct ModelParams {
    Geometry geometry;
    std::optional<double> hidden_separation; // hd; defaults to 2 * lambda
    int interference_sign = +1;
    double amplitude_scale = 1.0;
    double baseline_offset = 0.0; // C

    [[nodiscard]] double hd() const { return hidden_separation.value_or(2.0 * geometry.wavelength); }

    bool operator==(const ModelParams&) const = default;
};

/// Two-slit parameters for geometry `g` (slits at +/- d/2).
inline ModelParams two_slit_params(Geometry g) {
    ModelParams p;
    p.geometry = with_screen(std::move(g), Screen::TwoSlit);
    p.interference_sign = +1;
    return p;
}

/// Dip-model parameters for a one-slit screen.
inline ModelParams one_slit_dip_params(Geometry g, Screen screen = Screen::OneSlitCenter,
                                       std::optional<double> hd = std::nullopt) {
    ModelParams p;
    p.geometry = with_screen(std::move(g), screen);
    p.interference_sign = -1;
    p.hidden_separation = hd;
    return p;
}

/// Model family matching a screen: two-slit sum for TwoSlit, dip otherwise.
inline ModelParams params_for_screen(Geometry g, Screen screen) {
    return is_two_slit(screen) ? two_slit_params(std::move(g)) : one_slit_dip_params(std::move(g), screen);
}

namespace detail {

inline double path_length(double distance, double slit_x, double x) { return std::hypot(distance, x - slit_x); }

inline double envelope_at(double distance, double r) { return distance * distance / (r * r * r); }

/// E_a + E_b + sign * 2 sqrt(E_a E_b) cos(2 pi (r_a - r_b) / lambda).
/// The subtracted form is evaluated as a sum of squares so it never goes negative
/// and vanishes exactly when E_a == E_b and r_a == r_b.
inline double interfere(double ea, double eb, double ra, double rb, double wavelength, int sign) {
    const double phase = 2.0 * std::numbers::pi * (ra - rb) / wavelength;
    if (sign >= 0) {
        const double v = ea + eb + 2.0 * std::sqrt(ea * eb) * std::cos(phase);
        return v > 0.0 ? v : 0.0;
    }
    const double sa = std::sqrt(ea);
    const double sb = std::sqrt(eb);
    const double half_sin = std::sin(phase / 2.0);
    return (sa - sb) * (sa - sb) + 4.0 * sa * sb * half_sin * half_sin;
}

inline void require_wavelength(const Geometry& g) {
    if (!(g.wavelength > 0.0)) throw Error(Errc::invalid_parameter, "wavelength must be positive");
}

} // namespace detail

/// Single-slit energy density cos^2(phi) / r = D^2 / r^3 at lateral position x.
inline double envelope_intensity(const Geometry& g, double slit_x, double x) {
    const double r = detail::path_length(g.distance, slit_x, x);
    return detail::envelope_at(g.distance, r);
}

/// Wave amplitude cos(phi) r^{-1/2} exp(-i 2 pi r / lambda).
inline std::complex<double> complex_amplitude(const Geometry& g, double slit_x, double x) {
    detail::require_wavelength(g);
    const double r = detail::path_length(g.distance, slit_x, x);
    const double magnitude = (g.distance / r) / std::sqrt(r);
    return std::polar(magnitude, -2.0 * std::numbers::pi * r / g.wavelength);
}

/// Two coherent slits: |F_a + F_b|^2 written in intensity form.
inline double two_slit_intensity(const ModelParams& p, double x) {
    const auto& g = p.geometry;
    if (g.slit_centers.size() != 2)
        throw Error(Errc::configuration, "two-slit model needs exactly two slit centers");
    if (p.interference_sign != +1) throw Error(Errc::configuration, "two-slit model needs interference_sign +1");
    detail::require_wavelength(g);
    const double ra = detail::path_length(g.distance, g.slit_centers[0], x);
    const double rb = detail::path_length(g.distance, g.slit_centers[1], x);
    return detail::interfere(detail::envelope_at(g.distance, ra), detail::envelope_at(g.distance, rb), ra, rb,
                             g.wavelength, +1);
}

/// One slit modeled as two hidden sources hd apart with the cross term subtracted.
/// Exactly zero over the slit center.
inline double one_slit_dip_intensity(const ModelParams& p, double x) {
    const auto& g = p.geometry;
    if (g.slit_centers.size() != 1)
        throw Error(Errc::configuration, "dip model needs exactly one slit center");
    if (p.interference_sign != -1) throw Error(Errc::configuration, "dip model needs interference_sign -1");
    detail::require_wavelength(g);
    const double hd = p.hd();
    if (!(hd > 0.0)) throw Error(Errc::invalid_parameter, "hidden separation hd must be positive");
    const double u = x - g.slit_centers[0];
    const double ra = std::hypot(g.distance, u + hd / 2.0);
    const double rb = std::hypot(g.distance, u - hd / 2.0);
    return detail::interfere(detail::envelope_at(g.distance, ra), detail::envelope_at(g.distance, rb), ra, rb,
                             g.wavelength, -1);
}

inline double model_intensity(const ModelParams& p, double x) {
    return p.interference_sign >= 0 ? two_slit_intensity(p, x) : one_slit_dip_intensity(p, x);
}

/// Raw model intensity at every channel center.
inline std::vector<double> channel_intensities(const ModelParams& p) {
    const int n = p.geometry.n_channels;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int c = 1; c <= n; ++c) out[static_cast<std::size_t>(c - 1)] = model_intensity(p, channel_x(c, n));
    return out;
}

/// Display curve: amplitude_scale * intensity + baseline_offset per channel.
inline std::vector<double> display_curve(const ModelParams& p) {
    auto v = channel_intensities(p);
    for (auto& e : v) e = p.amplitude_scale * e + p.baseline_offset;
    return v;
}

/// Probability of landing in each channel under the model selected by `screen`.
/// amplitude_scale and baseline_offset do not enter.
inline std::vector<double> predicted_channel_distribution(const ModelParams& p, Screen screen) {
    if (is_two_slit(screen) != (p.interference_sign >= 0))
        throw Error(Errc::configuration, std::string("model family does not match screen ") +
                                             std::string(to_string(screen)));
    const auto expected = slit_centers_for(screen, p.geometry.separation);
    if (p.geometry.slit_centers.size() != expected.size())
        throw Error(Errc::configuration, "slit count does not match screen");
    if (p.amplitude_scale <= 0.0) throw Error(Errc::invalid_parameter, "amplitude_scale must be positive");

    auto v = channel_intensities(p);
    double total = 0.0;
    for (double e : v) total += e;
    if (!(total > 0.0)) throw Error(Errc::degenerate_distribution, "model intensity is zero on every channel");
    for (auto& e : v) e /= total;
    return v;
}

/// Predicted number of minima, N ~ 2d / lambda.
inline double fringe_count(double separation, double wavelength) { return 2.0 * separation / wavelength; }

/// Inverse of fringe_count.
inline double lambda_from_minima(double separation, double minima) { return 2.0 * separation / minima; }

/// CSV with header `channel,x,value`, one row per channel; value is the display curve.
inline void write_model_csv(std::ostream& out, const ModelParams& p) {
    const auto values = display_curve(p);
    const int n = p.geometry.n_channels;
    out << "channel,x,value\n";
    for (int c = 1; c <= n; ++c)
        out << c << ',' << format_number(channel_x(c, n)) << ','
            << format_number(values[static_cast<std::size_t>(c - 1)]) << '\n';
}

} // namespace slitlab
