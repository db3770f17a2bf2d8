#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slitlab/analytics.hpp"
#include "slitlab/error.hpp"
#include "slitlab/format.hpp"
#include "slitlab/physics_model.hpp"

namespace slitlab {

/// Strict interior local minima after smoothing. Runs of equal values count as one point.
inline int count_minima(std::span<const double> values, int smoothing_width = 3) {
    if (values.size() < 5) throw Error(Errc::invalid_parameter, "count_minima needs at least 5 values");
    const auto s = smooth(values, smoothing_width);
    std::vector<double> runs;
    runs.reserve(s.size());
    for (double v : s)
        if (runs.empty() || v != runs.back()) runs.push_back(v);
    int count = 0;
    for (std::size_t i = 1; i + 1 < runs.size(); ++i)
        if (runs[i] < runs[i - 1] && runs[i] < runs[i + 1]) ++count;
    return count;
}

/// Upper bound 2d/N on lambda given N observed minima; nullopt when N = 0 (unbounded).
inline std::optional<double> lambda_bound_from_minima(double separation, int minima) {
    if (minima < 0) throw Error(Errc::invalid_parameter, "minima count must be nonnegative");
    if (minima == 0) return std::nullopt;
    return lambda_from_minima(separation, static_cast<double>(minima));
}

enum class FreeParams { Lambda, LambdaAndDistance };

struct FitBounds {
    double lambda_min = 1.0;
    double lambda_max = 20.0;
    double lambda_step = 0.1;
    double distance_min = 10.0;
    double distance_max = 80.0;
    double distance_step = 1.0;
};

struct FitOptions {
    FreeParams free = FreeParams::Lambda;
    FitBounds bounds;
    Geometry geometry;         // d is always fixed; D is fixed unless freed
    std::vector<int> mask;     // channels left out of the residual
    bool mask_artifacts = false; // also mask flagged slit channels
    double hd_ratio = 2.0;     // dip model: hd = hd_ratio * lambda
    int smoothing_width = 3;   // for the minima count
    int refine_factor = 10;
};

struct FitResult {
    Screen screen = Screen::TwoSlit;
    double wavelength = 0.0;
    double distance = 0.0;
    double separation = 0.0;
    bool distance_free = false;
    double hd_ratio = 2.0;
    double scale = 0.0;
    double residual = 0.0;
    int minima_count = 0;
    std::vector<int> mask;
};

/// Model parameters described by a fit.
inline ModelParams fitted_params(const FitResult& f, Geometry g = {}) {
    g.wavelength = f.wavelength;
    g.distance = f.distance;
    g.separation = f.separation;
    auto p = params_for_screen(std::move(g), f.screen);
    if (!is_two_slit(f.screen)) p.hidden_separation = f.hd_ratio * f.wavelength;
    return p;
}

/// Fitted model as a probability vector over channels.
inline std::vector<double> fitted_curve(const FitResult& f, const Geometry& g = {}) {
    return predicted_channel_distribution(fitted_params(f, g), f.screen);
}

namespace detail {

inline std::vector<double> grid_axis(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw Error(Errc::invalid_parameter, "empty search bounds");
    std::vector<double> axis;
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) axis.push_back(lo + static_cast<double>(i) * step);
    return axis;
}

} // namespace detail

/// Least-squares fit of the model family for `screen` by exhaustive grid
/// search over lambda (and D when freed), then a 10x finer grid around the
/// best cell. Residuals compare probability-normalized vectors over the
/// unmasked channels. Ties go to the smallest lambda, then smallest D.
inline FitResult fit_interference(const ChannelHistogram& h, Screen screen, const FitOptions& opt = {}) {
    const int n = h.n_channels();
    if (n != opt.geometry.n_channels) throw Error(Errc::configuration, "histogram and geometry differ in channel count");

    std::vector<int> mask = opt.mask;
    if (opt.mask_artifacts)
        for (int c : flag_artifact_channels(h, screen, opt.geometry))
            if (std::find(mask.begin(), mask.end(), c) == mask.end()) mask.push_back(c);
    std::sort(mask.begin(), mask.end());

    std::vector<std::size_t> keep;
    for (int c = 1; c <= n; ++c)
        if (!std::binary_search(mask.begin(), mask.end(), c)) keep.push_back(static_cast<std::size_t>(c - 1));
    if (keep.empty()) throw Error(Errc::empty_mask_complement, "every channel is masked");

    double total = 0.0;
    for (auto i : keep) total += h.bins[i];
    if (!(total > 0.0)) throw Error(Errc::flat_data, "no hits on the unmasked channels");
    std::vector<double> observed;
    for (auto i : keep) observed.push_back(h.bins[i] / total);
    const auto [mn, mx] = std::minmax_element(observed.begin(), observed.end());
    if (*mn == *mx) throw Error(Errc::flat_data, "histogram is flat; no fringe structure to fit");

    Geometry g = with_screen(opt.geometry, screen);
    auto model_at = [&](double lambda, double distance) {
        Geometry gg = g;
        gg.wavelength = lambda;
        gg.distance = distance;
        auto p = params_for_screen(gg, screen);
        if (!is_two_slit(screen)) p.hidden_separation = opt.hd_ratio * lambda;
        return channel_intensities(p);
    };
    auto residual_at = [&](double lambda, double distance) {
        const auto m = model_at(lambda, distance);
        double mt = 0.0;
        for (auto i : keep) mt += m[i];
        if (!(mt > 0.0)) return std::numeric_limits<double>::infinity();
        double r = 0.0;
        for (std::size_t j = 0; j < keep.size(); ++j) {
            const double diff = observed[j] - m[keep[j]] / mt;
            r += diff * diff;
        }
        return r;
    };

    const bool free_d = opt.free == FreeParams::LambdaAndDistance;
    const auto& b = opt.bounds;
    struct Best {
        double lambda, distance, residual;
    } best{0.0, 0.0, std::numeric_limits<double>::infinity()};
    auto search = [&](const std::vector<double>& lambdas, const std::vector<double>& distances) {
        for (double l : lambdas)
            for (double d : distances) {
                const double r = residual_at(l, d);
                if (r < best.residual) best = {l, d, r};
            }
    };

    const auto coarse_l = detail::grid_axis(b.lambda_min, b.lambda_max, b.lambda_step);
    const auto coarse_d = free_d ? detail::grid_axis(b.distance_min, b.distance_max, b.distance_step)
                                 : std::vector<double>{g.distance};
    search(coarse_l, coarse_d);
    if (!std::isfinite(best.residual)) throw Error(Errc::degenerate_distribution, "model vanishes on every grid cell");

    const double fine_l = b.lambda_step / opt.refine_factor;
    const auto fl = detail::grid_axis(std::max(b.lambda_min, best.lambda - b.lambda_step),
                                      std::min(b.lambda_max, best.lambda + b.lambda_step), fine_l);
    std::vector<double> fd{best.distance};
    if (free_d)
        fd = detail::grid_axis(std::max(b.distance_min, best.distance - b.distance_step),
                               std::min(b.distance_max, best.distance + b.distance_step),
                               b.distance_step / opt.refine_factor);
    search(fl, fd);

    FitResult f;
    f.screen = screen;
    f.wavelength = best.lambda;
    f.distance = best.distance;
    f.separation = g.separation;
    f.distance_free = free_d;
    f.hd_ratio = opt.hd_ratio;
    f.residual = best.residual;
    f.mask = mask;

    const auto m = model_at(best.lambda, best.distance);
    double hm = 0.0, mm = 0.0;
    for (auto i : keep) {
        hm += h.bins[i] * m[i];
        mm += m[i] * m[i];
    }
    f.scale = mm > 0.0 ? hm / mm : 0.0;
    f.minima_count = count_minima(mask_channels(h, mask).bins, opt.smoothing_width);
    return f;
}

/// Plain `key: value` record for a fit.
inline std::string format_fit_report(const FitResult& f) {
    std::ostringstream os;
    os << "screen: " << to_string(f.screen) << '\n';
    os << "lambda: " << format_number(f.wavelength) << '\n';
    os << "D: " << format_number(f.distance) << (f.distance_free ? " (fitted)" : " (fixed)") << '\n';
    os << "d: " << format_number(f.separation) << '\n';
    if (!is_two_slit(f.screen)) os << "hd: " << format_number(f.hd_ratio * f.wavelength) << '\n';
    os << "scale: " << format_number(f.scale) << '\n';
    os << "residual: " << format_number(f.residual) << '\n';
    os << "minima_count: " << f.minima_count << '\n';
    if (auto bound = lambda_bound_from_minima(f.separation, f.minima_count))
        os << "lambda_bound: " << format_number(*bound) << '\n';
    else
        os << "lambda_bound: unbounded\n";
    os << "mask:";
    for (int c : f.mask) os << ' ' << c;
    os << '\n';
    return os.str();
}

} // namespace slitlab
