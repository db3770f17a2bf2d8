#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "slitlab/error.hpp"
#include "slitlab/format.hpp"
#include "slitlab/geometry.hpp"
#include "slitlab/physics_model.hpp"
#include "slitlab/session.hpp"

namespace slitlab {

/// Counts, or rates per k registered attempts.
struct Normalization {
    enum class Mode { Counts, RatePerK } mode = Mode::Counts;
    double k = 0.0;
    bool operator==(const Normalization&) const = default;
};

/// Hits over the registration channels; bins[c - 1] belongs to channel c.
struct ChannelHistogram {
    std::vector<double> bins;
    std::size_t n_attempts_registered = 0;
    Normalization normalization;

    [[nodiscard]] double at(int channel) const { return bins.at(static_cast<std::size_t>(channel - 1)); }
    [[nodiscard]] int n_channels() const noexcept { return static_cast<int>(bins.size()); }
    [[nodiscard]] double total() const {
        double t = 0.0;
        for (double b : bins) t += b;
        return t;
    }
    bool operator==(const ChannelHistogram&) const = default;
};

/// Counts of non-excluded registered attempts only.
inline ChannelHistogram build_histogram(const Session& s) {
    ChannelHistogram h;
    h.bins.assign(static_cast<std::size_t>(s.world.geometry.n_channels), 0.0);
    for (const auto& a : s.attempts) {
        if (a.excluded()) continue;
        h.bins[static_cast<std::size_t>(*a.channel() - 1)] += 1.0;
        ++h.n_attempts_registered;
    }
    return h;
}

/// Scales bins so they read as hits per `k` registered attempts.
inline ChannelHistogram normalize(const ChannelHistogram& h, double k) {
    if (h.n_attempts_registered == 0) throw Error(Errc::empty_histogram, "cannot normalize an empty histogram");
    if (!(k > 0.0)) throw Error(Errc::invalid_parameter, "normalization k must be positive");
    const double current = h.normalization.mode == Normalization::Mode::Counts
                               ? static_cast<double>(h.n_attempts_registered)
                               : h.normalization.k;
    ChannelHistogram out = h;
    for (auto& b : out.bins) b = b * k / current;
    out.normalization = {Normalization::Mode::RatePerK, k};
    return out;
}

/// All attempts of all sessions in one histogram.
inline ChannelHistogram pooled_histogram(std::span<const Session> sessions) {
    if (sessions.empty()) throw Error(Errc::insufficient_data, "no sessions to pool");
    ChannelHistogram pooled = build_histogram(sessions.front());
    for (std::size_t i = 1; i < sessions.size(); ++i) {
        const auto h = build_histogram(sessions[i]);
        if (h.bins.size() != pooled.bins.size()) throw Error(Errc::configuration, "sessions differ in channel count");
        for (std::size_t c = 0; c < h.bins.size(); ++c) pooled.bins[c] += h.bins[c];
        pooled.n_attempts_registered += h.n_attempts_registered;
    }
    return pooled;
}

struct EnsembleStats {
    std::vector<double> mean;
    std::vector<double> sigma;
    std::size_t n_sessions = 0;
    double mean_sigma = 0.0;
};

/// Per-channel mean and sample standard deviation of the sessions'
/// per-k normalized histograms. Sessions are the statistical unit.
inline EnsembleStats ensemble_stats(std::span<const Session> sessions, double k = 1000.0) {
    if (sessions.size() < 2) throw Error(Errc::insufficient_data, "ensemble statistics need at least two sessions");
    std::vector<ChannelHistogram> hs;
    hs.reserve(sessions.size());
    for (const auto& s : sessions) hs.push_back(normalize(build_histogram(s), k));

    const std::size_t n = hs.front().bins.size();
    const double m = static_cast<double>(hs.size());
    EnsembleStats st;
    st.n_sessions = hs.size();
    st.mean.assign(n, 0.0);
    st.sigma.assign(n, 0.0);
    for (const auto& h : hs) {
        if (h.bins.size() != n) throw Error(Errc::configuration, "sessions differ in channel count");
        for (std::size_t c = 0; c < n; ++c) st.mean[c] += h.bins[c];
    }
    for (auto& v : st.mean) v /= m;
    for (const auto& h : hs)
        for (std::size_t c = 0; c < n; ++c) st.sigma[c] += (h.bins[c] - st.mean[c]) * (h.bins[c] - st.mean[c]);
    for (auto& v : st.sigma) v = std::sqrt(v / (m - 1.0));
    for (double v : st.sigma) st.mean_sigma += v;
    st.mean_sigma /= static_cast<double>(n);
    return st;
}

/// Centered moving average with mirrored boundaries. Width must be odd.
inline std::vector<double> smooth(std::span<const double> v, int width) {
    if (width < 1 || width % 2 == 0) throw Error(Errc::invalid_parameter, "smoothing width must be odd and >= 1");
    const auto n = static_cast<std::ptrdiff_t>(v.size());
    std::vector<double> out(v.size(), 0.0);
    if (n == 0) return out;
    const std::ptrdiff_t half = width / 2;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::ptrdiff_t k = -half; k <= half; ++k) {
            std::ptrdiff_t j = i + k;
            if (n == 1) j = 0;
            while (j < 0 || j >= n) j = j < 0 ? -j : 2 * (n - 1) - j;
            sum += v[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = sum / width;
    }
    return out;
}

struct ContrastOptions {
    int smoothing_width = 3;
    double central_half_width = 14.0; // channels either side of the center
};

/// (peak - mean of adjacent minima) / (peak + mean of adjacent minima) of the
/// central fringe, or nullopt when the peak has no interior minimum on either side.
inline std::optional<double> contrast(std::span<const double> values, const ContrastOptions& opt = {}) {
    if (values.empty()) throw Error(Errc::empty_histogram, "contrast of an empty histogram");
    const auto s = smooth(values, opt.smoothing_width);
    const auto n = static_cast<int>(s.size());
    const double center = center_channel(n) - 1.0; // 0-based
    const int lo = std::max(0, static_cast<int>(std::ceil(center - opt.central_half_width)));
    const int hi = std::min(n - 1, static_cast<int>(std::floor(center + opt.central_half_width)));
    if (lo > hi) return std::nullopt;

    int peak = lo;
    for (int i = lo; i <= hi; ++i)
        if (s[static_cast<std::size_t>(i)] > s[static_cast<std::size_t>(peak)]) peak = i;

    auto walk = [&](int step) -> std::optional<double> {
        int i = peak;
        while (i + step >= 0 && i + step < n && s[static_cast<std::size_t>(i + step)] <= s[static_cast<std::size_t>(i)])
            i += step;
        if (i + step < 0 || i + step >= n) return std::nullopt; // ran into the edge
        if (!(s[static_cast<std::size_t>(i)] < s[static_cast<std::size_t>(peak)])) return std::nullopt;
        return s[static_cast<std::size_t>(i)];
    };
    const auto left = walk(-1);
    const auto right = walk(+1);
    if (!left || !right) return std::nullopt;
    const double peak_value = s[static_cast<std::size_t>(peak)];
    const double minima = (*left + *right) / 2.0;
    if (!(peak_value + minima > 0.0)) return std::nullopt;
    return (peak_value - minima) / (peak_value + minima);
}

inline std::optional<double> contrast(const ChannelHistogram& h, const ContrastOptions& opt = {}) {
    return contrast(std::span<const double>(h.bins), opt);
}

/// Channels sitting under the slits of `screen`, e.g. {25, 39} for two slits.
inline std::vector<int> slit_channels(Screen screen, const Geometry& g = {}) {
    std::vector<int> out;
    for (double x : slit_centers_for(screen, g.separation))
        if (auto c = channel_of(x, g.n_channels)) out.push_back(*c);
    return out;
}

/// Slit-aligned channels whose value exceeds `factor` times the mean of their two neighbors.
inline std::vector<int> flag_artifact_channels(const ChannelHistogram& h, Screen screen, const Geometry& g = {},
                                               double factor = 1.5) {
    std::vector<int> flagged;
    for (int c : slit_channels(screen, g)) {
        if (c <= 1 || c >= h.n_channels()) continue;
        const double neighbors = (h.at(c - 1) + h.at(c + 1)) / 2.0;
        if (h.at(c) > factor * neighbors) flagged.push_back(c);
    }
    return flagged;
}

/// Replaces each listed channel by the mean of its neighbors.
inline ChannelHistogram mask_channels(ChannelHistogram h, std::span<const int> channels) {
    const int n = h.n_channels();
    for (int c : channels) {
        if (c < 1 || c > n) throw Error(Errc::invalid_parameter, "mask channel out of range");
        const double left = c > 1 ? h.at(c - 1) : h.at(c + 1);
        const double right = c < n ? h.at(c + 1) : h.at(c - 1);
        h.bins[static_cast<std::size_t>(c - 1)] = (left + right) / 2.0;
    }
    return h;
}

/// Pearson correlation, or nullopt if either side has zero variance.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw Error(Errc::invalid_parameter, "pearson needs equal lengths >= 2");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct WaveLikeOptions {
    double threshold = 0.3;
    int smoothing_width = 3;
    bool mask_artifacts = true;
    double artifact_factor = 1.5;
};

struct WaveLikeScore {
    double score = 0.0;
    bool wave_like = false;
};

/// Correlation of the (masked, smoothed) histogram with a fitted model curve.
/// nullopt: the histogram or curve has zero variance.
inline std::optional<WaveLikeScore> classify_wave_like(const ChannelHistogram& h, std::span<const double> model_curve,
                                                       Screen screen, const WaveLikeOptions& opt = {},
                                                       const Geometry& g = {}) {
    ChannelHistogram work = h;
    if (opt.mask_artifacts) {
        const auto flagged = flag_artifact_channels(h, screen, g, opt.artifact_factor);
        work = mask_channels(std::move(work), flagged);
    }
    const auto smoothed = smooth(work.bins, opt.smoothing_width);
    const auto r = pearson(smoothed, model_curve);
    if (!r) return std::nullopt;
    return WaveLikeScore{*r, *r >= opt.threshold};
}

namespace detail {

inline double shifted_bin(const ChannelHistogram& h, int channel) {
    return channel >= 1 && channel <= h.n_channels() ? h.at(channel) : 0.0;
}

inline void require_compatible(const ChannelHistogram& a, const ChannelHistogram& b) {
    if (a.bins.size() != b.bins.size()) throw Error(Errc::configuration, "histograms differ in channel count");
    if (!(a.normalization == b.normalization))
        throw Error(Errc::mismatched_normalization, "inputs must share one normalization");
}

} // namespace detail

/// Sum of the left input moved by -shift channels and the right input moved by +shift.
inline ChannelHistogram compose_incoherent(const ChannelHistogram& left, const ChannelHistogram& right,
                                           int shift = 7) {
    detail::require_compatible(left, right);
    ChannelHistogram out;
    out.normalization = left.normalization;
    out.n_attempts_registered = left.n_attempts_registered + right.n_attempts_registered;
    out.bins.resize(left.bins.size());
    for (int c = 1; c <= left.n_channels(); ++c)
        out.bins[static_cast<std::size_t>(c - 1)] =
            detail::shifted_bin(left, c + shift) + detail::shifted_bin(right, c - shift);
    return out;
}

/// Treats the shifted inputs as the intensities of two coherent slits at
/// -shift and +shift and interferes them with the geometry's D and lambda.
/// `interference = false` drops the cross term.
inline ChannelHistogram compose_coherent(const ChannelHistogram& left, const ChannelHistogram& right,
                                         const Geometry& g, int shift = 7, double amplitude_factor = 0.5,
                                         bool interference = true) {
    detail::require_compatible(left, right);
    for (const auto* h : {&left, &right})
        for (double b : h->bins)
            if (b < 0.0) throw Error(Errc::negative_intensity, "composition inputs must be nonnegative");
    if (!(g.wavelength > 0.0)) throw Error(Errc::invalid_parameter, "wavelength must be positive");

    ChannelHistogram out;
    out.normalization = left.normalization;
    out.n_attempts_registered = left.n_attempts_registered + right.n_attempts_registered;
    out.bins.resize(left.bins.size());
    const int n = left.n_channels();
    for (int c = 1; c <= n; ++c) {
        const double ea = detail::shifted_bin(left, c + shift);
        const double eb = detail::shifted_bin(right, c - shift);
        const double x = channel_x(c, n);
        const double ra = std::hypot(g.distance, x + shift);
        const double rb = std::hypot(g.distance, x - shift);
        double value = ea + eb;
        if (interference) value += 2.0 * std::sqrt(ea * eb) * std::cos(2.0 * std::numbers::pi * (ra - rb) / g.wavelength);
        out.bins[static_cast<std::size_t>(c - 1)] = amplitude_factor * value;
    }
    return out;
}

struct Composition {
    ChannelHistogram one_slit;
    ChannelHistogram incoherent;
    ChannelHistogram coherent;
};

/// Builds the one-slit input from the dip model instead of data: the model
/// distribution as a rate per `k`, times amplitude_scale, plus C.
inline Composition compose_from_approximation(const ModelParams& p, double offset, int shift = 7,
                                              double amplitude_factor = 0.5, double k = 1000.0) {
    if (p.interference_sign != -1 || p.geometry.slit_centers.size() != 1)
        throw Error(Errc::configuration, "approximation must use the one-slit dip model");
    if (!(p.hd() > 0.0)) throw Error(Errc::invalid_parameter, "hidden separation hd must be positive");
    const auto raw = channel_intensities(p);
    double total = 0.0;
    for (double v : raw) total += v;
    if (!(total > 0.0)) throw Error(Errc::degenerate_distribution, "dip model is zero everywhere");

    Composition out;
    out.one_slit.normalization = {Normalization::Mode::RatePerK, k};
    out.one_slit.bins.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = p.amplitude_scale * raw[i] / total * k + offset;
        if (v < 0.0) throw Error(Errc::negative_intensity, "offset C drives a bin negative");
        out.one_slit.bins[i] = v;
    }
    out.incoherent = compose_incoherent(out.one_slit, out.one_slit, shift);
    out.coherent = compose_coherent(out.one_slit, out.one_slit, p.geometry, shift, amplitude_factor);
    return out;
}

/// `channel,value` CSV.
inline void write_histogram_csv(std::ostream& out, std::span<const double> bins) {
    out << "channel,value\n";
    for (std::size_t i = 0; i < bins.size(); ++i) out << i + 1 << ',' << format_number(bins[i]) << '\n';
}

/// `channel,mean,sigma` CSV.
inline void write_stats_csv(std::ostream& out, const EnsembleStats& st) {
    out << "channel,mean,sigma\n";
    for (std::size_t i = 0; i < st.mean.size(); ++i)
        out << i + 1 << ',' << format_number(st.mean[i]) << ',' << format_number(st.sigma[i]) << '\n';
}

} // namespace slitlab
