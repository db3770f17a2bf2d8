#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "slitlab/agent.hpp"
#include "slitlab/analytics.hpp"

using namespace slitlab;

namespace {

Attempt make(Phase outcome, std::optional<int> channel, bool touched = false, std::size_t seq = 0) {
    Attempt::Data d;
    d.seq = seq;
    d.outcome = outcome;
    d.channel = channel;
    d.touched_mushroom = touched;
    return Attempt(d);
}

ChannelHistogram counts(std::vector<double> bins) {
    ChannelHistogram h;
    double t = 0.0;
    for (double b : bins) t += b;
    h.bins = std::move(bins);
    h.n_attempts_registered = static_cast<std::size_t>(t);
    return h;
}

ChannelHistogram rate(std::vector<double> bins, double k = 1000.0) {
    ChannelHistogram h;
    h.bins = std::move(bins);
    h.n_attempts_registered = 1;
    h.normalization = {Normalization::Mode::RatePerK, k};
    return h;
}

std::vector<double> eq1_channels() { return channel_intensities(two_slit_params(Geometry{})); }

std::vector<int> maxima(const std::vector<double>& v) {
    std::vector<int> out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i)
        if (v[i] > v[i - 1] && v[i] > v[i + 1]) out.push_back(static_cast<int>(i) + 1);
    return out;
}

} // namespace

TEST(Histogram, CountsOnlyIncludedRegistrations) {
    Session s;
    s.attempts.push_back(make(Phase::Registered, 10, false, 0));
    s.attempts.push_back(make(Phase::Registered, 10, true, 1));
    s.attempts.push_back(make(Phase::Blocked, std::nullopt, false, 2));
    const auto h = build_histogram(s);
    EXPECT_EQ(h.at(10), 1.0);
    EXPECT_EQ(h.total(), 1.0);
    EXPECT_EQ(h.n_attempts_registered, 1u);
    EXPECT_EQ(h.normalization.mode, Normalization::Mode::Counts);
}

TEST(Histogram, EmptySessionIsZero) {
    const auto h = build_histogram(Session{});
    EXPECT_EQ(h.bins, std::vector<double>(63, 0.0));
    EXPECT_EQ(h.n_attempts_registered, 0u);
}

TEST(Histogram, TotalEqualsIncludedCount) {
    WorldConfig w;
    w.mushroom_radius = 2.0;
    w.rng_seed = 6;
    Engine e(w);
    std::mt19937_64 rng(1);
    Session s;
    s.world = w;
    for (int i = 0; i < 500; ++i) {
        InputLog log;
        for (std::uint32_t t = 0; t < 140; t += 10) log.push_back({t, static_cast<Steering>(rng() % 3)});
        s.attempts.push_back(e.run_attempt(log));
    }
    std::size_t included = 0;
    for (const auto& a : s.attempts) included += a.outcome() == Phase::Registered && !a.touched_mushroom();
    EXPECT_EQ(build_histogram(s).total(), static_cast<double>(included));
}

TEST(Normalize, ScalesToK) {
    std::vector<double> b(63, 0.0);
    b[0] = 200.0;
    b[10] = 300.0;
    const auto n = normalize(counts(b), 1000.0);
    EXPECT_DOUBLE_EQ(n.total(), 1000.0);
    EXPECT_EQ(n.normalization, (Normalization{Normalization::Mode::RatePerK, 1000.0}));
    EXPECT_EQ(normalize(n, 1000.0), n);
    EXPECT_DOUBLE_EQ(normalize(n, 10.0).total(), 10.0);
}

TEST(Normalize, EqualMassForUnequalSessions) {
    std::vector<double> a(63, 0.0), b(63, 0.0);
    a[5] = 100.0;
    b[7] = 150.0;
    b[8] = 150.0;
    EXPECT_DOUBLE_EQ(normalize(counts(a), 1000.0).total(), normalize(counts(b), 1000.0).total());
}

TEST(Normalize, EmptyIsError) {
    try {
        normalize(counts(std::vector<double>(63, 0.0)), 1000.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_histogram);
    }
}

TEST(Ensemble, IdenticalSessionsHaveZeroSigma) {
    Session s;
    for (int c : {3, 3, 30, 31, 50}) s.attempts.push_back(make(Phase::Registered, c));
    const std::vector<Session> ss(4, s);
    const auto st = ensemble_stats(ss);
    EXPECT_EQ(st.n_sessions, 4u);
    EXPECT_EQ(st.mean_sigma, 0.0);
    EXPECT_DOUBLE_EQ(st.mean[2], 400.0);
}

TEST(Ensemble, NeedsTwoSessions) {
    const std::vector<Session> one(1);
    try {
        ensemble_stats(one);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::insufficient_data);
    }
}

TEST(Ensemble, MeanIsNormalizeThenAverage) {
    std::vector<Session> ss;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 6; ++i) {
        Session s;
        const int n = 50 + 37 * i;
        for (int j = 0; j < n; ++j) s.attempts.push_back(make(Phase::Registered, 1 + static_cast<int>(rng() % 63)));
        ss.push_back(std::move(s));
    }
    const auto st = ensemble_stats(ss, 1000.0);
    for (std::size_t c = 0; c < 63; ++c) {
        double m = 0.0, m2 = 0.0;
        for (const auto& s : ss) {
            const auto h = build_histogram(s);
            const double v = h.bins[c] * 1000.0 / static_cast<double>(h.n_attempts_registered);
            m += v;
            m2 += v * v;
        }
        m /= 6.0;
        EXPECT_NEAR(st.mean[c], m, 1e-12);
        EXPECT_NEAR(st.sigma[c], std::sqrt((m2 - 6.0 * m * m) / 5.0), 1e-9);
    }
    double avg = 0.0;
    for (double v : st.sigma) avg += v;
    EXPECT_NEAR(st.mean_sigma, avg / 63.0, 1e-12);
}

TEST(Ensemble, SigmaFollowsMultinomialNoise) {
    // 15 dip-model sessions of 1000 attempts; per-channel sigma of a rate per
    // 1000 is sqrt(1000 p (1 - p)) for the multinomial.
    WorldConfig w;
    w.screen = Screen::OneSlitCenter;
    w.mushroom_count = 0;
    const auto model = one_slit_dip_params(Geometry{});
    const auto p = predicted_channel_distribution(model, Screen::OneSlitCenter);
    std::vector<Session> ss;
    for (std::uint64_t i = 0; i < 15; ++i) ss.push_back(run_agent({ModelSampler{model}, 1000, 100 + i}, w));
    const auto st = ensemble_stats(ss);
    std::vector<double> expected;
    for (double q : p) expected.push_back(std::sqrt(1000.0 * q * (1.0 - q)));
    EXPECT_GT(*pearson(st.sigma, expected), 0.8);
    double ratio = 0.0;
    for (double v : expected) ratio += v;
    EXPECT_NEAR(st.mean_sigma / (ratio / 63.0), 1.0, 0.15);
}

TEST(Pooled, SumsSessions) {
    Session a, b;
    a.attempts.push_back(make(Phase::Registered, 4));
    b.attempts.push_back(make(Phase::Registered, 4));
    b.attempts.push_back(make(Phase::Registered, 9));
    const std::vector<Session> ss{a, b};
    const auto h = pooled_histogram(ss);
    EXPECT_EQ(h.at(4), 2.0);
    EXPECT_EQ(h.at(9), 1.0);
    EXPECT_EQ(h.n_attempts_registered, 3u);
}

TEST(Smooth, MovingAverageWithMirroredEdges) {
    const std::vector<double> v{1, 2, 3, 10, 5};
    const auto s = smooth(v, 3);
    EXPECT_DOUBLE_EQ(s[0], (2.0 + 1.0 + 2.0) / 3.0);
    EXPECT_DOUBLE_EQ(s[2], 5.0);
    EXPECT_DOUBLE_EQ(s[4], (10.0 + 5.0 + 10.0) / 3.0);
    EXPECT_EQ(smooth(v, 1), v);
    EXPECT_THROW(smooth(v, 2), Error);
}

TEST(Contrast, FlatIsUndefined) {
    EXPECT_FALSE(contrast(std::vector<double>(63, 5.0)));
}

TEST(Contrast, ThirtyFivePercentArithmetic) {
    std::vector<double> v(63, 20.0);
    v[31] = 27.0;
    v[28] = 13.0;
    v[34] = 13.0;
    for (int i : {29, 30}) v[static_cast<std::size_t>(i)] = 20.0;
    EXPECT_NEAR(*contrast(v, {1, 14.0}), 0.35, 1e-12);
}

TEST(Contrast, Eq1CurveFrozenAgainstDenseOracle) {
    const auto p = two_slit_params(Geometry{});
    // Dense-scan oracle: central peak and the first minima either side at 0.001 resolution.
    double peak = two_slit_intensity(p, 0.0);
    double lmin = 1e300, rmin = 1e300;
    for (double x = 0.0; x <= 10.0; x += 0.001) {
        rmin = std::min(rmin, two_slit_intensity(p, x));
        lmin = std::min(lmin, two_slit_intensity(p, -x));
    }
    const double dense = (peak - (lmin + rmin) / 2.0) / (peak + (lmin + rmin) / 2.0);
    EXPECT_NEAR(dense, 0.9974026, 1e-5);

    const auto v = eq1_channels();
    EXPECT_NEAR(*contrast(v, {1, 14.0}), 0.9946565, 1e-6);
    EXPECT_NEAR(*contrast(v), 0.9080767551912862, 1e-12);
    EXPECT_LE(*contrast(v, {1, 14.0}), dense);
}

TEST(Contrast, AlwaysInUnitIntervalWhenDefined) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    int defined = 0;
    for (int i = 0; i < 500; ++i) {
        std::vector<double> v(63);
        for (auto& e : v) e = u(rng);
        if (auto c = contrast(v)) {
            ++defined;
            EXPECT_GE(*c, 0.0);
            EXPECT_LE(*c, 1.0);
        }
    }
    EXPECT_GT(defined, 100);
}

TEST(Artifacts, LonelyCentralPeakFlagged) {
    std::vector<double> b(63, 100.0);
    b[31] = 300.0;
    EXPECT_EQ(flag_artifact_channels(counts(b), Screen::OneSlitCenter), std::vector<int>{32});
    EXPECT_TRUE(flag_artifact_channels(counts(b), Screen::TwoSlit).empty());
}

TEST(Artifacts, SmoothModelAndFlatDataNotFlagged) {
    // Independent ratio check on the model curve at the slit channels.
    const auto v = eq1_channels();
    for (int c : {25, 39}) EXPECT_LT(v[c - 1] / ((v[c - 2] + v[c]) / 2.0), 1.5);
    EXPECT_TRUE(flag_artifact_channels(counts(v), Screen::TwoSlit).empty());
    EXPECT_TRUE(flag_artifact_channels(counts(std::vector<double>(63, 7.0)), Screen::TwoSlit).empty());
    EXPECT_EQ(slit_channels(Screen::TwoSlit), (std::vector<int>{25, 39}));
}

TEST(Artifacts, MaskInterpolatesNeighbors) {
    std::vector<double> b(63, 0.0);
    b[23] = 4.0;
    b[24] = 100.0;
    b[25] = 6.0;
    const std::vector<int> m{25};
    EXPECT_EQ(mask_channels(counts(b), m).at(25), 5.0);
}

TEST(WaveLike, SelfCorrelationIsOne) {
    const auto v = eq1_channels();
    const auto s = classify_wave_like(counts(v), v, Screen::TwoSlit, {0.3, 1, true, 1.5});
    ASSERT_TRUE(s);
    EXPECT_NEAR(s->score, 1.0, 1e-12);
    EXPECT_TRUE(s->wave_like);
}

TEST(WaveLike, UniformAgentNearZero) {
    WorldConfig w;
    w.mushroom_count = 0;
    const auto session = run_agent({UniformTargets{}, 5000, 2}, w);
    const auto s = classify_wave_like(build_histogram(session), eq1_channels(), Screen::TwoSlit);
    ASSERT_TRUE(s);
    // Noise bound: correlation of pure multinomial noise has sd about 1/sqrt(63).
    EXPECT_LT(std::abs(s->score), 0.3);
    EXPECT_FALSE(s->wave_like);
}

TEST(WaveLike, AntiPhaseCurveStronglyNegative) {
    // Cross term subtracted instead of added; envelope differences keep the
    // correlation away from -1.
    const auto g = Geometry{};
    std::vector<double> anti;
    for (int c = 1; c <= 63; ++c) {
        const double x = channel_x(c, 63);
        const double ra = std::hypot(40.0, x + 7.0), rb = std::hypot(40.0, x - 7.0);
        const double ea = envelope_intensity(g, -7.0, x), eb = envelope_intensity(g, 7.0, x);
        anti.push_back(ea + eb - 2.0 * std::sqrt(ea * eb) * std::cos(2.0 * std::numbers::pi * (ra - rb) / 4.0));
    }
    const auto model = eq1_channels();
    EXPECT_NEAR(*pearson(anti, model), -0.8743, 1e-3);
    const auto s = classify_wave_like(counts(anti), model, Screen::TwoSlit);
    ASSERT_TRUE(s);
    EXPECT_NEAR(s->score, -0.8591, 1e-3);
    EXPECT_LT(s->score, -0.8);
    EXPECT_FALSE(s->wave_like);
}

TEST(WaveLike, FlatIsUnclassifiable) {
    EXPECT_FALSE(classify_wave_like(counts(std::vector<double>(63, 3.0)), eq1_channels(), Screen::TwoSlit));
}

TEST(WaveLike, ScaleInvariant) {
    std::mt19937_64 rng(5);
    std::vector<double> v(63);
    for (auto& e : v) e = static_cast<double>(rng() % 50);
    std::vector<double> scaled = v;
    for (auto& e : scaled) e *= 7.25;
    const auto model = eq1_channels();
    EXPECT_NEAR(classify_wave_like(counts(v), model, Screen::TwoSlit)->score,
                classify_wave_like(counts(scaled), model, Screen::TwoSlit)->score, 1e-12);
}

TEST(Compose, PointMassesMoveToSlits) {
    std::vector<double> b(63, 0.0);
    b[31] = 1.0;
    const auto out = compose_incoherent(rate(b), rate(b));
    EXPECT_EQ(out.at(25), 1.0);
    EXPECT_EQ(out.at(39), 1.0);
    EXPECT_EQ(out.total(), 2.0);
}

TEST(Compose, ZeroShiftIsElementwiseSum) {
    std::vector<double> a(63), b(63);
    for (int i = 0; i < 63; ++i) {
        a[static_cast<std::size_t>(i)] = i;
        b[static_cast<std::size_t>(i)] = 2 * i + 1;
    }
    const auto out = compose_incoherent(rate(a), rate(b), 0);
    for (std::size_t i = 0; i < 63; ++i) EXPECT_EQ(out.bins[i], a[i] + b[i]);
}

TEST(Compose, IncoherentCommutesUnderMirroredShift) {
    std::mt19937_64 rng(6);
    std::vector<double> a(63), b(63);
    for (auto& e : a) e = static_cast<double>(rng() % 100);
    for (auto& e : b) e = static_cast<double>(rng() % 100);
    EXPECT_EQ(compose_incoherent(rate(a), rate(b), 7).bins, compose_incoherent(rate(b), rate(a), -7).bins);
}

TEST(Compose, MismatchedNormalizationRejected) {
    std::vector<double> a(63, 1.0);
    try {
        compose_incoherent(rate(a, 1000.0), rate(a, 500.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::mismatched_normalization);
    }
    EXPECT_THROW(compose_coherent(rate(a), counts(a), Geometry{}), Error);
}

TEST(Compose, NegativeInputRejected) {
    std::vector<double> a(63, 1.0);
    a[3] = -1.0;
    try {
        compose_coherent(rate(a), rate(std::vector<double>(63, 1.0)), Geometry{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::negative_intensity);
    }
}

TEST(Compose, WithoutCrossTermEqualsScaledIncoherent) {
    std::mt19937_64 rng(9);
    std::vector<double> a(63), b(63);
    for (auto& e : a) e = static_cast<double>(rng() % 100);
    for (auto& e : b) e = static_cast<double>(rng() % 100);
    const auto coh = compose_coherent(rate(a), rate(b), Geometry{}, 7, 0.5, false);
    const auto inc = compose_incoherent(rate(a), rate(b), 7);
    for (std::size_t i = 0; i < 63; ++i) EXPECT_DOUBLE_EQ(coh.bins[i], 0.5 * inc.bins[i]);
}

TEST(Compose, ZeroInputLeavesOtherShifted) {
    std::vector<double> a(63);
    for (int i = 0; i < 63; ++i) a[static_cast<std::size_t>(i)] = 1.0 + i;
    const auto out = compose_coherent(rate(a), rate(std::vector<double>(63, 0.0)), Geometry{}, 7, 0.5);
    for (int c = 1; c <= 63; ++c) EXPECT_DOUBLE_EQ(out.at(c), c + 7 <= 63 ? 0.5 * a[static_cast<std::size_t>(c + 6)] : 0.0);
}

TEST(Compose, FlatInputsGiveCosinePattern) {
    const auto out = compose_coherent(rate(std::vector<double>(63, 2.0)), rate(std::vector<double>(63, 2.0)), Geometry{});
    for (int c = 8; c <= 56; ++c) {
        const double x = channel_x(c, 63);
        const double phase = 2.0 * std::numbers::pi * (std::hypot(40.0, x + 7.0) - std::hypot(40.0, x - 7.0)) / 4.0;
        EXPECT_NEAR(out.at(c), 0.5 * (4.0 + 4.0 * std::cos(phase)), 1e-12);
    }
}

TEST(Compose, IncoherentDipSumMatchesShiftedModels) {
    const auto p = one_slit_dip_params(Geometry{});
    const auto v = channel_intensities(p);
    const auto out = compose_incoherent(rate(v), rate(v), 7);
    for (int c = 1; c <= 63; ++c) {
        const double x = channel_x(c, 63);
        double expected = 0.0;
        if (c + 7 <= 63) expected += one_slit_dip_intensity(p, x + 7.0);
        if (c - 7 >= 1) expected += one_slit_dip_intensity(p, x - 7.0);
        EXPECT_NEAR(out.at(c), expected, 1e-15);
    }
}

TEST(Compose, CoherentDipPeaksTrackTwoSlitModel) {
    const auto dip = channel_intensities(one_slit_dip_params(Geometry{}));
    const auto out = compose_coherent(rate(dip), rate(dip), Geometry{}, 7, 0.5);
    // Frozen from an independent numpy evaluation.
    EXPECT_EQ(maxima(out.bins), (std::vector<int>{8, 20, 25, 32, 39, 44, 56}));
    const auto model = maxima(eq1_channels());
    for (int peak : {20, 32, 44}) {
        ASSERT_NE(std::find(model.begin(), model.end(), peak), model.end());
        bool near = false;
        for (int q : maxima(out.bins)) near = near || std::abs(q - peak) <= 1;
        EXPECT_TRUE(near) << peak;
    }
}

TEST(Approximation, ZeroOffsetUnitFactorNoShiftVanishesAtCenter) {
    auto p = one_slit_dip_params(Geometry{});
    const auto c = compose_from_approximation(p, 0.0, 0, 1.0);
    EXPECT_EQ(c.coherent.at(32), 0.0);
    EXPECT_EQ(c.one_slit.at(32), 0.0);
}

TEST(Approximation, LargeOffsetApproachesFlatInputPattern) {
    auto p = one_slit_dip_params(Geometry{});
    const auto c = compose_from_approximation(p, 1e6, 7, 0.5);
    const auto flat = compose_coherent(rate(std::vector<double>(63, 1e6)), rate(std::vector<double>(63, 1e6)), Geometry{});
    for (int ch = 8; ch <= 56; ++ch) EXPECT_NEAR(c.coherent.at(ch) / c.coherent.at(32), flat.at(ch) / flat.at(32), 1e-3);
}

TEST(Approximation, NegativeOffsetRejected) {
    auto p = one_slit_dip_params(Geometry{});
    try {
        compose_from_approximation(p, -1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::negative_intensity);
    }
    EXPECT_THROW(compose_from_approximation(two_slit_params(Geometry{}), 10.0), Error);
}

TEST(Approximation, OffsetTenHdEight) {
    auto p = one_slit_dip_params(Geometry{}, Screen::OneSlitCenter, 8.0);
    const auto c = compose_from_approximation(p, 10.0, 7, 0.5);
    EXPECT_NEAR(c.one_slit.total(), 1000.0 + 630.0, 1e-9);
    EXPECT_EQ(c.one_slit.at(32), 10.0);
    const auto peaks = maxima(c.coherent.bins);
    for (int peak : {20, 32, 44}) {
        bool near = false;
        for (int q : peaks) near = near || std::abs(q - peak) <= 1;
        EXPECT_TRUE(near) << peak;
    }
}

TEST(Csv, HistogramAndStats) {
    std::ostringstream a;
    write_histogram_csv(a, std::vector<double>{1.0, 2.5});
    EXPECT_EQ(a.str(), "channel,value\n1,1\n2,2.5\n");
    EnsembleStats st;
    st.mean = {1.0};
    st.sigma = {0.5};
    std::ostringstream b;
    write_stats_csv(b, st);
    EXPECT_EQ(b.str(), "channel,mean,sigma\n1,1,0.5\n");
}
