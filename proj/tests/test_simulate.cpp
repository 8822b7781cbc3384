#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cascade/errors.hpp"
#include "cascade/models.hpp"
#include "cascade/rng.hpp"
#include "cascade/simulate.hpp"
#include "cascade/types.hpp"

using namespace cascade;

namespace {

// emitter that is effectively always in the bright state
EmitterModel steady_emitter(double prep) {
    return EmitterModel(1210.0, 340.0, prep, 0.0, 1e15, 1.0);
}

DetectionChain clean_detection(double eff) {
    return DetectionChain({eff, eff}, 0.0, {0.0, 0.0}, {0.0, 0.0}, false);
}

std::vector<std::int64_t> channel_times(const TagStream& s, int ch) {
    std::vector<std::int64_t> out;
    for (const TimeTag& t : s.tags())
        if (t.channel == ch) out.push_back(t.t);
    return out;
}

// one-sample Kolmogorov-Smirnov statistic against an exponential CDF
double ks_exponential(std::vector<double> sorted, double mean) {
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = 1.0 - std::exp(-sorted[i] / mean);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    return d;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("telegraph intervals tile the duration and alternate") {
    const auto iv = sample_telegraph(20300.0, 100700.0, 10000000, RngKey(5));
    REQUIRE(!iv.empty());
    CHECK(iv.front().start == 0);
    CHECK(iv.back().end == 10000000);
    for (std::size_t i = 1; i < iv.size(); ++i) {
        CHECK(iv[i].start == iv[i - 1].end);
        CHECK(iv[i].on != iv[i - 1].on);
        CHECK(iv[i].end > iv[i].start);
    }
}

TEST_CASE("telegraph validates inputs") {
    CHECK_THROWS_AS(sample_telegraph(0.0, 1.0, 100, RngKey(1)), ValidationError);
    CHECK_THROWS_AS(sample_telegraph(1.0, -2.0, 100, RngKey(1)), ValidationError);
    CHECK_THROWS_AS(sample_telegraph(1.0, 1.0, -1, RngKey(1)), ValidationError);
    CHECK(sample_telegraph(1.0, 1.0, 0, RngKey(1)).empty());
}

TEST_CASE("telegraph honors a forced initial state") {
    const auto on = sample_telegraph(1e15, 1.0, 1000000, RngKey(8), true);
    REQUIRE(on.size() == 1);
    CHECK(on[0].on == true);
    CHECK(on[0].start == 0);
    CHECK(on[0].end == 1000000);
    const auto off = sample_telegraph(1e15, 1.0, 1000000, RngKey(8), false);
    REQUIRE(off.size() >= 2);
    CHECK(off[0].on == false);
    CHECK(off[1].on == true);
}

TEST_CASE("telegraph statistics match the configured dwell times") {
    const double tau_on = 20300.0, tau_off = 100700.0;
    const std::int64_t duration = 10000000000;  // 10 ms
    const auto iv = sample_telegraph(tau_on, tau_off, duration, RngKey(77));
    double on_time = 0.0, on_sum = 0.0, off_sum = 0.0;
    std::size_t on_n = 0, off_n = 0;
    for (std::size_t i = 0; i < iv.size(); ++i) {
        const double len = static_cast<double>(iv[i].end - iv[i].start);
        if (iv[i].on) on_time += len;
        if (i == 0 || i + 1 == iv.size()) continue;  // truncated dwells
        if (iv[i].on) {
            on_sum += len;
            ++on_n;
        } else {
            off_sum += len;
            ++off_n;
        }
    }
    const double p_on = tau_on / (tau_on + tau_off);  // 0.16777
    CHECK(on_time / static_cast<double>(duration) == doctest::Approx(p_on).epsilon(0.03));
    REQUIRE(on_n > 10000);
    CHECK(on_sum / static_cast<double>(on_n) == doctest::Approx(tau_on).epsilon(0.02));
    CHECK(off_sum / static_cast<double>(off_n) == doctest::Approx(tau_off).epsilon(0.02));
}

TEST_CASE("inversion probability selects the configured mode") {
    CHECK(inversion_probability(steady_emitter(0.81)) == doctest::Approx(0.81));
    const EmitterModel rabi(1210, 340, RabiParams(0.0, 1.0), 0.0, 1e15, 1.0);
    CHECK_THROWS_AS(inversion_probability(rabi), ValidationError);
    const EmitterModel driven = rabi.with_pulse_area(3.14159265358979323846);
    CHECK(inversion_probability(driven) == doctest::Approx(1.0));
}

TEST_CASE("ideal source emits one tag per channel per pulse") {
    const PulseTrain pulses(12500, 20000);
    const TagStream s =
        simulate_cascade_stream(steady_emitter(1.0), clean_detection(1.0), pulses, RngKey(17));
    // only losses are cascade photons landing past the stream end
    CHECK(s.count_in_channel(0) == 20000);
    CHECK(s.count_in_channel(1) >= 19999);
    CHECK(s.duration() == pulses.duration());
}

TEST_CASE("cascade delay between the two photons is exponential") {
    const PulseTrain pulses(12500, 20000);
    const TagStream s =
        simulate_cascade_stream(steady_emitter(1.0), clean_detection(1.0), pulses, RngKey(23));
    const auto xx = channel_times(s, 0);
    const auto x = channel_times(s, 1);
    const std::size_t n = std::min(xx.size(), x.size());
    REQUIRE(n >= 19999);
    std::vector<double> delays;
    delays.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        delays.push_back(static_cast<double>(x[i] - xx[i]));
    const double d = ks_exponential(std::move(delays), 1210.0);
    // alpha = 0.01 critical value
    CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("singles rate tracks preparation fidelity and efficiency") {
    const PulseTrain pulses(12500, 200000);
    {
        const TagStream s = simulate_cascade_stream(steady_emitter(0.81), clean_detection(0.6),
                                                    pulses, RngKey(29));
        const double rate = static_cast<double>(s.count_in_channel(0)) / 200000.0;
        // binomial se ~ 1.5e-3 relative; allow 4 sigma
        CHECK(rate == doctest::Approx(0.81 * 0.6).epsilon(0.006));
    }
    {
        const TagStream s = simulate_cascade_stream(steady_emitter(0.1), clean_detection(1.0),
                                                    pulses, RngKey(31));
        const double rate = static_cast<double>(s.count_in_channel(0)) / 200000.0;
        CHECK(rate == doctest::Approx(0.1).epsilon(0.02));
    }
}

TEST_CASE("blinking suppresses the rate by the duty cycle") {
    const EmitterModel e(1210.0, 340.0, 0.81, 0.0, 20300.0, 100700.0);
    const PulseTrain pulses(12500, 1000000);
    const TagStream s = simulate_cascade_stream(e, clean_detection(0.6), pulses, RngKey(37));
    const double rate = static_cast<double>(s.count_in_channel(0)) / 1000000.0;
    const double expected = 0.81 * 0.6 * 20300.0 / 121000.0;  // 0.08154
    // telegraph dominates the error budget (~0.4% relative at this length)
    CHECK(rate == doctest::Approx(expected).epsilon(0.015));
}

TEST_CASE("polarization filter passes the bright axis fraction") {
    const PulseTrain pulses(12500, 200000);
    EmitterModel e(1210.0, 340.0, 1.0, 0.33, 1e15, 1.0);
    DetectionChain d = clean_detection(1.0);
    d.polarization_filter = true;
    const TagStream s = simulate_cascade_stream(e, d, pulses, RngKey(41));
    const double rate = static_cast<double>(s.count_in_channel(0)) / 200000.0;
    CHECK(rate == doctest::Approx(0.5 * (1.0 + 0.33)).epsilon(0.006));
}

TEST_CASE("identical keys give bit-identical streams") {
    const EmitterModel e(1210.0, 340.0, 0.81, 0.33, 20300.0, 100700.0);
    const DetectionChain d({0.6, 0.6}, 50.0, {1000.0, 1000.0}, {100.0, 100.0}, false);
    const PulseTrain pulses(12500, 50000);
    const TagStream a = simulate_cascade_stream(e, d, pulses, RngKey(43));
    const TagStream b = simulate_cascade_stream(e, d, pulses, RngKey(43));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.tags()[i].t == b.tags()[i].t);
        CHECK(a.tags()[i].channel == b.tags()[i].channel);
    }
    const TagStream c = simulate_cascade_stream(e, d, pulses, RngKey(44));
    CHECK(c.size() != a.size());  // different seed, different realization
}

TEST_CASE("prefix of a longer run matches the shorter run exactly") {
    const EmitterModel e(1210.0, 340.0, 0.81, 0.0, 20300.0, 100700.0);
    const DetectionChain d({0.6, 0.6}, 50.0, {0.0, 0.0}, {200.0, 200.0}, false);
    const TagStream full =
        simulate_cascade_stream(e, d, PulseTrain(12500, 40000), RngKey(47));
    const TagStream half =
        simulate_cascade_stream(e, d, PulseTrain(12500, 20000), RngKey(47));
    const std::int64_t cut = half.duration() - 5000;
    std::vector<TimeTag> fa, fb;
    for (const TimeTag& t : full.tags())
        if (t.t < cut) fa.push_back(t);
    for (const TimeTag& t : half.tags())
        if (t.t < cut) fb.push_back(t);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].t == fb[i].t);
        CHECK(fa[i].channel == fb[i].channel);
    }
}

TEST_CASE("dead time enforces a minimum same-channel gap") {
    DetectionChain d = clean_detection(1.0);
    d.dead_time = {30000.0, 30000.0};
    const PulseTrain pulses(12500, 3000);
    const TagStream s =
        simulate_cascade_stream(steady_emitter(1.0), d, pulses, RngKey(53));
    for (int ch = 0; ch < 2; ++ch) {
        const auto t = channel_times(s, ch);
        REQUIRE(t.size() > 100);
        for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] >= 30000);
    }
    // 12.5 ns pulse spacing and 30 ns dead time keep every third pulse
    CHECK(s.count_in_channel(0) == 1000);
}

TEST_CASE("dark counts populate otherwise silent detectors") {
    DetectionChain d = clean_detection(0.0);
    d.dark_rate = {1e6, 1e6};  // 1 MHz -> mean gap 1 us
    const PulseTrain pulses(12500, 100000);  // 1.25 ms
    const TagStream s =
        simulate_cascade_stream(steady_emitter(1.0), d, pulses, RngKey(59));
    const double expect = 1.25e-3 * 1e6;  // 1250 per channel
    for (int ch = 0; ch < 2; ++ch) {
        const double n = static_cast<double>(s.count_in_channel(ch));
        CHECK(n == doctest::Approx(expect).epsilon(0.1));
        const auto t = channel_times(s, ch);
        double mean = 0.0;
        for (auto v : t) mean += static_cast<double>(v);
        mean /= static_cast<double>(t.size());
        CHECK(mean == doctest::Approx(static_cast<double>(s.duration()) / 2.0).epsilon(0.05));
    }
}

TEST_CASE("jitter and darks still produce a valid sorted stream") {
    const EmitterModel e(1210.0, 340.0, 0.81, 0.33, 20300.0, 100700.0);
    const DetectionChain d({0.6, 0.6}, 50.0, {50000.0, 50000.0}, {500.0, 500.0}, true);
    // TagStream validates ordering on construction
    const TagStream s =
        simulate_cascade_stream(e, d, PulseTrain(12500, 100000), RngKey(61));
    CHECK(s.size() > 0);
    CHECK(s.channel_count() == 2);
}

TEST_CASE("zero pulses give an empty stream") {
    const TagStream s = simulate_cascade_stream(steady_emitter(0.5), clean_detection(1.0),
                                                PulseTrain(12500, 0), RngKey(1));
    CHECK(s.size() == 0);
    CHECK(s.duration() == 0);
}

TEST_CASE("synthetic histograms are poisson draws of the model") {
    const CurveModel model = make_g2_model(12500.0);
    const std::map<std::string, double> p{
        {"g2_0", 0.015}, {"tau1", 1440.0}, {"m", 4.96}, {"tau_blink", 16900.0}, {"c0", 1.0}};
    const double exposure = 1e6;
    const Histogram h = synth_histogram(model, p, exposure, 50, -56250, 2250, RngKey(67));
    CHECK(h.size() == 2250);
    CHECK(h.bin_width() == 50);
    // pointwise Poisson consistency via reduced chi-square
    std::vector<double> pv{0.015, 1440.0, 4.96, 16900.0, 1.0};
    double chi2 = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double f = model.eval(h.bin_center(i), pv) * exposure;
        if (f < 25.0) continue;
        chi2 += (h.counts()[i] - f) * (h.counts()[i] - f) / f;
        ++used;
    }
    REQUIRE(used > 1000);
    CHECK(chi2 / static_cast<double>(used) == doctest::Approx(1.0).epsilon(0.12));
    // determinism
    const Histogram h2 = synth_histogram(model, p, exposure, 50, -56250, 2250, RngKey(67));
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.counts()[i] == h2.counts()[i]);
}

TEST_CASE("synthetic histogram validation") {
    const CurveModel model = make_g2_model(12500.0);
    const std::map<std::string, double> p{
        {"g2_0", 0.0}, {"tau1", 1440.0}, {"m", 0.0}, {"tau_blink", 16900.0}, {"c0", 1.0}};
    CHECK_THROWS_AS(synth_histogram(model, p, 0.0, 50, 0, 10, RngKey(1)), ValidationError);
    CHECK_THROWS_AS(synth_histogram(model, p, 1.0, 0, 0, 10, RngKey(1)), ValidationError);
    CHECK_THROWS_AS(synth_histogram(model, p, 1.0, 50, 0, 0, RngKey(1)), ValidationError);
    std::map<std::string, double> missing = p;
    missing.erase("m");
    CHECK_THROWS_AS(synth_histogram(model, missing, 1.0, 50, 0, 10, RngKey(1)), ValidationError);
    // a model that goes negative must be rejected
    CurveModel neg{"neg", {"a"}, [](double, std::span<const double> q) { return -q[0]; }};
    CHECK_THROWS_AS(synth_histogram(neg, {{"a", 1.0}}, 1.0, 50, 0, 10, RngKey(1)),
                    ModelDomainError);
    // tiny exposure leaves the histogram essentially empty
    const Histogram sparse = synth_histogram(model, p, 1e-4, 50, -56250, 2250, RngKey(71));
    CHECK(sparse.total() <= 10.0);
}

TEST_CASE("power scan sweeps the drive through rabi rotations") {
    const EmitterModel e(1210.0, 340.0, RabiParams(0.0, 1.0), 0.0, 1e15, 1.0);
    const PulseTrain pulses(12500, 4000);
    const DetectionChain d = clean_detection(1.0);

    // zero power prepares nothing
    const std::vector<double> zero{0.0};
    auto pts = simulate_power_scan(e, zero, d, pulses, RngKey(73));
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].xx_counts == 0);
    CHECK(pts[0].x_counts == 0);

    // a pi pulse at xi = 0 inverts every on pulse
    const std::vector<double> pi_pulse{3.14159265358979323846};
    pts = simulate_power_scan(e, pi_pulse, d, pulses, RngKey(73));
    CHECK(pts[0].xx_counts == 4000);

    CHECK_THROWS_AS(simulate_power_scan(e, std::vector<double>{-1.0}, d, pulses, RngKey(1)),
                    ValidationError);
    const EmitterModel fixed = steady_emitter(0.5);
    CHECK_THROWS_AS(simulate_power_scan(fixed, zero, d, pulses, RngKey(1)), ValidationError);
}

TEST_CASE("successive rabi maxima sit at odd multiples of the pi power") {
    const EmitterModel e(1210.0, 340.0, RabiParams(0.05, 1.0), 0.0, 1e15, 1.0);
    const PulseTrain pulses(12500, 20000);
    std::vector<double> powers;
    for (int i = 0; i <= 120; ++i) powers.push_back(0.1 * static_cast<double>(i));
    const auto pts = simulate_power_scan(e, powers, clean_detection(1.0), pulses, RngKey(79));
    REQUIRE(pts.size() == powers.size());
    // grid argmax plus parabolic refinement through the three nearest points
    const auto refine = [&](std::size_t lo, std::size_t hi) {
        std::size_t im = lo;
        for (std::size_t i = lo; i < hi; ++i)
            if (pts[i].xx_counts > pts[im].xx_counts) im = i;
        const double ym = static_cast<double>(pts[im - 1].xx_counts);
        const double y0 = static_cast<double>(pts[im].xx_counts);
        const double yp = static_cast<double>(pts[im + 1].xx_counts);
        const double denom = ym - 2.0 * y0 + yp;
        const double shift = denom < 0.0 ? 0.05 * (ym - yp) / denom : 0.0;
        return pts[im].power + shift;
    };
    const double p1 = refine(20, 45);
    const double p2 = refine(80, 110);
    CHECK(p2 / p1 == doctest::Approx(3.0).epsilon(0.04));
}

}
