#include "cascade/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "cascade/correlate.hpp"
#include "cascade/errors.hpp"
#include "cascade/fit.hpp"
#include "cascade/simulate.hpp"

namespace cascade {

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::int64_t meta_int(const Histogram& hist, const char* key, const char* who) {
    const auto it = hist.metadata.find(key);
    if (it == hist.metadata.end())
        throw ValidationError(std::string(who) + ": input lacks " + key +
                              " metadata (not a normalize_histogram output)");
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ValidationError(std::string(who) + ": malformed " + key + " metadata");
    }
}

// Sum of counts over bins with |bin_center - center| < window/2, evaluated in
// doubled integer units so half-bin centers stay exact.
double window_integral(const Histogram& hist, std::int64_t center_ps, std::int64_t window_ps) {
    double s = 0.0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const std::int64_t c2 =
            2 * hist.tau_min() + (2 * static_cast<std::int64_t>(i) + 1) * hist.bin_width();
        if (std::llabs(c2 - 2 * center_ps) < window_ps) s += hist.counts()[i];
    }
    return s;
}

// Envelope fit excluding |n| <= 1 when enough deeper peaks remain (same
// selection as far_peak_level); interference combs suppress the first side
// peaks below the envelope.
FitResult side_envelope(const PeakSeries& peaks) {
    int deep_neg = 0, deep_pos = 0;
    for (const PeakEntry& e : peaks.entries()) {
        if (e.n <= -2) ++deep_neg;
        if (e.n >= 2) ++deep_pos;
    }
    if (deep_neg >= 4 && deep_pos >= 4) {
        std::vector<PeakEntry> kept;
        for (const PeakEntry& e : peaks.entries())
            if (std::abs(e.n) > 1) kept.push_back(e);
        return fit_blinking_envelope(PeakSeries(std::move(kept), peaks.period()),
                                     /*exclude_center=*/false);
    }
    return fit_blinking_envelope(peaks, /*exclude_center=*/true);
}

// Scatter of envelope-flattened window integrals over the non-interfering
// side peaks |n| >= 2.
double side_window_scatter(const Histogram& hist, std::int64_t period_ps,
                           std::int64_t window_ps) {
    const PeakSeries peaks = integrate_peaks(hist, period_ps);
    const FitResult env = side_envelope(peaks);
    const double m = env.param("m");
    const double tb = env.param("tau_blink");
    std::vector<double> vals;
    for (const PeakEntry& e : peaks.entries()) {
        if (std::abs(e.n) < 2) continue;
        const double s = window_integral(hist, e.n * period_ps, window_ps);
        vals.push_back(s / (1.0 + m * std::exp(-std::fabs(e.n * static_cast<double>(period_ps)) / tb)));
    }
    return sample_stddev(vals);
}

// Every peak of the cascade cross-correlation sheds an exponential right
// tail (the X lifetime) past its window edge into the next peak's window.
// The flows nearly cancel along the flat comb, but the center peak is 5-15x
// taller than the sides, so its spill visibly inflates peak +1, tilts the
// blinking-envelope fit, and the center rescale amplifies the tilt. Measure
// the decay once from the center peak, which is a pure one-sided exponential
// in the X-after-XX delay: q = e^(-s/tau_eff) from two equal sub-windows.
// Each peak's spill then follows from its last sub-window L as L*q/(1-q),
// and areas are corrected by moving every spill to its right neighbor. A
// peak whose left neighbor fell outside the histogram keeps net zero; the
// comb is flat out there.
std::vector<PeakEntry> transfer_tails(const Histogram& hist, const PeakSeries& raw,
                                      std::int64_t period_ps) {
    std::vector<PeakEntry> entries = raw.entries();
    const std::int64_t bw = hist.bin_width();
    const std::int64_t half = period_ps / 2;
    const std::int64_t s = half / 2 / bw * bw;  // bin-aligned split near period/4
    const PeakEntry* c0 = raw.find(0);
    if (s < 4 * bw || c0 == nullptr || !(c0->area > 0.0)) return entries;

    const auto range_sum = [&](std::int64_t lo0, std::int64_t hi0) {
        double sum = 0.0;
        for (std::size_t i = 0; i < hist.size(); ++i) {
            const std::int64_t lo = hist.tau_min() + static_cast<std::int64_t>(i) * bw;
            if (lo >= lo0 && lo < hi0) sum += hist.counts()[i];
        }
        return sum;
    };

    const double head = range_sum(0, s);
    const double tail = range_sum(s, 2 * s);
    if (!(head > 0.0) || !(tail > 0.0)) return entries;
    const double q = tail / head;
    if (!(q > 0.0 && q < 0.5)) return entries;  // not a decaying peak; leave areas alone

    std::vector<double> out(entries.size(), 0.0);
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const std::int64_t c = entries[k].n * period_ps;
        out[k] = std::max(0.0, range_sum(c + half - s, c + half) * q / (1.0 - q));
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
        double in = out[k];
        for (std::size_t j = 0; j < entries.size(); ++j) {
            if (entries[j].n == entries[k].n - 1) {
                in = out[j];
                break;
            }
        }
        entries[k].area = std::max(0.0, entries[k].area + out[k] - in);
    }
    return entries;
}

void check_normalized(const Histogram& hist, std::int64_t period_ps, int far_min,
                      const char* label) {
    if (!hist.norm().has_value())
        throw ValidationError(std::string("hom_visibility: ") + label +
                              " histogram is not a normalize_histogram output");
    const double level = far_peak_level(hist, period_ps, far_min);
    if (std::fabs(level - 1.0) > 0.01)
        throw ValidationError(std::string("hom_visibility: ") + label +
                              " histogram far-peak level is off 1 by more than 1%");
}

}  // namespace

FidelityEstimate prep_fidelity_from_xcorr(const Histogram& xcorr, std::int64_t period_ps,
                                          double c_pol) {
    if (!(std::isfinite(c_pol) && c_pol > 0.0))
        throw ValidationError("prep_fidelity_from_xcorr: c_pol must be positive");
    const PeakSeries raw = integrate_peaks(xcorr, period_ps);
    int n_neg = 0, n_pos = 0;
    for (const PeakEntry& e : raw.entries()) {
        if (e.n < 0) ++n_neg;
        if (e.n > 0) ++n_pos;
    }
    if (n_neg < 4 || n_pos < 4)
        throw ValidationError("prep_fidelity_from_xcorr: need >= 4 side peaks per side");

    const PeakSeries peaks(transfer_tails(xcorr, raw, period_ps), period_ps);

    const FitResult env = fit_blinking_envelope(peaks, /*exclude_center=*/true);
    const double m = env.param("m");
    const double tb = env.param("tau_blink");

    // Rescale the integrated areas by the envelope at the peak centers. Pair
    // statistics follow the pulse separation n*period, so the height law is
    // indexed by peak number; dividing bin-by-bin instead would under-correct
    // the center peak, whose counts sit ~t1_x away from tau = 0 where the
    // envelope has already decayed.
    double center = 0.0;
    bool have_center = false;
    std::vector<double> sides;
    for (const PeakEntry& e : peaks.entries()) {
        const double height =
            1.0 + m * std::exp(-std::fabs(e.n * static_cast<double>(period_ps)) / tb);
        const double corrected = e.area / height;
        if (e.n == 0) {
            center = corrected;
            have_center = true;
        } else {
            sides.push_back(corrected);
        }
    }
    if (!have_center || !(center > 0.0))
        throw AnalysisError("prep_fidelity_from_xcorr: zero center-peak area, fidelity undefined");

    return {c_pol * mean_of(sides) / center, c_pol * sample_stddev(sides) / center};
}

CpolCurve calibrate_cpol(std::span<const double> dop_values, const CpolSettings& settings,
                         RngKey key) {
    if (dop_values.size() < 5)
        throw ValidationError("calibrate_cpol: need >= 5 dop values");
    double lo = 1.0, hi = 0.0;
    for (double d : dop_values) {
        if (!(std::isfinite(d) && d >= 0.0 && d <= 1.0))
            throw ValidationError("calibrate_cpol: dop values must lie in [0, 1]");
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    if (lo > 0.01 || hi < 0.99)
        throw ValidationError("calibrate_cpol: dop values must span [0, 1]");

    CpolCurve curve;
    std::vector<DataPoint> pts;
    for (std::size_t i = 0; i < dop_values.size(); ++i) {
        const double dop = dop_values[i];
        const EmitterModel emitter(settings.t1_x, settings.t1_xx, settings.prep_fidelity, dop,
                                   settings.tau_on, settings.tau_off);
        DetectionChain unfiltered = settings.detection;
        unfiltered.polarization_filter = false;
        DetectionChain filtered = settings.detection;
        filtered.polarization_filter = true;
        unfiltered.validate();

        const TagStream raw = simulate_cascade_stream(emitter, unfiltered, settings.pulses,
                                                      key.child(2 * i));
        const TagStream pol = simulate_cascade_stream(emitter, filtered, settings.pulses,
                                                      key.child(2 * i + 1));
        const Histogram hist_raw =
            correlate(raw, 0, 1, settings.bin_width, settings.max_delay);
        const Histogram hist_pol =
            correlate(pol, 0, 1, settings.bin_width, settings.max_delay);
        const FidelityEstimate f_raw =
            prep_fidelity_from_xcorr(hist_raw, settings.pulses.period, 1.0);
        const FidelityEstimate f_pol =
            prep_fidelity_from_xcorr(hist_pol, settings.pulses.period, 1.0);
        if (!(f_raw.value > 0.0) || std::fabs(f_raw.err / f_raw.value) > 0.05 ||
            !(f_pol.value > 0.0) || std::fabs(f_pol.err / f_pol.value) > 0.05)
            throw AnalysisError("calibrate_cpol: simulation statistics too low");

        const double cpol = settings.prep_fidelity / f_pol.value;
        const double err = settings.prep_fidelity * f_pol.err / (f_pol.value * f_pol.value);
        curve.points.push_back({dop, cpol, err});
        pts.push_back({dop, cpol, std::max(err, 1e-6)});
    }

    const CurveModel quadratic{
        "cpol_quadratic",
        {"c0", "c1", "c2"},
        [](double x, std::span<const double> p) { return p[0] + x * (p[1] + x * p[2]); }};
    curve.fit = nlls_fit(quadratic, pts, {{"c0", 2.0}, {"c1", -1.6}, {"c2", 0.65}}, {});
    curve.coeffs = {curve.fit.param("c0"), curve.fit.param("c1"), curve.fit.param("c2")};
    return curve;
}

double cpol_first_order(double dop) {
    if (!(std::isfinite(dop) && dop >= 0.0 && dop <= 1.0))
        throw ValidationError("cpol_first_order: dop must lie in [0, 1]");
    return 2.0 - dop;
}

std::vector<PowerFidelity> prep_fidelity_vs_power(
    std::span<const std::pair<double, Histogram>> scans, std::int64_t period_ps, double c_pol) {
    std::vector<PowerFidelity> out;
    out.reserve(scans.size());
    for (const auto& [power, hist] : scans)
        out.push_back({power, prep_fidelity_from_xcorr(hist, period_ps, c_pol)});
    return out;
}

Visibility hom_visibility(const Histogram& co, const Histogram& cross, std::int64_t window_ps) {
    const std::int64_t period = meta_int(co, "period_ps", "hom_visibility");
    const std::int64_t period_x = meta_int(cross, "period_ps", "hom_visibility");
    if (period != period_x)
        throw ValidationError("hom_visibility: histograms were normalized with different periods");
    const int far_co = static_cast<int>(meta_int(co, "far_peak_min_index", "hom_visibility"));
    const int far_cross = static_cast<int>(meta_int(cross, "far_peak_min_index", "hom_visibility"));
    if (window_ps <= 0 || window_ps > period)
        throw ValidationError("hom_visibility: window must lie in (0, period]");
    check_normalized(co, period, far_co, "co-polarized");
    check_normalized(cross, period, far_cross, "cross-polarized");

    const double a_co = window_integral(co, 0, window_ps);
    const double a_cross = window_integral(cross, 0, window_ps);
    if (!(a_cross > 0.0))
        throw AnalysisError("hom_visibility: empty cross-polarized center window");

    const double sigma_co = side_window_scatter(co, period, window_ps);
    const double sigma_cross = side_window_scatter(cross, period, window_ps);
    const double err =
        std::hypot(sigma_co, a_co * sigma_cross / a_cross) / a_cross;
    return {1.0 - a_co / a_cross, err};
}

std::vector<WindowScanPoint> visibility_vs_window(const Histogram& co, const Histogram& cross,
                                                  std::span<const std::int64_t> windows_ps) {
    const std::int64_t period = meta_int(co, "period_ps", "visibility_vs_window");
    const double total_co = window_integral(co, 0, period);
    const double total_cross = window_integral(cross, 0, period);
    std::vector<WindowScanPoint> out;
    out.reserve(windows_ps.size());
    for (std::int64_t w : windows_ps) {
        WindowScanPoint point;
        point.window = w;
        point.visibility = hom_visibility(co, cross, w);
        point.captured_co = total_co > 0.0 ? window_integral(co, 0, w) / total_co : 0.0;
        point.captured_cross =
            total_cross > 0.0 ? window_integral(cross, 0, w) / total_cross : 0.0;
        out.push_back(point);
    }
    return out;
}

BlinkingDerived blinking_derived(double m, double tau_blink) {
    if (!(std::isfinite(m) && m > 0.0))
        throw ModelDomainError("blinking_derived: m must be > 0 (no blinking to invert)");
    if (!(std::isfinite(tau_blink) && tau_blink > 0.0))
        throw ValidationError("blinking_derived: tau_blink must be > 0");
    BlinkingDerived out;
    out.tau_off = (1.0 + m) * tau_blink;
    out.tau_on = out.tau_off / m;
    out.quantum_efficiency = 1.0 / (1.0 + m);
    return out;
}

double v_max_tpe(double t1_x, double t1_xx) {
    if (!(std::isfinite(t1_x) && t1_x > 0.0 && std::isfinite(t1_xx) && t1_xx > 0.0))
        throw ValidationError("v_max_tpe: lifetimes must be > 0");
    return 1.0 / (1.0 + t1_xx / t1_x);
}

}  // namespace cascade
