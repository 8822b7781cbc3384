#include "cascade/correlate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cascade/errors.hpp"
#include "cascade/fit.hpp"
#include "cascade/models.hpp"

namespace cascade {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

void check_correlate_args(const TagStream& stream, int ch_start, int ch_stop,
                          std::int64_t bin_width, std::int64_t max_delay) {
    if (bin_width <= 0) throw ValidationError("correlate: bin_width must be > 0");
    if (max_delay <= 0) throw ValidationError("correlate: max_delay must be > 0");
    if (max_delay % bin_width != 0)
        throw ValidationError("correlate: max_delay must be a multiple of bin_width");
    if (ch_start < 0 || ch_start >= stream.channel_count())
        throw ValidationError("correlate: ch_start out of range");
    if (ch_stop < 0 || ch_stop >= stream.channel_count())
        throw ValidationError("correlate: ch_stop out of range");
}

std::vector<std::int64_t> channel_times(const TagStream& stream, int channel) {
    std::vector<std::int64_t> out;
    for (const TimeTag& tag : stream.tags())
        if (tag.channel == channel) out.push_back(tag.t);
    return out;
}

std::map<std::string, std::string> correlate_metadata(int ch_start, int ch_stop,
                                                      std::int64_t bin_width,
                                                      std::int64_t max_delay) {
    return {{"op", "correlate"},
            {"ch_start", std::to_string(ch_start)},
            {"ch_stop", std::to_string(ch_stop)},
            {"bin_width_arg_ps", std::to_string(bin_width)},
            {"max_delay_ps", std::to_string(max_delay)}};
}

}  // namespace

Histogram correlate(const TagStream& stream, int ch_start, int ch_stop, std::int64_t bin_width_ps,
                    std::int64_t max_delay_ps) {
    check_correlate_args(stream, ch_start, ch_stop, bin_width_ps, max_delay_ps);
    const std::vector<std::int64_t> starts = channel_times(stream, ch_start);
    const std::vector<std::int64_t> stops =
        ch_stop == ch_start ? starts : channel_times(stream, ch_stop);
    const bool same = ch_start == ch_stop;

    std::vector<double> counts(static_cast<std::size_t>(2 * max_delay_ps / bin_width_ps), 0.0);
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const std::int64_t a = starts[i];
        while (lo < stops.size() && stops[lo] <= a - max_delay_ps) ++lo;
        if (hi < lo) hi = lo;
        while (hi < stops.size() && stops[hi] < a + max_delay_ps) ++hi;
        for (std::size_t j = lo; j < hi; ++j) {
            if (same && j == i) continue;
            const std::int64_t tau = stops[j] - a;
            counts[static_cast<std::size_t>((tau + max_delay_ps) / bin_width_ps)] += 1.0;
        }
    }
    return Histogram(bin_width_ps, -max_delay_ps, std::move(counts), std::nullopt,
                     correlate_metadata(ch_start, ch_stop, bin_width_ps, max_delay_ps));
}

Histogram correlate_bruteforce(const TagStream& stream, int ch_start, int ch_stop,
                               std::int64_t bin_width_ps, std::int64_t max_delay_ps) {
    check_correlate_args(stream, ch_start, ch_stop, bin_width_ps, max_delay_ps);
    std::vector<double> counts(static_cast<std::size_t>(2 * max_delay_ps / bin_width_ps), 0.0);
    const std::vector<TimeTag>& tags = stream.tags();
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i].channel != ch_start) continue;
        for (std::size_t j = 0; j < tags.size(); ++j) {
            if (j == i || tags[j].channel != ch_stop) continue;
            const std::int64_t tau = tags[j].t - tags[i].t;
            if (tau <= -max_delay_ps || tau >= max_delay_ps) continue;
            counts[static_cast<std::size_t>((tau + max_delay_ps) / bin_width_ps)] += 1.0;
        }
    }
    return Histogram(bin_width_ps, -max_delay_ps, std::move(counts), std::nullopt,
                     correlate_metadata(ch_start, ch_stop, bin_width_ps, max_delay_ps));
}

PeakSeries integrate_peaks(const Histogram& hist, std::int64_t period_ps) {
    if (period_ps <= 0) throw ValidationError("integrate_peaks: period must be > 0");
    if (period_ps % hist.bin_width() != 0)
        throw ValidationError("integrate_peaks: period must be a multiple of bin_width");
    const std::int64_t span = hist.tau_max() - hist.tau_min();
    if (span < 3 * period_ps)
        throw ValidationError("integrate_peaks: histogram span must cover >= 3 periods");

    // Full windows only: [n*P - P/2, n*P + P/2) inside the histogram span.
    // 2x-scaled integers keep the window edges exact for odd period/bin ratios.
    const std::int64_t lo2 = 2 * hist.tau_min();
    const std::int64_t hi2 = 2 * hist.tau_max();
    std::map<int, double> areas;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const std::int64_t c2 = 2 * hist.tau_min() + (2 * static_cast<std::int64_t>(i) + 1) * hist.bin_width();
        const std::int64_t n = floor_div(c2 + period_ps, 2 * period_ps);
        if (2 * n * period_ps - period_ps < lo2 || 2 * n * period_ps + period_ps > hi2) continue;
        areas[static_cast<int>(n)] += hist.counts()[i];
    }
    std::vector<PeakEntry> entries;
    entries.reserve(areas.size());
    for (const auto& [n, area] : areas) entries.push_back({n, area, std::sqrt(area)});
    return PeakSeries(std::move(entries), period_ps);
}

FitResult fit_blinking_envelope(const PeakSeries& peaks, bool exclude_center) {
    std::vector<DataPoint> data;
    int n_neg = 0, n_pos = 0;
    for (const PeakEntry& e : peaks.entries()) {
        if (exclude_center && e.n == 0) continue;
        data.push_back({static_cast<double>(e.n), e.area, std::max(e.err, 1.0)});
        if (e.n < 0) ++n_neg;
        if (e.n > 0) ++n_pos;
    }
    if (n_neg < 4 || n_pos < 4)
        throw FitError("fit_blinking_envelope: need >= 4 non-center peaks on each side");

    const double period = static_cast<double>(peaks.period());
    // far level from the outermost two peaks per side
    std::vector<const PeakEntry*> sorted;
    for (const PeakEntry& e : peaks.entries())
        if (!(exclude_center && e.n == 0)) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(),
              [](const PeakEntry* a, const PeakEntry* b) { return std::abs(a->n) > std::abs(b->n); });
    double far = 0.0;
    for (int i = 0; i < 4 && i < static_cast<int>(sorted.size()); ++i) far += sorted[i]->area;
    far /= std::min<std::size_t>(4, sorted.size());
    far = std::max(far, 1e-9);

    // the two innermost |n| levels seed m and tau_blink
    std::map<int, std::pair<double, int>> by_abs_n;
    for (const PeakEntry* e : sorted) {
        auto& [s, c] = by_abs_n[std::abs(e->n)];
        s += e->area;
        ++c;
    }
    auto it = by_abs_n.begin();
    const int k1 = it->first;
    const double r1 = it->second.first / it->second.second / far - 1.0;
    ++it;
    const int k2 = it != by_abs_n.end() ? it->first : k1 + 1;
    const double r2 =
        it != by_abs_n.end() ? it->second.first / it->second.second / far - 1.0 : 0.0;
    double tb0 = 1.35 * period;
    if (r1 > 0.0 && r2 > 0.0 && r1 > r2) tb0 = (k2 - k1) * period / std::log(r1 / r2);
    tb0 = std::clamp(tb0, 0.1 * period, 100.0 * period);
    double m0 = r1 > 0.0 ? r1 * std::exp(k1 * period / tb0) : 0.0;
    m0 = std::clamp(m0, -0.5, 1e3);

    const std::map<std::string, double> init{{"a_inf", far}, {"m", m0}, {"tau_blink", tb0}};
    const Bounds bounds{{"a_inf", {1e-12, std::numeric_limits<double>::infinity()}},
                        {"m", {-0.999, 1e4}},
                        {"tau_blink", {1e-3 * period, 1e4 * period}}};
    return nlls_fit(make_blinking_envelope_model(period), data, init, bounds);
}

Histogram correct_blinking(const Histogram& hist, double m, double tau_blink) {
    if (!(m > -1.0)) throw ValidationError("correct_blinking: m must be > -1");
    if (!(tau_blink > 0.0)) throw ValidationError("correct_blinking: tau_blink must be > 0");
    std::vector<double> counts(hist.size());
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const double env = 1.0 + m * std::exp(-std::fabs(hist.bin_center(i)) / tau_blink);
        counts[i] = hist.counts()[i] / env;
    }
    std::map<std::string, std::string> meta = hist.metadata;
    meta["blink_m"] = std::to_string(m);
    meta["blink_tau_ps"] = std::to_string(tau_blink);
    return Histogram(hist.bin_width(), hist.tau_min(), std::move(counts), hist.norm(),
                     std::move(meta));
}

double far_peak_level(const Histogram& hist, std::int64_t period_ps, int far_peak_min_index) {
    if (far_peak_min_index < 1)
        throw ValidationError("far_peak_level: far_peak_min_index must be >= 1");
    const PeakSeries peaks = integrate_peaks(hist, period_ps);
    int n_min = 0, n_max = 0;
    for (const PeakEntry& e : peaks.entries()) {
        n_min = std::min(n_min, e.n);
        n_max = std::max(n_max, e.n);
    }
    if (n_max < far_peak_min_index + 1 || n_min > -(far_peak_min_index + 1))
        throw ValidationError(
            "far_peak_level: histogram must cover far_peak_min_index + 2 periods per side");

    // drop the |n| = 1 peaks from the envelope fit whenever enough deeper
    // peaks remain; interference combs suppress them below the envelope
    int deep_neg = 0, deep_pos = 0;
    for (const PeakEntry& e : peaks.entries()) {
        if (e.n <= -2) ++deep_neg;
        if (e.n >= 2) ++deep_pos;
    }
    FitResult env;
    if (deep_neg >= 4 && deep_pos >= 4) {
        std::vector<PeakEntry> kept;
        for (const PeakEntry& e : peaks.entries())
            if (std::abs(e.n) > 1) kept.push_back(e);
        env = fit_blinking_envelope(PeakSeries(std::move(kept), period_ps),
                                    /*exclude_center=*/false);
    } else {
        env = fit_blinking_envelope(peaks, /*exclude_center=*/true);
    }
    const Histogram corrected =
        correct_blinking(hist, env.param("m"), env.param("tau_blink"));

    // mean per-bin level over the far full windows
    const std::int64_t lo2 = 2 * hist.tau_min();
    const std::int64_t hi2 = 2 * hist.tau_max();
    double sum = 0.0;
    std::size_t n_bins = 0;
    for (std::size_t i = 0; i < corrected.size(); ++i) {
        const std::int64_t c2 =
            2 * hist.tau_min() + (2 * static_cast<std::int64_t>(i) + 1) * hist.bin_width();
        const std::int64_t n = floor_div(c2 + period_ps, 2 * period_ps);
        if (std::abs(n) < far_peak_min_index) continue;
        if (2 * n * period_ps - period_ps < lo2 || 2 * n * period_ps + period_ps > hi2) continue;
        sum += corrected.counts()[i];
        ++n_bins;
    }
    if (n_bins == 0 || !(sum > 0.0))
        throw AnalysisError("far_peak_level: far peak windows are empty");
    return sum / static_cast<double>(n_bins);
}

Histogram normalize_histogram(const Histogram& hist, std::int64_t period_ps,
                              int far_peak_min_index) {
    const double c0 = far_peak_level(hist, period_ps, far_peak_min_index);
    std::vector<double> counts(hist.size());
    for (std::size_t i = 0; i < hist.size(); ++i) counts[i] = hist.counts()[i] / c0;
    std::map<std::string, std::string> meta = hist.metadata;
    meta["period_ps"] = std::to_string(period_ps);
    meta["far_peak_min_index"] = std::to_string(far_peak_min_index);
    return Histogram(hist.bin_width(), hist.tau_min(), std::move(counts), c0, std::move(meta));
}

}  // namespace cascade
