#pragma once

#include <cstdint>

#include "cascade/types.hpp"

namespace cascade {

// Start-stop coincidence histogram of tau = t_stop - t_start over all pairs
// with |tau| < max_delay, on bins of bin_width covering [-max_delay,
// +max_delay). Sliding-window implementation, O(n + p) in tags and pairs.
// ch_start == ch_stop excludes self-pairs (an autocorrelation).
Histogram correlate(const TagStream& stream, int ch_start, int ch_stop, std::int64_t bin_width_ps,
                    std::int64_t max_delay_ps);

// Same contract by exhaustive pair enumeration; the reference the fast path
// is tested against.
Histogram correlate_bruteforce(const TagStream& stream, int ch_start, int ch_stop,
                               std::int64_t bin_width_ps, std::int64_t max_delay_ps);

// Sum counts into per-peak windows [n*period - period/2, n*period + period/2),
// keeping only windows fully inside the histogram span. err is sqrt(area).
PeakSeries integrate_peaks(const Histogram& hist, std::int64_t period_ps);

// Fit area(n) = a_inf * (1 + m * exp(-|n*period| / tau_blink)) to the peak
// series; exclude_center drops n = 0 (whose height is set by the antibunching
// physics, not the envelope). Needs >= 4 non-center entries per side.
FitResult fit_blinking_envelope(const PeakSeries& peaks, bool exclude_center);

// Divide out the bunching envelope bin by bin: counts / (1 + m*exp(-|tau|/tau_blink)).
Histogram correct_blinking(const Histogram& hist, double m, double tau_blink);

// Mean per-bin count over the far full windows |n| >= far_peak_min_index of a
// blinking-corrected copy of the histogram. The envelope fit drops the |n| = 1
// peaks when >= 4 peaks per side remain beyond them (interference combs carry
// reduced-weight first side peaks that would skew the fit). This is the
// Poisson-level estimator used by normalize_histogram, re-usable to verify
// that an already-normalized histogram sits at level 1.
double far_peak_level(const Histogram& hist, std::int64_t period_ps, int far_peak_min_index);

// Scale a raw histogram to units of the uncorrelated-pair Poisson level. The
// level c0 is far_peak_level(...); the output is raw counts / c0 with norm = c0
// and the period and far index stamped into metadata.
Histogram normalize_histogram(const Histogram& hist, std::int64_t period_ps,
                              int far_peak_min_index);

}  // namespace cascade
