#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade/errors.hpp"

namespace cascade {

// All times are integer picoseconds unless a field says otherwise.
// Channel 0 is the XX arm, channel 1 the X arm, by convention throughout.

// One detection event.
struct TimeTag {
    std::uint16_t channel = 0;
    std::int64_t t = 0;
};

// Canonical ordering: by time, ties broken by channel.
inline bool tag_order(const TimeTag& a, const TimeTag& b) {
    return a.t != b.t ? a.t < b.t : a.channel < b.channel;
}

inline bool operator==(const TimeTag& a, const TimeTag& b) {
    return a.channel == b.channel && a.t == b.t;
}

// Sorted, validated sequence of time tags over [0, duration].
class TagStream {
  public:
    TagStream(std::vector<TimeTag> tags, std::int64_t duration_ps, int channel_count);

    const std::vector<TimeTag>& tags() const { return tags_; }
    std::int64_t duration() const { return duration_; }
    int channel_count() const { return channel_count_; }
    std::size_t size() const { return tags_.size(); }
    std::size_t count_in_channel(int channel) const;

  private:
    std::vector<TimeTag> tags_;
    std::int64_t duration_ = 0;
    int channel_count_ = 0;
};

// Delay histogram on a uniform grid. Bin i covers
// [tau_min + i*bin_width, tau_min + (i+1)*bin_width); tau = 0 always sits on
// a bin boundary. Counts are real so corrected/normalized histograms reuse the
// type; norm records the Poisson-level divisor once normalize has run.
class Histogram {
  public:
    Histogram(std::int64_t bin_width_ps, std::int64_t tau_min_ps, std::vector<double> counts,
              std::optional<double> norm = std::nullopt,
              std::map<std::string, std::string> metadata = {});

    std::int64_t bin_width() const { return bin_width_; }
    std::int64_t tau_min() const { return tau_min_; }
    std::int64_t tau_max() const {
        return tau_min_ + bin_width_ * static_cast<std::int64_t>(counts_.size());
    }
    const std::vector<double>& counts() const { return counts_; }
    std::size_t size() const { return counts_.size(); }
    double bin_center(std::size_t i) const {
        return static_cast<double>(tau_min_) + (static_cast<double>(i) + 0.5) * static_cast<double>(bin_width_);
    }
    std::optional<double> norm() const { return norm_; }
    double total() const;

    // Free-form provenance; stamped by operations and the CLI, round-tripped by io.
    std::map<std::string, std::string> metadata;

  private:
    std::int64_t bin_width_ = 1;
    std::int64_t tau_min_ = 0;
    std::vector<double> counts_;
    std::optional<double> norm_;
};

// Periodic excitation: pulse k fires at k*period for k in [0, n_pulses).
struct PulseTrain {
    std::int64_t period = 12500;  // 80 MHz repetition
    std::int64_t n_pulses = 0;

    PulseTrain(std::int64_t period_ps, std::int64_t n_pulses_);
    std::int64_t duration() const { return period * n_pulses; }
};

// Coherent-drive parameterization. xi is the dimensionless dephasing-to-Rabi
// ratio entering the two-level occupancy model; power_to_area converts drive
// power to pulse area (theta = power_to_area * power); p_pi is the power of the
// first occupancy maximum, kept consistent with power_to_area.
struct RabiParams {
    double xi = 0.0;
    double power_to_area = 0.0;
    double p_pi = 0.0;

    RabiParams(double xi_, double power_to_area_);
    static RabiParams from_pi_power(double xi_, double p_pi_);
};

// Source model: radiative lifetimes, preparation (either a fixed per-pulse
// inversion probability or a Rabi parameterization plus a pulse area), degree
// of polarization, and telegraph-blinking dwell times.
struct EmitterModel {
    double t1_x = 1210.0;
    double t1_xx = 340.0;
    std::optional<double> prep_fidelity;
    std::optional<RabiParams> rabi;
    std::optional<double> pulse_area;  // theta for the current drive, required with rabi
    double dop = 0.0;
    double tau_on = 20300.0;
    double tau_off = 100700.0;

    EmitterModel(double t1_x_ps, double t1_xx_ps, double prep_fidelity_, double dop_,
                 double tau_on_ps, double tau_off_ps);
    EmitterModel(double t1_x_ps, double t1_xx_ps, const RabiParams& rabi_, double dop_,
                 double tau_on_ps, double tau_off_ps);
    EmitterModel with_pulse_area(double theta) const;
};

// Detector/collection chain, one entry per channel where it matters.
struct DetectionChain {
    std::array<double, 2> efficiency{1.0, 1.0};
    double jitter_fwhm = 0.0;          // Gaussian FWHM, ps; 0 disables
    std::array<double, 2> dead_time{50000.0, 50000.0};
    std::array<double, 2> dark_rate{0.0, 0.0};  // counts/s
    bool polarization_filter = false;  // keep H cascades only

    DetectionChain() = default;
    DetectionChain(std::array<double, 2> efficiency_, double jitter_fwhm_ps,
                   std::array<double, 2> dead_time_ps, std::array<double, 2> dark_rate_hz,
                   bool polarization_filter_);
    void validate() const;
};

// Integrated coincidence area of peak n (window centered at n*period); err is
// the Poisson standard error of the raw integral.
struct PeakEntry {
    int n = 0;
    double area = 0.0;
    double err = 0.0;
};

class PeakSeries {
  public:
    PeakSeries(std::vector<PeakEntry> entries, std::int64_t period_ps);

    const std::vector<PeakEntry>& entries() const { return entries_; }
    std::int64_t period() const { return period_; }
    const PeakEntry* find(int n) const;

  private:
    std::vector<PeakEntry> entries_;  // sorted by n, n unique
    std::int64_t period_ = 0;
};

// Outcome of a nonlinear least-squares fit. params may carry derived
// quantities alongside the free parameters; stderrs holds one entry per
// resolvable parameter. residual_norm is sqrt(chi^2) at the best point.
struct FitResult {
    std::map<std::string, double> params;
    std::map<std::string, double> stderrs;
    double residual_norm = 0.0;
    bool converged = false;
    int n_iter = 0;

    double param(const std::string& name) const;
    double err(const std::string& name) const;
};

}  // namespace cascade
