#include "cascade/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace cascade {

namespace {

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }
bool finite_pos(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

TagStream::TagStream(std::vector<TimeTag> tags, std::int64_t duration_ps, int channel_count)
    : tags_(std::move(tags)), duration_(duration_ps), channel_count_(channel_count) {
    if (duration_ < 0) throw ValidationError("TagStream: duration must be >= 0");
    if (channel_count_ < 0) throw ValidationError("TagStream: channel_count must be >= 0");
    for (std::size_t i = 0; i < tags_.size(); ++i) {
        const TimeTag& tag = tags_[i];
        if (tag.t < 0 || tag.t > duration_)
            throw ValidationError("TagStream: tag " + std::to_string(i) +
                                  " time outside [0, duration]");
        if (tag.channel >= channel_count_)
            throw ValidationError("TagStream: tag " + std::to_string(i) +
                                  " channel out of range");
        if (i > 0 && tag_order(tag, tags_[i - 1]))
            throw ValidationError("TagStream: tags not sorted at index " + std::to_string(i));
    }
}

std::size_t TagStream::count_in_channel(int channel) const {
    return static_cast<std::size_t>(std::count_if(
        tags_.begin(), tags_.end(), [channel](const TimeTag& t) { return t.channel == channel; }));
}

Histogram::Histogram(std::int64_t bin_width_ps, std::int64_t tau_min_ps,
                     std::vector<double> counts, std::optional<double> norm,
                     std::map<std::string, std::string> metadata)
    : metadata(std::move(metadata)),
      bin_width_(bin_width_ps),
      tau_min_(tau_min_ps),
      counts_(std::move(counts)),
      norm_(norm) {
    if (bin_width_ <= 0) throw ValidationError("Histogram: bin_width must be > 0");
    if (tau_min_ % bin_width_ != 0)
        throw ValidationError("Histogram: tau_min must put tau = 0 on a bin boundary");
    for (std::size_t i = 0; i < counts_.size(); ++i)
        if (!finite_nonneg(counts_[i]))
            throw ValidationError("Histogram: counts[" + std::to_string(i) +
                                  "] must be finite and >= 0");
    if (norm_ && !finite_pos(*norm_)) throw ValidationError("Histogram: norm must be > 0");
}

double Histogram::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0.0); }

PulseTrain::PulseTrain(std::int64_t period_ps, std::int64_t n_pulses_)
    : period(period_ps), n_pulses(n_pulses_) {
    if (period <= 0) throw ValidationError("PulseTrain: period must be > 0");
    if (n_pulses < 0) throw ValidationError("PulseTrain: n_pulses must be >= 0");
}

RabiParams::RabiParams(double xi_, double power_to_area_)
    : xi(xi_), power_to_area(power_to_area_) {
    if (!(std::isfinite(xi) && xi >= 0.0 && xi < 2.0))
        throw ValidationError("RabiParams: xi must lie in [0, 2)");
    if (!finite_pos(power_to_area))
        throw ValidationError("RabiParams: power_to_area must be > 0");
    p_pi = 3.14159265358979323846 / power_to_area;
}

RabiParams RabiParams::from_pi_power(double xi_, double p_pi_) {
    if (!finite_pos(p_pi_)) throw ValidationError("RabiParams: p_pi must be > 0");
    return RabiParams(xi_, 3.14159265358979323846 / p_pi_);
}

namespace {

void check_emitter_common(double t1_x, double t1_xx, double dop, double tau_on, double tau_off) {
    if (!finite_pos(t1_x)) throw ValidationError("EmitterModel: t1_x must be > 0");
    if (!finite_pos(t1_xx)) throw ValidationError("EmitterModel: t1_xx must be > 0");
    if (!(std::isfinite(dop) && dop >= 0.0 && dop <= 1.0))
        throw ValidationError("EmitterModel: dop must lie in [0, 1]");
    if (!finite_pos(tau_on)) throw ValidationError("EmitterModel: tau_on must be > 0");
    if (!finite_pos(tau_off)) throw ValidationError("EmitterModel: tau_off must be > 0");
}

}  // namespace

EmitterModel::EmitterModel(double t1_x_ps, double t1_xx_ps, double prep_fidelity_, double dop_,
                           double tau_on_ps, double tau_off_ps)
    : t1_x(t1_x_ps),
      t1_xx(t1_xx_ps),
      prep_fidelity(prep_fidelity_),
      dop(dop_),
      tau_on(tau_on_ps),
      tau_off(tau_off_ps) {
    check_emitter_common(t1_x, t1_xx, dop, tau_on, tau_off);
    if (!(std::isfinite(prep_fidelity_) && prep_fidelity_ >= 0.0 && prep_fidelity_ <= 1.0))
        throw ValidationError("EmitterModel: prep_fidelity must lie in [0, 1]");
}

EmitterModel::EmitterModel(double t1_x_ps, double t1_xx_ps, const RabiParams& rabi_, double dop_,
                           double tau_on_ps, double tau_off_ps)
    : t1_x(t1_x_ps),
      t1_xx(t1_xx_ps),
      rabi(rabi_),
      dop(dop_),
      tau_on(tau_on_ps),
      tau_off(tau_off_ps) {
    check_emitter_common(t1_x, t1_xx, dop, tau_on, tau_off);
}

EmitterModel EmitterModel::with_pulse_area(double theta) const {
    if (!(std::isfinite(theta) && theta >= 0.0))
        throw ValidationError("EmitterModel: pulse_area must be >= 0");
    EmitterModel out = *this;
    out.pulse_area = theta;
    return out;
}

DetectionChain::DetectionChain(std::array<double, 2> efficiency_, double jitter_fwhm_ps,
                               std::array<double, 2> dead_time_ps,
                               std::array<double, 2> dark_rate_hz, bool polarization_filter_)
    : efficiency(efficiency_),
      jitter_fwhm(jitter_fwhm_ps),
      dead_time(dead_time_ps),
      dark_rate(dark_rate_hz),
      polarization_filter(polarization_filter_) {
    validate();
}

void DetectionChain::validate() const {
    for (int ch = 0; ch < 2; ++ch) {
        if (!(std::isfinite(efficiency[ch]) && efficiency[ch] >= 0.0 && efficiency[ch] <= 1.0))
            throw ValidationError("DetectionChain: efficiency[" + std::to_string(ch) +
                                  "] must lie in [0, 1]");
        if (!finite_nonneg(dead_time[ch]))
            throw ValidationError("DetectionChain: dead_time[" + std::to_string(ch) +
                                  "] must be >= 0");
        if (!finite_nonneg(dark_rate[ch]))
            throw ValidationError("DetectionChain: dark_rate[" + std::to_string(ch) +
                                  "] must be >= 0");
    }
    if (!finite_nonneg(jitter_fwhm))
        throw ValidationError("DetectionChain: jitter_fwhm must be >= 0");
}

PeakSeries::PeakSeries(std::vector<PeakEntry> entries, std::int64_t period_ps)
    : entries_(std::move(entries)), period_(period_ps) {
    if (period_ <= 0) throw ValidationError("PeakSeries: period must be > 0");
    std::sort(entries_.begin(), entries_.end(),
              [](const PeakEntry& a, const PeakEntry& b) { return a.n < b.n; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!finite_nonneg(entries_[i].area))
            throw ValidationError("PeakSeries: area of peak n=" + std::to_string(entries_[i].n) +
                                  " must be >= 0");
        if (!finite_nonneg(entries_[i].err))
            throw ValidationError("PeakSeries: err of peak n=" + std::to_string(entries_[i].n) +
                                  " must be >= 0");
        if (i > 0 && entries_[i].n == entries_[i - 1].n)
            throw ValidationError("PeakSeries: duplicate peak index n=" +
                                  std::to_string(entries_[i].n));
    }
}

const PeakEntry* PeakSeries::find(int n) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), n,
                               [](const PeakEntry& e, int v) { return e.n < v; });
    return (it != entries_.end() && it->n == n) ? &*it : nullptr;
}

double FitResult::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("FitResult: no parameter named " + name);
    return it->second;
}

double FitResult::err(const std::string& name) const {
    auto it = stderrs.find(name);
    if (it == stderrs.end()) throw ValidationError("FitResult: no stderr for parameter " + name);
    return it->second;
}

}  // namespace cascade
