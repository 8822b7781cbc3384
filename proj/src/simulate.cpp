#include "cascade/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "cascade/errors.hpp"
#include "cascade/models.hpp"

namespace cascade {

namespace {

// RNG tree labels; per-pulse streams hang off kPulse so partitioning the
// pulse range cannot change any draw.
constexpr std::uint64_t kTelegraph = 1;
constexpr std::uint64_t kPulse = 2;
constexpr std::uint64_t kDark = 3;

constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493;

}  // namespace

std::vector<TelegraphInterval> sample_telegraph(double tau_on_ps, double tau_off_ps,
                                                std::int64_t duration_ps, RngKey key,
                                                std::optional<bool> initial_on) {
    if (!(tau_on_ps > 0.0) || !std::isfinite(tau_on_ps))
        throw ValidationError("sample_telegraph: tau_on must be > 0");
    if (!(tau_off_ps > 0.0) || !std::isfinite(tau_off_ps))
        throw ValidationError("sample_telegraph: tau_off must be > 0");
    if (duration_ps < 0) throw ValidationError("sample_telegraph: duration must be >= 0");

    std::vector<TelegraphInterval> out;
    if (duration_ps == 0) return out;
    Rng rng = key.stream();
    bool on = initial_on ? *initial_on
                         : rng.uniform() < tau_on_ps / (tau_on_ps + tau_off_ps);
    std::int64_t t = 0;
    while (t < duration_ps) {
        const double dwell = rng.exponential(on ? tau_on_ps : tau_off_ps);
        // round to the ps grid, forcing progress on sub-ps draws
        std::int64_t end = t + std::max<std::int64_t>(1, std::llround(dwell));
        if (end > duration_ps) end = duration_ps;
        out.push_back({t, end, on});
        t = end;
        on = !on;
    }
    return out;
}

double inversion_probability(const EmitterModel& emitter) {
    if (emitter.prep_fidelity) return *emitter.prep_fidelity;
    if (!emitter.rabi)
        throw ValidationError("EmitterModel: neither prep_fidelity nor rabi is set");
    if (!emitter.pulse_area)
        throw ValidationError("EmitterModel: pulse_area is required when driving via rabi");
    return occupancy(*emitter.pulse_area, emitter.rabi->xi);
}

TagStream simulate_cascade_stream(const EmitterModel& emitter, const DetectionChain& detection,
                                  const PulseTrain& pulses, RngKey key) {
    if (emitter.prep_fidelity && emitter.rabi)
        throw ValidationError("EmitterModel: prep_fidelity and rabi are mutually exclusive");
    detection.validate();
    const double p_inv = inversion_probability(emitter);
    const std::int64_t duration = pulses.duration();
    if (pulses.n_pulses == 0) return TagStream({}, 0, 2);

    const std::vector<TelegraphInterval> telegraph =
        sample_telegraph(emitter.tau_on, emitter.tau_off, duration, key.child(kTelegraph));
    const double p_h = 0.5 * (1.0 + emitter.dop);
    const double sigma_j = detection.jitter_fwhm * kFwhmToSigma;
    const RngKey pulse_root = key.child(kPulse);

    std::array<std::vector<std::int64_t>, 2> raw;
    raw[0].reserve(static_cast<std::size_t>(
        static_cast<double>(pulses.n_pulses) * p_inv * detection.efficiency[0] * 1.05 + 64));
    raw[1].reserve(static_cast<std::size_t>(
        static_cast<double>(pulses.n_pulses) * p_inv * detection.efficiency[1] * 1.05 + 64));

    std::size_t iv = 0;
    for (std::int64_t k = 0; k < pulses.n_pulses; ++k) {
        const std::int64_t t_pulse = k * pulses.period;
        while (telegraph[iv].end <= t_pulse) ++iv;
        if (!telegraph[iv].on) continue;

        // Fixed per-pulse draw order: inversion, polarization, XX delay,
        // X delay, efficiency XX, [jitter XX], efficiency X, [jitter X].
        Rng rng = pulse_root.child(static_cast<std::uint64_t>(k)).stream();
        if (!rng.bernoulli(p_inv)) continue;
        const bool horizontal = rng.bernoulli(p_h);
        if (detection.polarization_filter && !horizontal) continue;
        const std::int64_t t_xx = t_pulse + std::llround(rng.exponential(emitter.t1_xx));
        const std::int64_t t_x = t_xx + std::llround(rng.exponential(emitter.t1_x));

        if (rng.bernoulli(detection.efficiency[0])) {
            std::int64_t t = t_xx;
            if (sigma_j > 0.0) t += std::llround(sigma_j * rng.gaussian());
            if (t >= 0 && t <= duration) raw[0].push_back(t);
        }
        if (rng.bernoulli(detection.efficiency[1])) {
            std::int64_t t = t_x;
            if (sigma_j > 0.0) t += std::llround(sigma_j * rng.gaussian());
            if (t >= 0 && t <= duration) raw[1].push_back(t);
        }
    }

    std::vector<TimeTag> tags;
    tags.reserve(raw[0].size() + raw[1].size());
    for (int ch = 0; ch < 2; ++ch) {
        std::sort(raw[ch].begin(), raw[ch].end());
        // dead-time removal against the previously kept tag
        const std::int64_t dead = std::llround(detection.dead_time[ch]);
        std::int64_t last = std::numeric_limits<std::int64_t>::min() / 2;
        std::size_t kept_count = 0;
        for (std::int64_t t : raw[ch]) {
            if (dead > 0 && t - last < dead) continue;
            raw[ch][kept_count++] = t;
            last = t;
        }
        raw[ch].resize(kept_count);

        // dark counts merge after dead-time removal
        if (detection.dark_rate[ch] > 0.0) {
            Rng dark = key.child(kDark).child(static_cast<std::uint64_t>(ch)).stream();
            const double mean_gap = 1e12 / detection.dark_rate[ch];
            double t = 0.0;
            for (;;) {
                t += dark.exponential(mean_gap);
                const std::int64_t ti = std::llround(t);
                if (ti > duration) break;
                raw[ch].push_back(ti);
            }
            std::sort(raw[ch].begin(), raw[ch].end());
        }
        for (std::int64_t t : raw[ch])
            tags.push_back({static_cast<std::uint16_t>(ch), t});
    }
    std::sort(tags.begin(), tags.end(), tag_order);
    return TagStream(std::move(tags), duration, 2);
}

Histogram synth_histogram(const CurveModel& model, const std::map<std::string, double>& params,
                          double exposure, std::int64_t bin_width_ps, std::int64_t tau_min_ps,
                          std::size_t n_bins, RngKey key) {
    if (!(exposure > 0.0) || !std::isfinite(exposure))
        throw ValidationError("synth_histogram: exposure must be > 0");
    if (bin_width_ps <= 0) throw ValidationError("synth_histogram: bin_width must be > 0");
    if (n_bins == 0) throw ValidationError("synth_histogram: n_bins must be > 0");

    std::vector<double> p(model.params.size());
    for (std::size_t j = 0; j < model.params.size(); ++j) {
        auto it = params.find(model.params[j]);
        if (it == params.end())
            throw ValidationError("synth_histogram: missing parameter " + model.params[j]);
        p[j] = it->second;
    }

    Rng rng = key.stream();
    std::vector<double> counts(n_bins);
    std::map<std::string, std::string> meta{{"op", "synth"}, {"model", model.name}};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", exposure);
    meta["exposure"] = buf;
    for (std::size_t j = 0; j < model.params.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", p[j]);
        meta["param." + model.params[j]] = buf;
    }
    for (std::size_t i = 0; i < n_bins; ++i) {
        const double center = static_cast<double>(tau_min_ps) +
                              (static_cast<double>(i) + 0.5) * static_cast<double>(bin_width_ps);
        const double f = model.eval(center, p);
        if (std::isnan(f)) throw ModelDomainError("synth_histogram: model returned NaN");
        if (f < 0.0)
            throw ModelDomainError("synth_histogram: model is negative at tau = " +
                                   std::to_string(center));
        counts[i] = static_cast<double>(rng.poisson(exposure * f));
    }
    return Histogram(bin_width_ps, tau_min_ps, std::move(counts), std::nullopt, std::move(meta));
}

std::vector<PowerScanPoint> simulate_power_scan(const EmitterModel& emitter,
                                                std::span<const double> powers,
                                                const DetectionChain& detection,
                                                const PulseTrain& pulses, RngKey key) {
    if (!emitter.rabi)
        throw ValidationError("simulate_power_scan: emitter must carry rabi parameters");
    std::vector<PowerScanPoint> out;
    out.reserve(powers.size());
    for (std::size_t i = 0; i < powers.size(); ++i) {
        if (!(powers[i] >= 0.0) || !std::isfinite(powers[i]))
            throw ValidationError("simulate_power_scan: power must be >= 0 at point " +
                                  std::to_string(i));
        const EmitterModel driven =
            emitter.with_pulse_area(emitter.rabi->power_to_area * powers[i]);
        TagStream stream =
            simulate_cascade_stream(driven, detection, pulses, key.child(i));
        PowerScanPoint point{powers[i], stream.count_in_channel(0), stream.count_in_channel(1),
                             std::move(stream)};
        out.push_back(std::move(point));
    }
    return out;
}

}  // namespace cascade
