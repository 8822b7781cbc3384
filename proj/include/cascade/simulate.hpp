#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cascade/fit.hpp"
#include "cascade/rng.hpp"
#include "cascade/types.hpp"

namespace cascade {

// Half-open on/off interval; a sample tiles [0, duration] exactly.
struct TelegraphInterval {
    std::int64_t start = 0;
    std::int64_t end = 0;
    bool on = false;
};

// Two-state telegraph with exponential dwell times. The initial state is
// drawn from the stationary distribution unless forced.
std::vector<TelegraphInterval> sample_telegraph(double tau_on_ps, double tau_off_ps,
                                                std::int64_t duration_ps, RngKey key,
                                                std::optional<bool> initial_on = std::nullopt);

// Per-pulse inversion probability of the emitter: prep_fidelity if fixed,
// else occupancy(pulse_area, xi) from the Rabi parameterization.
double inversion_probability(const EmitterModel& emitter);

// Monte Carlo time-tag stream of the driven cascade. Per pulse: telegraph
// gate and Bernoulli inversion, polarization draw (H with prob (1+dop)/2,
// V discarded entirely under the polarization filter), XX emission at
// t_pulse + Exp(t1_xx) on channel 0, X at t_xx + Exp(t1_x) on channel 1; per
// photon: efficiency thinning, Gaussian jitter, per-channel dead-time
// removal; dark counts merged last; final sort by (t, channel). Tags jittered
// outside [0, duration] are dropped. Bit-identical across partitionings of
// the pulse index range (per-pulse RNG streams).
TagStream simulate_cascade_stream(const EmitterModel& emitter, const DetectionChain& detection,
                                  const PulseTrain& pulses, RngKey key);

// Poisson-sample a histogram from a model: counts[i] ~ Poisson(exposure *
// f(center_i)). Negative model values are a model-domain error. Metadata
// records the model name, parameters and exposure.
Histogram synth_histogram(const CurveModel& model, const std::map<std::string, double>& params,
                          double exposure, std::int64_t bin_width_ps, std::int64_t tau_min_ps,
                          std::size_t n_bins, RngKey key);

struct PowerScanPoint {
    double power = 0.0;
    std::size_t xx_counts = 0;  // channel 0 tags
    std::size_t x_counts = 0;   // channel 1 tags
    TagStream stream;
};

// One cascade simulation per drive power; the emitter must carry RabiParams
// (pulse area = power_to_area * power). Each point gets an independent child
// stream of the key, so the scan is reproducible point by point.
std::vector<PowerScanPoint> simulate_power_scan(const EmitterModel& emitter,
                                                std::span<const double> powers,
                                                const DetectionChain& detection,
                                                const PulseTrain& pulses, RngKey key);

}  // namespace cascade
