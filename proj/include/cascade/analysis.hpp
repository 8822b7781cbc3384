#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cascade/rng.hpp"
#include "cascade/types.hpp"

namespace cascade {

struct FidelityEstimate {
    double value = 0.0;
    double err = 0.0;
};

// Preparation fidelity from an XX-X cross-correlation histogram:
// blinking-correct, integrate peaks, F = c_pol * mean(side areas) / center
// area. err is c_pol * stddev(side areas) / center area (scatter of the
// non-center peaks, no 1/sqrt(N)).
FidelityEstimate prep_fidelity_from_xcorr(const Histogram& xcorr, std::int64_t period_ps,
                                          double c_pol);

struct CpolPoint {
    double dop = 0.0;
    double cpol = 0.0;
    double err = 0.0;
};

// Quadratic calibration curve cpol(dop) with the simulated support points.
struct CpolCurve {
    std::array<double, 3> coeffs{0.0, 0.0, 0.0};  // c0 + c1*dop + c2*dop^2
    std::vector<CpolPoint> points;
    FitResult fit;
    double operator()(double dop) const {
        return coeffs[0] + dop * (coeffs[1] + dop * coeffs[2]);
    }
};

// Simulation settings for the polarization-correction calibration. Defaults
// mirror the measured source (lifetimes, dwell times) with dead time and dark
// counts off so the correction isolates the polarization filter.
struct CpolSettings {
    double prep_fidelity = 0.81;
    double t1_x = 1210.0;
    double t1_xx = 340.0;
    double tau_on = 20300.0;
    double tau_off = 100700.0;
    DetectionChain detection{{0.6, 0.6}, 50.0, {0.0, 0.0}, {0.0, 0.0}, false};
    PulseTrain pulses{12500, 1500000};
    std::int64_t bin_width = 50;
    std::int64_t max_delay = 112500;
};

// For each DOP: simulate the cascade unfiltered (cross-check that the
// pipeline recovers the injected fidelity) and through the polarization
// filter; cpol = injected / filtered-raw estimate. Fits a quadratic in dop
// over the per-point errors. Per-point relative error > 5% is a calibration
// error.
CpolCurve calibrate_cpol(std::span<const double> dop_values, const CpolSettings& settings,
                         RngKey key);

// First-order approximation 2 - dop. Overestimates the correction (1.67 vs
// the calibrated 1.53 at dop = 0.33); prefer calibrate_cpol.
double cpol_first_order(double dop);

struct PowerFidelity {
    double power = 0.0;
    FidelityEstimate fidelity;
};

// prep_fidelity_from_xcorr applied per drive power.
std::vector<PowerFidelity> prep_fidelity_vs_power(
    std::span<const std::pair<double, Histogram>> scans, std::int64_t period_ps, double c_pol);

struct Visibility {
    double value = 0.0;
    double err = 0.0;
};

// Two-photon interference visibility V = 1 - A_co / A_cross from normalized
// histograms, integrating the center peak over [-window/2, +window/2). Both
// inputs must be normalize_histogram outputs; the far level is re-checked to
// sit within 1% of 1. err from the scatter of |n| >= 2 side-window integrals.
Visibility hom_visibility(const Histogram& co, const Histogram& cross, std::int64_t window_ps);

struct WindowScanPoint {
    std::int64_t window = 0;
    Visibility visibility;
    double captured_co = 0.0;     // fraction of full-period center counts kept
    double captured_cross = 0.0;
};

std::vector<WindowScanPoint> visibility_vs_window(const Histogram& co, const Histogram& cross,
                                                  std::span<const std::int64_t> windows_ps);

struct BlinkingDerived {
    double tau_on = 0.0;
    double tau_off = 0.0;
    double quantum_efficiency = 0.0;  // on-time fraction
};

// Dwell times and on-fraction from the fitted envelope (m, tau_blink):
// tau_off = (1+m)*tau_blink, tau_on = tau_off/m, QE = 1/(1+m).
BlinkingDerived blinking_derived(double m, double tau_blink);

// Interference-visibility ceiling of the cascade under two-photon excitation,
// set by timing correlations: 1 / (1 + t1_xx / t1_x).
double v_max_tpe(double t1_x, double t1_xx);

}  // namespace cascade
