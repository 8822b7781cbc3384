#pragma once

#include <span>

#include "cascade/fit.hpp"
#include "cascade/types.hpp"

namespace cascade {

// Final occupancy of the upper level after a hyperbolic-secant pulse of area
// theta with phonon-dressing ratio xi in [0, 2). occupancy(pi, 0) = 1.
double occupancy(double theta, double xi);

// Envelope of the occupancy oscillation; touches the extrema of occupancy and
// decays toward the 1/(2(1+2 xi^2)) asymptote. The preparation fidelity of a
// pi pulse is rabi_envelope(pi, xi).
double rabi_envelope(double theta, double xi);

// Pulsed autocorrelation comb: suppressed center peak + side peaks, all with
// exponential tails of width tau1, multiplied by the blinking bunching
// envelope c0 * (1 + m * exp(-|tau|/tau_blink)).
struct G2Params {
    double g2_0 = 0.0;
    double tau1 = 1.0;
    double tau0 = 12500.0;
    double m = 0.0;
    double tau_blink = 1.0;
    double c0 = 1.0;
};
double model_g2(double tau, const G2Params& p);

// Two-photon-interference comb. Co-polarized center peak carries the
// interference dip (1 - v_ps * exp(-|tau|/tau2)); cross-polarized drops the
// dip; |n| = 1 peaks are weighted 3/4 in both.
struct HomParams {
    double a = 1.0;      // center-peak amplitude relative to the comb
    double tau1 = 1.0;
    double v_ps = 0.0;   // post-selected interference contrast (co only)
    double tau2 = 1.0;   // dip width (co only)
    double tau0 = 12500.0;
    double m = 0.0;
    double tau_blink = 1.0;
    double c0 = 1.0;
};
double model_hom(double tau, const HomParams& p, bool co_polarized);

// CurveModel wrappers over the closed forms, for nlls_fit / synth_histogram.
CurveModel make_g2_model(double tau0);                       // g2_0 tau1 m tau_blink c0
CurveModel make_hom_model(double tau0, bool co_polarized);   // a tau1 [v_ps tau2] m tau_blink c0
CurveModel make_exp_decay_model();                           // amplitude tau1
CurveModel make_gaussian_doublet_model();                    // center splitting fwhm1 fwhm2 amp1 amp2
CurveModel make_blinking_envelope_model(double period);      // a_inf m tau_blink   (x = peak index)
CurveModel make_rabi_model();                                // xi c scale          (x = power)

// Fit a detected-intensity-vs-power scan to scale * occupancy(c*P, xi).
// Reports derived entries f_prep (= rabi_envelope(pi, xi)) and p_pi (= pi/c)
// with propagated errors alongside the free parameters.
FitResult fit_rabi_scan(std::span<const double> powers, std::span<const double> intensities,
                        std::span<const double> sigmas);

// Full-comb g2 fit of a coincidence histogram. Initial values are derived
// from the peak series (blinking envelope, peak width, far level); entries in
// init_overrides replace them. Bins are weighted by sqrt(max(count, 1)).
FitResult fit_g2(const Histogram& hist, const PulseTrain& pulses,
                 const std::map<std::string, double>& init_overrides = {});

struct HomFit {
    FitResult cross;
    FitResult co;
};

// Joint two-sided HOM analysis: the cross-polarized histogram fixes the comb
// (a, tau1, c0) which seeds the co-polarized fit of v_ps and tau2.
HomFit fit_hom(const Histogram& co, const Histogram& cross, const PulseTrain& pulses,
               const std::map<std::string, double>& co_overrides = {});

// Two-Gaussian spectral doublet over (energy, counts) samples. Reports
// center, splitting, per-component fwhm and amplitude; the splitting stderr
// comes from the covariance, so a degenerate doublet shows up as
// stderr >= splitting.
FitResult fit_gaussian_doublet(std::span<const double> energy, std::span<const double> counts);

// Single-exponential tail fit of a decay histogram restricted to bin centers
// inside [t_start, t_end].
FitResult fit_lifetime(const Histogram& decay, double t_start, double t_end);

}  // namespace cascade
