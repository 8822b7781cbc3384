#include "cascade/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "cascade/correlate.hpp"
#include "cascade/errors.hpp"

namespace cascade {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493;  // 1 / (2 sqrt(2 ln 2))

void check_xi(double xi) {
    if (!(std::isfinite(xi) && xi >= 0.0 && xi < 2.0))
        throw ModelDomainError("occupancy: xi must lie in [0, 2)");
}

}  // namespace

double occupancy(double theta, double xi) {
    check_xi(xi);
    if (!(std::isfinite(theta) && theta >= 0.0))
        throw ModelDomainError("occupancy: pulse area must be >= 0");
    const double tilt = 3.0 * xi / std::sqrt(4.0 - xi * xi);
    const double damp = std::exp(-1.5 * theta * xi);
    return (1.0 - (std::cos(theta) + tilt * std::sin(theta)) * damp) /
           (2.0 * (1.0 + 2.0 * xi * xi));
}

double rabi_envelope(double theta, double xi) {
    check_xi(xi);
    if (!(std::isfinite(theta) && theta >= 0.0))
        throw ModelDomainError("rabi_envelope: pulse area must be >= 0");
    const double tilt2 = 9.0 * xi * xi / (4.0 - xi * xi);
    const double damp = std::exp(-1.5 * theta * xi);
    return (1.0 + std::sqrt(1.0 + tilt2) * damp) / (2.0 * (1.0 + 2.0 * xi * xi));
}

namespace {

void check_comb(double tau1, double tau0, double m, double tau_blink, double c0) {
    if (!(tau1 > 0.0)) throw ModelDomainError("comb model: tau1 must be > 0");
    if (!(tau0 > 0.0)) throw ModelDomainError("comb model: tau0 must be > 0");
    if (!(m > -1.0)) throw ModelDomainError("comb model: m must be > -1");
    if (!(tau_blink > 0.0)) throw ModelDomainError("comb model: tau_blink must be > 0");
    if (!(c0 > 0.0)) throw ModelDomainError("comb model: c0 must be > 0");
}

}  // namespace

double model_g2(double tau, const G2Params& p) {
    check_comb(p.tau1, p.tau0, p.m, p.tau_blink, p.c0);
    if (!(p.g2_0 >= 0.0)) throw ModelDomainError("model_g2: g2_0 must be >= 0");
    // Evaluate at |tau|: the comb is even, and computing one branch keeps the
    // symmetry exact in floating point.
    tau = std::fabs(tau);
    // Peaks beyond this window contribute < 1.3e-10 of the local value.
    const double window = std::max(32.0 * p.tau1, 1.75 * p.tau0);
    const auto n_lo = static_cast<long long>(std::ceil((tau - window) / p.tau0));
    const auto n_hi = static_cast<long long>(std::floor((tau + window) / p.tau0));
    double comb = 0.0;
    for (long long n = n_lo; n <= n_hi; ++n) {
        const double dist = std::fabs(tau - static_cast<double>(n) * p.tau0);
        const double weight = n == 0 ? p.g2_0 : 1.0;
        if (weight != 0.0) comb += weight * std::exp(-dist / p.tau1);
    }
    return comb * p.c0 * (1.0 + p.m * std::exp(-tau / p.tau_blink));
}

double model_hom(double tau, const HomParams& p, bool co_polarized) {
    check_comb(p.tau1, p.tau0, p.m, p.tau_blink, p.c0);
    if (!(p.a >= 0.0)) throw ModelDomainError("model_hom: a must be >= 0");
    if (!(p.v_ps >= 0.0 && p.v_ps <= 1.0))
        throw ModelDomainError("model_hom: v_ps must lie in [0, 1]");
    if (!(p.tau2 > 0.0)) throw ModelDomainError("model_hom: tau2 must be > 0");
    tau = std::fabs(tau);
    const double window = std::max(32.0 * p.tau1, 1.75 * p.tau0);
    const auto n_lo = static_cast<long long>(std::ceil((tau - window) / p.tau0));
    const auto n_hi = static_cast<long long>(std::floor((tau + window) / p.tau0));
    double comb = 0.0;
    for (long long n = n_lo; n <= n_hi; ++n) {
        const double dist = std::fabs(tau - static_cast<double>(n) * p.tau0);
        const double term = std::exp(-dist / p.tau1);
        if (n == 0) {
            const double dip =
                co_polarized ? 1.0 - p.v_ps * std::exp(-tau / p.tau2) : 1.0;
            comb += p.a * term * dip;
        } else if (n == 1 || n == -1) {
            // Neighboring pulses interfere with 50:50 odds, washing a quarter
            // of those coincidences into the beam-splitter partition.
            comb += 0.75 * term;
        } else {
            comb += term;
        }
    }
    return comb * p.c0 * (1.0 + p.m * std::exp(-tau / p.tau_blink));
}

CurveModel make_g2_model(double tau0) {
    CurveModel model;
    model.name = "g2_comb";
    model.params = {"g2_0", "tau1", "m", "tau_blink", "c0"};
    model.eval = [tau0](double x, std::span<const double> p) {
        G2Params g{p[0], p[1], tau0, p[2], p[3], p[4]};
        return model_g2(x, g);
    };
    return model;
}

CurveModel make_hom_model(double tau0, bool co_polarized) {
    CurveModel model;
    if (co_polarized) {
        model.name = "hom_co";
        model.params = {"a", "tau1", "v_ps", "tau2", "m", "tau_blink", "c0"};
        model.eval = [tau0](double x, std::span<const double> p) {
            HomParams h{p[0], p[1], p[2], p[3], tau0, p[4], p[5], p[6]};
            return model_hom(x, h, true);
        };
    } else {
        model.name = "hom_cross";
        model.params = {"a", "tau1", "m", "tau_blink", "c0"};
        model.eval = [tau0](double x, std::span<const double> p) {
            HomParams h{p[0], p[1], 0.0, 1.0, tau0, p[2], p[3], p[4]};
            return model_hom(x, h, false);
        };
    }
    return model;
}

CurveModel make_exp_decay_model() {
    CurveModel model;
    model.name = "exp_decay";
    model.params = {"amplitude", "tau1"};
    model.eval = [](double x, std::span<const double> p) { return p[0] * std::exp(-x / p[1]); };
    return model;
}

CurveModel make_gaussian_doublet_model() {
    CurveModel model;
    model.name = "gaussian_doublet";
    model.params = {"center", "splitting", "fwhm1", "fwhm2", "amp1", "amp2"};
    model.eval = [](double x, std::span<const double> p) {
        const double c1 = p[0] - 0.5 * p[1];
        const double c2 = p[0] + 0.5 * p[1];
        const double s1 = p[2] * kFwhmToSigma;
        const double s2 = p[3] * kFwhmToSigma;
        const double d1 = (x - c1) / s1;
        const double d2 = (x - c2) / s2;
        return p[4] * std::exp(-0.5 * d1 * d1) + p[5] * std::exp(-0.5 * d2 * d2);
    };
    return model;
}

CurveModel make_blinking_envelope_model(double period) {
    CurveModel model;
    model.name = "blinking_envelope";
    model.params = {"a_inf", "m", "tau_blink"};
    model.eval = [period](double x, std::span<const double> p) {
        return p[0] * (1.0 + p[1] * std::exp(-std::fabs(x * period) / p[2]));
    };
    return model;
}

CurveModel make_rabi_model() {
    CurveModel model;
    model.name = "rabi_scan";
    model.params = {"xi", "c", "scale"};
    model.eval = [](double x, std::span<const double> p) {
        return p[2] * occupancy(p[1] * x, p[0]);
    };
    return model;
}

namespace {

// Mean area of peaks |n| == 1 and the peak bin count inside the n = 1 window;
// used for initial tau1 / amplitude guesses.
struct PeakShape {
    double area1 = 0.0;
    double amp1 = 1.0;
};

PeakShape peak_shape(const Histogram& hist, const PeakSeries& peaks, std::int64_t period) {
    PeakShape out;
    const PeakEntry* p1 = peaks.find(1);
    const PeakEntry* m1 = peaks.find(-1);
    if (p1 && m1)
        out.area1 = 0.5 * (p1->area + m1->area);
    else if (p1)
        out.area1 = p1->area;
    else if (m1)
        out.area1 = m1->area;
    double best = 0.0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const double c = hist.bin_center(i);
        if (c >= 0.5 * static_cast<double>(period) && c < 1.5 * static_cast<double>(period))
            best = std::max(best, hist.counts()[i]);
    }
    out.amp1 = std::max(best, 1.0);
    return out;
}

// Envelope parameters from non-center peaks; |n| <= skip_below are dropped
// (HOM combs carry reweighted |n| = 1 peaks that would bias the estimate).
FitResult envelope_from_peaks(const PeakSeries& peaks, int skip_below) {
    std::vector<PeakEntry> kept;
    for (const PeakEntry& e : peaks.entries())
        if (std::abs(e.n) > skip_below) kept.push_back(e);
    return fit_blinking_envelope(PeakSeries(std::move(kept), peaks.period()),
                                 /*exclude_center=*/false);
}

std::vector<DataPoint> histogram_points(const Histogram& hist) {
    std::vector<DataPoint> data(hist.size());
    for (std::size_t i = 0; i < hist.size(); ++i) {
        data[i].x = hist.bin_center(i);
        data[i].y = hist.counts()[i];
        data[i].sigma = std::sqrt(std::max(hist.counts()[i], 1.0));
    }
    return data;
}

double clamped(double v, double lo, double hi) {
    if (!std::isfinite(v)) return lo;
    return std::clamp(v, lo, hi);
}

}  // namespace

FitResult fit_g2(const Histogram& hist, const PulseTrain& pulses,
                 const std::map<std::string, double>& init_overrides) {
    const double bw = static_cast<double>(hist.bin_width());
    const PeakSeries peaks = integrate_peaks(hist, pulses.period);
    const FitResult env = fit_blinking_envelope(peaks, /*exclude_center=*/true);
    const double a_inf = std::max(env.param("a_inf"), 1e-9);
    const double m0 = clamped(env.param("m"), -0.5, 1e3);
    const double tb0 = clamped(env.param("tau_blink"), bw, 1e8);

    const PeakShape shape = peak_shape(hist, peaks, pulses.period);
    const double tau1_0 =
        clamped(shape.area1 * bw / (2.0 * shape.amp1), 0.5 * bw, 0.5 * static_cast<double>(pulses.period));
    const double c0_0 = std::max(a_inf * bw / (2.0 * tau1_0), 1e-12);
    const PeakEntry* center = peaks.find(0);
    const double g2_0_0 =
        center ? clamped(center->area / (a_inf * (1.0 + std::max(m0, 0.0))), 0.0, 2.5) : 0.0;

    std::map<std::string, double> init{{"g2_0", g2_0_0},
                                       {"tau1", tau1_0},
                                       {"m", m0},
                                       {"tau_blink", tb0},
                                       {"c0", c0_0}};
    for (const auto& [k, v] : init_overrides) init[k] = v;

    Bounds bounds{{"g2_0", {0.0, 3.0}},
                  {"tau1", {0.25 * bw, static_cast<double>(pulses.period)}},
                  {"m", {-0.95, 1e4}},
                  {"tau_blink", {0.5 * bw, 1e9}},
                  {"c0", {1e-12, std::numeric_limits<double>::infinity()}}};

    const std::vector<DataPoint> data = histogram_points(hist);
    return nlls_fit(make_g2_model(static_cast<double>(pulses.period)), data, init, bounds);
}

HomFit fit_hom(const Histogram& co, const Histogram& cross, const PulseTrain& pulses,
               const std::map<std::string, double>& co_overrides) {
    const double bw_x = static_cast<double>(cross.bin_width());
    const double period = static_cast<double>(pulses.period);

    const PeakSeries peaks_x = integrate_peaks(cross, pulses.period);
    const FitResult env_x = envelope_from_peaks(peaks_x, 1);
    const double a_inf_x = std::max(env_x.param("a_inf"), 1e-9);
    const double m0_x = clamped(env_x.param("m"), -0.5, 1e3);
    const double tb0_x = clamped(env_x.param("tau_blink"), bw_x, 1e8);

    const PeakShape shape_x = peak_shape(cross, peaks_x, pulses.period);
    // |n| = 1 peaks carry weight 3/4 in the comb
    const double tau1_0 =
        clamped(shape_x.area1 * bw_x / (1.5 * shape_x.amp1), 0.5 * bw_x, 0.5 * period);
    const double c0_x = std::max(a_inf_x * bw_x / (2.0 * tau1_0), 1e-12);
    const PeakEntry* center_x = peaks_x.find(0);
    const double a0_x =
        center_x ? clamped(center_x->area / (a_inf_x * (1.0 + std::max(m0_x, 0.0))), 0.0, 3.0)
                 : 1.0;

    const std::map<std::string, double> init_x{
        {"a", a0_x}, {"tau1", tau1_0}, {"m", m0_x}, {"tau_blink", tb0_x}, {"c0", c0_x}};
    Bounds bounds_x{{"a", {0.0, 10.0}},
                    {"tau1", {0.25 * bw_x, period}},
                    {"m", {-0.95, 1e4}},
                    {"tau_blink", {0.5 * bw_x, 1e9}},
                    {"c0", {1e-12, std::numeric_limits<double>::infinity()}}};

    HomFit out;
    const std::vector<DataPoint> data_x = histogram_points(cross);
    out.cross = nlls_fit(make_hom_model(period, false), data_x, init_x, bounds_x);

    const double bw_c = static_cast<double>(co.bin_width());
    const PeakSeries peaks_c = integrate_peaks(co, pulses.period);
    const FitResult env_c = envelope_from_peaks(peaks_c, 1);

    std::map<std::string, double> init_c{
        {"a", out.cross.param("a")},
        {"tau1", out.cross.param("tau1")},
        {"v_ps", 0.5},
        {"tau2", 0.4 * out.cross.param("tau1")},
        {"m", clamped(env_c.param("m"), -0.5, 1e3)},
        {"tau_blink", clamped(env_c.param("tau_blink"), bw_c, 1e8)},
        {"c0", out.cross.param("c0")}};
    for (const auto& [k, v] : co_overrides) init_c[k] = v;

    Bounds bounds_c{{"a", {0.0, 10.0}},
                    {"tau1", {0.25 * bw_c, period}},
                    {"v_ps", {0.0, 1.0}},
                    {"tau2", {0.25 * bw_c, 1e7}},
                    {"m", {-0.95, 1e4}},
                    {"tau_blink", {0.5 * bw_c, 1e9}},
                    {"c0", {1e-12, std::numeric_limits<double>::infinity()}}};

    const std::vector<DataPoint> data_c = histogram_points(co);
    out.co = nlls_fit(make_hom_model(period, true), data_c, init_c, bounds_c);
    return out;
}

FitResult fit_rabi_scan(std::span<const double> powers, std::span<const double> intensities,
                        std::span<const double> sigmas) {
    if (powers.size() != intensities.size() || powers.size() != sigmas.size())
        throw ValidationError("fit_rabi_scan: powers, intensities, sigmas must align");
    if (powers.size() < 10)
        throw FitError("fit_rabi_scan: need at least 10 scan points");

    std::vector<DataPoint> data(powers.size());
    for (std::size_t i = 0; i < powers.size(); ++i) {
        if (!(powers[i] >= 0.0))
            throw ValidationError("fit_rabi_scan: power must be >= 0 at point " +
                                  std::to_string(i));
        data[i] = {powers[i], intensities[i], sigmas[i]};
    }
    std::sort(data.begin(), data.end(),
              [](const DataPoint& a, const DataPoint& b) { return a.x < b.x; });

    double i_max = 0.0;
    for (const DataPoint& d : data) i_max = std::max(i_max, d.y);
    if (!(i_max > 0.0)) throw FitError("fit_rabi_scan: all intensities are zero");
    double p_rise = data.back().x;
    for (const DataPoint& d : data)
        if (d.x > 0.0 && d.y >= 0.8 * i_max) {
            p_rise = d.x;
            break;
        }

    // Coarse grid over the area-per-power slope before the local fit: the
    // comb of occupancy maxima makes chi2(c) multimodal.
    const CurveModel model = make_rabi_model();
    double best_c = kPi / p_rise, best_chi2 = std::numeric_limits<double>::infinity();
    double best_scale = i_max;
    for (int step = 0; step <= 60; ++step) {
        const double f = 0.55 + 0.015 * step;
        const double c = f * kPi / p_rise;
        // linear LSQ for the scale at xi = 0.05
        double num = 0.0, den = 0.0;
        for (const DataPoint& d : data) {
            const double occ = occupancy(c * d.x, 0.05);
            const double w = 1.0 / (d.sigma * d.sigma);
            num += w * occ * d.y;
            den += w * occ * occ;
        }
        if (!(den > 0.0)) continue;
        const double scale = std::max(num / den, 1e-12);
        double chi2 = 0.0;
        for (const DataPoint& d : data) {
            const double r = (d.y - scale * occupancy(c * d.x, 0.05)) / d.sigma;
            chi2 += r * r;
        }
        if (chi2 < best_chi2) {
            best_chi2 = chi2;
            best_c = c;
            best_scale = scale;
        }
    }

    // The scan must reach past the second occupancy maximum to pin xi.
    if (best_c * data.back().x < 1.8 * kPi)
        throw FitError("fit_rabi_scan: scan does not span two intensity maxima");

    const std::map<std::string, double> init{
        {"xi", 0.05}, {"c", best_c}, {"scale", best_scale}};
    const Bounds bounds{{"xi", {0.0, 1.9}},
                        {"c", {0.05 * best_c, 20.0 * best_c}},
                        {"scale", {1e-12, std::numeric_limits<double>::infinity()}}};
    FitResult fit = nlls_fit(model, data, init, bounds);

    const double xi = fit.param("xi");
    const double c = fit.param("c");
    const double h = 1e-6 * (xi + 1.0);
    const double xi_hi = std::min(xi + h, 1.999);
    const double xi_lo = std::max(xi - h, 0.0);
    const double denv =
        (rabi_envelope(kPi, xi_hi) - rabi_envelope(kPi, xi_lo)) / (xi_hi - xi_lo);
    fit.params["f_prep"] = rabi_envelope(kPi, xi);
    fit.stderrs["f_prep"] = std::fabs(denv) * fit.err("xi");
    fit.params["p_pi"] = kPi / c;
    fit.stderrs["p_pi"] = kPi * fit.err("c") / (c * c);
    return fit;
}

FitResult fit_gaussian_doublet(std::span<const double> energy, std::span<const double> counts) {
    if (energy.size() != counts.size())
        throw ValidationError("fit_gaussian_doublet: energy and counts must align");
    if (energy.size() < 20)
        throw ValidationError("fit_gaussian_doublet: need at least 20 samples");

    std::vector<DataPoint> data(energy.size());
    for (std::size_t i = 0; i < energy.size(); ++i) {
        if (!(counts[i] >= 0.0))
            throw ValidationError("fit_gaussian_doublet: counts must be >= 0 at point " +
                                  std::to_string(i));
        data[i] = {energy[i], counts[i], std::sqrt(std::max(counts[i], 1.0))};
    }
    std::sort(data.begin(), data.end(),
              [](const DataPoint& a, const DataPoint& b) { return a.x < b.x; });

    std::size_t i0 = 0;
    for (std::size_t i = 1; i < data.size(); ++i)
        if (data[i].y > data[i0].y) i0 = i;
    const double y0 = data[i0].y;
    if (!(y0 > 0.0)) throw FitError("fit_gaussian_doublet: all counts are zero");

    std::size_t l = i0, r = i0;
    while (l > 0 && data[l - 1].y >= 0.5 * y0) --l;
    while (r + 1 < data.size() && data[r + 1].y >= 0.5 * y0) ++r;
    const double span = data.back().x - data.front().x;
    const double width = std::max(data[r].x - data[l].x, span / static_cast<double>(data.size()));

    const double mask = 0.25 * width;
    std::size_t i1 = data.size();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::fabs(data[i].x - data[i0].x) <= mask) continue;
        if (i1 == data.size() || data[i].y > data[i1].y) i1 = i;
    }
    double x1, y1;
    if (i1 == data.size()) {
        x1 = data[i0].x + mask;
        y1 = 0.5 * y0;
    } else {
        x1 = data[i1].x;
        y1 = data[i1].y;
    }

    const double x0 = data[i0].x;
    const double center0 = 0.5 * (x0 + x1);
    const double split0 = std::max(std::fabs(x1 - x0), width / 20.0);
    const double fwhm0 = std::max(0.5 * width, span / static_cast<double>(data.size()));
    const double amp_lo = x0 <= x1 ? y0 : y1;
    const double amp_hi = x0 <= x1 ? y1 : y0;

    const std::map<std::string, double> init{{"center", center0}, {"splitting", split0},
                                             {"fwhm1", fwhm0},    {"fwhm2", fwhm0},
                                             {"amp1", amp_lo},    {"amp2", amp_hi}};
    const double inf = std::numeric_limits<double>::infinity();
    const Bounds bounds{{"center", {data.front().x, data.back().x}},
                        {"splitting", {0.0, span}},
                        {"fwhm1", {width / 50.0, 4.0 * span}},
                        {"fwhm2", {width / 50.0, 4.0 * span}},
                        {"amp1", {0.0, inf}},
                        {"amp2", {0.0, inf}}};
    FitResult fit = nlls_fit(make_gaussian_doublet_model(), data, init, bounds);
    fit.params["c1"] = fit.param("center") - 0.5 * fit.param("splitting");
    fit.params["c2"] = fit.param("center") + 0.5 * fit.param("splitting");
    return fit;
}

FitResult fit_lifetime(const Histogram& decay, double t_start, double t_end) {
    if (!(t_start < t_end)) throw ValidationError("fit_lifetime: t_start must be < t_end");
    if (t_start < static_cast<double>(decay.tau_min()) ||
        t_end > static_cast<double>(decay.tau_max()))
        throw ValidationError("fit_lifetime: fit window outside histogram span");

    std::vector<DataPoint> data;
    for (std::size_t i = 0; i < decay.size(); ++i) {
        const double c = decay.bin_center(i);
        if (c < t_start || c > t_end) continue;
        data.push_back({c, decay.counts()[i], std::sqrt(std::max(decay.counts()[i], 1.0))});
    }
    if (data.size() < 30)
        throw FitError("fit_lifetime: fewer than 30 bins in the fit window");

    // log-linear seed, weighted by counts (Poisson: var(log y) ~ 1/y)
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const DataPoint& d : data) {
        if (!(d.y > 0.0)) continue;
        const double w = d.y;
        const double ly = std::log(d.y);
        sw += w;
        sx += w * d.x;
        sy += w * ly;
        sxx += w * d.x * d.x;
        sxy += w * d.x * ly;
    }
    double tau0 = (t_end - t_start) / 3.0;
    double amp0 = 1.0;
    const double det = sw * sxx - sx * sx;
    if (sw > 0.0 && det > 0.0) {
        const double slope = (sw * sxy - sx * sy) / det;
        const double icpt = (sy - slope * sx) / sw;
        if (slope < 0.0) tau0 = -1.0 / slope;
        amp0 = std::exp(std::min(icpt, 700.0));
    }
    tau0 = clamped(tau0, 0.1 * static_cast<double>(decay.bin_width()), 1e9);

    const double inf = std::numeric_limits<double>::infinity();
    const std::map<std::string, double> init{{"amplitude", std::max(amp0, 1e-12)},
                                             {"tau1", tau0}};
    const Bounds bounds{{"amplitude", {1e-12, inf}},
                        {"tau1", {0.1 * static_cast<double>(decay.bin_width()), 1e9}}};
    return nlls_fit(make_exp_decay_model(), data, init, bounds);
}

}  // namespace cascade
