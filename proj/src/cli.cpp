#include "cascade/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cascade/analysis.hpp"
#include "cascade/config.hpp"
#include "cascade/correlate.hpp"
#include "cascade/errors.hpp"
#include "cascade/io.hpp"
#include "cascade/models.hpp"
#include "cascade/rng.hpp"
#include "cascade/simulate.hpp"
#include "cascade/version.hpp"

namespace cascade {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::map<std::string, std::string> base_meta(const std::string& replay) {
    return {{"replay", replay}, {"tool_version", kVersion}};
}

void echo_config(std::map<std::string, std::string>& meta, const ExperimentConfig& cfg,
                 const std::string& path) {
    meta["seed"] = std::to_string(cfg.seed());
    meta["input_digest.config"] = file_digest(path);
    for (const auto& [k, v] : cfg.entries()) meta["config." + k] = v;
}

void print_param(const FitResult& fit, const std::string& name) {
    std::cout << "  " << name << " = " << fmt6(fit.param(name));
    const auto it = fit.stderrs.find(name);
    if (it != fit.stderrs.end()) std::cout << " +- " << fmt6(it->second);
    std::cout << "\n";
}

// "x,y[,sigma]" rows with '#' comments; column count must be consistent.
void read_xy_table(const std::string& path, std::vector<double>& xs, std::vector<double>& ys,
                   std::vector<double>& sigmas) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open '" + path + "' for reading");
    std::string line;
    std::optional<std::size_t> width;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        std::string t = line;
        const auto a = t.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) continue;
        t = t.substr(a);
        if (t[0] == '#') continue;
        std::vector<double> cols;
        std::istringstream ss(t);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                const std::string trimmed = item.substr(item.find_first_not_of(" \t"));
                cols.push_back(std::stod(trimmed, &used));
            } catch (const std::exception&) {
                throw FormatError(path + ": non-numeric field '" + item + "' in row " +
                                  std::to_string(row));
            }
        }
        if (cols.size() < 2 || cols.size() > 3)
            throw FormatError(path + ": expected 2 or 3 columns in row " + std::to_string(row));
        if (width && *width != cols.size())
            throw FormatError(path + ": inconsistent column count in row " + std::to_string(row));
        width = cols.size();
        xs.push_back(cols[0]);
        ys.push_back(cols[1]);
        if (cols.size() == 3) sigmas.push_back(cols[2]);
        ++row;
    }
    if (xs.empty()) throw FormatError(path + ": no data rows");
}

struct SimulateOpts {
    std::string config, out;
    std::string format = "binary";
};

int run_simulate(const SimulateOpts& o) {
    const ExperimentConfig cfg = ExperimentConfig::load(o.config);
    const TagStream stream =
        simulate_cascade_stream(cfg.emitter(), cfg.detection(), cfg.pulses(), RngKey(cfg.seed()));
    std::map<std::string, std::string> meta =
        base_meta("simulate --config " + o.config + " --format " + o.format);
    echo_config(meta, cfg, o.config);
    write_tags(o.out, stream, o.format == "text" ? TagFormat::text : TagFormat::binary, meta);
    std::cout << "simulate: " << stream.size() << " tags (ch0 " << stream.count_in_channel(0)
              << ", ch1 " << stream.count_in_channel(1) << ") over " << stream.duration()
              << " ps -> " << o.out << "\n";
    return 0;
}

struct PowerScanOpts {
    std::string config, out_dir;
    std::string prefix = "scan";
};

int run_power_scan(const PowerScanOpts& o) {
    const ExperimentConfig cfg = ExperimentConfig::load(o.config);
    const std::vector<double> powers = cfg.get_list("powers");
    std::filesystem::create_directories(o.out_dir);
    const std::vector<PowerScanPoint> points = simulate_power_scan(
        cfg.emitter(), powers, cfg.detection(), cfg.pulses(), RngKey(cfg.seed()));

    std::map<std::string, std::string> meta =
        base_meta("power-scan --config " + o.config + " --prefix " + o.prefix);
    echo_config(meta, cfg, o.config);

    std::ofstream index(o.out_dir + "/" + o.prefix + "_index.csv");
    if (!index) throw ValidationError("cannot open index file in '" + o.out_dir + "'");
    for (const auto& [k, v] : meta) index << "# " << k << "=" << v << "\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03zu.cltg", o.prefix.c_str(), i);
        std::map<std::string, std::string> file_meta = meta;
        file_meta["power"] = fmt(points[i].power);
        file_meta["point_index"] = std::to_string(i);
        write_tags(o.out_dir + "/" + name, points[i].stream, TagFormat::binary, file_meta);
        index << i << "," << fmt(points[i].power) << "," << points[i].xx_counts << ","
              << points[i].x_counts << "," << name << "\n";
    }
    if (!index) throw ValidationError("write failed on index file");
    std::cout << "power-scan: " << points.size() << " powers -> " << o.out_dir << "/" << o.prefix
              << "_*.cltg\n";
    return 0;
}

struct CorrelateOpts {
    std::string in, out;
    int a = 0, b = 1;
    std::int64_t bin = 10, window = 100000;
};

int run_correlate(const CorrelateOpts& o) {
    const TagStream stream = read_tags(o.in);
    Histogram hist = correlate(stream, o.a, o.b, o.bin, o.window);
    std::map<std::string, std::string> meta =
        base_meta("correlate --in " + o.in + " --a " + std::to_string(o.a) + " --b " +
                  std::to_string(o.b) + " --bin " + std::to_string(o.bin) + " --window " +
                  std::to_string(o.window));
    meta["input_digest.in"] = file_digest(o.in);
    hist.metadata.insert(meta.begin(), meta.end());
    write_histogram(o.out, hist);
    std::cout << "correlate: " << fmt6(hist.total()) << " coincidences in " << hist.size()
              << " bins -> " << o.out << "\n";
    return 0;
}

struct PeaksOpts {
    std::string in, out;
    std::int64_t period = 12500;
};

int run_peaks(const PeaksOpts& o) {
    const Histogram hist = read_histogram(o.in);
    const PeakSeries peaks = integrate_peaks(hist, o.period);
    std::map<std::string, std::string> meta = base_meta(
        "peaks --in " + o.in + " --period " + std::to_string(o.period));
    meta["input_digest.in"] = file_digest(o.in);
    write_peaks(o.out, peaks, meta);
    const PeakEntry* center = peaks.find(0);
    std::cout << "peaks: " << peaks.entries().size() << " peaks, center area "
              << (center ? fmt6(center->area) : "n/a") << " -> " << o.out << "\n";
    return 0;
}

struct FitG2Opts {
    std::string in, out;
    std::int64_t period = 12500;
};

int run_fit_g2(const FitG2Opts& o) {
    const Histogram hist = read_histogram(o.in);
    const FitResult fit = fit_g2(hist, PulseTrain(o.period, 0));
    std::map<std::string, std::string> meta =
        base_meta("fit-g2 --in " + o.in + " --period " + std::to_string(o.period));
    meta["input_digest.in"] = file_digest(o.in);
    write_fit_result(o.out, fit, meta);
    std::cout << "fit-g2 -> " << o.out << "\n";
    for (const char* p : {"g2_0", "tau1", "m", "tau_blink", "c0"}) print_param(fit, p);
    if (!fit.converged) {
        std::cout << "warning: fit did not converge\n";
        return 2;
    }
    return 0;
}

struct FitHomOpts {
    std::string co, cross, out;
    std::int64_t period = 12500;
};

int run_fit_hom(const FitHomOpts& o) {
    const Histogram co = read_histogram(o.co);
    const Histogram cross = read_histogram(o.cross);
    const HomFit fit = fit_hom(co, cross, PulseTrain(o.period, 0));
    std::map<std::string, std::string> meta =
        base_meta("fit-hom --co " + o.co + " --cross " + o.cross + " --period " +
                  std::to_string(o.period));
    meta["input_digest.co"] = file_digest(o.co);
    meta["input_digest.cross"] = file_digest(o.cross);
    for (const auto& [name, value] : fit.cross.params) {
        meta["cross." + name] = fmt(value);
        const auto it = fit.cross.stderrs.find(name);
        if (it != fit.cross.stderrs.end()) meta["cross." + name + ".stderr"] = fmt(it->second);
    }
    meta["cross.converged"] = fit.cross.converged ? "1" : "0";
    write_fit_result(o.out, fit.co, meta);
    std::cout << "fit-hom -> " << o.out << "\n";
    for (const char* p : {"v_ps", "tau2", "a", "tau1", "m", "tau_blink", "c0"})
        print_param(fit.co, p);
    if (!fit.co.converged || !fit.cross.converged) {
        std::cout << "warning: fit did not converge\n";
        return 2;
    }
    return 0;
}

struct FitRabiOpts {
    std::string in, out;
};

int run_fit_rabi(const FitRabiOpts& o) {
    std::vector<double> powers, intensities, sigmas;
    read_xy_table(o.in, powers, intensities, sigmas);
    if (sigmas.empty()) {
        sigmas.reserve(intensities.size());
        for (double y : intensities) sigmas.push_back(std::sqrt(std::max(y, 1.0)));
    }
    const FitResult fit = fit_rabi_scan(powers, intensities, sigmas);
    std::map<std::string, std::string> meta = base_meta("fit-rabi --in " + o.in);
    meta["input_digest.in"] = file_digest(o.in);
    write_fit_result(o.out, fit, meta);
    std::cout << "fit-rabi -> " << o.out << "\n";
    for (const char* p : {"xi", "c", "scale", "f_prep", "p_pi"}) print_param(fit, p);
    if (!fit.converged) {
        std::cout << "warning: fit did not converge\n";
        return 2;
    }
    return 0;
}

struct FitLifetimeOpts {
    std::string in, out;
    double t_start = 0.0, t_end = 0.0;
};

int run_fit_lifetime(const FitLifetimeOpts& o) {
    const Histogram decay = read_histogram(o.in);
    const FitResult fit = fit_lifetime(decay, o.t_start, o.t_end);
    std::map<std::string, std::string> meta =
        base_meta("fit-lifetime --in " + o.in + " --t-start " + fmt(o.t_start) + " --t-end " +
                  fmt(o.t_end));
    meta["input_digest.in"] = file_digest(o.in);
    write_fit_result(o.out, fit, meta);
    std::cout << "fit-lifetime -> " << o.out << "\n";
    for (const char* p : {"amplitude", "tau1"}) print_param(fit, p);
    if (!fit.converged) {
        std::cout << "warning: fit did not converge\n";
        return 2;
    }
    return 0;
}

struct FitSpectrumOpts {
    std::string in, out;
};

int run_fit_spectrum(const FitSpectrumOpts& o) {
    std::vector<double> energy, counts, unused;
    read_xy_table(o.in, energy, counts, unused);
    const FitResult fit = fit_gaussian_doublet(energy, counts);
    std::map<std::string, std::string> meta = base_meta("fit-spectrum --in " + o.in);
    meta["input_digest.in"] = file_digest(o.in);
    write_fit_result(o.out, fit, meta);
    std::cout << "fit-spectrum -> " << o.out << "\n";
    for (const char* p : {"c1", "c2", "splitting", "fwhm1", "fwhm2"}) print_param(fit, p);
    if (!fit.converged) {
        std::cout << "warning: fit did not converge\n";
        return 2;
    }
    return 0;
}

struct PrepFidelityOpts {
    std::string in, out;
    std::int64_t period = 12500;
    double cpol = 0.0;
};

int run_prep_fidelity(const PrepFidelityOpts& o) {
    const Histogram hist = read_histogram(o.in);
    const FidelityEstimate est = prep_fidelity_from_xcorr(hist, o.period, o.cpol);
    std::cout << "F_prep = " << fmt6(est.value) << " +- " << fmt6(est.err) << " (c_pol "
              << fmt6(o.cpol) << ")\n";
    if (!o.out.empty()) {
        FitResult result;
        result.params["f_prep"] = est.value;
        result.stderrs["f_prep"] = est.err;
        result.converged = true;
        std::map<std::string, std::string> meta =
            base_meta("prep-fidelity --in " + o.in + " --period " + std::to_string(o.period) +
                      " --cpol " + fmt(o.cpol));
        meta["input_digest.in"] = file_digest(o.in);
        write_fit_result(o.out, result, meta);
    }
    return 0;
}

struct CalibrateCpolOpts {
    std::string config, out;
};

int run_calibrate_cpol(const CalibrateCpolOpts& o) {
    const ExperimentConfig cfg = ExperimentConfig::load(o.config);
    CpolSettings s;
    s.prep_fidelity = cfg.get_double("prep_fidelity", s.prep_fidelity);
    s.t1_x = cfg.get_double("t1_x", s.t1_x);
    s.t1_xx = cfg.get_double("t1_xx", s.t1_xx);
    s.tau_on = cfg.get_double("tau_on", s.tau_on);
    s.tau_off = cfg.get_double("tau_off", s.tau_off);
    s.detection = DetectionChain(
        {cfg.get_double("efficiency_a", 0.6), cfg.get_double("efficiency_b", 0.6)},
        cfg.get_double("jitter_fwhm", 50.0),
        {cfg.get_double("dead_time_a", 0.0), cfg.get_double("dead_time_b", 0.0)},
        {cfg.get_double("dark_rate_a", 0.0), cfg.get_double("dark_rate_b", 0.0)}, false);
    s.pulses = PulseTrain(cfg.get_int("period", 12500), cfg.get_int("n_pulses", 1500000));
    s.bin_width = cfg.get_int("bin_width", 50);
    s.max_delay = cfg.get_int("max_delay", 112500);
    std::vector<double> dops{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    if (cfg.has("dops")) dops = cfg.get_list("dops");

    const CpolCurve curve = calibrate_cpol(dops, s, RngKey(cfg.seed()));

    std::map<std::string, std::string> meta = base_meta("calibrate-cpol --config " + o.config);
    echo_config(meta, cfg, o.config);
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const CpolPoint& p = curve.points[i];
        meta["point." + std::to_string(i)] =
            fmt(p.dop) + "," + fmt(p.cpol) + "," + fmt(p.err);
    }
    write_fit_result(o.out, curve.fit, meta);
    std::cout << "calibrate-cpol -> " << o.out << "\n";
    for (const char* p : {"c0", "c1", "c2"}) print_param(curve.fit, p);
    for (const CpolPoint& p : curve.points)
        std::cout << "  dop " << fmt6(p.dop) << ": cpol " << fmt6(p.cpol) << " +- " << fmt6(p.err)
                  << "\n";
    std::cout << "  cpol(0.33) = " << fmt6(curve(0.33)) << "\n";
    if (!curve.fit.converged) {
        std::cout << "warning: fit did not converge\n";
        return 2;
    }
    return 0;
}

struct HomVisibilityOpts {
    std::string co, cross, out;
    std::int64_t window = 4000;
    std::int64_t period = 12500;
    int far_min = 6;
};

int run_hom_visibility(const HomVisibilityOpts& o) {
    const Histogram co_raw = read_histogram(o.co);
    const Histogram cross_raw = read_histogram(o.cross);
    const Histogram co = normalize_histogram(co_raw, o.period, o.far_min);
    const Histogram cross = normalize_histogram(cross_raw, o.period, o.far_min);
    const Visibility vis = hom_visibility(co, cross, o.window);
    std::cout << "V(" << o.window << " ps) = " << fmt6(vis.value) << " +- " << fmt6(vis.err)
              << "\n";
    if (!o.out.empty()) {
        FitResult result;
        result.params["v"] = vis.value;
        result.stderrs["v"] = vis.err;
        result.converged = true;
        std::map<std::string, std::string> meta = base_meta(
            "hom-visibility --co " + o.co + " --cross " + o.cross + " --window " +
            std::to_string(o.window) + " --period " + std::to_string(o.period) + " --far-min " +
            std::to_string(o.far_min));
        meta["input_digest.co"] = file_digest(o.co);
        meta["input_digest.cross"] = file_digest(o.cross);
        meta["norm_co"] = fmt(*co.norm());
        meta["norm_cross"] = fmt(*cross.norm());
        write_fit_result(o.out, result, meta);
    }
    return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
    CLI::App app{"Photon-statistics toolkit for a driven biexciton-exciton cascade"};
    app.name("cascade");
    app.require_subcommand(1);

    SimulateOpts so;
    CLI::App* sim = app.add_subcommand("simulate", "Simulate a cascade time-tag stream");
    sim->add_option("--config", so.config, "experiment config file")->required();
    sim->add_option("--out", so.out, "output tag file")->required();
    sim->add_option("--format", so.format, "binary|text")
        ->check(CLI::IsMember({"binary", "text"}));

    PowerScanOpts po;
    CLI::App* pscan = app.add_subcommand("power-scan", "Simulate tag streams across drive powers");
    pscan->add_option("--config", po.config, "experiment config file (needs powers=)")->required();
    pscan->add_option("--out-dir", po.out_dir, "output directory")->required();
    pscan->add_option("--prefix", po.prefix, "output file prefix");

    CorrelateOpts co;
    CLI::App* corr = app.add_subcommand("correlate", "Start-stop coincidence histogram");
    corr->add_option("--in", co.in, "input tag file")->required();
    corr->add_option("--a", co.a, "start channel");
    corr->add_option("--b", co.b, "stop channel");
    corr->add_option("--bin", co.bin, "bin width, ps");
    corr->add_option("--window", co.window, "max |tau|, ps");
    corr->add_option("--out", co.out, "output histogram file")->required();

    PeaksOpts ko;
    CLI::App* peaks = app.add_subcommand("peaks", "Integrate per-pulse-period peak areas");
    peaks->add_option("--in", ko.in, "input histogram file")->required();
    peaks->add_option("--period", ko.period, "pulse period, ps");
    peaks->add_option("--out", ko.out, "output peak table")->required();

    FitG2Opts go;
    CLI::App* fg2 = app.add_subcommand("fit-g2", "Fit the autocorrelation comb model");
    fg2->add_option("--in", go.in, "input histogram file")->required();
    fg2->add_option("--period", go.period, "pulse period, ps");
    fg2->add_option("--out", go.out, "output fit file")->required();

    FitHomOpts ho;
    CLI::App* fhom = app.add_subcommand("fit-hom", "Fit co/cross interference histograms");
    fhom->add_option("--co", ho.co, "co-polarized histogram")->required();
    fhom->add_option("--cross", ho.cross, "cross-polarized histogram")->required();
    fhom->add_option("--period", ho.period, "pulse period, ps");
    fhom->add_option("--out", ho.out, "output fit file (co fit; cross fit in metadata)")
        ->required();

    FitRabiOpts ro;
    CLI::App* frabi = app.add_subcommand("fit-rabi", "Fit a power-scan intensity oscillation");
    frabi->add_option("--in", ro.in, "CSV of power,intensity[,sigma]")->required();
    frabi->add_option("--out", ro.out, "output fit file")->required();

    FitLifetimeOpts lo;
    CLI::App* flife = app.add_subcommand("fit-lifetime", "Fit a mono-exponential decay tail");
    flife->add_option("--in", lo.in, "decay histogram file")->required();
    flife->add_option("--t-start", lo.t_start, "fit window start, ps")->required();
    flife->add_option("--t-end", lo.t_end, "fit window end, ps")->required();
    flife->add_option("--out", lo.out, "output fit file")->required();

    FitSpectrumOpts eo;
    CLI::App* fspec = app.add_subcommand("fit-spectrum", "Fit a two-Gaussian spectral doublet");
    fspec->add_option("--in", eo.in, "CSV of energy,counts")->required();
    fspec->add_option("--out", eo.out, "output fit file")->required();

    PrepFidelityOpts fo;
    CLI::App* fprep = app.add_subcommand("prep-fidelity", "Preparation fidelity from a cross-correlation histogram");
    fprep->add_option("--in", fo.in, "cross-correlation histogram")->required();
    fprep->add_option("--period", fo.period, "pulse period, ps");
    fprep->add_option("--cpol", fo.cpol, "polarization correction factor")->required();
    fprep->add_option("--out", fo.out, "optional output result file");

    CalibrateCpolOpts cc;
    CLI::App* ccpol = app.add_subcommand("calibrate-cpol", "Calibrate the polarization correction vs DOP");
    ccpol->add_option("--config", cc.config, "experiment config file")->required();
    ccpol->add_option("--out", cc.out, "output fit file")->required();

    HomVisibilityOpts vo;
    CLI::App* hvis = app.add_subcommand("hom-visibility", "Two-photon interference visibility");
    hvis->add_option("--co", vo.co, "co-polarized raw histogram")->required();
    hvis->add_option("--cross", vo.cross, "cross-polarized raw histogram")->required();
    hvis->add_option("--window", vo.window, "integration window, ps");
    hvis->add_option("--period", vo.period, "pulse period, ps");
    hvis->add_option("--far-min", vo.far_min, "first far-peak index for normalization");
    hvis->add_option("--out", vo.out, "optional output result file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 64;
    }

    try {
        if (sim->parsed()) return run_simulate(so);
        if (pscan->parsed()) return run_power_scan(po);
        if (corr->parsed()) return run_correlate(co);
        if (peaks->parsed()) return run_peaks(ko);
        if (fg2->parsed()) return run_fit_g2(go);
        if (fhom->parsed()) return run_fit_hom(ho);
        if (frabi->parsed()) return run_fit_rabi(ro);
        if (flife->parsed()) return run_fit_lifetime(lo);
        if (fspec->parsed()) return run_fit_spectrum(eo);
        if (fprep->parsed()) return run_prep_fidelity(fo);
        if (ccpol->parsed()) return run_calibrate_cpol(cc);
        if (hvis->parsed()) return run_hom_visibility(vo);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int cli_dispatch(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("cascade");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cascade
