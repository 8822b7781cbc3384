#include "cascade/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "seed",
        // emitter
        "t1_x", "t1_xx", "prep_fidelity", "rabi_xi", "rabi_power_to_area", "pulse_area", "dop",
        "tau_on", "tau_off",
        // detection
        "efficiency_a", "efficiency_b", "jitter_fwhm", "dead_time_a", "dead_time_b",
        "dark_rate_a", "dark_rate_b", "polarization_filter",
        // pulse train
        "period", "n_pulses",
        // command options
        "powers", "dops", "bin_width", "max_delay"};
    return keys;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& value, const std::string& origin) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(origin + ": key '" + key + "' has non-numeric value '" + value +
                              "'");
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config '" + path + "'");
    std::ostringstream text;
    text << is.rdbuf();
    return from_string(text.str(), path);
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text,
                                               const std::string& origin) {
    ExperimentConfig cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ValidationError(origin + ":" + std::to_string(line_no) +
                                  ": expected key=value, got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (known_keys().count(key) == 0)
            throw ValidationError(origin + ":" + std::to_string(line_no) +
                                  ": unknown config key '" + key + "'");
        if (cfg.entries_.count(key) != 0)
            throw ValidationError(origin + ":" + std::to_string(line_no) +
                                  ": duplicate config key '" + key + "'");
        cfg.entries_[key] = value;
    }
    return cfg;
}

bool ExperimentConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

double ExperimentConfig::get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return to_double(key, it->second, origin_);
}

std::int64_t ExperimentConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(origin_ + ": key '" + key + "' has non-integer value '" +
                              it->second + "'");
    }
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError(origin_ + ": key '" + key + "' has non-boolean value '" + it->second +
                          "'");
}

std::string ExperimentConfig::get_string(const std::string& key,
                                         const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::vector<double> ExperimentConfig::get_list(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end())
        throw ValidationError(origin_ + ": missing required list key '" + key + "'");
    std::vector<double> out;
    std::string item;
    std::istringstream is(it->second);
    while (std::getline(is, item, ',')) {
        const std::string t = trim(item);
        if (t.empty())
            throw ValidationError(origin_ + ": key '" + key + "' has an empty list entry");
        out.push_back(to_double(key, t, origin_));
    }
    if (out.empty()) throw ValidationError(origin_ + ": key '" + key + "' is an empty list");
    return out;
}

EmitterModel ExperimentConfig::emitter() const {
    const double t1_x = get_double("t1_x", 1210.0);
    const double t1_xx = get_double("t1_xx", 340.0);
    const double dop = get_double("dop", 0.0);
    const double tau_on = get_double("tau_on", 20300.0);
    const double tau_off = get_double("tau_off", 100700.0);
    const bool has_f = has("prep_fidelity");
    const bool has_rabi = has("rabi_xi");
    if (has_f == has_rabi)
        throw ValidationError(origin_ +
                              ": exactly one of prep_fidelity / rabi_xi must be configured");
    if (has_f) {
        EmitterModel emitter(t1_x, t1_xx, get_double("prep_fidelity", 0.0), dop, tau_on, tau_off);
        if (has("pulse_area")) return emitter.with_pulse_area(get_double("pulse_area", 0.0));
        return emitter;
    }
    if (!has("rabi_power_to_area"))
        throw ValidationError(origin_ + ": rabi_xi requires rabi_power_to_area");
    const RabiParams rabi(get_double("rabi_xi", 0.0), get_double("rabi_power_to_area", 0.0));
    EmitterModel emitter(t1_x, t1_xx, rabi, dop, tau_on, tau_off);
    if (has("pulse_area")) return emitter.with_pulse_area(get_double("pulse_area", 0.0));
    return emitter;
}

DetectionChain ExperimentConfig::detection() const {
    return DetectionChain({get_double("efficiency_a", 1.0), get_double("efficiency_b", 1.0)},
                          get_double("jitter_fwhm", 0.0),
                          {get_double("dead_time_a", 50000.0), get_double("dead_time_b", 50000.0)},
                          {get_double("dark_rate_a", 0.0), get_double("dark_rate_b", 0.0)},
                          get_bool("polarization_filter", false));
}

PulseTrain ExperimentConfig::pulses() const {
    if (!has("n_pulses"))
        throw ValidationError(origin_ + ": missing required key 'n_pulses'");
    return PulseTrain(get_int("period", 12500), get_int("n_pulses", 0));
}

std::uint64_t ExperimentConfig::seed() const {
    const std::int64_t v = get_int("seed", 1);
    if (v < 0) throw ValidationError(origin_ + ": seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

}  // namespace cascade
