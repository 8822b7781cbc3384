#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cascade/types.hpp"

namespace cascade {

// Flat key=value experiment description ('#' comments, blank lines ignored).
// Unknown keys are rejected, naming the key. Typed getters fall back to the
// documented defaults; emitter()/detection()/pulses() assemble the domain
// objects, validating required keys.
class ExperimentConfig {
  public:
    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<double> get_list(const std::string& key) const;  // comma-separated reals

    EmitterModel emitter() const;      // needs exactly one of prep_fidelity / rabi_xi
    DetectionChain detection() const;
    PulseTrain pulses() const;
    std::uint64_t seed() const;        // key "seed", default 1

    const std::map<std::string, std::string>& entries() const { return entries_; }

  private:
    std::map<std::string, std::string> entries_;
    std::string origin_;
};

}  // namespace cascade
