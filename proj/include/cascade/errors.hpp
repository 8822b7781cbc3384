#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

// Contract violation at a type or function boundary; message names the field.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Unparseable or structurally wrong file content (bad magic, bad header, bad row).
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed file whose payload breaks an invariant (e.g. unsorted tags);
// message carries the first offending record.
class IntegrityError : public std::runtime_error {
  public:
    explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

// Model evaluated outside its domain (NaN output, xi >= 2, m <= 0, ...).
class ModelDomainError : public std::runtime_error {
  public:
    explicit ModelDomainError(const std::string& what) : std::runtime_error(what) {}
};

// Fit could not be set up (too few points, missing initial value, bad sigma).
// Non-convergence of a well-posed fit is NOT an exception; it comes back as
// FitResult::converged == false.
class FitError : public std::runtime_error {
  public:
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

// Analysis pipeline failure on otherwise valid inputs: empty far peaks during
// normalization, zero center peak (undefined fidelity), calibration statistics
// too poor to trust.
class AnalysisError : public std::runtime_error {
  public:
    explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cascade
