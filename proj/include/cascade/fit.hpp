#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cascade/types.hpp"

namespace cascade {

struct DataPoint {
    double x = 0.0;
    double y = 0.0;
    double sigma = 1.0;
};

// A named model y = f(x; p) with an ordered parameter list. eval must be
// defined wherever the fitter probes it; NaN at the starting point is a
// model-domain error.
struct CurveModel {
    std::string name;
    std::vector<std::string> params;
    std::function<double(double, std::span<const double>)> eval;
};

struct FitOptions {
    int max_iter = 300;
    double ftol = 1e-12;   // relative chi^2 decrease
    double xtol = 1e-11;   // relative step size
    double lambda0 = 1e-3;
};

// Per-parameter box constraints; parameters absent from the map are free.
using Bounds = std::map<std::string, std::pair<double, double>>;

// Levenberg-Marquardt with a central-difference numeric Jacobian and
// chi^2-scaled covariance standard errors. Non-convergence returns the best
// point with converged == false; singular normal equations do the same.
FitResult nlls_fit(const CurveModel& model, std::span<const DataPoint> data,
                   const std::map<std::string, double>& init, const Bounds& bounds = {},
                   const FitOptions& opts = {});

// d f(x; p) / d p_j by central differences, the same rule the fitter uses;
// rel_step scales the probe (default matches the fitter). Exposed so the
// differentiation can be cross-checked at independent step sizes.
std::vector<double> model_gradient(const CurveModel& model, double x, std::span<const double> p,
                                   double rel_step = 6.0554544523933429e-6);

}  // namespace cascade
