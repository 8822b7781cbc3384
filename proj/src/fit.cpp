#include "cascade/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDefaultStep = 6.0554544523933429e-6;  // cbrt(machine eps)

// chi^2 of parameter vector q; NaN if the model produced NaN anywhere.
double eval_chi2(const CurveModel& model, std::span<const DataPoint> data,
                 std::span<const double> q, std::vector<double>& resid) {
    resid.resize(data.size());
    double chi2 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double f = model.eval(data[i].x, q);
        if (std::isnan(f)) return kNaN;
        const double r = (data[i].y - f) / data[i].sigma;
        resid[i] = r;
        chi2 += r * r;
    }
    return chi2;
}

// Solve A x = b (k x k, row-major) in place by Gaussian elimination with
// partial pivoting. Returns false on a singular pivot.
bool solve_linear(std::vector<double> a, std::vector<double> b, std::size_t k,
                  std::vector<double>& x) {
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a[col * k + col]);
        for (std::size_t row = col + 1; row < k; ++row) {
            const double v = std::fabs(a[row * k + col]);
            if (v > best) {
                best = v;
                piv = row;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best)) return false;
        if (piv != col) {
            for (std::size_t j = 0; j < k; ++j) std::swap(a[col * k + j], a[piv * k + j]);
            std::swap(b[col], b[piv]);
        }
        const double d = a[col * k + col];
        for (std::size_t row = col + 1; row < k; ++row) {
            const double f = a[row * k + col] / d;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < k; ++j) a[row * k + j] -= f * a[col * k + j];
            b[row] -= f * b[col];
        }
    }
    x.assign(k, 0.0);
    for (std::size_t row = k; row-- > 0;) {
        double s = b[row];
        for (std::size_t j = row + 1; j < k; ++j) s -= a[row * k + j] * x[j];
        x[row] = s / a[row * k + row];
    }
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

// Invert a symmetric positive matrix by Gauss-Jordan; false on singularity.
bool invert(std::vector<double> a, std::size_t k, std::vector<double>& inv) {
    inv.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) inv[i * k + i] = 1.0;
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a[col * k + col]);
        for (std::size_t row = col + 1; row < k; ++row) {
            const double v = std::fabs(a[row * k + col]);
            if (v > best) {
                best = v;
                piv = row;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best)) return false;
        if (piv != col)
            for (std::size_t j = 0; j < k; ++j) {
                std::swap(a[col * k + j], a[piv * k + j]);
                std::swap(inv[col * k + j], inv[piv * k + j]);
            }
        const double d = a[col * k + col];
        for (std::size_t j = 0; j < k; ++j) {
            a[col * k + j] /= d;
            inv[col * k + j] /= d;
        }
        for (std::size_t row = 0; row < k; ++row) {
            if (row == col) continue;
            const double f = a[row * k + col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < k; ++j) {
                a[row * k + j] -= f * a[col * k + j];
                inv[row * k + j] -= f * inv[col * k + j];
            }
        }
    }
    return true;
}

// Weighted Jacobian J_ij = (df(x_i)/dp_j) / sigma_i by central differences,
// probes clamped into the box. NaN probes zero the column.
void jacobian(const CurveModel& model, std::span<const DataPoint> data, std::span<const double> p,
              std::span<const double> lo, std::span<const double> hi,
              std::span<const double> scale, std::vector<double>& jac) {
    const std::size_t n = data.size();
    const std::size_t k = p.size();
    jac.assign(n * k, 0.0);
    std::vector<double> q(p.begin(), p.end());
    for (std::size_t j = 0; j < k; ++j) {
        const double h = kDefaultStep * scale[j];
        const double hp = std::min(h, hi[j] - p[j]);
        const double hm = std::min(h, p[j] - lo[j]);
        const double denom = hp + hm;
        if (!(denom > 0.0)) continue;
        bool bad = false;
        q[j] = p[j] + hp;
        std::vector<double> fp(n);
        for (std::size_t i = 0; i < n; ++i) {
            fp[i] = model.eval(data[i].x, q);
            if (std::isnan(fp[i])) {
                bad = true;
                break;
            }
        }
        if (!bad) {
            q[j] = p[j] - hm;
            for (std::size_t i = 0; i < n; ++i) {
                const double fm = model.eval(data[i].x, q);
                if (std::isnan(fm)) {
                    bad = true;
                    break;
                }
                jac[i * k + j] = (fp[i] - fm) / (denom * data[i].sigma);
            }
        }
        if (bad)
            for (std::size_t i = 0; i < n; ++i) jac[i * k + j] = 0.0;
        q[j] = p[j];
    }
}

}  // namespace

std::vector<double> model_gradient(const CurveModel& model, double x, std::span<const double> p,
                                   double rel_step) {
    std::vector<double> grad(p.size(), 0.0);
    std::vector<double> q(p.begin(), p.end());
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double h = rel_step * (std::fabs(p[j]) + 1.0);
        q[j] = p[j] + h;
        const double fp = model.eval(x, q);
        q[j] = p[j] - h;
        const double fm = model.eval(x, q);
        q[j] = p[j];
        grad[j] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

FitResult nlls_fit(const CurveModel& model, std::span<const DataPoint> data,
                   const std::map<std::string, double>& init, const Bounds& bounds,
                   const FitOptions& opts) {
    const std::size_t k = model.params.size();
    if (k == 0) throw ValidationError("nlls_fit: model " + model.name + " has no parameters");
    if (!model.eval) throw ValidationError("nlls_fit: model " + model.name + " has no eval");
    if (data.size() < k)
        throw FitError("nlls_fit: " + std::to_string(data.size()) + " points cannot constrain " +
                       std::to_string(k) + " parameters of " + model.name);

    for (std::size_t i = 0; i < data.size(); ++i) {
        const DataPoint& d = data[i];
        if (!std::isfinite(d.x) || !std::isfinite(d.y))
            throw ValidationError("nlls_fit: non-finite data at point " + std::to_string(i));
        if (!(d.sigma > 0.0) || !std::isfinite(d.sigma))
            throw ValidationError("nlls_fit: sigma must be > 0 at point " + std::to_string(i));
    }

    for (const auto& [name, v] : init)
        if (std::find(model.params.begin(), model.params.end(), name) == model.params.end())
            throw ValidationError("nlls_fit: initial value for unknown parameter " + name);
    for (const auto& [name, b] : bounds)
        if (std::find(model.params.begin(), model.params.end(), name) == model.params.end())
            throw ValidationError("nlls_fit: bounds for unknown parameter " + name);

    std::vector<double> p(k), lo(k, -kInf), hi(k, kInf), scale(k);
    for (std::size_t j = 0; j < k; ++j) {
        const std::string& name = model.params[j];
        auto it = init.find(name);
        if (it == init.end())
            throw ValidationError("nlls_fit: missing initial value for parameter " + name);
        if (!std::isfinite(it->second))
            throw ValidationError("nlls_fit: non-finite initial value for parameter " + name);
        p[j] = it->second;
        auto bit = bounds.find(name);
        if (bit != bounds.end()) {
            lo[j] = bit->second.first;
            hi[j] = bit->second.second;
            if (!(lo[j] <= hi[j]))
                throw ValidationError("nlls_fit: empty bounds for parameter " + name);
            if (p[j] < lo[j] || p[j] > hi[j])
                throw ValidationError("nlls_fit: initial value for " + name + " outside bounds");
        }
        scale[j] = std::fabs(p[j]) + 1.0;
    }

    std::vector<double> resid, trial_resid, jac, delta;
    double chi2 = eval_chi2(model, data, p, resid);
    if (std::isnan(chi2))
        throw ModelDomainError("nlls_fit: model " + model.name +
                               " returned NaN at the starting point");

    double lambda = opts.lambda0;
    bool converged = false;
    int iter = 0;
    while (iter < opts.max_iter && !converged) {
        ++iter;
        jacobian(model, data, p, lo, hi, scale, jac);

        // normal equations A delta = g
        std::vector<double> a(k * k, 0.0), g(k, 0.0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (std::size_t r = 0; r < k; ++r) {
                const double jr = jac[i * k + r];
                if (jr == 0.0) continue;
                g[r] += jr * resid[i];
                for (std::size_t c = r; c < k; ++c) a[r * k + c] += jr * jac[i * k + c];
            }
        }
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < r; ++c) a[r * k + c] = a[c * k + r];

        bool stepped = false;
        while (lambda <= 1e14) {
            std::vector<double> damped = a;
            for (std::size_t j = 0; j < k; ++j) {
                const double d = a[j * k + j];
                damped[j * k + j] = d > 0.0 ? d * (1.0 + lambda) : lambda;
            }
            if (!solve_linear(damped, g, k, delta)) {
                lambda *= 10.0;
                continue;
            }
            std::vector<double> q(k);
            for (std::size_t j = 0; j < k; ++j)
                q[j] = std::clamp(p[j] + delta[j], lo[j], hi[j]);
            const double trial = eval_chi2(model, data, q, trial_resid);
            if (!std::isnan(trial) && trial <= chi2) {
                double max_step = 0.0;
                for (std::size_t j = 0; j < k; ++j)
                    max_step = std::max(max_step, std::fabs(q[j] - p[j]) / scale[j]);
                const double drop = chi2 - trial;
                p = q;
                resid = trial_resid;
                chi2 = trial;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (drop <= opts.ftol * std::max(chi2, 1e-300) || max_step <= opts.xtol)
                    converged = true;
                break;
            }
            lambda *= 8.0;
        }
        if (!stepped) break;  // damping exhausted: singular or no descent
    }

    FitResult out;
    out.converged = converged;
    out.n_iter = iter;
    out.residual_norm = std::sqrt(chi2);
    for (std::size_t j = 0; j < k; ++j) out.params[model.params[j]] = p[j];

    jacobian(model, data, p, lo, hi, scale, jac);
    std::vector<double> a(k * k, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t r = 0; r < k; ++r) {
            const double jr = jac[i * k + r];
            if (jr == 0.0) continue;
            for (std::size_t c = r; c < k; ++c) a[r * k + c] += jr * jac[i * k + c];
        }
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < r; ++c) a[r * k + c] = a[c * k + r];

    const double chi2_red = data.size() > k ? chi2 / static_cast<double>(data.size() - k) : 1.0;
    std::vector<double> cov;
    if (invert(a, k, cov)) {
        for (std::size_t j = 0; j < k; ++j)
            out.stderrs[model.params[j]] =
                std::sqrt(std::max(cov[j * k + j], 0.0) * chi2_red);
    } else {
        for (std::size_t j = 0; j < k; ++j) out.stderrs[model.params[j]] = kInf;
    }
    return out;
}

}  // namespace cascade
