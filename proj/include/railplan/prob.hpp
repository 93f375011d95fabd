#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "railplan/math.hpp"
#include "railplan/rng.hpp"

// Probability kernels shared by the simulator, the posterior sampler and the
// evaluation harness. All distribution objects are immutable value types;
// every sampler takes an explicit Rng stream.

namespace railplan {

// ---------------------------------------------------------------------------
// elementary samplers

inline double normal_sample(Rng& rng) { return normal_quantile(rng.uniform()); }

inline double normal_sample(double mu, double sigma, Rng& rng) {
    return mu + sigma * normal_sample(rng);
}

// Marsaglia-Tsang; shape < 1 handled by the usual boost draw
inline double gamma_sample(double shape, double rate, Rng& rng) {
    if (!(shape > 0.0) || !(rate > 0.0))
        throw std::invalid_argument("gamma_sample: shape and rate must be > 0");
    if (shape < 1.0) {
        const double u = rng.uniform();
        return gamma_sample(shape + 1.0, rate, rng) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal_sample(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

inline double beta_sample(double a, double b, Rng& rng) {
    const double x = gamma_sample(a, 1.0, rng);
    const double y = gamma_sample(b, 1.0, rng);
    return x / (x + y);
}

inline double chi2_sample(double nu, Rng& rng) { return gamma_sample(0.5 * nu, 0.5, rng); }

inline double student_t_sample_std(double nu, Rng& rng) {
    const double z = normal_sample(rng);
    return z / std::sqrt(chi2_sample(nu, rng) / nu);
}

// ---------------------------------------------------------------------------
// Dirichlet

struct DirichletParams {
    std::vector<double> alpha;
};

inline std::vector<double> sample_dirichlet(const DirichletParams& params, Rng& rng) {
    if (params.alpha.empty()) throw std::invalid_argument("sample_dirichlet: empty alpha");
    for (double a : params.alpha)
        if (!(a > 0.0)) throw std::invalid_argument("sample_dirichlet: alpha entries must be > 0");
    std::vector<double> out(params.alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = gamma_sample(params.alpha[i], 1.0, rng);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

// ---------------------------------------------------------------------------
// truncated Normal

inline double trunc_normal_mass(double mu, double sigma, double lb, double ub) {
    return normal_cdf((ub - mu) / sigma) - normal_cdf((lb - mu) / sigma);
}

inline double trunc_normal_logpdf(double x, double mu, double sigma, double lb, double ub) {
    if (!(sigma > 0.0)) throw std::invalid_argument("trunc_normal_logpdf: sigma must be > 0");
    if (x < lb || x > ub) return -kInf;
    const double mass = trunc_normal_mass(mu, sigma, lb, ub);
    if (!(mass > 0.0)) return -kInf;
    return normal_logpdf(x, mu, sigma) - std::log(mass);
}

inline double trunc_normal_sample(double mu, double sigma, double lb, double ub, Rng& rng) {
    if (!(sigma > 0.0) || !(lb < ub))
        throw std::invalid_argument("trunc_normal_sample: invalid parameters");
    const double flo = normal_cdf((lb - mu) / sigma);
    const double fhi = normal_cdf((ub - mu) / sigma);
    const double mass = fhi - flo;
    if (!(mass > 1e-300)) throw std::runtime_error("trunc_normal_sample: degenerate truncation");
    if (mass > 0.1) {
        for (;;) {
            const double x = normal_sample(mu, sigma, rng);
            if (x >= lb && x <= ub) return x;
        }
    }
    const double u = flo + rng.uniform() * mass;
    double x = mu + sigma * normal_quantile(u);
    return std::clamp(x, lb, ub);
}

// ---------------------------------------------------------------------------
// truncated Student's t

struct TruncStudentT {
    double mu = 0.0;
    double sigma = 1.0;
    double nu = 1.0;
    double lb = -kInf;
    double ub = kInf;

    void check() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("TruncStudentT: sigma must be > 0");
        if (!(nu > 0.0)) throw std::invalid_argument("TruncStudentT: nu must be > 0");
        if (!(lb < ub)) throw std::invalid_argument("TruncStudentT: lb must be < ub");
    }
};

// probability mass of the base t on the truncation interval
inline double trunc_t_mass(const TruncStudentT& d) {
    const double fhi = d.ub == kInf ? 1.0 : student_t_cdf((d.ub - d.mu) / d.sigma, d.nu);
    const double flo = d.lb == -kInf ? 0.0 : student_t_cdf((d.lb - d.mu) / d.sigma, d.nu);
    return fhi - flo;
}

inline double trunc_t_logpdf(double x, const TruncStudentT& d) {
    d.check();
    if (x < d.lb || x > d.ub) return -kInf;
    const double mass = trunc_t_mass(d);
    if (!(mass > 0.0)) return -kInf;
    const double t = (x - d.mu) / d.sigma;
    return student_t_logpdf_std(t, d.nu) - std::log(d.sigma) - std::log(mass);
}

inline double trunc_t_cdf(double x, const TruncStudentT& d) {
    d.check();
    if (x <= d.lb) return 0.0;
    if (x >= d.ub) return 1.0;
    const double mass = trunc_t_mass(d);
    const double flo = d.lb == -kInf ? 0.0 : student_t_cdf((d.lb - d.mu) / d.sigma, d.nu);
    return (student_t_cdf((x - d.mu) / d.sigma, d.nu) - flo) / mass;
}

// Inverse-CDF draw rescaled to the truncation interval; plain rejection on
// the base t when the interval holds enough mass for it to be cheap.
inline double trunc_t_sample(const TruncStudentT& d, Rng& rng) {
    d.check();
    const double fhi = d.ub == kInf ? 1.0 : student_t_cdf((d.ub - d.mu) / d.sigma, d.nu);
    const double flo = d.lb == -kInf ? 0.0 : student_t_cdf((d.lb - d.mu) / d.sigma, d.nu);
    const double mass = fhi - flo;
    if (!(mass > 1e-300)) throw std::runtime_error("trunc_t_sample: degenerate truncation");
    if (mass > 0.1) {
        for (;;) {
            const double x = d.mu + d.sigma * student_t_sample_std(d.nu, rng);
            if (x >= d.lb && x <= d.ub) return x;
        }
    }
    const double u = flo + rng.uniform() * mass;
    const double x = d.mu + d.sigma * student_t_quantile(u, d.nu);
    return std::clamp(x, d.lb, d.ub);
}

// ---------------------------------------------------------------------------
// summary statistics

struct SummaryStats {
    double mean = 0.0;
    double se = 0.0;
    double hdi_lo = 0.0;
    double hdi_hi = 0.0;
    double mass = 0.95;
};

// Minimal-width contiguous window over the sorted samples containing
// ceil(mass*n) points. Assumes a unimodal sample cloud, which is how the
// interval is reported in practice.
inline std::pair<double, double> hdi(std::span<const double> samples, double mass) {
    if (samples.size() < 2) throw std::invalid_argument("hdi: need at least 2 samples");
    if (!(mass > 0.0 && mass <= 1.0)) throw std::invalid_argument("hdi: mass must be in (0,1]");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::size_t k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 2, n);
    double best_lo = sorted[0], best_hi = sorted[k - 1];
    double best_w = best_hi - best_lo;
    for (std::size_t i = 1; i + k <= n; ++i) {
        const double w = sorted[i + k - 1] - sorted[i];
        if (w < best_w) {
            best_w = w;
            best_lo = sorted[i];
            best_hi = sorted[i + k - 1];
        }
    }
    return {best_lo, best_hi};
}

inline std::pair<double, double> equal_tailed(std::span<const double> samples, double mass) {
    if (samples.size() < 2) throw std::invalid_argument("equal_tailed: need at least 2 samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double tail = 0.5 * (1.0 - mass);
    auto q = [&](double p) {
        const double idx = p * static_cast<double>(sorted.size() - 1);
        const std::size_t i = static_cast<std::size_t>(idx);
        if (i + 1 >= sorted.size()) return sorted.back();
        const double f = idx - static_cast<double>(i);
        return sorted[i] * (1.0 - f) + sorted[i + 1] * f;
    };
    return {q(tail), q(1.0 - tail)};
}

inline SummaryStats summarize(std::span<const double> samples, double mass = 0.95) {
    if (samples.empty()) throw std::invalid_argument("summarize: empty input");
    double m = 0.0;
    for (double v : samples) m += v;
    m /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (double v : samples) ss += (v - m) * (v - m);
    const double n = static_cast<double>(samples.size());
    const double sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    SummaryStats out;
    out.mean = m;
    out.se = sd / std::sqrt(n);
    out.mass = mass;
    if (samples.size() >= 2) {
        auto [lo, hi] = hdi(samples, mass);
        out.hdi_lo = lo;
        out.hdi_hi = hi;
    } else {
        out.hdi_lo = out.hdi_hi = m;
    }
    return out;
}

} // namespace railplan
