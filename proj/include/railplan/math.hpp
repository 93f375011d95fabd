#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

// Scalar special functions backing the probability kernels. Continued
// fraction / series forms follow the classical formulations (Lentz's method
// for the incomplete beta and gamma fractions).

namespace railplan {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace detail {

// continued fraction for the regularized incomplete beta, modified Lentz
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= eps) return h;
    }
    return h; // converged enough for our tolerances
}

} // namespace detail

// regularized incomplete beta I_x(a, b)
inline double betainc(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("betainc: a,b must be > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lnbt = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
    const double bt = std::exp(lnbt);
    if (x < (a + 1.0) / (a + b + 2.0))
        return bt * detail::betacf(a, b, x) / a;
    return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

// regularized lower incomplete gamma P(a, x)
inline double gammainc_lower(double a, double x) {
    if (!(a > 0.0)) throw std::invalid_argument("gammainc: a must be > 0");
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) {
        // series
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    // continued fraction for Q, then P = 1 - Q
    constexpr double fpmin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= 3e-16) break;
    }
    const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    return 1.0 - q;
}

inline double gammainc_upper(double a, double x) { return 1.0 - gammainc_lower(a, x); }

// survival function of the chi-square distribution with k dof
inline double chi2_sf(double x, double k) { return gammainc_upper(0.5 * k, 0.5 * x); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

inline double normal_logpdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - 0.5 * std::log(2.0 * M_PI) - std::log(sigma);
}

// Inverse standard normal CDF: Acklam's rational approximation polished by a
// Halley step against erfc, accurate to ~1e-15 over (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -kInf;
        if (p == 1.0) return kInf;
        throw std::invalid_argument("normal_quantile: p outside [0,1]");
    }
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // one Halley refinement
    const double e = 0.5 * std::erfc(-x * M_SQRT1_2) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

// CDF of the standardized Student's t with nu dof
inline double student_t_cdf(double x, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("student_t_cdf: nu must be > 0");
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    if (x == 0.0) return 0.5;
    const double z = nu / (nu + x * x);
    const double tail = 0.5 * betainc(0.5 * nu, 0.5, z);
    return x < 0.0 ? tail : 1.0 - tail;
}

// log-density of the standardized Student's t
inline double student_t_logpdf_std(double t, double nu) {
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
           0.5 * std::log(nu * M_PI) - 0.5 * (nu + 1.0) * std::log1p(t * t / nu);
}

// Quantile of the standardized Student's t: bracketed bisection on the CDF
// followed by Newton polishing. Handles tail probabilities down to the
// smallest normal doubles, which extreme truncation needs.
inline double student_t_quantile(double p, double nu) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("student_t_quantile: p outside [0,1]");
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    if (p == 0.5) return 0.0;
    const bool flip = p > 0.5;
    const double pl = flip ? 1.0 - p : p; // work in the lower tail
    // bracket [lo, hi] with F(lo) <= pl <= F(hi)
    double hi = 0.0;
    double lo = -1.0;
    while (student_t_cdf(lo, nu) > pl) {
        hi = lo;
        lo *= 8.0;
        if (lo < -1e290) break;
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (student_t_cdf(mid, nu) < pl)
            lo = mid;
        else
            hi = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 3; ++i) {
        const double f = student_t_cdf(x, nu) - pl;
        const double dens = std::exp(student_t_logpdf_std(x, nu));
        if (dens <= 0.0) break;
        const double step = f / dens;
        const double xn = x - step;
        if (xn <= lo || xn >= hi) break;
        x = xn;
    }
    return flip ? -x : x;
}

inline double gamma_logpdf(double x, double shape, double rate) {
    if (x <= 0.0) return -kInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double beta_logpdf(double x, double a, double b) {
    if (x <= 0.0 || x >= 1.0) return -kInf;
    return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b);
}

inline double logsumexp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

} // namespace railplan
