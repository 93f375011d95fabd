#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

// Richardson-plot fractal values of a band-pass-filtered longitudinal-level
// signal: polyline lengths over divider scales in a sliding 150 m window,
// with three per-band regression slopes (short / mid / long wave).
//
// Unit convention: both axes are taken in millimetres before chord lengths
// are formed, so the wavelength delimiters (given in mm) compare directly
// against lambda = 150/i m converted to mm. Input signals are assumed
// pre-filtered to the 1-70 m band.

namespace railplan {

struct LevelSignal {
    std::vector<double> samples; // vertical deviation, mm
    double spacing = 0.25;       // spatial sample interval, m

    double length_m() const {
        if (samples.size() < 2) return 0.0;
        return static_cast<double>(samples.size() - 1) * spacing;
    }
};

struct FractalTriple {
    double short_wave = 0.0;
    double mid_wave = 0.0;
    double long_wave = 0.0;
    double window_start = 0.0; // m
};

inline constexpr double kWindowLengthM = 150.0;
inline constexpr int kDividerMin = 5;
inline constexpr int kDividerMax = 580;
// section delimiters on the log10(lambda/mm) axis
inline const double kDelimLongMid = std::log10(20000.0 / 4.0);
inline const double kDelimMidShort = std::log10(3000.0 / 4.0);

namespace detail {

inline double interp_level(const LevelSignal& sig, double x_m) {
    const double idx = x_m / sig.spacing;
    const auto i0 = static_cast<std::size_t>(idx);
    if (i0 + 1 >= sig.samples.size()) return sig.samples.back();
    const double f = idx - static_cast<double>(i0);
    return sig.samples[i0] * (1.0 - f) + sig.samples[i0 + 1] * f;
}

} // namespace detail

// Chord-sum length of the window under `divider_count` equal subdivisions,
// in mm. Computed as 150000 + excess so that flat signals come out exact and
// nearby divider counts stay comparable despite the tiny vertical scale.
inline double polyline_length(const LevelSignal& signal, double window_start_m, int divider_count) {
    if (!(signal.spacing > 0.0)) throw std::invalid_argument("polyline_length: spacing must be > 0");
    if (divider_count < kDividerMin || divider_count > kDividerMax)
        throw std::invalid_argument("polyline_length: divider count outside [5, 580]");
    if (window_start_m < 0.0 || window_start_m + kWindowLengthM > signal.length_m() + 1e-9)
        throw std::invalid_argument("polyline_length: window does not cover 150 m of signal");

    const double dx_mm = kWindowLengthM * 1000.0 / divider_count;
    double excess = 0.0;
    double y_prev = detail::interp_level(signal, window_start_m);
    for (int j = 1; j <= divider_count; ++j) {
        const double x = window_start_m + static_cast<double>(j) * kWindowLengthM / divider_count;
        const double y = detail::interp_level(signal, x);
        const double dy = y - y_prev;
        excess += dy * dy / (std::hypot(dx_mm, dy) + dx_mm);
        y_prev = y;
    }
    return kWindowLengthM * 1000.0 + excess;
}

namespace detail {

inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    // shift by the first point so a constant input yields an exact zero
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] - x[0];
        my += y[i] - y[0];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = (x[i] - x[0]) - mx;
        const double dy = (y[i] - y[0]) - my;
        sxy += dx * dy;
        sxx += dx * dx;
    }
    return sxy / sxx;
}

} // namespace detail

// OLS slopes of log10(L) against log10(lambda) over the three wavelength
// sections. `lengths` maps the divider count i to L(lambda = 150/i), with
// lambda measured in mm on the regression axis.
inline FractalTriple richardson_slopes(const std::map<int, double>& lengths) {
    if (lengths.empty()) throw std::invalid_argument("richardson_slopes: empty length table");
    std::vector<double> x_long, y_long, x_mid, y_mid, x_short, y_short;
    for (const auto& [i, len] : lengths) {
        if (!(len > 0.0)) throw std::invalid_argument("richardson_slopes: lengths must be > 0");
        const double lambda_mm = kWindowLengthM * 1000.0 / i;
        const double lx = std::log10(lambda_mm);
        const double ly = std::log10(len);
        if (lx >= kDelimLongMid) {
            x_long.push_back(lx);
            y_long.push_back(ly);
        } else if (lx >= kDelimMidShort) {
            x_mid.push_back(lx);
            y_mid.push_back(ly);
        } else {
            x_short.push_back(lx);
            y_short.push_back(ly);
        }
    }
    auto require = [](const std::vector<double>& v, const char* name) {
        if (v.size() < 2)
            throw std::invalid_argument(std::string("richardson_slopes: section '") + name +
                                        "' has fewer than 2 points");
    };
    require(x_long, "long");
    require(x_mid, "mid");
    require(x_short, "short");
    FractalTriple out;
    out.long_wave = detail::ols_slope(x_long, y_long);
    out.mid_wave = detail::ols_slope(x_mid, y_mid);
    out.short_wave = detail::ols_slope(x_short, y_short);
    return out;
}

inline FractalTriple window_fractal(const LevelSignal& signal, double window_start_m) {
    std::map<int, double> lengths;
    for (int i = kDividerMin; i <= kDividerMax; ++i)
        lengths[i] = polyline_length(signal, window_start_m, i);
    FractalTriple t = richardson_slopes(lengths);
    t.window_start = window_start_m;
    return t;
}

// One triple per 150 m window, windows shifted by 1 m.
inline std::vector<FractalTriple> sliding_fractal(const LevelSignal& signal) {
    const double len = signal.length_m();
    if (len + 1e-9 < kWindowLengthM)
        throw std::invalid_argument("sliding_fractal: signal shorter than 150 m");
    const int n_windows = static_cast<int>(std::floor((len - kWindowLengthM) + 1e-9)) + 1;
    std::vector<FractalTriple> out;
    out.reserve(static_cast<std::size_t>(n_windows));
    for (int w = 0; w < n_windows; ++w) out.push_back(window_fractal(signal, static_cast<double>(w)));
    return out;
}

// mean of the long-wave values per consecutive 150 m track segment, the
// aggregation the downstream pipeline consumes
inline std::vector<double> aggregate_long_wave(const std::vector<FractalTriple>& triples,
                                               double segment_m = 150.0) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < triples.size()) {
        const double seg_start = triples[i].window_start;
        double sum = 0.0;
        int n = 0;
        while (i < triples.size() && triples[i].window_start < seg_start + segment_m) {
            sum += triples[i].long_wave;
            ++n;
            ++i;
        }
        out.push_back(sum / n);
    }
    return out;
}

// moving-average detrend helper for synthetic test signals; real inputs are
// expected band-pass filtered upstream
inline LevelSignal detrend_moving_average(const LevelSignal& sig, double window_m) {
    const int half = static_cast<int>(std::round(0.5 * window_m / sig.spacing));
    LevelSignal out = sig;
    const auto n = static_cast<int>(sig.samples.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        double mean = 0.0;
        for (int j = lo; j <= hi; ++j) mean += sig.samples[j];
        mean /= static_cast<double>(hi - lo + 1);
        out.samples[i] = sig.samples[i] - mean;
    }
    return out;
}

} // namespace railplan
