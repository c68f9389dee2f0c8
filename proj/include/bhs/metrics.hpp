#pragma once

#include "errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace bhs {

struct TimeWindow {
    double t0{0.0};
    double t1{0.0};
};

struct SeriesMetrics {
    double rms{0.0};
    double max_abs_dev{0.0};
    double revival_amplitude{0.0}; // max |a| over the revival window
    double dominant_frequency{0.0}; // angular, of a over the comparison window
};

namespace detail {

inline void check_series(std::span<const double> times, std::span<const double> a) {
    if (times.size() != a.size()) throw ParameterError("metrics: series and time grid differ in length");
    if (times.size() < 2) throw ParameterError("metrics: need at least two samples");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw ParameterError("metrics: time grid must be strictly increasing");
}

// Index range [first, last) of samples inside the window.
inline std::pair<std::size_t, std::size_t> window_range(std::span<const double> times, TimeWindow w) {
    const double slack = 1e-9 * std::max(1.0, std::abs(times.back() - times.front()));
    if (!(w.t1 > w.t0) || w.t0 < times.front() - slack || w.t1 > times.back() + slack)
        throw DomainError("metrics: window [" + std::to_string(w.t0) + ", " + std::to_string(w.t1) +
                          "] is outside the time grid [" + std::to_string(times.front()) + ", " +
                          std::to_string(times.back()) + "]");
    const auto first = std::lower_bound(times.begin(), times.end(), w.t0 - slack) - times.begin();
    const auto last = std::upper_bound(times.begin(), times.end(), w.t1 + slack) - times.begin();
    if (last - first < 2) throw DomainError("metrics: window holds fewer than two samples");
    return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

inline double rms_deviation(std::span<const double> times, std::span<const double> a, std::span<const double> b,
                            TimeWindow w) {
    detail::check_series(times, a);
    detail::check_series(times, b);
    const auto [first, last] = detail::window_range(times, w);
    double s = 0.0;
    for (std::size_t i = first; i < last; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(last - first));
}

inline double max_abs_deviation(std::span<const double> times, std::span<const double> a,
                                std::span<const double> b, TimeWindow w) {
    detail::check_series(times, a);
    detail::check_series(times, b);
    const auto [first, last] = detail::window_range(times, w);
    double m = 0.0;
    for (std::size_t i = first; i < last; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double revival_amplitude(std::span<const double> times, std::span<const double> a, TimeWindow w) {
    detail::check_series(times, a);
    const auto [first, last] = detail::window_range(times, w);
    double m = 0.0;
    for (std::size_t i = first; i < last; ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

// Angular frequency of the largest peak of the mean-removed, zero-padded spectrum.
// The grid must be uniform inside the window.
inline double dominant_frequency(std::span<const double> times, std::span<const double> a, TimeWindow w,
                                 std::size_t padding = 16) {
    detail::check_series(times, a);
    const auto [first, last] = detail::window_range(times, w);
    const std::size_t n = last - first;
    const double dt = (times[last - 1] - times[first]) / static_cast<double>(n - 1);
    for (std::size_t i = first + 1; i < last; ++i)
        if (std::abs(times[i] - times[i - 1] - dt) > 1e-6 * dt)
            throw ParameterError("dominant_frequency: time grid is not uniform");

    std::size_t m = 1;
    while (m < n * std::max<std::size_t>(padding, 1)) m <<= 1;
    std::vector<double> in(m, 0.0);
    double mean = 0.0;
    for (std::size_t i = first; i < last; ++i) mean += a[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = a[first + i] - mean;

    std::vector<fftw_complex> out(m / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(m), in.data(), out.data(), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }

    std::vector<double> power(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const auto peak = static_cast<std::size_t>(std::max_element(power.begin() + 1, power.end()) - power.begin());
    double shift = 0.0;
    if (peak + 1 < power.size()) {
        // parabolic refinement on log power
        const double l = std::log(power[peak - 1] + 1e-300), c = std::log(power[peak]),
                     r = std::log(power[peak + 1] + 1e-300);
        const double den = l - 2.0 * c + r;
        if (den < 0.0) shift = 0.5 * (l - r) / den;
    }
    return 2.0 * std::numbers::pi * (static_cast<double>(peak) + shift) / (static_cast<double>(m) * dt);
}

// Comparison of a (approximate) against b (reference) on a shared grid.
inline SeriesMetrics compare_metrics(std::span<const double> times, std::span<const double> a,
                                     std::span<const double> b, TimeWindow window, TimeWindow revival) {
    SeriesMetrics m;
    m.rms = rms_deviation(times, a, b, window);
    m.max_abs_dev = max_abs_deviation(times, a, b, window);
    m.revival_amplitude = revival_amplitude(times, a, revival);
    m.dominant_frequency = dominant_frequency(times, a, window);
    return m;
}

} // namespace bhs
