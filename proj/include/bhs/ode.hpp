// ode.hpp: adaptive Dormand-Prince 5(4) integrator for fixed-size state vectors.
//
// Steps land exactly on every requested output time (no dense interpolation), so
// stored samples carry the full local accuracy of the method.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace bhs::ode {

struct IntegratorOptions {
    double rtol{1e-10};
    double atol{1e-10};
    double initial_step{0.0}; // 0: automatic
    double max_step{std::numeric_limits<double>::infinity()};
    double min_step{1e-13};
    long max_steps{100'000'000};
};

enum class Status {
    completed,     // reached the last output time
    escaped,       // the right-hand side refused a state (left the physical domain)
    stopped,       // the observer asked to stop
    step_underflow,
    step_limit,
};

struct Outcome {
    Status status{Status::completed};
    double last_time{0.0};     // last time at which the state was valid
    std::size_t samples{0};    // output samples delivered to the observer
    long steps{0};
    long rejected{0};
};

// Rhs: bool(double t, const Vec& y, Vec& dydt): false when y is outside the domain.
// Observer: bool(std::size_t index, double t, const Vec& y): false stops integration.
// y is updated in place to the last valid state.
template <int N, class Rhs, class Observer>
Outcome integrate(Rhs&& rhs, Eigen::Matrix<double, N, 1>& y, std::span<const double> times,
                  const IntegratorOptions& opt, Observer&& observe) {
    using Vec = Eigen::Matrix<double, N, 1>;
    Outcome out;
    if (times.empty()) return out;

    // Dormand & Prince (1980) tableau, 5th-order solution with embedded 4th order.
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                     a76 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;

    double t = times[0];
    out.last_time = t;
    Vec k1, k2, k3, k4, k5, k6, k7, ytmp, ynew, err;

    if (!rhs(t, y, k1)) {
        out.status = Status::escaped;
        return out;
    }
    if (!observe(std::size_t{0}, t, y)) {
        out.samples = 1;
        out.status = Status::stopped;
        return out;
    }
    out.samples = 1;
    if (times.size() == 1) return out;

    const double span_total = times.back() - times.front();
    double h = opt.initial_step;
    if (!(h > 0.0)) {
        // Hairer-Norsett-Wanner starting step heuristic (first-order part).
        const Vec sc = opt.atol + opt.rtol * y.cwiseAbs().array();
        const double d0 = std::sqrt((y.array() / sc.array()).square().mean());
        const double d1 = std::sqrt((k1.array() / sc.array()).square().mean());
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min(h, 0.01 * span_total);
    }
    h = std::min(h, opt.max_step);

    constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0, beta = 0.04;
    constexpr double expo = 0.2 - beta * 0.75;
    double err_old = 1e-4;
    bool last_rejected = false;

    for (std::size_t idx = 1; idx < times.size(); ++idx) {
        const double t_target = times[idx];
        while (t < t_target) {
            if (++out.steps > opt.max_steps) {
                out.status = Status::step_limit;
                return out;
            }
            const double remaining = t_target - t;
            double step = std::min(h, remaining);
            const bool hits_target = step >= remaining * (1.0 - 1e-12);
            if (hits_target) step = remaining;
            if (step < opt.min_step * std::max(1.0, std::abs(t))) {
                out.status = Status::step_underflow;
                return out;
            }

            bool domain_ok = true;
            ytmp = y + step * a21 * k1;
            domain_ok = domain_ok && rhs(t + c2 * step, ytmp, k2);
            if (domain_ok) {
                ytmp = y + step * (a31 * k1 + a32 * k2);
                domain_ok = rhs(t + c3 * step, ytmp, k3);
            }
            if (domain_ok) {
                ytmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
                domain_ok = rhs(t + c4 * step, ytmp, k4);
            }
            if (domain_ok) {
                ytmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
                domain_ok = rhs(t + c5 * step, ytmp, k5);
            }
            if (domain_ok) {
                ytmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
                domain_ok = rhs(t + step, ytmp, k6);
            }
            if (domain_ok) {
                ynew = y + step * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
                domain_ok = rhs(t + step, ynew, k7);
            }
            if (!domain_ok) {
                // Stage left the domain: shrink hard; persistent failure means escape.
                h = 0.25 * step;
                ++out.rejected;
                last_rejected = true;
                if (h < opt.min_step * std::max(1.0, std::abs(t))) {
                    out.status = Status::escaped;
                    return out;
                }
                continue;
            }

            err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const Vec sc = opt.atol + opt.rtol * y.cwiseAbs().cwiseMax(ynew.cwiseAbs()).array();
            const double err_norm = std::sqrt((err.array() / sc.array()).square().mean());

            if (err_norm <= 1.0 && std::isfinite(err_norm)) {
                // PI step-size controller (Gustafsson), as in DOPRI5.
                double fac = std::pow(std::max(err_norm, 1e-16), expo) * std::pow(err_old, -beta);
                fac = std::clamp(safety / fac, fac_min, fac_max);
                if (last_rejected) fac = std::min(fac, 1.0);
                err_old = std::max(err_norm, 1e-4);
                last_rejected = false;
                y = ynew;
                k1 = k7;
                t = hits_target ? t_target : t + step;
                out.last_time = t;
                const double proposal = step * fac;
                // A step shortened to hit an output time should not shrink the next one.
                h = std::min(hits_target ? std::max(proposal, h) : proposal, opt.max_step);
            } else {
                ++out.rejected;
                last_rejected = true;
                const double fac = std::isfinite(err_norm)
                                       ? std::max(fac_min, safety * std::pow(err_norm, -0.2))
                                       : fac_min;
                h = step * fac;
            }
        }
        ++out.samples;
        if (!observe(idx, t, y)) {
            out.status = Status::stopped;
            return out;
        }
    }
    return out;
}

} // namespace bhs::ode
