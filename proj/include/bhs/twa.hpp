// twa.hpp: truncated Wigner approximation on the reduced number-phase variables.
//
// The initial state is approximated by a minimum-uncertainty Gaussian in (q, p); its
// Wigner function is sampled and every sample is transported by the classical flow.
#pragma once

#include "classical.hpp"
#include "errors.hpp"
#include "exact.hpp"
#include "parallel.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace bhs {

// Frozen-Gaussian state |z0> with per-dof width gamma:
//   position variance 1/(2 gamma), momentum variance hbar^2 gamma / 2.
template <int D>
struct GaussianInitialState {
    PhaseSpacePoint<D> center;
    Vec<D> gamma = Vec<D>::Ones();
    double hbar{1.0};
    double fit_residual{0.0}; // 1 - |<gaussian|psi0>|^2 on the Fock basis
    bool non_gaussian_warning{false};

    void validate() const {
        if (!(gamma.array() > 0.0).all()) throw ParameterError("GaussianInitialState: gamma must be positive");
        if (!(hbar > 0.0)) throw ParameterError("GaussianInitialState: hbar must be positive");
    }
    [[nodiscard]] Vec<D> position_variance() const { return (2.0 * gamma).cwiseInverse(); }
    [[nodiscard]] Vec<D> momentum_variance() const { return 0.5 * hbar * hbar * gamma; }
};

// Momentum coordinates of a Fock state: j for two modes, (n1, n2) for three.
template <int D>
Vec<D> basis_momentum(const FockBasis& basis, std::size_t i) {
    Vec<D> p;
    if constexpr (D == 1) {
        p(0) = 0.5 * (basis.occupation(i, 0) - basis.occupation(i, 1));
    } else {
        p(0) = basis.occupation(i, 0);
        p(1) = basis.occupation(i, 1);
    }
    return p;
}

// <p|z> = prod_d (pi gamma_d)^(-1/4) exp(-(p_d - p_z)^2/(2 gamma_d) - i q_z p_d)   (hbar = 1)
// This is the Fourier transform of the position-space frozen Gaussian, and with it
// sum_p <z_a|p><p|z_b> reproduces the analytic coherent-state overlap.
template <int D>
cplx momentum_amplitude(const PhaseSpacePoint<D>& z, const Vec<D>& gamma, const Vec<D>& p) {
    double log_mod = 0.0, phase = 0.0;
    for (int d = 0; d < D; ++d) {
        const double dp = p(d) - z.p(d);
        log_mod += -0.25 * std::log(std::numbers::pi * gamma(d)) - dp * dp / (2.0 * gamma(d));
        phase -= z.q(d) * p(d);
    }
    return std::polar(std::exp(log_mod), phase);
}

// Frozen Gaussian projected onto the Fock basis and normalized there.
template <int D>
QuantumState gaussian_on_basis(const PhaseSpacePoint<D>& z, const Vec<D>& gamma,
                               std::shared_ptr<const FockBasis> basis) {
    if (basis->modes() != D + 1) throw ParameterError("gaussian_on_basis: basis modes do not match dof");
    Eigen::VectorXcd v(static_cast<Eigen::Index>(basis->dimension()));
    for (std::size_t i = 0; i < basis->dimension(); ++i)
        v(static_cast<Eigen::Index>(i)) = momentum_amplitude<D>(z, gamma, basis_momentum<D>(*basis, i));
    return QuantumState(std::move(basis), std::move(v));
}

inline constexpr double kNonGaussianThreshold = 0.1;

// Center from <p> and the phases of the hopping order parameters, width from the
// number variance: gamma = 2 Var(p) so that the momentum variance gamma/2 matches.
template <int D>
GaussianInitialState<D> fit_gaussian_to_ground_state(const QuantumState& psi0) {
    const auto& basis = psi0.basis();
    if (basis.modes() != D + 1)
        throw ParameterError("fit_gaussian_to_ground_state: state has the wrong number of modes");
    GaussianInitialState<D> init;
    if constexpr (D == 1) {
        init.center.p(0) = imbalance_expectation(psi0);
        init.center.q(0) = std::arg(hopping_expectation(psi0, 1));
        init.gamma(0) = 2.0 * number_variance(psi0, 0);
    } else {
        init.center.p(0) = occupation_expectation(psi0, 1);
        init.center.p(1) = occupation_expectation(psi0, 2);
        const double arg23 = std::arg(hopping_expectation(psi0, 2));
        init.center.q(0) = std::arg(hopping_expectation(psi0, 1)) + arg23;
        init.center.q(1) = arg23;
        init.gamma(0) = 2.0 * number_variance(psi0, 1);
        init.gamma(1) = 2.0 * number_variance(psi0, 2);
    }
    // A Fock state has zero variance; keep the width finite.
    init.gamma = init.gamma.cwiseMax(1e-6);
    const auto g = gaussian_on_basis<D>(init.center, init.gamma, psi0.basis_ptr());
    init.fit_residual = 1.0 - fidelity(g, psi0);
    init.non_gaussian_warning = init.fit_residual > kNonGaussianThreshold;
    return init;
}

// Wigner density of |z0>: q ~ N(q0, 1/(2 gamma)), p ~ N(p0, hbar^2 gamma / 2).
template <int D>
PhaseSpacePoint<D> sample_wigner_point(const GaussianInitialState<D>& init, std::uint64_t seed,
                                       std::uint64_t index) {
    auto rng = sample_stream(seed, index);
    std::normal_distribution<double> normal(0.0, 1.0);
    PhaseSpacePoint<D> z;
    const Vec<D> sq = init.position_variance().cwiseSqrt();
    const Vec<D> sp = init.momentum_variance().cwiseSqrt();
    for (int d = 0; d < D; ++d) {
        z.q(d) = init.center.q(d) + sq(d) * normal(rng);
        z.p(d) = init.center.p(d) + sp(d) * normal(rng);
    }
    return z;
}

template <int D>
std::vector<PhaseSpacePoint<D>> sample_wigner(const GaussianInitialState<D>& init, std::size_t count,
                                              std::uint64_t seed) {
    init.validate();
    if (count < 1) throw ParameterError("sample_wigner: count must be >= 1");
    std::vector<PhaseSpacePoint<D>> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_wigner_point(init, seed, i));
    return out;
}

// Shared settings of the trajectory-ensemble back-ends.
struct EnsembleOptions {
    HamiltonianForm form{HamiltonianForm::weyl};
    TrajectoryOptions trajectory{};
    unsigned workers{1};
    std::size_t block_size{64};
};

struct EnsembleResult {
    std::vector<double> times;
    std::vector<double> mean;           // <j> (double well) or <n_1> (triple well)
    std::vector<double> standard_error; // Monte Carlo standard error of the mean (0 where undefined)
    std::vector<std::size_t> alive;     // trajectories still integrating at each time
    std::size_t sample_count{0};
    double escaped_fraction{0.0};
    std::uint64_t rng_seed{0};
    bool flagged{false};
};

inline constexpr double kEscapedFractionFlag = 0.05;

namespace detail {

struct TwaPartial {
    std::vector<double> sum, sum_sq;
    std::vector<std::size_t> alive;
    std::size_t escaped{0};
};

} // namespace detail

// Observable: p_0 of every trajectory (j, or n_1). Escaped trajectories are frozen at
// their last valid value and stay in the average.
template <HamiltonianSystem S>
EnsembleResult run_twa_points(const S& sys, std::span<const PhaseSpacePoint<S::dof>> points,
                              std::span<const double> times, const EnsembleOptions& opts,
                              std::uint64_t seed = 0) {
    constexpr int D = S::dof;
    const std::size_t nt = times.size();
    EnsembleResult res;
    res.times.assign(times.begin(), times.end());
    res.sample_count = points.size();
    res.rng_seed = seed;
    std::vector<double> sum(nt, 0.0), sum_sq(nt, 0.0);
    res.alive.assign(nt, 0);
    std::size_t escaped = 0;

    ordered_blocks<detail::TwaPartial>(
        points.size(), opts.block_size, opts.workers,
        [&](std::size_t begin, std::size_t end) {
            detail::TwaPartial part;
            part.sum.assign(nt, 0.0);
            part.sum_sq.assign(nt, 0.0);
            part.alive.assign(nt, 0);
            for (std::size_t k = begin; k < end; ++k) {
                double last = points[k].p(0);
                std::size_t reached = 0;
                const auto outcome = propagate(sys, points[k], times, opts.trajectory,
                                               [&](std::size_t idx, double, const PhaseSpacePoint<D>& z) {
                                                   last = z.p(0);
                                                   part.sum[idx] += last;
                                                   part.sum_sq[idx] += last * last;
                                                   part.alive[idx] += 1;
                                                   reached = idx + 1;
                                                   return true;
                                               });
                if (outcome.status != ode::Status::completed) {
                    ++part.escaped;
                    for (std::size_t idx = reached; idx < nt; ++idx) {
                        part.sum[idx] += last;
                        part.sum_sq[idx] += last * last;
                    }
                }
            }
            return part;
        },
        [&](detail::TwaPartial&& part) {
            for (std::size_t i = 0; i < nt; ++i) {
                sum[i] += part.sum[i];
                sum_sq[i] += part.sum_sq[i];
                res.alive[i] += part.alive[i];
            }
            escaped += part.escaped;
        });

    const double n = static_cast<double>(points.size());
    res.mean.resize(nt);
    res.standard_error.resize(nt);
    for (std::size_t i = 0; i < nt; ++i) {
        res.mean[i] = sum[i] / n;
        const double var = points.size() > 1 ? std::max(0.0, (sum_sq[i] - n * res.mean[i] * res.mean[i]) / (n - 1.0))
                                             : 0.0;
        res.standard_error[i] = std::sqrt(var / n);
    }
    res.escaped_fraction = static_cast<double>(escaped) / n;
    res.flagged = res.escaped_fraction > kEscapedFractionFlag;
    return res;
}

template <HamiltonianSystem S>
EnsembleResult run_twa(const S& sys, const GaussianInitialState<S::dof>& init, std::span<const double> times,
                       std::size_t count, std::uint64_t seed, const EnsembleOptions& opts = {}) {
    const auto points = sample_wigner(init, count, seed);
    return run_twa_points(sys, std::span<const PhaseSpacePoint<S::dof>>(points), times, opts, seed);
}

template <int D>
EnsembleResult run_twa(const ModelParams& params, const GaussianInitialState<D>& init,
                       std::span<const double> times, std::size_t count, std::uint64_t seed,
                       const EnsembleOptions& opts = {}) {
    return run_twa(BoseSystem<D>(params, opts.form), init, times, count, seed, opts);
}

} // namespace bhs
