// hk.hpp: Herman-Kluk propagator evaluated by Monte Carlo over frozen Gaussians.
//
//   psi(t) = (2 pi)^-D  int dq dp  |z_t> R_t e^{i S_t} <z|psi0>
//
// The wavefunction is reconstructed in the number (momentum) representation on a
// lattice: integer j for the double well, the (n1, n2) triangle for the triple well.
#pragma once

#include "classical.hpp"
#include "errors.hpp"
#include "exact.hpp"
#include "parallel.hpp"
#include "twa.hpp"

#include <algorithm>
#include <array>
#include <limits>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/sobol.hpp>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <vector>

namespace bhs {

// <z_a|z_b> for equal widths, hbar = 1:
//   exp(-gamma/4 dq^2 + i/2 dq (p_a + p_b) - dp^2/(4 gamma)),  dq = q_a - q_b, dp = p_a - p_b
template <int D>
cplx coherent_overlap(const PhaseSpacePoint<D>& a, const PhaseSpacePoint<D>& b, const Vec<D>& gamma) {
    double re = 0.0, im = 0.0;
    for (int d = 0; d < D; ++d) {
        const double dq = a.q(d) - b.q(d), dp = a.p(d) - b.p(d);
        re += -0.25 * gamma(d) * dq * dq - dp * dp / (4.0 * gamma(d));
        im += 0.5 * dq * (a.p(d) + b.p(d));
    }
    return std::exp(cplx(re, im));
}

// Overlap of frozen Gaussians with different widths (reduces to coherent_overlap when equal).
template <int D>
cplx gaussian_overlap(const PhaseSpacePoint<D>& a, const Vec<D>& gamma_a, const PhaseSpacePoint<D>& b,
                      const Vec<D>& gamma_b) {
    cplx log_value = 0.0;
    for (int d = 0; d < D; ++d) {
        const double ga = gamma_a(d), gb = gamma_b(d);
        const double alpha = 0.5 / ga + 0.5 / gb;
        const cplx beta(a.p(d) / ga + b.p(d) / gb, a.q(d) - b.q(d));
        const double c0 = 0.5 * a.p(d) * a.p(d) / ga + 0.5 * b.p(d) * b.p(d) / gb;
        log_value += beta * beta / (4.0 * alpha) - c0 + 0.5 * std::log(std::numbers::pi / alpha) -
                     0.25 * std::log(std::numbers::pi * std::numbers::pi * ga * gb);
    }
    return std::exp(log_value);
}

struct PrefactorValue {
    cplx value;   // R = sqrt(det B) on the tracked branch
    double phase; // unwrapped arg det B
};

// R = det[B]^(1/2), B as in prefactor_matrix. The argument of det B is placed on the
// branch nearest previous_phase; a jump of max_jump or more is ambiguous.
template <int D>
PrefactorValue hk_prefactor(const PhaseMatrix<D>& monodromy, const Vec<D>& gamma, double previous_phase,
                            double max_jump = std::numbers::pi) {
    const cplx det = prefactor_matrix<D>(monodromy, gamma).determinant();
    const double mod = std::abs(det);
    if (!(mod > 0.0) || !std::isfinite(mod)) throw NumericError("hk_prefactor: singular or non-finite det B");
    const double principal = std::arg(det);
    const double turns = std::round((previous_phase - principal) / (2.0 * std::numbers::pi));
    const double phase = principal + 2.0 * std::numbers::pi * turns;
    if (std::abs(phase - previous_phase) >= max_jump) {
        std::ostringstream msg;
        msg << "hk_prefactor: branch ambiguity (phase jump " << std::abs(phase - previous_phase)
            << " rad); use a finer output time grid";
        throw BranchAmbiguityError(msg.str());
    }
    return {std::polar(std::sqrt(mod), 0.5 * phase), phase};
}

enum class HKSampling {
    overlap,         // density ~ |<z|z0>|: variances (2/gamma, 2 gamma), bounded weights
    overlap_squared, // density ~ |<z|z0>|^2: variances (1/gamma, gamma)
};

// Where the standard normal deviates behind each initial condition come from. `sobol` uses a
// Sobol point set with a seed-dependent random shift, which stays unbiased.
enum class HKSequence { pseudo_random, sobol };

struct HKConfig {
    std::size_t sample_count{10000};
    std::uint64_t seed{1};
    std::vector<double> gamma_override; // empty: propagate with the initial state's width
    double prefactor_cutoff{10.0};
    bool renormalize{true};
    HKSampling sampling{HKSampling::overlap};
    HKSequence sequence{HKSequence::sobol};

    void validate(int dof) const {
        if (sample_count < 1) throw ParameterError("HKConfig: sample_count must be >= 1");
        if (!(prefactor_cutoff > 1.0)) throw ParameterError("HKConfig: prefactor_cutoff must be > 1");
        if (!gamma_override.empty()) {
            if (static_cast<int>(gamma_override.size()) != dof)
                throw ParameterError("HKConfig: gamma_override needs one value per degree of freedom");
            for (double g : gamma_override)
                if (!(g > 0.0)) throw ParameterError("HKConfig: gamma_override must be positive");
        }
    }

    template <int D>
    [[nodiscard]] Vec<D> propagator_gamma(const GaussianInitialState<D>& init) const {
        if (gamma_override.empty()) return init.gamma;
        Vec<D> g;
        for (int d = 0; d < D; ++d) g(d) = gamma_override[static_cast<std::size_t>(d)];
        return g;
    }
};

template <int D>
struct WeightedPoint {
    PhaseSpacePoint<D> z;
    cplx weight; // already includes the (2 pi)^-D measure and the density normalization
};

template <int D>
WeightedPoint<D> sample_initial_condition(const GaussianInitialState<D>& init, const HKConfig& config,
                                          std::uint64_t index) {
    const Vec<D> gamma = config.propagator_gamma(init);
    std::array<double, 2 * D> u{};
    if (config.sequence == HKSequence::sobol) {
        boost::random::sobol lattice_points(2 * D);
        lattice_points.seed(index);
        auto shift_rng = sample_stream(config.seed, std::numeric_limits<std::uint64_t>::max());
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (auto& x : u) {
            x = std::ldexp(static_cast<double>(lattice_points() >> 11), -53) + unit(shift_rng);
            x -= std::floor(x);
            if (x == 0.0) x = 0x1p-54;
            x = boost::math::quantile(boost::math::normal(), x);
        }
    } else {
        auto rng = sample_stream(config.seed, index);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& x : u) x = normal(rng);
    }
    const bool squared = config.sampling == HKSampling::overlap_squared;
    const double widen = squared ? 1.0 : 2.0;
    WeightedPoint<D> w;
    for (int d = 0; d < D; ++d) {
        w.z.q(d) = init.center.q(d) + std::sqrt(widen / gamma(d)) * u[2 * d];
        w.z.p(d) = init.center.p(d) + std::sqrt(widen * gamma(d)) * u[2 * d + 1];
    }
    // int |<z|z0>|^k dq dp / (2 pi)^D = 1 for k = 2 and 2^D for k = 1.
    const double abs_proposal = std::abs(coherent_overlap<D>(w.z, init.center, gamma));
    const cplx target = gaussian_overlap<D>(w.z, gamma, init.center, init.gamma);
    w.weight = squared ? target / (abs_proposal * abs_proposal)
                       : target * std::pow(2.0, D) / abs_proposal;
    return w;
}

template <int D>
std::vector<WeightedPoint<D>> sample_initial_conditions(const GaussianInitialState<D>& init,
                                                        const HKConfig& config) {
    init.validate();
    config.validate(D);
    std::vector<WeightedPoint<D>> out;
    out.reserve(config.sample_count);
    for (std::size_t i = 0; i < config.sample_count; ++i) out.push_back(sample_initial_condition(init, config, i));
    return out;
}

// ------------------------------------------------------------------- lattices

namespace detail {

// Terms c (pi gamma)^-1/4 sqrt(h) exp(-(x_k - p)^2/(2 gamma) - i q x_k), x_k = lo + k h,
// for k in the window where the Gaussian is above ~1e-16, via two-sided recurrences.
// Returns the first index; out receives the terms.
inline std::ptrdiff_t gaussian_line(double p, double q, double gamma, double lo, double h, std::ptrdiff_t count,
                                    cplx c, std::vector<cplx>& out) {
    out.clear();
    const double reach = 8.6 * std::sqrt(gamma);
    const auto kmin = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil((p - reach - lo) / h)));
    const auto kmax =
        std::min<std::ptrdiff_t>(count - 1, static_cast<std::ptrdiff_t>(std::floor((p + reach - lo) / h)));
    if (kmin > kmax) return 0;
    const auto kc = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::lround((p - lo) / h)), kmin, kmax);
    out.resize(static_cast<std::size_t>(kmax - kmin + 1));

    const double xc = lo + static_cast<double>(kc) * h - p;
    const double norm = std::pow(std::numbers::pi * gamma, -0.25) * std::sqrt(h);
    const cplx center = c * norm * std::polar(std::exp(-xc * xc / (2.0 * gamma)), -q * (lo + static_cast<double>(kc) * h));
    const double shrink = std::exp(-h * h / gamma);
    out[static_cast<std::size_t>(kc - kmin)] = center;

    cplx term = center;
    cplx ratio = std::polar(std::exp(-(2.0 * xc * h + h * h) / (2.0 * gamma)), -q * h);
    for (std::ptrdiff_t k = kc + 1; k <= kmax; ++k) {
        term *= ratio;
        ratio *= shrink;
        out[static_cast<std::size_t>(k - kmin)] = term;
    }
    term = center;
    ratio = std::polar(std::exp((2.0 * xc * h - h * h) / (2.0 * gamma)), q * h);
    for (std::ptrdiff_t k = kc - 1; k >= kmin; --k) {
        term *= ratio;
        ratio *= shrink;
        out[static_cast<std::size_t>(k - kmin)] = term;
    }
    return kmin;
}

} // namespace detail

template <int D>
class Lattice;

// Uniform momentum grid lo + k h, k = 0..count-1. Amplitudes carry sqrt(h), so the
// squared norm of a well-resolved Gaussian is 1.
template <>
class Lattice<1> {
public:
    Lattice(double lo, double spacing, std::size_t count) : lo_(lo), h_(spacing), count_(count) {
        if (!(spacing > 0.0) || count < 1) throw ParameterError("Lattice: need spacing > 0 and count >= 1");
    }
    // j = -N/2 .. N/2 ascending (index k is n_1 = k).
    static Lattice for_bose(int n_total) { return Lattice(-0.5 * n_total, 1.0, static_cast<std::size_t>(n_total) + 1); }

    [[nodiscard]] std::size_t size() const noexcept { return count_; }
    [[nodiscard]] Vec<1> point(std::size_t k) const { return Vec<1>(lo_ + static_cast<double>(k) * h_); }
    [[nodiscard]] double spacing() const noexcept { return h_; }

    struct Scratch {
        std::vector<cplx> line;
    };

    // out[k] += c <p_k|z>
    void accumulate(const PhaseSpacePoint<1>& z, const Vec<1>& gamma, cplx c, cplx* out, Scratch& s) const {
        const auto k0 = detail::gaussian_line(z.p(0), z.q(0), gamma(0), lo_, h_, static_cast<std::ptrdiff_t>(count_), c,
                                              s.line);
        cplx* dst = out + k0;
        for (std::size_t i = 0; i < s.line.size(); ++i) dst[i] += s.line[i];
    }

    // Index of the Fock state (n_1, N - n_1) in FockBasis ordering.
    [[nodiscard]] std::size_t basis_index(std::size_t k, const FockBasis& basis) const {
        return static_cast<std::size_t>(basis.n_total()) - k;
    }

private:
    double lo_, h_;
    std::size_t count_;
};

// (n1, n2) with n1, n2 >= 0 and n1 + n2 <= N, ordered n1 ascending then n2 ascending.
template <>
class Lattice<2> {
public:
    explicit Lattice(int n_total) : n_(n_total) {
        if (n_total < 1) throw ParameterError("Lattice: n_total must be >= 1");
    }
    static Lattice for_bose(int n_total) { return Lattice(n_total); }

    [[nodiscard]] std::size_t size() const noexcept {
        const auto n = static_cast<std::size_t>(n_);
        return (n + 1) * (n + 2) / 2;
    }
    [[nodiscard]] std::size_t row_offset(int n1) const noexcept {
        const auto a = static_cast<std::size_t>(n1);
        return a * static_cast<std::size_t>(n_ + 1) - a * (a - 1) / 2;
    }
    [[nodiscard]] Vec<2> point(std::size_t k) const {
        int n1 = 0;
        while (n1 < n_ && row_offset(n1 + 1) <= k) ++n1;
        return Vec<2>(n1, static_cast<double>(k - row_offset(n1)));
    }
    [[nodiscard]] double spacing() const noexcept { return 1.0; }

    struct Scratch {
        std::vector<cplx> rows, cols;
    };

    void accumulate(const PhaseSpacePoint<2>& z, const Vec<2>& gamma, cplx c, cplx* out, Scratch& s) const {
        const auto count = static_cast<std::ptrdiff_t>(n_ + 1);
        const auto a1 = detail::gaussian_line(z.p(0), z.q(0), gamma(0), 0.0, 1.0, count, c, s.rows);
        const auto a2 = detail::gaussian_line(z.p(1), z.q(1), gamma(1), 0.0, 1.0, count, 1.0, s.cols);
        if (s.rows.empty() || s.cols.empty()) return;
        for (std::size_t r = 0; r < s.rows.size(); ++r) {
            const int n1 = static_cast<int>(a1 + static_cast<std::ptrdiff_t>(r));
            const std::ptrdiff_t last = std::min<std::ptrdiff_t>(a2 + static_cast<std::ptrdiff_t>(s.cols.size()) - 1, n_ - n1);
            if (last < a2) continue;
            const cplx f = s.rows[r];
            cplx* dst = out + row_offset(n1);
            for (std::ptrdiff_t n2 = a2; n2 <= last; ++n2) dst[n2] += f * s.cols[static_cast<std::size_t>(n2 - a2)];
        }
    }

    [[nodiscard]] std::size_t basis_index(std::size_t k, const FockBasis& basis) const {
        const auto p = point(k);
        const std::array<int, 3> occ{static_cast<int>(p(0)), static_cast<int>(p(1)),
                                     n_ - static_cast<int>(p(0)) - static_cast<int>(p(1))};
        return basis.index(occ);
    }

private:
    int n_;
};

// Normalized lattice projection of a frozen Gaussian.
template <int D>
std::vector<cplx> gaussian_on_lattice(const Lattice<D>& lattice, const PhaseSpacePoint<D>& z, const Vec<D>& gamma) {
    std::vector<cplx> v(lattice.size(), 0.0);
    typename Lattice<D>::Scratch scratch;
    lattice.accumulate(z, gamma, 1.0, v.data(), scratch);
    double norm = 0.0;
    for (const auto& a : v) norm += std::norm(a);
    if (!(norm > 0.0)) throw NumericError("gaussian_on_lattice: Gaussian lies outside the lattice");
    for (auto& a : v) a /= std::sqrt(norm);
    return v;
}

inline double lattice_fidelity(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) throw ParameterError("lattice_fidelity: size mismatch");
    cplx s = 0.0;
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::conj(a[i]) * b[i];
        na += std::norm(a[i]);
        nb += std::norm(b[i]);
    }
    return std::norm(s) / (na * nb);
}

// ------------------------------------------------------------------ ensemble run

template <int D>
struct SemiclassicalWavefunction {
    std::vector<double> times;
    Lattice<D> lattice;
    std::vector<cplx> amplitudes;          // times.size() x lattice.size(), row-major
    std::vector<double> raw_norm;          // before renormalization
    std::vector<double> filtered_fraction; // trajectories dropped by the prefactor cutoff up to each time
    std::vector<double> escaped_fraction;  // trajectories that left the physical domain up to each time

    [[nodiscard]] std::span<const cplx> slice(std::size_t t) const {
        return {amplitudes.data() + t * lattice.size(), lattice.size()};
    }
    [[nodiscard]] double final_filtered_fraction() const {
        return filtered_fraction.empty() ? 0.0 : filtered_fraction.back();
    }
    // Slice t as a state on the Fock basis (the lattice must be the Bose lattice of that basis).
    [[nodiscard]] QuantumState to_state(std::size_t t, std::shared_ptr<const FockBasis> basis) const {
        if (basis->dimension() != lattice.size())
            throw ParameterError("SemiclassicalWavefunction: lattice does not match the basis");
        Eigen::VectorXcd v(static_cast<Eigen::Index>(lattice.size()));
        const auto s = slice(t);
        for (std::size_t k = 0; k < s.size(); ++k) v(static_cast<Eigen::Index>(lattice.basis_index(k, *basis))) = s[k];
        return QuantumState(std::move(basis), std::move(v));
    }
};

template <int D>
struct HKResult {
    SemiclassicalWavefunction<D> wavefunction;
    EnsembleResult ensemble; // <p_0> from the reconstructed wavefunction
};

inline constexpr double kFilteredFractionFlag = 0.1;
inline constexpr double kRawNormCollapse = 1e-3;

namespace detail {

struct HKPartial {
    std::vector<cplx> amplitudes;
    std::vector<std::size_t> alive, filtered_from, escaped_from;
};

} // namespace detail

template <HamiltonianSystem S>
HKResult<S::dof> run_hk(const S& sys, const GaussianInitialState<S::dof>& init, std::span<const double> times,
                        const HKConfig& config, const Lattice<S::dof>& lattice, const EnsembleOptions& opts = {}) {
    constexpr int D = S::dof;
    init.validate();
    config.validate(D);
    if (times.empty()) throw ParameterError("run_hk: empty time grid");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw ParameterError("run_hk: times must be strictly ascending");

    const Vec<D> gamma = config.propagator_gamma(init);
    const std::size_t nt = times.size(), width = lattice.size();
    HKResult<D> res{SemiclassicalWavefunction<D>{{times.begin(), times.end()}, lattice, {}, {}, {}, {}}, {}};
    auto& wf = res.wavefunction;
    wf.amplitudes.assign(nt * width, 0.0);
    std::vector<std::size_t> alive(nt, 0), filtered_from(nt + 1, 0), escaped_from(nt + 1, 0);

    ordered_blocks<detail::HKPartial>(
        config.sample_count, opts.block_size, opts.workers,
        [&](std::size_t begin, std::size_t end) {
            detail::HKPartial part;
            part.amplitudes.assign(nt * width, 0.0);
            part.alive.assign(nt, 0);
            part.filtered_from.assign(nt + 1, 0);
            part.escaped_from.assign(nt + 1, 0);
            typename Lattice<D>::Scratch scratch;
            for (std::size_t k = begin; k < end; ++k) {
                const auto w = sample_initial_condition(init, config, k);
                std::size_t reached = 0;
                bool filtered = false;
                const auto outcome = propagate_with_stability(
                    sys, w.z, times, gamma, opts.trajectory, [&](std::size_t idx, const TrajectorySample<D>& s) {
                        // The integrated phase is the reference branch; arg det B must agree with it.
                        const auto r = hk_prefactor<D>(s.monodromy, gamma, s.prefactor_phase, 0.5 * std::numbers::pi);
                        if (std::abs(r.value) > config.prefactor_cutoff) {
                            filtered = true;
                            return false;
                        }
                        const cplx coef = w.weight * r.value * std::polar(1.0, s.action);
                        lattice.accumulate(s.z, gamma, coef, part.amplitudes.data() + idx * width, scratch);
                        part.alive[idx] += 1;
                        reached = idx + 1;
                        return true;
                    });
                if (reached == 0 && !filtered) {
                    // Outside the phase-space domain: nothing to propagate, but the identity at the
                    // first output still holds.
                    lattice.accumulate(w.z, gamma, w.weight, part.amplitudes.data(), scratch);
                    part.alive[0] += 1;
                    reached = 1;
                }
                if (filtered) part.filtered_from[reached] += 1;
                else if (outcome.status != ode::Status::completed) part.escaped_from[reached] += 1;
            }
            return part;
        },
        [&](detail::HKPartial&& part) {
            for (std::size_t i = 0; i < wf.amplitudes.size(); ++i) wf.amplitudes[i] += part.amplitudes[i];
            for (std::size_t i = 0; i < nt; ++i) alive[i] += part.alive[i];
            for (std::size_t i = 0; i <= nt; ++i) {
                filtered_from[i] += part.filtered_from[i];
                escaped_from[i] += part.escaped_from[i];
            }
        });

    const double n = static_cast<double>(config.sample_count);
    wf.raw_norm.resize(nt);
    wf.filtered_fraction.resize(nt);
    wf.escaped_fraction.resize(nt);
    auto& ens = res.ensemble;
    ens.times = wf.times;
    ens.mean.resize(nt);
    ens.standard_error.assign(nt, 0.0);
    ens.alive = alive;
    ens.sample_count = config.sample_count;
    ens.rng_seed = config.seed;
    std::size_t filtered_total = 0, escaped_total = 0;
    for (std::size_t t = 0; t < nt; ++t) {
        filtered_total += filtered_from[t];
        escaped_total += escaped_from[t];
        wf.filtered_fraction[t] = static_cast<double>(filtered_total) / n;
        wf.escaped_fraction[t] = static_cast<double>(escaped_total) / n;

        cplx* row = wf.amplitudes.data() + t * width;
        double norm = 0.0, moment = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
            row[k] /= n;
            const double w = std::norm(row[k]);
            norm += w;
            moment += w * lattice.point(k)(0);
        }
        wf.raw_norm[t] = norm;
        if (!(norm >= kRawNormCollapse) || !std::isfinite(norm)) {
            std::ostringstream msg;
            msg << "run_hk: norm collapse at t=" << times[t] << " (raw norm " << norm << ", filtered fraction "
                << wf.filtered_fraction[t] << ")";
            throw NumericError(msg.str());
        }
        ens.mean[t] = moment / norm;
        if (config.renormalize) {
            const double scale = 1.0 / std::sqrt(norm);
            for (std::size_t k = 0; k < width; ++k) row[k] *= scale;
        }
    }
    ens.escaped_fraction = wf.escaped_fraction.back();
    ens.flagged = wf.final_filtered_fraction() >= kFilteredFractionFlag;
    return res;
}

template <int D>
HKResult<D> run_hk(const ModelParams& params, const GaussianInitialState<D>& init, std::span<const double> times,
                   const HKConfig& config, const EnsembleOptions& opts = {}) {
    if (params.modes != D + 1) throw ParameterError("run_hk: params.modes does not match the state's dof");
    return run_hk(BoseSystem<D>(params, opts.form), init, times, config, Lattice<D>::for_bose(params.n_total), opts);
}

} // namespace bhs
