// exact.hpp: numerically exact reference dynamics by full diagonalization.
#pragma once

#include "errors.hpp"
#include "model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <vector>

namespace bhs {

using cplx = std::complex<double>;

// Normalized state on a shared Fock basis.
class QuantumState {
public:
    QuantumState(std::shared_ptr<const FockBasis> basis, Eigen::VectorXcd amplitudes)
        : basis_(std::move(basis)), amplitudes_(std::move(amplitudes)) {
        if (!basis_) throw ParameterError("QuantumState: null basis");
        if (static_cast<std::size_t>(amplitudes_.size()) != basis_->dimension())
            throw ParameterError("QuantumState: amplitude vector does not match basis dimension");
        const double norm = amplitudes_.norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw NumericError("QuantumState: cannot normalize a zero or non-finite vector");
        amplitudes_ /= norm;
    }

    [[nodiscard]] const FockBasis& basis() const noexcept { return *basis_; }
    [[nodiscard]] const std::shared_ptr<const FockBasis>& basis_ptr() const noexcept { return basis_; }
    [[nodiscard]] const Eigen::VectorXcd& amplitudes() const noexcept { return amplitudes_; }
    [[nodiscard]] cplx amplitude(std::size_t i) const { return amplitudes_(static_cast<Eigen::Index>(i)); }

private:
    std::shared_ptr<const FockBasis> basis_;
    Eigen::VectorXcd amplitudes_;
};

inline QuantumState fock_state(std::shared_ptr<const FockBasis> basis, std::span<const int> occupation) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis->dimension()));
    v(static_cast<Eigen::Index>(basis->index(occupation))) = 1.0;
    return QuantumState(std::move(basis), std::move(v));
}

inline double fidelity(const QuantumState& a, const QuantumState& b) {
    if (a.amplitudes().size() != b.amplitudes().size())
        throw ParameterError("fidelity: states live on different bases");
    return std::norm(a.amplitudes().dot(b.amplitudes()));
}

// H = V diag(E) V^T with ascending E.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;

    [[nodiscard]] std::size_t dimension() const noexcept {
        return static_cast<std::size_t>(eigenvalues.size());
    }
};

inline SpectralDecomposition decompose(const HermitianMatrix& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h.entries());
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "eigensolver failed (dimension " << h.dimension() << ", max |H_ij| "
            << h.entries().cwiseAbs().maxCoeff() << ", finite "
            << (h.entries().allFinite() ? "yes" : "no") << ")";
        throw NumericError(msg.str());
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

namespace detail {

// Fix the global phase so the largest-magnitude amplitude is real positive.
inline Eigen::VectorXcd canonical_phase(Eigen::VectorXcd v) {
    Eigen::Index k = 0;
    v.cwiseAbs().maxCoeff(&k);
    const cplx a = v(k);
    if (std::abs(a) > 0.0) v *= std::conj(a) / std::abs(a);
    return v;
}

} // namespace detail

inline QuantumState ground_state(const SpectralDecomposition& spec, std::shared_ptr<const FockBasis> basis) {
    if (spec.dimension() != basis->dimension())
        throw ParameterError("ground_state: decomposition does not match basis dimension");
    Eigen::VectorXcd v = spec.eigenvectors.col(0).cast<cplx>();
    return QuantumState(std::move(basis), detail::canonical_phase(std::move(v)));
}

inline QuantumState ground_state(const HermitianMatrix& h, std::shared_ptr<const FockBasis> basis) {
    return ground_state(decompose(h), std::move(basis));
}

inline double energy_expectation(const HermitianMatrix& h, const QuantumState& psi) {
    const Eigen::VectorXcd hv = h.entries().cast<cplx>() * psi.amplitudes();
    return psi.amplitudes().dot(hv).real();
}

inline double occupation_expectation(const QuantumState& psi, int well) {
    const auto& basis = psi.basis();
    if (well < 1 || well > basis.modes())
        throw ParameterError("occupation_expectation: well index out of range");
    double sum = 0.0;
    for (std::size_t i = 0; i < basis.dimension(); ++i)
        sum += std::norm(psi.amplitude(i)) * basis.occupation(i, well - 1);
    return sum;
}

inline double imbalance_expectation(const QuantumState& psi) {
    const auto& basis = psi.basis();
    if (basis.modes() != 2)
        throw ParameterError("imbalance_expectation: defined for two-mode states only "
                             "(use occupation_expectation)");
    double sum = 0.0;
    for (std::size_t i = 0; i < basis.dimension(); ++i)
        sum += std::norm(psi.amplitude(i)) * 0.5 * (basis.occupation(i, 0) - basis.occupation(i, 1));
    return sum;
}

// <a_i^+ a_{i+1}> for wells i = 1..modes-1.
inline cplx hopping_expectation(const QuantumState& psi, int well) {
    const auto& basis = psi.basis();
    if (well < 1 || well >= basis.modes())
        throw ParameterError("hopping_expectation: well index out of range");
    const auto i = static_cast<std::size_t>(well - 1);
    std::vector<int> target(static_cast<std::size_t>(basis.modes()));
    cplx sum = 0.0;
    for (std::size_t s = 0; s < basis.dimension(); ++s) {
        const auto occ = basis.state(s);
        if (occ[i + 1] == 0) continue;
        std::copy(occ.begin(), occ.end(), target.begin());
        const double amp = std::sqrt(static_cast<double>(target[i] + 1) * target[i + 1]);
        target[i] += 1;
        target[i + 1] -= 1;
        sum += std::conj(psi.amplitude(basis.index(target))) * amp * psi.amplitude(s);
    }
    return sum;
}

// Second moment of an occupation-like observable: Var(n_well), or Var(j) for well = 0 (two modes).
inline double number_variance(const QuantumState& psi, int well) {
    const auto& basis = psi.basis();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
        const double x = well == 0 ? 0.5 * (basis.occupation(i, 0) - basis.occupation(i, 1))
                                   : basis.occupation(i, well - 1);
        const double w = std::norm(psi.amplitude(i));
        m1 += w * x;
        m2 += w * x * x;
    }
    return m2 - m1 * m1;
}

// Two modes: P(j) for j = -N/2 .. N/2 ascending. Three modes: marginal P(n_1) for n_1 = 0..N.
inline std::vector<double> number_distribution(const QuantumState& psi) {
    const auto& basis = psi.basis();
    const auto n = static_cast<std::size_t>(basis.n_total());
    std::vector<double> dist(n + 1, 0.0);
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
        const auto n1 = static_cast<std::size_t>(basis.occupation(i, 0));
        // two modes: ascending j is ascending n_1
        dist[n1] += std::norm(psi.amplitude(i));
    }
    return dist;
}

// psi(t) = V exp(-i E t) V^T psi0 for each t (hbar = 1).
inline std::vector<QuantumState> evolve(const SpectralDecomposition& spec, const QuantumState& psi0,
                                        std::span<const double> times) {
    if (spec.dimension() != psi0.basis().dimension())
        throw ParameterError("evolve: decomposition does not match state dimension");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw ParameterError("evolve: times must be strictly ascending");

    const Eigen::VectorXcd coeff = spec.eigenvectors.transpose().cast<cplx>() * psi0.amplitudes();
    const Eigen::MatrixXcd v = spec.eigenvectors.cast<cplx>();
    std::vector<QuantumState> out;
    out.reserve(times.size());
    Eigen::VectorXcd rotated(coeff.size());
    for (double t : times) {
        if (t == 0.0) {
            out.push_back(psi0);
            continue;
        }
        for (Eigen::Index k = 0; k < coeff.size(); ++k)
            rotated(k) = coeff(k) * std::polar(1.0, -spec.eigenvalues(k) * t);
        out.emplace_back(psi0.basis_ptr(), v * rotated);
    }
    return out;
}

inline std::vector<QuantumState> evolve(const HermitianMatrix& h, const QuantumState& psi0,
                                        std::span<const double> times) {
    return evolve(decompose(h), psi0, times);
}

// Find delta such that the ground state of H(delta) has <j> = j_target (two modes).
// <j> decreases monotonically with delta because +delta (n1 - n2) penalizes well 1,
// so a positive target needs a negative tilt.
inline double tilt_for_target_imbalance(const ModelParams& params, double j_target) {
    params.validate();
    if (params.modes != 2)
        throw ParameterError("tilt_for_target_imbalance: defined for the double well only");
    const double half = 0.5 * params.n_total;
    if (!(std::abs(j_target) < half))
        throw ParameterError("tilt_for_target_imbalance: |j_target| must be < N/2");
    if (j_target == 0.0) return 0.0;

    auto basis = std::make_shared<const FockBasis>(2, params.n_total);
    auto imbalance = [&](double delta) {
        return imbalance_expectation(ground_state(build_hamiltonian(params.with_tilt(delta), *basis), basis));
    };

    const double tol = 1e-3 * params.n_total;
    const double sign = j_target > 0.0 ? -1.0 : 1.0;
    const double scale = params.tunneling + params.interaction * params.n_total;
    double lo = 0.0; // |delta| bracket [lo, hi]
    double hi = scale;
    double reached = imbalance(sign * hi);
    const double max_tilt = 1e6 * scale;
    while (std::abs(reached) < std::abs(j_target)) {
        lo = hi;
        hi *= 2.0;
        if (hi > max_tilt) {
            std::ostringstream msg;
            msg << "tilt_for_target_imbalance: target j=" << j_target << " unreachable; achievable |<j>| < "
                << std::abs(reached) << " (N/2 = " << half << ", Lambda = " << params.lambda() << ")";
            throw ParameterError(msg.str());
        }
        reached = imbalance(sign * hi);
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double j = imbalance(sign * mid);
        if (std::abs(j - j_target) <= 1e-3 * tol) return sign * mid;
        if (std::abs(j) < std::abs(j_target)) lo = mid;
        else hi = mid;
        if (hi - lo <= std::numeric_limits<double>::epsilon() * hi) break;
    }
    const double delta = sign * 0.5 * (lo + hi);
    if (std::abs(imbalance(delta) - j_target) > tol)
        throw NumericError("tilt_for_target_imbalance: bisection did not reach tolerance");
    return delta;
}

} // namespace bhs
