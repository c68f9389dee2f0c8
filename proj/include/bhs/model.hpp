// model.hpp: Bose-Hubbard double/triple well: parameters, Fock basis, Hamiltonian matrix.
//
//   H = U sum_i n_i (n_i - 1) - T sum_<i,i+1> (a_i^+ a_{i+1} + h.c.) + delta (n_1 - n_2)
//
// Only nearest-neighbour hopping on an open chain of 2 or 3 sites.
#pragma once

#include "errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bhs {

struct ModelParams {
    int modes{2};
    int n_total{1};
    double tunneling{1.0};
    double interaction{0.0};
    double tilt{0.0};

    // Lambda = U N / T, always derived from the current fields.
    [[nodiscard]] double lambda() const noexcept {
        return interaction * static_cast<double>(n_total) / tunneling;
    }

    void validate() const {
        if (modes != 2 && modes != 3)
            throw ParameterError("ModelParams: modes must be 2 or 3, got " + std::to_string(modes));
        if (n_total < 1)
            throw ParameterError("ModelParams: n_total must be >= 1, got " + std::to_string(n_total));
        if (!(tunneling > 0.0) || !std::isfinite(tunneling))
            throw ParameterError("ModelParams: tunneling must be positive and finite");
        if (!(interaction >= 0.0) || !std::isfinite(interaction))
            throw ParameterError("ModelParams: interaction must be >= 0 and finite");
        if (!std::isfinite(tilt))
            throw ParameterError("ModelParams: tilt must be finite");
    }

    // Same model with a different tilt (the t=0 quench switches delta off).
    [[nodiscard]] ModelParams with_tilt(double delta) const {
        ModelParams p = *this;
        p.tilt = delta;
        return p;
    }

    // Build from Lambda instead of U.
    static ModelParams from_lambda(int modes, int n_total, double tunneling, double lambda,
                                   double tilt = 0.0) {
        ModelParams p{modes, n_total, tunneling, lambda * tunneling / n_total, tilt};
        p.validate();
        return p;
    }
};

inline constexpr std::size_t kDenseDimensionWarning = 5000;

// Fixed-N Fock basis, states ordered descending-lexicographically:
// (N,0,...), (N-1,1,...), ..., (0,...,N).
class FockBasis {
public:
    FockBasis(int modes, int n_total) : modes_(modes), n_total_(n_total) {
        if (modes != 2 && modes != 3)
            throw ParameterError("FockBasis: modes must be 2 or 3, got " + std::to_string(modes));
        if (n_total < 1)
            throw ParameterError("FockBasis: n_total must be >= 1, got " + std::to_string(n_total));
        const int n = n_total;
        if (modes == 2) {
            for (int n1 = n; n1 >= 0; --n1) occupations_.insert(occupations_.end(), {n1, n - n1});
        } else {
            for (int n1 = n; n1 >= 0; --n1)
                for (int n2 = n - n1; n2 >= 0; --n2)
                    occupations_.insert(occupations_.end(), {n1, n2, n - n1 - n2});
        }
    }

    [[nodiscard]] int modes() const noexcept { return modes_; }
    [[nodiscard]] int n_total() const noexcept { return n_total_; }
    [[nodiscard]] std::size_t dimension() const noexcept {
        return occupations_.size() / static_cast<std::size_t>(modes_);
    }

    [[nodiscard]] std::span<const int> state(std::size_t i) const {
        return {occupations_.data() + i * static_cast<std::size_t>(modes_),
                static_cast<std::size_t>(modes_)};
    }
    [[nodiscard]] int occupation(std::size_t i, int well) const {
        return occupations_[i * static_cast<std::size_t>(modes_) + static_cast<std::size_t>(well)];
    }

    // Ordinal of an occupation vector; inverse of state().
    [[nodiscard]] std::size_t index(std::span<const int> occ) const {
        if (occ.size() != static_cast<std::size_t>(modes_))
            throw ParameterError("FockBasis::index: occupation vector has wrong length");
        int sum = 0;
        for (int v : occ) {
            if (v < 0) throw ParameterError("FockBasis::index: negative occupation");
            sum += v;
        }
        if (sum != n_total_) throw ParameterError("FockBasis::index: occupation not in N sector");
        const auto n = static_cast<std::size_t>(n_total_);
        const auto n1 = static_cast<std::size_t>(occ[0]);
        if (modes_ == 2) return n - n1;
        const std::size_t above = n - n1; // number of n1 values larger than occ[0]
        return above * (above + 1) / 2 + (n - n1 - static_cast<std::size_t>(occ[1]));
    }

private:
    int modes_;
    int n_total_;
    std::vector<int> occupations_;
};

inline FockBasis build_fock_basis(int modes, int n_total) { return FockBasis(modes, n_total); }

// Real symmetric matrix; all Bose-Hubbard matrix elements here are real.
class HermitianMatrix {
public:
    explicit HermitianMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
        if (entries_.rows() != entries_.cols())
            throw ParameterError("HermitianMatrix: matrix must be square");
        for (Eigen::Index i = 0; i < entries_.rows(); ++i)
            for (Eigen::Index j = 0; j < i; ++j)
                if (entries_(i, j) != entries_(j, i))
                    throw ParameterError("HermitianMatrix: entries are not symmetric");
    }

    [[nodiscard]] std::size_t dimension() const noexcept {
        return static_cast<std::size_t>(entries_.rows());
    }
    [[nodiscard]] const Eigen::MatrixXd& entries() const noexcept { return entries_; }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

private:
    Eigen::MatrixXd entries_;
};

inline HermitianMatrix build_hamiltonian(const ModelParams& params, const FockBasis& basis) {
    params.validate();
    if (basis.modes() != params.modes || basis.n_total() != params.n_total)
        throw ParameterError("build_hamiltonian: basis does not match params (modes/N)");

    const auto dim = basis.dimension();
    if (dim > kDenseDimensionWarning)
        std::clog << "bhs: warning: dense Hamiltonian of dimension " << dim
                  << " (memory ~" << dim * dim * 8 / (1u << 20) << " MiB)\n";

    const auto d = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    const double u = params.interaction;
    const double t = params.tunneling;
    std::array<int, 3> target{};

    for (std::size_t s = 0; s < dim; ++s) {
        const auto occ = basis.state(s);
        double diag = params.tilt * (occ[0] - occ[1]);
        for (int n : occ) diag += u * n * (n - 1);
        h(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) = diag;

        // a_i^+ a_{i+1}: move one boson from well i+1 to well i; the reverse hop
        // is filled in by symmetry.
        for (int i = 0; i + 1 < basis.modes(); ++i) {
            if (occ[static_cast<std::size_t>(i + 1)] == 0) continue;
            std::copy(occ.begin(), occ.end(), target.begin());
            const double amp = std::sqrt(static_cast<double>(target[static_cast<std::size_t>(i)] + 1) *
                                         target[static_cast<std::size_t>(i + 1)]);
            target[static_cast<std::size_t>(i)] += 1;
            target[static_cast<std::size_t>(i + 1)] -= 1;
            const auto r = static_cast<Eigen::Index>(
                basis.index(std::span<const int>(target.data(), occ.size())));
            h(r, static_cast<Eigen::Index>(s)) = -t * amp;
            h(static_cast<Eigen::Index>(s), r) = -t * amp;
        }
    }
    return HermitianMatrix(std::move(h));
}

enum class Regime { rabi, josephson, fock };

inline std::string_view to_string(Regime r) {
    switch (r) {
    case Regime::rabi: return "Rabi";
    case Regime::josephson: return "Josephson";
    case Regime::fock: return "Fock";
    }
    return "?";
}

// Lambda < 1 Rabi, 1 <= Lambda < N^2 Josephson, otherwise Fock. Informational only.
inline Regime classify_regime(const ModelParams& params) {
    params.validate();
    const double lam = params.lambda();
    const double n = params.n_total;
    if (lam < 1.0) return Regime::rabi;
    if (lam < n * n) return Regime::josephson;
    return Regime::fock;
}

inline double plasma_frequency(const ModelParams& params) {
    params.validate();
    return 2.0 * params.tunneling * std::sqrt(1.0 + params.lambda());
}

} // namespace bhs
