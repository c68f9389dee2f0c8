// classical.hpp: reduced number-phase dynamics of the double and triple well,
// plus the coupled integration of trajectory, action, monodromy matrix and the
// continuously tracked argument of the Herman-Kluk prefactor determinant.
//
// Canonical variables (q = phases, p = populations), hbar = 1:
//   double well   q = phi = phi_1 - phi_2,   p = j = (n_1 - n_2)/2
//   triple well   q = (phi_1 - phi_3, phi_2 - phi_3),   p = (n_1, n_2),  n_3 = N - n_1 - n_2
// The triple-well phase differences phi_1-phi_2 and phi_2-phi_3 are q_1-q_2 and q_2
// (see docs/triple_well.md for the reduction).
#pragma once

#include "errors.hpp"
#include "model.hpp"
#include "ode.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <concepts>
#include <numbers>
#include <span>
#include <type_traits>
#include <vector>

namespace bhs {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;
template <int D>
using Mat = Eigen::Matrix<double, D, D>;
template <int D>
using PhaseMatrix = Eigen::Matrix<double, 2 * D, 2 * D>;

template <int D>
struct PhaseSpacePoint {
    Vec<D> q = Vec<D>::Zero();
    Vec<D> p = Vec<D>::Zero();
};

// Value, gradient and (optionally) Hessian blocks of a Hamilton function.
// qp(i, k) = d^2 H / dq_i dp_k.
template <int D>
struct Jet {
    double value{0.0};
    Vec<D> dq = Vec<D>::Zero();
    Vec<D> dp = Vec<D>::Zero();
    Mat<D> qq = Mat<D>::Zero();
    Mat<D> qp = Mat<D>::Zero();
    Mat<D> pp = Mat<D>::Zero();
};

template <class S>
concept HamiltonianSystem = requires(const S& s, const PhaseSpacePoint<S::dof>& z, Jet<S::dof>& jet) {
    { S::dof } -> std::convertible_to<int>;
    { s.interior(z) } -> std::same_as<bool>;
    { s.evaluate(z, jet, true) } -> std::same_as<bool>;
};

// mean_field: the plain c-number substitution, sqrt(n_i n_j) in the hopping term.
// weyl: Weyl symbol of the hopping operator in the number-phase representation,
//       sqrt((n_i + 1/2)(n_j + 1/2)); shifts frequencies by O(1/N) toward the quantum values.
enum class HamiltonianForm { mean_field, weyl };

namespace detail {
inline double form_offset(HamiltonianForm f) { return f == HamiltonianForm::weyl ? 0.5 : 0.0; }
inline double guard_width(int n_total) { return 1e-6 * n_total; }
} // namespace detail

// H(phi, j) = 2U j^2 - 2T sqrt(a^2 - j^2) cos(phi) + 2 delta j,  a = N/2 (+1/2 for weyl).
class DoubleWell {
public:
    static constexpr int dof = 1;

    explicit DoubleWell(const ModelParams& params, HamiltonianForm form = HamiltonianForm::mean_field)
        : u_(params.interaction), t_(params.tunneling), delta_(params.tilt),
          radius_(0.5 * params.n_total + detail::form_offset(form)),
          guard_(detail::guard_width(params.n_total)), n_total_(params.n_total) {
        params.validate();
        if (params.modes != 2) throw ParameterError("DoubleWell: params.modes must be 2");
    }

    [[nodiscard]] double radius() const noexcept { return radius_; }
    [[nodiscard]] int n_total() const noexcept { return n_total_; }

    // Energy of the hyperbolic fixed point (phi = pi, j = 0); 2NT above the minimum for delta = 0.
    [[nodiscard]] double separatrix_energy() const noexcept { return 2.0 * t_ * radius_; }

    [[nodiscard]] bool in_domain(const PhaseSpacePoint<1>& z) const noexcept {
        return std::abs(z.p(0)) <= radius_;
    }
    [[nodiscard]] bool interior(const PhaseSpacePoint<1>& z) const noexcept {
        return std::isfinite(z.p(0)) && std::abs(z.p(0)) < radius_ - guard_;
    }

    bool evaluate(const PhaseSpacePoint<1>& z, Jet<1>& jet, bool with_hessian) const noexcept {
        const double j = z.p(0);
        const double phi = z.q(0);
        const double s2 = radius_ * radius_ - j * j;
        if (!(s2 >= 0.0)) return false; // s2 = 0: value only, derivatives diverge
        const double s = std::sqrt(s2);
        const double c = std::cos(phi);
        const double sn = std::sin(phi);
        jet.value = 2.0 * u_ * j * j - 2.0 * t_ * s * c + 2.0 * delta_ * j;
        jet.dq(0) = 2.0 * t_ * s * sn;
        jet.dp(0) = 4.0 * u_ * j + 2.0 * delta_ + 2.0 * t_ * j * c / s;
        if (with_hessian) {
            jet.qq(0, 0) = 2.0 * t_ * s * c;
            jet.qp(0, 0) = -2.0 * t_ * j * sn / s;
            jet.pp(0, 0) = 4.0 * u_ + 2.0 * t_ * c * radius_ * radius_ / (s2 * s);
        }
        return true;
    }

private:
    double u_, t_, delta_, radius_, guard_;
    int n_total_;
};

// H = U (n1^2 + n2^2 + n3^2) + delta (n1 - n2)
//     - 2T [ sqrt(m1 m2) cos(q1 - q2) + sqrt(m2 m3) cos(q2) ],   m_k = n_k (+1/2 for weyl).
class TripleWell {
public:
    static constexpr int dof = 2;

    explicit TripleWell(const ModelParams& params, HamiltonianForm form = HamiltonianForm::mean_field)
        : u_(params.interaction), t_(params.tunneling), delta_(params.tilt), n_(params.n_total),
          offset_(detail::form_offset(form)), guard_(detail::guard_width(params.n_total)) {
        params.validate();
        if (params.modes != 3) throw ParameterError("TripleWell: params.modes must be 3");
    }

    [[nodiscard]] int n_total() const noexcept { return static_cast<int>(n_); }

    [[nodiscard]] bool in_domain(const PhaseSpacePoint<2>& z) const noexcept {
        const double n3 = n_ - z.p(0) - z.p(1);
        return z.p(0) + offset_ >= 0.0 && z.p(1) + offset_ >= 0.0 && n3 + offset_ >= 0.0;
    }
    [[nodiscard]] bool interior(const PhaseSpacePoint<2>& z) const noexcept {
        const double n3 = n_ - z.p(0) - z.p(1);
        return std::isfinite(n3) && z.p(0) + offset_ > guard_ && z.p(1) + offset_ > guard_ &&
               n3 + offset_ > guard_;
    }

    bool evaluate(const PhaseSpacePoint<2>& z, Jet<2>& jet, bool with_hessian) const noexcept {
        const double n1 = z.p(0), n2 = z.p(1), n3 = n_ - n1 - n2;
        const double m1 = n1 + offset_, m2 = n2 + offset_, m3 = n3 + offset_;
        if (!(m1 > 0.0 && m2 > 0.0 && m3 > 0.0)) return false;
        const double r12 = std::sqrt(m1 * m2), r23 = std::sqrt(m2 * m3);
        const double d12 = z.q(0) - z.q(1);
        const double c12 = std::cos(d12), s12 = std::sin(d12);
        const double c2 = std::cos(z.q(1)), s2 = std::sin(z.q(1));
        const double tt = 2.0 * t_;

        jet.value = u_ * (n1 * n1 + n2 * n2 + n3 * n3) + delta_ * (n1 - n2) - tt * (r12 * c12 + r23 * c2);
        jet.dq(0) = tt * r12 * s12;
        jet.dq(1) = -tt * r12 * s12 + tt * r23 * s2;
        // d r12/dn1 = m2/(2 r12), d r12/dn2 = m1/(2 r12); d r23/dn1 = -m2/(2 r23), d r23/dn2 = (m3-m2)/(2 r23)
        jet.dp(0) = 2.0 * u_ * (n1 - n3) + delta_ - t_ * (c12 * m2 / r12 - c2 * m2 / r23);
        jet.dp(1) = 2.0 * u_ * (n2 - n3) - delta_ - t_ * (c12 * m1 / r12 + c2 * (m3 - m2) / r23);
        if (!with_hessian) return true;

        jet.qq(0, 0) = tt * r12 * c12;
        jet.qq(0, 1) = jet.qq(1, 0) = -tt * r12 * c12;
        jet.qq(1, 1) = tt * r12 * c12 + tt * r23 * c2;

        jet.qp(0, 0) = t_ * s12 * m2 / r12;
        jet.qp(0, 1) = t_ * s12 * m1 / r12;
        jet.qp(1, 0) = -t_ * s12 * m2 / r12 - t_ * s2 * m2 / r23;
        jet.qp(1, 1) = -t_ * s12 * m1 / r12 + t_ * s2 * (m3 - m2) / r23;

        // r_ab = f_ab/(2r) - f_a f_b/(4 r^3) for r = sqrt(f)
        const double r12c = r12 * r12 * r12, r23c = r23 * r23 * r23;
        const double a11 = -m2 * m2 / (4.0 * r12c);
        const double a12 = 1.0 / (4.0 * r12);
        const double a22 = -m1 * m1 / (4.0 * r12c);
        const double b11 = -m2 * m2 / (4.0 * r23c);
        const double b12 = -1.0 / (2.0 * r23) + m2 * (m3 - m2) / (4.0 * r23c);
        const double b22 = -1.0 / r23 - (m3 - m2) * (m3 - m2) / (4.0 * r23c);
        jet.pp(0, 0) = 4.0 * u_ - tt * (c12 * a11 + c2 * b11);
        jet.pp(0, 1) = jet.pp(1, 0) = 2.0 * u_ - tt * (c12 * a12 + c2 * b12);
        jet.pp(1, 1) = 4.0 * u_ - tt * (c12 * a22 + c2 * b22);
        return true;
    }

private:
    double u_, t_, delta_, n_, offset_, guard_;
};

// Built-in quadratic test model H = (p^2 + omega^2 q^2) / 2, on which HK is exact.
class HarmonicOscillator {
public:
    static constexpr int dof = 1;
    explicit HarmonicOscillator(double omega) : omega_(omega) {
        if (!(omega > 0.0)) throw ParameterError("HarmonicOscillator: omega must be positive");
    }
    [[nodiscard]] double omega() const noexcept { return omega_; }
    [[nodiscard]] bool interior(const PhaseSpacePoint<1>& z) const noexcept {
        return std::isfinite(z.q(0)) && std::isfinite(z.p(0));
    }
    bool evaluate(const PhaseSpacePoint<1>& z, Jet<1>& jet, bool with_hessian) const noexcept {
        const double w2 = omega_ * omega_;
        jet.value = 0.5 * (z.p(0) * z.p(0) + w2 * z.q(0) * z.q(0));
        jet.dq(0) = w2 * z.q(0);
        jet.dp(0) = z.p(0);
        if (with_hessian) {
            jet.qq(0, 0) = w2;
            jet.qp(0, 0) = 0.0;
            jet.pp(0, 0) = 1.0;
        }
        return true;
    }

private:
    double omega_;
};

template <int D>
using BoseSystem = std::conditional_t<D == 1, DoubleWell, TripleWell>;

// ---------------------------------------------------------------- point-wise API

template <int D>
struct PhaseSpaceVelocity {
    Vec<D> q_dot;
    Vec<D> p_dot;
};

template <HamiltonianSystem S>
Jet<S::dof> evaluate_checked(const S& sys, const PhaseSpacePoint<S::dof>& z, bool hessian, const char* what) {
    Jet<S::dof> jet;
    if (!sys.interior(z) || !sys.evaluate(z, jet, hessian))
        throw DomainError(std::string(what) + ": phase-space point outside the physical domain");
    return jet;
}

template <HamiltonianSystem S>
double hamiltonian_value(const S& sys, const PhaseSpacePoint<S::dof>& z) {
    Jet<S::dof> jet;
    if (!sys.evaluate(z, jet, false))
        throw DomainError("hamiltonian_value: phase-space point outside the physical domain");
    return jet.value;
}

template <int D>
double hamiltonian_value(const ModelParams& params, const PhaseSpacePoint<D>& z,
                         HamiltonianForm form = HamiltonianForm::mean_field) {
    return hamiltonian_value(BoseSystem<D>(params, form), z);
}

// Hamilton's equations: dq/dt = dH/dp, dp/dt = -dH/dq.
template <HamiltonianSystem S>
PhaseSpaceVelocity<S::dof> eom_rhs(const S& sys, const PhaseSpacePoint<S::dof>& z) {
    const auto jet = evaluate_checked(sys, z, false, "eom_rhs");
    return {jet.dp, -jet.dq};
}

template <int D>
PhaseSpaceVelocity<D> eom_rhs(const ModelParams& params, const PhaseSpacePoint<D>& z,
                              HamiltonianForm form = HamiltonianForm::mean_field) {
    return eom_rhs(BoseSystem<D>(params, form), z);
}

// Second derivatives ordered (q, p): [[H_qq, H_qp], [H_pq, H_pp]].
template <HamiltonianSystem S>
PhaseMatrix<S::dof> hessian(const S& sys, const PhaseSpacePoint<S::dof>& z) {
    constexpr int D = S::dof;
    const auto jet = evaluate_checked(sys, z, true, "hessian");
    PhaseMatrix<D> h;
    h.template topLeftCorner<D, D>() = jet.qq;
    h.template topRightCorner<D, D>() = jet.qp;
    h.template bottomLeftCorner<D, D>() = jet.qp.transpose();
    h.template bottomRightCorner<D, D>() = jet.pp;
    return h;
}

template <int D>
PhaseMatrix<D> hessian(const ModelParams& params, const PhaseSpacePoint<D>& z,
                       HamiltonianForm form = HamiltonianForm::mean_field) {
    return hessian(BoseSystem<D>(params, form), z);
}

// ------------------------------------------------------- HK prefactor determinant

// Monodromy blocks follow the (p, q) ordering of the HK literature:
//   M = [[dp_t/dp, dp_t/dq], [dq_t/dp, dq_t/dq]] = [[m11, m12], [m21, m22]].
// B = 1/2 (m22 + G^-1 m11 G - i m21 G + i G^-1 m12), G = diag(gamma), hbar = 1.
// For one degree of freedom det B = 1/2 (m11 + m22 - i gamma m21 - m12/(i gamma)).
template <int D>
Eigen::Matrix<std::complex<double>, D, D> prefactor_matrix(const PhaseMatrix<D>& m, const Vec<D>& gamma) {
    using CMat = Eigen::Matrix<std::complex<double>, D, D>;
    const Mat<D> m11 = m.template topLeftCorner<D, D>();
    const Mat<D> m12 = m.template topRightCorner<D, D>();
    const Mat<D> m21 = m.template bottomLeftCorner<D, D>();
    const Mat<D> m22 = m.template bottomRightCorner<D, D>();
    const auto g = gamma.asDiagonal();
    const auto g_inv = gamma.cwiseInverse().asDiagonal();
    const Mat<D> re = m22 + g_inv * m11 * g;
    const Mat<D> im = -(m21 * g) + g_inv * m12;
    CMat b;
    b.real() = 0.5 * re;
    b.imag() = 0.5 * im;
    return b;
}

// ----------------------------------------------------------- trajectory records

enum class TrajectoryStatus { alive, escaped, filtered, failed };

template <int D>
struct TrajectorySample {
    double t{0.0};
    PhaseSpacePoint<D> z;
    double action{0.0};
    PhaseMatrix<D> monodromy = PhaseMatrix<D>::Identity();
    double prefactor_phase{0.0}; // unwrapped arg det B
    double energy{0.0};
};

template <int D>
struct TrajectoryRecord {
    PhaseSpacePoint<D> initial;
    std::vector<TrajectorySample<D>> samples;
    TrajectoryStatus status{TrajectoryStatus::alive};
    double last_valid_time{0.0};
};

struct TrajectoryOptions {
    ode::IntegratorOptions integrator{};
};

namespace detail {

// State layout [q (D), p (D), S, M (4D^2, column-major), arg det B].
template <HamiltonianSystem S>
struct StabilityFlow {
    static constexpr int D = S::dof;
    static constexpr int N = 2 * D + 1 + 4 * D * D + 1;
    static constexpr int kAction = 2 * D;
    static constexpr int kMono = 2 * D + 1;
    static constexpr int kPhase = 2 * D + 1 + 4 * D * D;
    using State = Eigen::Matrix<double, N, 1>;

    const S& sys;
    Vec<D> gamma;

    static PhaseSpacePoint<D> point(const State& y) {
        PhaseSpacePoint<D> z;
        z.q = y.template segment<D>(0);
        z.p = y.template segment<D>(D);
        return z;
    }
    static PhaseMatrix<D> monodromy(const State& y) {
        return Eigen::Map<const PhaseMatrix<D>>(y.data() + kMono);
    }

    static State initial(const PhaseSpacePoint<D>& z0) {
        State y = State::Zero();
        y.template segment<D>(0) = z0.q;
        y.template segment<D>(D) = z0.p;
        Eigen::Map<PhaseMatrix<D>>(y.data() + kMono) = PhaseMatrix<D>::Identity();
        return y;
    }

    bool operator()(double, const State& y, State& dy) const {
        const auto z = point(y);
        if (!sys.interior(z)) return false;
        Jet<D> jet;
        if (!sys.evaluate(z, jet, true)) return false;
        dy.template segment<D>(0) = jet.dp;
        dy.template segment<D>(D) = -jet.dq;
        dy(kAction) = z.p.dot(jet.dp) - jet.value; // p dq/dt - H

        // Linearized flow in (p, q) ordering:
        //   d(dp)/dt = -H_qp dp - H_qq dq,   d(dq)/dt = H_pp dp + H_qp^T dq
        PhaseMatrix<D> a;
        a.template topLeftCorner<D, D>() = -jet.qp;
        a.template topRightCorner<D, D>() = -jet.qq;
        a.template bottomLeftCorner<D, D>() = jet.pp;
        a.template bottomRightCorner<D, D>() = jet.qp.transpose();
        const PhaseMatrix<D> m = monodromy(y);
        const PhaseMatrix<D> mdot = a * m;
        Eigen::Map<PhaseMatrix<D>>(dy.data() + kMono) = mdot;

        // d/dt arg det B = Im tr(B^-1 dB/dt); B is linear in M.
        const auto b = prefactor_matrix<D>(m, gamma);
        const auto bdot = prefactor_matrix<D>(mdot, gamma);
        dy(kPhase) = (b.inverse() * bdot).trace().imag();
        return true;
    }
};

template <HamiltonianSystem S>
struct PlainFlow {
    static constexpr int D = S::dof;
    static constexpr int N = 2 * D;
    using State = Eigen::Matrix<double, N, 1>;
    const S& sys;

    static PhaseSpacePoint<D> point(const State& y) {
        PhaseSpacePoint<D> z;
        z.q = y.template segment<D>(0);
        z.p = y.template segment<D>(D);
        return z;
    }
    static State initial(const PhaseSpacePoint<D>& z0) {
        State y;
        y.template segment<D>(0) = z0.q;
        y.template segment<D>(D) = z0.p;
        return y;
    }
    bool operator()(double, const State& y, State& dy) const {
        const auto z = point(y);
        if (!sys.interior(z)) return false;
        Jet<D> jet;
        if (!sys.evaluate(z, jet, false)) return false;
        dy.template segment<D>(0) = jet.dp;
        dy.template segment<D>(D) = -jet.dq;
        return true;
    }
};

inline TrajectoryStatus status_from(ode::Status s) {
    switch (s) {
    case ode::Status::completed:
    case ode::Status::stopped: return TrajectoryStatus::alive;
    case ode::Status::escaped: return TrajectoryStatus::escaped;
    default: return TrajectoryStatus::failed;
    }
}

} // namespace detail

// Streams (index, sample) for every output time reached. The callback returns false to
// stop early (e.g. prefactor filtering). Returns the integrator outcome.
template <HamiltonianSystem S, class Callback>
ode::Outcome propagate_with_stability(const S& sys, const PhaseSpacePoint<S::dof>& z0,
                                      std::span<const double> times, const Vec<S::dof>& gamma,
                                      const TrajectoryOptions& opts, Callback&& on_sample) {
    using Flow = detail::StabilityFlow<S>;
    constexpr int D = S::dof;
    Flow flow{sys, gamma};
    auto y = Flow::initial(z0);
    if (!sys.interior(z0)) {
        ode::Outcome o;
        o.status = ode::Status::escaped;
        o.last_time = times.empty() ? 0.0 : times.front();
        return o;
    }
    TrajectorySample<D> sample;
    Jet<D> jet;
    return ode::integrate<Flow::N>(flow, y, times, opts.integrator,
                                   [&](std::size_t idx, double t, const typename Flow::State& s) {
                                       sample.t = t;
                                       sample.z = Flow::point(s);
                                       sample.action = s(Flow::kAction);
                                       sample.monodromy = Flow::monodromy(s);
                                       sample.prefactor_phase = s(Flow::kPhase);
                                       sys.evaluate(sample.z, jet, false);
                                       sample.energy = jet.value;
                                       return on_sample(idx, static_cast<const TrajectorySample<D>&>(sample));
                                   });
}

// Trajectory only (no action or monodromy), as used by the truncated Wigner ensemble.
template <HamiltonianSystem S, class Callback>
ode::Outcome propagate(const S& sys, const PhaseSpacePoint<S::dof>& z0, std::span<const double> times,
                       const TrajectoryOptions& opts, Callback&& on_point) {
    using Flow = detail::PlainFlow<S>;
    Flow flow{sys};
    auto y = Flow::initial(z0);
    if (!sys.interior(z0)) {
        ode::Outcome o;
        o.status = ode::Status::escaped;
        o.last_time = times.empty() ? 0.0 : times.front();
        return o;
    }
    return ode::integrate<Flow::N>(flow, y, times, opts.integrator,
                                   [&](std::size_t idx, double t, const typename Flow::State& s) {
                                       return on_point(idx, t, Flow::point(s));
                                   });
}

template <HamiltonianSystem S>
TrajectoryRecord<S::dof> integrate_trajectory(const S& sys, const PhaseSpacePoint<S::dof>& z0,
                                              std::span<const double> times,
                                              const TrajectoryOptions& opts = {},
                                              const Vec<S::dof>& gamma = Vec<S::dof>::Ones()) {
    TrajectoryRecord<S::dof> rec;
    rec.initial = z0;
    rec.samples.reserve(times.size());
    const auto outcome = propagate_with_stability(sys, z0, times, gamma, opts,
                                                  [&](std::size_t, const TrajectorySample<S::dof>& s) {
                                                      rec.samples.push_back(s);
                                                      return true;
                                                  });
    rec.status = detail::status_from(outcome.status);
    rec.last_valid_time = outcome.last_time;
    return rec;
}

template <int D>
TrajectoryRecord<D> integrate_trajectory(const ModelParams& params, const PhaseSpacePoint<D>& z0,
                                         std::span<const double> times, const TrajectoryOptions& opts = {},
                                         HamiltonianForm form = HamiltonianForm::mean_field) {
    return integrate_trajectory(BoseSystem<D>(params, form), z0, times, opts);
}

} // namespace bhs
