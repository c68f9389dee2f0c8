#include "bhs/hk.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace bhs;

namespace {

std::shared_ptr<const FockBasis> basis_of(int m, int n) { return std::make_shared<const FockBasis>(m, n); }

PhaseSpacePoint<1> pt1(double q, double p) {
    PhaseSpacePoint<1> z;
    z.q(0) = q;
    z.p(0) = p;
    return z;
}

std::vector<double> grid(double t_max, int steps) {
    std::vector<double> t(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) t[static_cast<std::size_t>(i)] = t_max * i / steps;
    return t;
}

// <z_a|z_b> by trapezoid quadrature of position-space Gaussians
//   <x|z> = (gamma/pi)^(1/4) exp(-gamma/2 (x - q)^2 + i p (x - q))
cplx quadrature_overlap(const PhaseSpacePoint<1>& a, double ga, const PhaseSpacePoint<1>& b, double gb) {
    auto psi = [](const PhaseSpacePoint<1>& z, double g, double x) {
        const double d = x - z.q(0);
        return std::pow(g / std::numbers::pi, 0.25) * std::exp(cplx(-0.5 * g * d * d, z.p(0) * d));
    };
    const double lo = std::min(a.q(0), b.q(0)) - 12.0, hi = std::max(a.q(0), b.q(0)) + 12.0;
    const int n = 40000;
    const double h = (hi - lo) / n;
    cplx s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + h * i;
        s += (i == 0 || i == n ? 0.5 : 1.0) * std::conj(psi(a, ga, x)) * psi(b, gb, x);
    }
    return s * h;
}

struct Prepared {
    ModelParams params;
    std::shared_ptr<const FockBasis> basis;
    QuantumState psi0;
    GaussianInitialState<1> init;
};

Prepared fig1() {
    const auto p = ModelParams::from_lambda(2, 100, 10.0, 10.0);
    auto b = basis_of(2, 100);
    auto psi = ground_state(build_hamiltonian(p.with_tilt(tilt_for_target_imbalance(p, 14.0)), *b), b);
    auto init = fit_gaussian_to_ground_state<1>(psi);
    return {p, b, std::move(psi), init};
}

} // namespace

TEST(Overlap, SelfAndSymmetry) {
    const Vec<1> g(2.5);
    const auto a = pt1(0.3, 4.0), b = pt1(-0.7, 2.5);
    EXPECT_NEAR(std::abs(coherent_overlap<1>(a, a, g) - 1.0), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(coherent_overlap<1>(a, b, g)), std::abs(coherent_overlap<1>(b, a, g)), 1e-15);
    EXPECT_NEAR(std::abs(coherent_overlap<1>(a, b, g) - std::conj(coherent_overlap<1>(b, a, g))), 0.0, 1e-15);
}

TEST(Overlap, MatchesQuadrature) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> q(-1.5, 1.5), p(-3, 3), g(0.5, 3.0);
    for (int k = 0; k < 10; ++k) {
        const auto a = pt1(q(rng), p(rng)), b = pt1(q(rng), p(rng));
        const double ga = g(rng), gb = g(rng);
        EXPECT_LT(std::abs(coherent_overlap<1>(a, b, Vec<1>(ga)) - quadrature_overlap(a, ga, b, ga)), 1e-10);
        EXPECT_LT(std::abs(gaussian_overlap<1>(a, Vec<1>(ga), b, Vec<1>(gb)) - quadrature_overlap(a, ga, b, gb)), 1e-10);
    }
}

TEST(Overlap, LatticeSumReproducesAnalyticOverlap) {
    // sum_p <z_a|p><p|z_b> on a fine momentum grid fixes the phase convention of <p|z>
    const Lattice<1> lat(-30.0, 0.01, 6001);
    const Vec<1> g(3.0);
    const auto a = pt1(0.4, 1.5), b = pt1(-0.3, -0.5);
    std::vector<cplx> va(lat.size(), 0.0), vb(lat.size(), 0.0);
    Lattice<1>::Scratch s;
    lat.accumulate(a, g, 1.0, va.data(), s);
    lat.accumulate(b, g, 1.0, vb.data(), s);
    cplx sum = 0.0;
    for (std::size_t k = 0; k < lat.size(); ++k) sum += std::conj(va[k]) * vb[k];
    EXPECT_LT(std::abs(sum - coherent_overlap<1>(a, b, g)), 1e-10);
    // recurrences agree with the closed form point by point
    for (std::size_t k = 0; k < lat.size(); k += 97)
        EXPECT_LT(std::abs(va[k] - momentum_amplitude<1>(a, g, lat.point(k)) * std::sqrt(0.01)), 1e-12);
}

TEST(Overlap, TriangleLatticeMatchesBasisProjection) {
    auto b = basis_of(3, 12);
    const Lattice<2> lat(12);
    ASSERT_EQ(lat.size(), b->dimension());
    PhaseSpacePoint<2> z;
    z.q << 0.4, -1.1;
    z.p << 3.5, 5.2;
    const Vec<2> g(2.0, 3.5);
    const auto direct = gaussian_on_basis<2>(z, g, b);
    const auto on_lattice = gaussian_on_lattice<2>(lat, z, g);
    for (std::size_t k = 0; k < lat.size(); ++k)
        EXPECT_LT(std::abs(on_lattice[k] - direct.amplitude(lat.basis_index(k, *b))), 1e-12);
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const auto p = lat.point(k);
        EXPECT_EQ(b->occupation(lat.basis_index(k, *b), 0), static_cast<int>(p(0)));
        EXPECT_EQ(b->occupation(lat.basis_index(k, *b), 1), static_cast<int>(p(1)));
    }
}

TEST(Prefactor, IdentityAndHarmonicPurePhase) {
    const auto r0 = hk_prefactor<1>(PhaseMatrix<1>::Identity(), Vec<1>(3.0), 0.0);
    EXPECT_NEAR(std::abs(r0.value - 1.0), 0.0, 1e-15);
    EXPECT_EQ(r0.phase, 0.0);
    const auto r2 = hk_prefactor<2>(PhaseMatrix<2>::Identity(), Vec<2>(1.0, 4.0), 0.0);
    EXPECT_NEAR(std::abs(r2.value - 1.0), 0.0, 1e-15);

    // harmonic oscillator with gamma = omega: det B = exp(-i omega t)
    const double w = 1.7;
    double phase = 0.0;
    for (int i = 1; i <= 400; ++i) {
        const double t = 0.05 * i;
        PhaseMatrix<1> m;
        m << std::cos(w * t), -w * std::sin(w * t), std::sin(w * t) / w, std::cos(w * t);
        const auto r = hk_prefactor<1>(m, Vec<1>(w), phase);
        EXPECT_NEAR(std::abs(r.value), 1.0, 1e-12);
        EXPECT_NEAR(r.phase, -w * t, 1e-10);
        phase = r.phase;
    }
}

TEST(Prefactor, BranchAmbiguityIsReported) {
    const double w = 1.0;
    PhaseMatrix<1> m;
    m << std::cos(2.0), -std::sin(2.0), std::sin(2.0), std::cos(2.0);
    EXPECT_THROW(hk_prefactor<1>(m, Vec<1>(w), 0.0, 1.0), BranchAmbiguityError);
    EXPECT_NO_THROW(hk_prefactor<1>(m, Vec<1>(w), -1.9, 1.0));
}

TEST(Prefactor, GrowsAtHyperbolicPoint) {
    // pi-mode (phi = pi, j = 0) is hyperbolic for Lambda > 1 with exponent 2T sqrt(Lambda - 1)
    const auto p = ModelParams::from_lambda(2, 100, 10.0, 10.0);
    const double lambda = 2.0 * 10.0 * std::sqrt(10.0 - 1.0);
    const auto t = grid(0.3, 30);
    const Vec<1> g(14.6);
    const auto rec = integrate_trajectory(DoubleWell(p), pt1(std::numbers::pi, 0.0), t, {}, g);
    ASSERT_EQ(rec.samples.size(), t.size());
    double phase = 0.0;
    std::vector<double> logr;
    for (const auto& s : rec.samples) {
        const auto r = hk_prefactor<1>(s.monodromy, g, phase);
        phase = r.phase;
        logr.push_back(std::log(std::abs(r.value)));
    }
    const double rate = (logr[30] - logr[20]) / (t[30] - t[20]);
    EXPECT_NEAR(rate, 0.5 * lambda, 0.05 * lambda);
}

TEST(Sampling, DensityVariances) {
    GaussianInitialState<1> init;
    init.center = pt1(0.2, 10.0);
    init.gamma(0) = 4.0;
    HKConfig cfg;
    cfg.sample_count = 200'000;
    for (auto [mode, seq] : {std::pair{HKSampling::overlap_squared, HKSequence::sobol},
                             std::pair{HKSampling::overlap, HKSequence::sobol},
                             std::pair{HKSampling::overlap, HKSequence::pseudo_random}}) {
        cfg.sampling = mode;
        cfg.sequence = seq;
        const auto pts = sample_initial_conditions(init, cfg);
        double vq = 0, vp = 0;
        for (const auto& w : pts) {
            vq += std::pow(w.z.q(0) - 0.2, 2);
            vp += std::pow(w.z.p(0) - 10.0, 2);
        }
        vq /= pts.size();
        vp /= pts.size();
        const double k = mode == HKSampling::overlap_squared ? 1.0 : 2.0;
        const double n = static_cast<double>(pts.size());
        EXPECT_NEAR(vq, k / 4.0, 5 * (k / 4.0) * std::sqrt(2.0 / n));
        EXPECT_NEAR(vp, k * 4.0, 5 * (k * 4.0) * std::sqrt(2.0 / n));
    }
    cfg.sample_count = 10;
    const auto a = sample_initial_conditions(init, cfg);
    const auto b = sample_initial_conditions(init, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].z.q, b[i].z.q);
        EXPECT_EQ(a[i].weight, b[i].weight);
    }
}

TEST(Sampling, ConfigValidation) {
    HKConfig cfg;
    cfg.prefactor_cutoff = 1.0;
    EXPECT_THROW(cfg.validate(1), ParameterError);
    cfg.prefactor_cutoff = 10.0;
    cfg.sample_count = 0;
    EXPECT_THROW(cfg.validate(1), ParameterError);
    cfg.sample_count = 5;
    cfg.gamma_override = {1.0};
    EXPECT_THROW(cfg.validate(2), ParameterError);
    EXPECT_NO_THROW(cfg.validate(1));
}

TEST(RunHk, IdentityAtTimeZero) {
    const auto f = fig1();
    const std::vector<double> t{0.0};
    HKConfig cfg;
    cfg.sample_count = 10'000;
    const auto r = run_hk<1>(f.params, f.init, t, cfg);
    const auto g = gaussian_on_basis<1>(f.init.center, f.init.gamma, f.basis);
    EXPECT_GE(fidelity(r.wavefunction.to_state(0, f.basis), g), 0.999);
    EXPECT_NEAR(r.wavefunction.raw_norm[0], 1.0, 0.05);
    EXPECT_NEAR(r.ensemble.mean[0], f.init.center.p(0), 0.5);

    // triple well
    const ModelParams p3{3, 30, 10.0, 1.0, 10.0};
    auto b3 = basis_of(3, 30);
    const auto psi3 = ground_state(build_hamiltonian(p3, *b3), b3);
    const auto init3 = fit_gaussian_to_ground_state<2>(psi3);
    const auto r3 = run_hk<2>(p3.with_tilt(0.0), init3, t, cfg);
    EXPECT_GE(fidelity(r3.wavefunction.to_state(0, b3), gaussian_on_basis<2>(init3.center, init3.gamma, b3)), 0.999);
}

TEST(RunHk, HarmonicOscillatorIsExact) {
    const double w = 1.3;
    const HarmonicOscillator ho(w);
    GaussianInitialState<1> init;
    init.center = pt1(1.2, -0.4);
    init.gamma(0) = w;
    const double period = 2.0 * std::numbers::pi / w;
    const auto t = grid(10 * period, 200);
    const Lattice<1> lat(-8.0, 0.05, 321);
    std::vector<double> deficit;
    for (std::size_t n : {1000u, 3000u, 10000u}) {
        HKConfig cfg;
        cfg.sample_count = n;
        cfg.seed = 5;
        const auto r = run_hk(ho, init, t, cfg, lat);
        double worst = 1.0, mean_def = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            // coherent state orbit: frozen width, center on the classical ellipse
            const double c = std::cos(w * t[i]), s = std::sin(w * t[i]);
            const auto zt = pt1(init.center.q(0) * c + init.center.p(0) * s / w,
                                init.center.p(0) * c - init.center.q(0) * w * s);
            const auto exact = gaussian_on_lattice<1>(lat, zt, init.gamma);
            const double f = lattice_fidelity(exact, r.wavefunction.slice(i));
            worst = std::min(worst, f);
            mean_def += 1.0 - f;
        }
        deficit.push_back(mean_def / static_cast<double>(t.size()));
        if (n == 10000u) {
            EXPECT_GE(worst, 0.995);
        }
        EXPECT_EQ(r.wavefunction.final_filtered_fraction(), 0.0);
    }
    EXPECT_GT(deficit[0], deficit[1]);
    EXPECT_GT(deficit[1], deficit[2]);
}

TEST(RunHk, RenormalizationAndRawNorm) {
    const auto f = fig1();
    const auto t = grid(0.3, 10);
    HKConfig cfg;
    cfg.sample_count = 500;
    const auto on = run_hk<1>(f.params, f.init, t, cfg);
    cfg.renormalize = false;
    const auto off = run_hk<1>(f.params, f.init, t, cfg);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double n_on = 0, n_off = 0;
        for (auto a : on.wavefunction.slice(i)) n_on += std::norm(a);
        for (auto a : off.wavefunction.slice(i)) n_off += std::norm(a);
        EXPECT_NEAR(n_on, 1.0, 1e-10);
        EXPECT_NEAR(n_off, off.wavefunction.raw_norm[i], 1e-12);
        EXPECT_EQ(on.wavefunction.raw_norm[i], off.wavefunction.raw_norm[i]);
        EXPECT_EQ(on.ensemble.mean[i], off.ensemble.mean[i]);
    }
}

TEST(RunHk, FilteringFlagsAndNormCollapse) {
    const auto f = fig1();
    const auto t = grid(0.5, 50);
    HKConfig cfg;
    cfg.sample_count = 400;
    cfg.prefactor_cutoff = 1.2;
    const auto r = run_hk<1>(f.params, f.init, t, cfg);
    const auto& ff = r.wavefunction.filtered_fraction;
    for (std::size_t i = 1; i < ff.size(); ++i) EXPECT_GE(ff[i], ff[i - 1]);
    EXPECT_GE(r.wavefunction.final_filtered_fraction(), kFilteredFractionFlag);
    EXPECT_TRUE(r.ensemble.flagged);
    EXPECT_LT(r.ensemble.alive.back(), 400u);

    cfg.prefactor_cutoff = 1.0001;
    EXPECT_THROW(run_hk<1>(f.params, f.init, grid(3.0, 300), cfg), NumericError);
}

TEST(RunHk, DeterministicAcrossWorkerCounts) {
    const ModelParams p{3, 30, 10.0, 1.0, 10.0};
    auto b = basis_of(3, 30);
    const auto init = fit_gaussian_to_ground_state<2>(ground_state(build_hamiltonian(p, *b), b));
    const auto t = grid(0.1, 10);
    HKConfig cfg;
    cfg.sample_count = 300;
    EnsembleOptions one, many;
    one.block_size = many.block_size = 32;
    many.workers = 4;
    const auto a = run_hk<2>(p.with_tilt(0.0), init, t, cfg, one);
    const auto c = run_hk<2>(p.with_tilt(0.0), init, t, cfg, many);
    EXPECT_EQ(a.wavefunction.amplitudes, c.wavefunction.amplitudes);
    EXPECT_EQ(a.ensemble.mean, c.ensemble.mean);
}

TEST(RunHk, ConvergesTowardExactWithSamples) {
    const auto f = fig1();
    const double period = 2.0 * std::numbers::pi / plasma_frequency(f.params);
    const std::vector<double> t{0.0, 3 * period};
    const auto exact = evolve(build_hamiltonian(f.params, *f.basis), f.psi0, t);
    std::vector<double> deficit;
    for (std::size_t n : {1000u, 3000u, 10000u}) {
        HKConfig cfg;
        cfg.sample_count = n;
        const auto r = run_hk<1>(f.params, f.init, t, cfg);
        deficit.push_back(1.0 - fidelity(r.wavefunction.to_state(1, f.basis), exact[1]));
    }
    EXPECT_GT(deficit[0], deficit[2]);
    EXPECT_GT(deficit[1], deficit[2]);
}
