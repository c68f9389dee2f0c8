#pragma once

#include "classical.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "exact.hpp"
#include "hk.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "twa.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#ifndef BHS_VERSION
#define BHS_VERSION "unknown"
#endif

namespace bhs {

inline constexpr const char* kVersion = BHS_VERSION;

// Exit codes of the command-line runner.
enum class ExitCode : int { success = 0, config_error = 2, numeric_failure = 3, flagged = 4 };

enum class BackendState { ok, flagged, failed };

inline std::string_view to_string(BackendState s) {
    switch (s) {
    case BackendState::ok: return "ok";
    case BackendState::flagged: return "flagged";
    case BackendState::failed: return "failed";
    }
    return "?";
}

struct BackendStatus {
    Backend backend{Backend::exact};
    BackendState state{BackendState::ok};
    std::string message;
};

struct ExperimentSummary {
    std::filesystem::path directory;
    std::vector<BackendStatus> statuses;
    nlohmann::json metrics;

    [[nodiscard]] ExitCode exit_code() const {
        ExitCode code = ExitCode::success;
        for (const auto& s : statuses) {
            if (s.state == BackendState::failed) return ExitCode::numeric_failure;
            if (s.state == BackendState::flagged) code = ExitCode::flagged;
        }
        return code;
    }
};

// The prepared initial state shared by every back-end.
template <int D>
struct PreparedState {
    ModelParams dynamics;                 // tilt switched off
    double delta{0.0};                    // tilt of the preparation Hamiltonian
    std::shared_ptr<const FockBasis> basis;
    QuantumState psi0;
    GaussianInitialState<D> gaussian;
};

template <int D>
PreparedState<D> prepare_initial_state(const ExperimentConfig& c) {
    static_assert(D == 1 || D == 2);
    if (c.model.modes != D + 1) throw ConfigError("prepare_initial_state: modes do not match the dimension");
    const ModelParams dyn = c.model.with_tilt(0.0);
    const double delta = c.preparation == PreparationKind::j_target
                             ? tilt_for_target_imbalance(dyn, c.preparation_value)
                             : c.preparation_value;
    auto basis = std::make_shared<const FockBasis>(dyn.modes, dyn.n_total);
    auto psi0 = ground_state(build_hamiltonian(dyn.with_tilt(delta), *basis), basis);
    auto g = fit_gaussian_to_ground_state<D>(psi0);
    return PreparedState<D>{dyn, delta, basis, std::move(psi0), g};
}

// p-coordinate names: j for the double well, n1 and n2 for the triple well.
template <int D>
std::vector<std::string> momentum_names() {
    if constexpr (D == 1) return {"j"};
    else return {"n1", "n2"};
}

template <int D>
std::vector<std::string> angle_names() {
    if constexpr (D == 1) return {"phi"};
    else return {"phi13", "phi23"};
}

namespace detail {

// Status messages only; data files keep full precision.
inline std::string brief(double x) {
    std::ostringstream o;
    o.precision(4);
    o << x;
    return o.str();
}

inline double observable(const QuantumState& psi, int dof) {
    return dof == 1 ? imbalance_expectation(psi) : occupation_expectation(psi, 1);
}

template <int D>
CsvTable wavefunction_table(const std::vector<double>& times, double omega_p, const FockBasis& basis,
                            const std::vector<Eigen::VectorXcd>& amplitudes) {
    std::vector<double> t, tw, re, im, prob;
    std::vector<std::vector<double>> p(D);
    for (std::size_t i = 0; i < times.size(); ++i)
        for (std::size_t k = 0; k < basis.dimension(); ++k) {
            t.push_back(times[i]);
            tw.push_back(times[i] * omega_p);
            const auto mom = basis_momentum<D>(basis, k);
            for (int d = 0; d < D; ++d) p[static_cast<std::size_t>(d)].push_back(mom(d));
            const auto a = amplitudes[i](static_cast<Eigen::Index>(k));
            prob.push_back(std::norm(a));
            re.push_back(a.real());
            im.push_back(a.imag());
        }
    CsvTable tab;
    tab.add("t", std::move(t));
    tab.add("t_omega_p", std::move(tw));
    const auto names = momentum_names<D>();
    for (int d = 0; d < D; ++d) tab.add(names[static_cast<std::size_t>(d)], std::move(p[static_cast<std::size_t>(d)]));
    tab.add("probability", std::move(prob));
    tab.add("re", std::move(re));
    tab.add("im", std::move(im));
    return tab;
}

inline nlohmann::json metrics_entry(const SeriesMetrics& m, double omega_p) {
    return {{"rms", m.rms},
            {"max_abs_dev", m.max_abs_dev},
            {"revival_amplitude", m.revival_amplitude},
            {"dominant_frequency", m.dominant_frequency},
            {"dominant_frequency_over_omega_p", m.dominant_frequency / omega_p}};
}

template <int D>
ExperimentSummary run_experiment_impl(const ExperimentConfig& c, const std::filesystem::path& root) {
    ExperimentSummary summary;
    summary.directory = root / c.output_dir;
    const auto& dir = summary.directory;
    std::filesystem::create_directories(dir);

    const auto prep = prepare_initial_state<D>(c);
    const double wp = c.omega_p();
    const auto times = c.time.raw_times(wp);
    const auto names = momentum_names<D>();
    const std::string obs = names.front();

    std::vector<double> t_wp(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) t_wp[i] = times[i] * wp;
    auto base_table = [&] {
        CsvTable tab;
        tab.add("t", times);
        tab.add("t_omega_p", t_wp);
        return tab;
    };

    EnsembleOptions ens;
    ens.form = c.ensemble_form;
    ens.trajectory.integrator = c.integrator;
    ens.workers = c.workers;
    ens.block_size = c.block_size;

    std::map<Backend, std::vector<double>> series;
    auto record = [&](Backend b, BackendState s, std::string msg = {}) {
        summary.statuses.push_back({b, s, std::move(msg)});
    };

    for (Backend b : c.backends) {
        try {
            switch (b) {
            case Backend::exact: {
                const auto states = evolve(build_hamiltonian(prep.dynamics, *prep.basis), prep.psi0, times);
                auto tab = base_table();
                std::vector<double> v(times.size());
                for (std::size_t i = 0; i < times.size(); ++i) v[i] = observable(states[i], D);
                tab.add(obs, v);
                if constexpr (D == 2) {
                    std::vector<double> n2(times.size());
                    for (std::size_t i = 0; i < times.size(); ++i) n2[i] = occupation_expectation(states[i], 2);
                    tab.add("n2", std::move(n2));
                }
                write_csv(dir / "exact.csv", tab);
                if (c.wavefunction) {
                    std::vector<Eigen::VectorXcd> amps;
                    amps.reserve(states.size());
                    for (const auto& s : states) amps.push_back(s.amplitudes());
                    write_csv(dir / "wavefunction_exact.csv", wavefunction_table<D>(times, wp, *prep.basis, amps));
                }
                series[b] = std::move(v);
                record(b, BackendState::ok);
                break;
            }
            case Backend::classical: {
                const BoseSystem<D> sys(prep.dynamics, c.classical_form);
                TrajectoryOptions opts;
                opts.integrator = c.integrator;
                const auto rec = integrate_trajectory(sys, prep.gaussian.center, times, opts);
                const std::size_t n = rec.samples.size();
                CsvTable tab;
                tab.add("t", std::vector<double>(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n)));
                tab.add("t_omega_p", std::vector<double>(t_wp.begin(), t_wp.begin() + static_cast<std::ptrdiff_t>(n)));
                const auto qn = angle_names<D>();
                for (int d = 0; d < D; ++d) {
                    std::vector<double> q(n), p(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        q[i] = rec.samples[i].z.q(d);
                        p[i] = rec.samples[i].z.p(d);
                    }
                    tab.add(qn[static_cast<std::size_t>(d)], std::move(q));
                    tab.add(names[static_cast<std::size_t>(d)], std::move(p));
                }
                std::vector<double> e(n), det(n), s(n);
                for (std::size_t i = 0; i < n; ++i) {
                    e[i] = rec.samples[i].energy;
                    det[i] = rec.samples[i].monodromy.determinant();
                    s[i] = rec.samples[i].action;
                }
                tab.add("energy", std::move(e));
                tab.add("det_monodromy", std::move(det));
                tab.add("action", std::move(s));
                write_csv(dir / "classical.csv", tab);
                if (n == times.size()) {
                    std::vector<double> v(n);
                    for (std::size_t i = 0; i < n; ++i) v[i] = rec.samples[i].z.p(0);
                    series[b] = std::move(v);
                    record(b, BackendState::ok);
                } else {
                    record(b, BackendState::flagged,
                           "trajectory left the phase-space domain at t=" + brief(rec.last_valid_time));
                }
                break;
            }
            case Backend::twa: {
                const auto r = run_twa<D>(prep.dynamics, prep.gaussian, times, c.twa->samples, c.twa->seed, ens);
                auto tab = base_table();
                tab.add(obs, r.mean);
                tab.add("stderr", r.standard_error);
                tab.add("alive", std::vector<double>(r.alive.begin(), r.alive.end()));
                write_csv(dir / "twa.csv", tab);
                series[b] = r.mean;
                if (r.flagged)
                    record(b, BackendState::flagged,
                           "escaped fraction " + brief(r.escaped_fraction) + " exceeds " +
                               brief(kEscapedFractionFlag));
                else
                    record(b, BackendState::ok);
                break;
            }
            case Backend::hk: {
                const auto r = run_hk<D>(prep.dynamics, prep.gaussian, times, *c.hk, ens);
                const auto& wf = r.wavefunction;
                auto tab = base_table();
                tab.add(obs, r.ensemble.mean);
                tab.add("raw_norm", wf.raw_norm);
                tab.add("filtered_fraction", wf.filtered_fraction);
                tab.add("escaped_fraction", wf.escaped_fraction);
                tab.add("alive", std::vector<double>(r.ensemble.alive.begin(), r.ensemble.alive.end()));
                write_csv(dir / "hk.csv", tab);
                if (c.wavefunction) {
                    std::vector<Eigen::VectorXcd> amps;
                    for (std::size_t i = 0; i < times.size(); ++i) amps.push_back(wf.to_state(i, prep.basis).amplitudes());
                    write_csv(dir / "wavefunction_hk.csv", wavefunction_table<D>(times, wp, *prep.basis, amps));
                }
                series[b] = r.ensemble.mean;
                if (r.ensemble.flagged)
                    record(b, BackendState::flagged,
                           "filtered fraction " + brief(wf.final_filtered_fraction()) + " reaches " +
                               brief(kFilteredFractionFlag));
                else
                    record(b, BackendState::ok);
                break;
            }
            }
        } catch (const NumericError& e) {
            record(b, BackendState::failed, e.what());
        } catch (const ParameterError& e) {
            record(b, BackendState::failed, e.what());
        }
    }

    // combined comparison on the shared grid
    {
        auto tab = base_table();
        for (Backend b : c.backends)
            if (series.contains(b)) tab.add(std::string(to_string(b)), series[b]);
        write_csv(dir / "comparison.csv", tab);
    }

    // phase-space portrait inputs
    if (c.phase_space.samples > 0) {
        const auto pts = sample_wigner(prep.gaussian, c.phase_space.samples, c.phase_space.seed);
        const BoseSystem<D> sys(prep.dynamics, c.classical_form);
        CsvTable tab;
        const auto qn = angle_names<D>();
        for (int d = 0; d < D; ++d) {
            std::vector<double> q, p;
            for (const auto& z : pts) {
                q.push_back(z.q(d));
                p.push_back(z.p(d));
            }
            tab.add(qn[static_cast<std::size_t>(d)], std::move(q));
            tab.add(names[static_cast<std::size_t>(d)], std::move(p));
        }
        std::vector<double> e;
        for (const auto& z : pts) {
            Jet<D> jet;
            e.push_back(sys.evaluate(z, jet, false) ? jet.value : std::numeric_limits<double>::quiet_NaN());
        }
        tab.add("energy", std::move(e));
        write_csv(dir / "wigner_samples.csv", tab);
    }
    if constexpr (D == 1) {
        if (c.phase_space.grid_q >= 2 && c.phase_space.grid_p >= 2) {
            const DoubleWell sys(prep.dynamics, c.classical_form);
            const double half = 0.5 * prep.dynamics.n_total;
            std::vector<double> qs, ps, hs;
            for (std::size_t a = 0; a < c.phase_space.grid_q; ++a)
                for (std::size_t b = 0; b < c.phase_space.grid_p; ++b) {
                    PhaseSpacePoint<1> z;
                    z.q(0) = -std::numbers::pi +
                             2.0 * std::numbers::pi * static_cast<double>(a) / static_cast<double>(c.phase_space.grid_q - 1);
                    z.p(0) = -half + 2.0 * half * static_cast<double>(b) / static_cast<double>(c.phase_space.grid_p - 1);
                    Jet<1> jet;
                    qs.push_back(z.q(0));
                    ps.push_back(z.p(0));
                    hs.push_back(sys.evaluate(z, jet, false) ? jet.value : std::numeric_limits<double>::quiet_NaN());
                }
            CsvTable tab;
            tab.add("phi", std::move(qs));
            tab.add("j", std::move(ps));
            tab.add("energy", std::move(hs));
            write_csv(dir / "hamiltonian_grid.csv", tab);
        }
    }

    // metrics against the exact series
    nlohmann::json m = nlohmann::json::object();
    if (series.contains(Backend::exact)) {
        const double unit = c.time.unit(wp);
        const TimeWindow w = c.window ? TimeWindow{c.window->t0 * unit, c.window->t1 * unit}
                                      : TimeWindow{times.front(), times.back()};
        const auto& ex = series[Backend::exact];
        m["window"] = {w.t0, w.t1};
        m["omega_p"] = wp;
        nlohmann::json exact{{"dominant_frequency", dominant_frequency(times, ex, w)}};
        exact["dominant_frequency_over_omega_p"] = exact["dominant_frequency"].get<double>() / wp;
        std::optional<TimeWindow> rw;
        if (c.revival_window) {
            rw = TimeWindow{c.revival_window->t0 * unit, c.revival_window->t1 * unit};
            m["revival_window"] = {rw->t0, rw->t1};
            exact["revival_amplitude"] = revival_amplitude(times, ex, *rw);
        }
        m["exact"] = exact;
        for (Backend b : c.backends) {
            if (b == Backend::exact || !series.contains(b)) continue;
            const auto sm = compare_metrics(times, series[b], ex, w, rw.value_or(w));
            auto entry = metrics_entry(sm, wp);
            if (!rw) entry.erase("revival_amplitude");
            m[std::string(to_string(b))] = entry;
        }
        std::ofstream(dir / "metrics.json") << m.dump(2) << '\n';
    }
    summary.metrics = m;

    // manifest: the canonical config plus derived values and back-end status
    {
        std::ofstream out(dir / "manifest.conf", std::ios::binary);
        out << to_config_text(c);
        out << "[provenance]\nversion = " << kVersion << "\n";
        if (c.twa) out << "twa_seed = " << c.twa->seed << "\n";
        if (c.hk) out << "hk_seed = " << c.hk->seed << "\n";
        if (c.phase_space.samples > 0) out << "phase_space_seed = " << c.phase_space.seed << "\n";
        out << "\n[computed]\n"
            << "lambda = " << format_double(c.model.lambda()) << "\n"
            << "omega_p = " << format_double(wp) << "\n"
            << "preparation_delta = " << format_double(prep.delta) << "\n"
            << "initial_imbalance = " << format_double(observable(prep.psi0, D)) << "\n"
            << "gaussian_fit_residual = " << format_double(prep.gaussian.fit_residual) << "\n";
        for (int d = 0; d < D; ++d) {
            out << "gaussian_q" << d << " = " << format_double(prep.gaussian.center.q(d)) << "\n"
                << "gaussian_p" << d << " = " << format_double(prep.gaussian.center.p(d)) << "\n"
                << "gaussian_gamma" << d << " = " << format_double(prep.gaussian.gamma(d)) << "\n";
        }
        out << "\n[status]\n";
        for (const auto& s : summary.statuses) {
            out << to_string(s.backend) << " = " << to_string(s.state);
            if (!s.message.empty()) out << ": " << s.message;
            out << "\n";
        }
        if (prep.gaussian.non_gaussian_warning) out << "warning = initial state is far from Gaussian\n";
    }
    return summary;
}

} // namespace detail

// Runs every requested back-end on the same prepared state and writes
// <root>/<output_dir>/{exact,classical,twa,hk,comparison}.csv, metrics.json and manifest.conf.
// A failing back-end is recorded in the manifest; the others still run.
inline ExperimentSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& output_root) {
    config.validate();
    if (config.model.modes == 2) return detail::run_experiment_impl<1>(config, output_root);
    return detail::run_experiment_impl<2>(config, output_root);
}

} // namespace bhs
