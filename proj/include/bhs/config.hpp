#pragma once

#include "classical.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "hk.hpp"
#include "metrics.hpp"
#include "model.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bhs {

enum class Backend { exact, classical, twa, hk };
enum class TimeUnits { raw, omega_p, plasma_periods };
enum class PreparationKind { j_target, delta };

inline std::string_view to_string(Backend b) {
    switch (b) {
    case Backend::exact: return "exact";
    case Backend::classical: return "classical";
    case Backend::twa: return "twa";
    case Backend::hk: return "hk";
    }
    return "?";
}

inline std::string_view to_string(TimeUnits u) {
    switch (u) {
    case TimeUnits::raw: return "raw";
    case TimeUnits::omega_p: return "omega_p";
    case TimeUnits::plasma_periods: return "plasma_periods";
    }
    return "?";
}

inline std::string_view to_string(HamiltonianForm f) { return f == HamiltonianForm::weyl ? "weyl" : "mean_field"; }
inline std::string_view to_string(HKSampling s) { return s == HKSampling::overlap ? "overlap" : "overlap_squared"; }
inline std::string_view to_string(HKSequence s) { return s == HKSequence::sobol ? "sobol" : "pseudo_random"; }

struct TimeGrid {
    double t_max{1.0};
    std::size_t steps{100};
    TimeUnits units{TimeUnits::plasma_periods};

    // Factor converting config time units into raw time.
    [[nodiscard]] double unit(double omega_p) const {
        switch (units) {
        case TimeUnits::raw: return 1.0;
        case TimeUnits::omega_p: return 1.0 / omega_p;
        case TimeUnits::plasma_periods: return 2.0 * std::numbers::pi / omega_p;
        }
        return 1.0;
    }

    [[nodiscard]] std::vector<double> raw_times(double omega_p) const {
        const double scale = unit(omega_p) * t_max;
        std::vector<double> t(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i)
            t[i] = scale * static_cast<double>(i) / static_cast<double>(steps);
        return t;
    }
};

struct TwaSettings {
    std::size_t samples{0};
    std::uint64_t seed{0};
};

// Wigner samples of the initial state and a grid of H(q, p), for phase-space portraits.
struct PhaseSpaceSettings {
    std::size_t samples{0};
    std::uint64_t seed{0};
    std::size_t grid_q{0};
    std::size_t grid_p{0};
};

struct ExperimentConfig {
    std::string name;
    std::vector<Backend> backends;
    std::string output_dir;
    unsigned workers{1};
    std::size_t block_size{64};

    ModelParams model;
    PreparationKind preparation{PreparationKind::j_target};
    double preparation_value{0.0};
    TimeGrid time;

    ode::IntegratorOptions integrator;
    HamiltonianForm ensemble_form{HamiltonianForm::weyl};
    HamiltonianForm classical_form{HamiltonianForm::mean_field};

    std::optional<TwaSettings> twa;
    std::optional<HKConfig> hk;

    // In config time units.
    std::optional<TimeWindow> window;
    std::optional<TimeWindow> revival_window;

    bool wavefunction{false};
    PhaseSpaceSettings phase_space;

    [[nodiscard]] bool has(Backend b) const {
        return std::find(backends.begin(), backends.end(), b) != backends.end();
    }

    [[nodiscard]] double omega_p() const { return plasma_frequency(model); }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
        if (name.empty()) fail("[experiment] name is required");
        if (backends.empty()) fail("at least one backend is required");
        try {
            model.validate();
        } catch (const ParameterError& e) {
            fail(e.what());
        }
        if (preparation == PreparationKind::j_target) {
            if (model.modes != 2) fail("[preparation] j_target needs modes = 2; use delta for the triple well");
            if (!(std::abs(preparation_value) < 0.5 * model.n_total)) fail("[preparation] |j_target| must be < N/2");
        }
        if (!(time.t_max > 0.0) || !std::isfinite(time.t_max)) fail("[time] t_max must be positive");
        if (time.steps < 1) fail("[time] steps must be >= 1");
        if (!(integrator.rtol > 0.0) || !(integrator.atol > 0.0)) fail("[integrator] tolerances must be positive");
        if (workers < 1) fail("[experiment] workers must be >= 1");
        if (block_size < 1) fail("[experiment] block_size must be >= 1");
        if (has(Backend::twa) && !twa) fail("[twa] samples and seed are required when the twa backend is enabled");
        if (has(Backend::hk) && !hk) fail("[hk] samples and seed are required when the hk backend is enabled");
        if (twa && twa->samples < 1) fail("[twa] samples must be >= 1");
        if (hk) {
            try {
                hk->validate(model.modes - 1);
            } catch (const ParameterError& e) {
                fail(e.what());
            }
        }
        for (const auto* w : {&window, &revival_window})
            if (*w && !((*w)->t1 > (*w)->t0 && (*w)->t0 >= 0.0 && (*w)->t1 <= time.t_max * (1.0 + 1e-12)))
                fail("[metrics] windows must satisfy 0 <= t0 < t1 <= t_max");
        if ((window || revival_window) && !has(Backend::exact)) fail("[metrics] windows need the exact backend");
        if (phase_space.samples > 0 && (phase_space.grid_q < 2 || phase_space.grid_p < 2) &&
            (phase_space.grid_q || phase_space.grid_p))
            fail("[phase_space] grid sizes must both be >= 2");
        if (model.modes != 2 && (phase_space.grid_q || phase_space.grid_p))
            fail("[phase_space] the H(q, p) grid is available for the double well only");
    }
};

// ------------------------------------------------------------------- schema

struct ConfigKey {
    std::string_view section;
    std::string_view key;
    std::string_view type; // string, integer, number, boolean, enum, list, window
    std::string_view requirement;
    std::string_view fallback;
    std::vector<std::string_view> choices;
    std::string_view description;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"experiment", "name", "string", "required", "", {}, "experiment label"},
        {"experiment", "backends", "list", "required", "", {"exact", "classical", "twa", "hk"},
         "comma-separated back-ends to run on the same initial state"},
        {"experiment", "output_dir", "string", "optional", "<name>", {},
         "output directory, relative to the output root"},
        {"experiment", "workers", "integer", "optional", "1", {}, "threads for trajectory ensembles"},
        {"experiment", "block_size", "integer", "optional", "64", {}, "trajectories per work block"},
        {"model", "modes", "integer", "required", "", {"2", "3"}, "number of wells"},
        {"model", "n_total", "integer", "required", "", {}, "total particle number N"},
        {"model", "tunneling", "number", "required", "", {}, "hopping T"},
        {"model", "interaction", "number", "one of interaction, lambda", "", {}, "on-site U"},
        {"model", "lambda", "number", "one of interaction, lambda", "", {}, "U N / T"},
        {"preparation", "j_target", "number", "one of j_target, delta", "", {},
         "target imbalance of the tilted ground state (double well)"},
        {"preparation", "delta", "number", "one of j_target, delta", "", {},
         "tilt of the preparation Hamiltonian, switched off at t = 0"},
        {"time", "t_max", "number", "required", "", {}, "end of the time grid, in `units`"},
        {"time", "steps", "integer", "required", "", {}, "number of intervals; the grid has steps + 1 points"},
        {"time", "units", "enum", "optional", "plasma_periods", {"raw", "omega_p", "plasma_periods"},
         "raw t, t * omega_p, or t * omega_p / (2 pi)"},
        {"integrator", "rtol", "number", "optional", "1e-10", {}, "relative tolerance"},
        {"integrator", "atol", "number", "optional", "1e-10", {}, "absolute tolerance"},
        {"integrator", "max_steps", "integer", "optional", "100000000", {}, "step budget per trajectory"},
        {"ensemble", "form", "enum", "optional", "weyl", {"weyl", "mean_field"},
         "classical Hamiltonian used by twa and hk"},
        {"classical", "form", "enum", "optional", "mean_field", {"weyl", "mean_field"},
         "classical Hamiltonian of the single mean-field trajectory"},
        {"twa", "samples", "integer", "required with twa", "", {}, "Wigner samples"},
        {"twa", "seed", "integer", "required with twa", "", {}, "sampling seed"},
        {"hk", "samples", "integer", "required with hk", "", {}, "initial conditions"},
        {"hk", "seed", "integer", "required with hk", "", {}, "sampling seed"},
        {"hk", "prefactor_cutoff", "number", "optional", "10", {}, "drop trajectories once |R| exceeds this"},
        {"hk", "renormalize", "boolean", "optional", "true", {}, "normalize the wavefunction at each time"},
        {"hk", "sampling", "enum", "optional", "overlap", {"overlap", "overlap_squared"},
         "importance density |<z|z0>| or |<z|z0>|^2"},
        {"hk", "sequence", "enum", "optional", "sobol", {"sobol", "pseudo_random"},
         "source of the normal deviates"},
        {"hk", "gamma_override", "list", "optional", "<fitted width>", {}, "propagator widths, one per degree of freedom"},
        {"metrics", "window", "window", "optional", "<whole grid>", {}, "t0, t1 for rms and frequency"},
        {"metrics", "revival_window", "window", "optional", "<none>", {}, "t0, t1 for the revival amplitude"},
        {"output", "wavefunction", "boolean", "optional", "false", {},
         "write |psi|^2 grids for exact and hk"},
        {"phase_space", "samples", "integer", "optional", "0", {}, "Wigner samples of the initial state to write"},
        {"phase_space", "seed", "integer", "required with samples", "", {}, "sampling seed"},
        {"phase_space", "grid_q", "integer", "optional", "0", {}, "H(q, p) grid points along q"},
        {"phase_space", "grid_p", "integer", "optional", "0", {}, "H(q, p) grid points along p"},
    };
    return keys;
}

// Sections written into manifests and skipped when a manifest is read back as a config.
inline const std::set<std::string, std::less<>>& informational_sections() {
    static const std::set<std::string, std::less<>> s{"provenance", "status", "computed"};
    return s;
}

inline nlohmann::json config_schema() {
    nlohmann::json j;
    j["format"] = "INI-style: [section] headers, key = value lines, '#' or ';' starts a comment line";
    j["informational_sections"] = informational_sections();
    nlohmann::json sections = nlohmann::json::object();
    for (const auto& k : config_keys()) {
        nlohmann::json e{{"type", k.type}, {"requirement", k.requirement}, {"description", k.description}};
        if (!k.fallback.empty()) e["default"] = k.fallback;
        if (!k.choices.empty()) e["choices"] = k.choices;
        sections[std::string(k.section)][std::string(k.key)] = e;
    }
    j["sections"] = sections;
    return j;
}

// ------------------------------------------------------------------- parsing

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(boost::property_tree::ptree tree, std::string source)
        : tree_(std::move(tree)), source_(std::move(source)) {}

    void check_known() const {
        for (const auto& [section, body] : tree_) {
            if (informational_sections().contains(section)) continue;
            if (body.empty())
                throw ConfigError(source_ + ": key '" + section + "' must be inside a [section]");
            for (const auto& [key, value] : body) {
                const bool known = std::any_of(config_keys().begin(), config_keys().end(), [&](const ConfigKey& k) {
                    return k.section == section && k.key == key;
                });
                if (!known) throw ConfigError(source_ + ": unknown key [" + section + "] " + key);
            }
        }
    }

    [[nodiscard]] std::optional<std::string> raw(std::string_view section, std::string_view key) const {
        const auto s = tree_.find(std::string(section));
        if (s == tree_.not_found()) return std::nullopt;
        const auto v = s->second.find(std::string(key));
        if (v == s->second.not_found()) return std::nullopt;
        return trim(v->second.data());
    }

    [[nodiscard]] std::string where(std::string_view section, std::string_view key) const {
        return source_ + ": [" + std::string(section) + "] " + std::string(key);
    }

    [[nodiscard]] std::string require(std::string_view section, std::string_view key) const {
        auto v = raw(section, key);
        if (!v || v->empty()) throw ConfigError(where(section, key) + " is required");
        return *v;
    }

    [[nodiscard]] double number(std::string_view section, std::string_view key, const std::string& text) const {
        double v = 0.0;
        const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
        if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v))
            throw ConfigError(where(section, key) + ": expected a number, got '" + text + "'");
        return v;
    }

    [[nodiscard]] std::uint64_t integer(std::string_view section, std::string_view key, const std::string& text) const {
        std::uint64_t v = 0;
        const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
        if (r.ec != std::errc() || r.ptr != text.data() + text.size())
            throw ConfigError(where(section, key) + ": expected a non-negative integer, got '" + text + "'");
        return v;
    }

    [[nodiscard]] bool boolean(std::string_view section, std::string_view key, const std::string& text) const {
        if (text == "true") return true;
        if (text == "false") return false;
        throw ConfigError(where(section, key) + ": expected true or false, got '" + text + "'");
    }

    [[nodiscard]] std::vector<std::string> list(const std::string& text) const {
        std::vector<std::string> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(trim(item));
        return out;
    }

    template <class E>
    [[nodiscard]] E choice(std::string_view section, std::string_view key, const std::string& text,
                           std::initializer_list<E> values) const {
        for (E e : values)
            if (to_string(e) == text) return e;
        throw ConfigError(where(section, key) + ": unknown value '" + text + "'");
    }

    [[nodiscard]] TimeWindow window(std::string_view section, std::string_view key, const std::string& text) const {
        const auto parts = list(text);
        if (parts.size() != 2) throw ConfigError(where(section, key) + ": expected 't0, t1'");
        return {number(section, key, parts[0]), number(section, key, parts[1])};
    }

private:
    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    boost::property_tree::ptree tree_;
    std::string source_;
};

} // namespace detail

inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    const detail::ConfigReader r(std::move(tree), source);
    r.check_known();

    ExperimentConfig c;
    c.name = r.require("experiment", "name");
    for (const auto& b : r.list(r.require("experiment", "backends"))) {
        const auto be = r.choice<Backend>("experiment", "backends", b,
                                          {Backend::exact, Backend::classical, Backend::twa, Backend::hk});
        if (c.has(be)) throw ConfigError(r.where("experiment", "backends") + ": '" + b + "' listed twice");
        c.backends.push_back(be);
    }
    c.output_dir = r.raw("experiment", "output_dir").value_or(c.name);
    if (auto v = r.raw("experiment", "workers")) c.workers = static_cast<unsigned>(r.integer("experiment", "workers", *v));
    if (auto v = r.raw("experiment", "block_size")) c.block_size = r.integer("experiment", "block_size", *v);

    c.model.modes = static_cast<int>(r.integer("model", "modes", r.require("model", "modes")));
    c.model.n_total = static_cast<int>(r.integer("model", "n_total", r.require("model", "n_total")));
    c.model.tunneling = r.number("model", "tunneling", r.require("model", "tunneling"));
    const auto u = r.raw("model", "interaction");
    const auto lam = r.raw("model", "lambda");
    if (u.has_value() == lam.has_value())
        throw ConfigError(r.where("model", "interaction") + ": give exactly one of interaction and lambda");
    c.model.interaction = u ? r.number("model", "interaction", *u)
                            : r.number("model", "lambda", *lam) * c.model.tunneling / c.model.n_total;

    const auto jt = r.raw("preparation", "j_target");
    const auto dl = r.raw("preparation", "delta");
    if (jt.has_value() == dl.has_value())
        throw ConfigError(r.where("preparation", "j_target") + ": give exactly one of j_target and delta");
    c.preparation = jt ? PreparationKind::j_target : PreparationKind::delta;
    c.preparation_value = jt ? r.number("preparation", "j_target", *jt) : r.number("preparation", "delta", *dl);

    c.time.t_max = r.number("time", "t_max", r.require("time", "t_max"));
    c.time.steps = r.integer("time", "steps", r.require("time", "steps"));
    if (auto v = r.raw("time", "units"))
        c.time.units = r.choice<TimeUnits>("time", "units", *v,
                                           {TimeUnits::raw, TimeUnits::omega_p, TimeUnits::plasma_periods});

    if (auto v = r.raw("integrator", "rtol")) c.integrator.rtol = r.number("integrator", "rtol", *v);
    if (auto v = r.raw("integrator", "atol")) c.integrator.atol = r.number("integrator", "atol", *v);
    if (auto v = r.raw("integrator", "max_steps"))
        c.integrator.max_steps = static_cast<long>(r.integer("integrator", "max_steps", *v));

    const std::initializer_list<HamiltonianForm> forms{HamiltonianForm::weyl, HamiltonianForm::mean_field};
    if (auto v = r.raw("ensemble", "form")) c.ensemble_form = r.choice<HamiltonianForm>("ensemble", "form", *v, forms);
    if (auto v = r.raw("classical", "form")) c.classical_form = r.choice<HamiltonianForm>("classical", "form", *v, forms);

    if (r.raw("twa", "samples") || r.raw("twa", "seed")) {
        TwaSettings t;
        t.samples = r.integer("twa", "samples", r.require("twa", "samples"));
        t.seed = r.integer("twa", "seed", r.require("twa", "seed"));
        c.twa = t;
    }
    if (r.raw("hk", "samples") || r.raw("hk", "seed")) {
        HKConfig h;
        h.sample_count = r.integer("hk", "samples", r.require("hk", "samples"));
        h.seed = r.integer("hk", "seed", r.require("hk", "seed"));
        if (auto v = r.raw("hk", "prefactor_cutoff")) h.prefactor_cutoff = r.number("hk", "prefactor_cutoff", *v);
        if (auto v = r.raw("hk", "renormalize")) h.renormalize = r.boolean("hk", "renormalize", *v);
        if (auto v = r.raw("hk", "sampling"))
            h.sampling = r.choice<HKSampling>("hk", "sampling", *v, {HKSampling::overlap, HKSampling::overlap_squared});
        if (auto v = r.raw("hk", "sequence"))
            h.sequence = r.choice<HKSequence>("hk", "sequence", *v, {HKSequence::sobol, HKSequence::pseudo_random});
        if (auto v = r.raw("hk", "gamma_override"))
            for (const auto& g : r.list(*v)) h.gamma_override.push_back(r.number("hk", "gamma_override", g));
        c.hk = h;
    }

    if (auto v = r.raw("metrics", "window")) c.window = r.window("metrics", "window", *v);
    if (auto v = r.raw("metrics", "revival_window")) c.revival_window = r.window("metrics", "revival_window", *v);
    if (auto v = r.raw("output", "wavefunction")) c.wavefunction = r.boolean("output", "wavefunction", *v);
    if (auto v = r.raw("phase_space", "samples")) {
        c.phase_space.samples = r.integer("phase_space", "samples", *v);
        if (c.phase_space.samples > 0)
            c.phase_space.seed = r.integer("phase_space", "seed", r.require("phase_space", "seed"));
    }
    if (auto v = r.raw("phase_space", "grid_q")) c.phase_space.grid_q = r.integer("phase_space", "grid_q", *v);
    if (auto v = r.raw("phase_space", "grid_p")) c.phase_space.grid_p = r.integer("phase_space", "grid_p", *v);

    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.string());
}

// Canonical text of a config: every setting spelled out, numbers at full precision.
// Parsing it back yields an identical config.
inline std::string to_config_text(const ExperimentConfig& c) {
    std::ostringstream o;
    auto num = [](double x) { return format_double(x); };
    auto join = [](const auto& items, auto&& fmt) {
        std::string s;
        for (const auto& x : items) s += (s.empty() ? "" : ", ") + std::string(fmt(x));
        return s;
    };
    o << "[experiment]\n"
      << "name = " << c.name << "\n"
      << "backends = " << join(c.backends, [](Backend b) { return to_string(b); }) << "\n"
      << "output_dir = " << c.output_dir << "\n"
      << "workers = " << c.workers << "\n"
      << "block_size = " << c.block_size << "\n\n";
    o << "[model]\n"
      << "modes = " << c.model.modes << "\n"
      << "n_total = " << c.model.n_total << "\n"
      << "tunneling = " << num(c.model.tunneling) << "\n"
      << "interaction = " << num(c.model.interaction) << "\n\n";
    o << "[preparation]\n"
      << (c.preparation == PreparationKind::j_target ? "j_target = " : "delta = ") << num(c.preparation_value)
      << "\n\n";
    o << "[time]\n"
      << "t_max = " << num(c.time.t_max) << "\n"
      << "steps = " << c.time.steps << "\n"
      << "units = " << to_string(c.time.units) << "\n\n";
    o << "[integrator]\n"
      << "rtol = " << num(c.integrator.rtol) << "\n"
      << "atol = " << num(c.integrator.atol) << "\n"
      << "max_steps = " << c.integrator.max_steps << "\n\n";
    o << "[ensemble]\nform = " << to_string(c.ensemble_form) << "\n\n";
    o << "[classical]\nform = " << to_string(c.classical_form) << "\n\n";
    if (c.twa) o << "[twa]\nsamples = " << c.twa->samples << "\nseed = " << c.twa->seed << "\n\n";
    if (c.hk) {
        o << "[hk]\n"
          << "samples = " << c.hk->sample_count << "\n"
          << "seed = " << c.hk->seed << "\n"
          << "prefactor_cutoff = " << num(c.hk->prefactor_cutoff) << "\n"
          << "renormalize = " << (c.hk->renormalize ? "true" : "false") << "\n"
          << "sampling = " << to_string(c.hk->sampling) << "\n"
          << "sequence = " << to_string(c.hk->sequence) << "\n";
        if (!c.hk->gamma_override.empty()) o << "gamma_override = " << join(c.hk->gamma_override, num) << "\n";
        o << "\n";
    }
    if (c.window || c.revival_window) {
        o << "[metrics]\n";
        if (c.window) o << "window = " << num(c.window->t0) << ", " << num(c.window->t1) << "\n";
        if (c.revival_window)
            o << "revival_window = " << num(c.revival_window->t0) << ", " << num(c.revival_window->t1) << "\n";
        o << "\n";
    }
    o << "[output]\nwavefunction = " << (c.wavefunction ? "true" : "false") << "\n\n";
    if (c.phase_space.samples > 0 || c.phase_space.grid_q > 0) {
        o << "[phase_space]\n"
          << "samples = " << c.phase_space.samples << "\n";
        if (c.phase_space.samples > 0) o << "seed = " << c.phase_space.seed << "\n";
        o << "grid_q = " << c.phase_space.grid_q << "\n"
          << "grid_p = " << c.phase_space.grid_p << "\n\n";
    }
    return o.str();
}

} // namespace bhs
