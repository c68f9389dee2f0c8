#include "bhs/bhs.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

namespace fs = std::filesystem;

namespace {

fs::path output_root() {
    if (const char* env = std::getenv("BHS_OUTPUT_ROOT"); env && *env) return env;
    return "bhs_output";
}

fs::path preset_dir() {
    if (const char* env = std::getenv("BHS_PRESET_DIR"); env && *env) return env;
    return BHS_PRESET_DIR;
}

int run_config(const bhs::ExperimentConfig& config) {
    const auto summary = bhs::run_experiment(config, output_root());
    std::cout << "output: " << summary.directory.string() << "\n";
    for (const auto& s : summary.statuses) {
        std::cout << "  " << bhs::to_string(s.backend) << ": " << bhs::to_string(s.state);
        if (!s.message.empty()) std::cout << " (" << s.message << ")";
        std::cout << "\n";
    }
    if (!summary.metrics.empty()) std::cout << summary.metrics.dump(2) << "\n";
    return static_cast<int>(summary.exit_code());
}

std::optional<bhs::TimeWindow> parse_window(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    if (v.size() != 2) throw bhs::ConfigError("a window needs exactly two values: t0 t1");
    return bhs::TimeWindow{v[0], v[1]};
}

// First column that is not a time axis.
std::string default_column(const bhs::CsvTable& t) {
    for (const auto& h : t.header)
        if (h != "t" && h != "t_omega_p") return h;
    throw bhs::ConfigError("csv has no data column");
}

int compare(const fs::path& a_path, const fs::path& b_path, std::string column, const std::string& time_column,
            const std::vector<double>& window, const std::vector<double>& revival) {
    const auto a = bhs::read_csv(a_path);
    const auto b = bhs::read_csv(b_path);
    const std::string col_a = column.empty() ? default_column(a) : column;
    const std::string col_b = column.empty() ? default_column(b) : column;
    const auto& ta = a.column(time_column);
    const auto& tb = b.column(time_column);
    if (ta != tb) throw bhs::ConfigError("metrics: the two files do not share a time grid");
    const auto w = parse_window(window).value_or(bhs::TimeWindow{ta.front(), ta.back()});
    const auto r = parse_window(revival).value_or(w);
    const auto m = bhs::compare_metrics(ta, a.column(col_a), b.column(col_b), w, r);
    const nlohmann::json out{{"a", a_path.string() + ":" + col_a},
                             {"b", b_path.string() + ":" + col_b},
                             {"window", {w.t0, w.t1}},
                             {"revival_window", {r.t0, r.t1}},
                             {"rms", m.rms},
                             {"max_abs_dev", m.max_abs_dev},
                             {"revival_amplitude", m.revival_amplitude},
                             {"dominant_frequency", m.dominant_frequency}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bose-Hubbard double- and triple-well dynamics: exact, classical, TWA and Herman-Kluk"};
    app.set_version_flag("--version", std::string(bhs::kVersion));
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);

    std::string preset;
    auto* pre = app.add_subcommand("preset", "run a shipped preset (fig1 .. fig7)");
    pre->add_option("name", preset, "preset name")
        ->required()
        ->check(CLI::IsMember(std::set<std::string>{"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"}));

    std::vector<std::string> csvs;
    std::string column, time_column = "t";
    std::vector<double> window, revival;
    auto* met = app.add_subcommand("metrics", "compare a data column of two CSV files on a shared time grid");
    met->add_option("csv", csvs, "approximate series, then reference series")->required()->expected(2);
    met->add_option("--column", column, "data column (default: first non-time column of each file)");
    met->add_option("--time-column", time_column, "time column")->capture_default_str();
    met->add_option("--window", window, "t0 t1 for rms, deviation and frequency")->expected(2);
    met->add_option("--revival-window", revival, "t0 t1 for the revival amplitude")->expected(2);

    app.add_subcommand("dump-config-schema", "print the config grammar as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(bhs::ExitCode::config_error);
    }

    try {
        if (*run) return run_config(bhs::load_config(config_path));
        if (*pre) return run_config(bhs::load_config(preset_dir() / (preset + ".conf")));
        if (*met) return compare(csvs[0], csvs[1], column, time_column, window, revival);
        std::cout << bhs::config_schema().dump(2) << "\n";
        return 0;
    } catch (const bhs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(bhs::ExitCode::config_error);
    } catch (const bhs::ParameterError& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return static_cast<int>(bhs::ExitCode::config_error);
    } catch (const bhs::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return static_cast<int>(bhs::ExitCode::numeric_failure);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return static_cast<int>(bhs::ExitCode::config_error);
    }
}
