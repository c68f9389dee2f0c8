#include "bhs/bhs.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace bhs;

namespace {

const char* kDouble = R"([experiment]
name = dw
backends = exact, classical, twa, hk

[model]
modes = 2
n_total = 20
tunneling = 1
lambda = 10

[preparation]
j_target = 3

[time]
t_max = 3
steps = 60

[integrator]
rtol = 1e-9
atol = 1e-9

[twa]
samples = 300
seed = 5

[hk]
samples = 300
seed = 6
prefactor_cutoff = 20

[metrics]
window = 0, 3
revival_window = 2, 3

[phase_space]
samples = 50
seed = 8
grid_q = 11
grid_p = 9
)";

const char* kTriple = R"([experiment]
name = tw
backends = exact, twa, hk
workers = 2

[model]
modes = 3
n_total = 9
tunneling = 1
interaction = 0.2

[preparation]
delta = 3

[time]
units = raw
t_max = 1
steps = 20

[twa]
samples = 200
seed = 1

[hk]
samples = 200
seed = 2
prefactor_cutoff = 20
)";

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test");
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / "bhs_test_experiment" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Captured {
    int code;
    std::string out;
};

Captured run_cli(const std::string& args, const fs::path& root) {
    const char* exe = std::getenv("BHSIM_EXE");
    if (!exe) return {-1, "BHSIM_EXE not set"};
    const std::string cmd = "BHS_OUTPUT_ROOT='" + root.string() + "' '" + exe + "' " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, "popen failed"};
    std::string out;
    std::array<char, 4096> buf{};
    while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

} // namespace

TEST(Experiment, DoubleWellWritesEveryTable) {
    const auto root = fresh_dir("double");
    const auto s = run_experiment(parse(kDouble), root);
    EXPECT_EQ(s.exit_code(), ExitCode::success);
    const auto dir = root / "dw";
    for (const char* f : {"exact.csv", "classical.csv", "twa.csv", "hk.csv", "comparison.csv", "metrics.json",
                          "manifest.conf", "wigner_samples.csv", "hamiltonian_grid.csv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;

    const auto ex = read_csv(dir / "exact.csv");
    EXPECT_EQ(ex.header, (std::vector<std::string>{"t", "t_omega_p", "j"}));
    EXPECT_EQ(ex.rows(), 61u);
    EXPECT_NEAR(ex.column("j").front(), 3.0, 1e-4);
    EXPECT_NEAR(ex.column("t_omega_p").back(), 3.0 * 2.0 * std::numbers::pi, 1e-9);

    const auto cmp = read_csv(dir / "comparison.csv");
    EXPECT_EQ(cmp.header, (std::vector<std::string>{"t", "t_omega_p", "exact", "classical", "twa", "hk"}));
    EXPECT_EQ(cmp.column("exact"), ex.column("j"));

    const auto cl = read_csv(dir / "classical.csv");
    for (double d : cl.column("det_monodromy")) EXPECT_NEAR(d, 1.0, 1e-6);
    const auto& e = cl.column("energy");
    for (double v : e) EXPECT_NEAR(v, e.front(), 1e-6 * std::abs(e.front()));

    const auto hk = read_csv(dir / "hk.csv");
    EXPECT_NEAR(hk.column("j").front(), 3.0, 0.1);
    EXPECT_EQ(read_csv(dir / "hamiltonian_grid.csv").rows(), 99u);
    EXPECT_EQ(read_csv(dir / "wigner_samples.csv").rows(), 50u);

    std::ifstream mj(dir / "metrics.json");
    const auto m = nlohmann::json::parse(mj);
    EXPECT_TRUE(m.contains("twa"));
    EXPECT_TRUE(m["hk"].contains("revival_amplitude"));
    EXPECT_GE(m["twa"]["rms"].get<double>(), 0.0);
}

TEST(Experiment, ManifestReproducesByteForByte) {
    const auto root = fresh_dir("manifest");
    (void)run_experiment(parse(kDouble), root / "a");
    const auto again = load_config(root / "a" / "dw" / "manifest.conf");
    (void)run_experiment(again, root / "b");
    for (const char* f : {"exact.csv", "classical.csv", "twa.csv", "hk.csv", "metrics.json", "manifest.conf"})
        EXPECT_EQ(slurp(root / "a" / "dw" / f), slurp(root / "b" / "dw" / f)) << f;
}

TEST(Experiment, WorkerCountDoesNotChangeOutput) {
    const auto root = fresh_dir("workers");
    auto c = parse(kDouble);
    c.backends = {Backend::twa, Backend::hk};
    c.window.reset();
    c.revival_window.reset();
    c.block_size = 16;
    std::string first_twa, first_hk;
    for (unsigned w : {1u, 3u, 8u}) {
        c.workers = w;
        const auto sub = root / std::to_string(w);
        (void)run_experiment(c, sub);
        const auto twa = slurp(sub / "dw" / "twa.csv");
        const auto hk = slurp(sub / "dw" / "hk.csv");
        if (first_twa.empty()) {
            first_twa = twa;
            first_hk = hk;
        }
        EXPECT_EQ(twa, first_twa) << w;
        EXPECT_EQ(hk, first_hk) << w;
    }
}

TEST(Experiment, TripleWellRuns) {
    const auto root = fresh_dir("triple");
    const auto s = run_experiment(parse(kTriple), root);
    EXPECT_NE(s.exit_code(), ExitCode::numeric_failure);
    const auto ex = read_csv(root / "tw" / "exact.csv");
    EXPECT_EQ(ex.header, (std::vector<std::string>{"t", "t_omega_p", "n1", "n2"}));
    const auto hk = read_csv(root / "tw" / "hk.csv");
    EXPECT_NEAR(hk.column("n1").front(), ex.column("n1").front(), 0.15);
    const auto twa = read_csv(root / "tw" / "twa.csv");
    EXPECT_NEAR(twa.column("n1").front(), ex.column("n1").front(), 0.3);
}

TEST(Experiment, FailedBackendDoesNotStopOthers) {
    const auto root = fresh_dir("collapse");
    auto c = parse(kDouble);
    c.hk->prefactor_cutoff = 1.0001;
    const auto s = run_experiment(c, root);
    EXPECT_EQ(s.exit_code(), ExitCode::numeric_failure);
    bool hk_failed = false;
    for (const auto& st : s.statuses) {
        if (st.backend == Backend::hk) hk_failed = st.state == BackendState::failed;
        else EXPECT_EQ(st.state, BackendState::ok) << to_string(st.backend);
    }
    EXPECT_TRUE(hk_failed);
    EXPECT_TRUE(fs::exists(root / "dw" / "twa.csv"));
    EXPECT_NE(slurp(root / "dw" / "manifest.conf").find("hk = failed"), std::string::npos);
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        if (!std::getenv("BHSIM_EXE")) GTEST_SKIP() << "BHSIM_EXE not set";
        root = fresh_dir("cli");
    }
    fs::path write(const std::string& name, const std::string& text) {
        const auto p = root / name;
        std::ofstream(p) << text;
        return p;
    }
    fs::path root;
};

TEST_F(Cli, RunSucceeds) {
    const auto r = run_cli("run " + write("ok.conf", kDouble).string(), root / "out");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(root / "out" / "dw" / "exact.csv"));
}

TEST_F(Cli, ConfigErrorsExitTwo) {
    std::string bad = kDouble;
    bad.replace(bad.find("seed = 5\n"), 9, "");
    EXPECT_EQ(run_cli("run " + write("bad.conf", bad).string(), root).code, 2);
    EXPECT_EQ(run_cli("run " + (root / "missing.conf").string(), root).code, 2);
    EXPECT_EQ(run_cli("preset fig9", root).code, 2);
    EXPECT_EQ(run_cli("frobnicate", root).code, 2);
}

TEST_F(Cli, NumericFailureExitsThree) {
    std::string text = kDouble;
    text.replace(text.find("prefactor_cutoff = 20"), 21, "prefactor_cutoff = 1.0001");
    const auto r = run_cli("run " + write("collapse.conf", text).string(), root);
    EXPECT_EQ(r.code, 3) << r.out;
}

TEST_F(Cli, FlaggedRunExitsFour) {
    std::string text = kDouble;
    text.replace(text.find("prefactor_cutoff = 20"), 21, "prefactor_cutoff = 1.5");
    const auto r = run_cli("run " + write("flag.conf", text).string(), root);
    EXPECT_EQ(r.code, 4) << r.out;
    EXPECT_NE(r.out.find("flagged"), std::string::npos);
}

TEST_F(Cli, SchemaIsJson) {
    const auto r = run_cli("dump-config-schema", root);
    ASSERT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j["sections"]["model"].contains("lambda"));
}

TEST_F(Cli, MetricsComparesTwoFiles) {
    CsvTable a, b;
    a.add("t", {0.0, 1.0, 2.0, 3.0});
    a.add("j", {0.0, 1.0, 0.0, -1.0});
    b.add("t", {0.0, 1.0, 2.0, 3.0});
    b.add("j", {0.0, 1.0, 0.0, 1.0});
    write_csv(root / "a.csv", a);
    write_csv(root / "b.csv", b);
    const auto r = run_cli("metrics " + (root / "a.csv").string() + " " + (root / "b.csv").string(), root);
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["rms"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(j["max_abs_dev"].get<double>(), 2.0);
    const auto w = run_cli("metrics --window 0 2 " + (root / "a.csv").string() + " " + (root / "b.csv").string(), root);
    EXPECT_DOUBLE_EQ(nlohmann::json::parse(w.out)["rms"].get<double>(), 0.0);
    EXPECT_EQ(run_cli("metrics --column x " + (root / "a.csv").string() + " " + (root / "b.csv").string(), root).code,
              2);
}
