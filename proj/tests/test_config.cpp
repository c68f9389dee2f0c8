#include "bhs/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace bhs;

namespace {

const char* kMinimal = R"(
# comment
[experiment]
name = small
backends = exact, twa

[model]
modes = 2
n_total = 20
tunneling = 1
lambda = 10

[preparation]
j_target = 3

[time]
t_max = 2
steps = 40

[twa]
samples = 100
seed = 9
)";

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test");
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    if (pos != std::string::npos) s.replace(pos, from.size(), to);
    return s;
}

} // namespace

TEST(Config, MinimalWithDefaults) {
    const auto c = parse(kMinimal);
    EXPECT_EQ(c.name, "small");
    EXPECT_EQ(c.output_dir, "small");
    ASSERT_EQ(c.backends.size(), 2u);
    EXPECT_TRUE(c.has(Backend::exact));
    EXPECT_TRUE(c.has(Backend::twa));
    EXPECT_FALSE(c.has(Backend::hk));
    EXPECT_DOUBLE_EQ(c.model.interaction, 0.5);
    EXPECT_DOUBLE_EQ(c.model.lambda(), 10.0);
    EXPECT_EQ(c.preparation, PreparationKind::j_target);
    EXPECT_EQ(c.time.units, TimeUnits::plasma_periods);
    EXPECT_EQ(c.ensemble_form, HamiltonianForm::weyl);
    EXPECT_EQ(c.classical_form, HamiltonianForm::mean_field);
    EXPECT_EQ(c.workers, 1u);
    ASSERT_TRUE(c.twa.has_value());
    EXPECT_EQ(c.twa->seed, 9u);
    const auto t = c.time.raw_times(c.omega_p());
    EXPECT_EQ(t.size(), 41u);
    EXPECT_DOUBLE_EQ(t.back(), 2.0 * 2.0 * std::numbers::pi / c.omega_p());
}

TEST(Config, CanonicalTextRoundTrips) {
    auto text = std::string(kMinimal) + R"(
[hk]
samples = 50
seed = 4
prefactor_cutoff = 12.5
sequence = pseudo_random
gamma_override = 3.25

[metrics]
window = 0, 1.5
revival_window = 1, 2
)";
    text = replace(text, "backends = exact, twa", "backends = exact, twa, hk, classical");
    const auto c = parse(text);
    const auto canonical = to_config_text(c);
    const auto again = parse(canonical);
    EXPECT_EQ(to_config_text(again), canonical);
    EXPECT_EQ(again.model.interaction, c.model.interaction);
    EXPECT_EQ(again.hk->gamma_override, std::vector<double>{3.25});
    EXPECT_EQ(again.hk->sequence, HKSequence::pseudo_random);
    EXPECT_EQ(again.window->t1, 1.5);

    // manifest extras are accepted and ignored
    const auto manifest = canonical + "[provenance]\nversion = 1\n\n[status]\nexact = ok\n";
    EXPECT_EQ(to_config_text(parse(manifest)), canonical);
}

TEST(Config, SeedsAreMandatory) {
    EXPECT_THROW(parse(replace(kMinimal, "seed = 9\n", "")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "[twa]\nsamples = 100\nseed = 9\n", "")), ConfigError);
    auto hk = replace(kMinimal, "backends = exact, twa", "backends = exact, hk");
    EXPECT_THROW(parse(hk), ConfigError);
    EXPECT_THROW(parse(hk + "[hk]\nsamples = 10\n"), ConfigError);
    EXPECT_NO_THROW(parse(hk + "[hk]\nsamples = 10\nseed = 1\n"));
}

TEST(Config, RejectsInconsistentInput) {
    EXPECT_THROW(parse(replace(kMinimal, "name = small", "")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "backends = exact, twa", "backends = exact, exact")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "backends = exact, twa", "backends = exact, wkb")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "lambda = 10", "lambda = 10\ninteraction = 1")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "lambda = 10", "")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "lambda = 10", "lambda = ten")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "j_target = 3", "j_target = 3\ndelta = 1")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "j_target = 3", "j_target = 10")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "modes = 2", "modes = 3")), ConfigError); // j_target with 3 wells
    EXPECT_THROW(parse(replace(kMinimal, "modes = 2", "modes = 4")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "steps = 40", "steps = 0")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "steps = 40", "steps = -5")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "t_max = 2", "t_max = 0")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "tunneling = 1", "tunneling = 1\ncolour = red")), ConfigError);
    EXPECT_THROW(parse(replace(kMinimal, "[time]", "[clock]")), ConfigError);
    EXPECT_THROW(parse(std::string(kMinimal) + "[metrics]\nwindow = 0, 3\n"), ConfigError);
    EXPECT_THROW(parse(std::string(kMinimal) + "[metrics]\nwindow = 1\n"), ConfigError);
    EXPECT_THROW(parse(std::string(kMinimal) + "[output]\nwavefunction = yes\n"), ConfigError);
    EXPECT_THROW(parse("[experiment\nname = x\n"), ConfigError);
}

TEST(Config, TripleWellNeedsDelta) {
    auto text = replace(kMinimal, "modes = 2", "modes = 3");
    text = replace(text, "j_target = 3", "delta = 2");
    const auto c = parse(text);
    EXPECT_EQ(c.preparation, PreparationKind::delta);
    EXPECT_EQ(c.preparation_value, 2.0);
    EXPECT_THROW(parse(text + "[phase_space]\ngrid_q = 10\ngrid_p = 10\n"), ConfigError);
}

TEST(Config, SchemaListsEveryKey) {
    const auto s = config_schema();
    for (const auto& k : config_keys()) {
        const auto& entry = s["sections"][std::string(k.section)][std::string(k.key)];
        EXPECT_EQ(entry["type"], std::string(k.type)) << k.section << "." << k.key;
        EXPECT_FALSE(entry["description"].get<std::string>().empty());
    }
    EXPECT_TRUE(s["sections"].contains("hk"));
    EXPECT_EQ(s["sections"]["time"]["units"]["default"], "plasma_periods");
}

TEST(Config, PresetsLoad) {
    for (int i = 1; i <= 7; ++i) {
        const auto path = std::filesystem::path(BHS_PRESET_DIR) / ("fig" + std::to_string(i) + ".conf");
        ExperimentConfig c;
        ASSERT_NO_THROW(c = load_config(path)) << path;
        EXPECT_EQ(c.name, "fig" + std::to_string(i));
        EXPECT_TRUE(c.has(Backend::exact));
        if (c.twa) {
            EXPECT_GT(c.twa->samples, 0u);
        }
    }
    EXPECT_THROW(load_config("/nonexistent/fig0.conf"), ConfigError);
}
