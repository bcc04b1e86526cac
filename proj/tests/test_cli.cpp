#include "dvqa/dvqa.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace dvqa;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("dvqa_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(DVQA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
    return n;
}

}  // namespace

TEST(GadgetDemo, single_shot_gives_one_bit_per_circuit) {
    const GadgetDemo d = gadget_demo(1, 4);
    EXPECT_EQ(d.direct.total(), 1u);
    EXPECT_EQ(d.gadget.total(), 1u);
    EXPECT_EQ(d.routes[0] + d.routes[1], 1u);
}

TEST(GadgetDemo, zero_shots_rejected) { EXPECT_THROW(gadget_demo(0, 1), std::invalid_argument); }

TEST(GadgetDemo, report_always_carries_the_analytic_row) {
    for (std::size_t shots : {1u, 16u}) {
        const std::string s = format_gadget_demo(gadget_demo(shots, 9));
        EXPECT_NE(s.find("0.85355    0.14645"), std::string::npos) << s;
        EXPECT_NE(s.find("0.852"), std::string::npos);
    }
}

TEST(Decompose, zero_rotation_is_the_empty_sequence) {
    const EpsilonNet net = EpsilonNet::build(8);
    const DecomposeReport r = decompose_rotation('Z', 0.0, 1e-2, net);
    EXPECT_EQ(r.result.sequence.size(), 0u);
    EXPECT_NEAR(r.result.distance, 0.0, 1e-12);
    EXPECT_NE(format_decomposition(r).find("(empty)"), std::string::npos);
}

TEST(Decompose, report_has_four_outputs_and_the_reference_tallies) {
    const EpsilonNet net = EpsilonNet::build(12);
    const DecomposeReport r = decompose_rotation('x', 5.57, 1e-2, net);
    const std::string s = format_decomposition(r);
    for (const char* tag : {"output 1", "output 2", "output 3", "output 4", "T 35, T^dagger 24, H 28"}) EXPECT_NE(s.find(tag), std::string::npos) << tag;
    EXPECT_LE(r.result.distance, 1e-2);
}

TEST(Decompose, unknown_axis_and_unreachable_target) {
    const EpsilonNet net = EpsilonNet::build(4);
    EXPECT_THROW(decompose_rotation('W', 1.0, 1e-2, net), std::invalid_argument);
    EXPECT_THROW(decompose_rotation('X', 1.0, 1e-12, net, 1), std::runtime_error);
}

TEST(Verify, suite_passes_on_the_real_rules) {
    VerifyOptions opt;
    opt.round_trips = 10;
    opt.gradient_models = 3;
    const auto rows = run_verify_suite(opt);
    ASSERT_GE(rows.size(), 7u);
    for (const auto& r : rows) EXPECT_TRUE(r.passed()) << r.name;
    const std::string table = format_verify_table(rows);
    EXPECT_NE(table.find("seconds"), std::string::npos);
    EXPECT_EQ(count(table, "PASS"), rows.size());
}

TEST(Verify, swapped_cnot_rule_is_caught) {
    const PropertyResult r = check_conjugation_tables(mutated_cnot_rule());
    EXPECT_FALSE(r.passed());
    EXPECT_GT(r.failures, 0u);
    Rng rng(3);
    EXPECT_FALSE(check_round_trips(rng, 20, RspMode::ideal, mutated_cnot_rule()).passed());
}

TEST(Plot, chart_has_one_polyline_per_series_and_escapes_text) {
    std::vector<EpochMetrics> rows{{0, 0.7, 0.5, 0.5}, {1, 0.6, 0.7, 0.6}, {2, 0.5, 0.9, 0.8}};
    const std::string s = training_svg(rows, "a < b & c");
    EXPECT_EQ(s.rfind("<svg", 0), 0u);
    EXPECT_NE(s.find("</svg>"), std::string::npos);
    EXPECT_EQ(count(s, "<polyline"), 3u);
    EXPECT_NE(s.find("a &lt; b &amp; c"), std::string::npos);
    EXPECT_EQ(s.find("nan"), std::string::npos);
}

TEST(Plot, flat_and_non_finite_series_do_not_break_the_scale) {
    Series flat{"flat", "#000", {1, 1, 1}, false};
    Series gap{"gap", "#111", {0.2, std::nan(""), 0.4}, true};
    const std::string s = svg_chart("t", "x", "y", "z", {flat, gap});
    EXPECT_EQ(s.find("nan"), std::string::npos);
    EXPECT_EQ(s.find("inf"), std::string::npos);
}

TEST(Manifest, json_round_trip) {
    RunManifest m;
    m.seed = 42;
    m.mode = Mode::delegated_faithful;
    m.epsilon = 3e-3;
    m.kappa = 24;
    m.dataset = "/tmp/x.csv";
    m.out = "o";
    m.shots = 100;
    m.transport = Transport::tcp;
    m.port = 9000;
    m.connect = true;
    m.epochs = 4;
    const RunManifest back = manifest_from_json(manifest_json(m));
    EXPECT_EQ(manifest_json(back), manifest_json(m));
    EXPECT_EQ(manifest_json(m).at("seed"), 42u);
}

TEST(Train, identical_manifests_give_byte_identical_artifacts) {
    const LabeledDataset d = load_digits_csv(DVQA_DATA_DIR "/digits.csv");
    RunManifest m;
    m.seed = 5;
    m.epochs = 2;
    m.out = scratch("repro_a").string();
    write_train_artifacts(m, run_training(m, d));
    RunManifest again = manifest_from_json(nlohmann::json::parse(slurp(fs::path(m.out) / "manifest.json")));
    again.out = scratch("repro_b").string();
    write_train_artifacts(again, run_training(again, d));
    for (const char* f : {"metrics.csv", "model.json", "training.svg"}) EXPECT_EQ(slurp(fs::path(m.out) / f), slurp(fs::path(again.out) / f)) << f;
    EXPECT_FALSE(fs::exists(fs::path(m.out) / "server_model.json"));
}

TEST(Cli, missing_dataset_exits_with_two) {
    const fs::path dir = scratch("missing");
    EXPECT_EQ(run_cli("train --dataset /nonexistent/digits.csv --out " + (dir / "o").string(), dir / "log"), 2);
    EXPECT_NE(slurp(dir / "log").find("dataset"), std::string::npos);
}

TEST(Cli, config_file_is_read_and_flags_override_it) {
    const fs::path dir = scratch("config");
    std::ofstream(dir / "run.ini") << "seed=5\nout=" << (dir / "o").string() << "\n[train]\nepochs=1\n";
    ASSERT_EQ(run_cli("--config " + (dir / "run.ini").string() + " --seed 6 train", dir / "log"), 0) << slurp(dir / "log");
    const auto j = nlohmann::json::parse(slurp(dir / "o" / "manifest.json"));
    EXPECT_EQ(j.at("seed"), 6u);
    EXPECT_EQ(j.at("epochs"), 1u);
    EXPECT_EQ(slurp(dir / "o" / "metrics.csv").substr(0, 5), "epoch");
}

TEST(Cli, subcommands_exit_status) {
    const fs::path dir = scratch("status");
    EXPECT_EQ(run_cli("gadget-demo --shots 64", dir / "log"), 0);
    EXPECT_EQ(run_cli("decompose --axis Z --angle 0", dir / "log"), 0);
    EXPECT_NE(run_cli("decompose --axis Q", dir / "log"), 0);
    EXPECT_NE(run_cli("decompose --axis X --angle 1 --epsilon 1e-14 --net-length 2", dir / "log"), 0);
    EXPECT_NE(run_cli("train --mode quantum", dir / "log"), 0);
    EXPECT_NE(run_cli("", dir / "log"), 0);
    EXPECT_NE(run_cli("verify --mutate cnot --round-trips 5 --sk-targets 4", dir / "log"), 0);
    EXPECT_NE(slurp(dir / "log").find("FAIL"), std::string::npos);
    EXPECT_EQ(run_cli("verify --round-trips 5 --sk-targets 4", dir / "log"), 0);
}
