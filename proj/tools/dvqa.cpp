#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "dvqa/dvqa.hpp"

namespace {

using namespace dvqa;

constexpr int exit_failure = 1;
constexpr int exit_missing_dataset = 2;

struct Flags {
    std::uint64_t seed = 0;
    std::size_t shots = 0;
    double epsilon = 1e-2;
    unsigned kappa = he::min_kappa;
    std::string mode = "plaintext";
    std::string transport = "inproc";
    std::uint16_t port = proto::default_port;
    std::string dataset = DVQA_DEFAULT_DATASET;
    std::string out = "out";
};

int cmd_gadget_demo(const Flags& f) {
    const std::size_t shots = f.shots ? f.shots : 2048;
    std::cout << format_gadget_demo(gadget_demo(shots, f.seed));
    return 0;
}

int cmd_decompose(const Flags& f, const std::string& axis, double angle, std::size_t net_length) {
    if (axis.size() != 1) throw std::invalid_argument("axis must be X, Y or Z");
    const EpsilonNet net = EpsilonNet::build(net_length);
    std::cout << format_decomposition(decompose_rotation(axis[0], angle, f.epsilon, net));
    return 0;
}

int cmd_train(const Flags& f, std::size_t epochs, bool connect) {
    RunManifest m;
    m.seed = f.seed;
    m.mode = parse_mode(f.mode);
    m.epsilon = f.epsilon;
    m.kappa = f.kappa;
    m.dataset = f.dataset;
    m.out = f.out;
    m.shots = f.shots;
    m.transport = parse_transport(f.transport);
    m.port = f.port;
    m.connect = connect;
    m.epochs = epochs;

    if (!std::filesystem::is_regular_file(m.dataset)) {
        std::cerr << "dataset not found: " << m.dataset << "\n";
        return exit_missing_dataset;
    }
    const LabeledDataset data = load_digits_csv(m.dataset, m.classes, m.n);
    std::optional<EpsilonNet> net;
    if (m.mode == Mode::delegated_faithful) net = EpsilonNet::build(12);
    const TrainArtifacts a = run_training(m, data, net ? &*net : nullptr);
    write_train_artifacts(m, a);

    const auto& first = a.result.metrics.front();
    const auto& last = a.result.metrics.back();
    std::printf("%s, seed %llu: loss %.6f -> %.6f, train accuracy %.4f, test accuracy %.4f\n", mode_name(m.mode),
                static_cast<unsigned long long>(m.seed), first.loss, last.loss, last.train_acc, last.test_acc);
    std::printf("artifacts in %s\n", m.out.c_str());
    return 0;
}

int cmd_verify(const Flags& f, const std::string& mutate, const std::string& rsp, std::size_t round_trips, std::size_t sk_targets) {
    VerifyOptions opt;
    opt.seed = f.seed;
    if (mutate == "cnot")
        opt.rule = mutated_cnot_rule();
    else if (!mutate.empty())
        throw std::invalid_argument("unknown mutation " + mutate);
    opt.rsp = rsp == "faithful" ? RspMode::faithful : RspMode::ideal;
    opt.round_trips = round_trips;
    opt.sk_targets = sk_targets;
    const EpsilonNet net = EpsilonNet::build(12);
    opt.net = &net;
    const auto rows = run_verify_suite(opt);
    std::cout << format_verify_table(rows);
    for (const auto& r : rows)
        if (!r.passed()) return exit_failure;
    return 0;
}

int cmd_serve(const Flags& f, std::size_t sessions) {
    proto::TcpServer server(proto::endpoint_from_env({"127.0.0.1", f.port}));
    std::filesystem::create_directories(f.out);
    std::printf("listening on port %u\n", static_cast<unsigned>(server.port()));
    std::fflush(stdout);
    std::atomic<std::size_t> done{0};
    server.serve(f.seed, sessions, [&](const proto::ServerSession& s) {
        const std::size_t i = done++;
        if (s.params()) write_text(std::filesystem::path(f.out) / ("server_model_" + std::to_string(i) + ".json"), wire::model(*s.params()).dump(2) + "\n");
        std::printf("session %zu finished after %zu runs\n", i, s.runs());
        std::fflush(stdout);
    });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delegated variational quantum classifier over quantum homomorphic encryption"};
    app.set_config("--config", "", "key=value file; command-line flags take precedence");
    app.require_subcommand(1);

    Flags f;
    app.add_option("--seed", f.seed, "seed for every random choice")->capture_default_str();
    app.add_option("--shots", f.shots, "measurement shots; 0 uses exact expectations")->capture_default_str();
    app.add_option("--epsilon", f.epsilon, "target distance for gate synthesis")->capture_default_str();
    app.add_option("--kappa", f.kappa, "classical HE security parameter")->capture_default_str()->check(CLI::Range(he::min_kappa, 4096u));
    app.add_option("--mode", f.mode, "plaintext, delegated-exact-gates or delegated-faithful")
        ->capture_default_str()
        ->check(CLI::IsMember({"plaintext", "delegated-exact-gates", "delegated-faithful"}));
    app.add_option("--transport", f.transport, "inproc or tcp")->capture_default_str()->check(CLI::IsMember({"inproc", "tcp"}));
    app.add_option("--port", f.port, "TCP port; DVQA_PORT overrides it")->capture_default_str();
    app.add_option("--dataset", f.dataset, "digits CSV")->capture_default_str();
    app.add_option("--out", f.out, "output directory")->capture_default_str();

    auto* demo = app.add_subcommand("gadget-demo", "single-T gadget example, direct against gadget circuit")->fallthrough();

    std::string axis = "X";
    double angle = 5.57;
    std::size_t net_length = 12;
    auto* dec = app.add_subcommand("decompose", "Solovay-Kitaev decomposition of one rotation")->fallthrough();
    dec->add_option("--axis", axis, "X, Y or Z")->capture_default_str()->check(CLI::IsMember({"X", "Y", "Z", "x", "y", "z"}));
    dec->add_option("--angle", angle, "rotation angle")->capture_default_str();
    dec->add_option("--net-length", net_length, "longest base sequence in the net")->capture_default_str()->check(CLI::Range(1, 16));

    std::size_t epochs = 20;
    bool connect = false;
    auto* tr = app.add_subcommand("train", "train the classifier and write metrics.csv, training.svg, model.json")->fallthrough();
    tr->add_option("--epochs", epochs, "training epochs")->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_flag("--connect", connect, "over tcp, use a server that is already running (DVQA_HOST, DVQA_PORT)");

    std::string mutate, rsp = "ideal";
    std::size_t round_trips = 100, sk_targets = 50;
    auto* ver = app.add_subcommand("verify", "run the invariant suite")->fallthrough();
    ver->add_option("--mutate", mutate, "inject a broken update rule (cnot)")->check(CLI::IsMember({"cnot"}));
    ver->add_option("--rsp", rsp, "ideal or faithful state preparation")->capture_default_str()->check(CLI::IsMember({"ideal", "faithful"}));
    ver->add_option("--round-trips", round_trips, "random circuits in the round-trip check")->capture_default_str();
    ver->add_option("--sk-targets", sk_targets, "random rotations in the synthesis check")->capture_default_str();

    std::size_t sessions = 0;
    auto* srv = app.add_subcommand("serve", "run the server side over tcp")->fallthrough();
    srv->add_option("--sessions", sessions, "stop after this many sessions; 0 serves forever")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*demo) return cmd_gadget_demo(f);
        if (*dec) return cmd_decompose(f, axis, angle, net_length);
        if (*tr) return cmd_train(f, epochs, connect);
        if (*ver) return cmd_verify(f, mutate, rsp, round_trips, sk_targets);
        if (*srv) return cmd_serve(f, sessions);
    } catch (const DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return exit_missing_dataset;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
    return exit_failure;
}
