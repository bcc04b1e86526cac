#pragma once

// Run manifests and the training driver behind `dvqa train`.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "dvqa/dataset.hpp"
#include "dvqa/delegated.hpp"
#include "dvqa/plot.hpp"
#include "dvqa/protocol.hpp"
#include "dvqa/vqa.hpp"
#include "dvqa/wire.hpp"

namespace dvqa {

enum class Transport { inproc, tcp };

inline const char* transport_name(Transport t) { return t == Transport::tcp ? "tcp" : "inproc"; }

inline Transport parse_transport(const std::string& s) {
    if (s == "inproc") return Transport::inproc;
    if (s == "tcp") return Transport::tcp;
    throw std::invalid_argument("unknown transport " + s);
}

struct RunManifest {
    std::string subcommand = "train";
    std::uint64_t seed = 0;
    Mode mode = Mode::plaintext;
    double epsilon = 1e-2;
    unsigned kappa = he::min_kappa;
    std::string dataset;
    std::string out = "out";
    std::size_t shots = 0;
    Transport transport = Transport::inproc;
    std::uint16_t port = proto::default_port;
    bool connect = false;  // use a running server instead of spawning one
    std::size_t epochs = 20;
    std::array<int, 2> classes{0, 1};
    std::size_t n = 6;
};

inline nlohmann::json manifest_json(const RunManifest& m) {
    return {{"subcommand", m.subcommand}, {"seed", m.seed},          {"mode", mode_name(m.mode)},
            {"epsilon", m.epsilon},       {"kappa", m.kappa},        {"dataset", m.dataset},
            {"out", m.out},               {"shots", m.shots},        {"transport", transport_name(m.transport)},
            {"port", m.port},             {"connect", m.connect},    {"epochs", m.epochs},
            {"classes", m.classes},       {"n", m.n}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.epsilon = j.at("epsilon").get<double>();
    m.kappa = j.at("kappa").get<unsigned>();
    m.dataset = j.at("dataset").get<std::string>();
    m.out = j.at("out").get<std::string>();
    m.shots = j.at("shots").get<std::size_t>();
    m.transport = parse_transport(j.at("transport").get<std::string>());
    m.port = j.at("port").get<std::uint16_t>();
    m.connect = j.at("connect").get<bool>();
    m.epochs = j.at("epochs").get<std::size_t>();
    m.classes = j.at("classes").get<std::array<int, 2>>();
    m.n = j.at("n").get<std::size_t>();
    return m;
}

struct TrainArtifacts {
    TrainResult result;
    std::optional<ShadowModel> server_params;  // what the server held when the session ended
    std::uint16_t port = 0;                     // the port actually used over tcp
};

inline TrainConfig train_config(const RunManifest& m) {
    TrainConfig cfg;
    cfg.seed = m.seed;
    cfg.mode = m.mode;
    cfg.epochs = m.epochs;
    return cfg;
}

inline DelegatedOptions delegated_options(const RunManifest& m) {
    DelegatedOptions o;
    o.mode = m.mode;
    o.kappa = m.kappa;
    o.shots = m.shots;
    o.epsilon = m.epsilon;
    if (m.mode == Mode::delegated_faithful) o.qhe.rsp = RspMode::faithful;
    return o;
}

inline std::uint64_t crypto_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }
inline std::uint64_t server_seed(std::uint64_t seed) { return seed ^ 0xc2b2ae3d27d4eb4fULL; }

/// Plaintext runs locally; delegated modes talk to a server over the chosen transport.
inline TrainArtifacts run_training(const RunManifest& m, const LabeledDataset& data, const EpsilonNet* net = nullptr) {
    TrainArtifacts out;
    const TrainConfig cfg = train_config(m);
    if (m.mode == Mode::plaintext) {
        PlaintextEngine engine(m.shots, crypto_seed(m.seed));
        out.result = train(data, cfg, engine);
        return out;
    }
    const DelegatedOptions opt = delegated_options(m);
    auto client = [&](proto::Channel& ch) { return proto::run_client(ch, data, cfg, opt, crypto_seed(m.seed), net); };
    if (m.transport == Transport::inproc) {
        proto::ServerSession session(server_seed(m.seed));
        out.result = proto::with_inproc_server(server_seed(m.seed), client, &session);
        out.server_params = session.params();
        return out;
    }
    proto::Endpoint e = proto::endpoint_from_env({"127.0.0.1", m.port});
    if (m.connect) {
        out.port = e.port;
        out.result = proto::with_tcp_client(e, client);
        return out;
    }
    proto::TcpServer server(e);
    out.port = server.port();
    std::mutex mu;
    std::thread t([&] {
        server.serve(server_seed(m.seed), 1, [&](const proto::ServerSession& s) {
            std::lock_guard lock(mu);
            out.server_params = s.params();
        });
    });
    try {
        out.result = proto::with_tcp_client({"127.0.0.1", server.port()}, client);
    } catch (...) {
        server.stop();
        t.join();
        throw;
    }
    t.join();
    return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

/// metrics.csv, training.svg, model.json, manifest.json and, for delegated runs, server_model.json.
inline void write_train_artifacts(const RunManifest& m, const TrainArtifacts& a) {
    const std::filesystem::path dir(m.out);
    std::filesystem::create_directories(dir);
    write_text(dir / "metrics.csv", metrics_csv(a.result.metrics));
    write_text(dir / "training.svg", training_svg(a.result.metrics, std::string("training, ") + mode_name(m.mode) + ", seed " + std::to_string(m.seed)));
    write_text(dir / "model.json", wire::model(a.result.model).dump(2) + "\n");
    write_text(dir / "manifest.json", manifest_json(m).dump(2) + "\n");
    if (a.server_params) write_text(dir / "server_model.json", wire::model(*a.server_params).dump(2) + "\n");
}

}  // namespace dvqa
