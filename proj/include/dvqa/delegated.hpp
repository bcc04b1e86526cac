#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "dvqa/qhe.hpp"
#include "dvqa/skdecomp.hpp"
#include "dvqa/vqa.hpp"

namespace dvqa {

struct DelegatedOptions {
    Mode mode = Mode::delegated_exact;
    unsigned kappa = he::min_kappa;
    std::size_t shots = 0;  // 0 asks for the exact expectation of the cipher state
    double epsilon = 1e-2;
    std::size_t gadget_batch = 512;  // levels added whenever the chain runs short
    QheOptions qhe;
};

/// One circuit run as the server sees it.
struct RunJob {
    CipherState cipher;
    Circuit circuit;
    RotationResource rotations;
    Basis basis = Basis::X;
    std::vector<std::size_t> wires;
    std::size_t shots = 0;
};

struct RunOutcome {
    double raw = 0;  // expectation of the measured Pauli string on the cipher state, when shots = 0
    std::vector<std::vector<std::uint8_t>> shots;
    std::vector<EncKey> keys;  // encrypted final keys of the measured wires
};

inline PauliString basis_string(Basis basis, std::vector<std::size_t> wires) {
    std::string factors(wires.size(), basis == Basis::X ? 'X' : 'Z');
    return PauliString{std::move(wires), std::move(factors)};
}

/// Server side of a run: evaluate under encryption, then measure.
inline RunOutcome serve_run(RunJob job, QheEvalKey& ek, Rng& rng) {
    if (job.wires.empty()) throw std::invalid_argument("nothing to measure");
    for (auto w : job.wires)
        if (w >= job.cipher.width()) throw std::out_of_range("measured wire outside the register");
    EvalOptions opt;
    if (!job.rotations.flips.empty()) opt.rotations = &job.rotations;
    qhe_eval(job.cipher, job.circuit, ek, rng, opt);
    RunOutcome out;
    out.keys = keys_on(job.cipher, job.wires);
    if (job.shots == 0)
        out.raw = expectation(job.cipher.reg, basis_string(job.basis, job.wires));
    else
        out.shots = qhe_measure_shots(job.cipher, job.wires, job.basis, job.shots, rng);
    return out;
}

/// Adds levels to a key chain. In-process this is qhe_extend; a remote client also ships the server half.
using ChainExtender = std::function<void(QheKeys&, std::size_t, Rng&)>;

/// Client side of a run: key material, encryption of inputs and decryption of results.
class DelegatedClient {
public:
    DelegatedClient(DelegatedOptions opt, std::uint64_t seed, const EpsilonNet* net = nullptr, ChainExtender extender = qhe_extend)
        : opt_(opt), rng_(seed), net_(net), keys_(qhe_keygen(opt.kappa, 0, rng_, opt.qhe)), extender_(std::move(extender)) {
        if (opt_.mode == Mode::plaintext) throw std::invalid_argument("plaintext mode has no client");
        if (opt_.mode == Mode::delegated_faithful && !net_) throw std::invalid_argument("faithful mode needs an epsilon net");
    }

    const DelegatedOptions& options() const { return opt_; }
    QheKeys& keys() { return keys_; }
    const ClientSecret& secret() const { return keys_.client; }
    std::size_t runs() const { return runs_; }
    std::size_t next_level() const { return next_level_; }

    /// Gate sequence actually sent: rotations for exact gates, Clifford+T words in faithful mode.
    Circuit server_circuit(const Circuit& window) {
        if (opt_.mode == Mode::delegated_exact) return window;
        return decompose_circuit(window, opt_.epsilon, *net_, 5, &cache_).circuit;
    }

    /// Levels that must be added to the chain before `circuit` can start at next_level().
    std::size_t missing_levels(const Circuit& circuit) const {
        const std::size_t need = next_level_ + t_count(circuit);
        const std::size_t have = keys_.client.levels() - 1;
        return need > have ? need - have : 0;
    }

    /// Grows the chain by at least `min_extra` levels. Returns the number added.
    std::size_t extend(std::size_t min_extra) {
        const std::size_t extra = std::max(min_extra, opt_.gadget_batch);
        extender_(keys_, extra, rng_);
        return extra;
    }

    /// `circuit` must already be in server form (see server_circuit).
    RunJob prepare(const StateVector& input, const Circuit& circuit, Basis basis, std::vector<std::size_t> wires, std::size_t shots) {
        RunJob job;
        Encrypted e = qhe_encrypt_register(keys_.client.pks.at(next_level_), input, rng_);
        if (std::any_of(circuit.begin(), circuit.end(), [](const Gate& g) { return is_rotation(g.kind); }))
            job.rotations = rotation_resource(e.pads, circuit);
        job.cipher = std::move(e.cipher);
        job.circuit = circuit;
        job.basis = basis;
        job.wires = std::move(wires);
        job.shots = shots;
        next_level_ += t_count(circuit);
        ++runs_;
        return job;
    }

    RunJob prepare_window(const StateVector& input, const Circuit& circuit, std::size_t v) {
        return prepare(input, circuit, Basis::X, {v - 1, v}, opt_.shots);
    }

    std::vector<std::vector<std::uint8_t>> decrypt_shots(const RunOutcome& r, Basis basis) const {
        const KeyFrame f = decrypt_keys(keys_.client, r.keys);
        std::vector<std::vector<std::uint8_t>> plain;
        plain.reserve(r.shots.size());
        for (const auto& s : r.shots) plain.push_back(flip_outcome(f, basis, s));
        return plain;
    }

    /// Plaintext expectation of the all-X or all-Z string on the measured wires.
    double decrypt_expectation(const RunOutcome& r, Basis basis, std::size_t shots) const {
        if (shots > 0) return parity_mean(decrypt_shots(r, basis));
        const KeyFrame f = decrypt_keys(keys_.client, r.keys);
        std::vector<std::size_t> local(f.size());
        std::iota(local.begin(), local.end(), 0);
        return pauli_sign(f, basis_string(basis, local)) * r.raw;
    }

private:
    DelegatedOptions opt_;
    Rng rng_;
    const EpsilonNet* net_;
    QheKeys keys_;
    ChainExtender extender_;
    DecompositionCache cache_;
    std::size_t next_level_ = 0;
    std::size_t runs_ = 0;
};

/// Both parties in one process; the server half of the keys is used directly.
class DelegatedEngine : public FeatureEngine {
public:
    DelegatedEngine(DelegatedOptions opt, std::uint64_t seed, const EpsilonNet* net = nullptr)
        : client_(opt, seed, net), server_rng_(seed ^ 0x5eed5e7e) {}

    double window_expectation(const StateVector& input, const Circuit& window, std::size_t v) override {
        const Circuit c = client_.server_circuit(window);
        if (const std::size_t missing = client_.missing_levels(c)) client_.extend(missing);
        return client_.decrypt_expectation(serve_run(client_.prepare_window(input, c, v), client_.keys().server, server_rng_), Basis::X,
                                           client_.options().shots);
    }

    DelegatedClient& client() { return client_; }

private:
    DelegatedClient client_;
    Rng server_rng_;
};

inline std::unique_ptr<FeatureEngine> make_engine(Mode mode, std::uint64_t seed, const DelegatedOptions& base = {}, const EpsilonNet* net = nullptr) {
    if (mode == Mode::plaintext) return std::make_unique<PlaintextEngine>(base.shots, seed);
    DelegatedOptions o = base;
    o.mode = mode;
    return std::make_unique<DelegatedEngine>(o, seed, net);
}

}  // namespace dvqa
