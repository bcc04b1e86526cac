#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dvqa/classical_he.hpp"
#include "dvqa/pauli_frame.hpp"
#include "dvqa/rsp_gadget.hpp"
#include "dvqa/simulator.hpp"

namespace dvqa {

struct QheOptions {
    RspMode rsp = RspMode::ideal;
    he::Backend backend = he::Backend::sealed;
    std::size_t trapdoor_n = 4;
    std::size_t trapdoor_mu = 4;
};

/// Everything the client keeps: the sk chain, the matching pks, and each gadget's hidden record.
struct ClientSecret {
    unsigned kappa = he::min_kappa;
    QheOptions options;
    std::vector<he::SecretKey> sks;
    std::vector<he::PublicKey> pks;
    std::vector<GadgetSecret> gadget_secrets;

    std::size_t levels() const { return sks.size(); }
    const he::SecretKey& sk(std::uint32_t level) const {
        if (level >= sks.size()) throw he::LevelError("secret key chain does not reach this level");
        return sks[level];
    }
};

/// Server-held evaluation key: gadgets[i] takes keys from level i to i+1.
struct QheEvalKey {
    std::vector<Gadget> gadgets;
    std::vector<he::EvalKey> he_evks;

    std::size_t t_capacity() const { return gadgets.size(); }
    const he::SwitchKey& sk_encryption(std::size_t i) const { return gadgets.at(i).classical().switch_key; }
};

struct QheKeys {
    ClientSecret client;
    QheEvalKey server;
};

namespace detail {

inline QubitSource qubit_source(const QheOptions& o, Rng& rng) {
    if (o.rsp == RspMode::faithful) return faithful_source(rng, o.trapdoor_n, o.trapdoor_mu);
    return ideal_source(rng);
}

}  // namespace detail

/// Adds `extra` levels (one HE key triple and one gadget each) on top of an existing chain.
inline void qhe_extend(QheKeys& keys, std::size_t extra, Rng& rng) {
    ClientSecret& c = keys.client;
    QheEvalKey& s = keys.server;
    if (c.sks.empty()) throw std::logic_error("key chain has no base level");
    QubitSource source = detail::qubit_source(c.options, rng);
    for (std::size_t k = 0; k < extra; ++k) {
        const auto level = static_cast<std::uint32_t>(c.sks.size());
        he::KeyTriple t = he::he_keygen(c.kappa, rng, level, c.options.backend);
        GeneratedGadget g = gen_gadget(c.sks.back(), t.pk, source, rng);
        c.sks.push_back(t.sk);
        c.pks.push_back(t.pk);
        c.gadget_secrets.push_back(g.secret);
        s.he_evks.push_back(t.evk);
        s.gadgets.push_back(std::move(g.gadget));
    }
}

/// L+1 HE key triples and L gadgets.
inline QheKeys qhe_keygen(unsigned kappa, std::size_t t_count, Rng& rng, QheOptions options = {}) {
    QheKeys keys;
    keys.client.kappa = kappa;
    keys.client.options = options;
    he::KeyTriple t0 = he::he_keygen(kappa, rng, 0, options.backend);
    keys.client.sks.push_back(t0.sk);
    keys.client.pks.push_back(t0.pk);
    keys.server.he_evks.push_back(t0.evk);
    qhe_extend(keys, t_count, rng);
    return keys;
}

struct EncKey {
    he::Ciphertext a;
    he::Ciphertext b;
};

struct CipherState {
    StateVector reg;
    std::vector<EncKey> keys;
    std::uint32_t level = 0;

    std::size_t width() const { return reg.num_qubits(); }
};

struct Encrypted {
    CipherState cipher;
    KeyFrame pads;  // client copy; needed only for rotation resources
};

/// Fresh uniform pads unless `fixed` is given (tests and worked examples pin them).
/// Encrypting under pk_l starts the cipher state at level l, so later runs reuse an extended chain.
inline Encrypted qhe_encrypt_register(const he::PublicKey& pk0, StateVector reg, Rng& rng, const KeyFrame* fixed = nullptr) {
    if (fixed && fixed->size() != reg.num_qubits()) throw std::invalid_argument("pad count differs from register width");
    Encrypted out;
    out.pads = KeyFrame(reg.num_qubits());
    for (std::size_t w = 0; w < reg.num_qubits(); ++w) {
        PauliKey k = fixed ? (*fixed)[w] : PauliKey{static_cast<std::uint8_t>(rng() & 1), static_cast<std::uint8_t>(rng() & 1)};
        apply_pad(reg, w, k);
        out.pads[w] = k;
        out.cipher.keys.push_back({he::he_enc(pk0, k.a, rng), he::he_enc(pk0, k.b, rng)});
    }
    out.cipher.reg = std::move(reg);
    out.cipher.level = pk0.level;
    return out;
}

/// Per-wire inputs; wire i of the register is states[i].
inline Encrypted qhe_encrypt(const he::PublicKey& pk0, std::span<const StateVector> states, Rng& rng) {
    if (states.empty()) throw std::invalid_argument("nothing to encrypt");
    StateVector reg = states[0];
    if (reg.num_qubits() != 1) throw std::invalid_argument("per-wire inputs must be single qubits");
    for (std::size_t i = 1; i < states.size(); ++i) {
        if (states[i].num_qubits() != 1) throw std::invalid_argument("per-wire inputs must be single qubits");
        reg.append(states[i]);
    }
    return qhe_encrypt_register(pk0, std::move(reg), rng);
}

/// Stand-in for the client-prepared resource that lets the server apply R((-1)^f theta) without learning f's origin.
struct RotationResource {
    std::vector<std::uint8_t> flips;
};

/// Client side: flip bits for every rotation in the circuit, tracked through the Clifford frame.
inline RotationResource rotation_resource(KeyFrame pads, std::span<const Gate> circuit, const CliffordRule& rule = default_clifford_rule()) {
    RotationResource r;
    for (const auto& g : circuit) {
        if (g.kind == GateKind::T || g.kind == GateKind::Tdagger)
            throw std::invalid_argument("rotation resources cannot be prepared past a T gate");
        if (is_rotation(g.kind)) {
            if (g.wires[0] >= pads.size()) throw std::out_of_range("gate wire outside register");
            const PauliKey k = pads[g.wires[0]];
            std::uint8_t f = g.kind == GateKind::RX ? k.b : g.kind == GateKind::RZ ? k.a : static_cast<std::uint8_t>(k.a ^ k.b);
            r.flips.push_back(f);
            continue;
        }
        pads = rule(std::move(pads), g);
    }
    return r;
}

struct EvalOptions {
    CliffordRule rule = default_clifford_rule();
    const RotationResource* rotations = nullptr;
};

namespace detail {

/// Applies a Clifford key update homomorphically. The rule is GF(2)-linear in the key bits of the touched
/// wires, so probing it with unit frames gives the XOR pattern for each output bit.
inline void homomorphic_clifford(std::vector<EncKey>& keys, const Gate& g, const CliffordRule& rule) {
    const std::size_t k = g.two_qubit() ? 2 : 1;
    Gate local = g;
    local.wires[0] = 0;
    if (k == 2) local.wires[1] = 1;
    auto probe = [&](int bit) {
        KeyFrame f(k);
        if (bit >= 0) {
            auto& pk = f[static_cast<std::size_t>(bit / 2)];
            (bit % 2 ? pk.b : pk.a) = 1;
        }
        return rule(f, local);
    };
    const KeyFrame zero = probe(-1);
    std::vector<KeyFrame> unit;
    for (int j = 0; j < static_cast<int>(2 * k); ++j) unit.push_back(probe(j));

    std::vector<he::Ciphertext> in;
    for (std::size_t w = 0; w < k; ++w) {
        in.push_back(keys[g.wires[w]].a);
        in.push_back(keys[g.wires[w]].b);
    }
    auto bit_of = [](const KeyFrame& f, std::size_t j) { return j % 2 ? f[j / 2].b : f[j / 2].a; };
    std::vector<he::Ciphertext> out;
    for (std::size_t o = 0; o < 2 * k; ++o) {
        std::optional<he::Ciphertext> acc;
        for (std::size_t j = 0; j < 2 * k; ++j) {
            if (!(bit_of(unit[j], o) ^ bit_of(zero, o))) continue;
            acc = acc ? he::he_xor(*acc, in[j]) : in[j];
        }
        if (!acc) acc = he::he_xor(in[0], in[0]);
        if (bit_of(zero, o)) acc = he::he_not(*acc);
        out.push_back(*acc);
    }
    for (std::size_t w = 0; w < k; ++w) keys[g.wires[w]] = {out[2 * w], out[2 * w + 1]};
}

}  // namespace detail

/// Number of gadgets a circuit needs.
inline std::size_t t_count(std::span<const Gate> circuit) {
    std::size_t n = 0;
    for (const auto& g : circuit) n += (g.kind == GateKind::T || g.kind == GateKind::Tdagger) ? 1 : 0;
    return n;
}

inline void qhe_eval(CipherState& cs, std::span<const Gate> circuit, QheEvalKey& ek, Rng& rng, const EvalOptions& opt = {}) {
    if (cs.keys.size() != cs.width()) throw std::invalid_argument("key count differs from register width");
    if (cs.level + t_count(circuit) > ek.gadgets.size()) throw GadgetError("not enough gadgets for this circuit");
    std::size_t next_rotation = 0;
    for (const auto& g : circuit) {
        if (g.wires[0] >= cs.width() || (g.two_qubit() && g.wires[1] >= cs.width())) throw std::out_of_range("gate wire outside register");
        if (is_rotation(g.kind)) {
            if (!opt.rotations || next_rotation >= opt.rotations->flips.size())
                throw std::invalid_argument("rotation gates need a rotation resource");
            const bool flip = opt.rotations->flips[next_rotation++];
            Gate applied = g;
            if (flip) applied.angle = -g.angle;
            cs.reg.apply(applied);
            continue;
        }
        if (g.kind == GateKind::T || g.kind == GateKind::Tdagger) {
            const std::size_t w = g.wires[0];
            const std::uint32_t i = cs.level;
            Gadget& gadget = ek.gadgets[i];
            if (gadget.level() != i) throw GadgetError("gadget chain out of order");
            cs.reg.apply(g);
            he::Ciphertext leaf = he::he_refresh(ek.he_evks[i], cs.keys[w].a, gadget.classical().nonce);
            MeasurementPlan plan = gen_measurement(leaf, gadget);
            ConsumeResult res = consume_gadget(cs.reg, w, gadget, plan, rng);
            const he::SwitchKey& sw = gadget.classical().switch_key;
            for (std::size_t v = 0; v < cs.width(); ++v) {
                if (v == w) continue;
                cs.keys[v] = {he::key_switch(cs.keys[v].a, sw), he::key_switch(cs.keys[v].b, sw)};
            }
            auto [na, nb] = gadget_key_update(g.kind, plan, res.outcomes, gadget.classical(), he::key_switch(leaf, sw),
                                              he::key_switch(cs.keys[w].b, sw), ek.he_evks[i + 1]);
            cs.keys[w] = {na, nb};
            cs.level = i + 1;
            continue;
        }
        if (!is_clifford(g.kind)) throw std::invalid_argument(std::string(gate_name(g.kind)) + " cannot be evaluated");
        cs.reg.apply(g);
        detail::homomorphic_clifford(cs.keys, g, opt.rule);
    }
    if (opt.rotations && next_rotation != opt.rotations->flips.size()) throw std::invalid_argument("unused rotation resources");
}

inline KeyFrame decrypt_keys(const ClientSecret& client, std::span<const EncKey> keys) {
    KeyFrame f(keys.size());
    for (std::size_t w = 0; w < keys.size(); ++w) {
        const auto level = keys[w].a.level();
        if (keys[w].b.level() != level) throw he::LevelError("key pair levels differ");
        const he::SecretKey& sk = client.sk(level);
        f[w] = {static_cast<std::uint8_t>(he::he_dec(sk, keys[w].a)), static_cast<std::uint8_t>(he::he_dec(sk, keys[w].b))};
    }
    return f;
}

/// Undoes X^a Z^b on every wire.
inline StateVector qhe_decrypt_state(const ClientSecret& client, const CipherState& cs) {
    if (cs.keys.size() != cs.width()) throw std::invalid_argument("key count differs from register width");
    for (const auto& k : cs.keys)
        if (k.a.level() != cs.level) throw he::LevelError("key level differs from cipher state level");
    KeyFrame f = decrypt_keys(client, cs.keys);
    StateVector out = cs.reg;
    for (std::size_t w = 0; w < f.size(); ++w) {
        if (f[w].a) out.apply(Gate::single(GateKind::X, w));
        if (f[w].b) out.apply(Gate::single(GateKind::Z, w));
    }
    return out;
}

/// Z basis flips on a, X basis on b.
inline std::vector<std::uint8_t> flip_outcome(const KeyFrame& frame, Basis basis, std::span<const std::uint8_t> raw) {
    if (raw.size() != frame.size()) throw std::invalid_argument("one outcome per measured wire");
    std::vector<std::uint8_t> out(raw.begin(), raw.end());
    for (std::size_t w = 0; w < raw.size(); ++w) out[w] ^= basis == Basis::Z ? frame[w].a : frame[w].b;
    return out;
}

inline std::vector<std::uint8_t> qhe_decrypt_outcome(const ClientSecret& client, Basis basis, std::span<const std::uint8_t> raw,
                                                     std::span<const EncKey> keys) {
    if (raw.size() != keys.size()) throw std::invalid_argument("one outcome per measured wire");
    return flip_outcome(decrypt_keys(client, keys), basis, raw);
}

/// Server side: shot records of the encrypted register on `wires`.
inline std::vector<std::vector<std::uint8_t>> qhe_measure_shots(const CipherState& cs, std::span<const std::size_t> wires, Basis basis,
                                                                std::size_t shots, Rng& rng) {
    return sample_outcomes(cs.reg, wires, basis, shots, rng);
}

inline std::vector<EncKey> keys_on(const CipherState& cs, std::span<const std::size_t> wires) {
    std::vector<EncKey> out;
    for (auto w : wires) out.push_back(cs.keys.at(w));
    return out;
}

/// Sign relating the expectation of a Pauli string on the cipher state to the plaintext one.
inline double pauli_sign(const KeyFrame& frame, const PauliString& obs) {
    int parity = 0;
    for (std::size_t k = 0; k < obs.wires.size(); ++k) {
        const PauliKey& p = frame[obs.wires[k]];
        switch (obs.factors[k]) {
            case 'X': parity ^= p.b; break;
            case 'Z': parity ^= p.a; break;
            case 'Y': parity ^= p.a ^ p.b; break;
            default: break;
        }
    }
    return parity ? -1.0 : 1.0;
}

inline double qhe_decrypt_expectation(const ClientSecret& client, const CipherState& cs, const PauliString& obs, double raw) {
    obs.validate();
    for (auto w : obs.wires)
        if (w >= cs.width()) throw std::out_of_range("observable wire out of range");
    return pauli_sign(decrypt_keys(client, cs.keys), obs) * raw;
}

}  // namespace dvqa
