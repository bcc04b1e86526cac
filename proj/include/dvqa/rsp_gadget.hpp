#pragma once

// T-gate gadgets: two padded, optionally P-dagger-twisted EPR pairs built from
// remotely prepared |+_theta> qubits, plus their encrypted classical description.
//
// Layout: gadget qubit j in 1..4 is s0, t0, s1, t1 (index 0 of a plan is the input).
// Pair 0 carries twist p = k and pair 1 carries p = 1 ^ k, where k = PRF(sk_i, N_i)
// is the pad bit of the designated refresh nonce. A refreshed key leaf at N_i has
// public masked bit c = a ^ k, so routing through pair c always applies (P^dagger)^a.

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dvqa/classical_he.hpp"
#include "dvqa/pauli_frame.hpp"
#include "dvqa/simulator.hpp"
#include "dvqa/trapdoor.hpp"

namespace dvqa {

class GadgetError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class RspMode { ideal, faithful };

struct PairPads {
    std::uint8_t x = 0;
    std::uint8_t z = 0;
    std::uint8_t p = 0;
    friend bool operator==(const PairPads&, const PairPads&) = default;
};

/// Pads of a pair coupled from |+_{qs pi/2}> (s, qs even) and |+_{qt pi/2}> (t).
inline PairPads pair_pads_from_quarters(int qs, int qt) {
    if (qs != 0 && qs != 2) throw std::invalid_argument("the s qubit of a pair must be |+> or |->");
    if (qt < 0 || qt > 3) throw std::invalid_argument("quarter index out of range");
    PairPads out;
    out.x = static_cast<std::uint8_t>(qs / 2);
    out.p = static_cast<std::uint8_t>(qt & 1);
    out.z = static_cast<std::uint8_t>(qt == 1 || qt == 2);
    return out;
}

/// Coupling: CZ(s, t) followed by H on s.
inline void couple_pair(StateVector& reg, std::size_t s, std::size_t t) {
    reg.apply(Gate::cz(s, t));
    reg.apply(Gate::single(GateKind::H, s));
}

/// X^x Z^z (P^dagger)^p on s applied to |Phi+>_{s,t}; s is wire 0 of the result.
inline StateVector padded_pair(PairPads pads) {
    StateVector st(2);
    st.apply(Gate::single(GateKind::H, 0));
    st.apply(Gate::cnot(0, 1));
    if (pads.p) st.apply(Gate::single(GateKind::Pdagger, 0));
    if (pads.z) st.apply(Gate::single(GateKind::Z, 0));
    if (pads.x) st.apply(Gate::single(GateKind::X, 0));
    return st;
}

/// Client-side hidden record of a gadget.
struct GadgetSecret {
    std::uint8_t k = 0;
    std::array<PairPads, 2> pairs{};
};

/// Public, encrypted part. Everything here is under pk_{level+1}.
struct GadgetClassical {
    std::uint32_t level = 0;
    std::uint64_t nonce = 0;
    std::array<he::Ciphertext, 2> enc_x;
    std::array<he::Ciphertext, 2> enc_z;
    std::array<he::Ciphertext, 2> enc_p;
    he::SwitchKey switch_key;  // Enc_{pk_{level+1}}(sk_level)
};

class Gadget {
public:
    Gadget() = default;
    Gadget(GadgetClassical classical, StateVector quantum)
        : classical_(std::move(classical)), quantum_(std::move(quantum)), consumed_(std::make_shared<std::atomic<bool>>(false)) {
        if (quantum_.num_qubits() != 4) throw std::invalid_argument("gadget quantum part must have 4 qubits");
    }

    const GadgetClassical& classical() const { return classical_; }
    const StateVector& quantum() const { return quantum_; }
    std::uint32_t level() const { return classical_.level; }
    bool consumed() const { return consumed_ && consumed_->load(); }

    /// Takes the quantum part; the flag transition is atomic, so a second take always throws.
    StateVector take() {
        if (!consumed_ || consumed_->exchange(true)) throw GadgetError("gadget already consumed");
        return std::move(quantum_);
    }

private:
    GadgetClassical classical_;
    StateVector quantum_{4};
    std::shared_ptr<std::atomic<bool>> consumed_;
};

inline constexpr std::size_t gadget_s(std::size_t pair) { return 1 + 2 * pair; }
inline constexpr std::size_t gadget_t(std::size_t pair) { return 2 + 2 * pair; }

struct MeasurementPlan {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // over {0 = input, 1..4 = gadget qubits}
    std::size_t output = 0;
    friend bool operator==(const MeasurementPlan&, const MeasurementPlan&) = default;

    void validate() const {
        std::array<int, 5> seen{};
        for (auto [a, b] : pairs) {
            if (a > 4 || b > 4 || a == b) throw std::invalid_argument("invalid plan pair");
            ++seen[a];
            ++seen[b];
        }
        if (output < 1 || output > 4) throw std::invalid_argument("plan output must be a gadget qubit");
        ++seen[output];
        for (int c : seen)
            if (c != 1) throw std::invalid_argument("plan must cover every qubit exactly once");
    }
};

/// The worked two-pair chain: (in, s0), (t0, t1), output s1.
inline MeasurementPlan chain_plan() { return {{{0, gadget_s(0)}, {gadget_t(0), gadget_t(1)}}, gadget_s(1)}; }

/// Route through pair c, dispose of the other pair.
inline MeasurementPlan routed_plan(int c) {
    const std::size_t use = static_cast<std::size_t>(c & 1), other = 1 - use;
    return {{{0, gadget_s(use)}, {gadget_s(other), gadget_t(other)}}, gadget_t(use)};
}

/// Plan from the public masked bit of the key leaf refreshed at the gadget's nonce.
inline MeasurementPlan gen_measurement(const he::Ciphertext& a_tilde, const Gadget& g) {
    if (g.consumed()) throw GadgetError("gadget already consumed");
    const he::Node& n = a_tilde.node();
    if (n.tag != he::NodeTag::leaf) throw std::invalid_argument("measurement plan needs a refreshed key leaf");
    if (n.nonce != g.classical().nonce || n.level != g.level())
        throw std::invalid_argument("key leaf was not refreshed at this gadget's nonce");
    return routed_plan(n.masked);
}

struct ConsumeResult {
    std::size_t output_wire = 0;
    std::vector<BellOutcome> outcomes;  // in plan order
};

/// Appends the gadget, runs the plan's Bell measurements, and moves the output back to input_wire.
inline ConsumeResult consume_gadget(StateVector& reg, std::size_t input_wire, Gadget& g, const MeasurementPlan& plan, Rng& rng) {
    plan.validate();
    if (input_wire >= reg.num_qubits()) throw std::out_of_range("input wire out of range");
    if (g.consumed()) throw GadgetError("gadget already consumed");
    if (reg.num_qubits() + 4 > max_qubits) throw std::invalid_argument("register too wide to host a gadget");
    StateVector q = g.take();
    const std::size_t base = reg.num_qubits();
    reg.append(q);
    std::array<std::size_t, 5> pos{input_wire, base, base + 1, base + 2, base + 3};
    ConsumeResult out;
    for (auto [a, b] : plan.pairs) {
        const std::size_t pa = pos[a], pb = pos[b];
        out.outcomes.push_back(bell_measure(reg, pa, pb, rng));
        for (auto& p : pos) p -= (p > pa ? 1 : 0) + (p > pb ? 1 : 0);
    }
    reg.move_wire(pos[plan.output], input_wire);
    out.output_wire = input_wire;
    return out;
}

namespace detail {

inline StateVector generic_qubit(int which) {
    if (which == 0) return StateVector::from_amplitudes({cplx{0.6, 0.0}, cplx{0.48, 0.64}});
    return StateVector::from_amplitudes({cplx{0.28, -0.96} * std::sqrt(0.3), cplx{0.0, 1.0} * std::sqrt(0.7)});
}

inline GateKind byproduct_gate(GateKind kind) {
    if (kind != GateKind::T && kind != GateKind::Tdagger) throw std::invalid_argument("gadgets correct T or Tdagger only");
    return kind;
}

}  // namespace detail

/// Pauli left on the plan's output relative to kind|phi>, for input pad (a, b) and gadget pads; derived by simulation.
inline std::optional<PauliKey> plan_residual(GateKind kind, const MeasurementPlan& plan, std::span<const BellOutcome> outcomes,
                                             const std::array<PairPads, 2>& pairs, PauliKey input) {
    detail::byproduct_gate(kind);
    plan.validate();
    if (outcomes.size() != plan.pairs.size()) throw std::invalid_argument("one outcome per plan pair");
    std::optional<PauliKey> found;
    for (int trial = 0; trial < 2; ++trial) {
        StateVector phi = detail::generic_qubit(trial);
        StateVector reg = phi;
        apply_pad(reg, 0, input);
        reg.apply(Gate::single(kind, 0));
        reg.append(padded_pair(pairs[0]));
        reg.append(padded_pair(pairs[1]));
        std::array<std::size_t, 5> pos{0, 1, 2, 3, 4};
        for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
            const std::size_t pa = pos[plan.pairs[i].first], pb = pos[plan.pairs[i].second];
            bell_project(reg, pa, pb, outcomes[i]);
            for (auto& p : pos) p -= (p > pa ? 1 : 0) + (p > pb ? 1 : 0);
        }
        StateVector target = apply_gate(phi, Gate::single(kind, 0));
        std::optional<PauliKey> hit;
        for (int m = 0; m < 4; ++m) {
            PauliKey key{static_cast<std::uint8_t>(m & 1), static_cast<std::uint8_t>(m >> 1)};
            StateVector cand = target;
            apply_pad(cand, 0, key);
            if (fidelity(cand, reg) > 1 - 1e-9) hit = key;
        }
        if (!hit) return std::nullopt;
        if (found && !(*found == *hit)) return std::nullopt;
        found = hit;
    }
    return found;
}

/// Correction table for the routed plan: index [u][v][a][b][x][z] -> (a', b').
class CorrectionTable {
public:
    explicit CorrectionTable(GateKind kind) {
        detail::byproduct_gate(kind);
        for (unsigned idx = 0; idx < 64; ++idx) {
            const int u = idx & 1, v = (idx >> 1) & 1, a = (idx >> 2) & 1, b = (idx >> 3) & 1, x = (idx >> 4) & 1, z = (idx >> 5) & 1;
            std::array<PairPads, 2> pairs{};
            pairs[0] = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(z), static_cast<std::uint8_t>(a)};
            pairs[1] = {0, 0, static_cast<std::uint8_t>(1 - a)};
            // Route through pair 0; the disposal pair is measured on itself and never touches the output.
            MeasurementPlan plan{{{0, gadget_s(0)}}, gadget_t(0)};
            plan.pairs.push_back({gadget_s(1), gadget_t(1)});
            std::array<BellOutcome, 2> outs{BellOutcome{u, v}, disposal_outcome(pairs[1])};
            auto r = plan_residual(kind, plan, outs, pairs, PauliKey{static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)});
            if (!r) throw std::logic_error("gadget routing does not cancel the phase byproduct");
            table_[idx] = *r;
        }
    }

    PauliKey operator()(BellOutcome o, int a, int b, int x, int z) const {
        return table_[o.u | o.v << 1 | a << 2 | b << 3 | x << 4 | z << 5];
    }

    /// Outcome of Bell-measuring a pair on itself that has nonzero probability.
    static BellOutcome disposal_outcome(PairPads pads) {
        for (int m = 0; m < 4; ++m) {
            StateVector st = padded_pair(pads);
            BellOutcome o{m & 1, m >> 1};
            detail::to_bell_frame(st, 0, 1);
            double p = std::norm(st[static_cast<std::size_t>(o.u | o.v << 1)]);
            if (p > 1e-9) return o;
        }
        throw std::logic_error("pair has no Bell outcome");
    }

private:
    std::array<PauliKey, 64> table_{};
};

inline const CorrectionTable& correction_table(GateKind kind) {
    static const CorrectionTable t(GateKind::T);
    static const CorrectionTable td(GateKind::Tdagger);
    if (kind == GateKind::T) return t;
    detail::byproduct_gate(kind);
    return td;
}

/// Algebraic normal form of a 4-input boolean function as an XOR/AND/NOT circuit over (a, b, x, z).
inline void append_anf(he::BoolCircuit& c, const std::array<std::uint8_t, 16>& truth) {
    std::array<std::uint8_t, 16> coef = truth;
    for (int i = 0; i < 4; ++i)
        for (int m = 0; m < 16; ++m)
            if (m & (1 << i)) coef[m] ^= coef[m ^ (1 << i)];
    std::vector<std::size_t> terms;
    for (int m = 1; m < 16; ++m) {
        if (!coef[m]) continue;
        std::size_t w = SIZE_MAX;
        for (int i = 0; i < 4; ++i) {
            if (!(m & (1 << i))) continue;
            w = (w == SIZE_MAX) ? static_cast<std::size_t>(i) : c.add(he::BoolCircuit::Op::AND, w, static_cast<std::size_t>(i));
        }
        terms.push_back(w);
    }
    // Balanced XOR tree keeps ciphertext depth logarithmic.
    while (terms.size() > 1) {
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i + 1 < terms.size(); i += 2) next.push_back(c.add(he::BoolCircuit::Op::XOR, terms[i], terms[i + 1]));
        if (terms.size() % 2) next.push_back(terms.back());
        terms = std::move(next);
    }
    std::size_t out = terms.empty() ? c.add(he::BoolCircuit::Op::XOR, 0, 0) : terms[0];
    if (coef[0]) out = c.add(he::BoolCircuit::Op::NOT, out);
    c.outputs.push_back(out);
}

/// Key-update circuit for one routed Bell outcome: inputs (a, b, x, z), outputs (a', b').
inline he::BoolCircuit key_update_circuit(GateKind kind, BellOutcome o) {
    const auto& table = correction_table(kind);
    std::array<std::uint8_t, 16> ta{}, tb{};
    for (int m = 0; m < 16; ++m) {
        PauliKey k = table(o, m & 1, (m >> 1) & 1, (m >> 2) & 1, (m >> 3) & 1);
        ta[m] = k.a;
        tb[m] = k.b;
    }
    he::BoolCircuit c;
    c.num_inputs = 4;
    append_anf(c, ta);
    append_anf(c, tb);
    return c;
}

/// Homomorphic (a', b') for the routed plan. Keys, pads and evk are all at level gadget.level + 1.
inline std::pair<he::Ciphertext, he::Ciphertext> gadget_key_update(GateKind kind, const MeasurementPlan& plan, std::span<const BellOutcome> outcomes,
                                                                   const GadgetClassical& gc, const he::Ciphertext& a_next,
                                                                   const he::Ciphertext& b_next, const he::EvalKey& evk_next) {
    if (outcomes.empty()) throw std::invalid_argument("missing Bell outcomes");
    if (evk_next.level != gc.level + 1) throw he::LevelError("evaluation key is not at the gadget's output level");
    int route = -1;
    for (int c = 0; c < 2; ++c)
        if (plan == routed_plan(c)) route = c;
    if (route < 0) throw std::invalid_argument("homomorphic key update supports routed plans only");
    const he::BoolCircuit circuit = key_update_circuit(kind, outcomes[0]);
    std::array<he::Ciphertext, 4> in{a_next, b_next, gc.enc_x[route], gc.enc_z[route]};
    auto out = he::he_eval(evk_next, circuit, in);
    return {out[0], out[1]};
}

/// Source of remotely prepared qubits: returns the server qubit and the client's quarter index of the requested parity.
using QubitSource = std::function<std::pair<StateVector, int>(int parity)>;

inline QubitSource ideal_source(Rng& rng) {
    return [&rng](int parity) {
        int q = (parity & 1) + 2 * static_cast<int>(rng() & 1);
        return std::make_pair(prepare_plus_quarter(q), q);
    };
}

inline QubitSource faithful_source(Rng& rng, std::size_t n = 4, std::size_t mu = 4) {
    return [&rng, n, mu](int parity) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            TrapdoorFunction f = sample_trapdoor(n, mu, rng);
            auto alpha = alpha_for_parity(f, parity, rng);
            if (!alpha) continue;
            RspResult r = rsp_round(f, *alpha, rng);
            return std::make_pair(std::move(r.qubit), r.transcript.quarter);
        }
        throw std::runtime_error("no trapdoor admitted the requested parity");
    };
}

/// Client decisions for one gadget: the parity each slot (s0, t0, s1, t1) must have.
inline std::array<int, 4> slot_parities(int k) { return {0, k & 1, 0, (k & 1) ^ 1}; }

/// Server side: couples four prepared qubits (s0, t0, s1, t1) into the gadget's quantum part.
inline StateVector assemble_gadget_state(std::array<StateVector, 4> qubits) {
    StateVector reg = std::move(qubits[0]);
    for (int i = 1; i < 4; ++i) reg.append(qubits[static_cast<std::size_t>(i)]);
    couple_pair(reg, 0, 1);
    couple_pair(reg, 2, 3);
    return reg;
}

/// Client side: encrypts the classical description under pk_{i+1}.
inline GadgetClassical encrypt_gadget_classical(const GadgetSecret& sec, std::uint64_t nonce, const he::SecretKey& sk_i,
                                                const he::PublicKey& pk_next, Rng& rng) {
    if (pk_next.level != sk_i.level + 1) throw he::LevelError("gadget classical part must be encrypted at the next level");
    GadgetClassical gc;
    gc.level = sk_i.level;
    gc.nonce = nonce;
    for (std::size_t j = 0; j < 2; ++j) {
        gc.enc_x[j] = he::he_enc(pk_next, sec.pairs[j].x, rng);
        gc.enc_z[j] = he::he_enc(pk_next, sec.pairs[j].z, rng);
        gc.enc_p[j] = he::he_enc(pk_next, sec.pairs[j].p, rng);
    }
    gc.switch_key = he::make_switch_key(sk_i, pk_next, rng);
    return gc;
}

struct GeneratedGadget {
    Gadget gadget;
    GadgetSecret secret;
};

/// Both roles in one process: pick the nonce, prepare four qubits, couple, encrypt.
inline GeneratedGadget gen_gadget(const he::SecretKey& sk_i, const he::PublicKey& pk_next, const QubitSource& source, Rng& rng) {
    const std::uint64_t nonce = rng();
    GadgetSecret sec;
    sec.k = static_cast<std::uint8_t>(sk_i.pad_bit(nonce));
    auto par = slot_parities(sec.k);
    std::array<StateVector, 4> qubits;
    std::array<int, 4> quarters{};
    for (std::size_t i = 0; i < 4; ++i) {
        auto [q, quarter] = source(par[i]);
        if ((quarter & 1) != par[i]) throw std::logic_error("qubit source returned the wrong parity");
        qubits[i] = std::move(q);
        quarters[i] = quarter;
    }
    for (std::size_t j = 0; j < 2; ++j) sec.pairs[j] = pair_pads_from_quarters(quarters[2 * j], quarters[2 * j + 1]);
    GadgetClassical gc = encrypt_gadget_classical(sec, nonce, sk_i, pk_next, rng);
    return {Gadget(std::move(gc), assemble_gadget_state(std::move(qubits))), sec};
}

}  // namespace dvqa
