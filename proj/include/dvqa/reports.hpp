#pragma once

// Worked examples shared by the CLI, the demos and the acceptance run.

#include <chrono>
#include <cstdio>
#include <string>

#include "dvqa/qhe.hpp"
#include "dvqa/skdecomp.hpp"

namespace dvqa {

struct OutcomeCounts {
    std::size_t zeros = 0;
    std::size_t ones = 0;

    std::size_t total() const { return zeros + ones; }
    double p0() const { return total() ? static_cast<double>(zeros) / static_cast<double>(total()) : 0.0; }
};

struct GadgetDemo {
    std::size_t shots = 0;
    OutcomeCounts direct;  // pad, T, client-side P^dagger and pad removal
    OutcomeCounts gadget;  // pad, T, gadget correction, decrypted keys
    std::array<std::size_t, 2> routes{};  // how often the byproduct was routed through pair 0 or pair 1
    double analytic_p0 = std::pow(std::cos(pi / 8), 2);
    double seconds = 0;

    /// Binomial standard error at the analytic probability.
    double standard_error() const { return std::sqrt(analytic_p0 * (1 - analytic_p0) / static_cast<double>(shots)); }
};

inline StateVector gadget_demo_input() {
    StateVector s(1);
    s.apply(Gate::rx(0, pi / 4));
    return s;
}

/// |+> on the s slots, and |+_{3pi/2}> on whichever t slot must carry odd parity.
inline QubitSource worked_example_source() {
    return [](int parity) {
        const int q = parity ? 3 : 0;
        return std::make_pair(prepare_plus_quarter(q), q);
    };
}

/// The single-T example with pads a = b = 1. Every gadget shot is a full run with a fresh gadget.
inline GadgetDemo gadget_demo(std::size_t shots, std::uint64_t seed) {
    if (shots == 0) throw std::invalid_argument("shots must be at least 1");
    const auto start = std::chrono::steady_clock::now();
    Rng rng(seed);
    GadgetDemo out;
    out.shots = shots;
    const StateVector psi = gadget_demo_input();
    const KeyFrame pads({PauliKey{1, 1}});

    StateVector direct = psi;
    apply_pad(direct, 0, pads[0]);
    direct.apply(Gate::single(GateKind::T, 0));
    direct.apply(Gate::single(GateKind::Pdagger, 0));  // the client knows a = 1
    apply_pad(direct, 0, pads[0]);
    const std::array<std::size_t, 1> wire{0};
    for (const auto& s : sample_outcomes(direct, wire, Basis::Z, shots, rng)) (s[0] ? out.direct.ones : out.direct.zeros)++;

    he::KeyTriple l0 = he::he_keygen(he::min_kappa, rng, 0), l1 = he::he_keygen(he::min_kappa, rng, 1);
    ClientSecret client;
    client.sks = {l0.sk, l1.sk};
    client.pks = {l0.pk, l1.pk};
    const QubitSource source = worked_example_source();
    for (std::size_t i = 0; i < shots; ++i) {
        QheEvalKey ek;
        ek.he_evks = {l0.evk, l1.evk};
        ek.gadgets.push_back(gen_gadget(l0.sk, l1.pk, source, rng).gadget);
        Encrypted e = qhe_encrypt_register(l0.pk, psi, rng, &pads);
        const he::Ciphertext leaf = he::he_refresh(ek.he_evks[0], e.cipher.keys[0].a, ek.gadgets[0].classical().nonce);
        ++out.routes[gen_measurement(leaf, ek.gadgets[0]).output == gadget_t(0) ? 0 : 1];
        qhe_eval(e.cipher, Circuit{Gate::single(GateKind::T, 0)}, ek, rng);
        const auto raw = qhe_measure_shots(e.cipher, wire, Basis::Z, 1, rng);
        const auto plain = qhe_decrypt_outcome(client, Basis::Z, raw[0], e.cipher.keys);
        (plain[0] ? out.gadget.ones : out.gadget.zeros)++;
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline std::string format_gadget_demo(const GadgetDemo& d) {
    char buf[512];
    std::string s;
    std::snprintf(buf, sizeof buf, "single-T example, |psi> = RX(pi/4)|0>, pads X Z, %zu shots in the Z basis\n", d.shots);
    s += buf;
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %10s\n", "circuit", "count(0)", "count(1)", "Pr(0)", "Pr(1)");
    s += buf;
    for (auto [name, c] : {std::pair{"direct", d.direct}, std::pair{"gadget", d.gadget}}) {
        std::snprintf(buf, sizeof buf, "%-8s %10zu %10zu %10.4f %10.4f\n", name, c.zeros, c.ones, c.p0(), 1 - c.p0());
        s += buf;
    }
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10.5f %10.5f   cos^2(pi/8), sin^2(pi/8)\n", "analytic", "", "", d.analytic_p0, 1 - d.analytic_p0);
    s += buf;
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10.3f %10.3f   / %.3f %.3f (reference samples)\n", "reported", "", "", 0.850, 0.150, 0.852, 0.148);
    s += buf;
    std::snprintf(buf, sizeof buf, "gadget routing: pair 0 x%zu, pair 1 x%zu; 3 SE band = +-%.4f; %.3f s\n", d.routes[0], d.routes[1],
                  3 * d.standard_error(), d.seconds);
    s += buf;
    return s;
}

struct DecomposeReport {
    GateKind axis = GateKind::RX;
    double angle = 0;
    double epsilon = 0;
    Mat2 target;
    Decomposition result;
};

inline GateKind rotation_axis(char axis) {
    switch (axis) {
        case 'X': case 'x': return GateKind::RX;
        case 'Y': case 'y': return GateKind::RY;
        case 'Z': case 'z': return GateKind::RZ;
        default: throw std::invalid_argument("axis must be X, Y or Z");
    }
}

inline DecomposeReport decompose_rotation(char axis, double angle, double epsilon, const EpsilonNet& net, std::size_t max_depth = 5) {
    DecomposeReport r;
    r.axis = rotation_axis(axis);
    r.angle = angle;
    r.epsilon = epsilon;
    r.target = single_qubit_matrix(r.axis, angle);
    r.result = decompose_to(r.target, epsilon, net, max_depth);
    return r;
}

inline std::string format_matrix(const Mat2& m) {
    std::string s;
    char buf[160];
    for (std::size_t r = 0; r < 2; ++r) {
        std::snprintf(buf, sizeof buf, "  [% .6f%+.6fi  % .6f%+.6fi]\n", m(r, 0).real(), m(r, 0).imag(), m(r, 1).real(), m(r, 1).imag());
        s += buf;
    }
    return s;
}

inline std::string format_decomposition(const DecomposeReport& r) {
    const GateSequence& q = r.result.sequence;
    std::string s;
    char buf[256];
    std::snprintf(buf, sizeof buf, "target %s(%.6g), epsilon %.3g, depth %zu\n", gate_name(r.axis), r.angle, r.epsilon, r.result.depth);
    s += buf;
    s += "output 1, sequence (time order, t = T^dagger):\n  " + (q.size() ? q.str() : std::string("(empty)")) + "\n";
    s += "output 2, target matrix:\n" + format_matrix(r.target);
    // shown with the global phase that best matches the target
    const Mat2& a = q.unitary();
    const cplx overlap = std::conj(r.target(0, 0)) * a(0, 0) + std::conj(r.target(0, 1)) * a(0, 1) + std::conj(r.target(1, 0)) * a(1, 0) +
                         std::conj(r.target(1, 1)) * a(1, 1);
    const cplx phase = std::abs(overlap) > 0 ? std::conj(overlap) / std::abs(overlap) : cplx{1, 0};
    Mat2 aligned = a;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) aligned(i, j) *= phase;
    s += "output 3, achieved matrix (up to global phase):\n" + format_matrix(aligned);
    std::snprintf(buf, sizeof buf, "output 4, certified distance: %.6e\n", r.result.distance);
    s += buf;
    std::snprintf(buf, sizeof buf, "tallies: T %zu, T^dagger %zu, H %zu (reported for RX(5.57): T 35, T^dagger 24, H 28)\n", q.t_count(), q.tdg_count(),
                  q.h_count());
    s += buf;
    return s;
}

}  // namespace dvqa
