#include "dvqa/pauli_frame.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace dvqa;

namespace {

const GateKind kSingleCliffords[] = {GateKind::X, GateKind::Y, GateKind::Z, GateKind::H, GateKind::P, GateKind::Pdagger};
const GateKind kTwoCliffords[] = {GateKind::CNOT, GateKind::CZ};

oracle::Mat pad(PauliKey k) {
    oracle::Mat m = oracle::Mat::Identity(2, 2);
    if (k.a) m = m * oracle::pauli('X');
    if (k.b) m = m * oracle::pauli('Z');
    return m;
}

oracle::Mat gate_matrix(GateKind k) {
    switch (k) {
        case GateKind::X: return oracle::pauli('X');
        case GateKind::Y: return oracle::pauli('Y');
        case GateKind::Z: return oracle::pauli('Z');
        case GateKind::H: return oracle::hadamard();
        case GateKind::P: return oracle::phase(pi / 2);
        case GateKind::Pdagger: return oracle::phase(-pi / 2);
        case GateKind::T: return oracle::phase(pi / 4);
        case GateKind::Tdagger: return oracle::phase(-pi / 4);
        // two-qubit: wire 0 of the pair is the high bit in kron order
        case GateKind::CNOT: return oracle::controlled(oracle::pauli('X'), 1, 0, 2);
        case GateKind::CZ: return oracle::controlled(oracle::pauli('Z'), 1, 0, 2);
        default: return {};
    }
}

PauliKey key(int a, int b) { return {static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)}; }

}  // namespace

TEST(UpdateClifford, hadamard_swaps) {
    KeyFrame f({key(1, 1)});
    EXPECT_EQ(update_clifford(f, Gate::single(GateKind::H, 0))[0], key(1, 1));
    KeyFrame g({key(1, 0)});
    EXPECT_EQ(update_clifford(g, Gate::single(GateKind::H, 0))[0], key(0, 1));
}

TEST(UpdateClifford, cnot_worked_example) {
    KeyFrame f({key(1, 1), key(1, 1)});
    KeyFrame out = update_clifford(f, Gate::cnot(0, 1));
    EXPECT_EQ(out[0], key(1, 0));
    EXPECT_EQ(out[1], key(0, 1));
}

TEST(UpdateClifford, phase_gate) {
    KeyFrame f({key(1, 0)});
    EXPECT_EQ(update_clifford(f, Gate::single(GateKind::P, 0))[0], key(1, 1));
    // oracle: P X = (phase) X Z P
    oracle::Mat lhs = gate_matrix(GateKind::P) * pad(key(1, 0));
    oracle::Mat rhs = pad(key(1, 1)) * gate_matrix(GateKind::P);
    EXPECT_TRUE(oracle::equal_up_to_phase(lhs, rhs, 1e-12));
}

TEST(UpdateClifford, cz_rule) {
    for (int m = 0; m < 16; ++m) {
        KeyFrame f({key(m & 1, (m >> 1) & 1), key((m >> 2) & 1, (m >> 3) & 1)});
        KeyFrame out = update_clifford(f, Gate::cz(0, 1));
        EXPECT_EQ(out[0], key(f[0].a, f[0].b ^ f[1].a));
        EXPECT_EQ(out[1], key(f[1].a, f[1].b ^ f[0].a));
    }
}

TEST(UpdateClifford, rejects_non_clifford) {
    KeyFrame f(1);
    EXPECT_THROW(update_clifford(f, Gate::single(GateKind::T, 0)), std::invalid_argument);
    EXPECT_THROW(update_clifford(f, Gate::rx(0, 0.3)), std::invalid_argument);
    EXPECT_THROW(update_clifford(f, Gate::single(GateKind::H, 3)), std::out_of_range);
}

TEST(UpdateClifford, exhaustive_against_independent_oracle) {
    for (GateKind k : kSingleCliffords) {
        for (int m = 0; m < 4; ++m) {
            KeyFrame f({key(m & 1, m >> 1)});
            PauliKey out = update_clifford(f, Gate::single(k, 0))[0];
            oracle::Mat u = gate_matrix(k);
            EXPECT_TRUE(oracle::equal_up_to_phase(u * pad(f[0]), pad(out) * u, 1e-12)) << gate_name(k);
            std::array<PauliKey, 1> before{f[0]}, after{out};
            EXPECT_TRUE(conjugation_holds(k, before, after));
        }
    }
    for (GateKind k : kTwoCliffords) {
        for (int m = 0; m < 16; ++m) {
            KeyFrame f({key(m & 1, (m >> 1) & 1), key((m >> 2) & 1, (m >> 3) & 1)});
            KeyFrame out = update_clifford(f, Gate{k, {0, 1}, 0});
            oracle::Mat u = gate_matrix(k);
            oracle::Mat lhs = u * oracle::kron(pad(f[0]), pad(f[1]));
            oracle::Mat rhs = oracle::kron(pad(out[0]), pad(out[1])) * u;
            EXPECT_TRUE(oracle::equal_up_to_phase(lhs, rhs, 1e-12)) << gate_name(k) << " keys " << m;
            EXPECT_TRUE(conjugation_holds(k, f.keys, out.keys));
        }
    }
}

TEST(UpdateClifford, reversed_wire_order) {
    KeyFrame f({key(1, 0), key(0, 1), key(0, 0)});
    KeyFrame out = update_clifford(f, Gate::cnot(2, 0));
    EXPECT_EQ(out[2], key(0, 0 ^ 0));
    EXPECT_EQ(out[0], key(1 ^ 0, 0));
    KeyFrame g({key(0, 1), key(0, 0), key(1, 0)});
    KeyFrame out2 = update_clifford(g, Gate::cnot(2, 0));
    EXPECT_EQ(out2[2], key(1, 0 ^ 1));
    EXPECT_EQ(out2[0], key(0 ^ 1, 1));
}

TEST(UpdateClifford, composition_is_frame_homomorphism) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        Circuit c;
        for (int i = 0; i < 20; ++i) {
            auto k = rng() % 8;
            if (k < 6) {
                c.push_back(Gate::single(kSingleCliffords[k], rng() % 3));
            } else {
                std::size_t a = rng() % 3, b = (a + 1 + rng() % 2) % 3;
                c.push_back(Gate{kTwoCliffords[k - 6], {a, b}, 0});
            }
        }
        KeyFrame f(3);
        for (auto& k : f.keys) k = key(rng() & 1, rng() & 1);
        KeyFrame stepwise = f;
        for (const auto& g : c) stepwise = update_clifford(stepwise, g);
        EXPECT_EQ(update_clifford(f, c), stepwise);
        // Whole-circuit oracle on three wires.
        oracle::Mat u = oracle::Mat::Identity(8, 8);
        for (const auto& g : c) {
            oracle::Mat gm;
            if (g.kind == GateKind::CNOT) gm = oracle::controlled(oracle::pauli('X'), g.wires[0], g.wires[1], 3);
            else if (g.kind == GateKind::CZ) gm = oracle::controlled(oracle::pauli('Z'), g.wires[0], g.wires[1], 3);
            else gm = oracle::embed(gate_matrix(g.kind), g.wires[0], 3);
            u = gm * u;
        }
        auto full_pad = [](const KeyFrame& k) {
            oracle::Mat m = oracle::Mat::Identity(8, 8);
            for (std::size_t w = 0; w < 3; ++w) m = m * oracle::embed(pad(k[w]), w, 3);
            return m;
        };
        EXPECT_TRUE(oracle::equal_up_to_phase(u * full_pad(f), full_pad(stepwise) * u, 1e-12));
    }
}

TEST(TByproduct, exponent_is_a) {
    KeyFrame f({key(1, 0), key(0, 1)});
    EXPECT_EQ(t_byproduct(f, 0), 1);
    EXPECT_EQ(t_byproduct(f, 1), 0);
    EXPECT_THROW(t_byproduct(f, 2), std::out_of_range);
}

TEST(TByproduct, identity_holds_for_all_keys) {
    for (int m = 0; m < 4; ++m) {
        PauliKey k = key(m & 1, m >> 1);
        // T X^a Z^b = P^a X^a Z^b T
        oracle::Mat lhs = gate_matrix(GateKind::T) * pad(k);
        oracle::Mat rhs = (k.a ? gate_matrix(GateKind::P) : oracle::Mat::Identity(2, 2)) * pad(k) * gate_matrix(GateKind::T);
        EXPECT_TRUE(oracle::equal_up_to_phase(lhs, rhs, 1e-12));
        std::array<PauliKey, 1> ks{k};
        auto r = verify_conjugation(GateKind::T, ks);
        ASSERT_TRUE(r.holds);
        EXPECT_EQ(r.byproduct, k.a);
        EXPECT_EQ(r.keys_after[0], k);
    }
}

TEST(VerifyConjugation, examples) {
    std::array<PauliKey, 1> k11{key(1, 1)};
    auto h = verify_conjugation(GateKind::H, k11);
    ASSERT_TRUE(h.holds);
    EXPECT_EQ(h.keys_after[0], key(1, 1));
    std::array<PauliKey, 1> k10{key(1, 0)};
    auto t = verify_conjugation(GateKind::T, k10);
    ASSERT_TRUE(t.holds);
    EXPECT_EQ(t.byproduct, 1);
    for (int m = 0; m < 4; ++m) {
        std::array<PauliKey, 1> k{key(m & 1, m >> 1)};
        auto x = verify_conjugation(GateKind::X, k);
        ASSERT_TRUE(x.holds);
        EXPECT_EQ(x.keys_after[0], k[0]);
    }
}

TEST(VerifyConjugation, detects_wrong_rule) {
    std::array<PauliKey, 2> before{key(1, 0), key(0, 0)};
    std::array<PauliKey, 2> wrong{key(1, 0), key(0, 0)};  // CNOT must spread X to the target
    EXPECT_FALSE(conjugation_holds(GateKind::CNOT, before, wrong));
}

TEST(Mixing, pad_average_is_maximally_mixed) {
    Rng rng(21);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        // random mixed state: rho = A A^dagger / tr
        oracle::Mat a(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) a(i, j) = {g(rng), g(rng)};
        oracle::Mat rho = a * a.adjoint();
        rho /= rho.trace().real();
        oracle::Mat avg = oracle::Mat::Zero(2, 2);
        for (int m = 0; m < 4; ++m) {
            oracle::Mat p = pad(key(m & 1, m >> 1));
            avg += p * rho * p.adjoint() / 4.0;
        }
        EXPECT_LT(oracle::trace_distance(avg, oracle::Mat::Identity(2, 2) / 2.0), 1e-12);
    }
}

TEST(Mixing, apply_pad_matches_matrix) {
    Rng rng(4);
    for (int m = 0; m < 4; ++m) {
        StateVector s = random_state(1, rng);
        StateVector t = s;
        apply_pad(t, 0, key(m & 1, m >> 1));
        oracle::Vec v(2), w(2);
        v << s[0], s[1];
        w << t[0], t[1];
        EXPECT_LT((pad(key(m & 1, m >> 1)) * v - w).cwiseAbs().maxCoeff(), 1e-15);
    }
}
