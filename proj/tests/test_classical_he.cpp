#include "dvqa/classical_he.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace dvqa;
using namespace dvqa::he;

namespace {

struct Chain {
    std::vector<KeyTriple> keys;
    std::vector<SwitchKey> switches;  // switches[i]: sk_i under pk_{i+1}
};

Chain make_chain(std::size_t levels, Rng& rng, Backend backend = Backend::sealed) {
    Chain c;
    for (std::size_t i = 0; i < levels; ++i) c.keys.push_back(he_keygen(16, rng, static_cast<std::uint32_t>(i), backend));
    for (std::size_t i = 0; i + 1 < levels; ++i) c.switches.push_back(make_switch_key(c.keys[i].sk, c.keys[i + 1].pk, rng));
    return c;
}

BoolCircuit random_circuit(std::size_t inputs, std::size_t gates, Rng& rng) {
    BoolCircuit c;
    c.num_inputs = inputs;
    for (std::size_t g = 0; g < gates; ++g) {
        std::size_t avail = inputs + c.steps.size();
        auto op = static_cast<BoolCircuit::Op>(rng() % 3);
        c.add(op, rng() % avail, rng() % avail);
    }
    c.outputs.push_back(inputs + c.steps.size() - 1);
    return c;
}

}  // namespace

TEST(KeyGen, round_trip_and_freshness) {
    Rng rng(1);
    KeyTriple k = he_keygen(16, rng);
    EXPECT_EQ(he_dec(k.sk, he_enc(k.pk, 0, rng)), 0);
    EXPECT_EQ(he_dec(k.sk, he_enc(k.pk, 1, rng)), 1);
    KeyTriple k2 = he_keygen(16, rng);
    EXPECT_NE(k.sk.id, k2.sk.id);
    EXPECT_EQ(k.sk.seed.size(), 2u);
    EXPECT_EQ(he_keygen(128, rng).sk.seed.size(), 16u);
    EXPECT_THROW(he_keygen(8, rng), std::invalid_argument);
}

TEST(Encrypt, probabilistic) {
    Rng rng(2);
    KeyTriple k = he_keygen(16, rng);
    auto a = serialize(he_enc(k.pk, 1, rng));
    auto b = serialize(he_enc(k.pk, 1, rng));
    EXPECT_NE(a, b);
    EXPECT_THROW(he_enc(k.pk, 2, rng), std::invalid_argument);
}

TEST(Decrypt, wrong_key_is_an_error) {
    Rng rng(3);
    KeyTriple k = he_keygen(16, rng), other = he_keygen(16, rng);
    Ciphertext c = he_enc(k.pk, 1, rng);
    EXPECT_THROW(he_dec(other.sk, c), DecryptionError);
    SecretKey forged = k.sk;
    forged.seed[0] ^= 1;
    forged.prf_key = he::detail::derive_prf_key(forged.seed);
    EXPECT_THROW(he_dec(forged, c), DecryptionError);
}

TEST(Eval, basic_gates) {
    Rng rng(4);
    KeyTriple k = he_keygen(16, rng);
    auto e1 = he_enc(k.pk, 1, rng), e1b = he_enc(k.pk, 1, rng), e0 = he_enc(k.pk, 0, rng);
    EXPECT_EQ(he_dec(k.sk, he_xor(e1, e1b)), 0);
    EXPECT_EQ(he_dec(k.sk, he_and(e1, e0)), 0);
    EXPECT_EQ(he_dec(k.sk, he_not(e0)), 1);
}

TEST(Eval, key_update_circuit_truth_table) {
    Rng rng(5);
    KeyTriple k = he_keygen(16, rng);
    BoolCircuit c;  // a' = a ^ u
    c.num_inputs = 2;
    c.outputs.push_back(c.add(BoolCircuit::Op::XOR, 0, 1));
    for (int a = 0; a < 2; ++a) {
        for (int u = 0; u < 2; ++u) {
            std::vector<Ciphertext> in{he_enc(k.pk, a, rng), he_enc(k.pk, u, rng)};
            EXPECT_EQ(he_dec(k.sk, he_eval(k.evk, c, in)[0]), a ^ u);
        }
    }
}

TEST(Eval, random_dags_decrypt_to_plain_evaluation) {
    Rng rng(6);
    KeyTriple k = he_keygen(16, rng);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t inputs = 1 + rng() % 8, gates = 1 + rng() % 32;
        BoolCircuit c = random_circuit(inputs, gates, rng);
        std::vector<std::uint8_t> x(inputs);
        for (auto& b : x) b = rng() & 1;
        // independent plaintext oracle: straight-line interpretation
        std::vector<int> wires(x.begin(), x.end());
        for (const auto& s : c.steps) {
            int v = s.op == BoolCircuit::Op::XOR ? (wires[s.lhs] ^ wires[s.rhs])
                    : s.op == BoolCircuit::Op::AND ? (wires[s.lhs] & wires[s.rhs])
                                                   : (wires[s.lhs] ^ 1);
            wires.push_back(v);
        }
        auto cts = he_enc_bits(k.pk, x, rng);
        auto out = he_eval(k.evk, c, cts);
        ASSERT_EQ(he_dec(k.sk, out[0]), wires.back()) << "trial " << trial;
        EXPECT_EQ(out[0].level(), 0u);
    }
}

TEST(Eval, rejects_mixed_levels_and_arity) {
    Rng rng(7);
    Chain ch = make_chain(2, rng);
    auto a = he_enc(ch.keys[0].pk, 1, rng), b = he_enc(ch.keys[1].pk, 1, rng);
    EXPECT_THROW(he_xor(a, b), LevelError);
    BoolCircuit c;
    c.num_inputs = 2;
    c.outputs.push_back(c.add(BoolCircuit::Op::AND, 0, 1));
    std::vector<Ciphertext> one{a};
    EXPECT_THROW(he_eval(ch.keys[0].evk, c, one), std::invalid_argument);
    std::vector<Ciphertext> mixed{a, b};
    EXPECT_THROW(he_eval(ch.keys[0].evk, c, mixed), LevelError);
}

TEST(KeySwitch, single_and_double) {
    Rng rng(8);
    Chain ch = make_chain(3, rng);
    for (int bit = 0; bit < 2; ++bit) {
        Ciphertext c = he_enc(ch.keys[0].pk, bit, rng);
        Ciphertext s1 = key_switch(c, ch.switches[0]);
        EXPECT_EQ(s1.level(), 1u);
        EXPECT_EQ(he_dec(ch.keys[1].sk, s1), bit);
        Ciphertext s2 = key_switch(he_not(s1), ch.switches[1]);
        EXPECT_EQ(s2.level(), 2u);
        EXPECT_EQ(he_dec(ch.keys[2].sk, s2), bit ^ 1);
        EXPECT_THROW(he_dec(ch.keys[1].sk, s2), LevelError);
    }
}

TEST(KeySwitch, wrong_switch_key_fails_on_decryption) {
    Rng rng(9);
    Chain ch = make_chain(2, rng);
    KeyTriple stray = he_keygen(16, rng, 0);
    SwitchKey bad = make_switch_key(stray.sk, ch.keys[1].pk, rng);
    bad.from_id = ch.keys[0].sk.id;  // claims to switch sk_0 but carries another seed
    Ciphertext c = key_switch(he_enc(ch.keys[0].pk, 1, rng), bad);
    EXPECT_THROW(he_dec(ch.keys[1].sk, c), DecryptionError);
    EXPECT_THROW(key_switch(he_enc(ch.keys[1].pk, 1, rng), ch.switches[0]), LevelError);
}

TEST(Refresh, leaf_at_designated_nonce) {
    Rng rng(10);
    KeyTriple k = he_keygen(16, rng);
    for (int bit = 0; bit < 2; ++bit) {
        Ciphertext c = he_not(he_xor(he_enc(k.pk, bit, rng), he_enc(k.pk, 1, rng)));
        Ciphertext leaf = he_refresh(k.evk, c, 77);
        EXPECT_EQ(leaf.node().tag, NodeTag::leaf);
        EXPECT_EQ(leaf.node().nonce, 77u);
        EXPECT_EQ(he_dec(k.sk, leaf), bit);
        EXPECT_EQ(leaf.node().masked, bit ^ k.sk.pad_bit(77));
    }
}

TEST(Serialization, round_trip_preserves_structure) {
    Rng rng(11);
    Chain ch = make_chain(3, rng);
    Ciphertext a = he_enc(ch.keys[0].pk, 1, rng), b = he_enc(ch.keys[0].pk, 0, rng);
    Ciphertext shared = he_and(a, he_not(b));
    Ciphertext c = key_switch(he_xor(shared, shared), ch.switches[0]);
    c = key_switch(he_xor(c, he_enc(ch.keys[1].pk, 1, rng)), ch.switches[1]);
    auto bytes = serialize(c);
    Ciphertext back = deserialize(bytes);
    EXPECT_EQ(serialize(back), bytes);
    EXPECT_EQ(he_dec(ch.keys[2].sk, back), he_dec(ch.keys[2].sk, c));
    EXPECT_EQ(back.level(), 2u);
}

TEST(Serialization, shared_subtrees_stay_linear) {
    Rng rng(12);
    KeyTriple k = he_keygen(16, rng);
    Ciphertext c = he_enc(k.pk, 1, rng);
    for (int i = 0; i < 200; ++i) c = he_xor(c, c);
    EXPECT_LT(serialize(c).size(), 200u * 16u);
    EXPECT_EQ(he_dec(k.sk, deserialize(serialize(c))), 0);
}

TEST(Serialization, zero_and_one_leaves_look_alike) {
    Rng rng(13);
    KeyTriple k = he_keygen(16, rng);
    std::set<std::size_t> lengths;
    std::array<int, 2> masked_ones{};
    for (int i = 0; i < 400; ++i) {
        int bit = i & 1;
        Ciphertext c = he_enc(k.pk, bit, rng);
        lengths.insert(serialize(c).size());
        masked_ones[static_cast<std::size_t>(bit)] += c.node().masked;
    }
    EXPECT_EQ(lengths.size(), 1u);
    // masked bits are pad-randomized for both plaintexts
    EXPECT_GT(masked_ones[0], 60);
    EXPECT_LT(masked_ones[0], 140);
    EXPECT_GT(masked_ones[1], 60);
    EXPECT_LT(masked_ones[1], 140);
}

TEST(Serialization, rejects_malformed_bytes) {
    Rng rng(14);
    KeyTriple k = he_keygen(16, rng);
    auto bytes = serialize(he_and(he_enc(k.pk, 1, rng), he_enc(k.pk, 1, rng)));
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
        std::vector<std::uint8_t> trunc(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(deserialize(trunc), FormatError);
    }
    auto bad = bytes;
    bad[0] = 99;
    EXPECT_THROW(deserialize(bad), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize(trailing), FormatError);
    Rng fuzz(15);
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::uint8_t> junk(fuzz() % 64);
        for (auto& b : junk) b = static_cast<std::uint8_t>(fuzz());
        try {
            Ciphertext c = deserialize(junk);
            (void)c;
        } catch (const FormatError&) {
        }
    }
}

TEST(Backend, transparent_debug_mode) {
    Rng rng(16);
    KeyTriple k = he_keygen(16, rng, 0, Backend::transparent);
    Ciphertext c = he_enc(k.pk, 1, rng);
    EXPECT_EQ(c.node().masked, 1);
    EXPECT_EQ(he_dec(k.sk, he_not(c)), 0);
}
