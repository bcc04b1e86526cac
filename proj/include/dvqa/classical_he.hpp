#pragma once

// Modeled classical homomorphic encryption with the KeyGen/Enc/Eval/Dec interface.
//
// Eval records the boolean circuit as a DAG of nodes and Dec replays it on unsealed
// leaves. A leaf stores masked = x ^ PRF(sk, nonce) plus a PRF tag, so the plaintext
// never appears unmasked. The scheme is functionally exact and API-faithful; it is
// NOT computationally secure (the public key carries the pad stream seed).

#include <sodium.h>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvqa/simulator.hpp"

namespace dvqa::he {

class DecryptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LevelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class FormatError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// sealed: PRF-masked leaves with tags. transparent: plaintext leaves, for debugging.
enum class Backend : std::uint8_t { sealed = 0, transparent = 1 };

inline constexpr unsigned min_kappa = 16;

namespace detail {

inline void ensure_sodium() {
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw std::runtime_error("libsodium initialization failed");
}

using PrfKey = std::array<std::uint8_t, 32>;

inline PrfKey derive_prf_key(std::span<const std::uint8_t> seed) {
    ensure_sodium();
    PrfKey out{};
    crypto_generichash(out.data(), out.size(), seed.data(), seed.size(), nullptr, 0);
    return out;
}

inline std::array<std::uint8_t, 8> prf(const PrfKey& key, std::uint8_t domain, std::uint64_t nonce, std::uint8_t extra) {
    std::array<std::uint8_t, 10> msg{};
    msg[0] = domain;
    for (int i = 0; i < 8; ++i) msg[1 + i] = static_cast<std::uint8_t>(nonce >> (8 * i));
    msg[9] = extra;
    std::array<std::uint8_t, 8> out{};
    crypto_generichash(out.data(), out.size(), msg.data(), msg.size(), key.data(), key.size());
    return out;
}

}  // namespace detail

struct SecretKey {
    std::uint64_t id = 0;
    std::uint32_t level = 0;
    Backend backend = Backend::sealed;
    std::vector<std::uint8_t> seed;
    detail::PrfKey prf_key{};

    int pad_bit(std::uint64_t nonce) const {
        if (backend == Backend::transparent) return 0;
        return detail::prf(prf_key, 'P', nonce, 0)[0] & 1;
    }
    std::array<std::uint8_t, 8> tag(std::uint64_t nonce, std::uint8_t masked) const {
        if (backend == Backend::transparent) return {};
        return detail::prf(prf_key, 'M', nonce, masked);
    }
};

/// Public identifier plus the encryption seed (modeled: shares the pad stream with sk).
struct PublicKey {
    std::uint64_t id = 0;
    std::uint32_t level = 0;
    SecretKey stream;
};

/// Opaque to evaluators; stands in for the bootstrapping material needed to refresh a ciphertext into a leaf.
struct RefreshCapability {
    SecretKey key;
};

struct EvalKey {
    std::uint64_t id = 0;
    std::uint32_t level = 0;
    std::shared_ptr<const RefreshCapability> refresh;
};

struct KeyTriple {
    PublicKey pk;
    SecretKey sk;
    EvalKey evk;
    unsigned kappa = min_kappa;
};

inline KeyTriple he_keygen(unsigned kappa, Rng& rng, std::uint32_t level = 0, Backend backend = Backend::sealed) {
    if (kappa < min_kappa) throw std::invalid_argument("security parameter must be at least 16");
    KeyTriple t;
    t.kappa = kappa;
    SecretKey sk;
    sk.id = rng();
    sk.level = level;
    sk.backend = backend;
    sk.seed.resize((kappa + 7) / 8);
    for (auto& b : sk.seed) b = static_cast<std::uint8_t>(rng());
    if (kappa % 8) sk.seed.back() &= static_cast<std::uint8_t>((1u << (kappa % 8)) - 1);
    sk.prf_key = detail::derive_prf_key(sk.seed);
    t.sk = sk;
    t.pk = PublicKey{sk.id, level, sk};
    t.evk = EvalKey{sk.id, level, std::make_shared<RefreshCapability>(RefreshCapability{sk})};
    return t;
}

enum class NodeTag : std::uint8_t { leaf = 1, xor_op = 2, and_op = 3, not_op = 4, keyswitch = 5, ref = 6 };

struct Node;

/// Immutable handle to a ciphertext DAG node; copies share structure.
class Ciphertext {
public:
    Ciphertext() = default;
    explicit Ciphertext(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    bool valid() const { return node_ != nullptr; }
    const Node& node() const {
        if (!node_) throw FormatError("empty ciphertext");
        return *node_;
    }
    const Node* get() const { return node_.get(); }
    std::uint32_t level() const;

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    NodeTag tag = NodeTag::leaf;
    std::uint32_t level = 0;
    // leaf
    std::uint64_t key_id = 0;
    std::uint64_t nonce = 0;
    std::uint8_t masked = 0;
    std::array<std::uint8_t, 8> mac{};
    // keyswitch: id of the key the child was encrypted under
    std::uint64_t from_id = 0;
    // xor/and: two children; not: one; keyswitch: child followed by the encrypted seed bits
    std::vector<Ciphertext> children;
};

inline std::uint32_t Ciphertext::level() const { return node().level; }

inline Ciphertext make_leaf(const SecretKey& stream, std::uint32_t level, std::uint64_t nonce, int bit) {
    auto n = std::make_shared<Node>();
    n->tag = NodeTag::leaf;
    n->level = level;
    n->key_id = stream.id;
    n->nonce = nonce;
    n->masked = static_cast<std::uint8_t>((bit & 1) ^ stream.pad_bit(nonce));
    n->mac = stream.tag(nonce, n->masked);
    return Ciphertext(std::move(n));
}

inline Ciphertext he_enc(const PublicKey& pk, int bit, Rng& rng) {
    if (bit != 0 && bit != 1) throw std::invalid_argument("plaintext must be a bit");
    return make_leaf(pk.stream, pk.level, rng(), bit);
}

inline std::vector<Ciphertext> he_enc_bits(const PublicKey& pk, std::span<const std::uint8_t> bits, Rng& rng) {
    std::vector<Ciphertext> out;
    out.reserve(bits.size());
    for (auto b : bits) out.push_back(he_enc(pk, b, rng));
    return out;
}

inline Ciphertext he_xor(const Ciphertext& a, const Ciphertext& b) {
    if (a.level() != b.level()) throw LevelError("XOR of ciphertexts at different levels");
    auto n = std::make_shared<Node>();
    n->tag = NodeTag::xor_op;
    n->level = a.level();
    n->children = {a, b};
    return Ciphertext(std::move(n));
}

inline Ciphertext he_and(const Ciphertext& a, const Ciphertext& b) {
    if (a.level() != b.level()) throw LevelError("AND of ciphertexts at different levels");
    auto n = std::make_shared<Node>();
    n->tag = NodeTag::and_op;
    n->level = a.level();
    n->children = {a, b};
    return Ciphertext(std::move(n));
}

inline Ciphertext he_not(const Ciphertext& a) {
    auto n = std::make_shared<Node>();
    n->tag = NodeTag::not_op;
    n->level = a.level();
    n->children = {a};
    return Ciphertext(std::move(n));
}

/// Boolean circuit over {XOR, AND, NOT}. Wire i < num_inputs is input i; op k writes wire num_inputs + k.
struct BoolCircuit {
    enum class Op : std::uint8_t { XOR, AND, NOT };
    struct Step {
        Op op;
        std::size_t lhs = 0;
        std::size_t rhs = 0;
    };

    std::size_t num_inputs = 0;
    std::vector<Step> steps;
    std::vector<std::size_t> outputs;

    std::size_t add(Op op, std::size_t lhs, std::size_t rhs = 0) {
        std::size_t limit = num_inputs + steps.size();
        if (lhs >= limit || (op != Op::NOT && rhs >= limit)) throw std::invalid_argument("circuit step reads an undefined wire");
        steps.push_back({op, lhs, rhs});
        return limit;
    }

    template <typename T, typename Xor, typename And, typename Not>
    std::vector<T> run(std::span<const T> inputs, Xor&& fx, And&& fa, Not&& fn) const {
        if (inputs.size() != num_inputs) throw std::invalid_argument("circuit arity mismatch");
        std::vector<T> wires(inputs.begin(), inputs.end());
        wires.reserve(num_inputs + steps.size());
        for (const auto& s : steps) {
            switch (s.op) {
                case Op::XOR: wires.push_back(fx(wires.at(s.lhs), wires.at(s.rhs))); break;
                case Op::AND: wires.push_back(fa(wires.at(s.lhs), wires.at(s.rhs))); break;
                case Op::NOT: wires.push_back(fn(wires.at(s.lhs))); break;
            }
        }
        std::vector<T> out;
        for (auto o : outputs) out.push_back(wires.at(o));
        return out;
    }

    std::vector<std::uint8_t> evaluate(std::span<const std::uint8_t> x) const {
        return run<std::uint8_t>(
            x, [](std::uint8_t a, std::uint8_t b) -> std::uint8_t { return a ^ b; },
            [](std::uint8_t a, std::uint8_t b) -> std::uint8_t { return a & b; },
            [](std::uint8_t a) -> std::uint8_t { return a ^ 1; });
    }
};

inline std::vector<Ciphertext> he_eval(const EvalKey& evk, const BoolCircuit& circuit, std::span<const Ciphertext> inputs) {
    if (inputs.size() != circuit.num_inputs) throw std::invalid_argument("circuit arity mismatch");
    for (const auto& c : inputs)
        if (c.level() != evk.level) throw LevelError("input level differs from evaluation key level");
    return circuit.run<Ciphertext>(
        inputs, [](const Ciphertext& a, const Ciphertext& b) { return he_xor(a, b); },
        [](const Ciphertext& a, const Ciphertext& b) { return he_and(a, b); },
        [](const Ciphertext& a) { return he_not(a); });
}

/// Encryption of sk_i's seed bits under pk_{i+1}.
struct SwitchKey {
    std::uint64_t from_id = 0;
    std::uint32_t from_level = 0;
    std::vector<Ciphertext> seed_bits;
};

inline SwitchKey make_switch_key(const SecretKey& from, const PublicKey& to, Rng& rng) {
    if (to.level != from.level + 1) throw LevelError("switch key must target the next level");
    SwitchKey k{from.id, from.level, {}};
    for (auto byte : from.seed)
        for (int i = 0; i < 8; ++i) k.seed_bits.push_back(he_enc(to, (byte >> i) & 1, rng));
    return k;
}

inline Ciphertext key_switch(const Ciphertext& ct, const SwitchKey& sk_enc) {
    if (ct.level() != sk_enc.from_level) throw LevelError("ciphertext level does not match switch key");
    if (sk_enc.seed_bits.empty()) throw LevelError("empty switch key");
    for (const auto& b : sk_enc.seed_bits)
        if (b.level() != sk_enc.from_level + 1) throw LevelError("switch key bits are not at the next level");
    auto n = std::make_shared<Node>();
    n->tag = NodeTag::keyswitch;
    n->level = sk_enc.from_level + 1;
    n->from_id = sk_enc.from_id;
    n->children.reserve(1 + sk_enc.seed_bits.size());
    n->children.push_back(ct);
    n->children.insert(n->children.end(), sk_enc.seed_bits.begin(), sk_enc.seed_bits.end());
    return Ciphertext(std::move(n));
}

namespace detail {

class Decryptor {
public:
    explicit Decryptor(const SecretKey& top) : top_(top) {}

    int run(const Ciphertext& ct) {
        if (ct.level() != top_.level) throw LevelError("secret key level does not match ciphertext level");
        return eval(ct, top_);
    }

private:
    int eval(const Ciphertext& ct, const SecretKey& key) {
        const Node& n = ct.node();
        if (n.level != key.level) throw DecryptionError("malformed node: level chain broken");
        if (auto it = memo_.find(&n); it != memo_.end()) return it->second;
        int bit = 0;
        switch (n.tag) {
            case NodeTag::leaf: {
                if (n.key_id != key.id) throw DecryptionError("leaf sealed under a different key");
                if (n.masked > 1) throw DecryptionError("malformed leaf");
                if (key.tag(n.nonce, n.masked) != n.mac) throw DecryptionError("leaf seal verification failed");
                bit = n.masked ^ key.pad_bit(n.nonce);
                break;
            }
            case NodeTag::xor_op:
            case NodeTag::and_op: {
                if (n.children.size() != 2) throw DecryptionError("malformed binary node");
                int a = eval(n.children[0], key), b = eval(n.children[1], key);
                bit = n.tag == NodeTag::xor_op ? (a ^ b) : (a & b);
                break;
            }
            case NodeTag::not_op: {
                if (n.children.size() != 1) throw DecryptionError("malformed NOT node");
                bit = eval(n.children[0], key) ^ 1;
                break;
            }
            case NodeTag::keyswitch: {
                if (n.children.size() < 2 || n.level == 0) throw DecryptionError("malformed key switch");
                const SecretKey& lower = recover(n, key);
                bit = eval(n.children[0], lower);
                break;
            }
            default: throw DecryptionError("unknown node tag");
        }
        memo_.emplace(&n, bit);
        return bit;
    }

    const SecretKey& recover(const Node& n, const SecretKey& key) {
        const Node* first = n.children[1].get();
        if (auto it = recovered_.find(first); it != recovered_.end()) return *it->second;
        const std::size_t nbits = n.children.size() - 1;
        if (nbits % 8) throw DecryptionError("switch key length is not whole bytes");
        SecretKey lower;
        lower.id = n.from_id;
        lower.level = n.level - 1;
        lower.backend = key.backend;
        lower.seed.assign(nbits / 8, 0);
        for (std::size_t i = 0; i < nbits; ++i)
            lower.seed[i / 8] |= static_cast<std::uint8_t>(eval(n.children[1 + i], key) << (i % 8));
        lower.prf_key = derive_prf_key(lower.seed);
        auto owned = std::make_unique<SecretKey>(std::move(lower));
        auto* raw = owned.get();
        keys_.push_back(std::move(owned));
        recovered_.emplace(first, raw);
        return *raw;
    }

    const SecretKey& top_;
    std::unordered_map<const Node*, int> memo_;
    std::unordered_map<const Node*, const SecretKey*> recovered_;
    std::vector<std::unique_ptr<SecretKey>> keys_;
};

}  // namespace detail

inline int he_dec(const SecretKey& sk, const Ciphertext& ct) { return detail::Decryptor(sk).run(ct); }

inline std::vector<int> he_dec_all(const SecretKey& sk, std::span<const Ciphertext> cts) {
    detail::Decryptor d(sk);
    std::vector<int> out;
    out.reserve(cts.size());
    for (const auto& c : cts) out.push_back(d.run(c));
    return out;
}

/// Re-expresses ct as a fresh leaf at a designated nonce; the leaf's masked bit is then public.
inline Ciphertext he_refresh(const EvalKey& evk, const Ciphertext& ct, std::uint64_t nonce) {
    if (!evk.refresh) throw std::invalid_argument("evaluation key carries no refresh capability");
    if (ct.level() != evk.level) throw LevelError("refresh level mismatch");
    const SecretKey& k = evk.refresh->key;
    return make_leaf(k, k.level, nonce, he_dec(k, ct));
}

// ---- canonical byte encoding ---------------------------------------------------------

namespace detail {

inline void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}

    std::uint8_t byte() {
        if (pos_ >= buf_.size()) throw FormatError("truncated ciphertext");
        return buf_[pos_++];
    }
    std::uint64_t varint() {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            std::uint8_t b = byte();
            v |= std::uint64_t(b & 0x7f) << shift;
            if (!(b & 0x80)) return v;
        }
        throw FormatError("varint too long");
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(byte()) << (8 * i);
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > buf_.size() - pos_) throw FormatError("truncated ciphertext");
        auto s = buf_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

inline constexpr std::size_t max_decode_depth = 20000;

class Encoder {
public:
    std::vector<std::uint8_t> encode(const Ciphertext& c) {
        std::vector<std::uint8_t> out;
        write(out, c);
        return out;
    }

private:
    void write(std::vector<std::uint8_t>& out, const Ciphertext& c) {
        const Node& n = c.node();
        if (auto it = index_.find(&n); it != index_.end()) {
            out.push_back(static_cast<std::uint8_t>(NodeTag::ref));
            put_varint(out, n.level);
            put_varint(out, it->second);
            return;
        }
        index_.emplace(&n, index_.size());
        out.push_back(static_cast<std::uint8_t>(n.tag));
        put_varint(out, n.level);
        switch (n.tag) {
            case NodeTag::leaf:
                put_varint(out, n.key_id);
                put_u64(out, n.nonce);
                out.push_back(n.masked);
                out.insert(out.end(), n.mac.begin(), n.mac.end());
                break;
            case NodeTag::keyswitch:
                put_varint(out, n.from_id);
                write_child(out, n.children[0]);
                put_varint(out, n.children.size() - 1);
                for (std::size_t i = 1; i < n.children.size(); ++i) write_child(out, n.children[i]);
                break;
            default:
                for (const auto& ch : n.children) write_child(out, ch);
                break;
        }
    }

    void write_child(std::vector<std::uint8_t>& out, const Ciphertext& c) {
        std::vector<std::uint8_t> body;
        write(body, c);
        put_varint(out, body.size());
        out.insert(out.end(), body.begin(), body.end());
    }

    std::unordered_map<const Node*, std::size_t> index_;
};

class Decoder {
public:
    Ciphertext decode(std::span<const std::uint8_t> bytes) {
        Reader r(bytes);
        Ciphertext c = read(r, 0);
        if (!r.done()) throw FormatError("trailing bytes after ciphertext");
        return c;
    }

private:
    Ciphertext read_child(Reader& r, std::size_t depth) {
        std::uint64_t len = r.varint();
        Reader sub(r.take(len));
        Ciphertext c = read(sub, depth + 1);
        if (!sub.done()) throw FormatError("child length mismatch");
        return c;
    }

    Ciphertext read(Reader& r, std::size_t depth) {
        if (depth > max_decode_depth) throw FormatError("ciphertext nesting too deep");
        auto tag = static_cast<NodeTag>(r.byte());
        std::uint64_t level = r.varint();
        if (level > 0xffffffffULL) throw FormatError("level out of range");
        if (tag == NodeTag::ref) {
            std::uint64_t idx = r.varint();
            if (idx >= table_.size()) throw FormatError("dangling reference");
            if (table_[idx].level() != level) throw FormatError("reference level mismatch");
            return table_[idx];
        }
        auto n = std::make_shared<Node>();
        n->tag = tag;
        n->level = static_cast<std::uint32_t>(level);
        std::size_t slot = table_.size();
        table_.emplace_back();  // reserve the pre-order index
        switch (tag) {
            case NodeTag::leaf: {
                n->key_id = r.varint();
                n->nonce = r.u64();
                n->masked = r.byte();
                if (n->masked > 1) throw FormatError("leaf masked bit out of range");
                auto mac = r.take(8);
                std::copy(mac.begin(), mac.end(), n->mac.begin());
                break;
            }
            case NodeTag::xor_op:
            case NodeTag::and_op:
                n->children.push_back(read_child(r, depth));
                n->children.push_back(read_child(r, depth));
                break;
            case NodeTag::not_op: n->children.push_back(read_child(r, depth)); break;
            case NodeTag::keyswitch: {
                if (n->level == 0) throw FormatError("key switch at level 0");
                n->from_id = r.varint();
                n->children.push_back(read_child(r, depth));
                std::uint64_t count = r.varint();
                if (count == 0 || count > 4096) throw FormatError("bad switch key length");
                for (std::uint64_t i = 0; i < count; ++i) n->children.push_back(read_child(r, depth));
                break;
            }
            default: throw FormatError("unknown node tag");
        }
        for (std::size_t i = 0; i < n->children.size(); ++i) {
            std::uint32_t want = (tag == NodeTag::keyswitch && i == 0) ? n->level - 1 : n->level;
            if (n->children[i].level() != want) throw FormatError("child level violates node invariants");
        }
        Ciphertext c(std::move(n));
        table_[slot] = c;
        return c;
    }

    std::vector<Ciphertext> table_;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Ciphertext& c) { return detail::Encoder().encode(c); }

inline Ciphertext deserialize(std::span<const std::uint8_t> bytes) { return detail::Decoder().decode(bytes); }

}  // namespace dvqa::he
