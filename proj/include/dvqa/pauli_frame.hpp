#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dvqa/simulator.hpp"

namespace dvqa {

/// One-time-pad key on a wire: the pad is X^a Z^b with X outermost.
struct PauliKey {
    std::uint8_t a = 0;
    std::uint8_t b = 0;
    friend bool operator==(const PauliKey&, const PauliKey&) = default;
};

struct KeyFrame {
    std::vector<PauliKey> keys;

    KeyFrame() = default;
    explicit KeyFrame(std::size_t width) : keys(width) {}
    explicit KeyFrame(std::vector<PauliKey> k) : keys(std::move(k)) {}

    std::size_t size() const { return keys.size(); }
    PauliKey& operator[](std::size_t w) { return keys.at(w); }
    const PauliKey& operator[](std::size_t w) const { return keys.at(w); }

    friend bool operator==(const KeyFrame&, const KeyFrame&) = default;
};

inline Mat2 pad_matrix(PauliKey k) {
    Mat2 out = Mat2::identity();
    if (k.a) out = out * single_qubit_matrix(GateKind::X);
    if (k.b) out = out * single_qubit_matrix(GateKind::Z);
    return out;
}

/// Applies X^a Z^b to a wire of a state (Z first, then X).
inline void apply_pad(StateVector& state, std::size_t wire, PauliKey k) {
    if (k.b) state.apply(Gate::single(GateKind::Z, wire));
    if (k.a) state.apply(Gate::single(GateKind::X, wire));
}

/// Result of solving U * pad = phase * B^e * pad' * U for pad' (and the phase byproduct exponent e for T/Tdagger).
struct ConjugationResult {
    bool holds = false;
    std::vector<PauliKey> keys_after;
    int byproduct = 0;  ///< exponent of P (after T) or Pdagger (after Tdagger)
};

namespace detail {

inline Mat2 byproduct_matrix(GateKind k, int e) {
    if (e == 0) return Mat2::identity();
    if (k == GateKind::T) return single_qubit_matrix(GateKind::P);
    if (k == GateKind::Tdagger) return single_qubit_matrix(GateKind::Pdagger);
    throw std::invalid_argument("only T and Tdagger carry a phase byproduct");
}

inline bool has_byproduct(GateKind k) { return k == GateKind::T || k == GateKind::Tdagger; }

}  // namespace detail

/// Checks U * pad(before) == phase * B^e * pad(after) * U with explicit 2x2 or 4x4 matrices.
inline bool conjugation_holds(GateKind kind, std::span<const PauliKey> before, std::span<const PauliKey> after,
                              int byproduct = 0, double tol = 1e-12) {
    if (is_two_qubit(kind)) {
        if (before.size() != 2 || after.size() != 2 || byproduct != 0) return false;
        Mat4 u = two_qubit_matrix(kind);
        Mat4 lhs = u * kron(pad_matrix(before[0]), pad_matrix(before[1]));
        Mat4 rhs = kron(pad_matrix(after[0]), pad_matrix(after[1])) * u;
        return equal_up_to_phase(lhs, rhs, tol);
    }
    if (before.size() != 1 || after.size() != 1) return false;
    if (byproduct != 0 && !detail::has_byproduct(kind)) return false;
    Mat2 u = single_qubit_matrix(kind, 0.0);
    Mat2 lhs = u * pad_matrix(before[0]);
    Mat2 rhs = detail::byproduct_matrix(kind, byproduct) * pad_matrix(after[0]) * u;
    return equal_up_to_phase(lhs, rhs, tol);
}

/// Brute-force search for the pad (and byproduct exponent) that satisfies the conjugation identity.
inline ConjugationResult verify_conjugation(GateKind kind, std::span<const PauliKey> keys) {
    ConjugationResult out;
    const std::size_t width = is_two_qubit(kind) ? 2 : 1;
    if (keys.size() != width) return out;
    if (is_rotation(kind)) return out;
    const int max_e = detail::has_byproduct(kind) ? 1 : 0;
    for (int e = 0; e <= max_e; ++e) {
        for (unsigned mask = 0; mask < (1u << (2 * width)); ++mask) {
            std::vector<PauliKey> cand(width);
            for (std::size_t w = 0; w < width; ++w) {
                cand[w].a = (mask >> (2 * w)) & 1;
                cand[w].b = (mask >> (2 * w + 1)) & 1;
            }
            if (conjugation_holds(kind, keys, cand, e)) {
                out.holds = true;
                out.keys_after = std::move(cand);
                out.byproduct = e;
                return out;
            }
        }
    }
    return out;
}

namespace detail {

/// Update tables solved by verify_conjugation; index = packed input keys.
struct DerivedTable {
    std::vector<std::vector<PauliKey>> rows;

    explicit DerivedTable(GateKind kind) {
        const std::size_t width = is_two_qubit(kind) ? 2 : 1;
        for (unsigned mask = 0; mask < (1u << (2 * width)); ++mask) {
            std::vector<PauliKey> in(width);
            for (std::size_t w = 0; w < width; ++w) {
                in[w].a = (mask >> (2 * w)) & 1;
                in[w].b = (mask >> (2 * w + 1)) & 1;
            }
            auto r = verify_conjugation(kind, in);
            if (!r.holds || r.byproduct != 0) throw std::logic_error("no Pauli-frame update exists for gate");
            rows.push_back(std::move(r.keys_after));
        }
    }

    const std::vector<PauliKey>& lookup(std::span<const PauliKey> in) const {
        unsigned mask = 0;
        for (std::size_t w = 0; w < in.size(); ++w) mask |= (unsigned(in[w].a) | unsigned(in[w].b) << 1) << (2 * w);
        return rows.at(mask);
    }
};

inline const DerivedTable& derived_table(GateKind kind) {
    static const DerivedTable y(GateKind::Y);
    static const DerivedTable cz(GateKind::CZ);
    if (kind == GateKind::Y) return y;
    if (kind == GateKind::CZ) return cz;
    throw std::invalid_argument("no derived table for gate");
}

}  // namespace detail

/// Pushes the pad through a Clifford gate. Y and CZ use rules solved by verify_conjugation.
inline KeyFrame update_clifford(KeyFrame frame, const Gate& g) {
    auto check = [&](std::size_t w) {
        if (w >= frame.size()) throw std::out_of_range("gate wire outside key frame");
    };
    check(g.wires[0]);
    if (g.two_qubit()) {
        check(g.wires[1]);
        if (g.wires[0] == g.wires[1]) throw std::invalid_argument("two-qubit gate needs distinct wires");
    }
    PauliKey& k = frame[g.wires[0]];
    switch (g.kind) {
        case GateKind::X:
        case GateKind::Z: break;
        case GateKind::Y: {
            std::array<PauliKey, 1> in{k};
            k = detail::derived_table(GateKind::Y).lookup(in)[0];
            break;
        }
        case GateKind::H: std::swap(k.a, k.b); break;
        case GateKind::P:
        case GateKind::Pdagger: k.b ^= k.a; break;
        case GateKind::CNOT: {
            PauliKey& c = frame[g.wires[0]];
            PauliKey& t = frame[g.wires[1]];
            c.b ^= t.b;
            t.a ^= c.a;
            break;
        }
        case GateKind::CZ: {
            std::array<PauliKey, 2> in{frame[g.wires[0]], frame[g.wires[1]]};
            const auto& out = detail::derived_table(GateKind::CZ).lookup(in);
            frame[g.wires[0]] = out[0];
            frame[g.wires[1]] = out[1];
            break;
        }
        default: throw std::invalid_argument(std::string(gate_name(g.kind)) + " is not a Clifford gate");
    }
    return frame;
}

inline KeyFrame update_clifford(KeyFrame frame, std::span<const Gate> circuit) {
    for (const auto& g : circuit) frame = update_clifford(std::move(frame), g);
    return frame;
}

/// Exponent of the P byproduct produced by commuting T past the pad on `wire` (T X^a Z^b = P^a X^a Z^b T).
inline int t_byproduct(const KeyFrame& frame, std::size_t wire) {
    if (wire >= frame.size()) throw std::out_of_range("wire outside key frame");
    return frame[wire].a;
}

using CliffordRule = std::function<KeyFrame(KeyFrame, const Gate&)>;

inline CliffordRule default_clifford_rule() {
    return [](KeyFrame f, const Gate& g) { return update_clifford(std::move(f), g); };
}

}  // namespace dvqa
