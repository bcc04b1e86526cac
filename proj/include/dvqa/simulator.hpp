#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dvqa {

using cplx = std::complex<double>;
using Rng = std::mt19937_64;

inline constexpr double pi = std::numbers::pi;
inline constexpr std::size_t max_qubits = 24;

/// Row-major 2x2 complex matrix.
struct Mat2 {
    std::array<cplx, 4> m{};

    cplx& operator()(std::size_t r, std::size_t c) { return m[2 * r + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return m[2 * r + c]; }

    static Mat2 identity() { return {{1, 0, 0, 1}}; }

    friend Mat2 operator*(const Mat2& a, const Mat2& b) {
        Mat2 out;
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c)
                out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c);
        return out;
    }

    Mat2 adjoint() const { return {{std::conj(m[0]), std::conj(m[2]), std::conj(m[1]), std::conj(m[3])}}; }
    cplx trace() const { return m[0] + m[3]; }
    cplx det() const { return m[0] * m[3] - m[1] * m[2]; }
};

/// Row-major 4x4 complex matrix; row/column index = 2 * bit(first wire) + bit(second wire).
struct Mat4 {
    std::array<cplx, 16> m{};

    cplx& operator()(std::size_t r, std::size_t c) { return m[4 * r + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return m[4 * r + c]; }

    static Mat4 identity() {
        Mat4 out;
        for (std::size_t i = 0; i < 4; ++i) out(i, i) = 1;
        return out;
    }

    friend Mat4 operator*(const Mat4& a, const Mat4& b) {
        Mat4 out;
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) {
                cplx acc = 0;
                for (std::size_t k = 0; k < 4; ++k) acc += a(r, k) * b(k, c);
                out(r, c) = acc;
            }
        return out;
    }

    Mat4 adjoint() const {
        Mat4 out;
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) out(r, c) = std::conj((*this)(c, r));
        return out;
    }

    cplx trace() const { return m[0] + m[5] + m[10] + m[15]; }
};

/// a (x) b with a acting on the first wire (high bit of the 4x4 index).
inline Mat4 kron(const Mat2& a, const Mat2& b) {
    Mat4 out;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) out(r, c) = a(r >> 1, c >> 1) * b(r & 1, c & 1);
    return out;
}

/// True when a = e^{i phi} b for some phi, elementwise within tol.
template <typename M>
bool equal_up_to_phase(const M& a, const M& b, double tol = 1e-12) {
    std::size_t pivot = 0;
    double best = 0;
    for (std::size_t i = 0; i < b.m.size(); ++i) {
        if (std::abs(b.m[i]) > best) {
            best = std::abs(b.m[i]);
            pivot = i;
        }
    }
    if (best < tol) {
        for (const auto& v : a.m)
            if (std::abs(v) > tol) return false;
        return true;
    }
    if (std::abs(a.m[pivot]) < tol) return false;
    cplx phase = a.m[pivot] / b.m[pivot];
    phase /= std::abs(phase);
    for (std::size_t i = 0; i < a.m.size(); ++i)
        if (std::abs(a.m[i] - phase * b.m[i]) > tol) return false;
    return true;
}

enum class GateKind { X, Y, Z, P, Pdagger, H, T, Tdagger, CNOT, CZ, RX, RY, RZ };

inline bool is_two_qubit(GateKind k) { return k == GateKind::CNOT || k == GateKind::CZ; }
inline bool is_rotation(GateKind k) { return k == GateKind::RX || k == GateKind::RY || k == GateKind::RZ; }
inline bool is_clifford(GateKind k) {
    switch (k) {
        case GateKind::X:
        case GateKind::Y:
        case GateKind::Z:
        case GateKind::P:
        case GateKind::Pdagger:
        case GateKind::H:
        case GateKind::CNOT:
        case GateKind::CZ: return true;
        default: return false;
    }
}

inline const char* gate_name(GateKind k) {
    switch (k) {
        case GateKind::X: return "X";
        case GateKind::Y: return "Y";
        case GateKind::Z: return "Z";
        case GateKind::P: return "P";
        case GateKind::Pdagger: return "Pdg";
        case GateKind::H: return "H";
        case GateKind::T: return "T";
        case GateKind::Tdagger: return "Tdg";
        case GateKind::CNOT: return "CNOT";
        case GateKind::CZ: return "CZ";
        case GateKind::RX: return "RX";
        case GateKind::RY: return "RY";
        case GateKind::RZ: return "RZ";
    }
    return "?";
}

struct Gate {
    GateKind kind = GateKind::X;
    std::array<std::size_t, 2> wires{0, 0};
    double angle = 0.0;

    static Gate single(GateKind k, std::size_t w, double angle = 0.0) {
        if (is_two_qubit(k)) throw std::invalid_argument(std::string(gate_name(k)) + " needs two wires");
        return Gate{k, {w, w}, angle};
    }
    static Gate cnot(std::size_t control, std::size_t target) { return Gate{GateKind::CNOT, {control, target}, 0}; }
    static Gate cz(std::size_t a, std::size_t b) { return Gate{GateKind::CZ, {a, b}, 0}; }
    static Gate rx(std::size_t w, double a) { return Gate{GateKind::RX, {w, w}, a}; }
    static Gate ry(std::size_t w, double a) { return Gate{GateKind::RY, {w, w}, a}; }
    static Gate rz(std::size_t w, double a) { return Gate{GateKind::RZ, {w, w}, a}; }

    bool two_qubit() const { return is_two_qubit(kind); }
    std::size_t arity() const { return two_qubit() ? 2 : 1; }

    friend bool operator==(const Gate&, const Gate&) = default;
};

using Circuit = std::vector<Gate>;

inline Mat2 single_qubit_matrix(GateKind k, double angle = 0.0) {
    const double r = 1.0 / std::sqrt(2.0);
    const cplx i{0, 1};
    switch (k) {
        case GateKind::X: return {{0, 1, 1, 0}};
        case GateKind::Y: return {{0, -i, i, 0}};
        case GateKind::Z: return {{1, 0, 0, -1}};
        case GateKind::P: return {{1, 0, 0, i}};
        case GateKind::Pdagger: return {{1, 0, 0, -i}};
        case GateKind::H: return {{r, r, r, -r}};
        case GateKind::T: return {{1, 0, 0, std::polar(1.0, pi / 4)}};
        case GateKind::Tdagger: return {{1, 0, 0, std::polar(1.0, -pi / 4)}};
        case GateKind::RX: {
            double c = std::cos(angle / 2), s = std::sin(angle / 2);
            return {{c, -i * s, -i * s, c}};
        }
        case GateKind::RY: {
            double c = std::cos(angle / 2), s = std::sin(angle / 2);
            return {{c, -s, s, c}};
        }
        case GateKind::RZ: return {{std::polar(1.0, -angle / 2), 0, 0, std::polar(1.0, angle / 2)}};
        default: throw std::invalid_argument(std::string(gate_name(k)) + " is not a single-qubit gate");
    }
}

inline Mat4 two_qubit_matrix(GateKind k) {
    Mat4 out;
    if (k == GateKind::CNOT) {
        out(0, 0) = out(1, 1) = 1;
        out(2, 3) = out(3, 2) = 1;
    } else if (k == GateKind::CZ) {
        out(0, 0) = out(1, 1) = out(2, 2) = 1;
        out(3, 3) = -1;
    } else {
        throw std::invalid_argument(std::string(gate_name(k)) + " is not a two-qubit gate");
    }
    return out;
}

inline Gate inverse(const Gate& g) {
    Gate out = g;
    switch (g.kind) {
        case GateKind::P: out.kind = GateKind::Pdagger; break;
        case GateKind::Pdagger: out.kind = GateKind::P; break;
        case GateKind::T: out.kind = GateKind::Tdagger; break;
        case GateKind::Tdagger: out.kind = GateKind::T; break;
        case GateKind::RX:
        case GateKind::RY:
        case GateKind::RZ: out.angle = -g.angle; break;
        default: break;
    }
    return out;
}

enum class Basis { Z, X };

/// Bell outcome bits: u is the phase bit, v the flip bit. Phi+ = (0,0), Phi- = (1,0), Psi+ = (0,1), Psi- = (1,1).
struct BellOutcome {
    int u = 0;
    int v = 0;
    friend bool operator==(const BellOutcome&, const BellOutcome&) = default;
};

/// Dense state vector over little-endian qubits (wire q is bit q of the amplitude index).
class StateVector {
public:
    StateVector() : StateVector(1) {}

    explicit StateVector(std::size_t num_qubits) : n_(num_qubits) {
        check_width(num_qubits);
        amps_.assign(std::size_t{1} << num_qubits, cplx{0, 0});
        amps_[0] = 1;
    }

    static StateVector from_amplitudes(std::vector<cplx> amps) {
        std::size_t n = 0;
        while ((std::size_t{1} << n) < amps.size()) ++n;
        if (amps.empty() || (std::size_t{1} << n) != amps.size())
            throw std::invalid_argument("amplitude count must be a power of two");
        check_width(n);
        StateVector s(n);
        s.amps_ = std::move(amps);
        double nrm = s.norm();
        if (std::abs(nrm - 1.0) > 1e-9) throw std::invalid_argument("amplitudes are not normalized");
        return s;
    }

    static StateVector basis_state(std::size_t num_qubits, std::size_t index) {
        StateVector s(num_qubits);
        if (index >= s.amps_.size()) throw std::out_of_range("basis index out of range");
        s.amps_[0] = 0;
        s.amps_[index] = 1;
        return s;
    }

    std::size_t num_qubits() const { return n_; }
    std::size_t dimension() const { return amps_.size(); }
    std::span<const cplx> amplitudes() const { return amps_; }
    const cplx& operator[](std::size_t i) const { return amps_[i]; }

    double norm() const {
        double acc = 0;
        for (const auto& a : amps_) acc += std::norm(a);
        return std::sqrt(acc);
    }

    void apply(const Gate& g) {
        check_gate(g);
        if (g.two_qubit()) {
            apply_matrix(two_qubit_matrix(g.kind), g.wires[0], g.wires[1]);
        } else {
            apply_matrix(single_qubit_matrix(g.kind, g.angle), g.wires[0]);
        }
    }

    void apply(std::span<const Gate> circuit) {
        for (const auto& g : circuit) apply(g);
    }

    void apply_matrix(const Mat2& u, std::size_t wire) {
        check_wire(wire);
        const std::size_t bit = std::size_t{1} << wire;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            if (i & bit) continue;
            cplx a0 = amps_[i], a1 = amps_[i | bit];
            amps_[i] = u.m[0] * a0 + u.m[1] * a1;
            amps_[i | bit] = u.m[2] * a0 + u.m[3] * a1;
        }
    }

    /// u acts on (first, second) with first as the high bit of its 4x4 index.
    void apply_matrix(const Mat4& u, std::size_t first, std::size_t second) {
        check_wire(first);
        check_wire(second);
        if (first == second) throw std::invalid_argument("two-qubit gate needs distinct wires");
        const std::size_t b1 = std::size_t{1} << first, b2 = std::size_t{1} << second;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            if (i & (b1 | b2)) continue;
            const std::array<std::size_t, 4> idx{i, i | b2, i | b1, i | b1 | b2};
            std::array<cplx, 4> in{amps_[idx[0]], amps_[idx[1]], amps_[idx[2]], amps_[idx[3]]};
            for (std::size_t r = 0; r < 4; ++r) {
                cplx acc = 0;
                for (std::size_t c = 0; c < 4; ++c) acc += u(r, c) * in[c];
                amps_[idx[r]] = acc;
            }
        }
    }

    /// Basis-state permutation |i> -> |f(i)>; f must be a bijection on [0, 2^n).
    template <typename F>
    void apply_permutation(F&& f) {
        std::vector<cplx> out(amps_.size(), cplx{0, 0});
        std::vector<bool> hit(amps_.size(), false);
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            std::size_t j = f(i);
            if (j >= amps_.size() || hit[j]) throw std::invalid_argument("permutation is not a bijection");
            hit[j] = true;
            out[j] = amps_[i];
        }
        amps_ = std::move(out);
    }

    double probability_one(std::size_t wire) const {
        check_wire(wire);
        const std::size_t bit = std::size_t{1} << wire;
        double p = 0;
        for (std::size_t i = 0; i < amps_.size(); ++i)
            if (i & bit) p += std::norm(amps_[i]);
        return p;
    }

    /// Projects wire onto |bit> and renormalizes; returns the probability of that branch.
    double project(std::size_t wire, int bit) {
        check_wire(wire);
        const std::size_t mask = std::size_t{1} << wire;
        double p = 0;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            bool one = (i & mask) != 0;
            if (one != (bit != 0)) {
                amps_[i] = 0;
            } else {
                p += std::norm(amps_[i]);
            }
        }
        if (p < 1e-300) throw std::domain_error("projection onto a zero-probability branch");
        double s = 1.0 / std::sqrt(p);
        for (auto& a : amps_) a *= s;
        return p;
    }

    /// Removes a wire that is in a computational basis state. Removing every wire leaves the scalar state.
    void discard(std::size_t wire) {
        check_wire(wire);
        double p1 = probability_one(wire);
        int bit;
        if (p1 > 1 - 1e-9) {
            bit = 1;
        } else if (p1 < 1e-9) {
            bit = 0;
        } else {
            throw std::invalid_argument("discarded wire is entangled or in superposition");
        }
        const std::size_t low = (std::size_t{1} << wire) - 1;
        std::vector<cplx> out(amps_.size() / 2);
        for (std::size_t j = 0; j < out.size(); ++j) {
            std::size_t i = (j & low) | ((j & ~low) << 1) | (static_cast<std::size_t>(bit) << wire);
            out[j] = amps_[i];
        }
        amps_ = std::move(out);
        --n_;
        renormalize();
    }

    /// Tensor product with `upper` placed on new wires num_qubits() .. num_qubits()+upper.num_qubits()-1.
    void append(const StateVector& upper) {
        check_width(n_ + upper.n_);
        std::vector<cplx> out(amps_.size() * upper.amps_.size());
        for (std::size_t j = 0; j < upper.amps_.size(); ++j)
            for (std::size_t i = 0; i < amps_.size(); ++i) out[i | (j << n_)] = amps_[i] * upper.amps_[j];
        amps_ = std::move(out);
        n_ += upper.n_;
    }

    /// Moves wire `from` to position `to`, shifting the wires in between by one.
    void move_wire(std::size_t from, std::size_t to) {
        check_wire(from);
        check_wire(to);
        if (from == to) return;
        std::vector<std::size_t> order;  // order[new position] = old wire
        for (std::size_t w = 0; w < n_; ++w)
            if (w != from) order.push_back(w);
        order.insert(order.begin() + static_cast<std::ptrdiff_t>(to), from);
        std::vector<cplx> out(amps_.size());
        for (std::size_t j = 0; j < amps_.size(); ++j) {
            std::size_t i = 0;
            for (std::size_t p = 0; p < n_; ++p)
                if (j >> p & 1) i |= std::size_t{1} << order[p];
            out[j] = amps_[i];
        }
        amps_ = std::move(out);
    }

    void renormalize() {
        double nrm = norm();
        for (auto& a : amps_) a /= nrm;
    }

private:
    static void check_width(std::size_t n) {
        if (n < 1 || n > max_qubits) throw std::invalid_argument("register width must be in 1..24");
    }
    void check_wire(std::size_t w) const {
        if (w >= n_) throw std::out_of_range("wire " + std::to_string(w) + " out of range");
    }
    void check_gate(const Gate& g) const {
        check_wire(g.wires[0]);
        if (g.two_qubit()) {
            check_wire(g.wires[1]);
            if (g.wires[0] == g.wires[1]) throw std::invalid_argument("two-qubit gate needs distinct wires");
        }
    }

    std::size_t n_ = 1;
    std::vector<cplx> amps_;
};

inline StateVector apply_gate(StateVector state, const Gate& g) {
    state.apply(g);
    return state;
}

inline cplx inner(const StateVector& a, const StateVector& b) {
    if (a.dimension() != b.dimension()) throw std::invalid_argument("state widths differ");
    cplx acc = 0;
    for (std::size_t i = 0; i < a.dimension(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

/// |<a|b>|^2; insensitive to global phase.
inline double fidelity(const StateVector& a, const StateVector& b) { return std::norm(inner(a, b)); }

inline int measure(StateVector& state, std::size_t wire, Basis basis, Rng& rng) {
    if (basis == Basis::X) state.apply(Gate::single(GateKind::H, wire));
    double p1 = state.probability_one(wire);
    int bit = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p1 ? 1 : 0;
    state.project(wire, bit);
    if (basis == Basis::X) state.apply(Gate::single(GateKind::H, wire));
    return bit;
}

/// Repeated measurement of `wires` on copies of the state; shot k holds one bit per wire, in wire-list order.
inline std::vector<std::vector<std::uint8_t>> sample_outcomes(const StateVector& state, std::span<const std::size_t> wires, Basis basis,
                                                               std::size_t shots, Rng& rng) {
    StateVector rot = state;
    for (std::size_t k = 0; k < wires.size(); ++k) {
        if (wires[k] >= state.num_qubits()) throw std::out_of_range("measured wire out of range");
        for (std::size_t j = 0; j < k; ++j)
            if (wires[j] == wires[k]) throw std::invalid_argument("measured wires must be distinct");
        if (basis == Basis::X) rot.apply(Gate::single(GateKind::H, wires[k]));
    }
    if (wires.size() > 20) throw std::invalid_argument("too many measured wires");
    std::vector<double> marginal(std::size_t{1} << wires.size(), 0.0);
    for (std::size_t i = 0; i < rot.dimension(); ++i) {
        std::size_t key = 0;
        for (std::size_t k = 0; k < wires.size(); ++k) key |= ((i >> wires[k]) & 1) << k;
        marginal[key] += std::norm(rot[i]);
    }
    std::discrete_distribution<std::size_t> dist(marginal.begin(), marginal.end());
    std::vector<std::vector<std::uint8_t>> out(shots, std::vector<std::uint8_t>(wires.size()));
    for (auto& shot : out) {
        std::size_t key = dist(rng);
        for (std::size_t k = 0; k < wires.size(); ++k) shot[k] = static_cast<std::uint8_t>((key >> k) & 1);
    }
    return out;
}

/// Mean of the product of (+1/-1) outcomes over shots, a per-shot estimate of a Z...Z or X...X string.
inline double parity_mean(std::span<const std::vector<std::uint8_t>> shots) {
    if (shots.empty()) throw std::invalid_argument("no shots");
    double acc = 0;
    for (const auto& s : shots) {
        int p = 0;
        for (auto b : s) p ^= b;
        acc += p ? -1.0 : 1.0;
    }
    return acc / static_cast<double>(shots.size());
}

namespace detail {

inline void to_bell_frame(StateVector& state, std::size_t a, std::size_t b) {
    if (a == b) throw std::invalid_argument("Bell measurement needs two distinct wires");
    state.apply(Gate::cnot(a, b));
    state.apply(Gate::single(GateKind::H, a));
}

inline void drop_pair(StateVector& state, std::size_t a, std::size_t b) {
    std::size_t hi = std::max(a, b), lo = std::min(a, b);
    state.discard(hi);
    state.discard(lo);
}

}  // namespace detail

/// Bell measurement of (a, b); both wires are removed, so higher wires shift down by up to two.
inline BellOutcome bell_measure(StateVector& state, std::size_t a, std::size_t b, Rng& rng) {
    detail::to_bell_frame(state, a, b);
    BellOutcome out;
    out.u = measure(state, a, Basis::Z, rng);
    out.v = measure(state, b, Basis::Z, rng);
    detail::drop_pair(state, a, b);
    return out;
}

/// Post-selects a Bell outcome on (a, b) and removes the wires; returns its Born probability.
inline double bell_project(StateVector& state, std::size_t a, std::size_t b, BellOutcome outcome) {
    detail::to_bell_frame(state, a, b);
    double p = state.project(a, outcome.u);
    p *= state.project(b, outcome.v);
    detail::drop_pair(state, a, b);
    return p;
}

/// Tensor-product Pauli observable; factors[k] acts on wires[k].
struct PauliString {
    std::vector<std::size_t> wires;
    std::string factors;

    static PauliString parse(std::string factors, std::vector<std::size_t> wires) {
        PauliString p{std::move(wires), std::move(factors)};
        p.validate();
        return p;
    }

    void validate() const {
        if (wires.size() != factors.size()) throw std::invalid_argument("Pauli factor count differs from wire count");
        for (std::size_t i = 0; i < wires.size(); ++i) {
            char f = factors[i];
            if (f != 'I' && f != 'X' && f != 'Y' && f != 'Z') throw std::invalid_argument("unknown Pauli factor");
            for (std::size_t j = i + 1; j < wires.size(); ++j)
                if (wires[i] == wires[j]) throw std::invalid_argument("Pauli wires must be distinct");
        }
    }
};

inline double expectation(const StateVector& state, const PauliString& obs) {
    obs.validate();
    std::size_t xmask = 0, zmask = 0, ycount = 0;
    for (std::size_t k = 0; k < obs.wires.size(); ++k) {
        if (obs.wires[k] >= state.num_qubits()) throw std::out_of_range("observable wire out of range");
        std::size_t bit = std::size_t{1} << obs.wires[k];
        switch (obs.factors[k]) {
            case 'X': xmask |= bit; break;
            case 'Y': xmask |= bit; zmask |= bit; ++ycount; break;
            case 'Z': zmask |= bit; break;
            default: break;
        }
    }
    // Y = i X Z, so O|i> = i^{#Y} (-1)^{popcount(i & zmask)} |i ^ xmask>.
    static const std::array<cplx, 4> ipow{cplx{1, 0}, cplx{0, 1}, cplx{-1, 0}, cplx{0, -1}};
    const cplx global = ipow[ycount % 4];
    cplx acc = 0;
    for (std::size_t i = 0; i < state.dimension(); ++i) {
        double sign = (std::popcount(i & zmask) & 1) ? -1.0 : 1.0;
        acc += std::conj(state[i ^ xmask]) * sign * state[i];
    }
    return (global * acc).real();
}

/// |+_theta> for theta = k * pi/2, k in 0..3.
inline StateVector prepare_plus_quarter(int k) {
    if (k < 0 || k > 3) throw std::invalid_argument("quarter-turn index must be in 0..3");
    const double r = 1.0 / std::sqrt(2.0);
    static const std::array<cplx, 4> phase{cplx{1, 0}, cplx{0, 1}, cplx{-1, 0}, cplx{0, -1}};
    return StateVector::from_amplitudes({r, r * phase[static_cast<std::size_t>(k)]});
}

inline StateVector prepare_plus_theta(double theta) {
    for (int k = 0; k < 4; ++k)
        if (std::abs(theta - k * pi / 2) < 1e-12) return prepare_plus_quarter(k);
    throw std::invalid_argument("theta must be one of 0, pi/2, pi, 3pi/2");
}

inline StateVector amplitude_encode(std::span<const double> vec, std::size_t target_qubits) {
    if (target_qubits < 1 || target_qubits > max_qubits) throw std::invalid_argument("register width must be in 1..24");
    const std::size_t dim = std::size_t{1} << target_qubits;
    if (vec.size() > dim) throw std::invalid_argument("vector longer than the register");
    double nrm = 0;
    for (double v : vec) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0 || !std::isfinite(nrm)) throw std::invalid_argument("cannot encode a zero vector");
    std::vector<cplx> amps(dim, cplx{0, 0});
    for (std::size_t i = 0; i < vec.size(); ++i) amps[i] = vec[i] / nrm;
    return StateVector::from_amplitudes(std::move(amps));
}

/// Haar-ish random state (normalized complex Gaussian amplitudes).
inline StateVector random_state(std::size_t num_qubits, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cplx> amps(std::size_t{1} << num_qubits);
    double nrm = 0;
    for (auto& a : amps) {
        a = {g(rng), g(rng)};
        nrm += std::norm(a);
    }
    for (auto& a : amps) a /= std::sqrt(nrm);
    return StateVector::from_amplitudes(std::move(amps));
}

}  // namespace dvqa
