#pragma once

// Toy two-regular trapdoor family f(x) = A x + c over GF(2) and the simulated
// remote state preparation round built on it. A has rank n-1 with kernel {0, t},
// so every image has exactly the two preimages x and x ^ t. Being affine, the
// family is trivially invertible without t; it is a functional stand-in only.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dvqa/simulator.hpp"

namespace dvqa {

namespace gf2 {

inline int parity(std::uint32_t v) { return std::popcount(v) & 1; }

inline std::size_t rank(std::vector<std::uint32_t> rows) {
    std::size_t r = 0;
    for (int bit = 31; bit >= 0; --bit) {
        const std::uint32_t mask = std::uint32_t{1} << bit;
        auto pivot = std::find_if(rows.begin() + static_cast<std::ptrdiff_t>(r), rows.end(),
                                  [&](std::uint32_t v) { return v & mask; });
        if (pivot == rows.end()) continue;
        std::swap(rows[r], *pivot);
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (i != r && (rows[i] & mask)) rows[i] ^= rows[r];
        ++r;
    }
    return r;
}

}  // namespace gf2

struct TrapdoorFunction {
    std::size_t n = 0;
    std::size_t mu = 0;
    std::vector<std::uint32_t> rows;  // row i of A as an n-bit mask; bit j multiplies x_j
    std::uint32_t offset = 0;         // c, a mu-bit mask
    std::uint32_t trapdoor = 0;       // t, bit n-1 always set

    std::uint32_t operator()(std::uint32_t x) const {
        std::uint32_t y = offset;
        for (std::size_t i = 0; i < mu; ++i) y ^= static_cast<std::uint32_t>(gf2::parity(rows[i] & x)) << i;
        return y;
    }

    /// Both preimages of y, or nothing when y is outside the image.
    std::optional<std::pair<std::uint32_t, std::uint32_t>> invert(std::uint32_t y) const {
        // Gaussian elimination on [A | y ^ c]; the free direction is t.
        std::uint32_t target = y ^ offset;
        std::vector<std::pair<std::uint32_t, int>> eq;
        for (std::size_t i = 0; i < mu; ++i) eq.emplace_back(rows[i], (target >> i) & 1);
        std::vector<int> pivot_col;
        std::size_t r = 0;
        for (std::size_t col = 0; col < n; ++col) {
            const std::uint32_t m = std::uint32_t{1} << col;
            std::size_t p = r;
            while (p < eq.size() && !(eq[p].first & m)) ++p;
            if (p == eq.size()) continue;
            std::swap(eq[r], eq[p]);
            for (std::size_t i = 0; i < eq.size(); ++i) {
                if (i != r && (eq[i].first & m)) {
                    eq[i].first ^= eq[r].first;
                    eq[i].second ^= eq[r].second;
                }
            }
            pivot_col.push_back(static_cast<int>(col));
            ++r;
        }
        for (std::size_t i = r; i < eq.size(); ++i)
            if (eq[i].second) return std::nullopt;
        std::uint32_t x = 0;  // free variables set to zero
        for (std::size_t i = 0; i < r; ++i)
            if (eq[i].second) x |= std::uint32_t{1} << pivot_col[i];
        if ((*this)(x) != y) return std::nullopt;
        return std::make_pair(x, x ^ trapdoor);
    }
};

inline TrapdoorFunction sample_trapdoor(std::size_t n, std::size_t mu, Rng& rng) {
    if (n < 3) throw std::invalid_argument("trapdoor input width must be at least 3");
    if (mu + 1 < n) throw std::invalid_argument("trapdoor output width must be at least n-1");
    if (n + mu > max_qubits) throw std::invalid_argument("trapdoor does not fit in the simulated register");
    const std::uint32_t full = (std::uint32_t{1} << n) - 1;
    const std::uint32_t last = std::uint32_t{1} << (n - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
        TrapdoorFunction f;
        f.n = n;
        f.mu = mu;
        f.trapdoor = static_cast<std::uint32_t>(rng()) & full;
        if (!(f.trapdoor & last)) continue;
        for (std::size_t i = 0; i < mu; ++i) {
            std::uint32_t r = static_cast<std::uint32_t>(rng()) & full;
            if (gf2::parity(r & f.trapdoor)) r ^= last;
            f.rows.push_back(r);
        }
        if (gf2::rank(f.rows) != n - 1) continue;
        f.offset = static_cast<std::uint32_t>(rng()) & ((std::uint32_t{1} << mu) - 1);
        return f;
    }
    throw std::runtime_error("trapdoor sampling did not converge in 64 attempts");
}

struct RspTranscript {
    std::vector<std::uint8_t> alpha;  // n-1 bits
    std::uint32_t y = 0;
    std::vector<std::uint8_t> b;  // n-1 bits
    int quarter = 0;              // theta = quarter * pi / 2
};

/// Server half of one preparation round; holds the n + mu qubit register.
class RspServerRound {
public:
    RspServerRound(std::vector<std::uint32_t> rows, std::uint32_t offset, std::size_t n, std::size_t mu)
        : f_{n, mu, std::move(rows), offset, 0}, reg_(n + mu) {}

    /// Steps 1 and 2: superposition, U_f, and the image measurement.
    std::uint32_t commit(Rng& rng) {
        const std::size_t n = f_.n;
        for (std::size_t j = 0; j < n; ++j) reg_.apply(Gate::single(GateKind::H, j));
        const std::uint32_t xmask = (std::uint32_t{1} << n) - 1;
        reg_.apply_permutation([&](std::size_t i) {
            auto x = static_cast<std::uint32_t>(i) & xmask;
            return i ^ (static_cast<std::size_t>(f_(x)) << n);
        });
        std::uint32_t y = 0;
        for (std::size_t i = 0; i < f_.mu; ++i)
            y |= static_cast<std::uint32_t>(measure(reg_, n + i, Basis::Z, rng)) << i;
        for (std::size_t i = f_.mu; i-- > 0;) reg_.discard(n + i);
        committed_ = true;
        return y;
    }

    /// Step 3: measure the first n-1 qubits in the bases |0> +- e^{i alpha_j pi/2}|1>; b_j = 0 means "+".
    std::vector<std::uint8_t> measure_bases(std::span<const std::uint8_t> alpha, Rng& rng) {
        if (!committed_) throw std::logic_error("basis measurement before commitment");
        const std::size_t n = f_.n;
        if (alpha.size() != n - 1) throw std::invalid_argument("alpha must have n-1 bits");
        std::vector<std::uint8_t> b(n - 1);
        for (std::size_t j = 0; j < n - 1; ++j) {
            if (alpha[j] > 1) throw std::invalid_argument("alpha entries are bits");
            if (alpha[j]) reg_.apply(Gate::single(GateKind::Pdagger, j));
            reg_.apply(Gate::single(GateKind::H, j));
            b[j] = static_cast<std::uint8_t>(measure(reg_, j, Basis::Z, rng));
        }
        for (std::size_t j = n - 1; j-- > 0;) reg_.discard(j);
        measured_ = true;
        return b;
    }

    StateVector take_qubit() {
        if (!measured_) throw std::logic_error("qubit requested before the round finished");
        return reg_;
    }

private:
    TrapdoorFunction f_;
    StateVector reg_;
    bool committed_ = false;
    bool measured_ = false;
};

/// Step 4: theta index = (-1)^{x_n} sum_j (x_j - x'_j)(2 b_j + alpha_j) mod 4.
inline int recover_quarter(const TrapdoorFunction& f, std::uint32_t y, std::span<const std::uint8_t> alpha,
                           std::span<const std::uint8_t> b) {
    auto pre = f.invert(y);
    if (!pre) throw std::runtime_error("image has no preimage");
    auto [x, xp] = *pre;
    const std::size_t n = f.n;
    if (((x >> (n - 1)) & 1) == ((xp >> (n - 1)) & 1)) throw std::logic_error("degenerate collapse: x_n equals x'_n");
    int sum = 0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        int d = static_cast<int>((x >> j) & 1) - static_cast<int>((xp >> j) & 1);
        sum += d * (2 * b[j] + alpha[j]);
    }
    if ((x >> (n - 1)) & 1) sum = -sum;
    return ((sum % 4) + 4) % 4;
}

/// Random alpha with sum_j t_j alpha_j = parity (mod 2), which fixes the parity of the recovered quarter index.
inline std::optional<std::vector<std::uint8_t>> alpha_for_parity(const TrapdoorFunction& f, int parity, Rng& rng) {
    const std::size_t n = f.n;
    std::vector<std::uint8_t> alpha(n - 1);
    for (auto& a : alpha) a = static_cast<std::uint8_t>(rng() & 1);
    int cur = 0;
    for (std::size_t j = 0; j + 1 < n; ++j) cur ^= ((f.trapdoor >> j) & 1) & alpha[j];
    if (cur == (parity & 1)) return alpha;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        if ((f.trapdoor >> j) & 1) {
            alpha[j] ^= 1;
            return alpha;
        }
    }
    return std::nullopt;
}

struct RspResult {
    RspTranscript transcript;
    StateVector qubit;
};

inline RspResult rsp_round(const TrapdoorFunction& f, std::span<const std::uint8_t> alpha, Rng& rng) {
    RspServerRound server(f.rows, f.offset, f.n, f.mu);
    RspResult out;
    out.transcript.alpha.assign(alpha.begin(), alpha.end());
    out.transcript.y = server.commit(rng);
    out.transcript.b = server.measure_bases(alpha, rng);
    out.transcript.quarter = recover_quarter(f, out.transcript.y, alpha, out.transcript.b);
    out.qubit = server.take_qubit();
    return out;
}

}  // namespace dvqa
