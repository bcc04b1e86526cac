#pragma once

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvqa/simulator.hpp"

namespace dvqa {

inline bool is_unitary(const Mat2& u, double tol = 1e-10) {
    Mat2 p = u.adjoint() * u;
    return std::abs(p.m[0] - 1.0) < tol && std::abs(p.m[3] - 1.0) < tol && std::abs(p.m[1]) < tol && std::abs(p.m[2]) < tol;
}

/// U/sqrt(det U) = w I - i(x X + y Y + z Z)  <->  quaternion (w, x, y, z). The map respects products.
inline Eigen::Quaterniond to_quaternion(const Mat2& u) {
    const cplx s = std::sqrt(u.det());
    const cplx a = u.m[0] / s, b = u.m[1] / s, c = u.m[2] / s, d = u.m[3] / s;
    Eigen::Quaterniond q(((a + d) / 2.0).real(), -((b + c) / 2.0).imag(), ((c - b) / 2.0).real(), -((a - d) / 2.0).imag());
    q.normalize();
    return q;
}

/// sqrt(1 - |tr(U^dagger V)| / 2); zero iff U and V agree up to a global phase. With unit quaternions
/// |tr(U^dagger V)| / 2 = |q.p| and 1 - |q.p| = min(|q - p|, |q + p|)^2 / 2, which avoids the cancellation near zero.
inline double trace_distance(const Mat2& u, const Mat2& v) {
    const Eigen::Vector4d q = to_quaternion(u).coeffs(), p = to_quaternion(v).coeffs();
    return std::min((q - p).norm(), (q + p).norm()) / std::sqrt(2.0);
}

inline Mat2 to_matrix(const Eigen::Quaterniond& q) {
    const cplx i{0, 1};
    return {{q.w() - i * q.z(), -i * q.x() - q.y(), -i * q.x() + q.y(), q.w() + i * q.z()}};
}

/// Ops in time order over {H, T, Tdagger}; unitary = product with the last op leftmost.
class GateSequence {
public:
    GateSequence() = default;
    explicit GateSequence(std::vector<GateKind> ops) {
        for (GateKind k : ops) push(k);
    }

    const std::vector<GateKind>& ops() const { return ops_; }
    const Mat2& unitary() const { return unitary_; }
    std::size_t size() const { return ops_.size(); }
    std::size_t t_count() const { return std::count(ops_.begin(), ops_.end(), GateKind::T); }
    std::size_t tdg_count() const { return std::count(ops_.begin(), ops_.end(), GateKind::Tdagger); }
    std::size_t h_count() const { return std::count(ops_.begin(), ops_.end(), GateKind::H); }

    void push(GateKind k) {
        if (k != GateKind::H && k != GateKind::T && k != GateKind::Tdagger) throw std::invalid_argument("sequence alphabet is {H, T, Tdagger}");
        ops_.push_back(k);
        unitary_ = single_qubit_matrix(k) * unitary_;
    }

    GateSequence inverse() const {
        GateSequence out;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it)
            out.push(*it == GateKind::T ? GateKind::Tdagger : *it == GateKind::Tdagger ? GateKind::T : GateKind::H);
        return out;
    }

    /// this, then `next`
    GateSequence then(const GateSequence& next) const {
        GateSequence out = *this;
        for (GateKind k : next.ops_) out.push(k);
        return out;
    }

    std::string str() const {
        std::string s;
        for (GateKind k : ops_) s += k == GateKind::H ? 'H' : k == GateKind::T ? 'T' : 't';
        return s;
    }

private:
    std::vector<GateKind> ops_;
    Mat2 unitary_ = Mat2::identity();
};

/// Peephole cleanup: cancels HH and T Tdagger, and folds T-runs modulo T^8 into at most four gates.
inline GateSequence simplify(const GateSequence& seq) {
    std::vector<GateKind> out;
    auto flush_run = [&out](int run) {
        run = ((run % 8) + 8) % 8;
        if (run > 4) run -= 8;
        for (int i = 0; i < std::abs(run); ++i) out.push_back(run > 0 ? GateKind::T : GateKind::Tdagger);
    };
    int run = 0;
    for (GateKind k : seq.ops()) {
        if (k == GateKind::T || k == GateKind::Tdagger) {
            run += k == GateKind::T ? 1 : -1;
            continue;
        }
        flush_run(run);
        run = 0;
        if (!out.empty() && out.back() == GateKind::H) {
            out.pop_back();
            // the H pair vanished, so a T-run may now continue the one before it
            while (!out.empty() && out.back() != GateKind::H) {
                run += out.back() == GateKind::T ? 1 : -1;
                out.pop_back();
            }
        } else {
            out.push_back(GateKind::H);
        }
    }
    flush_run(run);
    return GateSequence(std::move(out));
}

class EpsilonNet {
public:
    EpsilonNet() = default;

    /// Breadth-first over words of length <= max_length; the first (shortest) word for each unitary wins.
    static EpsilonNet build(std::size_t max_length) {
        if (max_length > 16) throw std::invalid_argument("base length above 16 is not supported");
        EpsilonNet net;
        net.max_length_ = max_length;
        std::map<std::array<long long, 4>, std::size_t> seen;
        auto key_of = [](const Eigen::Quaterniond& q) {
            Eigen::Vector4d v(q.w(), q.x(), q.y(), q.z());
            for (int i = 0; i < 4; ++i) {
                if (std::abs(v[i]) < 1e-9) continue;
                if (v[i] < 0) v = -v;
                break;
            }
            std::array<long long, 4> k{};
            for (int i = 0; i < 4; ++i) k[static_cast<std::size_t>(i)] = std::llround(v[i] * 1e8);
            return k;
        };
        auto insert = [&](GateSequence s) {
            Eigen::Quaterniond q = to_quaternion(s.unitary());
            if (!seen.emplace(key_of(q), net.entries_.size()).second) return false;
            net.quats_.push_back(q);
            net.entries_.push_back(std::move(s));
            return true;
        };
        insert(GateSequence{});
        std::vector<std::size_t> frontier{0};
        for (std::size_t len = 1; len <= max_length; ++len) {
            std::vector<std::size_t> next;
            for (std::size_t idx : frontier) {
                for (GateKind g : {GateKind::H, GateKind::T, GateKind::Tdagger}) {
                    const auto& ops = net.entries_[idx].ops();
                    if (!ops.empty()) {
                        GateKind last = ops.back();
                        if (last == GateKind::H && g == GateKind::H) continue;
                        if ((last == GateKind::T && g == GateKind::Tdagger) || (last == GateKind::Tdagger && g == GateKind::T)) continue;
                    }
                    GateSequence s = net.entries_[idx];
                    s.push(g);
                    if (insert(std::move(s))) next.push_back(net.entries_.size() - 1);
                }
            }
            frontier = std::move(next);
        }
        return net;
    }

    std::size_t size() const { return entries_.size(); }
    std::size_t max_length() const { return max_length_; }
    const std::vector<GateSequence>& entries() const { return entries_; }

    const GateSequence& nearest(const Mat2& u) const {
        if (entries_.empty()) throw std::logic_error("empty epsilon net");
        const Eigen::Quaterniond q = to_quaternion(u);
        std::size_t best = 0;
        double best_dot = -1;
        for (std::size_t i = 0; i < quats_.size(); ++i) {
            double d = std::abs(q.dot(quats_[i]));
            if (d > best_dot) {
                best_dot = d;
                best = i;
            }
        }
        return entries_[best];
    }

private:
    std::size_t max_length_ = 0;
    std::vector<GateSequence> entries_;
    std::vector<Eigen::Quaterniond> quats_;
};

/// Balanced group commutator: returns (V, W) with V W V^dagger W^dagger = U up to phase. `twist` rotates the
/// pair about U's axis; every twist gives a valid factorization.
inline std::pair<Mat2, Mat2> group_commutator(const Mat2& u, double twist = 0.0) {
    Eigen::Quaterniond q = to_quaternion(u);
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    const double half = std::acos(std::clamp(q.w(), -1.0, 1.0));  // theta / 2
    const double s = std::sqrt((1.0 - std::cos(half)) / 2.0);      // sin^2(phi / 2)
    const double phi = 2.0 * std::asin(std::sqrt(s));
    Mat2 v = single_qubit_matrix(GateKind::RX, phi), w = single_qubit_matrix(GateKind::RY, phi);
    Eigen::Quaterniond c = to_quaternion(v * w * v.adjoint() * w.adjoint());
    if (c.w() < 0) c.coeffs() = -c.coeffs();
    Eigen::Vector3d from = c.vec(), to = q.vec();
    if (from.norm() < 1e-15 || to.norm() < 1e-15) return {Mat2::identity(), Mat2::identity()};
    Eigen::Quaterniond align = Eigen::Quaterniond(Eigen::AngleAxisd(twist, to.normalized())) * Eigen::Quaterniond::FromTwoVectors(from, to);
    Mat2 s_mat = to_matrix(align);
    return {s_mat * v * s_mat.adjoint(), s_mat * w * s_mat.adjoint()};
}

inline constexpr std::size_t sk_twists = 8;

inline GateSequence sk_decompose(const Mat2& u, std::size_t depth, const EpsilonNet& net) {
    if (!is_unitary(u)) throw std::invalid_argument("target is not unitary");
    if (depth == 0) return net.nearest(u);
    GateSequence prev = sk_decompose(u, depth - 1, net);
    const Mat2 delta = u * prev.unitary().adjoint();
    GateSequence best;
    double best_dist = 2.0;
    for (std::size_t k = 0; k < sk_twists; ++k) {
        auto [v, w] = group_commutator(delta, 2 * pi * static_cast<double>(k) / sk_twists);
        GateSequence vs = sk_decompose(v, depth - 1, net), ws = sk_decompose(w, depth - 1, net);
        // U ~ V W V^dagger W^dagger U_{n-1}; in time order U_{n-1} runs first
        GateSequence cand = simplify(prev.then(ws.inverse()).then(vs.inverse()).then(ws).then(vs));
        double d = trace_distance(u, cand.unitary());
        if (d < best_dist) {
            best_dist = d;
            best = std::move(cand);
        }
    }
    return best;
}

struct Decomposition {
    GateSequence sequence;
    double distance = 0;
    std::size_t depth = 0;
};

/// Smallest depth (up to max_depth) whose certified distance meets epsilon.
inline Decomposition decompose_to(const Mat2& u, double epsilon, const EpsilonNet& net, std::size_t max_depth = 5) {
    for (std::size_t d = 0; d <= max_depth; ++d) {
        GateSequence s = sk_decompose(u, d, net);
        double dist = trace_distance(u, s.unitary());
        if (dist <= epsilon) return {std::move(s), dist, d};
    }
    throw std::runtime_error("target accuracy not reachable at depth " + std::to_string(max_depth));
}

struct DecomposedCircuit {
    Circuit circuit;
    std::size_t t_count = 0;  // T plus Tdagger
    std::vector<double> distances;
};

/// Keyed by (gate kind, angle); only valid for one epsilon and net.
using DecompositionCache = std::map<std::pair<int, double>, Decomposition>;

/// Replaces every rotation by its {H, T, Tdagger} sequence; other gates pass through.
inline DecomposedCircuit decompose_circuit(std::span<const Gate> circuit, double epsilon, const EpsilonNet& net, std::size_t max_depth = 5,
                                           DecompositionCache* shared = nullptr) {
    DecomposedCircuit out;
    DecompositionCache local;
    DecompositionCache& cache = shared ? *shared : local;
    for (const auto& g : circuit) {
        if (!is_rotation(g.kind)) {
            out.circuit.push_back(g);
            out.t_count += (g.kind == GateKind::T || g.kind == GateKind::Tdagger) ? 1 : 0;
            continue;
        }
        auto key = std::make_pair(static_cast<int>(g.kind), g.angle);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, decompose_to(single_qubit_matrix(g.kind, g.angle), epsilon, net, max_depth)).first;
        const Decomposition& d = it->second;
        for (GateKind k : d.sequence.ops()) out.circuit.push_back(Gate::single(k, g.wires[0]));
        out.t_count += d.sequence.t_count() + d.sequence.tdg_count();
        out.distances.push_back(d.distance);
    }
    return out;
}

}  // namespace dvqa
