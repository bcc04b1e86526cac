#pragma once

// Invariant suite behind `dvqa verify` and the acceptance run.

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dvqa/qhe.hpp"
#include "dvqa/skdecomp.hpp"
#include "dvqa/vqa.hpp"

namespace dvqa {

struct PropertyResult {
    std::string name;
    std::size_t checks = 0;
    std::size_t failures = 0;
    double tolerance = 0;
    double worst = 0;  // largest observed deviation, in the property's own measure
    double seconds = 0;
    std::string note;

    bool passed() const { return checks > 0 && failures == 0; }

    void record(bool ok, double deviation) {
        ++checks;
        failures += ok ? 0 : 1;
        worst = std::max(worst, deviation);
    }
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    CliffordRule rule = default_clifford_rule();
    RspMode rsp = RspMode::ideal;
    std::size_t round_trips = 100;
    std::size_t gradient_models = 20;
    std::size_t sk_targets = 50;
    const EpsilonNet* net = nullptr;  // the SK property is skipped without one
};

/// Replaces the CNOT update by one with control and target exchanged. Used as a negative control.
inline CliffordRule mutated_cnot_rule() {
    return [](KeyFrame f, const Gate& g) {
        if (g.kind != GateKind::CNOT) return update_clifford(std::move(f), g);
        PauliKey& c = f[g.wires[0]];
        PauliKey& t = f[g.wires[1]];
        t.b ^= c.b;
        c.a ^= t.a;
        return f;
    };
}

namespace detail {

template <class Fn>
PropertyResult timed(const std::string& name, double tol, Fn&& body) {
    PropertyResult r;
    r.name = name;
    r.tolerance = tol;
    const auto start = std::chrono::steady_clock::now();
    body(r);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

using DMat = Eigen::MatrixXcd;

inline DMat density(const StateVector& s) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(s.dimension()));
    for (std::size_t i = 0; i < s.dimension(); ++i) v(static_cast<Eigen::Index>(i)) = s[i];
    return v * v.adjoint();
}

/// Half the trace norm of a Hermitian difference.
inline double trace_distance(const DMat& a, const DMat& b) {
    Eigen::SelfAdjointEigenSolver<DMat> es(a - b);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline PauliKey key_from_bits(unsigned bits) { return {static_cast<std::uint8_t>(bits & 1), static_cast<std::uint8_t>((bits >> 1) & 1)}; }

}  // namespace detail

inline Circuit random_clifford_t_circuit(std::size_t n, std::size_t cliffords, std::size_t t_gates, Rng& rng) {
    const GateKind singles[] = {GateKind::X, GateKind::Y, GateKind::Z, GateKind::H, GateKind::P, GateKind::Pdagger};
    Circuit c;
    for (std::size_t i = 0; i < cliffords; ++i) {
        const auto r = rng() % 8;
        if (r < 6 || n < 2) {
            c.push_back(Gate::single(singles[r % 6], rng() % n));
        } else {
            const std::size_t a = rng() % n, b = (a + 1 + rng() % (n - 1)) % n;
            c.push_back(r == 6 ? Gate::cnot(a, b) : Gate::cz(a, b));
        }
    }
    for (std::size_t t = 0; t < t_gates; ++t) {
        auto pos = c.begin() + static_cast<std::ptrdiff_t>(rng() % (c.size() + 1));
        c.insert(pos, Gate::single(rng() & 1 ? GateKind::T : GateKind::Tdagger, rng() % n));
    }
    return c;
}

/// Every key assignment through every Clifford kind, plus the T and T^dagger byproducts.
inline PropertyResult check_conjugation_tables(const CliffordRule& rule) {
    return detail::timed("conjugation tables", 1e-12, [&](PropertyResult& r) {
        for (GateKind k : {GateKind::X, GateKind::Y, GateKind::Z, GateKind::H, GateKind::P, GateKind::Pdagger}) {
            for (unsigned bits = 0; bits < 4; ++bits) {
                KeyFrame before({detail::key_from_bits(bits)});
                KeyFrame after = rule(before, Gate::single(k, 0));
                r.record(conjugation_holds(k, before.keys, after.keys, 0, 1e-12), 0);
            }
        }
        for (GateKind k : {GateKind::CNOT, GateKind::CZ}) {
            for (unsigned bits = 0; bits < 16; ++bits) {
                KeyFrame before({detail::key_from_bits(bits), detail::key_from_bits(bits >> 2)});
                KeyFrame after = rule(before, k == GateKind::CNOT ? Gate::cnot(0, 1) : Gate::cz(0, 1));
                r.record(conjugation_holds(k, before.keys, after.keys, 0, 1e-12), 0);
            }
        }
        for (GateKind k : {GateKind::T, GateKind::Tdagger}) {
            for (unsigned bits = 0; bits < 4; ++bits) {
                KeyFrame f({detail::key_from_bits(bits)});
                r.record(conjugation_holds(k, f.keys, f.keys, t_byproduct(f, 0), 1e-12), 0);
            }
        }
    });
}

/// Averaged over the four pads, any single-qubit state is I/2.
inline PropertyResult check_pad_mixing(Rng& rng, std::size_t trials = 50) {
    return detail::timed("pad mixing", 1e-12, [&](PropertyResult& r) {
        const detail::DMat half = detail::DMat::Identity(2, 2) / 2.0;
        for (std::size_t t = 0; t < trials; ++t) {
            const StateVector psi = random_state(1, rng);
            detail::DMat avg = detail::DMat::Zero(2, 2);
            for (unsigned bits = 0; bits < 4; ++bits) {
                StateVector s = psi;
                apply_pad(s, 0, detail::key_from_bits(bits));
                avg += detail::density(s) / 4.0;
            }
            const double d = detail::trace_distance(avg, half);
            r.record(d <= 1e-12, d);
        }
    });
}

/// Averaged over the hidden signs, the four gadget qubits are maximally mixed for either key bit.
inline PropertyResult check_gadget_mixing() {
    return detail::timed("gadget mixing", 1e-12, [&](PropertyResult& r) {
        for (int k = 0; k < 2; ++k) {
            const auto par = slot_parities(k);
            detail::DMat avg = detail::DMat::Zero(16, 16);
            for (unsigned signs = 0; signs < 16; ++signs) {
                std::array<StateVector, 4> q;
                for (std::size_t i = 0; i < 4; ++i) q[i] = prepare_plus_quarter(par[i] + 2 * static_cast<int>((signs >> i) & 1));
                avg += detail::density(assemble_gadget_state(std::move(q))) / 16.0;
            }
            const double d = detail::trace_distance(avg, detail::DMat::Identity(16, 16) / 16.0);
            r.record(d <= 1e-12, d);
        }
    });
}

/// Pad-averaged Enc(|00><00|) and Enc(rho) coincide for random two-qubit rho.
inline PropertyResult check_challenge_states(Rng& rng, std::size_t trials = 20) {
    return detail::timed("encryption indistinguishability", 1e-12, [&](PropertyResult& r) {
        QheKeys k = qhe_keygen(he::min_kappa, 0, rng);
        auto averaged = [&](const StateVector& s) {
            detail::DMat avg = detail::DMat::Zero(4, 4);
            for (unsigned m = 0; m < 16; ++m) {
                KeyFrame pads({detail::key_from_bits(m), detail::key_from_bits(m >> 2)});
                avg += detail::density(qhe_encrypt_register(k.client.pks[0], s, rng, &pads).cipher.reg) / 16.0;
            }
            return avg;
        };
        const detail::DMat base = averaged(StateVector(2));
        for (std::size_t t = 0; t < trials; ++t) {
            const double d = detail::trace_distance(base, averaged(random_state(2, rng)));
            r.record(d <= 1e-12, d);
        }
    });
}

/// decrypt(eval(encrypt(psi))) against a plaintext run, on random Clifford+T circuits.
inline PropertyResult check_round_trips(Rng& rng, std::size_t circuits, RspMode rsp, const CliffordRule& rule) {
    const std::string name = rsp == RspMode::faithful ? "homomorphic round trip (faithful RSP)" : "homomorphic round trip";
    return detail::timed(name, 1e-9, [&](PropertyResult& r) {
        QheOptions qo;
        qo.rsp = rsp;
        EvalOptions eo;
        eo.rule = rule;
        for (std::size_t i = 0; i < circuits; ++i) {
            const std::size_t n = 1 + rng() % 6;
            const std::size_t tc = i == 0 ? 50 : rng() % 51;
            QheKeys k = qhe_keygen(he::min_kappa, tc, rng, qo);
            const StateVector psi = random_state(n, rng);
            const Circuit c = random_clifford_t_circuit(n, 10 + rng() % 30, tc, rng);
            StateVector plain = psi;
            for (const auto& g : c) plain.apply(g);
            Encrypted e = qhe_encrypt_register(k.client.pks[0], psi, rng);
            qhe_eval(e.cipher, c, k.server, rng, eo);
            const double f = fidelity(qhe_decrypt_state(k.client, e.cipher), plain);
            r.record(f >= 1 - 1e-9, 1 - f);
        }
    });
}

/// Gadget correction over every pad combination and both byproduct kinds.
inline PropertyResult check_gadget_contract(Rng& rng) {
    return detail::timed("gadget contract", 1e-9, [&](PropertyResult& r) {
        for (GateKind kind : {GateKind::T, GateKind::Tdagger}) {
            for (unsigned combo = 0; combo < 64; ++combo) {
                he::KeyTriple l0 = he::he_keygen(he::min_kappa, rng, 0), l1 = he::he_keygen(he::min_kappa, rng, 1);
                auto slot = std::make_shared<int>(0);
                QubitSource scripted = [combo, slot](int parity) {
                    const int i = (*slot)++ % 4;
                    const int q = parity + 2 * static_cast<int>((combo >> i) & 1);
                    return std::make_pair(prepare_plus_quarter(q), q);
                };
                QheEvalKey ek;
                ek.he_evks = {l0.evk, l1.evk};
                ek.gadgets.push_back(gen_gadget(l0.sk, l1.pk, scripted, rng).gadget);
                ClientSecret client;
                client.sks = {l0.sk, l1.sk};
                client.pks = {l0.pk, l1.pk};
                const StateVector phi = random_state(1, rng);
                KeyFrame pads({detail::key_from_bits(combo >> 4)});
                Encrypted e = qhe_encrypt_register(l0.pk, phi, rng, &pads);
                qhe_eval(e.cipher, Circuit{Gate::single(kind, 0)}, ek, rng);
                const double f = fidelity(qhe_decrypt_state(client, e.cipher), apply_gate(phi, Gate::single(kind, 0)));
                r.record(f >= 1 - 1e-9, 1 - f);
            }
        }
    });
}

/// Parameter shift against central differences on random models.
inline PropertyResult check_gradients(Rng& rng, std::size_t models) {
    return detail::timed("gradient fidelity", 1e-4, [&](PropertyResult& r) {
        r.note = "relative 1e-4, absolute 1e-6 near zero";
        PlaintextEngine e;
        TrainConfig ps, cd;
        cd.method = GradientMethod::central_difference;
        std::uniform_real_distribution<double> ang(0, 2 * pi), u(0, 1);
        std::normal_distribution<double> gauss(0, 1);
        for (std::size_t t = 0; t < models; ++t) {
            const std::size_t n = 3 + rng() % 4;
            Theta th;
            for (auto& row : th)
                for (auto& x : row) x = ang(rng);
            ShadowModel m = init_model(n, rng, th);
            for (auto& w : m.w) w = gauss(rng);
            m.bias = gauss(rng);
            EncodedBatch b;
            for (int k = 0; k < 2; ++k) {
                std::vector<double> x(std::size_t{1} << n);
                for (auto& v : x) v = u(rng);
                b.inputs.push_back(amplitude_encode(x, n));
                b.labels.push_back(k);
            }
            const std::size_t idx[] = {0, 1};
            const Gradients a = gradients(b, idx, m, ps, e), c = gradients(b, idx, m, cd, e);
            for (std::size_t row = 0; row < 2; ++row)
                for (std::size_t k = 0; k < 4; ++k) {
                    const double x = a.theta[row][k], y = c.theta[row][k];
                    const double diff = std::abs(x - y);
                    const double rel = std::abs(y) > 1e-2 ? diff / std::abs(y) : 0.0;
                    r.record(diff <= 1e-4 * std::abs(y) || diff <= 1e-6, rel);
                }
        }
    });
}

struct SkSweep {
    PropertyResult certified;
    PropertyResult improving;  // one check per depth step
    double improving_fraction = 0;
};

inline Mat2 random_su2(Rng& rng) {
    std::uniform_real_distribution<double> ang(0, 2 * pi);
    return single_qubit_matrix(GateKind::RZ, ang(rng)) * single_qubit_matrix(GateKind::RY, ang(rng)) * single_qubit_matrix(GateKind::RZ, ang(rng));
}

/// Random rotations decomposed at the default accuracy, plus distance against depth 1..3.
inline SkSweep check_solovay_kitaev(Rng& rng, std::size_t targets, const EpsilonNet& net, double epsilon = 1e-2) {
    SkSweep out;
    std::vector<Mat2> us;
    std::uniform_real_distribution<double> ang(0, 2 * pi);
    const GateKind axes[] = {GateKind::RX, GateKind::RY, GateKind::RZ};
    for (std::size_t i = 0; i < targets; ++i) us.push_back(i % 2 ? random_su2(rng) : single_qubit_matrix(axes[rng() % 3], ang(rng)));
    out.certified = detail::timed("SK certified distance", epsilon, [&](PropertyResult& r) {
        for (const Mat2& u : us) {
            try {
                const Decomposition d = decompose_to(u, epsilon, net);
                // recompute from the gate list instead of trusting the cached product
                StateVector c0 = StateVector::basis_state(1, 0), c1 = StateVector::basis_state(1, 1);
                for (GateKind k : d.sequence.ops()) {
                    c0.apply(Gate::single(k, 0));
                    c1.apply(Gate::single(k, 0));
                }
                Mat2 replay{{c0[0], c1[0], c0[1], c1[1]}};
                const double dist = trace_distance(u, replay);
                r.record(dist <= epsilon, dist);
            } catch (const std::runtime_error&) {
                r.record(false, 1.0);
            }
        }
    });
    std::size_t better = 0;
    out.improving = detail::timed("SK improves with depth", 0.95, [&](PropertyResult& r) {
        r.note = "fraction of depth steps that reduce the distance must be >= 0.95";
        for (const Mat2& u : us) {
            double prev = 2;
            for (std::size_t d = 1; d <= 3; ++d) {
                const double dist = trace_distance(u, sk_decompose(u, d, net).unitary());
                if (d > 1) {
                    ++r.checks;
                    better += dist < prev;
                }
                prev = dist;
            }
        }
        out.improving_fraction = r.checks ? static_cast<double>(better) / static_cast<double>(r.checks) : 0.0;
        r.worst = 1 - out.improving_fraction;
        r.failures = out.improving_fraction >= 0.95 ? 0 : r.checks - better;
    });
    return out;
}

inline std::vector<PropertyResult> run_verify_suite(const VerifyOptions& opt) {
    Rng rng(opt.seed);
    std::vector<PropertyResult> out;
    out.push_back(check_conjugation_tables(opt.rule));
    out.push_back(check_pad_mixing(rng));
    out.push_back(check_gadget_mixing());
    out.push_back(check_challenge_states(rng));
    out.push_back(check_round_trips(rng, opt.round_trips, opt.rsp, opt.rule));
    out.push_back(check_gadget_contract(rng));
    out.push_back(check_gradients(rng, opt.gradient_models));
    if (opt.net) {
        SkSweep sk = check_solovay_kitaev(rng, opt.sk_targets, *opt.net);
        out.push_back(std::move(sk.certified));
        out.push_back(std::move(sk.improving));
    }
    return out;
}

inline std::string format_verify_table(const std::vector<PropertyResult>& rows) {
    std::string s;
    char buf[320];
    std::snprintf(buf, sizeof buf, "%-40s %7s %6s %10s %12s %9s  %s\n", "property", "checks", "fail", "tolerance", "worst", "seconds", "result");
    s += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-40s %7zu %6zu %10.1e %12.3e %9.3f  %s%s%s\n", r.name.c_str(), r.checks, r.failures, r.tolerance, r.worst, r.seconds,
                      r.passed() ? "PASS" : "FAIL", r.note.empty() ? "" : "  ", r.note.c_str());
        s += buf;
    }
    return s;
}

}  // namespace dvqa
