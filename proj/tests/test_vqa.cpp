#include "dvqa/vqa.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dvqa/delegated.hpp"
#include "oracles.hpp"

using namespace dvqa;

namespace {

const std::string digits_path = DVQA_DATA_DIR "/digits.csv";

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
    auto p = std::filesystem::temp_directory_path() / ("dvqa_test_" + name);
    std::ofstream(p, std::ios::binary) << body;
    return p;
}

oracle::Vec to_vec(const StateVector& s) {
    oracle::Vec v(static_cast<Eigen::Index>(s.dimension()));
    for (std::size_t i = 0; i < s.dimension(); ++i) v(static_cast<Eigen::Index>(i)) = s[i];
    return v;
}

oracle::Mat window_oracle(const Theta& t, std::size_t v, std::size_t n) {
    using oracle::embed;
    const oracle::Mat x = oracle::pauli('X'), y = oracle::pauli('Y');
    oracle::Mat u = oracle::Mat::Identity(1 << n, 1 << n);
    for (std::size_t r = 0; r < 2; ++r) {
        const std::size_t q = v - 1 + r;
        u = embed(oracle::expm_rotation(x, t[r][2]) * oracle::expm_rotation(y, t[r][1]) * oracle::expm_rotation(x, t[r][0]), q, n) * u;
    }
    u = oracle::controlled(x, v, v - 1, n) * oracle::controlled(x, v - 1, v, n) * u;
    for (std::size_t r = 0; r < 2; ++r) u = embed(oracle::expm_rotation(y, t[r][3]), v - 1 + r, n) * u;
    return u;
}

double oracle_feature(const StateVector& in, const Theta& t, std::size_t v) {
    const std::size_t n = in.num_qubits();
    const oracle::Vec psi = window_oracle(t, v, n) * to_vec(in);
    const oracle::Mat xx = oracle::embed(oracle::pauli('X'), v - 1, n) * oracle::embed(oracle::pauli('X'), v, n);
    return psi.dot(xx * psi).real();
}

Theta random_theta(Rng& rng) {
    std::uniform_real_distribution<double> a(0, 2 * pi);
    Theta t;
    for (auto& row : t)
        for (auto& x : row) x = a(rng);
    return t;
}

StateVector random_encoded(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> x(std::size_t{1} << n);
    for (auto& v : x) v = u(rng);
    return amplitude_encode(x, n);
}

ShadowModel random_model(std::size_t n, Rng& rng) {
    ShadowModel m = init_model(n, rng, random_theta(rng));
    std::normal_distribution<double> g(0, 1);
    for (auto& w : m.w) w = g(rng);
    m.bias = g(rng);
    return m;
}

LabeledDataset small_digits(std::size_t count) {
    LabeledDataset d = load_digits_csv(digits_path);
    d.samples.resize(count);
    return d;
}

class NanEngine : public FeatureEngine {
public:
    double window_expectation(const StateVector&, const Circuit&, std::size_t) override { return std::nan(""); }
};

}  // namespace

TEST(Dataset, bundled_digits) {
    LabeledDataset d = load_digits_csv(digits_path);
    EXPECT_EQ(d.n, 6u);
    EXPECT_EQ(d.size(), 360u);
    std::size_t ones = 0;
    for (const auto& s : d.samples) {
        EXPECT_EQ(s.x.size(), 64u);
        ones += s.label;
    }
    EXPECT_EQ(ones, 182u);
    LabeledDataset other = load_digits_csv(digits_path, {3, 8});
    EXPECT_GT(other.size(), 300u);
}

TEST(Dataset, malformed_csv_rejected) {
    EXPECT_THROW(load_digits_csv("/nonexistent/digits.csv"), DatasetError);
    std::string row;
    for (int i = 0; i < 64; ++i) row += "1,";
    EXPECT_THROW(load_digits_csv(temp_file("short.csv", "1,2,3\n")), DatasetError);
    EXPECT_THROW(load_digits_csv(temp_file("range.csv", row.substr(0, row.size() - 2) + "17,0\n")), DatasetError);
    EXPECT_THROW(load_digits_csv(temp_file("text.csv", row.substr(0, row.size() - 2) + "a,0\n")), DatasetError);
    EXPECT_EQ(load_digits_csv(temp_file("ok.csv", row + "1\n")).size(), 1u);
    // zero images cannot be amplitude encoded and are skipped
    std::string zeros;
    for (int i = 0; i < 64; ++i) zeros += "0,";
    EXPECT_EQ(load_digits_csv(temp_file("zero.csv", zeros + "0\n" + row + "0\n")).size(), 1u);
}

TEST(Dataset, validate_rejects_bad_samples) {
    LabeledDataset d;
    d.n = 2;
    d.samples = {{{0, 0, 0, 0}, 0}};
    EXPECT_THROW(d.validate(), DatasetError);
    d.samples = {{{1, 0, 0, 0, 1}, 0}};
    EXPECT_THROW(d.validate(), DatasetError);
    d.samples = {{{1, 0}, 2}};
    EXPECT_THROW(d.validate(), DatasetError);
    d.samples = {{{1, -1}, 1}};
    EXPECT_THROW(d.validate(), DatasetError);
}

TEST(Dataset, idx_pair) {
    auto be = [](std::uint32_t v) {
        std::string s(4, '\0');
        for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (24 - 8 * i)) & 0xff);
        return s;
    };
    std::string images = be(0x803) + be(3) + be(2) + be(2) + std::string("\x01\x02\x03\x04\x05\x00\x00\x00\x09\x09\x09\x09", 12);
    std::string labels = be(0x801) + be(3) + std::string("\x00\x07\x01", 3);
    auto ip = temp_file("img.idx", images), lp = temp_file("lab.idx", labels);
    LabeledDataset d = load_idx(ip, lp, {0, 1}, 2);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.samples[0].x, (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(d.samples[1].label, 1);
    // 4 pixels padded into 8 amplitudes
    EXPECT_EQ(load_idx(ip, lp, {0, 1}, 3).n, 3u);
    EXPECT_THROW(load_idx(lp, lp, {0, 1}, 2), DatasetError);
    EXPECT_THROW(load_idx(ip, lp, {0, 1}, 1), DatasetError);
    EXPECT_THROW(load_idx(ip, temp_file("trunc.idx", be(0x801) + be(3) + "\x00"), {0, 1}, 2), DatasetError);
}

TEST(Dataset, seeded_split) {
    LabeledDataset d = load_digits_csv(digits_path);
    Rng a(5), b(5), c(6);
    Split s1 = train_test_split(d, 0.2, a), s2 = train_test_split(d, 0.2, b), s3 = train_test_split(d, 0.2, c);
    EXPECT_EQ(s1.test.size(), 72u);
    EXPECT_EQ(s1.train.size(), 288u);
    for (std::size_t i = 0; i < s1.test.size(); ++i) EXPECT_EQ(s1.test.samples[i].x, s2.test.samples[i].x);
    bool differs = false;
    for (std::size_t i = 0; i < s1.test.size(); ++i) differs |= s1.test.samples[i].x != s3.test.samples[i].x;
    EXPECT_TRUE(differs);
    EXPECT_THROW(train_test_split(d, 1.0, a), std::invalid_argument);
}

TEST(ShadowCircuit, zero_angles_leave_the_cnot_pair) {
    Theta zero{};
    Circuit c = build_shadow_circuit(zero, 2, 4);
    Rng rng(1);
    StateVector s = random_state(4, rng), t = s;
    for (const auto& g : c) s.apply(g);
    t.apply(Gate::cnot(1, 2));
    t.apply(Gate::cnot(2, 1));
    EXPECT_NEAR(fidelity(s, t), 1.0, 1e-12);
}

TEST(ShadowCircuit, initial_angles) {
    Rng rng(2);
    ShadowModel m = init_model(6, rng);
    Circuit c = build_shadow_circuit(m, 1);
    ASSERT_EQ(c.size(), 10u);
    EXPECT_EQ(c[theta_gate_index(0, 0)].angle, 5.57);
    EXPECT_EQ(c[theta_gate_index(0, 1)].angle, 4.34);
    EXPECT_EQ(c[theta_gate_index(0, 2)].angle, 3.85);
    EXPECT_EQ(c[theta_gate_index(0, 3)].angle, 6.22);
    EXPECT_EQ(c[theta_gate_index(1, 0)].angle, 5.76);
    EXPECT_EQ(c[theta_gate_index(1, 3)].angle, 5.05);
    EXPECT_EQ(c[theta_gate_index(0, 3)].wires[0], 0u);
    EXPECT_EQ(c[theta_gate_index(1, 3)].wires[0], 1u);
    EXPECT_EQ(m.w.size(), 5u);
    for (double w : m.w) EXPECT_LT(std::abs(w), 0.01);
    EXPECT_LT(std::abs(m.bias), 0.01);
}

TEST(ShadowCircuit, matches_matrix_oracle) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Theta t = random_theta(rng);
        for (std::size_t v = 1; v < 4; ++v) {
            StateVector s = random_state(4, rng);
            const oracle::Vec want = window_oracle(t, v, 4) * to_vec(s);
            for (const auto& g : build_shadow_circuit(t, v, 4)) s.apply(g);
            EXPECT_LT((to_vec(s) - want).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(ShadowCircuit, wire_range) {
    EXPECT_THROW(build_shadow_circuit(initial_theta, 0, 4), std::out_of_range);
    EXPECT_THROW(build_shadow_circuit(initial_theta, 4, 4), std::out_of_range);
    EXPECT_NO_THROW(build_shadow_circuit(initial_theta, 3, 4));
}

TEST(ShadowFeatures, computational_and_plus_states) {
    ShadowModel m;
    m.n = 5;
    m.theta = Theta{};
    m.w.assign(4, 0.0);
    PlaintextEngine e;
    for (double o : shadow_features(StateVector(5), m, e)) EXPECT_NEAR(o, 0.0, 1e-15);
    std::vector<double> flat(32, 1.0);
    for (double o : shadow_features(amplitude_encode(flat, 5), m, e)) EXPECT_NEAR(o, 1.0, 1e-12);
    EXPECT_THROW(shadow_features(StateVector(4), m, e), std::invalid_argument);
}

TEST(ShadowFeatures, bounded_and_match_oracle) {
    Rng rng(4);
    PlaintextEngine e;
    for (int trial = 0; trial < 20; ++trial) {
        ShadowModel m = random_model(4, rng);
        StateVector in = random_encoded(4, rng);
        auto o = shadow_features(in, m, e);
        for (std::size_t i = 0; i < o.size(); ++i) {
            EXPECT_LE(std::abs(o[i]), 1.0 + 1e-12);
            EXPECT_NEAR(o[i], oracle_feature(in, m.theta, i + 1), 1e-12);
        }
    }
}

TEST(ShadowFeatures, delegated_exact_equals_plaintext) {
    Rng rng(5);
    PlaintextEngine p;
    DelegatedEngine d({}, 17);
    for (int trial = 0; trial < 20; ++trial) {
        ShadowModel m = random_model(6, rng);
        StateVector in = random_encoded(6, rng);
        auto a = shadow_features(in, m, p), b = shadow_features(in, m, d);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
    }
    EXPECT_EQ(d.client().runs(), 100u);
}

TEST(ShadowFeatures, delegated_shots_estimate_the_expectation) {
    Rng rng(6);
    ShadowModel m = random_model(3, rng);
    StateVector in = random_encoded(3, rng);
    PlaintextEngine exact;
    DelegatedOptions o;
    o.shots = 4000;
    DelegatedEngine d(o, 3);
    auto a = shadow_features(in, m, exact), b = shadow_features(in, m, d);
    // 5 standard errors of a +-1 mean
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 5 * std::sqrt((1 - a[i] * a[i]) / 4000) + 1e-9);
}

TEST(ShadowFeatures, delegated_faithful_runs_the_decomposed_sequence) {
    static const EpsilonNet net = EpsilonNet::build(12);
    Rng rng(7);
    ShadowModel m = random_model(3, rng);
    StateVector in = random_encoded(3, rng);
    DelegatedOptions o;
    o.mode = Mode::delegated_faithful;
    o.gadget_batch = 16;
    DelegatedEngine d(o, 8, &net);
    PlaintextEngine p;
    std::size_t gadgets = 0;
    for (std::size_t v = 1; v < 3; ++v) {
        const Circuit window = build_shadow_circuit(m, v);
        const DecomposedCircuit dc = decompose_circuit(window, 1e-2, net);
        gadgets += dc.t_count;
        const double got = d.window_expectation(in, window, v);
        // encryption is transparent for the gate sequence actually run
        EXPECT_NEAR(got, p.window_expectation(in, dc.circuit, v), 1e-9);
        double budget = 0;
        for (double x : dc.distances) budget += 4 * x;
        EXPECT_NEAR(got, p.window_expectation(in, window, v), budget);
    }
    // the chain was extended on demand and every gadget was spent exactly once
    EXPECT_EQ(d.client().next_level(), gadgets);
    EXPECT_GE(d.client().keys().server.t_capacity(), gadgets);
}

TEST(Predict, examples) {
    EXPECT_DOUBLE_EQ(predict({1, 1}, {0, 0}, 0), 0.5);
    EXPECT_DOUBLE_EQ(predict({1, 0}, {2, 5}, -2), 0.5);
    double prev = 0;
    for (double b = -30; b <= 30; b += 5) {
        const double y = predict({0.3}, {1}, b);
        EXPECT_GT(y, prev);
        prev = y;
    }
    EXPECT_NEAR(predict({0}, {0}, 40), 1.0, 1e-15);
    EXPECT_THROW(predict({1, 2}, {1}, 0), std::invalid_argument);
}

TEST(Cost, examples) {
    EXPECT_NEAR(cost({1.0, 0.0}, {1, 0}), 0.0, 1e-11);
    EXPECT_NEAR(cost({0.5, 0.5, 0.5}, {1, 0, 1}), std::log(2.0), 1e-15);
    const double hand = -(std::log(0.9) + std::log(1 - 0.2) + std::log(0.35)) / 3;
    EXPECT_NEAR(cost({0.9, 0.2, 0.35}, {1, 0, 1}), hand, 1e-15);
    // saturated wrong answers stay finite
    EXPECT_NEAR(cost({0.0}, {1}), -std::log(1e-12), 1e-9);
    EXPECT_THROW(cost({}, {}), std::invalid_argument);
}

TEST(Gradients, zero_weights_give_zero_theta_gradient) {
    Rng rng(8);
    ShadowModel m = init_model(4, rng, random_theta(rng));
    m.w.assign(3, 0.0);
    EncodedBatch b{{random_encoded(4, rng), random_encoded(4, rng)}, {0, 1}};
    const std::size_t idx[] = {0, 1};
    PlaintextEngine e;
    Gradients g = gradients(b, idx, m, TrainConfig{}, e);
    for (const auto& row : g.theta)
        for (double x : row) EXPECT_EQ(x, 0.0);
}

TEST(Gradients, shift_rule_matches_central_differences) {
    Rng rng(9);
    PlaintextEngine e;
    TrainConfig ps, cd;
    cd.method = GradientMethod::central_difference;
    cd.fd_step = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        ShadowModel m = random_model(5, rng);
        EncodedBatch b;
        for (int k = 0; k < 3; ++k) {
            b.inputs.push_back(random_encoded(5, rng));
            b.labels.push_back(k % 2);
        }
        const std::size_t idx[] = {0, 1, 2};
        Gradients a = gradients(b, idx, m, ps, e), c = gradients(b, idx, m, cd, e);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t k = 0; k < 4; ++k) {
                const double x = a.theta[r][k], y = c.theta[r][k];
                EXPECT_TRUE(std::abs(x - y) <= 1e-4 * std::abs(y) || std::abs(x - y) <= 1e-6) << x << " vs " << y;
            }
    }
}

TEST(Gradients, general_shift_angle_is_exact) {
    Rng rng(10);
    PlaintextEngine e;
    ShadowModel m = random_model(4, rng);
    EncodedBatch b{{random_encoded(4, rng)}, {1}};
    const std::size_t idx[] = {0};
    TrainConfig half, third;
    third.shift = pi / 3;
    Gradients a = gradients(b, idx, m, half, e), c = gradients(b, idx, m, third, e);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.theta[r][k], c.theta[r][k], 1e-12);
}

TEST(Gradients, readout_terms_match_numeric_derivatives) {
    Rng rng(11);
    PlaintextEngine e;
    ShadowModel m = random_model(4, rng);
    EncodedBatch b;
    for (int k = 0; k < 3; ++k) {
        b.inputs.push_back(random_encoded(4, rng));
        b.labels.push_back(k == 1);
    }
    const std::size_t idx[] = {0, 1, 2};
    auto loss = [&](const ShadowModel& mm) {
        std::vector<double> yhat;
        for (const auto& in : b.inputs) yhat.push_back(predict(shadow_features(in, mm, e), mm.w, mm.bias));
        return cost(yhat, b.labels);
    };
    Gradients g = gradients(b, idx, m, TrainConfig{}, e);
    double mean_residual = 0;
    for (std::size_t i = 0; i < 3; ++i) mean_residual += (predict(shadow_features(b.inputs[i], m, e), m.w, m.bias) - b.labels[i]) / 3;
    EXPECT_NEAR(g.bias, mean_residual, 1e-15);
    const double h = 1e-6;
    ShadowModel p = m, q = m;
    p.bias += h;
    q.bias -= h;
    EXPECT_NEAR(g.bias, (loss(p) - loss(q)) / (2 * h), 1e-8);
    for (std::size_t i = 0; i < m.w.size(); ++i) {
        p = q = m;
        p.w[i] += h;
        q.w[i] -= h;
        EXPECT_NEAR(g.w[i], (loss(p) - loss(q)) / (2 * h), 1e-8);
    }
}

TEST(TrainConfig, validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.shift = pi;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_EQ(parse_mode("delegated-exact-gates"), Mode::delegated_exact);
    EXPECT_THROW(parse_mode("exact"), std::invalid_argument);
}

TEST(Train, separable_synthetic_data) {
    // two tight clusters: near-uniform vectors and vectors peaked on amplitude 0
    Rng rng(12);
    std::uniform_real_distribution<double> jitter(0, 0.05);
    LabeledDataset d;
    d.n = 3;
    for (int i = 0; i < 40; ++i) {
        std::vector<double> x(8);
        for (auto& v : x) v = (i % 2 ? 1.0 : 0.0) + jitter(rng);
        x[0] += i % 2 ? 0.0 : 1.0;
        d.samples.push_back({x, i % 2});
    }
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 0.1;
    PlaintextEngine e;
    TrainResult r = train(d, cfg, e);
    bool reached = false;
    for (const auto& row : r.metrics) reached |= row.train_acc == 1.0 && row.test_acc == 1.0;
    EXPECT_TRUE(reached);
    EXPECT_LT(r.metrics.back().loss, r.metrics.front().loss);
}

TEST(Train, deterministic_and_mode_equivalent) {
    LabeledDataset d = small_digits(40);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 21;
    PlaintextEngine p1, p2;
    DelegatedEngine dl({}, 77);
    TrainResult a = train(d, cfg, p1), b = train(d, cfg, p2), c = train(d, cfg, dl);
    ASSERT_EQ(a.metrics.size(), 3u);
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        EXPECT_EQ(a.metrics[i].loss, b.metrics[i].loss);
        EXPECT_NEAR(a.metrics[i].loss, c.metrics[i].loss, 1e-6);
        EXPECT_NEAR(a.metrics[i].train_acc, c.metrics[i].train_acc, 1e-6);
        EXPECT_NEAR(a.metrics[i].test_acc, c.metrics[i].test_acc, 1e-6);
    }
    cfg.seed = 22;
    PlaintextEngine p3;
    EXPECT_NE(train(d, cfg, p3).metrics.back().loss, a.metrics.back().loss);
}

TEST(Train, update_hook_sees_every_step) {
    LabeledDataset d = small_digits(20);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    PlaintextEngine e;
    std::size_t updates = 0;
    train(d, cfg, e, [&](const ShadowModel&) { ++updates; });
    EXPECT_EQ(updates, 4u);  // 16 training samples in batches of 4
}

TEST(Train, divergence_guard) {
    LabeledDataset d = small_digits(10);
    NanEngine e;
    EXPECT_THROW(train(d, TrainConfig{}, e), DivergenceError);
}
