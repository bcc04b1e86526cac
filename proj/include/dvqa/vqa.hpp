#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvqa/dataset.hpp"
#include "dvqa/simulator.hpp"

namespace dvqa {

using Theta = std::array<std::array<double, 4>, 2>;

inline constexpr Theta initial_theta{{{5.57, 4.34, 3.85, 6.22}, {5.76, 1.40, 5.23, 5.05}}};

struct ShadowModel {
    Theta theta = initial_theta;
    std::vector<double> w;
    double bias = 0;
    std::size_t n = 0;
    std::size_t n_qsc = 2;

    std::size_t windows() const { return n - n_qsc + 1; }

    void validate() const {
        if (n_qsc != 2) throw std::invalid_argument("only two-qubit shadows are supported");
        if (n < n_qsc) throw std::invalid_argument("model narrower than its shadow");
        if (w.size() != windows()) throw std::invalid_argument("weight count must be n - n_qsc + 1");
        for (const auto& row : theta)
            for (double t : row)
                if (!std::isfinite(t)) throw std::invalid_argument("non-finite angle");
        for (double x : w)
            if (!std::isfinite(x)) throw std::invalid_argument("non-finite weight");
        if (!std::isfinite(bias)) throw std::invalid_argument("non-finite bias");
    }
};

/// Initial theta as given, w and bias uniform in (-0.01, 0.01).
inline ShadowModel init_model(std::size_t n, Rng& rng, const Theta& theta = initial_theta) {
    ShadowModel m;
    m.n = n;
    m.theta = theta;
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    m.w.resize(n - 1);
    for (auto& x : m.w) x = u(rng);
    m.bias = u(rng);
    m.validate();
    return m;
}

/// Window v acts on wires (v-1, v); theta row 0 drives wire v-1 and row 1 drives wire v.
inline Circuit build_shadow_circuit(const Theta& theta, std::size_t v, std::size_t n) {
    if (v < 1 || v >= n) throw std::out_of_range("window start must satisfy 1 <= v < n");
    const std::size_t q[2] = {v - 1, v};
    Circuit c;
    for (int r = 0; r < 2; ++r) {
        c.push_back(Gate::rx(q[r], theta[r][0]));
        c.push_back(Gate::ry(q[r], theta[r][1]));
        c.push_back(Gate::rx(q[r], theta[r][2]));
    }
    c.push_back(Gate::cnot(q[0], q[1]));
    c.push_back(Gate::cnot(q[1], q[0]));
    for (int r = 0; r < 2; ++r) c.push_back(Gate::ry(q[r], theta[r][3]));
    return c;
}

inline Circuit build_shadow_circuit(const ShadowModel& m, std::size_t v) { return build_shadow_circuit(m.theta, v, m.n); }

/// Index of the gate carrying theta[r][k] inside a window circuit.
inline std::size_t theta_gate_index(std::size_t r, std::size_t k) { return k < 3 ? 3 * r + k : 8 + r; }

inline PauliString window_observable(std::size_t v) { return PauliString{{v - 1, v}, "XX"}; }

/// Source of <X X> values for window circuits. One call is one circuit run.
class FeatureEngine {
public:
    virtual ~FeatureEngine() = default;
    virtual double window_expectation(const StateVector& input, const Circuit& window, std::size_t v) = 0;
};

class PlaintextEngine : public FeatureEngine {
public:
    explicit PlaintextEngine(std::size_t shots = 0, std::uint64_t seed = 0) : shots_(shots), rng_(seed) {}

    double window_expectation(const StateVector& input, const Circuit& window, std::size_t v) override {
        StateVector s = input;
        for (const auto& g : window) s.apply(g);
        if (shots_ == 0) return expectation(s, window_observable(v));
        const std::size_t wires[2] = {v - 1, v};
        return parity_mean(sample_outcomes(s, wires, Basis::X, shots_, rng_));
    }

private:
    std::size_t shots_;
    Rng rng_;
};

inline std::vector<double> shadow_features(const StateVector& input, const ShadowModel& m, FeatureEngine& engine) {
    if (input.num_qubits() != m.n) throw std::invalid_argument("input width differs from the model");
    std::vector<double> o(m.windows());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = engine.window_expectation(input, build_shadow_circuit(m, i + 1), i + 1);
    return o;
}

inline double sigmoid(double z) { return z >= 0 ? 1 / (1 + std::exp(-z)) : std::exp(z) / (1 + std::exp(z)); }

inline double predict(const std::vector<double>& o, const std::vector<double>& w, double bias) {
    if (o.size() != w.size()) throw std::invalid_argument("feature and weight lengths differ");
    return sigmoid(std::inner_product(o.begin(), o.end(), w.begin(), bias));
}

inline constexpr double log_clamp = 1e-12;

inline double cross_entropy(double yhat, int y) {
    const double p = std::clamp(yhat, log_clamp, 1 - log_clamp);
    return -(y ? std::log(p) : std::log(1 - p));
}

/// Mean clamped cross-entropy over (prediction, label) pairs.
inline double cost(const std::vector<double>& yhat, const std::vector<int>& y) {
    if (yhat.empty()) throw std::invalid_argument("empty batch");
    if (yhat.size() != y.size()) throw std::invalid_argument("prediction and label counts differ");
    double acc = 0;
    for (std::size_t m = 0; m < y.size(); ++m) acc += cross_entropy(yhat[m], y[m]);
    return acc / static_cast<double>(y.size());
}

enum class GradientMethod { parameter_shift, central_difference };
enum class Mode { plaintext, delegated_exact, delegated_faithful };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::plaintext: return "plaintext";
        case Mode::delegated_exact: return "delegated-exact-gates";
        case Mode::delegated_faithful: return "delegated-faithful";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::plaintext, Mode::delegated_exact, Mode::delegated_faithful})
        if (s == mode_name(m)) return m;
    throw std::invalid_argument("unknown mode " + s);
}

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 20;
    std::size_t batch_size = 1;
    GradientMethod method = GradientMethod::parameter_shift;
    double shift = pi / 2;
    double fd_step = 1e-5;
    Mode mode = Mode::plaintext;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
        if (epochs < 1) throw std::invalid_argument("at least one epoch");
        if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
        if (method == GradientMethod::parameter_shift && std::abs(std::sin(shift)) < 1e-9) throw std::invalid_argument("shift with sin(alpha) = 0");
        if (method == GradientMethod::central_difference && !(fd_step > 0)) throw std::invalid_argument("step must be positive");
    }
};

struct Gradients {
    Theta theta{};
    std::vector<double> w;
    double bias = 0;
};

/// Amplitude-encoded inputs, computed once per sample.
struct EncodedBatch {
    std::vector<StateVector> inputs;
    std::vector<int> labels;
};

inline EncodedBatch encode(const LabeledDataset& d) {
    EncodedBatch b;
    for (const auto& s : d.samples) {
        b.inputs.push_back(amplitude_encode(s.x, d.n));
        b.labels.push_back(s.label);
    }
    return b;
}

namespace detail {

/// d o_v / d theta[r][k] for one window, by the shift rule or central differences.
inline double feature_derivative(FeatureEngine& engine, const StateVector& input, const ShadowModel& m, std::size_t v, std::size_t r, std::size_t k,
                                 const TrainConfig& cfg) {
    if (cfg.method == GradientMethod::parameter_shift) {
        Circuit c = build_shadow_circuit(m, v);
        Gate& g = c[theta_gate_index(r, k)];
        const double base = g.angle;
        g.angle = base + cfg.shift;
        const double plus = engine.window_expectation(input, c, v);
        g.angle = base - cfg.shift;
        const double minus = engine.window_expectation(input, c, v);
        return (plus - minus) / (2 * std::sin(cfg.shift));
    }
    Theta t = m.theta;
    t[r][k] += cfg.fd_step;
    const double plus = engine.window_expectation(input, build_shadow_circuit(t, v, m.n), v);
    t[r][k] -= 2 * cfg.fd_step;
    const double minus = engine.window_expectation(input, build_shadow_circuit(t, v, m.n), v);
    return (plus - minus) / (2 * cfg.fd_step);
}

}  // namespace detail

/// Gradient of the mean cross-entropy over the selected samples.
inline Gradients gradients(const EncodedBatch& data, std::span<const std::size_t> batch, const ShadowModel& m, const TrainConfig& cfg,
                           FeatureEngine& engine) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    Gradients g;
    g.w.assign(m.windows(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t idx : batch) {
        const StateVector& in = data.inputs.at(idx);
        const std::vector<double> o = shadow_features(in, m, engine);
        // d C / d z for the sigmoid read-out under cross-entropy
        const double dz = (predict(o, m.w, m.bias) - data.labels[idx]) * inv;
        for (std::size_t i = 0; i < o.size(); ++i) g.w[i] += dz * o[i];
        g.bias += dz;
        for (std::size_t i = 0; i < o.size(); ++i)
            for (std::size_t r = 0; r < 2; ++r)
                for (std::size_t k = 0; k < 4; ++k) g.theta[r][k] += dz * m.w[i] * detail::feature_derivative(engine, in, m, i + 1, r, k, cfg);
    }
    return g;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0;
    double train_acc = 0;
    double test_acc = 0;
};

struct Evaluation {
    double loss = 0;
    double accuracy = 0;
};

inline Evaluation evaluate(const EncodedBatch& data, const ShadowModel& m, FeatureEngine& engine) {
    std::vector<double> yhat;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
        yhat.push_back(predict(shadow_features(data.inputs[i], m, engine), m.w, m.bias));
        correct += (yhat.back() >= 0.5 ? 1 : 0) == data.labels[i];
    }
    return {cost(yhat, data.labels), static_cast<double>(correct) / static_cast<double>(data.inputs.size())};
}

struct TrainResult {
    ShadowModel model;
    std::vector<EpochMetrics> metrics;  // row 0 is the untrained model
};

/// Round-trippable doubles, so equal runs give byte-equal files.
inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
    std::string out = "epoch,loss,train_acc,test_acc\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.loss, r.train_acc, r.test_acc);
        out += buf;
    }
    return out;
}

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Called after every parameter update, e.g. to publish the new parameters to the server.
using UpdateHook = std::function<void(const ShadowModel&)>;

inline TrainResult train(const Split& split, const TrainConfig& cfg, FeatureEngine& engine, Rng& rng, const UpdateHook& on_update = {}) {
    cfg.validate();
    if (split.train.size() == 0) throw std::invalid_argument("empty training set");
    const EncodedBatch tr = encode(split.train), te = encode(split.test);
    TrainResult out;
    out.model = init_model(split.train.n, rng);
    ShadowModel& m = out.model;

    auto record = [&](std::size_t epoch) {
        const Evaluation a = evaluate(tr, m, engine);
        if (!std::isfinite(a.loss)) throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch));
        const double test_acc = te.inputs.empty() ? 0.0 : evaluate(te, m, engine).accuracy;
        out.metrics.push_back({epoch, a.loss, a.accuracy, test_acc});
    };
    record(0);

    std::vector<std::size_t> order(tr.inputs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            const Gradients g = gradients(tr, std::span(order).subspan(start, len), m, cfg, engine);
            for (std::size_t r = 0; r < 2; ++r)
                for (std::size_t k = 0; k < 4; ++k) m.theta[r][k] -= cfg.learning_rate * g.theta[r][k];
            for (std::size_t i = 0; i < m.w.size(); ++i) m.w[i] -= cfg.learning_rate * g.w[i];
            m.bias -= cfg.learning_rate * g.bias;
            if (on_update) on_update(m);
        }
        record(epoch);
    }
    return out;
}

/// Seeded split followed by training; the one seed drives split, init and shuffles.
inline TrainResult train(const LabeledDataset& d, const TrainConfig& cfg, FeatureEngine& engine, const UpdateHook& on_update = {}) {
    Rng rng(cfg.seed);
    const Split split = train_test_split(d, cfg.test_fraction, rng);
    return train(split, cfg, engine, rng, on_update);
}

}  // namespace dvqa
