#pragma once

// JSON forms of the objects that cross the client/server boundary.

#include <sodium.h>

#include <cstring>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvqa/classical_he.hpp"
#include "dvqa/qhe.hpp"
#include "dvqa/rsp_gadget.hpp"
#include "dvqa/simulator.hpp"
#include "dvqa/vqa.hpp"

namespace dvqa::wire {

using json = nlohmann::json;

class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t max_register_qubits = 16;

inline std::string to_base64(std::span<const std::uint8_t> bytes) {
    he::detail::ensure_sodium();
    std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(std::strlen(out.c_str()));
    return out;
}

inline std::vector<std::uint8_t> from_base64(const std::string& s) {
    he::detail::ensure_sodium();
    std::vector<std::uint8_t> out(s.size() / 4 * 3 + 3);
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), s.data(), s.size(), nullptr, &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != s.data() + s.size())
        throw SchemaError("invalid base64");
    out.resize(len);
    return out;
}

/// Typed field access that reports schema violations as SchemaError.
template <class T>
T get(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string("missing field ") + key);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw SchemaError(std::string("bad type for field ") + key);
    }
}

inline const json& array_field(const json& j, const char* key, std::size_t max_len) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string("missing field ") + key);
    const json& a = j.at(key);
    if (!a.is_array()) throw SchemaError(std::string("field is not an array: ") + key);
    if (a.size() > max_len) throw SchemaError(std::string("array too long: ") + key);
    return a;
}

inline std::size_t as_index(const json& v, std::size_t bound, const char* what) {
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() >= bound) throw SchemaError(std::string("bad ") + what);
    return static_cast<std::size_t>(v.get<std::uint64_t>());
}

inline json ciphertext(const he::Ciphertext& c) { return to_base64(he::serialize(c)); }

inline he::Ciphertext ciphertext(const json& j) {
    if (!j.is_string()) throw SchemaError("ciphertext must be a base64 string");
    try {
        return he::deserialize(from_base64(j.get<std::string>()));
    } catch (const he::FormatError& e) {
        throw SchemaError(std::string("bad ciphertext: ") + e.what());
    }
}

inline json enc_keys(std::span<const EncKey> keys) {
    json a = json::array();
    for (const auto& k : keys) a.push_back(json::array({ciphertext(k.a), ciphertext(k.b)}));
    return a;
}

inline std::vector<EncKey> enc_keys(const json& j, std::size_t max_len) {
    if (!j.is_array() || j.size() > max_len) throw SchemaError("bad key list");
    std::vector<EncKey> out;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2) throw SchemaError("a key is a pair of ciphertexts");
        out.push_back({ciphertext(p[0]), ciphertext(p[1])});
    }
    return out;
}

inline json amplitudes(const StateVector& s) {
    json a = json::array();
    for (const auto& z : s.amplitudes()) a.push_back(json::array({z.real(), z.imag()}));
    return a;
}

inline StateVector amplitudes(const json& j) {
    if (!j.is_array() || j.empty() || j.size() > (std::size_t{1} << max_register_qubits)) throw SchemaError("bad amplitude array");
    std::vector<cplx> amps;
    amps.reserve(j.size());
    for (const auto& z : j) {
        if (!z.is_array() || z.size() != 2 || !z[0].is_number() || !z[1].is_number()) throw SchemaError("amplitude must be [re, im]");
        amps.emplace_back(z[0].get<double>(), z[1].get<double>());
    }
    try {
        return StateVector::from_amplitudes(std::move(amps));
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
}

inline json cipher_state(const CipherState& cs) {
    return {{"level", cs.level}, {"amplitudes", amplitudes(cs.reg)}, {"keys", enc_keys(cs.keys)}};
}

inline CipherState cipher_state(const json& j) {
    CipherState cs;
    cs.level = get<std::uint32_t>(j, "level");
    if (!j.contains("amplitudes") || !j.contains("keys")) throw SchemaError("cipher state needs amplitudes and keys");
    cs.reg = amplitudes(j.at("amplitudes"));
    cs.keys = enc_keys(j.at("keys"), max_register_qubits);
    if (cs.keys.size() != cs.width()) throw SchemaError("one key pair per wire");
    for (const auto& k : cs.keys)
        if (k.a.level() != cs.level || k.b.level() != cs.level) throw SchemaError("key level differs from the cipher state level");
    return cs;
}

inline GateKind gate_kind(const std::string& name) {
    for (GateKind k : {GateKind::X, GateKind::Y, GateKind::Z, GateKind::P, GateKind::Pdagger, GateKind::H, GateKind::T, GateKind::Tdagger,
                       GateKind::CNOT, GateKind::CZ, GateKind::RX, GateKind::RY, GateKind::RZ})
        if (name == gate_name(k)) return k;
    throw SchemaError("unknown gate " + name);
}

inline json circuit(std::span<const Gate> c) {
    json a = json::array();
    for (const auto& g : c) {
        json e = json::array({gate_name(g.kind), g.wires[0]});
        if (g.two_qubit()) e.push_back(g.wires[1]);
        if (is_rotation(g.kind)) e.push_back(g.angle);
        a.push_back(std::move(e));
    }
    return a;
}

inline Circuit circuit(const json& j, std::size_t max_gates) {
    if (!j.is_array() || j.size() > max_gates) throw SchemaError("bad gate list");
    Circuit c;
    c.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_array() || e.empty() || !e[0].is_string()) throw SchemaError("gate must be [name, wires..., angle?]");
        const GateKind k = gate_kind(e[0].get<std::string>());
        const std::size_t need = 2 + (is_two_qubit(k) ? 1 : 0) + (is_rotation(k) ? 1 : 0);
        if (e.size() != need) throw SchemaError("wrong arity for " + e[0].get<std::string>());
        const std::size_t w0 = as_index(e[1], max_register_qubits, "wire");
        if (is_two_qubit(k)) {
            const std::size_t w1 = as_index(e[2], max_register_qubits, "wire");
            if (w0 == w1) throw SchemaError("two-qubit gate on one wire");
            c.push_back(k == GateKind::CNOT ? Gate::cnot(w0, w1) : Gate::cz(w0, w1));
        } else if (is_rotation(k)) {
            if (!e[2].is_number() || !std::isfinite(e[2].get<double>())) throw SchemaError("bad angle");
            c.push_back(Gate::single(k, w0, e[2].get<double>()));
        } else {
            c.push_back(Gate::single(k, w0));
        }
    }
    return c;
}

inline json switch_key(const he::SwitchKey& k) {
    json bits = json::array();
    for (const auto& c : k.seed_bits) bits.push_back(ciphertext(c));
    return {{"from_id", k.from_id}, {"from_level", k.from_level}, {"bits", bits}};
}

inline he::SwitchKey switch_key(const json& j) {
    he::SwitchKey k;
    k.from_id = get<std::uint64_t>(j, "from_id");
    k.from_level = get<std::uint32_t>(j, "from_level");
    for (const auto& c : array_field(j, "bits", 4096)) k.seed_bits.push_back(ciphertext(c));
    return k;
}

inline json gadget_classical(const GadgetClassical& g) {
    auto pair = [](const std::array<he::Ciphertext, 2>& p) { return json::array({ciphertext(p[0]), ciphertext(p[1])}); };
    return {{"level", g.level}, {"nonce", g.nonce},         {"enc_x", pair(g.enc_x)},
            {"enc_z", pair(g.enc_z)}, {"enc_p", pair(g.enc_p)}, {"switch_key", switch_key(g.switch_key)}};
}

inline GadgetClassical gadget_classical(const json& j) {
    GadgetClassical g;
    g.level = get<std::uint32_t>(j, "level");
    g.nonce = get<std::uint64_t>(j, "nonce");
    auto pair = [&](const char* key, std::array<he::Ciphertext, 2>& out) {
        const json& a = array_field(j, key, 2);
        if (a.size() != 2) throw SchemaError(std::string(key) + " must hold two ciphertexts");
        out = {ciphertext(a[0]), ciphertext(a[1])};
    };
    pair("enc_x", g.enc_x);
    pair("enc_z", g.enc_z);
    pair("enc_p", g.enc_p);
    if (!j.contains("switch_key")) throw SchemaError("missing switch key");
    g.switch_key = switch_key(j.at("switch_key"));
    return g;
}

/// The refresh capability is the modeled stand-in for bootstrapping material and travels as an opaque blob.
inline json eval_key(const he::EvalKey& k) {
    if (!k.refresh) throw std::invalid_argument("evaluation key without refresh capability");
    const he::SecretKey& s = k.refresh->key;
    return {{"id", k.id},
            {"level", k.level},
            {"backend", s.backend == he::Backend::sealed ? "sealed" : "transparent"},
            {"refresh", to_base64(s.seed)}};
}

inline he::EvalKey eval_key(const json& j) {
    he::SecretKey s;
    s.id = get<std::uint64_t>(j, "id");
    s.level = get<std::uint32_t>(j, "level");
    const auto backend = get<std::string>(j, "backend");
    if (backend != "sealed" && backend != "transparent") throw SchemaError("unknown backend");
    s.backend = backend == "sealed" ? he::Backend::sealed : he::Backend::transparent;
    s.seed = from_base64(get<std::string>(j, "refresh"));
    if (s.seed.empty() || s.seed.size() > 512) throw SchemaError("bad refresh capability");
    s.prf_key = he::detail::derive_prf_key(s.seed);
    return he::EvalKey{s.id, s.level, std::make_shared<he::RefreshCapability>(he::RefreshCapability{s})};
}

inline json theta(const Theta& t) { return json::array({json(t[0]), json(t[1])}); }

inline Theta theta(const json& j) {
    if (!j.is_array() || j.size() != 2) throw SchemaError("theta is 2x4");
    Theta t{};
    for (std::size_t r = 0; r < 2; ++r) {
        if (!j[r].is_array() || j[r].size() != 4) throw SchemaError("theta is 2x4");
        for (std::size_t k = 0; k < 4; ++k) {
            if (!j[r][k].is_number()) throw SchemaError("theta entries are numbers");
            t[r][k] = j[r][k].get<double>();
        }
    }
    return t;
}

inline json model(const ShadowModel& m) {
    return {{"theta", theta(m.theta)}, {"w", m.w}, {"bias", m.bias}, {"n", m.n}, {"n_qsc", m.n_qsc}};
}

inline ShadowModel model(const json& j) {
    ShadowModel m;
    if (!j.contains("theta")) throw SchemaError("missing theta");
    m.theta = theta(j.at("theta"));
    m.w = get<std::vector<double>>(j, "w");
    m.bias = get<double>(j, "bias");
    m.n = get<std::size_t>(j, "n");
    m.n_qsc = get<std::size_t>(j, "n_qsc");
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
    return m;
}

inline json shot_bits(const std::vector<std::vector<std::uint8_t>>& shots) {
    json a = json::array();
    for (const auto& s : shots) {
        std::string row;
        for (auto b : s) row.push_back(b ? '1' : '0');
        a.push_back(row);
    }
    return a;
}

inline std::vector<std::vector<std::uint8_t>> shot_bits(const json& j, std::size_t width, std::size_t max_shots) {
    if (!j.is_array() || j.size() > max_shots) throw SchemaError("bad shot list");
    std::vector<std::vector<std::uint8_t>> out;
    for (const auto& r : j) {
        if (!r.is_string() || r.get<std::string>().size() != width) throw SchemaError("bad shot record");
        std::vector<std::uint8_t> bits;
        for (char c : r.get<std::string>()) {
            if (c != '0' && c != '1') throw SchemaError("shot records are bit strings");
            bits.push_back(c == '1');
        }
        out.push_back(std::move(bits));
    }
    return out;
}

}  // namespace dvqa::wire
