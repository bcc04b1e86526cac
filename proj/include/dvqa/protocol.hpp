#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dvqa/delegated.hpp"
#include "dvqa/trapdoor.hpp"
#include "dvqa/wire.hpp"

namespace dvqa::proto {

using wire::json;

inline constexpr std::uint8_t protocol_version = 1;
inline constexpr std::size_t header_size = 6;
inline constexpr std::size_t max_frame = 16u << 20;
inline constexpr std::uint16_t default_port = 7913;

enum class Kind : std::uint8_t {
    Hello = 1,
    Announce,
    RspCommit,
    RspBasis,
    RspOutcome,
    CoupleInstr,
    GadgetClassical,
    EncInput,
    RunRequest,
    ShotResults,
    EncKeysUpdate,
    ParamUpdate,
    Done,
    Error
};
inline constexpr int kind_count = 14;

inline const char* kind_name(Kind k) {
    static const char* names[] = {"Hello",        "Announce", "RspCommit",  "RspBasis",      "RspOutcome",  "CoupleInstr", "GadgetClassical",
                                  "EncInput",     "RunRequest", "ShotResults", "EncKeysUpdate", "ParamUpdate", "Done",        "Error"};
    const int i = static_cast<int>(k) - 1;
    return i >= 0 && i < kind_count ? names[i] : "?";
}

inline std::vector<Kind> all_kinds() {
    std::vector<Kind> out;
    for (int i = 1; i <= kind_count; ++i) out.push_back(static_cast<Kind>(i));
    return out;
}

struct Message {
    Kind kind = Kind::Done;
    json body = json::object();

    friend bool operator==(const Message& a, const Message& b) { return a.kind == b.kind && a.body == b.body; }
};

inline Message error_message(const std::string& code, const std::string& text) { return {Kind::Error, {{"code", code}, {"text", text}}}; }

class FrameError : public std::runtime_error {
public:
    FrameError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

class RemoteError : public std::runtime_error {
public:
    RemoteError(std::string code, const std::string& text) : std::runtime_error(code + ": " + text), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

enum class Direction { to_server, to_client };

namespace detail {

enum class FieldType { uint, number, string, array, object };

struct Field {
    const char* name;
    FieldType type;
};

inline const std::vector<Field>& schema(Kind k, Direction d) {
    using F = FieldType;
    static const std::map<std::pair<int, int>, std::vector<Field>> table = [] {
        std::map<std::pair<int, int>, std::vector<Field>> t;
        auto add = [&](Kind k, Direction d, std::vector<Field> f) { t[{static_cast<int>(k), static_cast<int>(d)}] = std::move(f); };
        const auto S = Direction::to_server, C = Direction::to_client;
        add(Kind::Hello, S,
            {{"version", F::uint}, {"role", F::string}, {"mode", F::string}, {"kappa", F::uint}, {"rsp", F::string}, {"backend", F::string}});
        add(Kind::Hello, C, {{"version", F::uint}, {"role", F::string}});
        add(Kind::Announce, C, {{"ansatz", F::string}, {"n_qsc", F::uint}, {"observables", F::array}, {"gates", F::array}});
        add(Kind::RspCommit, S, {{"round", F::uint}, {"n", F::uint}, {"mu", F::uint}, {"rows", F::array}, {"offset", F::uint}});
        add(Kind::RspCommit, C, {{"round", F::uint}, {"y", F::uint}});
        add(Kind::RspBasis, S, {{"round", F::uint}, {"alpha", F::array}});
        add(Kind::RspOutcome, C, {{"round", F::uint}, {"b", F::array}});
        add(Kind::CoupleInstr, S, {{"level", F::uint}, {"rounds", F::array}, {"qubits", F::array}});
        add(Kind::GadgetClassical, S, {{"evks", F::array}, {"gadgets", F::array}});
        add(Kind::EncInput, S, {{"cipher", F::object}, {"rotation_flips", F::array}});
        add(Kind::RunRequest, S, {{"circuit_id", F::string}, {"gates", F::array}, {"basis", F::string}, {"wires", F::array}, {"shots", F::uint}});
        add(Kind::ShotResults, C, {{"raw", F::number}, {"shots", F::array}});
        add(Kind::EncKeysUpdate, C, {{"keys", F::array}});
        add(Kind::ParamUpdate, S, {{"theta", F::array}, {"w", F::array}, {"bias", F::number}});
        for (auto d : {S, C}) {
            add(Kind::Done, d, {});
            add(Kind::Error, d, {{"code", F::string}, {"text", F::string}});
        }
        return t;
    }();
    auto it = table.find({static_cast<int>(k), static_cast<int>(d)});
    if (it == table.end()) throw FrameError("direction", std::string(kind_name(k)) + " is not sent in this direction");
    return it->second;
}

inline bool has_type(const json& v, FieldType t) {
    switch (t) {
        case FieldType::uint: return v.is_number_unsigned();
        case FieldType::number: return v.is_number() && std::isfinite(v.get<double>());
        case FieldType::string: return v.is_string();
        case FieldType::array: return v.is_array();
        case FieldType::object: return v.is_object();
    }
    return false;
}

}  // namespace detail

/// Exact field set and top-level types per kind and direction.
inline void validate_schema(const Message& m, Direction d) {
    const auto& fields = detail::schema(m.kind, d);
    if (!m.body.is_object()) throw FrameError("malformed", "payload must be a JSON object");
    if (m.body.size() != fields.size()) throw FrameError("malformed", std::string("unexpected field set for ") + kind_name(m.kind));
    for (const auto& f : fields) {
        auto it = m.body.find(f.name);
        if (it == m.body.end()) throw FrameError("malformed", std::string("missing field ") + f.name);
        if (!detail::has_type(*it, f.type)) throw FrameError("malformed", std::string("bad type for field ") + f.name);
    }
}

/// 4-byte little-endian payload length, version byte, kind byte, canonical JSON payload.
inline std::vector<std::uint8_t> encode_frame(const Message& m) {
    const std::string payload = m.body.dump();
    if (payload.size() + header_size > max_frame) throw FrameError("oversize", "frame exceeds 16 MiB");
    std::vector<std::uint8_t> out(header_size + payload.size());
    const auto len = static_cast<std::uint32_t>(payload.size());
    for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
    out[4] = protocol_version;
    out[5] = static_cast<std::uint8_t>(m.kind);
    std::memcpy(out.data() + header_size, payload.data(), payload.size());
    return out;
}

struct FrameHeader {
    std::uint32_t length = 0;
    Kind kind = Kind::Done;
};

inline FrameHeader parse_header(std::span<const std::uint8_t> h) {
    if (h.size() < header_size) throw FrameError("truncated", "short frame header");
    FrameHeader out;
    for (int i = 0; i < 4; ++i) out.length |= std::uint32_t{h[static_cast<std::size_t>(i)]} << (8 * i);
    if (std::size_t{out.length} + header_size > max_frame) throw FrameError("oversize", "frame exceeds 16 MiB");
    if (h[4] != protocol_version) throw FrameError("version", "unsupported protocol version " + std::to_string(h[4]));
    if (h[5] < 1 || h[5] > kind_count) throw FrameError("kind", "unknown message kind " + std::to_string(h[5]));
    out.kind = static_cast<Kind>(h[5]);
    return out;
}

inline Message decode_payload(Kind kind, std::span<const std::uint8_t> payload) {
    Message m;
    m.kind = kind;
    try {
        m.body = json::parse(payload.begin(), payload.end());
    } catch (const json::exception&) {
        throw FrameError("malformed", "payload is not JSON");
    }
    if (!m.body.is_object()) throw FrameError("malformed", "payload must be a JSON object");
    return m;
}

/// Decodes exactly one frame.
inline Message decode_frame(std::span<const std::uint8_t> bytes) {
    const FrameHeader h = parse_header(bytes);
    if (bytes.size() < header_size + h.length) throw FrameError("truncated", "frame shorter than its length field");
    if (bytes.size() > header_size + h.length) throw FrameError("malformed", "trailing bytes after frame");
    return decode_payload(h.kind, bytes.subspan(header_size, h.length));
}

// ---------------------------------------------------------------------------
// byte streams

class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    /// Blocks until at least one byte is available; 0 means end of stream.
    virtual std::size_t read(std::uint8_t* buf, std::size_t n) = 0;
    virtual void close() = 0;
};

namespace detail {

struct Pipe {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint8_t> buf;
    bool closed = false;
};

}  // namespace detail

/// One end of an in-process duplex byte pipe.
class MemoryStream : public ByteStream {
public:
    MemoryStream(std::shared_ptr<detail::Pipe> in, std::shared_ptr<detail::Pipe> out) : in_(std::move(in)), out_(std::move(out)) {}
    ~MemoryStream() override { close(); }

    void write(std::span<const std::uint8_t> bytes) override {
        std::lock_guard lock(out_->mu);
        if (out_->closed) throw std::runtime_error("write on a closed pipe");
        out_->buf.insert(out_->buf.end(), bytes.begin(), bytes.end());
        out_->cv.notify_all();
    }

    std::size_t read(std::uint8_t* buf, std::size_t n) override {
        std::unique_lock lock(in_->mu);
        in_->cv.wait(lock, [&] { return !in_->buf.empty() || in_->closed; });
        const std::size_t k = std::min(n, in_->buf.size());
        std::copy_n(in_->buf.begin(), k, buf);
        in_->buf.erase(in_->buf.begin(), in_->buf.begin() + static_cast<std::ptrdiff_t>(k));
        return k;
    }

    void close() override {
        for (auto* p : {in_.get(), out_.get()}) {
            std::lock_guard lock(p->mu);
            p->closed = true;
            p->cv.notify_all();
        }
    }

private:
    std::shared_ptr<detail::Pipe> in_, out_;
};

inline std::pair<std::unique_ptr<MemoryStream>, std::unique_ptr<MemoryStream>> memory_pair() {
    auto a = std::make_shared<detail::Pipe>(), b = std::make_shared<detail::Pipe>();
    return {std::make_unique<MemoryStream>(a, b), std::make_unique<MemoryStream>(b, a)};
}

/// A stream that replays fixed bytes and records everything written to it.
class ScriptedStream : public ByteStream {
public:
    explicit ScriptedStream(std::vector<std::uint8_t> input) : input_(std::move(input)) {}
    void write(std::span<const std::uint8_t> bytes) override { output_.insert(output_.end(), bytes.begin(), bytes.end()); }
    std::size_t read(std::uint8_t* buf, std::size_t n) override {
        const std::size_t k = std::min(n, input_.size() - pos_);
        std::copy_n(input_.begin() + static_cast<std::ptrdiff_t>(pos_), k, buf);
        pos_ += k;
        return k;
    }
    void close() override {}
    const std::vector<std::uint8_t>& output() const { return output_; }

private:
    std::vector<std::uint8_t> input_;
    std::size_t pos_ = 0;
    std::vector<std::uint8_t> output_;
};

class TcpStream : public ByteStream {
public:
    explicit TcpStream(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    ~TcpStream() override {
        close();
        if (fd_ >= 0) ::close(fd_);
    }

    void write(std::span<const std::uint8_t> bytes) override {
        std::size_t done = 0;
        while (done < bytes.size()) {
            const ssize_t k = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
            if (k < 0) {
                if (errno == EINTR) continue;
                throw std::runtime_error(std::string("send failed: ") + std::strerror(errno));
            }
            done += static_cast<std::size_t>(k);
        }
    }

    std::size_t read(std::uint8_t* buf, std::size_t n) override {
        for (;;) {
            const ssize_t k = ::recv(fd_, buf, n, 0);
            if (k >= 0) return static_cast<std::size_t>(k);
            if (errno == EINTR) continue;
            return 0;
        }
    }

    void close() override {
        if (!shut_.exchange(true) && fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

private:
    int fd_;
    std::atomic<bool> shut_{false};
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = default_port;
};

/// DVQA_HOST and DVQA_PORT override the defaults.
inline Endpoint endpoint_from_env(Endpoint e = {}) {
    if (const char* h = std::getenv("DVQA_HOST"); h && *h) e.host = h;
    if (const char* p = std::getenv("DVQA_PORT"); p && *p) {
        const long v = std::strtol(p, nullptr, 10);
        if (v <= 0 || v > 65535) throw std::invalid_argument("DVQA_PORT must be a TCP port");
        e.port = static_cast<std::uint16_t>(v);
    }
    return e;
}

inline std::unique_ptr<TcpStream> tcp_connect(const Endpoint& e, int attempts = 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(e.host.c_str(), std::to_string(e.port).c_str(), &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve " + e.host);
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
    for (int a = 0; a < attempts; ++a) {
        const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd < 0) throw std::runtime_error("socket failed");
        if (::connect(fd, res->ai_addr, res->ai_addrlen) == 0) return std::make_unique<TcpStream>(fd);
        ::close(fd);
        if (a + 1 < attempts) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    throw std::runtime_error("cannot connect to " + e.host + ":" + std::to_string(e.port));
}

class TcpListener {
public:
    /// Port 0 binds an ephemeral port.
    explicit TcpListener(const Endpoint& e) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw std::runtime_error("socket failed");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(e.port);
        if (::inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd_);
            throw std::invalid_argument("listener host must be an IPv4 address");
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            throw std::runtime_error("cannot listen on " + e.host + ":" + std::to_string(e.port) + ": " + err);
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }
    ~TcpListener() {
        close();
        ::close(fd_);
    }

    std::uint16_t port() const { return port_; }

    /// nullptr once the listener is closed.
    std::unique_ptr<TcpStream> accept() {
        for (;;) {
            const int c = ::accept(fd_, nullptr, nullptr);
            if (c >= 0) return std::make_unique<TcpStream>(c);
            if (errno == EINTR) continue;
            return nullptr;
        }
    }

    void close() {
        if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
    }

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> closed_{false};
};

// ---------------------------------------------------------------------------
// framed channel

/// Frames over a byte stream. Any framing error poisons the channel.
class Channel {
public:
    Channel(ByteStream& stream, Direction incoming) : stream_(stream), incoming_(incoming) {}

    void send(const Message& m) {
        validate_schema(m, incoming_ == Direction::to_server ? Direction::to_client : Direction::to_server);
        const auto bytes = encode_frame(m);
        if (tap) tap(m, false);
        stream_.write(bytes);
        bytes_out_ += bytes.size();
    }

    /// nullopt on a clean end of stream between frames.
    std::optional<Message> recv() {
        if (poisoned_) throw FrameError("poisoned", "channel poisoned by an earlier framing error");
        std::uint8_t head[header_size];
        const std::size_t got = read_exact(head, header_size);
        if (got == 0) return std::nullopt;
        try {
            if (got < header_size) throw FrameError("truncated", "stream ended inside a frame header");
            const FrameHeader h = parse_header(std::span<const std::uint8_t>(head, header_size));
            std::vector<std::uint8_t> payload(h.length);
            if (read_exact(payload.data(), h.length) < h.length) throw FrameError("truncated", "stream ended inside a frame payload");
            bytes_in_ += header_size + h.length;
            Message m = decode_payload(h.kind, payload);
            validate_schema(m, incoming_);
            if (tap) tap(m, true);
            return m;
        } catch (const FrameError&) {
            poisoned_ = true;
            throw;
        }
    }

    bool poisoned() const { return poisoned_; }
    std::size_t bytes_in() const { return bytes_in_; }
    std::size_t bytes_out() const { return bytes_out_; }
    ByteStream& stream() { return stream_; }

    std::function<void(const Message&, bool incoming)> tap;

private:
    std::size_t read_exact(std::uint8_t* buf, std::size_t n) {
        std::size_t done = 0;
        while (done < n) {
            const std::size_t k = stream_.read(buf + done, n - done);
            if (k == 0) break;
            done += k;
        }
        return done;
    }

    ByteStream& stream_;
    Direction incoming_;
    bool poisoned_ = false;
    std::size_t bytes_in_ = 0, bytes_out_ = 0;
};

// ---------------------------------------------------------------------------
// session phases

enum class Phase { handshake, keygen, rsp, evaluating, training, done };

inline const char* phase_name(Phase p) {
    static const char* names[] = {"handshake", "keygen", "rsp", "evaluating", "training", "done"};
    return names[static_cast<int>(p)];
}

/// Phase after the server accepts `k` in phase `p`; nullopt means the message is out of order.
inline std::optional<Phase> server_transition(Phase p, Kind k) {
    const bool rsp_traffic = k == Kind::RspCommit || k == Kind::RspBasis || k == Kind::CoupleInstr || k == Kind::GadgetClassical;
    switch (p) {
        case Phase::handshake:
            if (k == Kind::Hello) return Phase::keygen;
            break;
        case Phase::keygen:
            if (k == Kind::GadgetClassical) return Phase::rsp;
            break;
        case Phase::rsp:
            if (rsp_traffic) return Phase::rsp;
            if (k == Kind::EncInput) return Phase::evaluating;
            break;
        case Phase::evaluating:
        case Phase::training:
            // budget top-ups keep the phase
            if (rsp_traffic) return p;
            if (k == Kind::EncInput) return Phase::evaluating;
            if (k == Kind::RunRequest && p == Phase::evaluating) return Phase::evaluating;
            if (k == Kind::ParamUpdate) return Phase::training;
            if (k == Kind::Done) return Phase::done;
            break;
        case Phase::done: break;
    }
    return std::nullopt;
}

/// The declared order handshake -> keygen -> rsp -> evaluating <-> training -> done, plus staying put.
inline bool legal_transition(Phase from, Phase to) {
    if (from == to) return from != Phase::done;
    static const std::set<std::pair<Phase, Phase>> edges = {
        {Phase::handshake, Phase::keygen},    {Phase::keygen, Phase::rsp},       {Phase::rsp, Phase::evaluating},
        {Phase::evaluating, Phase::training}, {Phase::training, Phase::evaluating}, {Phase::evaluating, Phase::done},
        {Phase::training, Phase::done}};
    return edges.count({from, to}) > 0;
}

struct PhaseReport {
    std::size_t reachable = 0;
    std::size_t transitions = 0;
    std::vector<std::string> violations;
};

/// Exhaustive exploration of the server transition table from the handshake phase.
inline PhaseReport check_phase_machine() {
    PhaseReport r;
    std::set<Phase> seen{Phase::handshake};
    std::vector<Phase> todo{Phase::handshake};
    while (!todo.empty()) {
        const Phase p = todo.back();
        todo.pop_back();
        for (Kind k : all_kinds()) {
            const auto next = server_transition(p, k);
            if (!next) continue;
            ++r.transitions;
            if (!legal_transition(p, *next))
                r.violations.push_back(std::string(phase_name(p)) + " --" + kind_name(k) + "--> " + phase_name(*next));
            if (seen.insert(*next).second) todo.push_back(*next);
        }
    }
    r.reachable = seen.size();
    if (!seen.count(Phase::done)) r.violations.push_back("done is unreachable");
    return r;
}

// ---------------------------------------------------------------------------
// server

inline json announce_body() {
    return {{"ansatz", "shadow-2q"},
            {"n_qsc", 2u},
            {"observables", json::array({"XX"})},
            {"gates", json::array({"RX r0", "RY r1", "RX r2", "RX r0", "RY r1", "RX r2", "CNOT", "CNOT", "RY r3", "RY r3"})}};
}

inline constexpr std::size_t max_rsp_rounds = 1024;
inline constexpr std::size_t max_shots = 1u << 20;
inline constexpr std::size_t max_gates = 1u << 20;

/// Message handler for one client. It never sees a plaintext secret: inputs arrive padded, keys and
/// gadget pads arrive as ciphertexts, and RSP rounds only receive public function descriptions and alpha.
class ServerSession {
public:
    explicit ServerSession(std::uint64_t seed) : rng_(seed) {}

    Phase phase() const { return phase_; }
    bool finished() const { return finished_; }
    std::size_t gadget_budget() const { return ek_.gadgets.size() - consumed_; }
    std::size_t runs() const { return runs_; }
    const std::optional<ShadowModel>& params() const { return params_; }

    std::vector<Message> handle(const Message& in) {
        if (finished_) return {error_message("phase", "session already finished")};
        try {
            if (in.kind == Kind::Error) {
                finished_ = true;
                return {};
            }
            const auto next = server_transition(phase_, in.kind);
            if (!next) return fail("phase", std::string(kind_name(in.kind)) + " not allowed in phase " + phase_name(phase_));
            std::vector<Message> out = dispatch(in);
            if (phase_ != Phase::done) phase_ = *next;
            return out;
        } catch (const FrameError& e) {
            return fail(e.code(), e.what());
        } catch (const wire::SchemaError& e) {
            return fail("schema", e.what());
        } catch (const GadgetError& e) {
            return fail("budget", e.what());
        } catch (const std::exception& e) {
            return fail("eval", e.what());
        }
    }

private:
    std::vector<Message> fail(const std::string& code, const std::string& text) {
        finished_ = true;
        phase_ = Phase::done;
        return {error_message(code, text)};
    }

    std::vector<Message> dispatch(const Message& in) {
        const json& b = in.body;
        switch (in.kind) {
            case Kind::Hello: {
                if (wire::get<std::uint64_t>(b, "version") != protocol_version) return fail("version", "incompatible protocol version");
                if (wire::get<std::string>(b, "role") != "client") return fail("schema", "expected a client hello");
                if (parse_mode(wire::get<std::string>(b, "mode")) == Mode::plaintext) return fail("schema", "plaintext mode needs no server");
                return {Message{Kind::Hello, {{"version", protocol_version}, {"role", "server"}}}, Message{Kind::Announce, announce_body()}};
            }
            case Kind::RspCommit: return rsp_commit(b);
            case Kind::RspBasis: return rsp_basis(b);
            case Kind::CoupleInstr: return couple(b);
            case Kind::GadgetClassical: return gadgets(b);
            case Kind::EncInput: {
                if (pending_) return fail("phase", "one EncInput per run");
                RunJob job;
                job.cipher = wire::cipher_state(b.at("cipher"));
                for (const auto& f : wire::array_field(b, "rotation_flips", max_gates)) job.rotations.flips.push_back(static_cast<std::uint8_t>(wire::as_index(f, 2, "flip")));
                pending_ = std::move(job);
                return {};
            }
            case Kind::RunRequest: {
                if (!pending_) return fail("phase", "RunRequest before EncInput");
                RunJob job = std::move(*pending_);
                pending_.reset();
                job.circuit = wire::circuit(b.at("gates"), max_gates);
                const auto basis = wire::get<std::string>(b, "basis");
                if (basis != "X" && basis != "Z") throw wire::SchemaError("basis must be X or Z");
                job.basis = basis == "X" ? Basis::X : Basis::Z;
                for (const auto& w : wire::array_field(b, "wires", wire::max_register_qubits)) job.wires.push_back(wire::as_index(w, job.cipher.width(), "wire"));
                job.shots = wire::get<std::size_t>(b, "shots");
                if (job.shots > max_shots) throw wire::SchemaError("too many shots");
                const std::size_t t = t_count(job.circuit);
                RunOutcome r = serve_run(std::move(job), ek_, rng_);
                consumed_ += t;
                ++runs_;
                return {Message{Kind::ShotResults, {{"raw", r.raw}, {"shots", wire::shot_bits(r.shots)}}},
                        Message{Kind::EncKeysUpdate, {{"keys", wire::enc_keys(r.keys)}}}};
            }
            case Kind::ParamUpdate: {
                ShadowModel m;
                m.theta = wire::theta(b.at("theta"));
                m.w = wire::get<std::vector<double>>(b, "w");
                m.bias = wire::get<double>(b, "bias");
                m.n = m.w.size() + 1;
                m.validate();
                params_ = std::move(m);
                return {};
            }
            case Kind::Done: finished_ = true; return {Message{Kind::Done, json::object()}};
            default: return fail("phase", std::string(kind_name(in.kind)) + " is not a client message");
        }
    }

    std::vector<Message> rsp_commit(const json& b) {
        const auto round = wire::get<std::uint64_t>(b, "round");
        const auto n = wire::get<std::size_t>(b, "n"), mu = wire::get<std::size_t>(b, "mu");
        if (n < 3 || mu + 1 < n || n + mu > wire::max_register_qubits) throw wire::SchemaError("unsupported trapdoor shape");
        if (rounds_.size() + prepared_.size() >= max_rsp_rounds) throw wire::SchemaError("too many open preparation rounds");
        if (rounds_.count(round) || prepared_.count(round)) throw wire::SchemaError("round id reused");
        std::vector<std::uint32_t> rows;
        for (const auto& r : wire::array_field(b, "rows", mu)) rows.push_back(static_cast<std::uint32_t>(wire::as_index(r, std::size_t{1} << n, "row")));
        if (rows.size() != mu) throw wire::SchemaError("one row per output bit");
        const auto offset = wire::get<std::uint64_t>(b, "offset");
        if (offset >= (std::uint64_t{1} << mu)) throw wire::SchemaError("offset wider than the output");
        auto it = rounds_.emplace(round, RspServerRound(std::move(rows), static_cast<std::uint32_t>(offset), n, mu)).first;
        const std::uint32_t y = it->second.commit(rng_);
        round_width_[round] = n;
        return {Message{Kind::RspCommit, {{"round", round}, {"y", y}}}};
    }

    std::vector<Message> rsp_basis(const json& b) {
        const auto round = wire::get<std::uint64_t>(b, "round");
        auto it = rounds_.find(round);
        if (it == rounds_.end()) throw wire::SchemaError("unknown preparation round");
        std::vector<std::uint8_t> alpha;
        for (const auto& a : wire::array_field(b, "alpha", 64)) alpha.push_back(static_cast<std::uint8_t>(wire::as_index(a, 2, "alpha bit")));
        if (alpha.size() + 1 != round_width_.at(round)) throw wire::SchemaError("alpha must have n-1 bits");
        std::vector<std::uint8_t> bits = it->second.measure_bases(alpha, rng_);
        prepared_.emplace(round, it->second.take_qubit());
        rounds_.erase(it);
        json jb = json::array();
        for (auto x : bits) jb.push_back(x);
        return {Message{Kind::RspOutcome, {{"round", round}, {"b", jb}}}};
    }

    std::vector<Message> couple(const json& b) {
        const auto level64 = wire::get<std::uint64_t>(b, "level");
        if (level64 > max_gates) throw wire::SchemaError("gadget level out of range");
        const auto level = static_cast<std::uint32_t>(level64);
        if (level < ek_.gadgets.size() || coupled_.count(level)) throw wire::SchemaError("gadget level already coupled");
        if (coupled_.size() >= max_rsp_rounds) throw wire::SchemaError("too many uncommitted gadgets");
        const json& rounds = wire::array_field(b, "rounds", 4);
        const json& qubits = wire::array_field(b, "qubits", 4);
        std::array<StateVector, 4> q;
        if (rounds.size() == 4 && qubits.empty()) {
            std::array<std::uint64_t, 4> ids{};
            for (std::size_t i = 0; i < 4; ++i) {
                if (!rounds[i].is_number_unsigned()) throw wire::SchemaError("round ids are integers");
                ids[i] = rounds[i].get<std::uint64_t>();
                if (!prepared_.count(ids[i])) throw wire::SchemaError("round not finished");
                for (std::size_t j = 0; j < i; ++j)
                    if (ids[j] == ids[i]) throw wire::SchemaError("round used twice");
            }
            for (std::size_t i = 0; i < 4; ++i) {
                q[i] = std::move(prepared_.at(ids[i]));
                prepared_.erase(ids[i]);
            }
        } else if (qubits.size() == 4 && rounds.empty()) {
            // ideal preparation: the simulated quantum channel carries the four qubits
            for (std::size_t i = 0; i < 4; ++i) {
                q[i] = wire::amplitudes(qubits[i]);
                if (q[i].num_qubits() != 1) throw wire::SchemaError("gadget qubits are single qubits");
            }
        } else {
            throw wire::SchemaError("couple either four rounds or four qubits");
        }
        for (const auto& s : q)
            if (s.num_qubits() != 1) throw wire::SchemaError("prepared register is not a single qubit");
        coupled_.emplace(level, assemble_gadget_state(std::move(q)));
        return {};
    }

    std::vector<Message> gadgets(const json& b) {
        for (const auto& e : wire::array_field(b, "evks", 1u << 16)) {
            he::EvalKey k = wire::eval_key(e);
            if (k.level != ek_.he_evks.size()) throw wire::SchemaError("evaluation keys must arrive in level order");
            ek_.he_evks.push_back(std::move(k));
        }
        for (const auto& e : wire::array_field(b, "gadgets", 1u << 16)) {
            GadgetClassical gc = wire::gadget_classical(e);
            if (gc.level != ek_.gadgets.size()) throw wire::SchemaError("gadgets must arrive in level order");
            auto it = coupled_.find(gc.level);
            if (it == coupled_.end()) throw wire::SchemaError("gadget has no coupled quantum part");
            ek_.gadgets.emplace_back(std::move(gc), std::move(it->second));
            coupled_.erase(it);
        }
        if (ek_.he_evks.size() < ek_.gadgets.size() + 1) throw wire::SchemaError("missing evaluation key for the top level");
        return {};
    }

    Rng rng_;
    Phase phase_ = Phase::handshake;
    bool finished_ = false;
    QheEvalKey ek_;
    std::size_t consumed_ = 0;
    std::size_t runs_ = 0;
    std::map<std::uint64_t, RspServerRound> rounds_;
    std::map<std::uint64_t, std::size_t> round_width_;
    std::map<std::uint64_t, StateVector> prepared_;
    std::map<std::uint32_t, StateVector> coupled_;
    std::optional<RunJob> pending_;
    std::optional<ShadowModel> params_;
};

/// Runs one session to completion. Framing errors are answered with an Error frame when possible.
inline void serve_session(Channel& ch, std::uint64_t seed, ServerSession* observe = nullptr) {
    ServerSession local(seed);
    ServerSession& s = observe ? *observe : local;
    while (!s.finished()) {
        std::optional<Message> in;
        try {
            in = ch.recv();
        } catch (const FrameError& e) {
            try {
                ch.send(error_message(e.code(), e.what()));
            } catch (const std::exception&) {
            }
            break;
        }
        if (!in) break;
        for (const auto& m : s.handle(*in)) ch.send(m);
    }
    ch.stream().close();
}

/// Accepts connections and serves each on its own thread; sessions share nothing but the listener.
class TcpServer {
public:
    explicit TcpServer(const Endpoint& e) : listener_(e) {}

    std::uint16_t port() const { return listener_.port(); }

    using SessionHook = std::function<void(const ServerSession&)>;

    /// Blocks until stop() or until max_sessions sessions have been accepted and finished.
    /// `on_finish` runs on the session's thread once the session ends.
    void serve(std::uint64_t seed, std::size_t max_sessions = 0, SessionHook on_finish = {}) {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; max_sessions == 0 || i < max_sessions; ++i) {
            auto conn = listener_.accept();
            if (!conn) break;
            threads.emplace_back([c = std::move(conn), s = seed + i, on_finish]() mutable {
                ServerSession session(s);
                try {
                    Channel ch(*c, Direction::to_server);
                    serve_session(ch, s, &session);
                } catch (const std::exception&) {
                    // a broken connection ends only its own session
                }
                if (on_finish) on_finish(session);
            });
        }
        for (auto& t : threads) t.join();
    }

    void stop() { listener_.close(); }

private:
    TcpListener listener_;
};

// ---------------------------------------------------------------------------
// client

/// Client role: holds every secret, talks to the server only through frames.
class RemoteClient : public FeatureEngine {
public:
    RemoteClient(Channel& ch, DelegatedOptions opt, std::uint64_t seed, const EpsilonNet* net = nullptr)
        : ch_(ch), client_(opt, seed, net, [this](QheKeys& k, std::size_t extra, Rng& rng) { extend_remote(k, extra, rng); }) {}

    DelegatedClient& client() { return client_; }
    std::size_t top_ups() const { return top_ups_; }

    void handshake() {
        const auto& o = client_.options();
        ch_.send({Kind::Hello,
                  {{"version", protocol_version},
                   {"role", "client"},
                   {"mode", mode_name(o.mode)},
                   {"kappa", o.kappa},
                   {"rsp", o.qhe.rsp == RspMode::faithful ? "faithful" : "ideal"},
                   {"backend", o.qhe.backend == he::Backend::sealed ? "sealed" : "transparent"}}});
        const Message hello = expect(Kind::Hello);
        if (wire::get<std::uint64_t>(hello.body, "version") != protocol_version) throw RemoteError("version", "server speaks another version");
        const Message ann = expect(Kind::Announce);
        if (ann.body != announce_body()) throw RemoteError("announce", "server announced an unexpected ansatz");
        // keygen: the level-0 evaluation key, no gadgets yet
        ch_.send({Kind::GadgetClassical, {{"evks", json::array({wire::eval_key(client_.keys().server.he_evks.at(0))})}, {"gadgets", json::array()}}});
    }

    RunOutcome run(const StateVector& input, const Circuit& server_circuit, Basis basis, std::vector<std::size_t> wires, std::size_t shots,
                   const std::string& circuit_id = "custom") {
        if (const std::size_t missing = client_.missing_levels(server_circuit)) client_.extend(missing);
        RunJob job = client_.prepare(input, server_circuit, basis, std::move(wires), shots);
        json flips = json::array();
        for (auto f : job.rotations.flips) flips.push_back(f);
        ch_.send({Kind::EncInput, {{"cipher", wire::cipher_state(job.cipher)}, {"rotation_flips", flips}}});
        json jw = json::array();
        for (auto w : job.wires) jw.push_back(w);
        ch_.send({Kind::RunRequest,
                  {{"circuit_id", circuit_id}, {"gates", wire::circuit(job.circuit)}, {"basis", basis == Basis::X ? "X" : "Z"}, {"wires", jw}, {"shots", shots}}});
        const Message res = expect(Kind::ShotResults);
        const Message keys = expect(Kind::EncKeysUpdate);
        RunOutcome out;
        out.raw = wire::get<double>(res.body, "raw");
        out.shots = wire::shot_bits(res.body.at("shots"), job.wires.size(), max_shots);
        out.keys = wire::enc_keys(keys.body.at("keys"), job.wires.size());
        if (out.keys.size() != job.wires.size()) throw RemoteError("schema", "key count differs from measured wires");
        return out;
    }

    double window_expectation(const StateVector& input, const Circuit& window, std::size_t v) override {
        const Circuit c = client_.server_circuit(window);
        const RunOutcome r = run(input, c, Basis::X, {v - 1, v}, client_.options().shots, "shadow/v" + std::to_string(v));
        return client_.decrypt_expectation(r, Basis::X, client_.options().shots);
    }

    void publish(const ShadowModel& m) { ch_.send({Kind::ParamUpdate, {{"theta", wire::theta(m.theta)}, {"w", m.w}, {"bias", m.bias}}}); }

    void finish() {
        ch_.send({Kind::Done, json::object()});
        expect(Kind::Done);
    }

private:
    Message expect(Kind k) {
        std::optional<Message> m = ch_.recv();
        if (!m) throw RemoteError("closed", "server closed the connection");
        if (m->kind == Kind::Error) throw RemoteError(m->body.value("code", "?"), m->body.value("text", ""));
        if (m->kind != k) throw RemoteError("order", std::string("expected ") + kind_name(k) + ", got " + kind_name(m->kind));
        return *m;
    }

    /// Quarter index of one remotely prepared qubit with the requested parity.
    int prepare_qubit(int parity, Rng& rng, std::vector<std::uint64_t>& rounds, json& qubits) {
        const QheOptions& q = client_.options().qhe;
        if (q.rsp == RspMode::ideal) {
            const int quarter = (parity & 1) + 2 * static_cast<int>(rng() & 1);
            qubits.push_back(wire::amplitudes(prepare_plus_quarter(quarter)));
            return quarter;
        }
        for (int attempt = 0; attempt < 64; ++attempt) {
            TrapdoorFunction f = sample_trapdoor(q.trapdoor_n, q.trapdoor_mu, rng);
            auto alpha = alpha_for_parity(f, parity, rng);
            if (!alpha) continue;
            const std::uint64_t id = next_round_++;
            ch_.send({Kind::RspCommit, {{"round", id}, {"n", f.n}, {"mu", f.mu}, {"rows", f.rows}, {"offset", f.offset}}});
            const Message c = expect(Kind::RspCommit);
            if (wire::get<std::uint64_t>(c.body, "round") != id) throw RemoteError("order", "preparation round mismatch");
            const auto y = wire::get<std::uint32_t>(c.body, "y");
            ch_.send({Kind::RspBasis, {{"round", id}, {"alpha", *alpha}}});
            const Message o = expect(Kind::RspOutcome);
            if (wire::get<std::uint64_t>(o.body, "round") != id) throw RemoteError("order", "preparation round mismatch");
            const auto b = wire::get<std::vector<std::uint8_t>>(o.body, "b");
            if (b.size() != alpha->size()) throw RemoteError("schema", "outcome length differs from alpha");
            rounds.push_back(id);
            return recover_quarter(f, y, *alpha, b);
        }
        throw std::runtime_error("no trapdoor admitted the requested parity");
    }

    /// Client half of incremental keygen: new HE levels, four prepared qubits per gadget, and the encrypted descriptions.
    void extend_remote(QheKeys& keys, std::size_t extra, Rng& rng) {
        ClientSecret& c = keys.client;
        json evks = json::array(), gadgets = json::array();
        for (std::size_t i = 0; i < extra; ++i) {
            const auto level = static_cast<std::uint32_t>(c.sks.size());
            he::KeyTriple t = he::he_keygen(c.kappa, rng, level, c.options.backend);
            const he::SecretKey& sk_i = c.sks.back();
            const std::uint64_t nonce = rng();
            GadgetSecret sec;
            sec.k = static_cast<std::uint8_t>(sk_i.pad_bit(nonce));
            const auto par = slot_parities(sec.k);
            std::array<int, 4> quarters{};
            std::vector<std::uint64_t> rounds;
            json qubits = json::array();
            for (std::size_t s = 0; s < 4; ++s) quarters[s] = prepare_qubit(par[s], rng, rounds, qubits);
            ch_.send({Kind::CoupleInstr, {{"level", level - 1}, {"rounds", rounds}, {"qubits", qubits}}});
            for (std::size_t j = 0; j < 2; ++j) sec.pairs[j] = pair_pads_from_quarters(quarters[2 * j], quarters[2 * j + 1]);
            gadgets.push_back(wire::gadget_classical(encrypt_gadget_classical(sec, nonce, sk_i, t.pk, rng)));
            evks.push_back(wire::eval_key(t.evk));
            c.sks.push_back(t.sk);
            c.pks.push_back(t.pk);
            c.gadget_secrets.push_back(sec);
        }
        ch_.send({Kind::GadgetClassical, {{"evks", evks}, {"gadgets", gadgets}}});
        ++top_ups_;
    }

    Channel& ch_;
    DelegatedClient client_;
    std::uint64_t next_round_ = 0;
    std::size_t top_ups_ = 0;
};

/// Client side of a delegated training session over an established channel.
inline TrainResult run_client(Channel& ch, const LabeledDataset& data, const TrainConfig& cfg, const DelegatedOptions& opt, std::uint64_t crypto_seed,
                              const EpsilonNet* net = nullptr) {
    RemoteClient rc(ch, opt, crypto_seed, net);
    rc.handshake();
    TrainResult r = train(data, cfg, rc, [&](const ShadowModel& m) { rc.publish(m); });
    rc.finish();
    return r;
}

/// Both roles in one process over an in-memory pipe; the server runs on its own thread.
template <class Fn>
auto with_inproc_server(std::uint64_t server_seed, Fn&& client_fn, ServerSession* observe = nullptr) {
    auto [cs, ss] = memory_pair();
    std::thread server([s = std::move(ss), server_seed, observe]() mutable {
        Channel ch(*s, Direction::to_server);
        try {
            serve_session(ch, server_seed, observe);
        } catch (const std::exception&) {
        }
    });
    Channel ch(*cs, Direction::to_client);
    struct Joiner {
        std::thread& t;
        MemoryStream& s;
        ~Joiner() {
            s.close();
            t.join();
        }
    } joiner{server, *cs};
    return client_fn(ch);
}

/// Client over TCP against a server listening at `e`.
template <class Fn>
auto with_tcp_client(const Endpoint& e, Fn&& client_fn) {
    auto conn = tcp_connect(e, 40);
    Channel ch(*conn, Direction::to_client);
    return client_fn(ch);
}

}  // namespace dvqa::proto
