#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gazectl/controller.hpp"
#include "gazectl/error.hpp"
#include "gazectl/features.hpp"
#include "gazectl/io.hpp"

// Session protocol: newline-delimited JSON envelopes {type, seq, re?, payload} over TCP.
// See docs/session-protocol.md.

namespace gazectl {

inline constexpr int kProtocolVersion = 1;

struct ServeConfig {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 7788;
    /// Session clock speed-up; 1 paces ticks at the variant frame rate.
    double time_scale = 1.0;
    std::string record_dir = ".";
    ControllerPolicy policy;
    Normalization normalization;
};

namespace detail {

inline void send_all(int fd, const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
        const auto n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::IoError, std::string("send: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

/// True when the frames differ in anything but tick/time.
inline bool scene_changed(const SceneFrame& a, const SceneFrame& b) {
    return a.people2d != b.people2d || a.people3d != b.people3d || a.box_present != b.box_present;
}

}  // namespace detail

/// One client connection: parses envelopes, keeps the session clock, owns its controller.
class Session {
   public:
    using clock = std::chrono::steady_clock;
    static constexpr std::size_t kMaxLine = 1 << 20;

    Session(int fd, int id, const ServeConfig& cfg, const Predictor& prototype)
        : fd_(fd), id_(id), cfg_(cfg), ctl_(prototype.variant(), cfg.policy, prototype.clone(), cfg.normalization) {
        fps_ = default_fps(ctl_.variant());
    }

    ~Session() {
        if (fd_ >= 0) ::close(fd_);
    }

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    void run(const std::atomic<bool>& stop) {
        const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / fps_ / cfg_.time_scale));
        std::string buf;
        char chunk[4096];
        try {
            while (!stop.load()) {
                int timeout_ms = 100;
                if (held_) {
                    const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_tick_ - clock::now()).count();
                    timeout_ms = static_cast<int>(std::clamp<long long>(wait, 0, 100));
                }
                pollfd p{fd_, POLLIN, 0};
                const int r = ::poll(&p, 1, timeout_ms);
                if (r < 0 && errno != EINTR) break;
                if (r > 0) {
                    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
                    if (n <= 0) break;
                    buf.append(chunk, static_cast<std::size_t>(n));
                    std::size_t nl;
                    while ((nl = buf.find('\n')) != std::string::npos) {
                        std::string line = buf.substr(0, nl);
                        buf.erase(0, nl + 1);
                        if (!line.empty() && line.back() == '\r') line.pop_back();
                        if (!line.empty()) handle_line(line);
                    }
                    if (buf.size() > kMaxLine) {
                        reply("error", std::nullopt, {{"code", "SchemaError"}, {"message", "message exceeds 1 MiB"}});
                        break;
                    }
                }
                if (!held_) continue;
                const auto now = clock::now();
                // Zero-order hold: the clock keeps running on the last scene.
                if (now - next_tick_ > std::chrono::seconds(1)) next_tick_ = now;
                while (clock::now() >= next_tick_) {
                    tick();
                    next_tick_ += period;
                }
            }
        } catch (const Error&) {
            // peer went away mid-send
        }
    }

   private:
    void reply(const std::string& type, std::optional<std::int64_t> re, nlohmann::json payload) {
        nlohmann::json env = {{"type", type}, {"seq", ++seq_out_}, {"re", re ? nlohmann::json(*re) : nlohmann::json(nullptr)},
                              {"payload", std::move(payload)}};
        detail::send_all(fd_, env.dump() + "\n");
    }

    void error(std::optional<std::int64_t> re, ErrorCode code, const std::string& message) {
        reply("error", re, {{"code", std::string(to_string(code))}, {"message", message}});
    }

    nlohmann::json ready_payload() const {
        return {{"protocol_version", kProtocolVersion},
                {"session", id_},
                {"variant", to_string(ctl_.variant())},
                {"m", ctl_.policy().m},
                {"labels", label_names(ctl_.variant())},
                {"tick_s", 1.0 / fps_},
                {"predictor", ctl_.predictor().describe()},
                {"policy", to_json(ctl_.policy())},
                {"recording", recording_}};
    }

    void handle_line(const std::string& line) {
        nlohmann::json msg;
        try {
            msg = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            error(std::nullopt, ErrorCode::SchemaError, std::string("malformed JSON: ") + e.what());
            return;
        }
        if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string() || !msg.contains("seq") || !msg["seq"].is_number_integer()) {
            error(std::nullopt, ErrorCode::SchemaError, "envelope needs string 'type' and integer 'seq'");
            return;
        }
        const auto seq = msg["seq"].get<std::int64_t>();
        if (seq_in_ && seq <= *seq_in_) {
            error(seq, ErrorCode::SchemaError, "seq " + std::to_string(seq) + " does not increase past " + std::to_string(*seq_in_));
            return;
        }
        seq_in_ = seq;
        const auto type = msg["type"].get<std::string>();
        const nlohmann::json payload = msg.contains("payload") && msg["payload"].is_object() ? msg["payload"] : nlohmann::json::object();
        try {
            if (type == "hello") {
                if (payload.contains("variant") && parse_variant(payload["variant"].get<std::string>()) != ctl_.variant())
                    throw Error(ErrorCode::VariantMismatch, "server runs the " + to_string(ctl_.variant()) + " variant");
                hello_ = true;
                reply("ready", seq, ready_payload());
                return;
            }
            if (!hello_) throw Error(ErrorCode::SchemaError, "send hello first");
            if (type == "scene_update") {
                scene_update(seq, payload);
            } else if (type == "set_policy") {
                ctl_.set_policy(policy_from_json(payload, ctl_.policy()));
                reply("ready", seq, ready_payload());
            } else if (type == "start_record") {
                recording_ = true;
                record_path_ = payload.value("path", std::string());
                recorded_.clear();
                reply("ready", seq, ready_payload());
            } else if (type == "stop_record") {
                if (!recording_) throw Error(ErrorCode::SchemaError, "not recording");
                recording_ = false;
                reply("record_saved", seq, save_recording());
            } else {
                error(seq, ErrorCode::SchemaError, "unknown message type '" + type + "'");
            }
        } catch (const Error& e) {
            error(seq, e.code(), e.message());
        } catch (const nlohmann::json::exception& e) {
            error(seq, ErrorCode::SchemaError, e.what());
        }
    }

    void scene_update(std::int64_t seq, const nlohmann::json& payload) {
        auto frame = frame_from_json(payload, ctl_.variant());
        if (held_ && detail::scene_changed(*held_, frame)) ++scene_counter_;
        frame.situation_id = payload.contains("situation_id") ? payload["situation_id"].get<int>() : scene_counter_;
        operator_label_.reset();
        if (payload.contains("gaze") && !payload["gaze"].is_null()) {
            const int g = payload["gaze"].get<int>();
            if (g < 0 || g >= label_count(ctl_.variant())) throw Error(ErrorCode::OutOfRange, "gaze label " + std::to_string(g));
            operator_label_ = g;
        }
        if (!held_) next_tick_ = clock::now();
        held_ = frame;
        scene_seq_ = seq;
    }

    void tick() {
        SceneFrame f = *held_;
        f.tick = tick_;
        f.t_s = static_cast<double>(tick_) / fps_;
        const auto cmd = ctl_.step(f, 1.0 / fps_);
        ++tick_;
        auto payload = to_json(cmd);
        payload["target_name"] = cmd.target ? nlohmann::json(label_names(ctl_.variant())[static_cast<std::size_t>(*cmd.target)]) : nlohmann::json(nullptr);
        reply("gaze", scene_seq_, std::move(payload));
        if (recording_) {
            LabeledFrame lf;
            lf.tick = f.tick;
            lf.situation_id = f.situation_id;
            lf.features = encode_frame(f, true, cfg_.normalization);
            lf.label = operator_label_ ? *operator_label_ : cmd.target.value_or(kNoise);
            recorded_.push_back(std::move(lf));
            operator_labels_ += operator_label_ ? 1 : 0;
        }
    }

    nlohmann::json save_recording() {
        const int m = ctl_.policy().m;
        Dataset d(make_meta(ctl_.variant(), m, 0, "session"));
        d.meta().normalization = cfg_.normalization;
        const std::size_t machine = recorded_.size() - static_cast<std::size_t>(operator_labels_);
        d.meta().provenance = nlohmann::json{{"labels", operator_labels_ == 0 ? "controller" : machine == 0 ? "operator" : "mixed"},
                                             {"machine_generated_frames", machine},
                                             {"operator_frames", operator_labels_},
                                             {"predictor", ctl_.predictor().describe()}}
                                  .dump();
        if (recorded_.size() > static_cast<std::size_t>(m)) append_windows(d, recorded_);
        std::filesystem::path path = record_path_.empty()
                                         ? std::filesystem::path(cfg_.record_dir) /
                                               ("session-" + std::to_string(id_) + "-" + std::to_string(++records_) + ".jsonl")
                                         : std::filesystem::path(record_path_);
        save_dataset(path.string(), d);
        nlohmann::json out = {{"path", path.string()}, {"frames", recorded_.size()}, {"examples", d.size()}};
        recorded_.clear();
        operator_labels_ = 0;
        return out;
    }

    int fd_;
    int id_;
    const ServeConfig& cfg_;
    Controller ctl_;
    int fps_ = 24;
    std::int64_t seq_out_ = 0;
    std::optional<std::int64_t> seq_in_;
    std::int64_t scene_seq_ = 0;
    bool hello_ = false;
    std::optional<SceneFrame> held_;
    std::optional<Label> operator_label_;
    clock::time_point next_tick_{};
    std::int64_t tick_ = 0;
    int scene_counter_ = 0;
    bool recording_ = false;
    std::string record_path_;
    std::vector<LabeledFrame> recorded_;
    int operator_labels_ = 0;
    int records_ = 0;
};

/// Listener plus one worker thread per session. Each session controls a clone of the prototype predictor.
class Server {
   public:
    Server(ServeConfig cfg, std::unique_ptr<Predictor> prototype) : cfg_(std::move(cfg)), prototype_(std::move(prototype)) {
        if (!prototype_) throw Error(ErrorCode::InvalidConfig, "server needs a predictor");
        if (!(cfg_.time_scale > 0)) throw Error(ErrorCode::InvalidConfig, "time_scale must be > 0");
        const int need = prototype_->window_length();
        if (need != 0) cfg_.policy.m = need;
        cfg_.policy.validate();
    }

    ~Server() { stop(); }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts accepting; returns the bound port.
    int start() {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw Error(ErrorCode::IoError, std::string("socket: ") + std::strerror(errno));
        const int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(cfg_.port));
        if (::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr) != 1) {
            close_listener();
            throw Error(ErrorCode::InvalidConfig, "bad host " + cfg_.host);
        }
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
            const int err = errno;
            close_listener();
            if (err == EADDRINUSE) throw Error(ErrorCode::PortBusy, "port " + std::to_string(cfg_.port) + " is in use");
            throw Error(ErrorCode::IoError, std::string("bind: ") + std::strerror(err));
        }
        if (::listen(listen_fd_, 16) < 0) {
            close_listener();
            throw Error(ErrorCode::IoError, std::string("listen: ") + std::strerror(errno));
        }
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        stop_ = false;
        acceptor_ = std::thread([this] { accept_loop(); });
        return port_;
    }

    int port() const { return port_; }

    void stop() {
        stop_ = true;
        if (acceptor_.joinable()) acceptor_.join();
        std::lock_guard lock(mu_);
        for (auto& w : workers_)
            if (w.joinable()) w.join();
        workers_.clear();
        close_listener();
    }

    /// Blocks until stop() is called from another thread or a signal handler flips `flag`.
    void wait(const std::atomic<bool>& flag) const {
        while (!flag.load() && !stop_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }

   private:
    void close_listener() {
        if (listen_fd_ >= 0) ::close(listen_fd_);
        listen_fd_ = -1;
    }

    void accept_loop() {
        int next_id = 0;
        while (!stop_.load()) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 100) <= 0) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            const int id = ++next_id;
            std::lock_guard lock(mu_);
            workers_.emplace_back([this, fd, id] {
                std::unique_ptr<Session> s;
                try {
                    s = std::make_unique<Session>(fd, id, cfg_, *prototype_);
                } catch (const std::exception&) {
                    ::close(fd);
                    return;
                }
                try {
                    s->run(stop_);
                } catch (const std::exception&) {
                    // the session's destructor closes the socket
                }
            });
        }
    }

    ServeConfig cfg_;
    std::unique_ptr<Predictor> prototype_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stop_{false};
    std::thread acceptor_;
    std::mutex mu_;
    std::list<std::thread> workers_;
};

}  // namespace gazectl
