#pragma once

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "epstory/embedding.hpp"
#include "epstory/error.hpp"
#include "epstory/text.hpp"

namespace epstory {

/// Newline-framed duplex byte stream.
class LineTransport {
public:
    virtual ~LineTransport() = default;

    /// Writes `line` plus LF. Throws IoError on failure.
    virtual void send_line(std::string_view line) = 0;

    /// Next line without its LF; nullopt on timeout. Throws IoError on EOF.
    virtual std::optional<std::string> receive_line(int timeout_ms) = 0;
};

namespace detail {

class FdChannel : public LineTransport {
public:
    void send_line(std::string_view line) override {
        std::string frame(line);
        frame.push_back('\n');
        std::size_t off = 0;
        while (off < frame.size()) {
            ssize_t n = send_or_write(write_fd_, frame.data() + off, frame.size() - off, is_socket_);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw IoError(std::string("write failed: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::optional<std::string> receive_line(int timeout_ms) override {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
        while (true) {
            auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 deadline - std::chrono::steady_clock::now())
                                 .count();
            if (remaining <= 0) return std::nullopt;
            pollfd pfd{read_fd_, POLLIN, 0};
            int rc = ::poll(&pfd, 1, static_cast<int>(remaining));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw IoError(std::string("poll failed: ") + std::strerror(errno));
            }
            if (rc == 0) return std::nullopt;
            char chunk[65536];
            ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw IoError(std::string("read failed: ") + std::strerror(errno));
            }
            if (n == 0) throw IoError("connection closed by peer");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

protected:
    static ssize_t send_or_write(int fd, const char* data, std::size_t len, bool socket) {
        return socket ? ::send(fd, data, len, MSG_NOSIGNAL) : ::write(fd, data, len);
    }

    int read_fd_ = -1;
    int write_fd_ = -1;
    bool is_socket_ = false;
    std::string buffer_;
};

}  // namespace detail

class TcpTransport final : public detail::FdChannel {
public:
    TcpTransport(const std::string& host, const std::string& port, int connect_timeout_ms) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
            throw IoError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
        std::string last_error = "no addresses";
        for (auto* ai = res; ai; ai = ai->ai_next) {
            int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (connect_with_timeout(fd, ai, connect_timeout_ms, last_error)) {
                read_fd_ = write_fd_ = fd;
                is_socket_ = true;
                return;
            }
            ::close(fd);
        }
        throw IoError("cannot connect to " + host + ":" + port + ": " + last_error);
    }

    ~TcpTransport() override {
        if (read_fd_ >= 0) ::close(read_fd_);
    }

private:
    static bool connect_with_timeout(int fd, const addrinfo* ai, int timeout_ms, std::string& error) {
        int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc < 0 && errno != EINPROGRESS) {
            error = std::strerror(errno);
            return false;
        }
        if (rc < 0) {
            pollfd pfd{fd, POLLOUT, 0};
            rc = ::poll(&pfd, 1, timeout_ms);
            if (rc <= 0) {
                error = rc == 0 ? "connect timed out" : std::strerror(errno);
                return false;
            }
            int so_error = 0;
            socklen_t len = sizeof so_error;
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &so_error, &len);
            if (so_error != 0) {
                error = std::strerror(so_error);
                return false;
            }
        }
        ::fcntl(fd, F_SETFL, flags);
        return true;
    }
};

/// Runs a command and talks to it over its stdin/stdout.
class ProcessTransport final : public detail::FdChannel {
public:
    explicit ProcessTransport(const std::vector<std::string>& argv) {
        if (argv.empty()) throw ArgumentError("empty command for process transport");
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0) throw IoError("pipe failed");
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw IoError("pipe failed");
        }
        // Build argv before fork; only async-signal-safe calls in the child.
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        pid_ = ::fork();
        if (pid_ < 0) throw IoError("fork failed");
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execvp(args[0], args.data());
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        ::signal(SIGPIPE, SIG_IGN);
    }

    ~ProcessTransport() override {
        if (write_fd_ >= 0) ::close(write_fd_);
        if (read_fd_ >= 0) ::close(read_fd_);
        if (pid_ > 0) {
            int status = 0;
            ::waitpid(pid_, &status, 0);
        }
    }

private:
    pid_t pid_ = -1;
};

struct RemoteEndpoint {
    enum class Kind { Tcp, Process } kind = Kind::Tcp;
    std::string host;
    std::string port;
    std::vector<std::string> argv;
};

/// `tcp://host:port` or `exec:program arg...`.
inline RemoteEndpoint parse_endpoint(std::string_view spec) {
    RemoteEndpoint ep;
    if (spec.starts_with("tcp://")) {
        auto rest = spec.substr(6);
        auto colon = rest.rfind(':');
        if (colon == std::string_view::npos || colon == 0 || colon + 1 == rest.size())
            throw ArgumentError("endpoint must be tcp://host:port, got " + std::string(spec));
        ep.kind = RemoteEndpoint::Kind::Tcp;
        ep.host = std::string(rest.substr(0, colon));
        ep.port = std::string(rest.substr(colon + 1));
        return ep;
    }
    if (spec.starts_with("exec:")) {
        ep.kind = RemoteEndpoint::Kind::Process;
        for (auto t : tokenize(spec.substr(5))) ep.argv.emplace_back(t);
        if (ep.argv.empty()) throw ArgumentError("exec endpoint needs a command");
        return ep;
    }
    throw ArgumentError("unsupported endpoint " + std::string(spec));
}

inline std::unique_ptr<LineTransport> connect_endpoint(const RemoteEndpoint& ep, int timeout_ms) {
    if (ep.kind == RemoteEndpoint::Kind::Tcp) return std::make_unique<TcpTransport>(ep.host, ep.port, timeout_ms);
    return std::make_unique<ProcessTransport>(ep.argv);
}

struct RemoteOptions {
    std::string endpoint;
    std::size_t dimension = 0;  // 0: adopt the first response's dimension
    std::size_t batch_size = 16;
    std::size_t max_in_flight = 4;
    int timeout_ms = 30000;
    int retries = 0;
};

/// Client for the line-delimited JSON embedding protocol:
///
///     request  {"id": int, "texts": [string, ...]}
///     response {"id": int, "dim": int, "vectors": [[float, ...], ...]}
///              {"id": int, "error": string}
///
/// Requests are pipelined up to `max_in_flight`; responses may arrive in any
/// order and are reassembled by id.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    explicit RemoteEmbedder(RemoteOptions options, std::unique_ptr<LineTransport> transport = nullptr)
        : options_(std::move(options)), transport_(std::move(transport)), dimension_(options_.dimension) {
        if (options_.batch_size < 1) throw ArgumentError("batch_size must be at least 1");
        if (options_.max_in_flight < 1) options_.max_in_flight = 1;
    }

    std::string id() const override { return "remote:" + options_.endpoint; }
    std::size_t dimension() const override { return dimension_; }

    std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) override {
        std::vector<std::vector<double>> out(texts.size());
        std::vector<bool> filled(texts.size(), false);
        int attempts_left = options_.retries;
        while (true) {
            try {
                run_batches(texts, out, filled);
                return out;
            } catch (const TransportError&) {
                transport_.reset();
                if (attempts_left-- <= 0) throw;
            }
        }
    }

private:
    struct Pending {
        std::size_t first;
        std::size_t count;
    };

    void ensure_connected(std::size_t window_index) {
        if (transport_) return;
        try {
            transport_ = connect_endpoint(parse_endpoint(options_.endpoint), options_.timeout_ms);
        } catch (const ArgumentError&) {
            throw;
        } catch (const IoError& e) {
            throw TransportError(window_index, e.what());
        }
    }

    void run_batches(std::span<const std::string> texts, std::vector<std::vector<double>>& out,
                     std::vector<bool>& filled) {
        std::vector<Pending> todo;
        for (std::size_t first = 0; first < texts.size(); first += options_.batch_size) {
            std::size_t count = std::min(options_.batch_size, texts.size() - first);
            bool done = true;
            for (std::size_t k = first; k < first + count; ++k) done = done && filled[k];
            if (!done) todo.push_back({first, count});
        }
        std::map<std::int64_t, Pending> in_flight;
        std::size_t next = 0;
        while (next < todo.size() || !in_flight.empty()) {
            while (next < todo.size() && in_flight.size() < options_.max_in_flight) {
                const auto& batch = todo[next++];
                ensure_connected(batch.first);
                ordered_json req;
                req["id"] = next_id_;
                ordered_json arr = ordered_json::array();
                for (std::size_t k = batch.first; k < batch.first + batch.count; ++k) arr.push_back(texts[k]);
                req["texts"] = std::move(arr);
                try {
                    transport_->send_line(req.dump());
                } catch (const IoError& e) {
                    throw TransportError(batch.first, e.what());
                }
                in_flight.emplace(next_id_++, batch);
            }
            const std::size_t waiting_on = in_flight.begin()->second.first;
            std::optional<std::string> line;
            try {
                line = transport_->receive_line(options_.timeout_ms);
            } catch (const IoError& e) {
                throw TransportError(waiting_on, e.what());
            }
            if (!line) throw TransportError(waiting_on, "timed out waiting for response");
            accept_response(*line, in_flight, out, filled);
        }
    }

    void accept_response(const std::string& line, std::map<std::int64_t, Pending>& in_flight,
                         std::vector<std::vector<double>>& out, std::vector<bool>& filled) {
        const std::size_t fallback = in_flight.begin()->second.first;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw ProtocolError(fallback, "malformed response line");
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer())
            throw ProtocolError(fallback, "response without integer id");
        auto it = in_flight.find(j["id"].get<std::int64_t>());
        if (it == in_flight.end()) throw ProtocolError(fallback, "response for unknown request id");
        const Pending batch = it->second;
        in_flight.erase(it);
        if (j.contains("error"))
            throw ProtocolError(batch.first, "service error: " + j["error"].dump());
        if (!j.contains("dim") || !j["dim"].is_number_integer() || j["dim"].get<std::int64_t>() < 1)
            throw ProtocolError(batch.first, "response without valid dim");
        auto dim = j["dim"].get<std::size_t>();
        if (dimension_ == 0) dimension_ = dim;
        if (dim != dimension_)
            throw ProtocolError(batch.first, "dimension " + std::to_string(dim) + " != expected " +
                                                 std::to_string(dimension_));
        if (!j.contains("vectors") || !j["vectors"].is_array() || j["vectors"].size() != batch.count)
            throw ProtocolError(batch.first, "vectors must parallel the request texts");
        for (std::size_t k = 0; k < batch.count; ++k) {
            const auto& jv = j["vectors"][k];
            const std::size_t window = batch.first + k;
            if (!jv.is_array()) throw ProtocolError(window, "vector must be an array");
            std::vector<double> v;
            v.reserve(jv.size());
            for (const auto& x : jv) {
                if (!x.is_number()) throw InvalidVectorError(window, "non-numeric component");
                v.push_back(x.get<double>());
            }
            check_embedding_vector(v, dimension_, window);
            if (filled[window]) throw ProtocolError(window, "vector delivered twice");
            out[window] = std::move(v);
            filled[window] = true;
        }
    }

    RemoteOptions options_;
    std::unique_ptr<LineTransport> transport_;
    std::size_t dimension_;
    std::int64_t next_id_ = 0;
};

}  // namespace epstory
