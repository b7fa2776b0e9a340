#pragma once

// Test-side helpers: brute-force oracles, random input generators, a fake
// embedding server and a CLI runner. Nothing here calls into the library's
// metric or story code.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "epstory/rng.hpp"
#include "epstory/telemetry.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using epstory::EventClass;
using epstory::RawEvent;
using epstory::Rng;
using epstory::Timestamp;

// ---------------------------------------------------------------------------
// Files and processes

class TempDir {
public:
    TempDir() {
        std::string tpl = (fs::temp_directory_path() / "epstory-test-XXXXXX").string();
        if (!::mkdtemp(tpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'')
            q += "'\\''";
        else
            q.push_back(c);
    }
    return q + "'";
}

/// Runs the epstory binary with `args`, capturing stdout and stderr.
inline CliResult run_cli(const std::vector<std::string>& args) {
    TempDir scratch;
    std::string cmd = shell_quote(EPSTORY_CLI);
    for (const auto& a : args) cmd += " " + shell_quote(a);
    cmd += " >" + shell_quote((scratch / "out").string()) + " 2>" + shell_quote((scratch / "err").string());
    CliResult r;
    int status = std::system(cmd.c_str());
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(scratch / "out");
    r.err = slurp(scratch / "err");
    return r;
}

inline fs::path source_dir() { return fs::path(EPSTORY_SOURCE_DIR); }

// ---------------------------------------------------------------------------
// Metric oracles: direct definitions, no sorting tricks.

struct Scored {
    double score;
    bool positive;
};

/// Probability that a random positive outscores a random negative, ties 1/2.
inline double auc_by_pairs(const std::vector<Scored>& xs) {
    double wins = 0;
    double pairs = 0;
    for (const auto& p : xs) {
        if (!p.positive) continue;
        for (const auto& n : xs) {
            if (n.positive) continue;
            pairs += 1;
            if (p.score > n.score)
                wins += 1;
            else if (p.score == n.score)
                wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Tries every observed score (and +inf) as a threshold `score >= t`.
inline double tpr_by_threshold_search(const std::vector<Scored>& xs, double fpr_budget) {
    double pos = 0, neg = 0;
    for (const auto& x : xs) (x.positive ? pos : neg) += 1;
    double best = 0.0;
    for (const auto& cand : xs) {
        double tp = 0, fp = 0;
        for (const auto& x : xs)
            if (x.score >= cand.score) (x.positive ? tp : fp) += 1;
        if (fp / neg <= fpr_budget) best = std::max(best, tp / pos);
    }
    return best;
}

/// Random scored set with at least one sample per class. Scores are drawn
/// from a small grid half the time so that ties are common.
inline std::vector<Scored> random_scored_set(Rng& rng, std::size_t max_n = 200) {
    const std::size_t n = 2 + rng.index(max_n - 1);
    const bool coarse = rng.bernoulli(0.5);
    const double bias = rng.uniform(-1.0, 1.0);
    std::vector<Scored> xs;
    for (std::size_t i = 0; i < n; ++i) {
        bool pos = rng.bernoulli(0.5);
        double s = coarse ? static_cast<double>(rng.uniform_int(0, 9)) / 10.0 : rng.uniform() + (pos ? bias * 0.3 : 0.0);
        xs.push_back({s, pos});
    }
    xs[0].positive = true;
    xs[1].positive = false;
    return xs;
}

// ---------------------------------------------------------------------------
// Random telemetry for story properties

struct EventGenOptions {
    std::size_t max_events = 60;
    /// Events fall into this many distinct seconds, so duplicates are common.
    std::int64_t seconds = 12;
};

inline RawEvent random_event(Rng& rng, std::size_t id, Timestamp base, const EventGenOptions& opt = {}) {
    static const std::vector<std::string> users{
        "",          "alice",          "bob@corp.example",         "svc-backup-operator",
        "<USER_1>",  "CORP\\administrator", "u101@corp.example",
    };
    static const std::vector<std::string> types{"ProcessCreate", "FileCreate",  "RegistrySet", "NetworkConnect",
                                                "Heartbeat",     "ImageLoad",   "LogonAttempt",
                                                "SuspiciousCommandLine", "UnusualLogonTime"};
    static const std::vector<std::string> sources{
        "",
        "cmd.exe",
        "C:\\Windows\\System32\\svchost.exe",
        "C:\\Program Files\\Google\\Chrome\\chrome.exe",
        "powershell.exe",
        "<PROC_2> lookalike",
    };
    static const std::vector<std::pair<std::string, std::vector<std::string>>> detail_pool{
        {"path", {"C:\\Users\\alice\\Documents\\report.docx", "C:\\Temp\\a.bat", "C:\\Users\\alice\\Documents"}},
        {"image", {"C:\\Windows\\System32\\whoami.exe", "net.exe"}},
        {"key", {"HKLM\\SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run", "HKCU\\Env"}},
        {"target_user", {"bob@corp.example", "administrator@corp.example"}},
        {"remote_host", {"fileserver01.corp.example", "10.0.0.5"}},
        {"command_line", {"whoami /all", "net group \"Domain Admins\" /domain", "line one\nline two"}},
        {"note", {"mentions <FILE_1> literally", "plain"}},
    };

    RawEvent e;
    e.event_id = "e" + std::to_string(id);
    e.machine_id = "m1";
    e.timestamp = Timestamp{base.ms + rng.uniform_int(0, opt.seconds - 1) * 1000 + rng.uniform_int(0, 999)};
    int cls = static_cast<int>(rng.uniform_int(0, 5));
    e.event_class = cls < 4 ? EventClass::Telemetry : cls == 4 ? EventClass::SecurityObservation : EventClass::MlObservation;
    e.event_type = rng.pick(types);
    e.user = rng.pick(users);
    e.source = rng.pick(sources);
    const std::size_t n_details = rng.index(4);
    for (std::size_t k = 0; k < n_details; ++k) {
        const auto& [key, values] = rng.pick(detail_pool);
        // Details are a JSON object on the wire, so keys are unique.
        const bool seen = std::any_of(e.details.begin(), e.details.end(), [&](const auto& d) { return d.first == key; });
        if (!seen) e.details.emplace_back(key, rng.pick(values));
    }
    if (e.event_class == EventClass::MlObservation) e.score = rng.uniform();
    return e;
}

inline std::vector<RawEvent> random_events(Rng& rng, const EventGenOptions& opt = {}) {
    const Timestamp base{1'704'067'200'000};  // 2024-01-01T00:00:00Z
    std::vector<RawEvent> events;
    const std::size_t n = rng.index(opt.max_events + 1);
    for (std::size_t i = 0; i < n; ++i) events.push_back(random_event(rng, i, base, opt));
    return events;
}

// ---------------------------------------------------------------------------
// Fake line-protocol server on 127.0.0.1

/// Accepts one connection at a time and answers every request line with the
/// lines returned by `handler`. Every line read and written is recorded.
class FakeServer {
public:
    using Handler = std::function<std::vector<std::string>(const std::string& request)>;

    explicit FakeServer(Handler handler) : handler_(std::move(handler)) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 4) != 0)
            throw std::runtime_error("fake server: bind/listen failed");
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        thread_ = std::thread([this] { serve(); });
    }

    ~FakeServer() {
        stop_ = true;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        thread_.join();
    }

    std::string endpoint() const { return "tcp://127.0.0.1:" + std::to_string(port_); }

    /// "> line" for received, "< line" for sent.
    std::vector<std::string> transcript() const {
        std::lock_guard lock(mu_);
        return transcript_;
    }

    int connections() const { return connections_; }

private:
    void serve() {
        while (!stop_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) return;
            ++connections_;
            std::string buf;
            char chunk[4096];
            bool open = true;
            while (open) {
                ssize_t n = ::read(fd, chunk, sizeof chunk);
                if (n <= 0) break;
                buf.append(chunk, static_cast<std::size_t>(n));
                std::size_t nl;
                while ((nl = buf.find('\n')) != std::string::npos) {
                    std::string line = buf.substr(0, nl);
                    buf.erase(0, nl + 1);
                    record("> " + line);
                    auto replies = handler_(line);
                    if (replies.size() == 1 && replies[0] == kHangUp) {
                        open = false;
                        break;
                    }
                    for (const auto& r : replies) {
                        record("< " + r);
                        std::string frame = r + "\n";
                        if (::write(fd, frame.data(), frame.size()) < 0) open = false;
                    }
                }
            }
            ::close(fd);
        }
    }

    void record(std::string s) {
        std::lock_guard lock(mu_);
        transcript_.push_back(std::move(s));
    }

public:
    /// A handler returning exactly this closes the connection without replying.
    static inline const std::string kHangUp = "\x01hangup";

private:
    Handler handler_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stop_{false};
    std::atomic<int> connections_{0};
    std::thread thread_;
    mutable std::mutex mu_;
    std::vector<std::string> transcript_;
};

/// A loopback port with nothing listening on it.
inline int unused_port() {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    int port = ntohs(addr.sin_port);
    ::close(fd);
    return port;
}

}  // namespace testsupport
