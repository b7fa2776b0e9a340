#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "epstory/error.hpp"
#include "epstory/hash.hpp"
#include "epstory/rng.hpp"
#include "epstory/telemetry.hpp"

namespace epstory {

// Synthetic labeled telemetry: benign sessions plus simulated hands-on-keyboard
// attack sessions that follow an ordered playbook. Every sample is generated
// from its own seeded stream, so samples can be produced in any order or in
// parallel with identical results.

enum class GeneratorMode {
    /// Playbook events appear only in attack samples.
    Standard,
    /// Playbook events appear in every sample; attack samples run them as one
    /// burst in playbook order, benign samples as separated clusters in any
    /// other order. Only event order tells the classes apart.
    OrderSignal,
};

inline std::string_view to_string(GeneratorMode m) { return m == GeneratorMode::Standard ? "standard" : "order_signal"; }

struct RateRange {
    double min_per_hour = 0;
    double max_per_hour = 0;
};

struct SecondsRange {
    double min = 0;
    double max = 0;
};

struct GeneratorConfig {
    std::uint64_t seed = 1;
    std::size_t n_benign = 535;
    std::size_t n_hok = 535;
    double label_noise_rate = 0.02;
    Timestamp time_range_start = *parse_rfc3339("2024-01-01T00:00:00Z");
    Timestamp time_range_end = *parse_rfc3339("2024-10-01T00:00:00Z");
    double timeframe_hours = 6.0;
    double train_fraction = 800.0 / 1070.0;
    GeneratorMode mode = GeneratorMode::Standard;
    /// Background activity per event type (events per hour, drawn per sample).
    std::map<std::string, RateRange> benign_profile{
        {"ProcessCreate", {160, 240}},        {"FileCreate", {90, 150}},
        {"FileDelete", {35, 65}},             {"FileMove", {10, 20}},
        {"RegistrySet", {70, 110}},           {"LogonAttempt", {6, 14}},
        {"NetworkConnect", {90, 150}},        {"Heartbeat", {60, 60}},
        {"ImageLoad", {120, 180}},            {"UnusualLogonTime", {0.1, 0.5}},
        {"NewServiceInstalled", {0.1, 0.4}},  {"SuspiciousCommandLine", {0.5, 2.0}},
        {"AnomalousRegistryActivity", {0.3, 1.0}},
    };
    /// Ordered attack phases, drawn from the built-in phase library.
    std::vector<std::string> playbook{"initial_access", "discovery", "credential_access", "lateral_movement"};
    SecondsRange step_gap_seconds{2, 20};
    SecondsRange phase_gap_seconds{10, 90};
    /// Order-signal mode only: minimum spacing between benign playbook
    /// clusters, and the gap between consecutive events inside one.
    double cluster_separation_seconds = 1800;
    SecondsRange cluster_step_gap_seconds{30, 180};
    /// Probability that an attack sample is a slow session: playbook still in
    /// order, but its steps spaced like a benign cluster.
    double slow_session_probability = 0.0;
    /// Rate multipliers applied to attack samples' background activity.
    std::map<std::string, double> hok_background_boost;
    /// Probability that a process creation spawns same-second siblings.
    double burst_probability = 0.08;

    /// Order-signal preset: every sample carries the playbook phases; attacks
    /// run them as one tight ordered burst, benign machines as spread-out
    /// clusters in another order. Some attack sessions are slow and look
    /// spread out too.
    static GeneratorConfig order_signal_preset() {
        GeneratorConfig c;
        c.mode = GeneratorMode::OrderSignal;
        c.step_gap_seconds = {1, 2};
        c.phase_gap_seconds = {1, 3};
        c.cluster_step_gap_seconds = {90, 400};
        c.slow_session_probability = 0.3;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Playbook phase library

struct PlaybookStep {
    EventClass event_class = EventClass::Telemetry;
    std::string event_type;
    std::string source;
    /// Values may contain {user}, {admin}, {host}, {rand}, {b64}, {n}.
    DetailMap details;
    /// Substring of the rendered `key=value` details that identifies the
    /// phase; empty when the event type alone does.
    std::string marker;
    double score_min = 0;
    double score_max = 0;
};

struct PlaybookPhase {
    std::string name;
    std::vector<PlaybookStep> steps;
    std::size_t min_steps = 1;
    std::size_t max_steps = 1;
};

inline const std::vector<PlaybookPhase>& phase_library() {
    using EC = EventClass;
    static const std::vector<PlaybookPhase> library{
        {"initial_access",
         {
             {EC::Telemetry, "ProcessCreate", "WINWORD.EXE",
              {{"image", "C:\\Windows\\System32\\WindowsPowerShell\\v1.0\\powershell.exe"},
               {"cmdline", "powershell.exe -nop -w hidden -enc {b64}"}},
              "-enc ", 0, 0},
             {EC::MlObservation, "SuspiciousCommandLine", "powershell.exe",
              {{"cmdline", "powershell.exe -nop -w hidden -enc {b64}"}}, "-enc ", 0.80, 0.99},
             {EC::Telemetry, "FileCreate", "powershell.exe",
              {{"path", "C:\\Users\\{user}\\AppData\\Local\\Temp\\updsvc_{rand}.exe"}}, "updsvc_", 0, 0},
             {EC::Telemetry, "NetworkConnect", "powershell.exe",
              {{"remote_host", "cdn-{rand}.example-updates.net"}, {"remote_port", "443"}}, "example-updates.net", 0, 0},
         },
         3, 5},
        {"discovery",
         {
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "whoami /all"}}, "whoami", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "net group \"domain admins\" /domain"}},
              "net group", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "nltest /dclist:"}}, "nltest", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "ipconfig /all"}}, "ipconfig /all", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "systeminfo"}}, "systeminfo", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "net view /all"}}, "net view", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "quser"}}, "cmdline=quser", 0, 0},
             {EC::SecurityObservation, "ReconnaissanceCommands", "cmd.exe", {{"count", "{n}"}}, "", 0, 0},
         },
         6, 10},
        {"credential_access",
         {
             {EC::Telemetry, "ProcessCreate", "cmd.exe",
              {{"cmdline", "procdump64.exe -accepteula -ma lsass.exe C:\\Users\\Public\\l{rand}.dmp"}}, "lsass", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe",
              {{"cmdline", "rundll32.exe C:\\Windows\\System32\\comsvcs.dll, MiniDump {n} C:\\Users\\Public\\m.dmp full"}},
              "MiniDump", 0, 0},
             {EC::MlObservation, "CredentialDumping", "rundll32.exe", {{"target", "lsass.exe"}}, "", 0.85, 0.99},
             {EC::SecurityObservation, "MultipleFailedLogons", "lsass.exe",
              {{"target_user", "{admin}"}, {"attempts", "{n}"}}, "", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "reg save HKLM\\SAM C:\\Users\\Public\\sam.save"}},
              "reg save", 0, 0},
         },
         3, 6},
        {"lateral_movement",
         {
             {EC::Telemetry, "ProcessCreate", "cmd.exe", {{"cmdline", "psexec.exe \\\\{host} -accepteula -s cmd.exe"}},
              "psexec", 0, 0},
             {EC::Telemetry, "LogonAttempt", "lsass.exe",
              {{"target_user", "{admin}"}, {"logon_type", "3"}, {"target_host", "{host}"}, {"result", "success"}},
              "logon_type=3", 0, 0},
             {EC::SecurityObservation, "RemoteServiceCreation", "services.exe", {{"service_name", "PSEXESVC"}}, "", 0, 0},
             {EC::Telemetry, "NetworkConnect", "psexec.exe", {{"remote_host", "{host}"}, {"remote_port", "445"}},
              "remote_port=445", 0, 0},
             {EC::Telemetry, "ProcessCreate", "cmd.exe",
              {{"cmdline", "wmic /node:{host} process call create \"cmd.exe /c hostname\""}}, "wmic /node", 0, 0},
         },
         4, 7},
    };
    return library;
}

inline const PlaybookPhase& find_phase(std::string_view name) {
    for (const auto& p : phase_library())
        if (p.name == name) return p;
    throw DataError("unknown playbook phase '" + std::string(name) + "'");
}

inline const std::vector<std::string>& background_event_types() {
    static const std::vector<std::string> types{
        "ProcessCreate",    "FileCreate",       "FileDelete",          "FileMove",
        "RegistrySet",      "LogonAttempt",     "NetworkConnect",      "Heartbeat",
        "ImageLoad",        "UnusualLogonTime", "NewServiceInstalled", "SuspiciousCommandLine",
        "AnomalousRegistryActivity",
    };
    return types;
}

/// Throws DataError describing the first problem.
inline void validate(const GeneratorConfig& c) {
    if (c.n_benign + c.n_hok == 0) throw DataError("generator: no samples requested");
    if (!(c.label_noise_rate >= 0.0 && c.label_noise_rate < 1.0))
        throw DataError("generator: label_noise_rate must be in [0, 1)");
    if (!(c.timeframe_hours > 0)) throw DataError("generator: timeframe_hours must be positive");
    if (!(c.time_range_start < c.time_range_end)) throw DataError("generator: time range is empty");
    if (!(c.train_fraction >= 0.0 && c.train_fraction <= 1.0)) throw DataError("generator: train_fraction must be in [0, 1]");
    const double slot_ms = static_cast<double>(c.time_range_end.ms - c.time_range_start.ms) /
                           static_cast<double>(c.n_benign + c.n_hok);
    if (!(slot_ms > c.timeframe_hours * 3600e3))
        throw DataError("generator: time range too short; each sample needs more than timeframe_hours of its own");
    for (const auto& [type, r] : c.benign_profile) {
        if (std::find(background_event_types().begin(), background_event_types().end(), type) ==
            background_event_types().end())
            throw DataError("generator: no background generator for event type '" + type + "'");
        if (!(r.min_per_hour > 0) || r.max_per_hour < r.min_per_hour)
            throw DataError("generator: rate for '" + type + "' must be positive with min <= max");
    }
    for (const auto& [type, mult] : c.hok_background_boost)
        if (!(mult > 0)) throw DataError("generator: background boost for '" + type + "' must be positive");
    if (c.n_hok > 0 && c.playbook.empty()) throw DataError("generator: playbook has no phases");
    if (c.mode == GeneratorMode::OrderSignal && c.playbook.size() < 2)
        throw DataError("generator: order-signal mode needs at least two playbook phases");
    for (const auto& p : c.playbook) find_phase(p);
    if (c.step_gap_seconds.min < 1.0 || c.step_gap_seconds.max < c.step_gap_seconds.min)
        throw DataError("generator: step gaps must be at least one second with min <= max");
    if (c.phase_gap_seconds.min < 1.0 || c.phase_gap_seconds.max < c.phase_gap_seconds.min)
        throw DataError("generator: phase gaps must be at least one second with min <= max");
    if (c.cluster_step_gap_seconds.min < 1.0 || c.cluster_step_gap_seconds.max < c.cluster_step_gap_seconds.min)
        throw DataError("generator: cluster step gaps must be at least one second with min <= max");
    if (!(c.slow_session_probability >= 0.0 && c.slow_session_probability <= 1.0))
        throw DataError("generator: slow_session_probability must be in [0, 1]");
    if (!(c.burst_probability >= 0.0 && c.burst_probability <= 1.0))
        throw DataError("generator: burst_probability must be in [0, 1]");
}

// ---------------------------------------------------------------------------
// Content pools for background activity

namespace detail {

struct Program {
    const char* image;
    const char* args;
};

inline const std::vector<Program>& benign_programs() {
    static const std::vector<Program> v{
        {"C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe", "--type=renderer --field-trial-handle={n}"},
        {"C:\\Windows\\System32\\notepad.exe", "C:\\Users\\{user}\\Documents\\notes_{n}.txt"},
        {"C:\\Program Files\\Microsoft Office\\root\\Office16\\EXCEL.EXE", "/e C:\\Users\\{user}\\Documents\\budget_{n}.xlsx"},
        {"C:\\Windows\\System32\\svchost.exe", "-k netsvcs -p"},
        {"C:\\Windows\\System32\\conhost.exe", "0xffffffff -ForceV1"},
        {"C:\\Windows\\System32\\backgroundTaskHost.exe", "-ServerName:App.AppX{n}.mca"},
        {"C:\\Windows\\System32\\SearchProtocolHost.exe", "Global\\UsGthrFltPipeMssGthrPipe{n}"},
        {"C:\\Program Files\\Microsoft VS Code\\Code.exe", "--unity-launch"},
        {"C:\\Windows\\System32\\taskhostw.exe", ""},
        {"C:\\Windows\\System32\\RuntimeBroker.exe", "-Embedding"},
        {"C:\\Program Files\\Git\\cmd\\git.exe", "fetch origin"},
        {"C:\\Windows\\System32\\WindowsPowerShell\\v1.0\\powershell.exe", "-File C:\\Scripts\\inventory.ps1"},
        {"C:\\Program Files\\Microsoft\\Edge\\Application\\msedge.exe", "--single-argument https://intranet/{n}"},
        {"C:\\Windows\\System32\\dllhost.exe", "/Processid:{rand}"},
    };
    return v;
}

inline const std::vector<std::string>& process_parents() {
    static const std::vector<std::string> v{"explorer.exe", "svchost.exe", "services.exe", "chrome.exe",
                                            "OUTLOOK.EXE",  "Teams.exe",   "msedge.exe",   "userinit.exe"};
    return v;
}

inline const std::vector<std::string>& file_templates() {
    static const std::vector<std::string> v{
        "C:\\Users\\{user}\\Documents\\report_{n}.docx",
        "C:\\Users\\{user}\\Downloads\\invoice_{n}.pdf",
        "C:\\Users\\{user}\\AppData\\Local\\Temp\\tmp{rand}.tmp",
        "C:\\Windows\\Temp\\MpCmdRun_{n}.log",
        "C:\\ProgramData\\Microsoft\\Windows Defender\\Scans\\History\\{n}.bin",
        "C:\\Users\\{user}\\AppData\\Local\\Google\\Chrome\\User Data\\Default\\Cache\\f_{rand}",
        "C:\\Users\\{user}\\Desktop\\todo.txt",
        "C:\\Users\\{user}\\OneDrive\\Shared\\plan_{n}.pptx",
    };
    return v;
}

inline const std::vector<std::string>& file_writers() {
    static const std::vector<std::string> v{"chrome.exe", "WINWORD.EXE", "EXCEL.EXE", "OneDrive.exe",
                                            "MsMpEng.exe", "explorer.exe", "msedge.exe"};
    return v;
}

inline const std::vector<std::string>& registry_keys() {
    static const std::vector<std::string> v{
        "HKCU\\Software\\Microsoft\\Windows\\CurrentVersion\\Explorer\\RecentDocs",
        "HKLM\\SOFTWARE\\Microsoft\\Windows Defender\\Signature Updates",
        "HKCU\\Software\\Microsoft\\Office\\16.0\\Common\\Roaming",
        "HKCU\\Software\\Microsoft\\Windows\\CurrentVersion\\Internet Settings",
        "HKLM\\SYSTEM\\CurrentControlSet\\Services\\bam\\State\\UserSettings",
    };
    return v;
}

inline const std::vector<std::string>& remote_hosts() {
    static const std::vector<std::string> v{"www.office.com",         "login.microsoftonline.com", "teams.microsoft.com",
                                            "update.googleapis.com",  "github.com",                "ctldl.windowsupdate.com",
                                            "ocsp.digicert.com",      "intranet.corp.local",       "fileserver01.corp.local"};
    return v;
}

inline const std::vector<std::string>& net_clients() {
    static const std::vector<std::string> v{"chrome.exe", "msedge.exe", "Teams.exe", "svchost.exe", "OneDrive.exe"};
    return v;
}

inline const std::vector<std::string>& system_dlls() {
    static const std::vector<std::string> v{"ntdll.dll", "kernel32.dll", "user32.dll", "combase.dll",
                                            "ole32.dll", "crypt32.dll",  "winhttp.dll", "bcrypt.dll"};
    return v;
}

inline const std::vector<std::string>& triggers() {
    static const std::vector<std::string> v{"single EDR alert: suspicious process tree",
                                            "single EDR alert: unusual network connection",
                                            "single EDR alert: anomalous logon",
                                            "single EDR alert: suspicious script execution"};
    return v;
}

struct SampleContext {
    std::string machine_id;
    std::string login;      // profile directory name, used in paths
    std::string user;       // primary interactive user
    std::string service_user;
    std::string admin;      // privileged account targeted by attacks
    std::string host;       // remote host targeted by lateral movement
    Timestamp start;
    Timestamp end;
};

inline std::string expand(std::string_view tpl, const SampleContext& ctx, Rng& rng) {
    std::string out;
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            auto close = tpl.find('}', i);
            if (close != std::string_view::npos) {
                auto name = tpl.substr(i + 1, close - i - 1);
                bool known = true;
                if (name == "user") out += ctx.login;
                else if (name == "admin") out += ctx.admin;
                else if (name == "host") out += ctx.host;
                else if (name == "n") out += std::to_string(rng.uniform_int(1, 999));
                else if (name == "rand") out += hex64(rng.next()).substr(0, 6);
                else if (name == "b64") {
                    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
                    for (int k = 0; k < 24; ++k) out.push_back(alphabet[rng.index(64)]);
                } else known = false;
                if (known) {
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tpl[i++]);
    }
    return out;
}

inline std::string format_score_value(Rng& rng, double lo, double hi) {
    // Four decimals keep the serialized event compact and exact.
    double s = std::round(rng.uniform(lo, hi) * 10000.0) / 10000.0;
    return std::to_string(s);
}

class SampleBuilder {
public:
    SampleBuilder(SampleContext ctx, Rng& rng) : ctx_(std::move(ctx)), rng_(rng) {}

    RawEvent& add(EventClass cls, std::string type, std::string user, std::string source, Timestamp t) {
        RawEvent e;
        e.event_id = ctx_.machine_id + "-" + std::to_string(events_.size());
        e.machine_id = ctx_.machine_id;
        e.timestamp = t;
        e.event_class = cls;
        e.event_type = std::move(type);
        e.user = std::move(user);
        e.source = std::move(source);
        events_.push_back(std::move(e));
        return events_.back();
    }

    Timestamp random_time() { return Timestamp{rng_.uniform_int(ctx_.start.ms, ctx_.end.ms)}; }

    void background(const std::string& type, std::size_t count, double burst_probability) {
        for (std::size_t i = 0; i < count; ++i) background_one(type, random_time(), burst_probability);
    }

    void step(const PlaybookStep& s, Timestamp t) {
        const bool system = s.source == "lsass.exe" || s.source == "services.exe";
        auto& e = add(s.event_class, s.event_type, system ? "" : ctx_.user, s.source, t);
        for (const auto& [k, v] : s.details) e.details.emplace_back(k, expand(v, ctx_, rng_));
        if (s.event_class == EventClass::MlObservation) e.score = std::stod(format_score_value(rng_, s.score_min, s.score_max));
    }

    std::vector<RawEvent> take() { return std::move(events_); }
    const SampleContext& context() const { return ctx_; }

private:
    void background_one(const std::string& type, Timestamp t, double burst_probability) {
        const auto& u = rng_.bernoulli(0.85) ? ctx_.user : ctx_.service_user;
        if (type == "ProcessCreate") {
            const auto& prog = rng_.pick(benign_programs());
            const auto& parent = rng_.pick(process_parents());
            std::size_t copies = rng_.bernoulli(burst_probability) ? static_cast<std::size_t>(rng_.uniform_int(2, 5)) : 1;
            const std::int64_t second = t.second_bucket() * 1000;
            for (std::size_t c = 0; c < copies; ++c) {
                Timestamp tc = copies == 1 ? t : Timestamp{std::clamp(second + rng_.uniform_int(0, 999), ctx_.start.ms, ctx_.end.ms)};
                auto& e = add(EventClass::Telemetry, type, u, parent, tc);
                e.details.emplace_back("image", prog.image);
                std::string args = expand(prog.args, ctx_, rng_);
                std::string image_name = prog.image;
                image_name = image_name.substr(image_name.rfind('\\') + 1);
                e.details.emplace_back("cmdline", args.empty() ? image_name : image_name + " " + args);
            }
        } else if (type == "FileCreate" || type == "FileDelete") {
            auto& e = add(EventClass::Telemetry, type, u, rng_.pick(file_writers()), t);
            e.details.emplace_back("path", expand(rng_.pick(file_templates()), ctx_, rng_));
        } else if (type == "FileMove") {
            auto& e = add(EventClass::Telemetry, type, u, "explorer.exe", t);
            e.details.emplace_back("src_path", expand(rng_.pick(file_templates()), ctx_, rng_));
            e.details.emplace_back("dst_path", expand(rng_.pick(file_templates()), ctx_, rng_));
        } else if (type == "RegistrySet") {
            auto& e = add(EventClass::Telemetry, type, u, rng_.pick(process_parents()), t);
            e.details.emplace_back("key", rng_.pick(registry_keys()));
            e.details.emplace_back("value_name", "v" + std::to_string(rng_.uniform_int(1, 40)));
        } else if (type == "LogonAttempt") {
            static const std::vector<std::string> logon_types{"2", "5", "7", "11"};
            auto& e = add(EventClass::Telemetry, type, "", "lsass.exe", t);
            e.details.emplace_back("target_user", u);
            e.details.emplace_back("logon_type", rng_.pick(logon_types));
            e.details.emplace_back("result", rng_.bernoulli(0.95) ? "success" : "failure");
        } else if (type == "NetworkConnect") {
            static const std::vector<std::string> ports{"443", "443", "443", "80"};
            auto& e = add(EventClass::Telemetry, type, u, rng_.pick(net_clients()), t);
            e.details.emplace_back("remote_host", rng_.pick(remote_hosts()));
            e.details.emplace_back("remote_port", rng_.pick(ports));
        } else if (type == "Heartbeat") {
            auto& e = add(EventClass::Telemetry, type, "", "SenseSensor", t);
            e.details.emplace_back("status", "ok");
        } else if (type == "ImageLoad") {
            auto& e = add(EventClass::Telemetry, type, u, rng_.pick(process_parents()), t);
            e.details.emplace_back("dll", "C:\\Windows\\System32\\" + rng_.pick(system_dlls()));
        } else if (type == "UnusualLogonTime") {
            auto& e = add(EventClass::SecurityObservation, type, "", "lsass.exe", t);
            e.details.emplace_back("target_user", u);
        } else if (type == "NewServiceInstalled") {
            static const std::vector<std::string> services{"GoogleUpdater", "OneDrive Updater", "VSStandardCollector"};
            auto& e = add(EventClass::SecurityObservation, type, "", "services.exe", t);
            e.details.emplace_back("service_name", rng_.pick(services));
        } else if (type == "SuspiciousCommandLine") {
            const auto& prog = rng_.pick(benign_programs());
            auto& e = add(EventClass::MlObservation, type, u, "explorer.exe", t);
            std::string image_name = prog.image;
            image_name = image_name.substr(image_name.rfind('\\') + 1);
            e.details.emplace_back("cmdline", image_name + " " + expand(prog.args, ctx_, rng_));
            e.score = std::stod(format_score_value(rng_, 0.01, 0.35));
        } else if (type == "AnomalousRegistryActivity") {
            auto& e = add(EventClass::MlObservation, type, u, "explorer.exe", t);
            e.details.emplace_back("key", rng_.pick(registry_keys()));
            e.score = std::stod(format_score_value(rng_, 0.01, 0.30));
        }
    }

    SampleContext ctx_;
    Rng& rng_;
    std::vector<RawEvent> events_;
};

/// Steps of one phase run. Every step of the pool appears once in pool
/// order, then extra draws (repeats of random steps) are spliced in after
/// their first occurrence until the run has between min_steps and max_steps.
inline std::vector<const PlaybookStep*> choose_steps(const PlaybookPhase& phase, Rng& rng) {
    const std::size_t pool = phase.steps.size();
    const auto k = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(phase.min_steps), static_cast<std::int64_t>(phase.max_steps)));
    std::vector<std::size_t> idx;
    if (k < pool) {
        idx.resize(pool);
        for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
        rng.shuffle(idx);
        idx.resize(k);
    } else {
        for (std::size_t i = 0; i < pool; ++i) idx.push_back(i);
        while (idx.size() < k) idx.push_back(rng.index(pool));
    }
    std::sort(idx.begin(), idx.end());
    std::vector<const PlaybookStep*> out;
    for (auto i : idx) out.push_back(&phase.steps[i]);
    return out;
}

inline std::int64_t gap_ms(Rng& rng, const SecondsRange& r) {
    return static_cast<std::int64_t>(std::llround(rng.uniform(r.min, r.max) * 1000.0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset generation

struct GeneratedSample {
    SampleMeta meta;  // carries the emitted (possibly noisy) label
    Label true_label = Label::Benign;
    std::vector<RawEvent> events;
};

inline std::size_t total_samples(const GeneratorConfig& c) { return c.n_benign + c.n_hok; }

/// Slots alternate between classes so that every time prefix is balanced.
inline Label slot_label(const GeneratorConfig& c, std::size_t slot) {
    const std::size_t n = total_samples(c);
    return (slot + 1) * c.n_hok / n > slot * c.n_hok / n ? Label::Hok : Label::Benign;
}

inline Timestamp slot_start(const GeneratorConfig& c, std::size_t slot) {
    const double slot_ms = static_cast<double>(c.time_range_end.ms - c.time_range_start.ms) /
                           static_cast<double>(total_samples(c));
    return Timestamp{c.time_range_start.ms + static_cast<std::int64_t>(std::floor(slot_ms * static_cast<double>(slot)))};
}

/// Deterministic given (config, slot); independent of other slots.
inline GeneratedSample generate_sample(const GeneratorConfig& c, std::size_t slot) {
    Rng rng(stable_hash(c.seed, "sample:" + std::to_string(slot)));
    GeneratedSample out;
    out.true_label = slot_label(c, slot);
    const bool hok = out.true_label == Label::Hok;

    detail::SampleContext ctx;
    ctx.machine_id = "m" + hex64(stable_hash(c.seed, "machine:" + std::to_string(slot))).substr(0, 10);
    // Qualified names are long enough to be folded into placeholders by the
    // story normalizer, as real domain accounts and FQDNs would be.
    ctx.login = "u" + std::to_string(100 + rng.uniform_int(0, 899));
    ctx.user = ctx.login + "@corp.example";
    ctx.service_user = "svc" + std::to_string(10 + rng.uniform_int(0, 89)) + "@corp.example";
    ctx.admin = "adm" + std::to_string(10 + rng.uniform_int(0, 89)) + "@corp.example";
    ctx.host = "ws-" + hex64(rng.next()).substr(0, 4) + ".corp.example";
    ctx.start = slot_start(c, slot);
    ctx.end = Timestamp{ctx.start.ms + static_cast<std::int64_t>(std::llround(c.timeframe_hours * 3600e3))};

    out.meta.machine_id = ctx.machine_id;
    out.meta.timeframe_start = ctx.start;
    out.meta.timeframe_end = ctx.end;
    out.meta.trigger = rng.pick(detail::triggers());
    out.meta.label = out.true_label;
    if (!hok && rng.bernoulli(c.label_noise_rate)) out.meta.label = Label::Hok;

    detail::SampleBuilder builder(ctx, rng);
    for (const auto& [type, rate] : c.benign_profile) {
        double per_hour = rng.uniform(rate.min_per_hour, rate.max_per_hour);
        if (hok)
            if (auto it = c.hok_background_boost.find(type); it != c.hok_background_boost.end()) per_hour *= it->second;
        const double expected = per_hour * c.timeframe_hours;
        // Round stochastically so low rates still fire occasionally.
        auto count = static_cast<std::size_t>(std::floor(expected));
        if (rng.bernoulli(expected - std::floor(expected))) ++count;
        builder.background(type, count, c.burst_probability);
    }

    const bool with_playbook = hok || c.mode == GeneratorMode::OrderSignal;
    if (with_playbook && !c.playbook.empty()) {
        std::vector<std::vector<const PlaybookStep*>> runs;
        for (const auto& name : c.playbook) runs.push_back(detail::choose_steps(find_phase(name), rng));
        auto run_span = [&](const std::vector<const PlaybookStep*>& steps) {
            return static_cast<std::int64_t>(steps.size()) *
                   static_cast<std::int64_t>(std::max(c.step_gap_seconds.max, c.cluster_step_gap_seconds.max) * 1000);
        };
        const std::int64_t frame = ctx.end.ms - ctx.start.ms;

        if (hok) {
            const auto& step_gap = rng.bernoulli(c.slow_session_probability) ? c.cluster_step_gap_seconds : c.step_gap_seconds;
            std::int64_t total = 0;
            for (const auto& r : runs) total += run_span(r) + static_cast<std::int64_t>(c.phase_gap_seconds.max * 1000);
            std::int64_t t = ctx.start.ms + rng.uniform_int(0, std::max<std::int64_t>(0, frame - total));
            for (std::size_t p = 0; p < runs.size(); ++p) {
                if (p) t += detail::gap_ms(rng, c.phase_gap_seconds);
                for (std::size_t s = 0; s < runs[p].size(); ++s) {
                    if (s) t += detail::gap_ms(rng, step_gap);
                    builder.step(*runs[p][s], Timestamp{std::min(t, ctx.end.ms)});
                }
            }
        } else {
            // One cluster per phase, at separated times, never in playbook order.
            const std::size_t k = runs.size();
            std::vector<std::size_t> order(k);
            for (std::size_t i = 0; i < k; ++i) order[i] = i;
            do rng.shuffle(order);
            while (std::is_sorted(order.begin(), order.end()));

            std::int64_t longest = 0;
            for (const auto& r : runs) longest = std::max(longest, run_span(r));
            const std::int64_t usable = std::max<std::int64_t>(0, frame - longest);
            const auto sep = static_cast<std::int64_t>(c.cluster_separation_seconds * 1000);
            std::vector<std::int64_t> starts;
            for (int attempt = 0; attempt < 1000 && starts.size() < k; ++attempt) {
                starts.clear();
                for (std::size_t i = 0; i < k; ++i) starts.push_back(rng.uniform_int(0, usable));
                std::sort(starts.begin(), starts.end());
                for (std::size_t i = 1; i < k; ++i)
                    if (starts[i] - starts[i - 1] < sep + longest) {
                        starts.clear();
                        break;
                    }
            }
            if (starts.size() < k) {
                starts.clear();
                for (std::size_t i = 0; i < k; ++i)
                    starts.push_back(usable * static_cast<std::int64_t>(i) / static_cast<std::int64_t>(std::max<std::size_t>(1, k - 1)));
            }
            for (std::size_t i = 0; i < k; ++i) {
                std::int64_t t = ctx.start.ms + starts[i];
                const auto& steps = runs[order[i]];
                for (std::size_t s = 0; s < steps.size(); ++s) {
                    if (s) t += detail::gap_ms(rng, c.cluster_step_gap_seconds);
                    builder.step(*steps[s], Timestamp{std::min(t, ctx.end.ms)});
                }
            }
        }
    }
    out.events = builder.take();
    return out;
}

// ---------------------------------------------------------------------------
// Playbook signature

struct PhaseSignature {
    /// Phases of recognized playbook events in time order, consecutive repeats collapsed.
    std::vector<std::string> phases;
    /// The playbook appears in order as a subsequence of `phases`.
    bool full_ordered = false;
};

/// Playbook phase an event belongs to, if any.
inline std::optional<std::string> phase_of(const RawEvent& e, const std::vector<std::string>& playbook) {
    std::string rendered;
    for (const auto& [k, v] : e.details) {
        if (!rendered.empty()) rendered.push_back(' ');
        rendered += k + "=" + v;
    }
    for (const auto& name : playbook) {
        for (const auto& step : find_phase(name).steps) {
            if (step.event_type != e.event_type || step.event_class != e.event_class) continue;
            if (step.marker.empty() || rendered.find(step.marker) != std::string::npos) return name;
        }
    }
    return std::nullopt;
}

inline PhaseSignature playbook_signature(std::vector<RawEvent> events, const std::vector<std::string>& playbook) {
    std::stable_sort(events.begin(), events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
    PhaseSignature sig;
    for (const auto& e : events)
        if (auto p = phase_of(e, playbook); p && (sig.phases.empty() || sig.phases.back() != *p))
            sig.phases.push_back(*p);
    std::size_t matched = 0;
    for (const auto& p : sig.phases)
        if (matched < playbook.size() && p == playbook[matched]) ++matched;
    sig.full_ordered = !playbook.empty() && matched == playbook.size();
    return sig;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
    std::string sample_id;
    std::string machine_id;
    Label true_label = Label::Benign;
    Label emitted_label = Label::Benign;
    Timestamp timeframe_start;
    Timestamp timeframe_end;
};

struct DatasetManifest {
    std::string config_fingerprint;
    std::vector<ManifestEntry> samples;
    Timestamp split_boundary;
    std::size_t train_benign = 0, train_hok = 0, test_benign = 0, test_hok = 0;
};

/// Suggested boundary: start of the first test slot.
inline Timestamp split_boundary(const GeneratorConfig& c) {
    const std::size_t n = total_samples(c);
    auto n_train = static_cast<std::size_t>(std::llround(c.train_fraction * static_cast<double>(n)));
    if (n_train >= n) return Timestamp{c.time_range_end.ms + 1};
    return slot_start(c, n_train);
}

inline void add_to_manifest(DatasetManifest& m, const GeneratedSample& s) {
    m.samples.push_back({sample_id(s.meta), s.meta.machine_id, s.true_label, s.meta.label, s.meta.timeframe_start,
                         s.meta.timeframe_end});
    const bool train = s.meta.timeframe_end < m.split_boundary;
    const bool pos = s.meta.label == Label::Hok;
    (train ? (pos ? m.train_hok : m.train_benign) : (pos ? m.test_hok : m.test_benign)) += 1;
}

// ---------------------------------------------------------------------------
// JSON

inline ordered_json to_json(const GeneratorConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["n_benign"] = c.n_benign;
    j["n_hok"] = c.n_hok;
    j["label_noise_rate"] = c.label_noise_rate;
    j["time_range_start"] = format_rfc3339(c.time_range_start);
    j["time_range_end"] = format_rfc3339(c.time_range_end);
    j["timeframe_hours"] = c.timeframe_hours;
    j["train_fraction"] = c.train_fraction;
    j["mode"] = to_string(c.mode);
    ordered_json profile = ordered_json::object();
    for (const auto& [k, r] : c.benign_profile) profile[k] = {r.min_per_hour, r.max_per_hour};
    j["benign_profile"] = std::move(profile);
    j["playbook"] = c.playbook;
    j["step_gap_seconds"] = {c.step_gap_seconds.min, c.step_gap_seconds.max};
    j["phase_gap_seconds"] = {c.phase_gap_seconds.min, c.phase_gap_seconds.max};
    j["cluster_separation_seconds"] = c.cluster_separation_seconds;
    j["cluster_step_gap_seconds"] = {c.cluster_step_gap_seconds.min, c.cluster_step_gap_seconds.max};
    ordered_json boost = ordered_json::object();
    for (const auto& [k, v] : c.hok_background_boost) boost[k] = v;
    j["hok_background_boost"] = std::move(boost);
    j["slow_session_probability"] = c.slow_session_probability;
    j["burst_probability"] = c.burst_probability;
    return j;
}

/// Missing keys keep their defaults (the order-signal preset when
/// `mode` is "order_signal").
inline GeneratorConfig generator_config_from_json(const ordered_json& j) {
    try {
        GeneratorConfig c;
        if (j.contains("mode")) {
            auto mode = j["mode"].get<std::string>();
            if (mode == "order_signal")
                c = GeneratorConfig::order_signal_preset();
            else if (mode != "standard")
                throw DataError("generator: unknown mode '" + mode + "'");
        }
        auto time = [&](const char* key, Timestamp& out) {
            if (!j.contains(key)) return;
            auto t = parse_rfc3339(j[key].get<std::string>());
            if (!t) throw DataError(std::string("generator: ") + key + " is not an RFC 3339 timestamp");
            out = *t;
        };
        auto range = [&](const char* key, SecondsRange& out) {
            if (!j.contains(key)) return;
            auto v = j[key].get<std::vector<double>>();
            if (v.size() != 2) throw DataError(std::string("generator: ") + key + " must be [min, max]");
            out = {v[0], v[1]};
        };
        c.seed = j.value("seed", c.seed);
        c.n_benign = j.value("n_benign", c.n_benign);
        c.n_hok = j.value("n_hok", c.n_hok);
        c.label_noise_rate = j.value("label_noise_rate", c.label_noise_rate);
        time("time_range_start", c.time_range_start);
        time("time_range_end", c.time_range_end);
        c.timeframe_hours = j.value("timeframe_hours", c.timeframe_hours);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        if (j.contains("benign_profile")) {
            c.benign_profile.clear();
            for (auto it = j["benign_profile"].begin(); it != j["benign_profile"].end(); ++it) {
                auto v = it.value().get<std::vector<double>>();
                if (v.size() != 2) throw DataError("generator: rate for '" + it.key() + "' must be [min, max]");
                c.benign_profile[it.key()] = {v[0], v[1]};
            }
        }
        if (j.contains("playbook")) c.playbook = j["playbook"].get<std::vector<std::string>>();
        range("step_gap_seconds", c.step_gap_seconds);
        range("phase_gap_seconds", c.phase_gap_seconds);
        c.cluster_separation_seconds = j.value("cluster_separation_seconds", c.cluster_separation_seconds);
        range("cluster_step_gap_seconds", c.cluster_step_gap_seconds);
        if (j.contains("hok_background_boost")) {
            c.hok_background_boost.clear();
            for (auto it = j["hok_background_boost"].begin(); it != j["hok_background_boost"].end(); ++it)
                c.hok_background_boost[it.key()] = it.value().get<double>();
        }
        c.slow_session_probability = j.value("slow_session_probability", c.slow_session_probability);
        c.burst_probability = j.value("burst_probability", c.burst_probability);
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("generator config: ") + e.what());
    }
}

inline ordered_json to_json(const DatasetManifest& m) {
    ordered_json j;
    j["config_fingerprint"] = m.config_fingerprint;
    j["split"] = {{"boundary", format_rfc3339(m.split_boundary)},
                  {"train", {{"benign", m.train_benign}, {"hok", m.train_hok}}},
                  {"test", {{"benign", m.test_benign}, {"hok", m.test_hok}}}};
    ordered_json samples = ordered_json::array();
    for (const auto& s : m.samples)
        samples.push_back({{"sample_id", s.sample_id},
                           {"machine_id", s.machine_id},
                           {"true_label", to_string(s.true_label)},
                           {"emitted_label", to_string(s.emitted_label)},
                           {"timeframe_start", format_rfc3339(s.timeframe_start)},
                           {"timestamp", format_rfc3339(s.timeframe_end)}});
    j["samples"] = std::move(samples);
    return j;
}

inline DatasetManifest manifest_from_json(const ordered_json& j) {
    try {
        DatasetManifest m;
        m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
        const auto& split = j.at("split");
        auto boundary = parse_rfc3339(split.at("boundary").get<std::string>());
        if (!boundary) throw DataError("manifest: bad split boundary");
        m.split_boundary = *boundary;
        m.train_benign = split.at("train").at("benign").get<std::size_t>();
        m.train_hok = split.at("train").at("hok").get<std::size_t>();
        m.test_benign = split.at("test").at("benign").get<std::size_t>();
        m.test_hok = split.at("test").at("hok").get<std::size_t>();
        for (const auto& s : j.at("samples")) {
            ManifestEntry e;
            e.sample_id = s.at("sample_id").get<std::string>();
            e.machine_id = s.at("machine_id").get<std::string>();
            e.true_label = parse_label(s.at("true_label").get<std::string>()).value_or(Label::Unlabeled);
            e.emitted_label = parse_label(s.at("emitted_label").get<std::string>()).value_or(Label::Unlabeled);
            e.timeframe_start = parse_rfc3339(s.at("timeframe_start").get<std::string>()).value_or(Timestamp{});
            e.timeframe_end = parse_rfc3339(s.at("timestamp").get<std::string>()).value_or(Timestamp{});
            m.samples.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

}  // namespace epstory
