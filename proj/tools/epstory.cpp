// Command-line front end for the endpoint story pipeline.
//
//   epstory gen-data --out work [--config cfg.json] [--seed N]
//   epstory compile | split | embed | train | score --out work
//   epstory eval --out work [--json]
//   epstory run --out work          (all stages in order)
//   epstory default-config [--preset order_signal]
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 I/O or
// transport failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "epstory/epstory.hpp"

namespace {

using namespace epstory;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
    std::string endpoint;
};

PipelineConfig load(const Common& opt) {
    PipelineConfig c = opt.config.empty() ? PipelineConfig{} : load_pipeline_config(opt.config);
    if (opt.seed) c.seed = c.generator.seed = *opt.seed;
    if (opt.threads) c.threads = *opt.threads;
    if (!opt.endpoint.empty()) {
        c.provider.kind = ProviderSpec::Kind::Remote;
        c.provider.remote.endpoint = opt.endpoint;
        c.provider.remote.dimension = c.provider.dimension;
    }
    validate(c);
    return c;
}

void add_common(CLI::App* cmd, Common& opt) {
    cmd->add_option("--config", opt.config, "pipeline configuration (JSON)");
    cmd->add_option("--seed", opt.seed, "overrides the configured seed");
    cmd->add_option("--out", opt.out, "work directory")->required();
    cmd->add_option("--threads", opt.threads, "worker threads, 0 = one per core");
}

void print_eval(const EvalOutput& out, bool json) {
    if (json)
        std::cout << out.json.dump(2) << "\n";
    else
        std::cout << format_report_table(out.report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Endpoint story pipeline: synthetic telemetry to attack/benign scores"};
    app.require_subcommand(1);

    Common opt;
    bool json = false;
    std::string preset = "standard";

    using Stage = std::string (*)(const PipelineConfig&, const fs::path&);
    const std::pair<const char*, Stage> stages[] = {
        {"gen-data", cmd_gen_data}, {"compile", cmd_compile}, {"split", cmd_split},
        {"embed", cmd_embed},       {"train", cmd_train},     {"score", cmd_score},
    };
    const char* help[] = {
        "generate the synthetic dataset",
        "compile raw telemetry into stories",
        "split samples by time into train and test",
        "split stories into windows and embed them",
        "train the baseline and the sequence head",
        "score the test samples",
    };
    std::vector<CLI::App*> stage_cmds;
    for (std::size_t i = 0; i < std::size(stages); ++i) {
        auto* cmd = app.add_subcommand(stages[i].first, help[i]);
        add_common(cmd, opt);
        if (std::string_view(stages[i].first) == "embed")
            cmd->add_option("--endpoint", opt.endpoint, "remote embedding service (tcp://host:port or exec:command)");
        stage_cmds.push_back(cmd);
    }
    auto* eval = app.add_subcommand("eval", "compute ROC metrics for every model");
    add_common(eval, opt);
    eval->add_flag("--json", json, "print the machine-readable report");
    auto* run = app.add_subcommand("run", "run every stage in order");
    add_common(run, opt);
    run->add_option("--endpoint", opt.endpoint, "remote embedding service (tcp://host:port or exec:command)");
    run->add_flag("--json", json, "print the machine-readable report");
    auto* defaults = app.add_subcommand("default-config", "print the default configuration");
    defaults->add_option("--preset", preset, "generator preset")->check(CLI::IsMember({"standard", "order_signal"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (defaults->parsed()) {
            PipelineConfig c;
            if (preset == "order_signal") c.generator = GeneratorConfig::order_signal_preset();
            std::cout << to_json(c).dump(2) << "\n";
            return 0;
        }
        const auto c = load(opt);
        const fs::path work = opt.out;
        DirectoryLock lock(work);
        for (std::size_t i = 0; i < stage_cmds.size(); ++i) {
            if (stage_cmds[i]->parsed()) {
                std::cout << stages[i].second(c, work) << "\n";
                return 0;
            }
        }
        if (eval->parsed()) {
            print_eval(cmd_eval(c, work), json);
            return 0;
        }
        if (run->parsed()) {
            for (const auto& [name, stage] : stages) std::cerr << name << ": " << stage(c, work) << "\n";
            print_eval(cmd_eval(c, work), json);
            return 0;
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 2;
    }
    return 0;
}
