#include <gtest/gtest.h>

#include "epstory/pipeline.hpp"
#include "support.hpp"

using namespace epstory;
using testsupport::run_cli;
using testsupport::TempDir;

namespace {

std::string mini() { return (testsupport::source_dir() / "configs" / "mini.json").string(); }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    auto help = run_cli({"--help"});
    EXPECT_EQ(help.exit_code, 0);
    EXPECT_NE(help.out.find("gen-data"), std::string::npos);
    EXPECT_EQ(run_cli({}).exit_code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).exit_code, 1);
    EXPECT_EQ(run_cli({"compile"}).exit_code, 1);  // --out is required
    EXPECT_EQ(run_cli({"default-config", "--preset", "nope"}).exit_code, 1);
}

TEST(Cli, DefaultConfigIsLoadable) {
    TempDir dir;
    auto r = run_cli({"default-config", "--preset", "order_signal"});
    ASSERT_EQ(r.exit_code, 0);
    testsupport::spit(dir / "c.json", r.out);
    EXPECT_EQ(load_pipeline_config(dir / "c.json").generator.mode, GeneratorMode::OrderSignal);
}

TEST(Cli, RunPrintsTheReportTable) {
    TempDir work;
    auto r = run_cli({"run", "--config", mini(), "--out", work.path().string()});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    for (const char* model : {"baseline", "avg_window", "sequence_head", "ensemble"})
        EXPECT_NE(r.out.find(model), std::string::npos) << model;
    EXPECT_NE(r.err.find("embed: embedded"), std::string::npos);

    auto j = run_cli({"eval", "--config", mini(), "--out", work.path().string(), "--json"});
    ASSERT_EQ(j.exit_code, 0) << j.err;
    auto report = ordered_json::parse(j.out);
    EXPECT_EQ(report, ordered_json::parse(testsupport::slurp(layout::report(work.path()))));
}

TEST(Cli, SingleClassEvaluationExitsWithOne) {
    TempDir work;
    const auto out = work.path().string();
    ASSERT_EQ(run_cli({"gen-data", "--config", mini(), "--out", out}).exit_code, 0);
    for (const char* stage : {"compile", "embed"}) ASSERT_EQ(run_cli({stage, "--config", mini(), "--out", out}).exit_code, 0);

    auto manifest = manifest_from_json(ordered_json::parse(testsupport::slurp(layout::manifest(work.path()))));
    auto cfg = ordered_json::parse(testsupport::slurp(mini()));
    cfg["split_boundary"] = format_rfc3339(manifest.samples.back().timeframe_end);
    testsupport::spit(work / "single.json", cfg.dump());
    const auto single = (work / "single.json").string();
    for (const char* stage : {"split", "train", "score"})
        ASSERT_EQ(run_cli({stage, "--config", single, "--out", out}).exit_code, 0) << stage;
    auto r = run_cli({"eval", "--config", single, "--out", out});
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("both classes"), std::string::npos) << r.err;
}

TEST(Cli, UnreachableEndpointExitsWithTwoAndLeavesNoEmbeddings) {
    TempDir work;
    const auto out = work.path().string();
    ASSERT_EQ(run_cli({"gen-data", "--config", mini(), "--out", out}).exit_code, 0);
    ASSERT_EQ(run_cli({"compile", "--config", mini(), "--out", out}).exit_code, 0);
    const auto endpoint = "tcp://127.0.0.1:" + std::to_string(testsupport::unused_port());
    auto r = run_cli({"embed", "--config", mini(), "--out", out, "--endpoint", endpoint});
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_FALSE(fs::exists(layout::embeddings(work.path())));
    EXPECT_FALSE(fs::exists(work / "embeddings.partial"));
}

TEST(Cli, BadInputExitCodes) {
    TempDir work;
    const auto out = work.path().string();
    EXPECT_EQ(run_cli({"compile", "--out", out}).exit_code, 2);  // no data yet
    EXPECT_EQ(run_cli({"compile", "--config", (work / "missing.json").string(), "--out", out}).exit_code, 2);
    testsupport::spit(work / "bad.json", R"({"windowing": {"budget": 0}})");
    auto bad = run_cli({"gen-data", "--config", (work / "bad.json").string(), "--out", out});
    EXPECT_EQ(bad.exit_code, 1);
    EXPECT_NE(bad.err.find("budget"), std::string::npos);
    EXPECT_EQ(run_cli({"embed", "--out", out, "--endpoint", "localhost:1"}).exit_code, 1);
}
