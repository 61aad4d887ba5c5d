#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "imap/cli.hpp"
#include "imap/mapio.hpp"
#include "imap/render.hpp"
#include "imap/segeval.hpp"
#include "imap/synth.hpp"
#include "test_util.hpp"

using namespace imap;
using imap::testing::code_of;
using imap::testing::TempDir;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::vector<std::string_view> views(args.begin(), args.end());
  std::ostringstream out, err;
  const int code = cli::run(views, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(CliTest, TimestepSelectors) {
  const std::vector<int> ts{0, 10, 20, 30, 40};
  EXPECT_EQ(cli::resolve_timesteps("all", ts), ts);
  EXPECT_EQ(cli::resolve_timesteps("default", ts), (std::vector<int>{10, 20, 30, 40}));
  EXPECT_EQ(cli::resolve_timesteps("15..30", ts), (std::vector<int>{20, 30}));
  EXPECT_EQ(cli::resolve_timesteps("30,10,30", ts), (std::vector<int>{10, 30}));
  EXPECT_EQ(code_of([&] { cli::resolve_timesteps("41..50", ts); }), ErrorCode::kEmptyTimestepSet);
  EXPECT_EQ(code_of([&] { cli::resolve_timesteps("5", ts); }), ErrorCode::kInvalidArgument);
  EXPECT_TRUE(cli::timestep_selector_valid("1..2"));
  EXPECT_FALSE(cli::timestep_selector_valid("1..x"));
  EXPECT_FALSE(cli::timestep_selector_valid("a,b"));
}

TEST(CliTest, UsageAndRuntimeErrors) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"layers", "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);

  const auto missing = run({"layers", "--dump", "/nonexistent/imap", "--out", "/tmp/x.json"});
  EXPECT_EQ(missing.code, cli::kExitRuntime);
  EXPECT_NE(missing.err.find("error[MissingFile]"), std::string::npos);

  TempDir dir("cli_usage");
  EXPECT_EQ(run({"synth", "--preset", "nope", "--out", (dir / "d").string()}).code, cli::kExitUsage);
  EXPECT_EQ(run({"synth", "--preset", "combined", "--out", (dir / "d").string()}).code, cli::kExitOk);
  const std::string d = (dir / "d").string();
  EXPECT_EQ(run({"map", "--dump", d, "--concept", "motion", "--mode", "wrong", "--out", "m"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"map", "--dump", d, "--concept", "motion", "--top-k", "0", "--out", "m"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"map", "--dump", d, "--concept", "motion", "--heads", "random:x", "--out", "m"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"layers", "--dump", d, "--timesteps", "3..", "--out", "l"}).code, cli::kExitUsage);
  const auto absent = run({"map", "--dump", d, "--concept", "dog", "--out", (dir / "m").string()});
  EXPECT_EQ(absent.code, cli::kExitRuntime);
  EXPECT_NE(absent.err.find("error[ConceptNotInManifest]"), std::string::npos);
}

TEST(CliTest, EndToEndPipeline) {
  TempDir dir("cli_e2e");
  const std::string d = (dir / "dump").string();
  auto r = run({"synth", "--preset", "combined", "--seed", "1", "--out", d});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["records"], 12);

  r = run({"validate", "--dump", d, "--out", (dir / "v.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(json::parse(r.out)["ok"].get<bool>());

  r = run({"layers", "--dump", d, "--out", (dir / "layers.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["selected"], json::array({0, 1}));
  const auto layers = json::parse(imap::testing::slurp(dir / "layers.json"));
  EXPECT_TRUE(layers.contains("per_layer"));

  r = run({"heads", "--dump", d, "--layer", "0", "--timestep", "10", "--top-k", "2", "--out",
           (dir / "heads.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto truth = synth::read_truth(dir / "dump" / synth::kTruthName);
  const auto heads = json::parse(imap::testing::slurp(dir / "heads.json"));
  auto selected = heads["records"][0]["selected"].get<std::vector<int>>();
  std::sort(selected.begin(), selected.end());
  EXPECT_EQ(selected, truth.motion_heads.at({10, 0}));

  const std::string m = (dir / "m").string();
  r = run({"map", "--dump", d, "--concept", "motion", "--mode", "imap", "--top-k", "2", "--out", m});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(m));
  EXPECT_TRUE(std::filesystem::exists(mapio::sidecar_path(m)));
  const auto mf = mapio::read_map_file(m);
  ASSERT_EQ(mf.volumes.size(), 1u);
  EXPECT_EQ(mf.temporal_compression, 4);

  // Ground truth labels at pixel resolution from the planted mask.
  const auto& mask = truth.motion_mask;
  segeval::LabelVolume gt(mask.frames * 4, mask.height * 8, mask.width * 8);
  gt.class_names = {"background", "motion"};
  for (std::size_t f = 0; f < gt.frames; ++f) {
    for (std::size_t y = 0; y < gt.height; ++y) {
      for (std::size_t x = 0; x < gt.width; ++x) gt.at(f, y, x) = mask.at(f / 4, y / 8, x / 8);
    }
  }
  segeval::write_labels(dir / "gt", gt);
  r = run({"map", "--dump", d, "--concept", "motion", "--mode", "cross-attn", "--out", (dir / "c").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["mode"], "cross_attn");
  r = run({"eval-seg", "--maps", m, "--labels", (dir / "gt").string(), "--metrics", "miou,mvc2,mvc8,point", "--out",
           (dir / "report.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(imap::testing::slurp(dir / "report.json"));
  EXPECT_TRUE(report.contains("miou"));
  EXPECT_TRUE(report["mvc"].contains("mvc8"));
  EXPECT_GE(report["point_accuracy"].get<double>(), 0.75);

  r = run({"eval-seg", "--maps", m, m, "--labels", (dir / "gt").string(), "--out", (dir / "r2.json").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  r = run({"eval-seg", "--maps", m, "--labels", (dir / "gt").string(), "--metrics", "mvc99", "--out",
           (dir / "r3.json").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find("WindowTooLarge"), std::string::npos);

  // Frames for rendering: 16 flat frames at pixel resolution.
  std::filesystem::create_directories(dir / "frames");
  for (int i = 0; i < 16; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "f%02d.ppm", i);
    render::write_ppm(dir / "frames" / name,
                      render::FrameImage(32, 32, {static_cast<std::uint8_t>(i * 10), 40, 40}));
  }
  r = run({"render", "--frames", (dir / "frames").string(), "--map", m, "--out", (dir / "render").string(), "--grid"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["files"], 16 * 2 + 1);
  EXPECT_TRUE(std::filesystem::exists(dir / "render/motion/grid.ppm"));
}

TEST(CliTest, ValidateFailureExitsOne) {
  TempDir dir("cli_validate");
  const std::string d = (dir / "dump").string();
  ASSERT_EQ(run({"synth", "--preset", "planted-surrogate", "--out", d}).code, 0);
  const auto victim = dir / "dump" / dumpio::record_file_name(0, 1);
  auto bytes = read_file_bytes(victim);
  bytes.resize(bytes.size() - 100);
  write_file_bytes(victim, bytes);
  const auto r = run({"validate", "--dump", d});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find("error[SchemaViolation]"), std::string::npos);
  EXPECT_EQ(json::parse(r.out)["failed_records"], 1);
}

TEST(CliTest, OutputsIgnoreThreadCount) {
  TempDir dir("cli_threads");
  const std::string d = (dir / "dump").string();
  ASSERT_EQ(run({"synth", "--preset", "combined", "--seed", "3", "--out", d}).code, 0);
  for (const char* t : {"1", "4"}) {
    const std::string suffix = t;
    ASSERT_EQ(run({"--threads", t, "layers", "--dump", d, "--out", (dir / ("l" + suffix)).string()}).code, 0);
    ASSERT_EQ(run({"--threads", t, "map", "--dump", d, "--concept", "motion", "--heads", "random:5", "--top-k", "3",
                   "--norm", "none", "--assembly", "column", "--out", (dir / ("m" + suffix)).string()})
                  .code,
              0);
  }
  EXPECT_EQ(read_file_bytes(dir / "l1"), read_file_bytes(dir / "l4"));
  EXPECT_EQ(read_file_bytes(dir / "m1"), read_file_bytes(dir / "m4"));
  EXPECT_EQ(read_file_bytes(dir / "m1.json"), read_file_bytes(dir / "m4.json"));
  const auto side = json::parse(imap::testing::slurp(dir / "m1.json"));
  EXPECT_NE(side.dump().find("full_column"), std::string::npos);
  EXPECT_NE(side.dump().find("random"), std::string::npos);
}
