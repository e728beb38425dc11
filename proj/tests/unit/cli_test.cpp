#include <gtest/gtest.h>

#include <sys/file.h>
#include <sys/wait.h>

#include <fcntl.h>
#include <unistd.h>

#include "alc/coco_io.hpp"
#include "alc/eval.hpp"
#include "alc/review_store.hpp"
#include "fixtures.hpp"

using namespace alc;

namespace {

struct Run {
  int code;
  std::string out;
};

Run alc_cli(const std::string& args, const fx::TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(ALC_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(log)};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

struct Cli : ::testing::Test {
  fx::TempDir dir;

  void SetUp() override {
    ASSERT_EQ(alc_cli("make-corpus --images 60 --seed 3 --out " + q(dir / "truth.json"), dir).code, 0);
    ASSERT_EQ(alc_cli("simulate-noise --truth " + q(dir / "truth.json") + " --out " + q(dir / "crowd.json") +
                          " --ledger " + q(dir / "noise.json") + " --seed 4",
                      dir)
                  .code,
              0);
  }

  std::string pipeline_args(const std::filesystem::path& workdir, const std::string& extra = "",
                            const std::string& sizes = "--x0 6 --k 6") const {
    return "run-pipeline --crowd " + q(dir / "crowd.json") + " --truth " + q(dir / "truth.json") + " --workdir " +
           q(workdir) + " " + sizes + " --g 2 --seed 9 " + extra;
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithConfigCode) {
  EXPECT_EQ(alc_cli("", dir).code, 2);
  EXPECT_EQ(alc_cli("frobnicate", dir).code, 2);
  EXPECT_EQ(alc_cli("make-corpus --out x.json", dir).code, 2);  // --seed is required
  EXPECT_EQ(alc_cli("evaluate --candidate /nonexistent.json --truth /nonexistent.json", dir).code, 2);
  EXPECT_EQ(alc_cli("simulate-noise --truth " + q(dir / "truth.json") + " --out " + q(dir / "x.json") +
                        " --seed 1 --profile loud",
                    dir)
                .code,
            2);
  EXPECT_EQ(alc_cli("simulate-noise --truth " + q(dir / "truth.json") + " --out " + q(dir / "x.json") +
                        " --seed 1 --miss 1.5",
                    dir)
                .code,
            2);
  EXPECT_EQ(alc_cli(pipeline_args(dir / "w0", "", "--x0 0 --k 6"), dir).code, 2);
  EXPECT_EQ(alc_cli("--help", dir).code, 0);
}

TEST_F(Cli, SchemaAndIoErrorsHaveTheirCodes) {
  write_text(dir / "bad.json", R"({"images": [{"id": 1}], "annotations": []})");
  const auto r = alc_cli("evaluate --candidate " + q(dir / "bad.json") + " --truth " + q(dir / "truth.json"), dir);
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.out.find("error:"), std::string::npos);
  EXPECT_EQ(alc_cli("evaluate --candidate " + q(dir / "crowd.json") + " --truth " + q(dir / "truth.json") +
                        " --labels-as-predictions --out /proc/nope/report.json",
                    dir)
                .code,
            3);
}

TEST_F(Cli, GenerationIsDeterministic) {
  ASSERT_EQ(alc_cli("make-corpus --images 60 --seed 3 --out " + q(dir / "truth2.json"), dir).code, 0);
  EXPECT_EQ(read_text(dir / "truth.json"), read_text(dir / "truth2.json"));
  ASSERT_EQ(alc_cli("simulate-noise --truth " + q(dir / "truth.json") + " --out " + q(dir / "crowd2.json") +
                        " --seed 4",
                    dir)
                .code,
            0);
  EXPECT_EQ(read_text(dir / "crowd.json"), read_text(dir / "crowd2.json"));
}

TEST_F(Cli, ZeroRateNoiseIsIdentity) {
  ASSERT_EQ(alc_cli("simulate-noise --truth " + q(dir / "truth.json") + " --out " + q(dir / "same.json") +
                        " --profile zero --seed 8",
                    dir)
                .code,
            0);
  const auto truth = load_coco(dir / "truth.json", Source::Expert);
  const auto same = load_coco(dir / "same.json", Source::Crowd);
  ASSERT_EQ(same.label_count(), truth.label_count());
  for (const auto& [img, _] : truth.images()) {
    const auto a = truth.labels(img), b = same.labels(img);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].box, b[i].box);
  }
}

TEST_F(Cli, EvaluateMatchesLibrary) {
  const auto r = alc_cli("evaluate --candidate " + q(dir / "crowd.json") + " --truth " + q(dir / "truth.json") +
                             " --labels-as-predictions --out " + q(dir / "eval.json"),
                         dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = eval_report_from_json(read_json(dir / "eval.json"));
  const auto truth = load_coco(dir / "truth.json", Source::Expert);
  const auto crowd = load_coco(dir / "crowd.json", Source::Crowd);
  EXPECT_EQ(*report.ap50, *ap50(labels_as_predictions(crowd), truth));
  EXPECT_EQ(report.tide->loc_dap, tide_decompose(labels_as_predictions(crowd), truth)->loc_dap);
  EXPECT_EQ(report.label_quality->f1, label_quality(crowd, truth)->f1);
  EXPECT_NE(r.out.find("AP50"), std::string::npos);
}

TEST_F(Cli, PipelineIsDeterministicAndResumable) {
  const auto a = alc_cli(pipeline_args(dir / "a"), dir);
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(alc_cli(pipeline_args(dir / "b", "--stop-after 1"), dir).code, 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "b" / "cleaned.json"));
  const auto b = alc_cli(pipeline_args(dir / "b"), dir);
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(b.out.find("resuming"), std::string::npos);
  for (const auto* f : {"cleaned.json", "ledger.json", "report.json", "review_decisions.json"})
    EXPECT_EQ(read_text(dir / "a" / f), read_text(dir / "b" / f)) << f;
  const auto report = read_json(dir / "a" / "report.json");
  EXPECT_EQ(report["tide_variant"], "dAP");
  EXPECT_EQ(report["batches"].size(), 3u);
  EXPECT_EQ(report["methods"][1]["method"], "Cleaned Labels");

  // A different configuration may not resume someone else's checkpoints.
  ASSERT_EQ(alc_cli(pipeline_args(dir / "c", "--stop-after 1"), dir).code, 0);
  EXPECT_EQ(alc_cli(pipeline_args(dir / "c", "", "--x0 6 --k 7"), dir).code, 5);
}

TEST_F(Cli, LockedWorkdirIsAStateError) {
  std::filesystem::create_directories(dir / "w");
  const int fd = ::open((dir / "w" / ".alc.lock").c_str(), O_RDWR | O_CREAT, 0644);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::flock(fd, LOCK_EX), 0);
  EXPECT_EQ(alc_cli(pipeline_args(dir / "w"), dir).code, 5);
  ::close(fd);
  EXPECT_EQ(alc_cli(pipeline_args(dir / "w"), dir).code, 0);
}

TEST_F(Cli, InteractiveReviewThenApply) {
  const auto w = dir / "i";
  ASSERT_EQ(alc_cli(pipeline_args(w, "--interactive"), dir).code, 0);
  ASSERT_TRUE(std::filesystem::exists(w / "review" / "queue.jsonl"));
  EXPECT_EQ(alc_cli("apply-review --workdir " + q(w), dir).code, 5);  // items pending
  {
    ReviewStore store(w / "review");
    for (const auto& it : store.items()) store.decide({it.item_id, RejectItem{}, "t", "t"});
  }
  const auto r = alc_cli("apply-review --workdir " + q(w) + " --truth " + q(dir / "truth.json"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(w / "cleaned.json"));
  const auto report = read_json(w / "report.json");
  EXPECT_EQ(report["correction"]["decisions"]["rejected"], ReviewStore(w / "review").items().size());

  const auto md = alc_cli("export-report --format markdown --report " + q(w / "report.json"), dir);
  ASSERT_EQ(md.code, 0);
  EXPECT_NE(md.out.find("| Cleaned Labels |"), std::string::npos);
  EXPECT_EQ(alc_cli("export-report --format json --report " + q(w / "report.json"), dir).code, 0);
  EXPECT_EQ(alc_cli("export-report --format xml --report " + q(w / "report.json"), dir).code, 2);
}

TEST_F(Cli, ConfigFileSuppliesFlags) {
  write_text(dir / "run.toml",
             "[run-pipeline]\ncrowd = \"" + (dir / "crowd.json").string() + "\"\ntruth = \"" +
                 (dir / "truth.json").string() + "\"\nworkdir = \"" + (dir / "cfg").string() +
                 "\"\nx0 = 6\nk = 6\ng = 2\nseed = 9\n");
  const auto r = alc_cli("--config " + q(dir / "run.toml") + " run-pipeline", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_EQ(alc_cli(pipeline_args(dir / "flags"), dir).code, 0);
  EXPECT_EQ(read_text(dir / "cfg" / "cleaned.json"), read_text(dir / "flags" / "cleaned.json"));
}
