#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "support.hpp"
#include "tags/tags.hpp"

namespace tags {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out, err;
};

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(TAGS_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

const char* kTinyConfig = R"({
  "train": {"epochs": 2, "batch_size": 2},
  "model": {"width": 8, "num_heads": 2, "consistency_width": 4}
})";

TEST(Cli, SynthWritesDataset) {
  const fs::path dir = testing::scratch_dir("cli");
  const RunResult r =
      run("synth --out " + (dir / "data").string() + " --videos 4 --classes 3 --snippets 24 --min-len 2 --max-len 6 --seed 7", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const AnnotationSet ann = read_annotations(dir / "data" / "annotations.json");
  EXPECT_EQ(ann.videos.size(), 4u);
  EXPECT_EQ(ann.classes.size(), 3u);
  for (const auto& [id, v] : ann.videos) {
    const Matrix m = read_matrix(dir / "data" / "features" / (id + ".tagf"));
    EXPECT_EQ(m.rows(), 24u);
  }
}

TEST(Cli, PipelineTrainInferEvalProfileSimdump) {
  const fs::path dir = testing::scratch_dir("cli");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run("synth --out " + data + " --videos 4 --val-videos 2 --snippets 16 --dim 6 --min-len 2 --max-len 5 --max-instances 2 --seed 3", dir).code,
            0);
  write_file(dir / "config.json", kTinyConfig);

  RunResult r = run("train --data " + data + " --config " + (dir / "config.json").string() + " --out " +
                        (dir / "run").string() + " --seed 5",
                    dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 2"), std::string::npos);
  const Checkpoint ck = read_checkpoint(dir / "run" / "checkpoint.tagc");
  EXPECT_EQ(ck.config.seed, 5u);
  EXPECT_EQ(ck.config.model.input_dim, 6u);
  EXPECT_EQ(ck.config.model.snippets, 16u);
  const std::string csv = read_file(dir / "run" / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  r = run("infer --checkpoint " + (dir / "run" / "checkpoint.tagc").string() + " --data " + data +
              " --subset val --out " + (dir / "pred").string(),
          dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const PredictionSet preds = read_predictions(dir / "pred" / "predictions.json");
  EXPECT_EQ(preds.size(), 2u);

  const std::string gt = (dir / "data" / "annotations.json").string();
  const std::string pred_file = (dir / "pred" / "predictions.json").string();
  r = run("eval --preds " + pred_file + " --gt " + gt + " --subset val --tious 0.5,0.75,0.95", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(r.out);
  EXPECT_EQ(rep.at("tious").size(), 3u);
  EXPECT_EQ(rep.at("mAP").size(), 3u);
  EXPECT_TRUE(rep.contains("average_mAP"));
  EXPECT_TRUE(rep.contains("per_class_AP"));

  r = run("profile-fp --preds " + pred_file + " --gt " + gt + " --subset val --out " + (dir / "fp").string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("budgets").size(), 10u);
  EXPECT_TRUE(fs::exists(dir / "fp" / "fp_profile.csv"));

  const std::string first = (dir / "data" / "features" / (preds.begin()->first + ".tagf")).string();
  r = run("simdump --checkpoint " + (dir / "run" / "checkpoint.tagc").string() + " --features " + first + " --out " +
              (dir / "sim").string(),
          dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const Matrix sim = read_matrix(dir / "sim" / (preds.begin()->first + "_similarity.tagf"));
  EXPECT_EQ(sim.rows(), 16u);
  EXPECT_EQ(sim.cols(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(sim(i, i), 1.0, 1e-12);
}

TEST(Cli, GradcheckPasses) {
  const fs::path dir = testing::scratch_dir("cli");
  const RunResult r = run("gradcheck --seed 7 --configs 2", dir);
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  for (const char* name : {"L_c", "L_m", "L_pp", "L_fc", "total"}) EXPECT_NE(r.out.find(name), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, UnknownFlagPrintsUsage) {
  const fs::path dir = testing::scratch_dir("cli");
  const RunResult r = run("synth --bogus 3", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run("", dir).code, 1);
  EXPECT_EQ(run("frobnicate", dir).code, 1);
}

TEST(Cli, ValidationErrorsExitOne) {
  const fs::path dir = testing::scratch_dir("cli");
  write_file(dir / "bad.json", R"({"train": {"epocs": 3}})");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run("synth --out " + data + " --videos 2 --snippets 16 --dim 6 --min-len 2 --max-len 5 --max-instances 2", dir).code, 0);
  RunResult r = run("train --data " + data + " --config " + (dir / "bad.json").string() + " --out " +
                        (dir / "run").string(),
                    dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("epocs"), std::string::npos);
  r = run("eval --preds " + (dir / "bad.json").string() + " --gt " + data + "/annotations.json", dir);
  EXPECT_EQ(r.code, 1);
  r = run("eval --preds " + (dir / "missing.json").string() + " --gt " + data + "/annotations.json", dir);
  EXPECT_EQ(r.code, 1);
  r = run("synth --out " + data + " --videos 0", dir);
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  const fs::path dir = testing::scratch_dir("cli");
  write_file(dir / "occupied", "x");
  const RunResult r = run("synth --out " + (dir / "occupied").string() + " --videos 2", dir);
  EXPECT_EQ(r.code, 2) << r.err;
}

}  // namespace
}  // namespace tags
