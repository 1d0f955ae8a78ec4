#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>

#include "cogscreen/io.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(COGSCREEN_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  while (const auto n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path workdir() {
  const auto dir = fs::temp_directory_path() / "cogscreen_cli_test";
  fs::create_directories(dir);
  return dir;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("generate --out x.jsonl --no-such-flag").code, 2);
  EXPECT_EQ(cli("train-linear --model svm --train x --out y").code, 2);
  const auto help = cli("--help");
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.output.find("train-attn"), std::string::npos);
  EXPECT_NE(help.output.find("COGSCREEN_DATA_DIR"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsOneAndNamesStage) {
  const auto bad = workdir() / "broken.jsonl";
  cogscreen::atomic_write(bad, "{\"patient_id\": \"P1\"}\n");
  const auto r = cli("match --corpus " + bad.string() + " --out " + (workdir() / "m.csv").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("match"), std::string::npos);
  EXPECT_FALSE(fs::exists(workdir() / "m.csv"));
}

json without_timestamps(json m) {
  m.erase("started_at");
  m.erase("finished_at");
  return m;
}

TEST(Cli, RepeatedRunsGiveIdenticalManifests) {
  const auto dir = workdir();
  std::vector<json> manifests;
  for (const char* name : {"a", "b"}) {
    const auto out = dir / name;
    fs::create_directories(out);
    const auto corpus = (out / "corpus.jsonl").string();
    ASSERT_EQ(cli("generate --n-patients 80 --seed 7 --out " + corpus).code, 0);
    ASSERT_EQ(cli("match --corpus " + corpus + " --out " + (out / "regex.csv").string()).code, 0);
    ASSERT_EQ(cli("train-linear --model regex --folds 5 --train " + (out / "regex.csv").string() + " --test " +
                  (out / "regex.csv").string() + " --out " + (out / "m.json").string() + " --scores-out " +
                  (out / "s.csv").string())
                  .code,
              0);
    auto m = json::parse(cogscreen::read_file(out / "m.json.manifest.json"));
    // Paths differ between the two run directories; hashes must not.
    for (auto* key : {"inputs", "outputs"}) {
      for (auto& a : m[key]) a.erase("path");
    }
    m.erase("argv");
    manifests.push_back(without_timestamps(m));
  }
  EXPECT_EQ(manifests[0], manifests[1]);
  EXPECT_EQ(cogscreen::read_file(dir / "a" / "s.csv"), cogscreen::read_file(dir / "b" / "s.csv"));
}

TEST(Cli, CompareFourScoreFiles) {
  const auto dir = workdir();
  std::string args = "compare";
  for (const char* name : {"baseline", "regex", "tfidf", "attention"}) {
    const auto p = dir / (std::string(name) + ".csv");
    cogscreen::atomic_write(p, "patient_id,score,label\nP1,0.9,1\nP2,0.2,0\nP3,0.6,1\nP4,0.7,0\n");
    args += " " + std::string(name) + "=" + p.string();
  }
  const auto r = cli(args);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("| Model | AUC | Accuracy | FP | FN |"), std::string::npos);
  EXPECT_NE(r.output.find("| attention |"), std::string::npos);
}

TEST(Cli, EvaluateWritesJsonAndMarkdown) {
  const auto dir = workdir();
  const auto scores = dir / "eval.csv";
  cogscreen::atomic_write(scores, "patient_id,score,label\nP1,0.9,1\nP2,0.2,0\nP3,0.6,1\nP4,0.7,0\n");
  ASSERT_EQ(cli("evaluate --scores " + scores.string() + " --threshold 0.5 --out " + (dir / "r.json").string()).code, 0);
  const auto r = json::parse(cogscreen::read_file(dir / "r.json"));
  EXPECT_EQ(r.at("fp"), 1);
  EXPECT_EQ(r.at("threshold_source"), "fixed");
  ASSERT_EQ(cli("evaluate --scores " + scores.string() + " --out " + (dir / "r.md").string()).code, 0);
  EXPECT_NE(cogscreen::read_file(dir / "r.md").find("| Model |"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "r.md.manifest.json"));
}

}  // namespace
