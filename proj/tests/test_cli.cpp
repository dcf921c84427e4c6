#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "test_support.hpp"

using nlohmann::json;
using relink::testing::TempDir;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(RELINK_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

void write_file(const std::filesystem::path& p, const std::string& content) { std::ofstream(p) << content; }

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, BuildIndexSummary) {
  TempDir dir;
  write_file(dir / "anchors.tsv", "Belgrade\tBelgrade\t8\nbelgrade\tBelgrade_Fortress\t2\nRed Star\tRed_Star_Belgrade\t5\n");
  write_file(dir / "dict.tsv", "belgrade\tBelgrade\n");
  write_file(dir / "w.vec", "2 3\nbelgrade 0.1 0.2 0.3\nstar 1 0 0\n");
  write_file(dir / "e.vec", "3 3\nENTITY/Belgrade 1 1 1\nENTITY/Belgrade_Fortress 0 1 0\nENTITY/Red_Star_Belgrade 0 0 1\n");
  RunResult r = run("build-index --anchors " + q(dir / "anchors.tsv") + " --dict " + q(dir / "dict.tsv") + " --embeddings " +
                    q(dir / "w.vec") + "," + q(dir / "e.vec") + " --out " + q(dir / "s.rel"));
  ASSERT_EQ(r.status, 0) << r.out;
  json summary = json::parse(r.out);
  EXPECT_EQ(summary["surfaces"], 2);
  EXPECT_EQ(summary["entities"], 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "s.rel"));
}

TEST(Cli, TrainLinkEvaluate) {
  TempDir dir;
  RunResult t = run("train --synthetic --synthetic-dir " + q(dir / "syn") + " --epochs 2 --seed 3 --out " + q(dir / "m.bin"));
  ASSERT_EQ(t.status, 0) << t.out;
  const std::string store = q(dir / "syn" / "store.rel");
  const std::string model = q(dir / "m.bin");

  RunResult l = run("link --store " + store + " --model " + model + " --text 'w0001 mention03 w0002'");
  ASSERT_EQ(l.status, 0);
  json records = json::parse(l.out);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].size(), 7u);
  EXPECT_EQ(records[0][0], 6);
  EXPECT_EQ(records[0][1], 9);

  RunResult e = run("evaluate --gold " + q(dir / "syn" / "val.jsonl") + " --store " + store + " --model " + model + " --mode ed --json");
  ASSERT_EQ(e.status, 0);
  EXPECT_GE(json::parse(e.out)["micro_f1"].get<double>(), 0.9);
}

TEST(Cli, InputErrorsExitOne) {
  TempDir dir;
  EXPECT_EQ(run("evaluate --gold " + q(dir / "missing.jsonl") + " --predictions " + q(dir / "missing.jsonl")).status, 1);
  EXPECT_EQ(run("link --store a --model b --text x --bogus-flag").status, 1);
  EXPECT_EQ(run("no-such-command").status, 1);
  EXPECT_EQ(run("link --store " + q(dir / "nope.rel") + " --model " + q(dir / "nope.bin") + " --text x").status, 1);
}

TEST(Cli, ServeFailsFastOnCorruptStore) {
  TempDir dir;
  write_file(dir / "bad.rel", "this is not a store");
  write_file(dir / "m.bin", "nor a model");
  const auto start = std::chrono::steady_clock::now();
  RunResult r = run("serve --store " + q(dir / "bad.rel") + " --model " + q(dir / "m.bin") + " --port 0");
  EXPECT_EQ(r.status, 1);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
}
