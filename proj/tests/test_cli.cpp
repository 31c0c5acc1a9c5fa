#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = LIME_SHIFT_CLI;
const std::string kEcho = LIME_SHIFT_ECHO_SCORER;
const std::string kData = LIME_SHIFT_DATA_DIR;
const std::string kFixtures = LIME_SHIFT_FIXTURE_DIR;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  Run r;
  FILE* p = popen((kCli + " " + args + " 2>/dev/null").c_str(), "r");
  char buf[4096];
  for (std::size_t got; (got = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lime_shift_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Trains once per process; training is deterministic so sharing is safe.
const std::string& model_path() {
  static const std::string path = [] {
    const auto p = (scratch("model") / "model.json").string();
    run("train --dataset " + kData + "/train.svm --out " + p);
    return p;
  }();
  return path;
}

std::vector<std::pair<std::uint32_t, double>> printed_weights(const std::string& out) {
  std::vector<std::pair<std::uint32_t, double>> w;
  std::istringstream in(out);
  std::string line;
  bool in_table = false;
  while (std::getline(in, line)) {
    if (line == "feature weight") {
      in_table = true;
      continue;
    }
    if (!in_table) continue;
    if (line.rfind("intercept", 0) == 0) break;
    std::istringstream ls(line);
    std::uint32_t id;
    double v;
    ls >> id >> v;
    w.emplace_back(id, v);
  }
  return w;
}

}  // namespace

TEST(CliTrain, ReachesAccuracyAndIsDeterministic) {
  const auto dir = scratch("train");
  const auto a = run("train --dataset " + kData + "/train.svm --out " + (dir / "a.json").string());
  const auto b = run("train --dataset " + kData + "/train.svm --out " + (dir / "b.json").string());
  ASSERT_EQ(a.code, 0);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(a.out, m, std::regex("accuracy=([0-9.]+)")));
  EXPECT_GE(std::stod(m[1]), 0.95);
  EXPECT_NE(a.out.find("loss="), std::string::npos);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(a.out, b.out);
}

TEST(CliTrain, UsageErrorsExitTwo) {
  EXPECT_EQ(run("train --dataset " + kData + "/train.svm --out /tmp/x.json --gamma 0").code, 2);
  EXPECT_EQ(run("train --dataset /nonexistent.svm --out /tmp/x.json").code, 2);
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(CliExplain, ConstantScorerPrintsZeroWeights) {
  const auto r = run("explain --dataset " + kData + "/test.svm --instance 0 --num-samples 300 --external \"" + kEcho +
                     " --mode constant --value 0.3\"");
  ASSERT_EQ(r.code, 0);
  ASSERT_NE(r.out.find("feature weight"), std::string::npos);
  for (const auto& [id, w] : printed_weights(r.out)) EXPECT_NEAR(w, 0.0, 1e-8) << id;
  EXPECT_NE(r.out.find("intercept 0.3\n"), std::string::npos);
}

TEST(CliExplain, LinearScorerTopKIsAnalyticTopK) {
  // Instance 0 of the test file holds ids 200, 202, 203, 212, ...; the four
  // largest coefficients sit on the first four.
  const std::string weights = "200:0.12,202:-0.11,203:0.09,212:-0.08,213:0.06,219:-0.055,224:0.035,226:-0.03";
  const auto r = run("explain --dataset " + kData + "/test.svm --instance 0 --num-samples 2000 --num-features 4 "
                     "--ridge 1e-6 --external \"" + kEcho + " --mode linear --bias 0.5 --weights " + weights + "\"");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto w = printed_weights(r.out);
  ASSERT_EQ(w.size(), 4u);
  std::set<std::uint32_t> ids;
  for (const auto& [id, v] : w) ids.insert(id);
  EXPECT_EQ(ids, (std::set<std::uint32_t>{200, 202, 203, 212}));
  EXPECT_EQ(w[0].first, 200u);
}

TEST(CliExplain, RerunPrintsIdenticalOutput) {
  const std::string args = "explain --dataset " + kData + "/test.svm --model " + model_path() +
                           " --instance 4 --num-samples 400 --seed 9";
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(printed_weights(a.out).size(), 6u);
}

TEST(CliExplain, JsonOutputIsWritten) {
  const auto dir = scratch("explain_json");
  const auto r = run("explain --dataset " + kData + "/test.svm --model " + model_path() +
                     " --instance 1 --num-samples 200 --json " + (dir / "e.json").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(slurp(dir / "e.json").find("\"features\""), std::string::npos);
}

TEST(CliExplain, InstanceOutOfRangeExitsTwo) {
  const auto r = run("explain --dataset " + kData + "/test.svm --model " + model_path() + " --instance 200");
  EXPECT_EQ(r.code, 2);
}

TEST(CliAudit, WritesEveryFileWithProvenance) {
  const auto dir = scratch("audit");
  const auto r = run("audit --train " + kData + "/train.svm --test " + kData + "/test.svm --model " + model_path() +
                     " --n 2,5 --limit 4 --seed 3 --jobs 2 --out " + dir.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("| n | Reject | Failed to reject | MMD |"), std::string::npos);
  const std::string prov = "seed=3 config=fnv1a64:";
  for (const char* name : {"report.csv", "rows.csv", "plot_fidelity.csv", "plot_mmd_fidelity.csv", "report.md",
                           "report.json", "MANIFEST.json"}) {
    ASSERT_TRUE(fs::exists(dir / name)) << name;
  }
  for (const char* name : {"report.csv", "rows.csv", "plot_fidelity.csv", "plot_mmd_fidelity.csv", "report.md"}) {
    EXPECT_NE(slurp(dir / name).find(prov), std::string::npos) << name;
  }
  EXPECT_NE(slurp(dir / "report.json").find("\"config_digest\""), std::string::npos);
  EXPECT_NE(slurp(dir / "rows.csv").find("instance_id,n,fidelity,"), std::string::npos);
}

TEST(CliAudit, PartialFailureWritesManifestAndExitsOne) {
  const auto dir = scratch("audit_fail");
  const auto r = run("audit --train " + kData + "/train.svm --test " + kData + "/test.svm --model " + model_path() +
                     " --n 2,700 --limit 2 --out " + dir.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(fs::exists(dir / "rows_partial.csv"));
  EXPECT_NE(slurp(dir / "errors.json").find("instance 0 (n=700)"), std::string::npos);
}

TEST(CliAudit, BadGridExitsTwo) {
  const auto r = run("audit --train " + kData + "/train.svm --test " + kData + "/test.svm --model " + model_path() +
                     " --n 5,2 --out /tmp/never");
  EXPECT_EQ(r.code, 2);
}

TEST(CliReport, GoldenFixtureRendersByteIdentically) {
  const auto r = run("report --in " + kFixtures + "/golden_report --format md");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, slurp(kFixtures + "/golden_report.md"));
}

TEST(CliReport, MarkdownAndCsvAgree) {
  const auto md = run("report --in " + kFixtures + "/golden_report --format md").out;
  const auto csv = run("report --in " + kFixtures + "/golden_report --format csv").out;
  // Every mean ± std pair in the data-shift table appears in the csv row.
  std::istringstream in(csv);
  std::string line;
  std::size_t checked = 0;
  while (std::getline(in, line)) {
    if (line.rfind("data_shift,", 0) != 0) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    const std::string cell = "| " + cols[1] + " | " + cols[3] + " (";
    EXPECT_NE(md.find(cell), std::string::npos) << cell;
    EXPECT_NE(md.find(cols[7] + " ± " + cols[8]), std::string::npos);
    ++checked;
  }
  EXPECT_EQ(checked, 3u);
  const auto json = run("report --in " + kFixtures + "/golden_report --format json");
  EXPECT_EQ(json.code, 0);
  EXPECT_EQ(json.out.front(), '{');
}

TEST(CliReport, CorruptOrMissingReportExitsTwo) {
  const auto dir = scratch("corrupt");
  std::ofstream(dir / "report.json") << "{\"provenance\": [1, 2";
  const std::string cmd = kCli + " report --in " + dir.string() + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string err;
  char buf[512];
  for (std::size_t got; (got = fread(buf, 1, sizeof buf, p)) > 0;) err.append(buf, got);
  const int status = pclose(p);
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_NE(err.find("byte"), std::string::npos) << err;
  EXPECT_EQ(run("report --in /nonexistent/dir").code, 2);
}

TEST(CliHelp, DocumentsCsvSchemas) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("n,fidelity_mean,fidelity_std"), std::string::npos);
  EXPECT_NE(r.out.find("test,instance_id,n,mmd_b,fidelity"), std::string::npos);
}
