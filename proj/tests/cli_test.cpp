#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support/planted.hpp"

namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("stmine-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(dir / name, std::ios::binary) << content;
    return (dir / name).string();
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir / name, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  /// Runs the CLI with stdout and stderr captured to files; returns the exit status.
  int run(const std::string& args, const std::string& tag = "out") const {
    std::string cmd = std::string("'") + STMINE_CLI + "' " + args + " > '" + (dir / (tag + ".stdout")).string() +
                      "' 2> '" + (dir / (tag + ".stderr")).string() + "'";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

}  // namespace

TEST(Cli, HelpSucceeds) {
  Workspace w;
  EXPECT_EQ(w.run("--help"), 0);
  EXPECT_NE(w.read("out.stdout").find("run"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  Workspace w;
  EXPECT_EQ(w.run("run"), 2);
  EXPECT_EQ(w.run(""), 2);
  EXPECT_EQ(w.run("run --events x.csv --granularity day"), 2);
}

TEST(Cli, DataErrorsExitOne) {
  Workspace w;
  auto csv = w.write("nodate.csv", "PLACE,A\nR1,1\n");
  EXPECT_EQ(w.run("run --events '" + csv + "'"), 1);
  EXPECT_NE(w.read("out.stderr").find("MissingColumn"), std::string::npos);
  EXPECT_EQ(w.run("run --events '" + (w.dir / "absent.csv").string() + "'"), 1);
  auto ok = w.write("ok.csv", "DATE,PLACE,A\n2016-01-01,R1,1\n");
  EXPECT_EQ(w.run("run --events '" + ok + "' --min-support 0"), 1);
  EXPECT_EQ(w.run("run --events '" + ok + "' --start 2016-02-01 --end 2016-01-01"), 1);
}

TEST(Cli, RunIsDeterministicAndRecoversPlantedRule) {
  Workspace w;
  auto data = planted::make();
  auto csv = w.write("events.csv", data.csv);
  auto regions = w.write("regions.geojson", data.geojson);
  auto base = "run --events '" + csv + "' --regions '" + regions + "' --seed 0";
  ASSERT_EQ(w.run(base + " --out '" + (w.dir / "a.json").string() + "'"), 0);
  ASSERT_EQ(w.run(base, "b"), 0);
  EXPECT_EQ(w.read("a.json"), w.read("b.stdout"));

  auto artifact = nlohmann::json::parse(w.read("a.json"));
  EXPECT_EQ(artifact["schemaVersion"], 1);
  EXPECT_EQ(artifact["config"]["seed"], 0);
  bool found = false;
  for (const auto& r : artifact["rules"]) {
    std::set<std::string> u;
    for (const auto& i : r["antecedent"]) u.insert(i.get<std::string>());
    for (const auto& i : r["consequent"]) u.insert(i.get<std::string>());
    found = found || u == std::set<std::string>{"A:x", "B:y", "C:z"};
  }
  EXPECT_TRUE(found);
}

TEST(Cli, RunHonoursOptions) {
  Workspace w;
  auto data = planted::make();
  auto csv = w.write("events.csv", data.csv);
  ASSERT_EQ(w.run("run --events '" + csv + "' --attributes A,B,C --start 2016-06-01 --end 2016-08-31"
                  " --granularity month --min-support 0.1 --min-lift 1.2 --resolution 2 --seed 4 --max-rule-len 3"),
            0);
  auto j = nlohmann::json::parse(w.read("out.stdout"));
  EXPECT_EQ(j["config"]["attributeColumns"], (nlohmann::json{"A", "B", "C"}));
  EXPECT_EQ(j["slices"].size(), 3u);
  EXPECT_EQ(j["partition"]["resolution"], 2.0);
  for (const auto& r : j["rules"]) EXPECT_LE(r["antecedent"].size() + r["consequent"].size(), 3u);
}

TEST(Cli, ValidateWarnsOnUnmatchedPlaces) {
  Workspace w;
  auto csv = w.write("events.csv", "DATE,PLACE,A\n2016-01-01,R1,1\n2016-01-01,Atlantis,2\n");
  auto regions = w.write("regions.geojson", planted::regions_geojson(2));
  EXPECT_EQ(w.run("validate --events '" + csv + "' --regions '" + regions + "'"), 0);
  EXPECT_NE(w.read("out.stderr").find("Atlantis"), std::string::npos);
  auto j = nlohmann::json::parse(w.read("out.stdout"));
  EXPECT_EQ(j["report"]["unmatchedPlaces"], nlohmann::json{"Atlantis"});
  EXPECT_EQ(j["report"]["keptRows"], 2);

  auto matched = w.write("ok.csv", "DATE,PLACE,A\n2016-01-01,R1,1\n");
  EXPECT_EQ(w.run("validate --events '" + matched + "' --regions '" + regions + "'"), 0);
  EXPECT_EQ(w.read("out.stderr"), "");
}
