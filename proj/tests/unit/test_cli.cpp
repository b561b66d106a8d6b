#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace cellloc::cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cellloc");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cellloc_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path generated_data() {
  static const fs::path dir = [] {
    const auto d = scratch("data") / "sets";
    REQUIRE(cli({"generate", "--out", d.string(), "--count", "4", "--seed", "40"}).code == 0);
    return d;
  }();
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("generate writes six sets and a manifest") {
  const auto dir = scratch("gen");
  const auto r = cli({"generate", "--out", (dir / "a").string(), "--count", "6", "--seed", "7"});
  CHECK(r.code == kExitOk);
  std::size_t csv = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) csv += e.path().extension() == ".csv";
  CHECK(csv == 6);
  REQUIRE(fs::exists(dir / "a" / kManifestName));

  CHECK(cli({"generate", "--out", (dir / "b").string(), "--count", "6", "--seed", "7"}).code ==
        0);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    CHECK(sha256_file(e.path()) == sha256_file(dir / "b" / e.path().filename()));
  }
}

TEST_CASE("generate rejects an invalid scenario") {
  const auto dir = scratch("badscenario");
  write(dir / "s.json", "{\"channel\": {\"shadow_std_db\": -1}}");
  auto r = cli({"generate", "--scenario", (dir / "s.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == kExitUsage);
  CHECK_FALSE(r.err.empty());
  write(dir / "t.json", "{ nope");
  r = cli({"generate", "--scenario", (dir / "t.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("evaluate summary matches report.json") {
  const auto dir = scratch("eval");
  write(dir / "cfg.json", R"({"moment_L": 1, "filter": "none"})");
  const auto r = cli({"evaluate", "--data", generated_data().string(), "--config",
                      (dir / "cfg.json").string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == kExitOk);
  const auto report = nlohmann::json::parse(slurp(dir / "o" / "report.json"));
  const double mean = report["summary"]["mean_accuracy"].get<double>();
  CHECK(report["summary"]["splits"] == 4);
  const auto pos = r.out.find("mean accuracy ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 14)) == mean);
}

TEST_CASE("evaluate with named nodes, L=2 and hmm") {
  const auto dir = scratch("eval2");
  write(dir / "cfg.json",
        R"({"nodes": ["I-E", "I-DR", "O-M", "O-DR"], "moment_L": 2, "filter": "hmm",
            "splits": [{"train": ["set_01", "set_02", "set_03"], "validation": "set_04"}]})");
  const auto r = cli({"evaluate", "--data", generated_data().string(), "--config",
                      (dir / "cfg.json").string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == kExitOk);
  const auto pred = slurp(dir / "o" / "predictions.csv");
  CHECK(pred.substr(0, pred.find('\n')) == "t,truth,y_hat,z_hat");
  const auto report = nlohmann::json::parse(slurp(dir / "o" / "report.json"));
  CHECK(report["reports"][0]["config"]["nodes"].size() == 4);
  CHECK(fs::exists(dir / "o" / "models" / "hmm_000.json"));

  // The saved model drives the filter command to the same output.
  const auto f = cli({"filter", "--predictions", (dir / "o" / "predictions.csv").string(),
                      "--hmm", (dir / "o" / "models" / "hmm_000.json").string()});
  CHECK(f.code == kExitOk);
  CHECK(f.out == pred);
}

TEST_CASE("evaluate reports config and data problems with exit codes") {
  const auto dir = scratch("evalerr");
  const auto data = generated_data().string();
  const auto out = (dir / "o").string();
  write(dir / "unknown.json", R"({"bogus": 1})");
  CHECK(cli({"evaluate", "--data", data, "--config", (dir / "unknown.json").string(), "--out",
             out}).code == kExitUsage);
  auto r = cli({"evaluate", "--data", data, "--nodes", "I-E,NOPE", "--out", out});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("O-DL") != std::string::npos);
  CHECK(cli({"evaluate", "--data", data, "--L", "0", "--out", out}).code == kExitUsage);
  CHECK(cli({"evaluate", "--data", data, "--filter", "kalman", "--out", out}).code ==
        kExitUsage);
  CHECK(cli({"evaluate", "--bogus-flag"}).code == kExitUsage);

  fs::create_directories(dir / "bad");
  write(dir / "bad" / "a.csv", "t,label,rssi_A\n0,0,-50\n1,0,-101\n");
  write(dir / "bad" / "b.csv", "t,label,rssi_A\n0,0,-50\n");
  r = cli({"evaluate", "--data", (dir / "bad").string(), "--out", out});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("row 2") != std::string::npos);
  CHECK(cli({"validate", "--data", (dir / "bad").string()}).code == kExitData);
  CHECK(cli({"validate", "--data", data}).code == kExitOk);
}

TEST_CASE("data directory from the environment") {
  const auto dir = scratch("env");
  ::setenv(kDataDirEnv, generated_data().c_str(), 1);
  CHECK(cli({"validate"}).code == kExitOk);
  ::unsetenv(kDataDirEnv);
  CHECK(cli({"validate"}).code == kExitUsage);
}

TEST_CASE("sweep-l output shape and usage errors") {
  const auto dir = scratch("sweepl");
  write(dir / "cfg.json", R"({"L": [1, 2, 3], "filters": ["none", "median:1", "hmm"],
                              "masks": "full"})");
  const auto r = cli({"sweep-l", "--data", generated_data().string(), "--config",
                      (dir / "cfg.json").string(), "--out", (dir / "o").string(), "--jobs", "2"});
  REQUIRE(r.code == kExitOk);
  std::istringstream csv(slurp(dir / "o" / "accuracy_vs_L.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "L,filter,mean_accuracy,cells");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 9);

  write(dir / "empty.json", R"({"L": []})");
  CHECK(cli({"sweep-l", "--data", generated_data().string(), "--config",
             (dir / "empty.json").string(), "--out", (dir / "x").string()}).code == kExitUsage);
}

TEST_CASE("sweep-nodes writes per-mask rows and a histogram") {
  const auto dir = scratch("sweepn");
  write(dir / "cfg.json",
        R"({"L": 2, "masks": [["I-E"], ["I-E", "O-M"], ["O-M", "O-DR"]],
            "splits": [{"train": ["set_01", "set_02", "set_03"], "validation": "set_04"}]})");
  const auto r = cli({"sweep-nodes", "--data", generated_data().string(), "--config",
                      (dir / "cfg.json").string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == kExitOk);
  const auto masks = slurp(dir / "o" / "mask_accuracy.csv");
  CHECK(std::count(masks.begin(), masks.end(), '\n') == 4);
  CHECK(slurp(dir / "o" / "mask_histogram.csv").rfind("bin_lo,bin_hi,count\n", 0) == 0);
}

TEST_CASE("replay reproduces evaluate and sweep outputs byte for byte") {
  const auto dir = scratch("replay");
  const auto data = generated_data().string();
  write(dir / "cfg.json", R"({"moment_L": 2, "filter": "hmm", "save_models": true})");
  REQUIRE(cli({"evaluate", "--data", data, "--config", (dir / "cfg.json").string(), "--out",
               (dir / "a").string()}).code == 0);
  write(dir / "sw.json", R"({"L": [1, 2], "filters": ["none", "hmm"], "masks": "full"})");
  REQUIRE(cli({"sweep-l", "--data", data, "--config", (dir / "sw.json").string(), "--out",
               (dir / "s").string(), "--jobs", "3"}).code == 0);

  for (const char* run : {"a", "s"}) {
    const auto again = dir / (std::string(run) + "2");
    REQUIRE(cli({"replay", "--manifest", (dir / run / kManifestName).string(), "--out",
                 again.string()}).code == 0);
    for (const auto& e : fs::recursive_directory_iterator(dir / run)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), dir / run);
      CHECK_MESSAGE(slurp(e.path()) == slurp(again / rel), rel.string());
    }
  }
}

TEST_CASE("replay refuses changed inputs") {
  const auto dir = scratch("replaychanged");
  fs::copy(generated_data(), dir / "data");
  REQUIRE(cli({"evaluate", "--data", (dir / "data").string(), "--out", (dir / "a").string()})
              .code == 0);
  std::ofstream(dir / "data" / "set_01.csv", std::ios::app) << "\n";
  const auto r = cli({"replay", "--manifest", (dir / "a" / kManifestName).string(), "--out",
                      (dir / "b").string()});
  CHECK(r.code == kExitData);
}

TEST_CASE("filter command with a median window") {
  const auto dir = scratch("filter");
  write(dir / "p.csv", "t,truth,y_hat\n0,0,0\n1,0,1\n2,,0\n3,0,0\n");
  const auto r = cli({"filter", "--predictions", (dir / "p.csv").string(), "--median", "2"});
  CHECK(r.code == kExitOk);
  CHECK(r.out == "t,truth,y_hat,z_hat\n0,0,0,0\n1,0,1,0\n2,,0,0\n3,0,0,0\n");
  CHECK(cli({"filter", "--predictions", (dir / "p.csv").string()}).code == kExitUsage);
}

TEST_CASE("help and version exit cleanly") {
  auto r = cli({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("sweep-nodes") != std::string::npos);
  CHECK(cli({"--version"}).code == kExitOk);
  CHECK(cli({}).code == kExitUsage);
}
