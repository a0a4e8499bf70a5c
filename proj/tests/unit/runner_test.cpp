#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "lasgd/runner.hpp"

using namespace lasgd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal() {
  return json::parse(R"({
    "schema_version": 1,
    "algo": "lasgd",
    "epochs": 2,
    "seed": 5,
    "cluster": {"nodes": 4, "compute": {"kind": "constant", "seconds": 0.1},
                "link": {"bandwidth_bytes_per_s": 1000.0}},
    "problem": {"kind": "logistic", "n": 256, "d": 6, "batch_size": 8}
  })");
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::vector<std::string> errors_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("lasgd_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

fs::path write_json(const fs::path& path, const json& doc) {
  std::ofstream(path) << doc.dump(2);
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(LASGD_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

}  // namespace

TEST(Config, MinimalConfigGetsDefaults) {
  const RunConfig c = parse_config(minimal());
  EXPECT_EQ(c.algo, Algorithm::Lasgd);
  EXPECT_EQ(c.cluster.num_nodes, 4u);
  EXPECT_EQ(c.hyper.num_nodes, 4u);
  EXPECT_EQ(c.hyper.tau_max, 1u);
  EXPECT_EQ(c.hyper.alpha, 1.0);
  EXPECT_EQ(c.cluster.contention, 0.0);
  EXPECT_EQ(c.cluster.seed, 5u);
  EXPECT_EQ(c.label, "lasgd");
  ASSERT_EQ(c.cluster.compute.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<ConstantTime>(c.cluster.compute[0]));
  const auto resolved = resolved_config(c);
  EXPECT_EQ(resolved["cluster"]["contention"], 0.0);
  EXPECT_EQ(resolved["hyper"]["lr"]["base"], 0.1);
  // The resolved config parses back to the same config.
  EXPECT_EQ(config_hash(parse_config(json::parse(resolved.dump()))), config_hash(c));
}

TEST(Config, UnknownKeysAndRangeViolationsAreAllReported) {
  json doc = minimal();
  doc["cluster"]["speed"] = 3;
  doc["hyper"]["tau_max"] = 0;
  doc["cluster"]["link"]["bandwidth_bytes_per_s"] = 0;
  const auto errors = errors_of(doc);
  EXPECT_TRUE(mentions(errors, "cluster.speed: unknown key"));
  EXPECT_TRUE(mentions(errors, "tau_max"));
  EXPECT_TRUE(mentions(errors, "bandwidth"));
  EXPECT_GE(errors.size(), 3u);
}

TEST(Config, LasgdRequiresUnitElasticity) {
  json doc = minimal();
  doc["hyper"]["alpha"] = 0.5;
  EXPECT_TRUE(mentions(errors_of(doc), "alpha = beta = 1"));
  doc["algo"] = "easgd";
  EXPECT_TRUE(errors_of(doc).empty());
}

TEST(Config, MissingSeedAndBadTypes) {
  json doc = minimal();
  doc.erase("seed");
  doc["epochs"] = "ten";
  doc["algo"] = "adam";
  const auto errors = errors_of(doc);
  EXPECT_TRUE(mentions(errors, "seed: required"));
  EXPECT_TRUE(mentions(errors, "epochs"));
  EXPECT_TRUE(mentions(errors, "algo"));
}

TEST(Config, ComputeModels) {
  json doc = minimal();
  doc["cluster"]["compute"] = json::parse(R"({"kind": "lognormal", "median": 0.2, "cv": 0.15})");
  const RunConfig c = parse_config(doc);
  const auto& ln = std::get<LogNormalTime>(c.cluster.compute[0]);
  EXPECT_NEAR(ln.median(), 0.2, 1e-15);
  doc["cluster"]["compute"] = json::parse(R"([{"kind": "constant", "seconds": 0.1},
      {"kind": "constant", "seconds": 0.1}, {"kind": "uniform", "lo": 0.1, "hi": 0.3},
      {"kind": "constant", "seconds": 0.2}])");
  EXPECT_EQ(parse_config(doc).cluster.compute.size(), 4u);
  doc["cluster"]["compute"] = json::parse(R"([{"kind": "constant", "seconds": 0.1}, {"kind": "constant", "seconds": 0.2}])");
  EXPECT_FALSE(errors_of(doc).empty());
}

TEST(Config, HashesTrackWhatMatters) {
  const RunConfig a = parse_config(minimal());
  json other = minimal();
  other["output"]["dir"] = "elsewhere";
  EXPECT_EQ(config_hash(parse_config(other)), config_hash(a));
  other["hyper"]["tau_max"] = 3;
  const RunConfig b = parse_config(other);
  EXPECT_NE(config_hash(b), config_hash(a));
  EXPECT_EQ(problem_hash(b), problem_hash(a));
  other["problem"]["n"] = 512;
  EXPECT_NE(problem_hash(parse_config(other)), problem_hash(a));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Compare, SelfComparisonIsUnitSpeedup) {
  json doc = minimal();
  doc["algo"] = "sgd-ar";
  const RunConfig c = parse_config(doc);
  const RunTrace t = execute(c);
  const auto rows = compare_runs({c, c}, {t, t});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].speedup, 1.0);
  std::ostringstream csv;
  write_compare_csv(rows, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "label,algo,tau_max,final_loss,wall_time_s,speedup,problem_hash");
}

TEST(Compare, OverlapBeatsSyncAndMismatchedProblemsAreRefused) {
  json doc = minimal();
  doc["cluster"]["link"]["bandwidth_bytes_per_s"] = 2.0 * 3 * 2 * 8 / 0.08;  // one all-reduce = 0.08 s
  doc["algo"] = "sgd-ar";
  const RunConfig sync = parse_config(doc);
  doc["algo"] = "lasgd";
  const RunConfig overlap = parse_config(doc);
  const auto rows = compare_runs({sync, overlap}, {execute(sync), execute(overlap)});
  EXPECT_GE(rows[1].speedup, 1.5);

  doc["problem"]["seed"] = 99;
  EXPECT_THROW(require_comparable({sync, parse_config(doc)}), ConfigError);
  EXPECT_THROW(require_comparable({sync}), ConfigError);
}

TEST(PlotData, OneCurvePerAxisKind) {
  TempDir dir;
  const RunConfig c = parse_config(minimal());
  const RunTrace t = execute(c);
  write_run_outputs(c, t, dir.path());
  const LoadedTrace loaded = read_trace_csv(dir.path() / "trace.csv");
  EXPECT_EQ(loaded.rounds.size(), t.rounds.size());
  std::ostringstream out;
  write_plotdata({loaded}, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "algo,label,x_kind,x,loss");
  std::size_t epoch_rows = 0, time_rows = 0;
  double last_epoch = 0.0;
  while (std::getline(in, line)) {
    if (line.find(",epoch,") != std::string::npos) {
      ++epoch_rows;
      last_epoch = std::stod(line.substr(line.find(",epoch,") + 7));
    }
    time_rows += line.find(",time,") != std::string::npos;
  }
  EXPECT_EQ(epoch_rows, t.rounds.size());
  EXPECT_EQ(time_rows, t.rounds.size());
  // Steps taken after the last completed all-reduce belong to no round.
  EXPECT_LE(last_epoch, 2.0);
  EXPECT_GT(last_epoch, 1.5);

  LoadedTrace bare = loaded;
  bare.metadata.erase("dataset_size");
  std::ostringstream sink;
  EXPECT_THROW(write_plotdata({bare}, sink), TraceError);
}

TEST(Outputs, TraceCsvRoundTripsAndRunsAreReproducible) {
  TempDir a, b;
  const RunConfig c = parse_config(minimal());
  const RunTrace t = execute(c);
  write_run_outputs(c, t, a.path());
  write_run_outputs(c, execute(c), b.path());
  EXPECT_EQ(slurp(a.path() / "trace.csv"), slurp(b.path() / "trace.csv"));
  EXPECT_TRUE(fs::exists(a.path() / "summary.json"));
  const json summary = json::parse(slurp(a.path() / "summary.json"));
  EXPECT_EQ(summary["rounds"], t.summary.rounds);
  const json resolved = json::parse(slurp(a.path() / "config.resolved.json"));
  EXPECT_EQ(resolved["config_hash"], config_hash(c));
  const LoadedTrace back = read_trace_csv(a.path() / "trace.csv");
  EXPECT_EQ(back.metadata.at("config_hash"), config_hash(c));
  EXPECT_EQ(back.num_nodes, 4u);
  for (std::size_t k = 0; k < t.rounds.size(); ++k) {
    EXPECT_EQ(back.rounds[k].loss, t.rounds[k].loss);
    EXPECT_EQ(back.rounds[k].node_tau, t.rounds[k].node_tau);
  }
}

TEST(Cli, RunWritesArtifacts) {
  TempDir dir;
  const fs::path cfg = write_json(dir.path() / "run.json", minimal());
  const CliResult r = cli("run --quiet --config " + cfg.string() + " --out " + (dir.path() / "out").string(), dir.path());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "config.resolved.json"));
}

TEST(Cli, ValidationErrorsExitTwoWithOneLine) {
  TempDir dir;
  json doc = minimal();
  doc["hyper"]["tau_max"] = 0;
  const fs::path cfg = write_json(dir.path() / "bad.json", doc);
  const CliResult r = cli("run --config " + cfg.string(), dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error kind=config message=", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("tau_max"), std::string::npos);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  const CliResult v = cli("validate --config " + cfg.string(), dir.path());
  EXPECT_EQ(v.code, 2);
  const CliResult missing = cli("run --config " + (dir.path() / "nope.json").string(), dir.path());
  EXPECT_EQ(missing.code, 2);
}

TEST(Cli, ValidatePrintsResolvedConfig) {
  TempDir dir;
  const fs::path cfg = write_json(dir.path() / "ok.json", minimal());
  const CliResult r = cli("validate --config " + cfg.string(), dir.path());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"contention\""), std::string::npos);
}

TEST(Cli, DivergenceExitsThree) {
  TempDir dir;
  json doc = minimal();
  doc["problem"]["kind"] = "least_squares";
  doc["hyper"]["lr"]["base"] = 1e4;
  doc["epochs"] = 50;
  const fs::path cfg = write_json(dir.path() / "diverge.json", doc);
  const CliResult r = cli("run --quiet --config " + cfg.string() + " --out " + (dir.path() / "o").string(), dir.path());
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(r.err.rfind("error kind=numeric", 0), 0u) << r.err;
}

TEST(Cli, CompareAndPlotdata) {
  TempDir dir;
  json doc = minimal();
  doc["algo"] = "sgd-ar";
  const fs::path a = write_json(dir.path() / "a.json", doc);
  doc["algo"] = "lasgd";
  const fs::path b = write_json(dir.path() / "b.json", doc);
  const CliResult r = cli("compare " + a.string() + " " + b.string() + " --out " + dir.path().string(), dir.path());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "compare.csv"));
  EXPECT_NE(r.out.find("speedup"), std::string::npos);

  doc["problem"]["n"] = 300;
  const fs::path c = write_json(dir.path() / "c.json", doc);
  EXPECT_EQ(cli("compare --quiet " + a.string() + " " + c.string(), dir.path()).code, 2);

  ASSERT_EQ(cli("run --quiet --config " + a.string() + " --out " + (dir.path() / "ra").string(), dir.path()).code, 0);
  const CliResult p = cli("plotdata " + (dir.path() / "ra" / "trace.csv").string(), dir.path());
  EXPECT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(p.out.rfind("algo,label,x_kind,x,loss\n", 0), 0u);
}
