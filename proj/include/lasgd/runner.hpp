#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lasgd/harness.hpp"

namespace lasgd {

inline constexpr int kConfigSchemaVersion = 1;

/// Everything needed to reproduce one run.
struct RunConfig {
  Algorithm algo = Algorithm::Lasgd;
  double epochs = 1.0;
  std::size_t max_rounds = 0;
  std::uint64_t seed = 0;
  ClusterSpec cluster;
  HyperParams hyper;
  ProblemSpec problem;
  std::string out_dir = "out";
  std::string label;
};

/// Invalid configuration. Carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/**
 * Parses a config document. Missing optional keys take defaults; unknown
 * keys, wrong types and failed range checks are all collected and thrown
 * together as a ConfigError.
 */
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Semantic checks on an already-typed config. Empty when valid.
std::vector<std::string> validate_config(const RunConfig& config);

/// The config with every default filled in, in schema order.
nlohmann::ordered_json resolved_config(const RunConfig& config);

/// FNV-1a over the compact resolved config, as 16 hex digits.
std::string config_hash(const RunConfig& config);
/// Same, over only the problem section and epoch count. Runs are comparable
/// iff their problem hashes match.
std::string problem_hash(const RunConfig& config);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// run_simulation with the config's settings and its hashes stamped into the trace metadata.
RunTrace execute(const RunConfig& config);

struct RunArtifacts {
  std::filesystem::path trace_csv;
  std::filesystem::path summary_json;
  std::filesystem::path resolved_config;
};

/// Writes trace.csv, summary.json and config.resolved.json into `dir`.
RunArtifacts write_run_outputs(const RunConfig& config, const RunTrace& trace, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Comparison

struct CompareRow {
  std::string label;
  std::string algo;
  std::size_t tau_max = 1;
  double final_loss = 0.0;
  double wall_time_s = 0.0;
  double speedup = 1.0;  // reference wall time / this wall time
  std::string problem_hash;
};

/// Throws ConfigError unless there are at least two configs and all share the first one's problem hash.
void require_comparable(const std::vector<RunConfig>& configs);

/// Speedups relative to the first entry. Throws ConfigError when problem hashes differ.
std::vector<CompareRow> compare_runs(const std::vector<RunConfig>& configs, const std::vector<RunTrace>& traces);

void write_compare_table(const std::vector<CompareRow>& rows, std::ostream& out);
void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out);

// ---------------------------------------------------------------------------
// Plot data

/**
 * Long-format CSV with header algo,label,x_kind,x,loss. Each trace contributes
 * one curve against epochs (grad_evals * batch_size / dataset_size) and one
 * against simulated time. Throws TraceError on traces without the needed
 * metadata.
 */
void write_plotdata(const std::vector<LoadedTrace>& traces, std::ostream& out);

}  // namespace lasgd
