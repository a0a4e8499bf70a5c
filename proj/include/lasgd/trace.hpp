#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lasgd/optimizer.hpp"
#include "lasgd/param_vector.hpp"

namespace lasgd {

/// One global round. For LASGD and SGD-AR a round is one completed all-reduce;
/// for EASGD it is every P center exchanges.
struct RoundRecord {
  std::uint64_t round = 0;
  double time_s = 0.0;                 // completion time of the round's collective
  std::vector<std::size_t> node_tau;   // local gradient steps each node took in the round
  double loss = 0.0;                   // full-data loss of the center model
  double eta = 0.0;
  std::uint64_t grad_evals = 0;        // cumulative, all nodes
  std::uint64_t bytes_sent = 0;        // cumulative, all nodes

  // Filled only when RunOptions::record_models is set.
  ParamVector center;
  std::vector<ParamVector> applied;  // per node: sum of eta * direction applied during the round
};

/// Per-node realized schedule, enough to replay a run step for step.
struct NodeSchedule {
  std::vector<std::size_t> round_taus;  // tau at each finalize, in order
  std::size_t trailing_steps = 0;       // steps after the last finalize
};

struct RunSummary {
  double final_loss = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t rounds = 0;
  std::uint64_t grad_evals = 0;
  std::vector<std::uint64_t> bytes_per_node;
  std::uint64_t total_bytes = 0;
  std::vector<double> idle_time_s;
  std::optional<double> speedup_vs_ref;
};

struct RunTrace {
  Algorithm algo = Algorithm::Lasgd;
  std::size_t num_nodes = 1;
  std::size_t dim = 0;
  std::size_t batch_size = 1;
  std::size_t dataset_size = 0;
  std::vector<RoundRecord> rounds;
  std::vector<NodeSchedule> schedules;
  RunSummary summary;
  ParamVector final_model;
  /// Free-form key/value pairs written into the CSV preamble (config hash, label, ...).
  std::map<std::string, std::string> metadata;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rounds discarded by measure_round_time before averaging.
inline constexpr std::size_t kWarmupRounds = 5;

/// Mean of consecutive round-completion gaps after the first kWarmupRounds
/// records. Needs at least 10 rounds.
double measure_round_time(const RunTrace& trace);

struct ByteTotals {
  std::vector<std::uint64_t> per_node;
  std::uint64_t total = 0;
};

ByteTotals bytes_accounting(const RunTrace& trace);

/**
 * Trace CSV. Lines starting with '#' carry `key=value` metadata; the header
 * row is
 *   round,sim_time_s,node_tau_0,...,node_tau_{P-1},loss,eta,grad_evals,bytes_sent
 * Reals are written with 17 significant digits.
 */
void write_trace_csv(const RunTrace& trace, std::ostream& out);
void write_trace_csv(const RunTrace& trace, const std::filesystem::path& path);

struct LoadedTrace {
  std::map<std::string, std::string> metadata;
  std::size_t num_nodes = 0;
  std::vector<RoundRecord> rounds;
};

LoadedTrace read_trace_csv(const std::filesystem::path& path);

/// {"final_loss", "wall_time_s", "rounds", "speedup_vs_ref", ...} as JSON text.
std::string summary_json(const RunTrace& trace);

}  // namespace lasgd
