#include "lasgd/trace.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace lasgd {

double measure_round_time(const RunTrace& trace) {
  const auto& r = trace.rounds;
  if (r.size() < 10) {
    throw TraceError("measure_round_time: need at least 10 rounds, trace has " + std::to_string(r.size()));
  }
  double acc = 0.0;
  for (std::size_t k = kWarmupRounds + 1; k < r.size(); ++k) acc += r[k].time_s - r[k - 1].time_s;
  return acc / static_cast<double>(r.size() - kWarmupRounds - 1);
}

ByteTotals bytes_accounting(const RunTrace& trace) {
  ByteTotals totals;
  totals.per_node = trace.summary.bytes_per_node;
  if (totals.per_node.empty()) totals.per_node.assign(trace.num_nodes, 0);
  totals.total = trace.summary.total_bytes;
  return totals;
}

void write_trace_csv(const RunTrace& trace, std::ostream& out) {
  out << "# lasgd-trace v1\n";
  out << "# algo=" << to_string(trace.algo) << '\n';
  out << "# nodes=" << trace.num_nodes << '\n';
  out << "# batch_size=" << trace.batch_size << '\n';
  out << "# dataset_size=" << trace.dataset_size << '\n';
  for (const auto& [key, value] : trace.metadata) out << "# " << key << '=' << value << '\n';

  out << "round,sim_time_s";
  for (std::size_t i = 0; i < trace.num_nodes; ++i) out << ",node_tau_" << i;
  out << ",loss,eta,grad_evals,bytes_sent\n";

  out << std::setprecision(17);
  for (const auto& rec : trace.rounds) {
    out << rec.round << ',' << rec.time_s;
    for (std::size_t tau : rec.node_tau) out << ',' << tau;
    out << ',' << rec.loss << ',' << rec.eta << ',' << rec.grad_evals << ',' << rec.bytes_sent << '\n';
  }
}

void write_trace_csv(const RunTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot open " + path.string() + " for writing");
  write_trace_csv(trace, out);
}

LoadedTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace " + path.string());
  LoadedTrace loaded;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        const std::size_t start = line.find_first_not_of("# ");
        loaded.metadata[line.substr(start, eq - start)] = line.substr(eq + 1);
      }
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      if (cells.size() < 6 || cells[0] != "round" || cells[1] != "sim_time_s") {
        throw TraceError(where + ": malformed trace header");
      }
      loaded.num_nodes = cells.size() - 6;
      for (std::size_t i = 0; i < loaded.num_nodes; ++i) {
        if (cells[2 + i] != "node_tau_" + std::to_string(i)) throw TraceError(where + ": malformed trace header");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != loaded.num_nodes + 6) throw TraceError(where + ": wrong field count");
    try {
      RoundRecord rec;
      rec.round = std::stoull(cells[0]);
      rec.time_s = std::stod(cells[1]);
      for (std::size_t i = 0; i < loaded.num_nodes; ++i) rec.node_tau.push_back(std::stoull(cells[2 + i]));
      const std::size_t base = 2 + loaded.num_nodes;
      rec.loss = std::stod(cells[base]);
      rec.eta = std::stod(cells[base + 1]);
      rec.grad_evals = std::stoull(cells[base + 2]);
      rec.bytes_sent = std::stoull(cells[base + 3]);
      loaded.rounds.push_back(std::move(rec));
    } catch (const std::logic_error&) {
      throw TraceError(where + ": unparsable field");
    }
  }
  if (!have_header) throw TraceError(path.string() + ": no trace header");
  return loaded;
}

std::string summary_json(const RunTrace& trace) {
  nlohmann::ordered_json j;
  j["algo"] = to_string(trace.algo);
  j["final_loss"] = trace.summary.final_loss;
  j["wall_time_s"] = trace.summary.wall_time_s;
  j["rounds"] = trace.summary.rounds;
  j["speedup_vs_ref"] = trace.summary.speedup_vs_ref ? nlohmann::ordered_json(*trace.summary.speedup_vs_ref)
                                                      : nlohmann::ordered_json(nullptr);
  j["grad_evals"] = trace.summary.grad_evals;
  j["total_bytes"] = trace.summary.total_bytes;
  j["bytes_per_node"] = trace.summary.bytes_per_node;
  j["idle_time_s"] = trace.summary.idle_time_s;
  for (const auto& [key, value] : trace.metadata) j["metadata"][key] = value;
  return j.dump(2) + "\n";
}

}  // namespace lasgd
