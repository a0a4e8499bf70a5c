// lasgd: run, compare and inspect simulated distributed-training experiments.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
// Errors are printed to stderr as a single line: "error kind=<kind> message=<text>".

#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "lasgd/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> epochs;
  std::string out;
  bool quiet = false;
};

int fail(const char* kind, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error kind=" << kind << " message=" << flat << '\n';
  return std::string(kind) == "numeric" ? kExitNumeric : kExitConfig;
}

lasgd::RunConfig load(const std::string& path, const Overrides& o) {
  lasgd::RunConfig c = lasgd::load_config(path);
  if (o.seed) {
    c.seed = *o.seed;
    c.cluster.seed = *o.seed;
  }
  if (o.epochs) c.epochs = *o.epochs;
  if (!o.out.empty()) c.out_dir = o.out;
  if (auto errors = lasgd::validate_config(c); !errors.empty()) throw lasgd::ConfigError(std::move(errors));
  return c;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const lasgd::ConfigError& e) {
    return fail("config", e.what());
  } catch (const lasgd::SimulationAborted& e) {
    return fail("numeric", std::string(e.what()) + " after " + std::to_string(e.partial().rounds.size()) + " rounds");
  } catch (const lasgd::NumericError& e) {
    return fail("numeric", e.what());
  } catch (const lasgd::TraceError& e) {
    return fail("input", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("config", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}

int cmd_run(const std::string& config_path, const Overrides& o) {
  const lasgd::RunConfig c = load(config_path, o);
  const lasgd::RunTrace trace = lasgd::execute(c);
  const lasgd::RunArtifacts a = lasgd::write_run_outputs(c, trace, c.out_dir);
  if (!o.quiet) {
    std::cout << c.label << ": " << trace.summary.rounds << " rounds, final_loss=" << trace.summary.final_loss
              << ", wall_time_s=" << trace.summary.wall_time_s << '\n'
              << "wrote " << a.trace_csv.string() << ", " << a.summary_json.string() << ", "
              << a.resolved_config.string() << '\n';
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const Overrides& o) {
  std::vector<lasgd::RunConfig> configs;
  for (const auto& p : config_paths) {
    Overrides per = o;
    per.out.clear();
    configs.push_back(load(p, per));
  }
  lasgd::require_comparable(configs);  // before spending time on runs
  std::vector<lasgd::RunTrace> traces;
  for (const auto& c : configs) traces.push_back(lasgd::execute(c));
  const auto rows = lasgd::compare_runs(configs, traces);
  if (!o.quiet) lasgd::write_compare_table(rows, std::cout);
  const std::filesystem::path dir = o.out.empty() ? std::filesystem::path("out") : std::filesystem::path(o.out);
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "compare.csv");
  if (!csv) throw lasgd::TraceError("cannot open " + (dir / "compare.csv").string() + " for writing");
  lasgd::write_compare_csv(rows, csv);
  return 0;
}

int cmd_plotdata(const std::vector<std::string>& trace_paths, const Overrides& o) {
  std::vector<lasgd::LoadedTrace> traces;
  for (const auto& p : trace_paths) traces.push_back(lasgd::read_trace_csv(p));
  if (o.out.empty()) {
    lasgd::write_plotdata(traces, std::cout);
    return 0;
  }
  const std::filesystem::path out(o.out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream file(out);
  if (!file) throw lasgd::TraceError("cannot open " + out.string() + " for writing");
  lasgd::write_plotdata(traces, file);
  return 0;
}

int cmd_validate(const std::string& config_path, const Overrides& o) {
  try {
    const lasgd::RunConfig c = load(config_path, o);
    if (!o.quiet) std::cout << lasgd::resolved_config(c).dump(2) << '\n';
    return 0;
  } catch (const lasgd::ConfigError& e) {
    for (const auto& v : e.errors()) std::cerr << "violation " << v << '\n';
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated distributed SGD: run, compare and inspect experiments"};
  app.require_subcommand(1);

  Overrides o;
  std::string config;
  std::vector<std::string> inputs;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Override the run seed");
    sub->add_option("--epochs", o.epochs, "Override the epoch count");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };

  auto* run = app.add_subcommand("run", "Run one experiment and write trace.csv, summary.json, config.resolved.json");
  run->add_option("--config", config, "Config file (JSON)")->required();
  run->add_option("--out", o.out, "Output directory (overrides output.dir)");
  add_common(run);

  auto* compare = app.add_subcommand("compare", "Run several configs on the same problem and tabulate speedups");
  compare->add_option("--config,configs", inputs, "Config files; the first is the reference")->required();
  compare->add_option("--out", o.out, "Directory for compare.csv (default: out)");
  add_common(compare);

  auto* plot = app.add_subcommand("plotdata", "Long-format loss curves from trace CSVs");
  plot->add_option("traces", inputs, "Trace CSV files")->required();
  plot->add_option("--out", o.out, "Output CSV (default: stdout)");
  plot->add_flag("--quiet", o.quiet, "Suppress progress output");

  auto* validate = app.add_subcommand("validate", "Print the resolved config, or every violation");
  validate->add_option("--config", config, "Config file (JSON)")->required();
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  if (*run) return guarded([&] { return cmd_run(config, o); });
  if (*compare) {
    if (inputs.size() < 2) return fail("config", "compare needs at least two configs");
    return guarded([&] { return cmd_compare(inputs, o); });
  }
  if (*plot) return guarded([&] { return cmd_plotdata(inputs, o); });
  return guarded([&] { return cmd_validate(config, o); });
}
