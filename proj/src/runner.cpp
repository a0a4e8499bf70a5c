#include "lasgd/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace lasgd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg;
  for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
  return msg;
}

/// Typed reads from one JSON object, collecting errors and flagging unknown keys.
class Section {
 public:
  Section(const json* obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (obj_ && !obj_->is_object()) {
      errors_.push_back(name("") + ": must be an object");
      obj_ = nullptr;
    }
  }

  ~Section() {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items()) {
      if (!seen_.count(key)) errors_.push_back(name(key) + ": unknown key");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_ && obj_->contains(key) && !(*obj_)[key].is_null();
  }

  const json* child(const std::string& key) {
    return has(key) ? &(*obj_)[key] : nullptr;
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = (*obj_)[key];
    if (!v.is_number()) return type_error(key, "a number");
    out = v.get<double>();
  }

  void optional_number(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    double v = 0.0;
    number(key, v);
    out = v;
  }

  template <typename U>
  void count(const std::string& key, U& out) {
    if (!has(key)) return;
    const json& v = (*obj_)[key];
    if (!v.is_number_integer()) return type_error(key, "an integer");
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
      errors_.push_back(name(key) + " must be >= 0");
      return;
    }
    out = static_cast<U>(v.get<std::uint64_t>());
  }

  void flag(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = (*obj_)[key];
    if (!v.is_boolean()) return type_error(key, "a boolean");
    out = v.get<bool>();
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = (*obj_)[key];
    if (!v.is_string()) return type_error(key, "a string");
    out = v.get<std::string>();
  }

  template <typename T>
  void list(const std::string& key, std::vector<T>& out) {
    if (!has(key)) return;
    const json& v = (*obj_)[key];
    if (!v.is_array()) return type_error(key, "an array");
    std::vector<T> parsed;
    for (const auto& e : v) {
      if constexpr (std::is_floating_point_v<T>) {
        if (!e.is_number()) return type_error(key, "an array of numbers");
      } else {
        if (!e.is_number_unsigned()) return type_error(key, "an array of non-negative integers");
      }
      parsed.push_back(e.get<T>());
    }
    out = std::move(parsed);
  }

  std::string name(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void error(const std::string& key, const std::string& msg) { errors_.push_back(name(key) + ": " + msg); }

 private:
  void type_error(const std::string& key, const char* what) { error(key, std::string("must be ") + what); }

  const json* obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

ComputeModel parse_compute(const json& j, const std::string& path, std::vector<std::string>& errors) {
  Section s(&j, path, errors);
  std::string kind = "constant";
  s.text("kind", kind);
  if (kind == "constant") {
    ConstantTime m;
    s.number("seconds", m.seconds);
    return m;
  }
  if (kind == "uniform") {
    UniformTime m;
    s.number("lo", m.lo);
    s.number("hi", m.hi);
    return m;
  }
  if (kind == "lognormal") {
    const bool by_shape = s.has("median") || s.has("cv");
    if (by_shape) {
      double median = 0.1, cv = 0.0;
      s.number("median", median);
      s.number("cv", cv);
      if (s.has("mu") || s.has("sigma")) s.error("", "give either median/cv or mu/sigma, not both");
      if (!(median > 0.0) || !(cv >= 0.0)) {
        s.error("", "lognormal needs median > 0 and cv >= 0");
        return LogNormalTime{};
      }
      return LogNormalTime::from_median_cv(median, cv);
    }
    LogNormalTime m;
    s.number("mu", m.mu);
    s.number("sigma", m.sigma);
    return m;
  }
  s.error("kind", "unknown compute model '" + kind + "' (constant, uniform, lognormal)");
  return ConstantTime{};
}

ordered_json compute_json(const ComputeModel& model) {
  ordered_json j;
  if (const auto* c = std::get_if<ConstantTime>(&model)) {
    j["kind"] = "constant";
    j["seconds"] = c->seconds;
  } else if (const auto* u = std::get_if<UniformTime>(&model)) {
    j["kind"] = "uniform";
    j["lo"] = u->lo;
    j["hi"] = u->hi;
  } else if (const auto* l = std::get_if<LogNormalTime>(&model)) {
    j["kind"] = "lognormal";
    j["mu"] = l->mu;
    j["sigma"] = l->sigma;
  }
  return j;
}

const char* task_name(TaskKind kind) { return kind == TaskKind::Regression ? "regression" : "classification"; }

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ordered_json problem_json(const RunConfig& c) {
  ordered_json p;
  p["kind"] = to_string(c.problem.kind);
  p["n"] = c.problem.n;
  p["d"] = c.problem.d;
  p["noise"] = c.problem.noise;
  p["seed"] = c.problem.seed;
  p["batch_size"] = c.problem.batch_size;
  p["hidden"] = c.problem.hidden;
  p["task"] = task_name(c.problem.mlp_task);
  return p;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error("invalid config: " + join_errors(errors)), errors_(std::move(errors)) {}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig parse_config(const json& doc) {
  std::vector<std::string> errors;
  RunConfig c;
  {
    Section root(&doc, "", errors);
    if (!root.has("schema_version")) {
      errors.push_back("schema_version: required");
    } else {
      int version = 0;
      root.count("schema_version", version);
      if (version != kConfigSchemaVersion) {
        errors.push_back("schema_version: unsupported version " + std::to_string(version) + " (expected " +
                         std::to_string(kConfigSchemaVersion) + ")");
      }
    }

    std::string algo = to_string(c.algo);
    root.text("algo", algo);
    if (auto a = parse_algorithm(algo)) {
      c.algo = *a;
    } else {
      errors.push_back("algo: unknown algorithm '" + algo + "' (sgd-ar, lasgd, easgd)");
    }
    root.number("epochs", c.epochs);
    root.count("max_rounds", c.max_rounds);
    if (!root.has("seed")) errors.push_back("seed: required");
    root.count("seed", c.seed);
    c.cluster.seed = c.seed;
    c.problem.seed = c.seed;

    {
      Section cl(root.child("cluster"), "cluster", errors);
      cl.count("nodes", c.cluster.num_nodes);
      if (const json* compute = cl.child("compute")) {
        if (compute->is_array()) {
          c.cluster.compute.clear();
          for (std::size_t i = 0; i < compute->size(); ++i) {
            c.cluster.compute.push_back(parse_compute((*compute)[i], "cluster.compute[" + std::to_string(i) + "]", errors));
          }
        } else {
          c.cluster.compute = {parse_compute(*compute, "cluster.compute", errors)};
        }
      }
      {
        Section link(cl.child("link"), "cluster.link", errors);
        link.number("bandwidth_bytes_per_s", c.cluster.link.bandwidth_bytes_per_s);
        link.number("latency_s", c.cluster.link.latency_s);
      }
      std::string backend = to_string(c.cluster.backend);
      cl.text("backend", backend);
      if (backend == "simulated") {
        c.cluster.backend = Backend::Simulated;
      } else if (backend == "threaded") {
        c.cluster.backend = Backend::Threaded;
      } else {
        errors.push_back("cluster.backend: unknown backend '" + backend + "' (simulated, threaded)");
      }
      cl.number("contention", c.cluster.contention);
      cl.count("bytes_per_element", c.cluster.bytes_per_element);
      cl.number("time_scale", c.cluster.time_scale);
    }

    {
      Section pr(root.child("problem"), "problem", errors);
      std::string kind = to_string(c.problem.kind);
      pr.text("kind", kind);
      if (auto k = parse_problem_kind(kind)) {
        c.problem.kind = *k;
      } else {
        errors.push_back("problem.kind: unknown problem '" + kind + "' (least_squares, logistic, mlp)");
      }
      pr.count("n", c.problem.n);
      pr.count("d", c.problem.d);
      pr.number("noise", c.problem.noise);
      pr.count("seed", c.problem.seed);
      pr.count("batch_size", c.problem.batch_size);
      pr.list("hidden", c.problem.hidden);
      std::string task = task_name(c.problem.mlp_task);
      pr.text("task", task);
      if (task == "regression") {
        c.problem.mlp_task = TaskKind::Regression;
      } else if (task == "classification") {
        c.problem.mlp_task = TaskKind::Classification;
      } else {
        errors.push_back("problem.task: unknown task '" + task + "' (regression, classification)");
      }
    }

    {
      Section hy(root.child("hyper"), "hyper", errors);
      hy.count("tau_max", c.hyper.tau_max);
      hy.number("alpha", c.hyper.alpha);
      hy.number("beta", c.hyper.beta);
      hy.optional_number("rho", c.hyper.rho);
      hy.optional_number("gamma", c.hyper.gamma);
      hy.number("momentum", c.hyper.modifier.momentum);
      hy.flag("nesterov", c.hyper.modifier.nesterov);
      hy.number("weight_decay", c.hyper.modifier.weight_decay);
      Section lr(hy.child("lr"), "hyper.lr", errors);
      lr.number("base", c.hyper.schedule.base_lr);
      lr.count("scale_nodes", c.hyper.schedule.scale_nodes);
      lr.number("warmup_epochs", c.hyper.schedule.warmup_epochs);
      lr.list("decay_epochs", c.hyper.schedule.decay_epochs);
      lr.number("decay_factor", c.hyper.schedule.decay_factor);
    }

    {
      Section out(root.child("output"), "output", errors);
      out.text("dir", c.out_dir);
      out.text("label", c.label);
    }
  }
  c.hyper.num_nodes = c.cluster.num_nodes;
  if (c.label.empty()) c.label = to_string(c.algo);

  // Semantic checks run even after parse errors so every violation is reported at once.
  for (auto& e : validate_config(c)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path.string()});
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": not valid JSON: " + e.what()});
  }
  return parse_config(doc);
}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errors;
  for (auto& e : c.cluster.validate()) errors.push_back("cluster." + e);
  for (auto& e : c.hyper.validate(c.algo)) errors.push_back("hyper." + e);
  if (!(c.epochs >= 0.0) || !std::isfinite(c.epochs)) errors.push_back("epochs: must be >= 0");
  if (c.epochs == 0.0 && c.max_rounds == 0) errors.push_back("epochs: need epochs > 0 or max_rounds > 0");
  if (c.problem.n == 0) errors.push_back("problem.n: must be >= 1");
  if (c.problem.d == 0) errors.push_back("problem.d: must be >= 1");
  if (c.problem.batch_size == 0) errors.push_back("problem.batch_size: must be >= 1");
  if (!(c.problem.noise >= 0.0)) errors.push_back("problem.noise: must be >= 0");
  if (c.problem.n < c.cluster.num_nodes) errors.push_back("problem.n: fewer samples than nodes");
  if (c.problem.kind != ProblemKind::Mlp && !c.problem.hidden.empty()) {
    errors.push_back("problem.hidden: only meaningful for mlp");
  }
  for (std::size_t h : c.problem.hidden) {
    if (h == 0) errors.push_back("problem.hidden: layer widths must be >= 1");
  }
  return errors;
}

ordered_json resolved_config(const RunConfig& c) {
  ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["algo"] = to_string(c.algo);
  j["epochs"] = c.epochs;
  j["max_rounds"] = c.max_rounds;
  j["seed"] = c.seed;

  ordered_json cl;
  cl["nodes"] = c.cluster.num_nodes;
  if (c.cluster.compute.size() == 1) {
    cl["compute"] = compute_json(c.cluster.compute.front());
  } else {
    cl["compute"] = ordered_json::array();
    for (const auto& m : c.cluster.compute) cl["compute"].push_back(compute_json(m));
  }
  cl["link"]["bandwidth_bytes_per_s"] = c.cluster.link.bandwidth_bytes_per_s;
  cl["link"]["latency_s"] = c.cluster.link.latency_s;
  cl["backend"] = to_string(c.cluster.backend);
  cl["contention"] = c.cluster.contention;
  cl["bytes_per_element"] = c.cluster.bytes_per_element;
  cl["time_scale"] = c.cluster.time_scale;
  j["cluster"] = cl;

  j["problem"] = problem_json(c);

  ordered_json hy;
  hy["tau_max"] = c.hyper.tau_max;
  hy["alpha"] = c.hyper.alpha;
  hy["beta"] = c.hyper.beta;
  hy["rho"] = c.hyper.rho ? ordered_json(*c.hyper.rho) : ordered_json(nullptr);
  hy["gamma"] = c.hyper.gamma ? ordered_json(*c.hyper.gamma) : ordered_json(nullptr);
  hy["momentum"] = c.hyper.modifier.momentum;
  hy["nesterov"] = c.hyper.modifier.nesterov;
  hy["weight_decay"] = c.hyper.modifier.weight_decay;
  hy["lr"]["base"] = c.hyper.schedule.base_lr;
  hy["lr"]["scale_nodes"] = c.hyper.schedule.scale_nodes;
  hy["lr"]["warmup_epochs"] = c.hyper.schedule.warmup_epochs;
  hy["lr"]["decay_epochs"] = c.hyper.schedule.decay_epochs;
  hy["lr"]["decay_factor"] = c.hyper.schedule.decay_factor;
  j["hyper"] = hy;

  j["output"]["dir"] = c.out_dir;
  j["output"]["label"] = c.label;
  return j;
}

std::string config_hash(const RunConfig& config) {
  ordered_json j = resolved_config(config);
  j.erase("output");  // where results go does not change them
  return hex16(fnv1a64(j.dump()));
}

std::string problem_hash(const RunConfig& config) {
  ordered_json j;
  j["problem"] = problem_json(config);
  j["epochs"] = config.epochs;
  return hex16(fnv1a64(j.dump()));
}

RunTrace execute(const RunConfig& config) {
  const Problem problem = build_problem(config.problem);
  RunOptions options;
  options.max_rounds = config.max_rounds;
  RunTrace trace = run_simulation(config.cluster, config.algo, config.hyper, problem, config.epochs, options);
  trace.metadata["config_hash"] = config_hash(config);
  trace.metadata["problem_hash"] = problem_hash(config);
  trace.metadata["label"] = config.label;
  trace.metadata["tau_max"] = std::to_string(config.hyper.tau_max);
  return trace;
}

RunArtifacts write_run_outputs(const RunConfig& config, const RunTrace& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunArtifacts a{dir / "trace.csv", dir / "summary.json", dir / "config.resolved.json"};
  write_trace_csv(trace, a.trace_csv);

  std::ofstream summary(a.summary_json);
  if (!summary) throw TraceError("cannot open " + a.summary_json.string() + " for writing");
  summary << summary_json(trace);

  ordered_json resolved = resolved_config(config);
  resolved["config_hash"] = config_hash(config);
  resolved["problem_hash"] = problem_hash(config);
  std::ofstream cfg(a.resolved_config);
  if (!cfg) throw TraceError("cannot open " + a.resolved_config.string() + " for writing");
  cfg << resolved.dump(2) << '\n';
  return a;
}

void require_comparable(const std::vector<RunConfig>& configs) {
  if (configs.size() < 2) throw ConfigError({"compare: need at least two configs"});
  std::vector<std::string> errors;
  const std::string ref_hash = problem_hash(configs.front());
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (problem_hash(configs[i]) != ref_hash) {
      errors.push_back("compare: config " + std::to_string(i) + " (" + configs[i].label +
                       ") has a different problem hash than the reference");
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

std::vector<CompareRow> compare_runs(const std::vector<RunConfig>& configs, const std::vector<RunTrace>& traces) {
  if (configs.size() != traces.size()) throw std::invalid_argument("compare_runs: one trace per config");
  require_comparable(configs);
  std::vector<CompareRow> rows;
  const double ref_time = traces.front().summary.wall_time_s;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    CompareRow row;
    row.label = configs[i].label;
    row.algo = to_string(configs[i].algo);
    row.tau_max = configs[i].hyper.tau_max;
    row.final_loss = traces[i].summary.final_loss;
    row.wall_time_s = traces[i].summary.wall_time_s;
    row.speedup = i == 0 ? 1.0 : ref_time / row.wall_time_s;
    row.problem_hash = problem_hash(configs[i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_compare_table(const std::vector<CompareRow>& rows, std::ostream& out) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  out << std::left << std::setw(static_cast<int>(w)) << "label" << "  " << std::setw(7) << "algo" << "  "
      << std::right << std::setw(7) << "tau_max" << "  " << std::setw(12) << "final_loss" << "  " << std::setw(12)
      << "wall_time_s" << "  " << std::setw(8) << "speedup" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(w)) << r.label << "  " << std::setw(7) << r.algo << "  "
        << std::right << std::setw(7) << r.tau_max << "  " << std::setw(12) << std::setprecision(6) << r.final_loss
        << "  " << std::setw(12) << std::setprecision(6) << r.wall_time_s << "  " << std::setw(8) << std::fixed
        << std::setprecision(3) << r.speedup << std::defaultfloat << '\n';
  }
}

void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out) {
  out << "label,algo,tau_max,final_loss,wall_time_s,speedup,problem_hash\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.label << ',' << r.algo << ',' << r.tau_max << ',' << r.final_loss << ',' << r.wall_time_s << ','
        << r.speedup << ',' << r.problem_hash << '\n';
  }
}

void write_plotdata(const std::vector<LoadedTrace>& traces, std::ostream& out) {
  out << "algo,label,x_kind,x,loss\n" << std::setprecision(17);
  for (const auto& t : traces) {
    auto meta = [&](const char* key) -> const std::string& {
      auto it = t.metadata.find(key);
      if (it == t.metadata.end()) throw TraceError(std::string("trace is missing metadata '") + key + "'");
      return it->second;
    };
    const std::string& algo = meta("algo");
    const auto label_it = t.metadata.find("label");
    const std::string label = label_it == t.metadata.end() ? algo : label_it->second;
    double batch = 0.0, n = 0.0;
    try {
      batch = std::stod(meta("batch_size"));
      n = std::stod(meta("dataset_size"));
    } catch (const std::logic_error&) {
      throw TraceError("trace has unparsable batch_size or dataset_size");
    }
    if (!(n > 0.0)) throw TraceError("trace has dataset_size 0");
    for (const auto& r : t.rounds) {
      out << algo << ',' << label << ",epoch," << static_cast<double>(r.grad_evals) * batch / n << ',' << r.loss << '\n';
    }
    for (const auto& r : t.rounds) out << algo << ',' << label << ",time," << r.time_s << ',' << r.loss << '\n';
  }
}

}  // namespace lasgd
