#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "quasar/conformal.hpp"
#include "quasar/http_approver.hpp"
#include "quasar/mock_env.hpp"
#include "quasar/serialize.hpp"
#include "quasar/tasks.hpp"
#include "quasar/transpiler.hpp"

using namespace quasar;
using Json = nlohmann::ordered_json;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kParse = 3,
  kValidation = 4,
  kRejected = 5,
  kRuntime = 6,
  kReplay = 7,
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse:
    case ErrorKind::unsupported:
    case ErrorKind::lowering: return kParse;
    case ErrorKind::validation: return kValidation;
    case ErrorKind::rejected: return kRejected;
    case ErrorKind::replay_miss: return kReplay;
    default: return kRuntime;
  }
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string source;
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  std::string fixtures = QUASAR_DEFAULT_FIXTURES;
  std::string approver = "auto";
  std::string clock = "virtual";
  std::string log;
  bool json = false;
  std::size_t max_loop = LowerOptions{}.max_loop_iterations;

  // calibration and conformal runs
  std::string tasks;
  double alpha = 0.1;
  std::vector<double> tau_grid;
  std::optional<double> tau;
  std::string config;
  std::string out;
  std::size_t splits = 0;
  std::uint64_t split_seed = 1;
  std::size_t count = 400;
};

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::environment, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Loaded {
  std::string text;
  Lowered lowered;
  std::vector<Value> inputs;
  std::map<std::string, Value> named;
};

Loaded load(const Options& o) {
  Loaded l;
  l.text = read_text(o.source);
  l.named = header_inputs(l.text);
  for (const auto& kv : o.inputs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--input expects NAME=VALUE, got " + kv);
    l.named[kv.substr(0, eq)] = parse_value(kv.substr(eq + 1));
  }
  LowerOptions lo = lower_options(l.named);
  lo.max_loop_iterations = o.max_loop;
  l.lowered = transpile(l.text, lo);
  l.inputs = ordered_inputs(l.lowered, l.named);
  return l;
}

MockEnv make_env(const Options& o) {
  std::vector<MockImage> fixtures;
  if (!o.fixtures.empty() && std::filesystem::is_directory(o.fixtures)) fixtures = load_mock_images(o.fixtures);
  return MockEnv(o.seed, std::move(fixtures));
}

struct Clock {
  bool real = false;
  double scale = 1.0;
};

Clock parse_clock(const std::string& s) {
  if (s == "virtual") return {};
  if (s == "real") return {true, 1.0};
  if (s.rfind("real:", 0) == 0) {
    try {
      double scale = std::stod(s.substr(5));
      if (scale > 0) return {true, scale};
    } catch (const std::exception&) {
    }
  }
  throw UsageError("--clock expects virtual, real or real:SCALE, got " + s);
}

std::unique_ptr<Executor> make_executor(const Clock& c) {
  if (!c.real) return std::make_unique<VirtualExecutor>();
  ThreadPoolExecutor::Options opt;
  opt.time_scale = c.scale;
  return std::make_unique<ThreadPoolExecutor>(opt);
}

/// Makespan in log milliseconds.
double makespan(const RunOutcome& r, const Clock& c) { return c.real ? r.makespan_ms / c.scale : r.makespan_ms; }

struct ApproverHandle {
  std::unique_ptr<Approver> approver;
  TraceLog trace;
  bool serving = false;
};

void make_approver(const std::string& choice, ApproverHandle& h) {
  if (choice == "auto") {
    h.approver = std::make_unique<AutoApprover>();
  } else if (choice == "prompt") {
    h.approver = std::make_unique<PromptApprover>(std::cin, std::cerr);
  } else if (choice.rfind("serve", 0) == 0) {
    std::string port_text;
    if (choice.size() > 6 && choice[5] == ':') {
      port_text = choice.substr(6);
    } else if (choice == "serve") {
      if (const char* p = std::getenv("QUASAR_PORT")) port_text = p;
    }
    if (port_text.empty()) throw UsageError("--approver serve needs a port (serve:PORT or QUASAR_PORT)");
    int port = 0;
    try {
      port = std::stoi(port_text);
    } catch (const std::exception&) {
      throw UsageError("bad port " + port_text);
    }
    if (port < 0 || port > 65535) throw UsageError("bad port " + port_text);
    auto http = std::make_unique<HttpApprover>(h.trace, "127.0.0.1", port);
    std::cerr << "approval console endpoint: http://127.0.0.1:" << http->port() << std::endl;
    h.approver = std::move(http);
    h.serving = true;
  } else {
    throw UsageError("--approver expects auto, prompt or serve:PORT, got " + choice);
  }
}

std::string fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double percent_reduction(double before, double after) { return before > 0 ? 100.0 * (before - after) / before : 0; }

int report_failure(const RunOutcome& r) {
  if (r.status == RunOutcome::Status::rejected) return kRejected;
  if (r.error) {
    std::cerr << "error: " << to_string(r.error->kind()) << ": " << r.error->what();
    if (!r.failed_site.empty()) std::cerr << " (at " << r.failed_site << ")";
    std::cerr << "\n";
    return exit_code(r.error->kind());
  }
  std::cerr << "error: run produced no result\n";
  return kRuntime;
}

// ---------------------------------------------------------------------------

int cmd_transpile(const Options& o) {
  Loaded l = load(o);
  std::cout << serialize(l.lowered.program, l.lowered.funcs);
  return kOk;
}

int cmd_run(const Options& o) {
  Loaded l = load(o);
  MockEnv env = make_env(o);
  Clock clock = parse_clock(o.clock);
  auto exec = make_executor(clock);
  ApproverHandle h;
  make_approver(o.approver, h);
  RunOptions ro;
  ro.inputs = l.inputs;
  ro.trace = &h.trace;
  RunOutcome r = run(l.lowered.program, l.lowered.funcs, env, *h.approver, *exec, ro);
  if (o.json) {
    Json j{{"status", to_string(r.status)}, {"approval_rounds", r.rounds}, {"makespan_ms", makespan(r, clock)}};
    if (r.value) j["result"] = to_text(*r.value);
    if (r.status == RunOutcome::Status::rejected) j["rejected_batch"] = r.rejected_batch;
    if (r.error) j["error"] = r.error->what();
    std::cout << j.dump(2) << "\n";
  } else if (r.ok()) {
    std::cout << "Result: " << to_text(*r.value) << "\n";
  } else if (r.status == RunOutcome::Status::rejected) {
    std::cout << "Rejected: batch " << r.rejected_batch << "\n";
  }
  if (!o.json && r.status != RunOutcome::Status::failed) {
    std::cout << "approval rounds: " << r.rounds << "\n";
    std::cout << "makespan: " << fixed(makespan(r, clock)) << " ms\n";
  }
  return r.ok() ? kOk : report_failure(r);
}

int cmd_record(const Options& o) {
  Loaded l = load(o);
  MockEnv env = make_env(o);
  RecordingEnv rec(env);
  AutoApprover approver;
  VirtualExecutor exec;
  RunOptions ro;
  ro.inputs = l.inputs;
  RunOutcome r = run(l.lowered.program, l.lowered.funcs, rec, approver, exec, ro);
  if (!r.ok()) return report_failure(r);
  ReplayLog log = rec.log();
  log.save(o.log);
  std::cout << "Result: " << to_text(*r.value) << "\n";
  std::cout << "recorded " << log.records.size() << " call(s) to " << o.log << "\n";
  return kOk;
}

int cmd_bench(const Options& o) {
  Loaded l = load(o);
  Clock clock = parse_clock(o.clock);
  const ReplayLog log = ReplayLog::load(o.log);

  ReplayEnv seq_env(log);
  ReferenceResult seq = reference_eval(parse_source(l.text), seq_env, l.named, o.max_loop);

  ReplayEnv par_env(log);
  AutoApprover approver;
  auto exec = make_executor(clock);
  RunOptions ro;
  ro.inputs = l.inputs;
  RunOutcome par = run(l.lowered.program, l.lowered.funcs, par_env, approver, *exec, ro);
  if (!par.ok()) return report_failure(par);
  if (!(*par.value == seq.value))
    throw Error(ErrorKind::replay_miss,
                "parallel result " + to_text(*par.value) + " differs from sequential " + to_text(seq.value));

  double s = seq.latency_ms, p = makespan(par, clock);
  std::size_t per_call = seq.calls.size(), batched = par.rounds;
  if (o.json) {
    Json j{{"result", to_text(seq.value)},
           {"sequential_ms", s},
           {"parallel_ms", p},
           {"reduction_percent", percent_reduction(s, p)},
           {"per_call_interactions", per_call},
           {"batched_interactions", batched},
           {"interaction_reduction_percent", percent_reduction(static_cast<double>(per_call),
                                                               static_cast<double>(batched))}};
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::cout << "Result: " << to_text(seq.value) << "\n";
  std::cout << "sequential makespan: " << fixed(s) << " ms\n";
  std::cout << "parallel makespan: " << fixed(p) << " ms\n";
  std::cout << "reduction: " << fixed(percent_reduction(s, p)) << "%\n";
  std::cout << "interactions: " << per_call << " per-call vs " << batched << " batched ("
            << fixed(percent_reduction(static_cast<double>(per_call), static_cast<double>(batched)))
            << "% fewer)\n";
  return kOk;
}

ConformalConfig base_config(const Options& o) {
  ConformalConfig cfg = fitted_config(o.alpha);
  if (!o.tau_grid.empty()) cfg.tau_grid = o.tau_grid;
  return cfg;
}

Json config_json(const ConformalConfig& cfg) {
  return Json{{"alpha", cfg.alpha},
              {"tau", cfg.chosen_tau},
              {"tau_grid", cfg.tau_grid},
              {"base_thresholds", cfg.base_thresholds},
              {"detection_certain_threshold", cfg.detection_certain_threshold},
              {"default_threshold", cfg.default_threshold}};
}

ConformalConfig config_from_json(const nlohmann::json& j) {
  ConformalConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.chosen_tau = j.at("tau").get<double>();
  if (j.contains("tau_grid")) cfg.tau_grid = j["tau_grid"].get<std::vector<double>>();
  if (j.contains("base_thresholds")) cfg.base_thresholds = j["base_thresholds"].get<std::map<std::string, double>>();
  cfg.detection_certain_threshold = j.value("detection_certain_threshold", cfg.detection_certain_threshold);
  cfg.default_threshold = j.value("default_threshold", cfg.default_threshold);
  return cfg;
}

int cmd_calibrate(const Options& o) {
  auto tasks = load_task_bank(o.tasks, o.seed);
  ConformalConfig cfg = base_config(o);
  OutcomeTable table = evaluate_grid(tasks, cfg);
  std::vector<std::size_t> all(tasks.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto errors = grid_errors(table, all);
  std::size_t chosen = select_tau(cfg.tau_grid, errors, cfg.alpha);
  cfg.chosen_tau = cfg.tau_grid[chosen];
  std::vector<double> certain(cfg.tau_grid.size(), 0);
  for (const auto& row : table.certain)
    for (std::size_t j = 0; j < row.size(); ++j) certain[j] += row[j] ? 1.0 / static_cast<double>(tasks.size()) : 0;

  std::optional<SplitReport> split;
  if (o.splits > 0) split = split_simulation(table, cfg.alpha, o.splits, o.split_seed);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw Error(ErrorKind::environment, "cannot write " + o.out);
    f << config_json(cfg).dump(2) << "\n";
  }

  if (o.json) {
    Json j = config_json(cfg);
    j["tasks"] = tasks.size();
    j["errors"] = errors;
    j["certain_rate"] = certain;
    if (split) {
      j["splits"] = {{"count", split->splits},
                     {"mean_test_error", split->mean_test_error},
                     {"sd_test_error", split->sd_test_error},
                     {"mean_certain_rate", split->mean_certain},
                     {"sd_certain_rate", split->sd_certain},
                     {"chosen_count", split->chosen_count}};
    }
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::cout << "tasks: " << tasks.size() << ", alpha: " << cfg.alpha << "\n";
  for (const auto& [model, t] : cfg.base_thresholds) std::cout << "base threshold " << model << ": " << t << "\n";
  for (std::size_t j = 0; j < cfg.tau_grid.size(); ++j)
    std::cout << "tau " << fixed(cfg.tau_grid[j], 2) << ": error " << fixed(errors[j], 4) << ", certain "
              << fixed(certain[j], 3) << (j == chosen ? "  <- chosen" : "") << "\n";
  if (split) {
    std::cout << "splits: " << split->splits << ", mean test error " << fixed(split->mean_test_error, 4) << " (sd "
              << fixed(split->sd_test_error, 4) << "), mean certain rate " << fixed(split->mean_certain, 3)
              << " (sd " << fixed(split->sd_certain, 3) << ")\n";
  }
  return kOk;
}

int cmd_conformal_run(const Options& o) {
  ConformalConfig cfg;
  if (!o.config.empty()) {
    cfg = config_from_json(nlohmann::json::parse(read_text(o.config)));
  } else if (o.tau) {
    cfg = base_config(o);
  } else {
    throw UsageError("conformal-run needs --tau or --config");
  }
  if (o.tau) cfg.chosen_tau = *o.tau;
  Loaded l = load(o);
  MockEnv inner = make_env(o);
  ConformalEnv env(inner, cfg);
  AutoApprover approver;
  VirtualExecutor exec;
  RunOptions ro;
  ro.mode = Mode::conformal;
  ro.inputs = l.inputs;
  RunOutcome r = run(l.lowered.program, l.lowered.funcs, env, approver, exec, ro);
  if (!r.ok() || !r.abs) return report_failure(r);
  Certainty c = certainty(*r.abs);
  if (o.json) {
    std::cout << Json{{"output", to_text(*r.abs)}, {"certainty", to_string(c)}, {"tau", cfg.chosen_tau}}.dump(2)
              << "\n";
  } else {
    std::cout << "Output: " << to_text(*r.abs) << "\n" << to_string(c) << "\n";
  }
  return kOk;
}

int cmd_synth_tasks(const Options& o) {
  auto tasks = synth_tasks(o.count, o.seed);
  write_task_bank(tasks, o.out);
  std::cout << "wrote " << tasks.size() << " tasks to " << (std::filesystem::path(o.out) / "tasks.jsonl").string()
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasar: transpile, run and calibrate tool-using programs"};
  app.require_subcommand(1);
  Options o;

  auto source = [&](CLI::App* c) { c->add_option("source", o.source, "Program source file")->required(); };
  auto program_inputs = [&](CLI::App* c) {
    c->add_option("--input", o.inputs, "Program input NAME=VALUE (canonical value text)");
    c->add_option("--max-loop", o.max_loop, "While-loop iteration budget");
  };
  auto env_opts = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Mock environment seed")->envname("QUASAR_SEED");
    c->add_option("--fixtures", o.fixtures, "Directory of mock image fixtures");
  };

  auto* transpile_cmd = app.add_subcommand("transpile", "Print the lowered program in canonical IR text");
  source(transpile_cmd);
  program_inputs(transpile_cmd);

  auto* run_cmd = app.add_subcommand("run", "Transpile and execute against the mock environment");
  source(run_cmd);
  program_inputs(run_cmd);
  env_opts(run_cmd);
  run_cmd->add_option("--approver", o.approver, "auto, prompt or serve:PORT");
  run_cmd->add_option("--clock", o.clock, "virtual or real:SCALE");
  run_cmd->add_flag("--json", o.json, "Machine-readable output");

  auto* record_cmd = app.add_subcommand("record", "Run with auto-approval and record every external call");
  source(record_cmd);
  program_inputs(record_cmd);
  env_opts(record_cmd);
  record_cmd->add_option("--log", o.log, "Replay log to write")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Replay a log sequentially and in parallel");
  source(bench_cmd);
  program_inputs(bench_cmd);
  bench_cmd->add_option("--log", o.log, "Replay log to read")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--clock", o.clock, "virtual or real:SCALE");
  bench_cmd->add_flag("--json", o.json, "Machine-readable output");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Choose the threshold scale on a labelled task bank");
  calibrate_cmd->add_option("--tasks", o.tasks, "tasks.jsonl of a task bank")->required()->check(CLI::ExistingFile);
  calibrate_cmd->add_option("--alpha", o.alpha, "Target error rate")->check(CLI::Range(0.0, 1.0));
  calibrate_cmd->add_option("--tau-grid", o.tau_grid, "Candidate scales")->delimiter(',');
  calibrate_cmd->add_option("--splits", o.splits, "Random validation/test splits to simulate");
  calibrate_cmd->add_option("--split-seed", o.split_seed, "Seed for the splits");
  calibrate_cmd->add_option("--out", o.out, "Write the chosen config as JSON");
  calibrate_cmd->add_option("--seed", o.seed, "Mock environment seed")->envname("QUASAR_SEED");
  calibrate_cmd->add_flag("--json", o.json, "Machine-readable output");

  auto* conformal_cmd = app.add_subcommand("conformal-run", "Run with prediction sets and print the output set");
  source(conformal_cmd);
  program_inputs(conformal_cmd);
  env_opts(conformal_cmd);
  conformal_cmd->add_option("--tau", o.tau, "Threshold scale");
  conformal_cmd->add_option("--config", o.config, "Config written by calibrate --out")->check(CLI::ExistingFile);
  conformal_cmd->add_option("--alpha", o.alpha, "Target error rate for fitted base thresholds");
  conformal_cmd->add_flag("--json", o.json, "Machine-readable output");

  auto* synth_cmd = app.add_subcommand("synth-tasks", "Write a synthetic labelled task bank");
  synth_cmd->add_option("--count", o.count, "Number of tasks");
  synth_cmd->add_option("--seed", o.seed, "Generator seed")->envname("QUASAR_SEED");
  synth_cmd->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*transpile_cmd) return cmd_transpile(o);
    if (*run_cmd) return cmd_run(o);
    if (*record_cmd) return cmd_record(o);
    if (*bench_cmd) return cmd_bench(o);
    if (*calibrate_cmd) return cmd_calibrate(o);
    if (*conformal_cmd) return cmd_conformal_run(o);
    if (*synth_cmd) return cmd_synth_tasks(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const PositionedError& e) {
    std::cerr << o.source << ":" << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
