// One line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "quasar/conformal.hpp"
#include "quasar/mock_env.hpp"
#include "quasar/tasks.hpp"
#include "quasar/transpiler.hpp"
#include "support/corpus.hpp"
#include "support/drive.hpp"
#include "support/gen_ir.hpp"
#include "support/soundness.hpp"
#include "support/stub_env.hpp"

using namespace quasar;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes.
constexpr std::size_t kConfluencePrograms = 200;
constexpr std::size_t kConfluenceOrders = 10;
constexpr double kConfluenceSeconds = 60;
constexpr std::size_t kCorpusMin = 50;
constexpr std::uint64_t kDifferentialEnvs = 5;
constexpr double kCriticalPathTolerance = 0.01;
constexpr double kFanOutLatency = 100;
constexpr double kFanOutSlack = 1.05;
constexpr double kRealFanOutLatency = 40;
constexpr double kSchedulerOverheadMs = 15;
constexpr std::size_t kSoundnessPrograms = 100;
constexpr std::size_t kBankTasks = 400;
constexpr std::uint64_t kBankSeed = 7;
constexpr std::size_t kSplits = 100;
constexpr double kAlpha = 0.1;
constexpr double kErrorLow = 0.06;
constexpr double kErrorHigh = 0.14;
constexpr double kCoverageSeconds = 300;

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path root() { return fs::path(QUASAR_SOURCE_DIR); }

void confluence() {
  auto t0 = std::chrono::steady_clock::now();
  std::size_t bad = 0, runs = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= kConfluencePrograms; ++seed) {
    qt::IrGen gen(seed, {});
    Program p = gen.program();
    std::vector<std::pair<VarId, Value>> inputs;
    for (auto v : p.params) inputs.push_back({v, Value(3)});
    auto base = qt::drive(p, gen.funcs(), qt::stub_result, 0, Mode::concrete, inputs);
    for (std::uint64_t order = 1; order <= kConfluenceOrders; ++order) {
      auto r = qt::drive(p, gen.funcs(), qt::stub_result, seed * 1000 + order, Mode::concrete, inputs);
      ++runs;
      bool same = base.value && r.value && *r.value == *base.value && r.calls == base.calls;
      if (!same && ++bad == 1)
        first = fmt("program %llu order %llu", static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(order));
    }
  }
  double s = seconds_since(t0);
  report("confluence", bad == 0 && s <= kConfluenceSeconds,
         fmt("%zu programs x %zu orders, %zu mismatches%s%s, %.1fs (limit %.0fs)", kConfluencePrograms,
             kConfluenceOrders, bad, bad ? ", first " : "", first.c_str(), s, kConfluenceSeconds));
  (void)runs;
}

struct Side {
  bool ok = false;
  Value value;
  std::vector<ExecutedCall> calls;
};

void differential() {
  auto corpus = qt::load_corpus((root() / "tests" / "corpus").string());
  std::size_t bad = 0, checks = 0;
  std::string first;
  for (const auto& prog : corpus) {
    auto ast = parse_source(prog.source);
    auto l = lower(ast, lower_options(prog.inputs));
    for (std::uint64_t seed = 1; seed <= kDifferentialEnvs; ++seed) {
      qt::StubEnv env(seed);
      Side ref, par;
      try {
        auto r = reference_eval(ast, env, prog.inputs);
        ref = {true, r.value, r.calls};
      } catch (const Error&) {
      }
      AutoApprover approver;
      VirtualExecutor exec;
      RunOptions opt;
      opt.inputs = ordered_inputs(l, prog.inputs);
      auto out = run(l.program, l.funcs, env, approver, exec, opt);
      if (out.ok()) par = {true, *out.value, out.executed};
      std::sort(ref.calls.begin(), ref.calls.end());
      std::sort(par.calls.begin(), par.calls.end());
      ++checks;
      bool same = ref.ok && par.ok && ref.value == par.value && ref.calls == par.calls;
      if (!same && ++bad == 1) first = prog.name + " seed " + std::to_string(seed);
    }
  }
  report("differential", corpus.size() >= kCorpusMin && bad == 0,
         fmt("%zu corpus programs (need %zu) x %llu environments, %zu/%zu agree%s%s", corpus.size(), kCorpusMin,
             static_cast<unsigned long long>(kDifferentialEnvs), checks - bad, checks, bad ? ", first miss " : "",
             first.c_str()));
}

void drink_end_to_end() {
  std::string src = qt::read_file(root() / "samples" / "drink.qs");
  auto inputs = header_inputs(src);
  auto l = transpile(src, lower_options(inputs));
  MockEnv env = mock_env(7, root() / "data" / "images");
  CountingEnv counting(env);
  AutoApprover approver;
  VirtualExecutor exec;
  RunOptions opt;
  opt.inputs = ordered_inputs(l, inputs);
  auto r = run(l.program, l.funcs, counting, approver, exec, opt);
  std::size_t per_call = counting.calls().size();
  double reduction = per_call ? 100.0 * (static_cast<double>(per_call) - static_cast<double>(r.rounds)) /
                                    static_cast<double>(per_call)
                              : 0;
  bool pass = r.ok() && *r.value == Value(true) && r.rounds == 2 && per_call == 3 &&
              std::abs(reduction - 100.0 / 3.0) < 0.05;
  report("drink-end-to-end", pass,
         fmt("result %s, %zu approval rounds vs %zu per-call approvals, %.1f%% fewer interactions",
             r.value ? to_text(*r.value).c_str() : "none", r.rounds, per_call, reduction));
}

/// `k` calls with no dependencies between them.
std::pair<Program, FuncTable> independent_calls(std::size_t k) {
  std::string text = "funcs:\n0 ext effectful *\nprog:\n";
  std::string items;
  std::uint32_t v = 1;
  for (std::size_t i = 0; i < k; ++i) {
    std::uint32_t c = v++, t = v++, r = v++;
    text += std::to_string(c) + " <- PRIM(" + std::to_string(i) + ")\n";
    text += std::to_string(t) + " <- TUPLE(" + std::to_string(c) + ")\n";
    text += std::to_string(r) + " <- CALL(0, " + std::to_string(t) + ")\n";
    items += (items.empty() ? "" : ", ") + std::to_string(r);
  }
  text += std::to_string(v) + " <- TUPLE(" + items + ")\nret " + std::to_string(v) + "\n";
  return deserialize(text);
}

void parallelism() {
  std::string src = qt::read_file(root() / "samples" / "drink.qs");
  auto inputs = header_inputs(src);
  auto l = transpile(src, lower_options(inputs));
  ReplayLog log = ReplayLog::load((root() / "samples" / "drink.log").string());
  double find = 0, q_max = 0, total = log.total_latency_ms();
  for (const auto& rec : log.records) {
    if (rec.fn == ".find") find += rec.latency_ms;
    if (rec.fn == ".simple_query") q_max = std::max(q_max, rec.latency_ms);
  }
  double predicted = find + q_max;

  ReplayEnv seq_env(log);
  auto seq = reference_eval(parse_source(src), seq_env, inputs);
  ReplayEnv par_env(log);
  AutoApprover approver;
  VirtualExecutor exec;
  RunOptions opt;
  opt.inputs = ordered_inputs(l, inputs);
  auto par = run(l.program, l.funcs, par_env, approver, exec, opt);
  bool drink_ok = par.ok() && std::abs(par.makespan_ms - predicted) <= kCriticalPathTolerance * predicted &&
                  std::abs(seq.latency_ms - total) <= kCriticalPathTolerance * total && par.makespan_ms <= 200.0 * 1.01 &&
                  seq.latency_ms >= 300.0 * 0.99 && seq.latency_ms <= 300.0 * 1.01;

  bool fan_ok = true;
  double worst_virtual = 0, worst_real = 0;
  for (std::size_t k = 2; k <= 8; ++k) {
    auto [p, ft] = independent_calls(k);
    FunctionEnv env;
    env.on("ext", [](const Value& a) { return a; }, kFanOutLatency);
    AutoApprover a1;
    VirtualExecutor sequential(1), parallel;
    auto rs = run(p, ft, env, a1, sequential);
    auto rp = run(p, ft, env, a1, parallel);
    double kl = static_cast<double>(k) * kFanOutLatency;
    fan_ok &= rs.ok() && rp.ok() && std::abs(rs.makespan_ms - kl) < 1e-6 && rp.makespan_ms >= kFanOutLatency &&
              rp.makespan_ms <= kFanOutSlack * kFanOutLatency;
    worst_virtual = std::max(worst_virtual, rp.makespan_ms / kFanOutLatency);

    FunctionEnv real_env;
    real_env.on("ext", [](const Value& a) { return a; }, kRealFanOutLatency);
    ThreadPoolExecutor pool;
    auto rr = run(p, ft, real_env, a1, pool);
    fan_ok &= rr.ok() && rr.makespan_ms >= kRealFanOutLatency &&
              rr.makespan_ms <= kFanOutSlack * kRealFanOutLatency + kSchedulerOverheadMs;
    worst_real = std::max(worst_real, rr.makespan_ms);
  }
  report("parallelism", drink_ok && fan_ok,
         fmt("drink log: parallel %.1fms (critical path %.1fms), sequential %.1fms (sum %.1fms); fan-out k=2..8 "
             "at L=%.0fms: virtual max %.3fL, sequential kL; real clock L=%.0fms max %.1fms (bound %.1fms)",
             par.makespan_ms, predicted, seq.latency_ms, total, kFanOutLatency, worst_virtual, kRealFanOutLatency,
             worst_real, kFanOutSlack * kRealFanOutLatency + kSchedulerOverheadMs));
}

void soundness() {
  std::size_t checked = 0, capped = 0, vacuous = 0, unsound = 0, concretizations = 0;
  std::string first;
  for (std::uint64_t seed = 1; checked < kSoundnessPrograms && seed <= 10 * kSoundnessPrograms; ++seed) {
    auto c = qt::make_soundness_case(seed);
    auto r = qt::check_soundness(c);
    if (r.capped) {
      ++capped;
      continue;
    }
    if (r.concrete_ok == 0) {
      ++vacuous;
      continue;
    }
    ++checked;
    concretizations += r.concrete_ok;
    if (!r.sound && ++unsound == 1) first = "seed " + std::to_string(seed) + ": " + r.detail;
  }
  report("conformal-soundness", checked == kSoundnessPrograms && unsound == 0,
         fmt("%zu programs, %zu concretizations checked, %zu unsound%s%s; skipped %zu at the combination cap and "
             "%zu whose concretizations all error",
             checked, concretizations, unsound, unsound ? ", first " : "", first.c_str(), capped, vacuous));
}

void coverage() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<CalibrationTask> tasks;
  for (const auto& t : synth_tasks(kBankTasks, kBankSeed)) tasks.push_back(to_calibration_task(t));
  ConformalConfig cfg = fitted_config(kAlpha);
  auto table = evaluate_grid(tasks, cfg);
  auto r = split_simulation(table, kAlpha, kSplits, 1);
  double s = seconds_since(t0);
  std::string chosen;
  for (std::size_t j = 0; j < cfg.tau_grid.size(); ++j)
    chosen += fmt("%s%.2f:%zu", j ? " " : "", cfg.tau_grid[j], r.chosen_count[j]);
  bool pass = tasks.size() >= 400 && cfg.tau_grid.size() == 4 && r.mean_test_error >= kErrorLow &&
              r.mean_test_error <= kErrorHigh && s <= kCoverageSeconds;
  report("coverage-calibration", pass,
         fmt("%zu tasks, %zu splits, alpha %.2f, grid {%s}; mean test error %.4f (sd %.4f, need [%.2f, %.2f]); "
             "certain rate %.3f (sd %.3f); %.1fs",
             tasks.size(), r.splits, kAlpha, chosen.c_str(), r.mean_test_error, r.sd_test_error, kErrorLow,
             kErrorHigh, r.mean_certain, r.sd_certain, s));
}

void rejection_safety() {
  auto corpus = qt::load_corpus((root() / "tests" / "corpus").string());
  std::size_t programs = 0, cases = 0, bad = 0;
  std::string first;
  for (const auto& prog : corpus) {
    auto l = lower(parse_source(prog.source), lower_options(prog.inputs));
    RunOptions opt;
    opt.inputs = ordered_inputs(l, prog.inputs);
    qt::StubEnv inner(1);
    AutoApprover all;
    VirtualExecutor e0;
    auto full = run(l.program, l.funcs, inner, all, e0, opt);
    ++programs;
    for (std::uint64_t i = 1; i <= full.rounds; ++i) {
      CountingEnv env(inner);
      ScriptedApprover approver(i);
      VirtualExecutor exec;
      auto r = run(l.program, l.funcs, env, approver, exec, opt);
      std::size_t allowed = 0;
      for (const auto& b : approver.seen())
        if (b.batch_id < i) allowed += b.calls.size();
      ++cases;
      bool ok = r.status == RunOutcome::Status::rejected && r.rejected_batch == i && env.calls().size() == allowed;
      if (!ok && ++bad == 1) first = prog.name + " batch " + std::to_string(i);
    }
  }
  report("rejection-safety", bad == 0 && programs >= kCorpusMin,
         fmt("%zu corpus programs, %zu rejection points, %zu executed a call at or after the rejected batch%s%s",
             programs, cases, bad, bad ? ", first " : "", first.c_str()));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void()>>> criteria{
      {"confluence", confluence},
      {"differential", differential},
      {"drink-end-to-end", drink_end_to_end},
      {"parallelism", parallelism},
      {"conformal-soundness", soundness},
      {"coverage-calibration", coverage},
      {"rejection-safety", rejection_safety},
  };
  for (const auto& [name, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
