#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "quasar/env.hpp"
#include "quasar/rewrite.hpp"

namespace quasar {

inline constexpr std::size_t kPreviewLimit = 256;

/// Argument rendering shown to approvers. Long arguments are cut at
/// kPreviewLimit characters and end in "...".
inline std::string truncate_preview(std::string s) {
  if (s.size() <= kPreviewLimit) return s;
  s.resize(kPreviewLimit);
  return s + "...";
}

inline std::string preview_text(const Value& v) { return truncate_preview(to_text(v)); }

// ---------------------------------------------------------------------------
// Trace

/// Append-only, thread-safe event log served by the HTTP approver.
class TraceLog {
 public:
  using Json = nlohmann::ordered_json;

  void add(Json event) {
    std::lock_guard<std::mutex> lock(mu_);
    event["seq"] = events_.size();
    events_.push_back(std::move(event));
  }

  Json snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    Json arr = Json::array();
    for (const auto& e : events_) arr.push_back(e);
    return arr;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<Json> events_;
};

// ---------------------------------------------------------------------------
// Result boxes

/// Result slot of one dispatched call. Written once by the worker that runs
/// the call, read by the scheduler after the completion signal.
class ResultBox {
 public:
  enum class State { empty, filled, failed };

  void fill(Value v) {
    std::lock_guard<std::mutex> lock(mu_);
    claim();
    value_ = std::move(v);
    state_ = State::filled;
  }

  void fill(AbsResult v) {
    std::lock_guard<std::mutex> lock(mu_);
    claim();
    abs_ = std::move(v);
    state_ = State::filled;
  }

  void fail(ErrorKind kind, std::string message) {
    std::lock_guard<std::mutex> lock(mu_);
    claim();
    error_ = Error(kind, message);
    state_ = State::failed;
  }

  State state() const {
    std::lock_guard<std::mutex> lock(mu_);
    return state_;
  }

  std::optional<Value> value() const {
    std::lock_guard<std::mutex> lock(mu_);
    return value_;
  }

  std::optional<AbsResult> abs() const {
    std::lock_guard<std::mutex> lock(mu_);
    return abs_;
  }

  std::optional<Error> error() const {
    std::lock_guard<std::mutex> lock(mu_);
    return error_;
  }

 private:
  void claim() const {
    if (state_ != State::empty) throw Error(ErrorKind::validation, "result box written twice");
  }

  mutable std::mutex mu_;
  State state_ = State::empty;
  std::optional<Value> value_;
  std::optional<AbsResult> abs_;
  std::optional<Error> error_;
};

struct TaskEntry {
  TaskId task = 0;
  Site site;
  FuncId func = 0;
  Value arg;
  std::shared_ptr<ResultBox> box = std::make_shared<ResultBox>();
};

/// In-flight calls, at most one per site.
class ExecutionSet {
 public:
  void insert(TaskEntry e) {
    if (sites_.count(e.site))
      throw Error(ErrorKind::validation, "second call in flight at " + site_text(e.site));
    sites_.insert(e.site);
    TaskId id = e.task;
    entries_.emplace(id, std::move(e));
  }

  TaskEntry take(TaskId id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorKind::validation, "unknown task " + std::to_string(id));
    TaskEntry e = std::move(it->second);
    entries_.erase(it);
    sites_.erase(e.site);
    return e;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<TaskId, TaskEntry> entries_;
  std::set<Site> sites_;
};

// ---------------------------------------------------------------------------
// Executors

class Executor {
 public:
  /// Performs one call, writes its box and returns the call latency in ms.
  using Job = std::function<double()>;

  virtual ~Executor() = default;
  virtual void submit(TaskId id, Job job) = 0;
  /// Blocks until some submitted task completes and returns its id.
  virtual TaskId wait_any() = 0;
  virtual std::size_t in_flight() const = 0;
  /// Time elapsed on this executor's clock.
  virtual double now_ms() const = 0;
};

/// Discrete-event executor. A call occupies a worker for its reported
/// latency; completions are delivered in (finish time, task id) order.
/// `workers == 0` means one worker per call.
class VirtualExecutor : public Executor {
 public:
  explicit VirtualExecutor(std::size_t workers = 0) : workers_(workers) {}

  void submit(TaskId id, Job job) override {
    double latency = job();
    double start = now_;
    if (workers_ > 0) {
      if (free_at_.size() < workers_) {
        free_at_.push(now_);
      }
      start = std::max(now_, free_at_.top());
      free_at_.pop();
      free_at_.push(start + latency);
    }
    events_.push({start + latency, id});
  }

  TaskId wait_any() override {
    if (events_.empty()) throw Error(ErrorKind::validation, "wait on an idle executor");
    auto [t, id] = events_.top();
    events_.pop();
    now_ = std::max(now_, t);
    return id;
  }

  std::size_t in_flight() const override { return events_.size(); }
  double now_ms() const override { return now_; }

 private:
  using Event = std::pair<double, TaskId>;
  std::size_t workers_;
  double now_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::priority_queue<double, std::vector<double>, std::greater<>> free_at_;
};

/// Thread pool that sleeps `latency * time_scale` (plus uniform jitter) after
/// each call, so wall-clock time tracks the reported latencies.
class ThreadPoolExecutor : public Executor {
 public:
  struct Options {
    std::size_t workers = 16;
    double time_scale = 1.0;
    double jitter_ms = 0;
    std::uint64_t seed = 0;
  };

  ThreadPoolExecutor() : ThreadPoolExecutor(Options{}) {}

  explicit ThreadPoolExecutor(Options opt)
      : opt_(opt), start_(std::chrono::steady_clock::now()), rng_(opt.seed) {
    std::size_t n = std::max<std::size_t>(1, opt_.workers);
    for (std::size_t i = 0; i < n; ++i) threads_.emplace_back([this] { worker(); });
  }

  ~ThreadPoolExecutor() override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    work_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(TaskId id, Job job) override {
    double jitter = 0;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (opt_.jitter_ms > 0) jitter = std::uniform_real_distribution<double>(0, opt_.jitter_ms)(rng_);
      queue_.push_back({id, std::move(job), jitter});
      ++in_flight_;
    }
    work_cv_.notify_one();
  }

  TaskId wait_any() override {
    std::unique_lock<std::mutex> lock(mu_);
    if (in_flight_ == 0) throw Error(ErrorKind::validation, "wait on an idle executor");
    done_cv_.wait(lock, [this] { return !done_.empty(); });
    TaskId id = done_.front();
    done_.pop_front();
    --in_flight_;
    return id;
  }

  std::size_t in_flight() const override {
    std::lock_guard<std::mutex> lock(mu_);
    return in_flight_;
  }

  double now_ms() const override {
    auto d = std::chrono::steady_clock::now() - start_;
    return std::chrono::duration<double, std::milli>(d).count();
  }

 private:
  struct Item {
    TaskId id;
    Job job;
    double jitter_ms;
  };

  void worker() {
    for (;;) {
      Item item;
      {
        std::unique_lock<std::mutex> lock(mu_);
        work_cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (stop_) return;
        item = std::move(queue_.front());
        queue_.pop_front();
      }
      double latency = item.job();
      double sleep_ms = latency * opt_.time_scale + item.jitter_ms;
      if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(sleep_ms));
      {
        std::lock_guard<std::mutex> lock(mu_);
        done_.push_back(item.id);
      }
      done_cv_.notify_one();
    }
  }

  Options opt_;
  std::chrono::steady_clock::time_point start_;
  mutable std::mutex mu_;
  std::condition_variable work_cv_, done_cv_;
  std::deque<Item> queue_;
  std::deque<TaskId> done_;
  std::size_t in_flight_ = 0;
  bool stop_ = false;
  std::mt19937_64 rng_;
  std::vector<std::thread> threads_;
};

// ---------------------------------------------------------------------------
// Approval

struct BatchCall {
  std::string fn;
  std::string args;
  std::string site;
};

struct ApprovalBatch {
  std::uint64_t batch_id = 0;
  std::vector<BatchCall> calls;
};

enum class Verdict { approve_all, reject };

struct ApproverDecision {
  std::uint64_t batch_id = 0;
  Verdict verdict = Verdict::reject;
};

inline nlohmann::ordered_json to_json(const ApprovalBatch& b) {
  nlohmann::ordered_json calls = nlohmann::ordered_json::array();
  for (const auto& c : b.calls) calls.push_back({{"fn", c.fn}, {"args", c.args}, {"site", c.site}});
  return {{"batch_id", b.batch_id}, {"calls", std::move(calls)}};
}

class Approver {
 public:
  virtual ~Approver() = default;
  /// Called from the scheduler; the run pauses until it returns.
  virtual ApproverDecision decide(const ApprovalBatch& batch) = 0;
};

class AutoApprover : public Approver {
 public:
  ApproverDecision decide(const ApprovalBatch& b) override { return {b.batch_id, Verdict::approve_all}; }
};

/// Approves every batch except `reject_at` (1-based, 0 = never) and keeps
/// the batches it saw.
class ScriptedApprover : public Approver {
 public:
  explicit ScriptedApprover(std::uint64_t reject_at = 0) : reject_at_(reject_at) {}

  ApproverDecision decide(const ApprovalBatch& b) override {
    seen_.push_back(b);
    return {b.batch_id, b.batch_id == reject_at_ ? Verdict::reject : Verdict::approve_all};
  }

  const std::vector<ApprovalBatch>& seen() const { return seen_; }

 private:
  std::uint64_t reject_at_;
  std::vector<ApprovalBatch> seen_;
};

/// Terminal prompt. Anything other than y/yes rejects the batch.
class PromptApprover : public Approver {
 public:
  PromptApprover(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  ApproverDecision decide(const ApprovalBatch& b) override {
    out_ << "batch " << b.batch_id << " requests " << b.calls.size() << " call(s):\n";
    for (const auto& c : b.calls) out_ << "  [" << c.site << "] " << c.fn << c.args << "\n";
    out_ << "approve all? [y/N] " << std::flush;
    std::string line;
    if (!std::getline(in_, line)) return {b.batch_id, Verdict::reject};
    auto first = line.find_first_not_of(" \t");
    std::string ans = first == std::string::npos ? "" : line.substr(first);
    while (!ans.empty() && (ans.back() == ' ' || ans.back() == '\r')) ans.pop_back();
    bool yes = ans == "y" || ans == "Y" || ans == "yes";
    return {b.batch_id, yes ? Verdict::approve_all : Verdict::reject};
  }

 private:
  std::istream& in_;
  std::ostream& out_;
};

// ---------------------------------------------------------------------------
// Scheduler

struct ExecutedCall {
  std::string fn;
  std::string arg;
  friend bool operator==(const ExecutedCall&, const ExecutedCall&) = default;
  friend auto operator<=>(const ExecutedCall&, const ExecutedCall&) = default;
};

struct RunOptions {
  Mode mode = Mode::concrete;
  /// Values for the program parameters, in order.
  std::vector<Value> inputs;
  std::size_t step_budget = kDefaultStepBudget;
  TraceLog* trace = nullptr;
  bool trace_rules = true;
};

struct RunOutcome {
  enum class Status { result, rejected, failed };

  Status status = Status::failed;
  std::optional<Value> value;
  std::optional<AbsValue> abs;
  std::uint64_t rejected_batch = 0;
  std::optional<Error> error;
  std::string failed_site;
  /// Approval batches emitted, including a rejected one.
  std::size_t rounds = 0;
  std::vector<ExecutedCall> executed;
  double makespan_ms = 0;
  std::size_t steps = 0;
  Program final_program;

  bool ok() const { return status == Status::result; }
};

inline const char* to_string(RunOutcome::Status s) {
  switch (s) {
    case RunOutcome::Status::result: return "result";
    case RunOutcome::Status::rejected: return "rejected";
    case RunOutcome::Status::failed: return "failed";
  }
  return "unknown";
}

class Scheduler {
 public:
  Scheduler(const Program& p, const FuncTable& ft, Environment& env, Approver& approver,
            Executor& exec, RunOptions opt)
      : ctx_(p, ft, opt.mode), env_(env), approver_(approver), exec_(exec), opt_(std::move(opt)) {
    ctx_.set_step_budget(opt_.step_budget);
    if (opt_.trace && opt_.trace_rules) {
      TraceLog* trace = opt_.trace;
      ctx_.set_observer([trace](const RuleInstance& ri) {
        trace->add({{"event", "rule"}, {"rule", to_string(ri.rule)}, {"site", site_text(ri.site)}});
      });
    }
  }

  RunOutcome run() {
    try {
      bind_inputs();
      for (;;) {
        run_internal();
        auto calls = ctx_.find_dispatchable();
        if (calls.empty()) break;
        ApprovalBatch batch{++batch_id_, {}};
        for (const auto& c : calls)
          batch.calls.push_back({fn_name(c.func), preview_text(c.arg), site_text(c.site)});
        ++out_.rounds;
        if (opt_.trace) opt_.trace->add({{"event", "batch"}, {"batch_id", batch.batch_id},
                                         {"calls", to_json(batch)["calls"]}});
        ApproverDecision d = approver_.decide(batch);
        if (d.batch_id != batch.batch_id || d.verdict != Verdict::approve_all) {
          out_.status = RunOutcome::Status::rejected;
          out_.rejected_batch = batch.batch_id;
          return finish();
        }
        for (const auto& c : calls) dispatch(c, batch.batch_id);
      }
      return conclude();
    } catch (const Error& e) {
      return fail(e, "");
    }
  }

  const RewriteContext& context() const { return ctx_; }

 private:
  RewriteContext ctx_;
  Environment& env_;
  Approver& approver_;
  Executor& exec_;
  RunOptions opt_;
  ExecutionSet inflight_;
  RunOutcome out_;
  std::uint64_t batch_id_ = 0;
  TaskId next_task_ = 1;

  void bind_inputs() {
    auto params = ctx_.unbound_params();
    if (opt_.inputs.size() != params.size())
      throw Error(ErrorKind::validation, "program takes " + std::to_string(params.size()) +
                                             " input(s), got " + std::to_string(opt_.inputs.size()));
    for (std::size_t i = 0; i < params.size(); ++i) ctx_.bind_param(params[i], opt_.inputs[i]);
  }

  std::string fn_name(FuncId f) const { return ctx_.func_table().at(f).name; }

  void run_internal() {
    for (;;) {
      ctx_.normalize();
      bool sent = false;
      for (const auto& c : ctx_.find_dispatchable()) {
        if (!ctx_.func_table().at(c.func).preapproved) continue;
        dispatch(c, 0);
        sent = true;
      }
      if (sent) continue;
      if (inflight_.empty()) return;
      TaskId id = exec_.wait_any();
      TaskEntry e = inflight_.take(id);
      complete(e);
    }
  }

  void dispatch(const Dispatchable& c, std::uint64_t batch) {
    TaskEntry e;
    e.task = next_task_++;
    e.site = c.site;
    e.func = c.func;
    e.arg = c.arg;
    ctx_.mark_pending(c.site, e.task);
    std::string fn = fn_name(c.func);
    out_.executed.push_back({fn, to_text(c.arg)});
    if (opt_.trace) {
      TraceLog::Json ev{{"event", "dispatch"}, {"task", e.task}, {"fn", fn},
                        {"args", preview_text(c.arg)}, {"site", site_text(c.site)}};
      if (batch) ev["batch_id"] = batch;
      else ev["preapproved"] = true;
      opt_.trace->add(std::move(ev));
    }
    auto box = e.box;
    Environment* env = &env_;
    bool abstract = opt_.mode == Mode::conformal;
    Value arg = c.arg;
    exec_.submit(e.task, [box, env, fn, arg, abstract]() -> double {
      try {
        if (abstract) {
          AbsCallResult r = env->call_abstract(fn, arg);
          box->fill(std::move(r.value));
          return r.latency_ms;
        }
        CallResult r = env->call(fn, arg);
        box->fill(std::move(r.value));
        return r.latency_ms;
      } catch (const Error& err) {
        box->fail(err.kind(), err.what());
      } catch (const std::exception& err) {
        box->fail(ErrorKind::environment, err.what());
      }
      return 0;
    });
    inflight_.insert(std::move(e));
  }

  void complete(const TaskEntry& e) {
    const auto& box = *e.box;
    if (box.state() == ResultBox::State::failed) {
      Error err = *box.error();
      if (opt_.trace)
        opt_.trace->add({{"event", "complete"}, {"task", e.task}, {"site", site_text(e.site)},
                         {"ok", false}, {"error", err.what()}});
      throw SiteError(err, e.site);
    }
    std::string text;
    if (auto v = box.value()) {
      text = to_text(*v);
      ctx_.substitute_result(e.site, *v);
    } else if (auto a = box.abs()) {
      text = std::visit([](const auto& x) { return to_text(x); }, *a);
      ctx_.substitute_result(e.site, *a);
    } else {
      throw Error(ErrorKind::validation, "completion with an empty box at " + site_text(e.site));
    }
    if (opt_.trace)
      opt_.trace->add({{"event", "complete"}, {"task", e.task}, {"site", site_text(e.site)},
                       {"ok", true}, {"result", truncate_preview(text)}});
  }

  struct SiteError : Error {
    SiteError(const Error& e, Site s) : Error(e), site(s) {}
    Site site;
  };

  RunOutcome conclude() {
    if (opt_.mode == Mode::conformal) {
      out_.abs = ctx_.result_abs();
      if (out_.abs) out_.value = singleton(*out_.abs);
    } else {
      out_.value = ctx_.result_value();
    }
    if (!out_.value && !out_.abs) return fail(ctx_.diagnose_stuck(), "");
    out_.status = RunOutcome::Status::result;
    return finish();
  }

  RunOutcome fail(const Error& e, std::string site) {
    if (const auto* se = dynamic_cast<const SiteError*>(&e)) site = site_text(se->site);
    out_.status = RunOutcome::Status::failed;
    out_.error = Error(e.kind(), e.what());
    out_.failed_site = site;
    drain();
    return finish();
  }

  void drain() {
    while (exec_.in_flight() > 0) exec_.wait_any();
  }

  RunOutcome finish() {
    out_.makespan_ms = exec_.now_ms();
    out_.steps = ctx_.steps();
    out_.final_program = ctx_.program();
    if (opt_.trace) {
      TraceLog::Json ev{{"event", "result"}, {"outcome", to_string(out_.status)}};
      if (out_.value) ev["value"] = to_text(*out_.value);
      if (out_.abs) ev["abstract"] = to_text(*out_.abs);
      if (out_.status == RunOutcome::Status::rejected) ev["batch_id"] = out_.rejected_batch;
      if (out_.error) {
        ev["error"] = out_.error->what();
        ev["kind"] = to_string(out_.error->kind());
        if (!out_.failed_site.empty()) ev["site"] = out_.failed_site;
      }
      ev["rounds"] = out_.rounds;
      ev["makespan_ms"] = out_.makespan_ms;
      opt_.trace->add(std::move(ev));
    }
    return std::move(out_);
  }
};

/// Alternates internal normalization with batched approval and parallel
/// dispatch of external calls until the program is terminal.
inline RunOutcome run(const Program& p, const FuncTable& ft, Environment& env, Approver& approver,
                      Executor& exec, RunOptions opt = {}) {
  return Scheduler(p, ft, env, approver, exec, std::move(opt)).run();
}

enum class InteractionPolicy { per_call, batched };

/// Approvals needed when every call is confirmed individually versus once
/// per batch.
inline std::size_t count_interactions(const Program& p, const FuncTable& ft, Environment& env,
                                      InteractionPolicy policy, std::vector<Value> inputs = {}) {
  AutoApprover approver;
  VirtualExecutor exec;
  RunOptions opt;
  opt.inputs = std::move(inputs);
  RunOutcome r = run(p, ft, env, approver, exec, std::move(opt));
  if (r.error) throw *r.error;
  return policy == InteractionPolicy::per_call ? r.executed.size() : r.rounds;
}

}  // namespace quasar
