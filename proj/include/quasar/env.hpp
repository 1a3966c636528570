#pragma once

#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "quasar/abstract.hpp"
#include "quasar/error.hpp"
#include "quasar/value.hpp"

namespace quasar {

struct CallResult {
  Value value;
  double latency_ms = 0;
};

struct AbsCallResult {
  AbsResult value;
  double latency_ms = 0;
};

/// Implementation of the effectful functions. Calls may arrive concurrently
/// from executor workers, so implementations must be thread-safe.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual CallResult call(const std::string& fn, const Value& arg) = 0;

  /// Set-valued variant used under conformal execution. The default answers
  /// with the singleton of the concrete result.
  virtual AbsCallResult call_abstract(const std::string& fn, const Value& arg) {
    CallResult r = call(fn, arg);
    return {AbsValue::from_value(r.value), r.latency_ms};
  }
};

/// Environment assembled from per-function callbacks.
class FunctionEnv : public Environment {
 public:
  using Fn = std::function<CallResult(const Value&)>;

  FunctionEnv& on(const std::string& name, Fn fn) {
    fns_[name] = std::move(fn);
    return *this;
  }

  /// Convenience form: fixed latency, result computed from the argument.
  FunctionEnv& on(const std::string& name, std::function<Value(const Value&)> fn, double latency_ms) {
    return on(name, [fn = std::move(fn), latency_ms](const Value& v) {
      return CallResult{fn(v), latency_ms};
    });
  }

  CallResult call(const std::string& fn, const Value& arg) override {
    auto it = fns_.find(fn);
    if (it == fns_.end()) throw Error(ErrorKind::environment, "unknown external function " + fn);
    return it->second(arg);
  }

 private:
  std::map<std::string, Fn> fns_;
};

// ---------------------------------------------------------------------------
// Record / replay

struct ExternalCallRecord {
  std::uint64_t seq = 0;
  std::string fn;
  std::string arg;  // canonical text
  Value result;
  double latency_ms = 0;
};

/// Line-delimited JSON, one record per line in seq order:
///   {"seq":0,"fn":".find","arg":"(\"img\", \"drink\")","result":"[\"p1\"]","latency_ms":100.0}
/// `arg` and `result` hold canonical value text.
class ReplayLog {
 public:
  std::vector<ExternalCallRecord> records;

  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
      nlohmann::ordered_json j;
      j["seq"] = r.seq;
      j["fn"] = r.fn;
      j["arg"] = r.arg;
      j["result"] = to_text(r.result);
      j["latency_ms"] = r.latency_ms;
      out += j.dump() + "\n";
    }
    return out;
  }

  static ReplayLog from_jsonl(const std::string& text) {
    ReplayLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto j = nlohmann::json::parse(line);
        ExternalCallRecord r;
        r.seq = j.at("seq").get<std::uint64_t>();
        r.fn = j.at("fn").get<std::string>();
        r.arg = to_text(parse_value(j.at("arg").get<std::string>()));
        r.result = parse_value(j.at("result").get<std::string>());
        r.latency_ms = j.at("latency_ms").get<double>();
        if (r.latency_ms < 0) throw Error(ErrorKind::replay_miss, "negative latency");
        if (r.seq != log.records.size())
          throw Error(ErrorKind::replay_miss, "seq " + std::to_string(r.seq) + " out of order");
        log.records.push_back(std::move(r));
      } catch (const nlohmann::json::exception& e) {
        throw PositionedError(ErrorKind::replay_miss, lineno, 1, "log", e.what());
      } catch (const PositionedError&) {
        throw;
      } catch (const Error& e) {
        throw PositionedError(ErrorKind::replay_miss, lineno, 1, "log", e.what());
      }
    }
    return log;
  }

  static ReplayLog load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::environment, "cannot open log " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_jsonl(ss.str());
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw Error(ErrorKind::environment, "cannot write log " + path);
    f << to_jsonl();
  }

  double total_latency_ms() const {
    double t = 0;
    for (const auto& r : records) t += r.latency_ms;
    return t;
  }
};

/// Wraps an environment, appending every completed call to a log.
class RecordingEnv : public Environment {
 public:
  explicit RecordingEnv(Environment& inner) : inner_(inner) {}

  CallResult call(const std::string& fn, const Value& arg) override {
    CallResult r = inner_.call(fn, arg);
    std::lock_guard<std::mutex> lock(mu_);
    log_.records.push_back({log_.records.size(), fn, to_text(arg), r.value, r.latency_ms});
    return r;
  }

  ReplayLog log() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
  }

 private:
  Environment& inner_;
  mutable std::mutex mu_;
  ReplayLog log_;
};

/// Serves results from a log. Each record is consumed once; repeated
/// identical calls are answered in seq order.
class ReplayEnv : public Environment {
 public:
  explicit ReplayEnv(const ReplayLog& log) {
    for (const auto& r : log.records) queues_[{r.fn, r.arg}].push_back(r);
  }

  CallResult call(const std::string& fn, const Value& arg) override {
    std::string key = to_text(arg);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = queues_.find({fn, key});
    if (it == queues_.end() || it->second.empty())
      throw Error(ErrorKind::replay_miss, "replay miss: no recorded call " + fn + key);
    ExternalCallRecord r = std::move(it->second.front());
    it->second.pop_front();
    consumed_latency_ += r.latency_ms;
    ++consumed_;
    return {r.result, r.latency_ms};
  }

  std::size_t consumed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return consumed_;
  }

  double consumed_latency_ms() const {
    std::lock_guard<std::mutex> lock(mu_);
    return consumed_latency_;
  }

  std::size_t remaining() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::size_t n = 0;
    for (const auto& [k, q] : queues_) n += q.size();
    return n;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, std::deque<ExternalCallRecord>> queues_;
  std::size_t consumed_ = 0;
  double consumed_latency_ = 0;
};

/// Counts and records calls before forwarding them.
class CountingEnv : public Environment {
 public:
  explicit CountingEnv(Environment& inner) : inner_(inner) {}

  CallResult call(const std::string& fn, const Value& arg) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls_.push_back({fn, to_text(arg)});
    }
    return inner_.call(fn, arg);
  }

  AbsCallResult call_abstract(const std::string& fn, const Value& arg) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls_.push_back({fn, to_text(arg)});
    }
    return inner_.call_abstract(fn, arg);
  }

  std::vector<std::pair<std::string, std::string>> calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
  }

 private:
  Environment& inner_;
  mutable std::mutex mu_;
  std::vector<std::pair<std::string, std::string>> calls_;
};

}  // namespace quasar
