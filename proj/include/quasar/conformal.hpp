#pragma once

// Conformal wrappers: models expose scored outputs, and under conformal
// execution each call returns the prediction set of labels clearing a
// threshold instead of a single answer. A single scale τ rescales every
// model's base threshold; calibration picks τ on validation tasks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "quasar/abstract.hpp"
#include "quasar/env.hpp"
#include "quasar/runtime.hpp"

namespace quasar {

struct ScoredOutput {
  std::vector<std::pair<Const, double>> candidates;

  void check() const {
    std::set<Const> seen;
    for (const auto& [label, score] : candidates) {
      if (!std::isfinite(score) || score < 0 || score > 1)
        throw Error(ErrorKind::conformal, "score out of [0, 1] for " + to_text(label));
      if (!seen.insert(label).second) throw Error(ErrorKind::conformal, "duplicate label " + to_text(label));
    }
  }

  /// Highest-scoring label; ties go to the earliest candidate.
  const Const& argmax() const {
    if (candidates.empty()) throw Error(ErrorKind::conformal, "argmax of no candidates");
    auto best = candidates.begin();
    for (auto it = candidates.begin(); it != candidates.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  }
};

struct ConformalConfig {
  /// θ_f per model (external function name).
  std::map<std::string, double> base_thresholds;
  std::vector<double> tau_grid{1.0, 1.15, 1.3, 1.45};
  double chosen_tau = 1.0;
  /// Target error rate.
  double alpha = 0.1;
  /// Detections at or above this score are certainly present.
  double detection_certain_threshold = 0.9;
  /// Threshold for models missing from `base_thresholds`.
  double default_threshold = 0.5;

  double base(const std::string& model) const {
    auto it = base_thresholds.find(model);
    return it == base_thresholds.end() ? default_threshold : it->second;
  }

  /// clamp(θ_model · τ) into (0, 1].
  double threshold(const std::string& model, double tau) const {
    return std::clamp(base(model) * tau, 1e-9, 1.0);
  }
  double threshold(const std::string& model) const { return threshold(model, chosen_tau); }

  ConformalConfig with_tau(double tau) const {
    ConformalConfig c = *this;
    c.chosen_tau = tau;
    return c;
  }
};

/// Labels scoring at least the model's threshold; the argmax label alone when
/// none clears it.
inline AbsValue abstract_classify(const ScoredOutput& out, const std::string& model, const ConformalConfig& cfg) {
  out.check();
  double t = cfg.threshold(model);
  ConstSet labels;
  for (const auto& [label, score] : out.candidates)
    if (score >= t) labels.insert(label);
  if (labels.empty()) labels.insert(out.argmax());
  return AbsValue::leaf_set(std::move(labels));
}

/// Detections in order: certain above the certain threshold, possible above
/// the model threshold, dropped below it.
inline AbsListValue abstract_detect(const ScoredOutput& out, const ConformalConfig& cfg,
                                    const std::string& model = ".find") {
  out.check();
  double low = cfg.threshold(model);
  AbsListValue al;
  for (const auto& [item, score] : out.candidates) {
    if (score >= cfg.detection_certain_threshold) {
      al.items.push_back({item, true});
    } else if (score >= low) {
      al.items.push_back({item, false});
    }
  }
  return al;
}

enum class Certainty { certain, uncertain };

inline Certainty certainty(const AbsValue& av) {
  return concretization_count(av, 1) == 1 ? Certainty::certain : Certainty::uncertain;
}

inline Certainty certainty(const AbsListValue& al) {
  return concretization_count(al, 1) == 1 ? Certainty::certain : Certainty::uncertain;
}

inline const char* to_string(Certainty c) { return c == Certainty::certain ? "certain" : "uncertain"; }

// ---------------------------------------------------------------------------
// Models with scores

enum class ModelKind { classify, detect };

struct ScoredCall {
  ModelKind kind = ModelKind::classify;
  ScoredOutput output;
  double latency_ms = 0;
};

/// Environment whose external functions may expose their raw scores.
class ScoredEnvironment : public Environment {
 public:
  /// Scores of `fn(arg)`, or nullopt for functions without a model.
  virtual std::optional<ScoredCall> scores(const std::string& fn, const Value& arg) = 0;
};

/// Answers abstract calls with prediction sets built from the model scores
/// under `cfg`; concrete calls pass through.
class ConformalEnv : public Environment {
 public:
  ConformalEnv(ScoredEnvironment& inner, ConformalConfig cfg) : inner_(inner), cfg_(std::move(cfg)) {}

  CallResult call(const std::string& fn, const Value& arg) override { return inner_.call(fn, arg); }

  AbsCallResult call_abstract(const std::string& fn, const Value& arg) override {
    auto sc = inner_.scores(fn, arg);
    if (!sc) return inner_.call_abstract(fn, arg);
    if (sc->kind == ModelKind::detect) return {abstract_detect(sc->output, cfg_, fn), sc->latency_ms};
    return {abstract_classify(sc->output, fn, cfg_), sc->latency_ms};
  }

  const ConformalConfig& config() const { return cfg_; }

 private:
  ScoredEnvironment& inner_;
  ConformalConfig cfg_;
};

// ---------------------------------------------------------------------------
// Calibration

/// One labelled task: a lowered program, its inputs, a scored environment
/// and the true output.
struct CalibrationTask {
  std::string name;
  Program program;
  FuncTable funcs;
  std::vector<Value> inputs;
  std::shared_ptr<ScoredEnvironment> env;
  Value truth;
};

struct ConformalAnswer {
  bool ok = false;
  AbsValue output;
  std::string error;
};

/// Runs `task` conformally with auto-approval at scale `tau`.
inline ConformalAnswer run_conformal(const CalibrationTask& task, const ConformalConfig& cfg, double tau) {
  ConformalEnv env(*task.env, cfg.with_tau(tau));
  AutoApprover approver;
  VirtualExecutor exec;
  RunOptions opt;
  opt.mode = Mode::conformal;
  opt.inputs = task.inputs;
  opt.trace_rules = false;
  RunOutcome r = run(task.program, task.funcs, env, approver, exec, opt);
  ConformalAnswer a;
  if (r.ok() && r.abs) {
    a.ok = true;
    a.output = *r.abs;
  } else if (r.error) {
    a.error = r.error->what();
  } else {
    a.error = "no abstract result";
  }
  return a;
}

/// A failed run counts as a miss.
inline bool is_miss(const ConformalAnswer& a, const Value& truth) { return !a.ok || !contains(a.output, truth); }

/// Per task and grid value: miss flag and certainty of the output.
struct OutcomeTable {
  std::vector<double> grid;
  // [task][tau]
  std::vector<std::vector<bool>> miss;
  std::vector<std::vector<bool>> certain;
};

inline OutcomeTable evaluate_grid(const std::vector<CalibrationTask>& tasks, const ConformalConfig& cfg) {
  OutcomeTable t;
  t.grid = cfg.tau_grid;
  for (const auto& task : tasks) {
    std::vector<bool> m, c;
    for (double tau : cfg.tau_grid) {
      auto a = run_conformal(task, cfg, tau);
      m.push_back(is_miss(a, task.truth));
      c.push_back(a.ok && certainty(a.output) == Certainty::certain);
    }
    t.miss.push_back(std::move(m));
    t.certain.push_back(std::move(c));
  }
  return t;
}

/// Largest grid value whose error is below `alpha`; the smallest grid value
/// when none is.
inline std::size_t select_tau(const std::vector<double>& grid, const std::vector<double>& errors, double alpha) {
  if (grid.empty() || grid.size() != errors.size()) throw Error(ErrorKind::conformal, "bad tau grid");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (errors[i] < alpha && (!best || grid[i] > grid[*best])) best = i;
  if (best) return *best;
  return static_cast<std::size_t>(std::min_element(grid.begin(), grid.end()) - grid.begin());
}

/// Error per grid value over the rows `idx` of `t`.
inline std::vector<double> grid_errors(const OutcomeTable& t, const std::vector<std::size_t>& idx) {
  std::vector<double> err(t.grid.size(), 0.0);
  if (idx.empty()) throw Error(ErrorKind::conformal, "no tasks");
  for (auto i : idx)
    for (std::size_t j = 0; j < t.grid.size(); ++j) err[j] += t.miss[i][j] ? 1.0 : 0.0;
  for (auto& e : err) e /= static_cast<double>(idx.size());
  return err;
}

struct TauReport {
  std::vector<double> grid;
  std::vector<double> errors;
  std::size_t chosen = 0;
  double tau() const { return grid[chosen]; }
};

inline TauReport calibrate_tau(const std::vector<CalibrationTask>& val, const ConformalConfig& cfg) {
  if (val.empty()) throw Error(ErrorKind::conformal, "no validation tasks");
  auto table = evaluate_grid(val, cfg);
  std::vector<std::size_t> all(val.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  TauReport r;
  r.grid = cfg.tau_grid;
  r.errors = grid_errors(table, all);
  r.chosen = select_tau(r.grid, r.errors, cfg.alpha);
  return r;
}

/// Repeated random validation/test splits over a precomputed outcome table:
/// τ is picked on the validation half and scored on the test half.
struct SplitReport {
  std::size_t splits = 0;
  double mean_test_error = 0;
  double sd_test_error = 0;
  /// Fraction of test tasks answered with a single concrete output.
  double mean_certain = 0;
  double sd_certain = 0;
  /// How often each grid value was chosen.
  std::vector<std::size_t> chosen_count;
};

inline SplitReport split_simulation(const OutcomeTable& t, double alpha, std::size_t splits, std::uint64_t seed,
                                    double validation_fraction = 0.5) {
  const std::size_t n = t.miss.size();
  const auto n_val = static_cast<std::size_t>(std::round(static_cast<double>(n) * validation_fraction));
  if (n < 2 || n_val == 0 || n_val >= n) throw Error(ErrorKind::conformal, "too few tasks for a split");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  SplitReport r;
  r.splits = splits;
  r.chosen_count.assign(t.grid.size(), 0);
  std::vector<double> errs, certs;
  for (std::size_t s = 0; s < splits; ++s) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::size_t j = select_tau(t.grid, grid_errors(t, val), alpha);
    ++r.chosen_count[j];
    errs.push_back(grid_errors(t, test)[j]);
    double c = 0;
    for (auto i : test) c += t.certain[i][j] ? 1 : 0;
    certs.push_back(c / static_cast<double>(test.size()));
  }
  auto mean_sd = [](const std::vector<double>& xs) {
    double m = 0, v = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    for (double x : xs) v += (x - m) * (x - m);
    return std::pair{m, xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0};
  };
  if (splits == 0) return r;
  std::tie(r.mean_test_error, r.sd_test_error) = mean_sd(errs);
  std::tie(r.mean_certain, r.sd_certain) = mean_sd(certs);
  return r;
}

/// One labelled model call for base-threshold optimisation. For detection the
/// truth is the set of candidates truly present.
struct ModelSample {
  ScoredCall call;
  std::set<Const> truth;
};

/// Whether the prediction set at threshold `t` covers the truth.
inline bool covers(const ModelSample& s, double t, double certain_threshold) {
  if (s.call.kind == ModelKind::classify) {
    const Const& label = *s.truth.begin();
    bool any = false;
    for (const auto& [l, score] : s.call.output.candidates) {
      if (score >= t) any = true;
      if (l == label && score >= t) return true;
    }
    return !any && s.call.output.argmax() == label;
  }
  for (const auto& [item, score] : s.call.output.candidates) {
    bool present = s.truth.count(item) > 0;
    if (present && score < t) return false;
    if (!present && score >= certain_threshold) return false;
  }
  return true;
}

inline double set_size(const ModelSample& s, double t) {
  std::size_t n = 0;
  for (const auto& c : s.call.output.candidates) n += c.second >= t ? 1 : 0;
  return s.call.kind == ModelKind::classify ? static_cast<double>(std::max<std::size_t>(n, 1))
                                            : static_cast<double>(n);
}

/// Per model, the grid threshold with the smallest mean set size whose
/// coverage on `samples` is at least 1 - alpha. Falls back to the smallest
/// grid threshold when none qualifies.
inline std::map<std::string, double> optimize_base_thresholds(
    const std::map<std::string, std::vector<ModelSample>>& samples, double alpha, double certain_threshold,
    const std::vector<double>& grid) {
  std::map<std::string, double> out;
  for (const auto& [model, ss] : samples) {
    if (ss.empty()) continue;
    std::optional<double> best;
    double best_size = 0;
    for (double t : grid) {
      double cov = 0, size = 0;
      for (const auto& s : ss) {
        cov += covers(s, t, certain_threshold) ? 1 : 0;
        size += set_size(s, t);
      }
      cov /= static_cast<double>(ss.size());
      size /= static_cast<double>(ss.size());
      if (cov >= 1 - alpha && (!best || size < best_size)) {
        best = t;
        best_size = size;
      }
    }
    out[model] = best ? *best : *std::min_element(grid.begin(), grid.end());
  }
  return out;
}

}  // namespace quasar
