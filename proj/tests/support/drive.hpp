#pragma once

// Drives a rewrite context to quiescence with effectful calls answered
// synchronously by a stub, choosing among applicable rules and dispatchable
// calls at random.

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "quasar/rewrite.hpp"

namespace quasar::qt {

using Stub = std::function<Value(const std::string&, const Value&)>;

struct DriveResult {
  std::optional<Value> value;
  std::string error;  // empty on success
  std::vector<std::pair<std::string, std::string>> calls;  // sorted (fn, arg text)
  std::size_t steps = 0;
};

/// `seed == 0` selects the deterministic leftmost-first strategy.
inline DriveResult drive(const Program& p, const FuncTable& ft, const Stub& stub,
                         std::uint64_t seed, Mode mode = Mode::concrete,
                         const std::vector<std::pair<VarId, Value>>& inputs = {}) {
  DriveResult out;
  std::mt19937_64 rng(seed);
  RewriteContext ctx(p, ft, mode);
  TaskId next_task = 1;
  try {
    for (const auto& [v, val] : inputs) ctx.bind_param(v, val);
    while (true) {
      if (seed == 0) ctx.normalize();
      auto rules = ctx.applicable();
      auto calls = ctx.find_dispatchable();
      if (rules.empty() && calls.empty()) break;
      std::size_t k = std::uniform_int_distribution<std::size_t>(0, rules.size() + calls.size() - 1)(rng);
      if (seed == 0) k = rules.size();
      if (k < rules.size()) {
        ctx.apply(rules[k]);
        continue;
      }
      const auto& c = calls[k - rules.size()];
      const std::string& fn = ft.at(c.func).name;
      out.calls.push_back({fn, to_text(c.arg)});
      Value v = stub(fn, c.arg);
      ctx.mark_pending(c.site, next_task++);
      ctx.substitute_result(c.site, v);
    }
    out.value = ctx.result_value();
    if (!out.value) out.error = ctx.diagnose_stuck().what();
  } catch (const Error& e) {
    out.error = e.what();
  }
  std::sort(out.calls.begin(), out.calls.end());
  out.steps = ctx.steps();
  return out;
}

}  // namespace quasar::qt
