#pragma once

// Brute-force concretization oracle. A random concrete program gets up to
// three of its top-level literals replaced by abstract leaves; running each
// concretization concretely must land inside the conformal output.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "quasar/abstract.hpp"
#include "quasar/runtime.hpp"
#include "gen_ir.hpp"

namespace quasar::qt {

struct SoundnessCase {
  Program abstract_program;
  FuncTable funcs;
  std::vector<Program> concretizations;
  std::size_t leaves = 0;
};

inline SoundnessCase make_soundness_case(std::uint64_t seed, std::size_t max_leaves = 3, std::size_t max_card = 3) {
  GenOptions go;
  go.abstract_ops = false;
  IrGen gen(seed, go);
  Program p = gen.program();
  SoundnessCase c;
  c.funcs = gen.funcs();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> prims;
  for (std::size_t i = 0; i < p.stmts.size(); ++i)
    if (std::holds_alternative<op::Prim>(p.stmts[i].op)) prims.push_back(i);
  std::shuffle(prims.begin(), prims.end(), rng);
  std::size_t n = std::min<std::size_t>(prims.size(), 1 + rng() % max_leaves);
  prims.resize(n);

  // Per chosen statement, its abstract op and the concrete options.
  std::vector<std::pair<std::size_t, std::vector<Const>>> choices;
  c.abstract_program = p;
  for (auto i : prims) {
    const Const& v = std::get<op::Prim>(p.stmts[i].op).value;
    std::vector<Const> options{v};
    std::size_t card = 2 + rng() % (max_card - 1);
    if (v.is_list() && !v.as_list().empty()) {
      op::AbsList al;
      std::size_t unsure = rng() % v.as_list().size();
      for (std::size_t k = 0; k < v.as_list().size(); ++k) al.items.push_back({v.as_list()[k], k != unsure});
      c.abstract_program.stmts[i].op = al;
      options.clear();
      for (auto& l : concretize(AbsListValue{al.items})) options.emplace_back(l);
    } else {
      if (v.is_bool()) {
        options.push_back(Const(!v.as_bool()));
      } else if (v.is_int()) {
        for (std::size_t k = 1; k < card; ++k) options.push_back(Const(v.as_int() + static_cast<std::int64_t>(k)));
      } else if (v.is_string()) {
        for (std::size_t k = 1; k < card; ++k) options.push_back(Const(v.as_string() + std::string(k, 'x')));
      } else if (v.is_list()) {
        options.push_back(Const(Const::List{Const(std::int64_t{0})}));
      } else {
        continue;
      }
      c.abstract_program.stmts[i].op = op::AbsPrim{ConstSet(options.begin(), options.end())};
    }
    choices.emplace_back(i, options);
    ++c.leaves;
  }

  std::vector<Program> out{p};
  for (const auto& [i, options] : choices) {
    std::vector<Program> next;
    for (const auto& q : out) {
      for (const auto& o : options) {
        Program r = q;
        r.stmts[i].op = op::Prim{o};
        next.push_back(std::move(r));
      }
    }
    out = std::move(next);
  }
  c.concretizations = std::move(out);
  return c;
}

struct SoundnessResult {
  bool sound = true;
  /// The conformal run stopped at the concretization cap; nothing to check.
  bool capped = false;
  std::size_t concrete_ok = 0;
  std::string detail;
};

inline SoundnessResult check_soundness(const SoundnessCase& c) {
  SoundnessResult r;
  auto env = stub_env();
  AutoApprover approver;
  RunOptions abs_opt;
  abs_opt.mode = Mode::conformal;
  abs_opt.trace_rules = false;
  abs_opt.inputs.assign(c.abstract_program.params.size(), Value(1));
  VirtualExecutor e1;
  RunOutcome a = run(c.abstract_program, c.funcs, env, approver, e1, abs_opt);
  if (!a.ok() && a.error && a.error->kind() == ErrorKind::conformal &&
      std::string(a.error->what()).find("exceeds") != std::string::npos) {
    r.capped = true;
    return r;
  }
  for (const auto& q : c.concretizations) {
    VirtualExecutor e2;
    RunOptions opt;
    opt.inputs = abs_opt.inputs;
    RunOutcome k = run(q, c.funcs, env, approver, e2, opt);
    if (!k.ok()) continue;
    ++r.concrete_ok;
    if (!a.ok() || !a.abs) {
      r.sound = false;
      r.detail = "conformal run failed: " + std::string(a.error ? a.error->what() : "no result");
      return r;
    }
    if (!contains(*a.abs, *k.value)) {
      r.sound = false;
      r.detail = to_text(*k.value) + " not in " + to_text(*a.abs);
      return r;
    }
  }
  return r;
}

}  // namespace quasar::qt
