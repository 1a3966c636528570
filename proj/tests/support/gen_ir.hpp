#pragma once

// Random well-typed IR programs. Every generated program validates and, when
// its effectful calls are answered by `stub_result`, runs to a value in
// concrete mode without type errors.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "quasar/builtins.hpp"
#include "quasar/env.hpp"
#include "quasar/ir.hpp"

namespace quasar::qt {

struct Ty {
  enum Kind { Int, Bool, Str, List, Tup } kind = Int;
  std::vector<Ty> items;

  static Ty of(Kind k) { return Ty{k, {}}; }
  friend bool operator==(const Ty&, const Ty&) = default;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Deterministic answer of the stubbed effectful functions.
///   ext_int  : (int,)        -> int in [0, 7)
///   ext_flag : (str, int)    -> bool
///   ext_list : (int,)        -> list of up to 3 ints
inline Value stub_result(const std::string& fn, const Value& arg) {
  std::uint64_t h = fnv1a(fn + "|" + to_text(arg));
  if (fn == "ext_int") return Value(static_cast<std::int64_t>(h % 7));
  if (fn == "ext_flag") return Value((h >> 7) % 2 == 0);
  Const::List l;
  for (std::uint64_t i = 0; i < h % 4; ++i) l.push_back(static_cast<std::int64_t>((h >> (8 * i + 3)) % 5));
  return Value(Const(std::move(l)));
}

inline FunctionEnv stub_env(double latency_ms = 10) {
  FunctionEnv env;
  for (const char* f : {"ext_int", "ext_flag", "ext_list"}) {
    std::string name = f;
    env.on(name, [name, latency_ms](const Value& a) { return CallResult{stub_result(name, a), latency_ms}; });
  }
  return env;
}

struct GenOptions {
  int max_depth = 2;
  int top_stmts = 8;
  bool effectful = true;
  bool abstract_ops = false;  // AbsPrim / AbsList / Join / Pending leaves
};

class IrGen {
 public:
  IrGen(std::uint64_t seed, GenOptions opt) : rng_(seed), opt_(opt) {
    register_builtins(ft_);
    ft_.intern("ext_int", Purity::effectful, 1);
    ft_.intern("ext_flag", Purity::effectful, 2);
    ft_.intern("ext_list", Purity::effectful, 1);
  }

  const FuncTable& funcs() const { return ft_; }

  Program program() {
    Program p;
    Scope scope;
    if (coin(0.3)) {
      VarId in = fresh();
      p.params.push_back(in);
      scope.push_back({in, Ty::of(Ty::Int)});
    }
    std::vector<VarId> roots;
    for (int i = 0; i < opt_.top_stmts; ++i) roots.push_back(gen(random_ty(1), scope, p.stmts, 0));
    std::uniform_int_distribution<std::size_t> pick(0, roots.size() - 1);
    std::vector<VarId> outs{roots.back()};
    for (int i = 0; i < 2; ++i) outs.push_back(roots[pick(rng_)]);
    p.ret = bind(p.stmts, op::MkTuple{outs});
    return p;
  }

 private:
  using Scope = std::vector<std::pair<VarId, Ty>>;

  std::mt19937_64 rng_;
  GenOptions opt_;
  FuncTable ft_;
  std::uint32_t next_ = 0;
  std::uint64_t next_task_ = 1;

  VarId fresh() { return VarId{next_++}; }

  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  VarId bind(std::vector<Stmt>& out, Op o) {
    VarId v = fresh();
    out.push_back(Stmt{v, std::move(o)});
    return v;
  }

  FuncId fn(const char* name) { return ft_.find(name)->id; }

  VarId call(std::vector<Stmt>& out, const char* name, std::vector<VarId> args) {
    VarId a = bind(out, op::MkTuple{std::move(args)});
    return bind(out, op::Call{fn(name), a});
  }

  Ty random_ty(int depth) {
    int k = uniform(0, depth > 0 ? 4 : 3);
    if (k < 4) return Ty::of(static_cast<Ty::Kind>(k));
    Ty t = Ty::of(Ty::Tup);
    int n = uniform(1, 3);
    for (int i = 0; i < n; ++i) t.items.push_back(random_ty(depth - 1));
    return t;
  }

  Const random_const(const Ty& t) {
    switch (t.kind) {
      case Ty::Int: return Const(static_cast<std::int64_t>(uniform(-3, 5)));
      case Ty::Bool: return Const(coin(0.5));
      case Ty::Str: {
        static const char* words[] = {"yes", "no", "cat", "", "drink"};
        return Const(words[uniform(0, 4)]);
      }
      case Ty::List: {
        Const::List l;
        int n = uniform(0, 3);
        for (int i = 0; i < n; ++i) l.push_back(Const(static_cast<std::int64_t>(uniform(0, 4))));
        return Const(std::move(l));
      }
      case Ty::Tup: break;
    }
    return Const();
  }

  VarId leaf(const Ty& t, std::vector<Stmt>& out) {
    if (opt_.abstract_ops && t.kind != Ty::Tup && coin(0.15)) {
      if (t.kind == Ty::List && coin(0.5)) {
        op::AbsList al;
        int n = uniform(1, 3);
        for (int i = 0; i < n; ++i) al.items.push_back({Const(static_cast<std::int64_t>(i)), coin(0.5)});
        return bind(out, std::move(al));
      }
      op::AbsPrim ap;
      int n = uniform(1, 3);
      for (int i = 0; i < n; ++i) ap.values.insert(random_const(t));
      return bind(out, std::move(ap));
    }
    if (opt_.abstract_ops && coin(0.05)) return bind(out, op::Pending{next_task_++});
    if (t.kind == Ty::Tup) {
      op::MkTuple mt;
      for (const auto& it : t.items) mt.items.push_back(leaf(it, out));
      return bind(out, std::move(mt));
    }
    return bind(out, op::Prim{random_const(t)});
  }

  std::vector<VarId> visible(const Scope& scope, const Ty& t) {
    std::vector<VarId> out;
    for (const auto& [v, ty] : scope)
      if (ty == t) out.push_back(v);
    return out;
  }

  VarId gen(const Ty& t, Scope& scope, std::vector<Stmt>& out, int depth) {
    VarId v = gen_inner(t, scope, out, depth);
    scope.push_back({v, t});
    return v;
  }

  VarId pick_or_leaf(const Ty& t, Scope& scope, std::vector<Stmt>& out) {
    auto vs = visible(scope, t);
    if (!vs.empty() && coin(0.6)) return vs[std::uniform_int_distribution<std::size_t>(0, vs.size() - 1)(rng_)];
    VarId v = leaf(t, out);
    scope.push_back({v, t});
    return v;
  }

  VarId gen_inner(const Ty& t, Scope& scope, std::vector<Stmt>& out, int depth) {
    const bool deep = depth < opt_.max_depth;
    int choice = uniform(0, 9);
    if (choice == 0) return leaf(t, out);
    if (choice == 1) {
      VarId src = pick_or_leaf(t, scope, out);
      return bind(out, op::Alias{src});
    }
    if (choice == 2) {
      // projection out of a fresh tuple that contains t
      Ty tup = Ty::of(Ty::Tup);
      tup.items = {random_ty(0), t};
      if (coin(0.5)) std::swap(tup.items[0], tup.items[1]);
      std::size_t idx = tup.items[0] == t ? 0 : 1;
      VarId src = pick_or_leaf(tup, scope, out);
      return bind(out, op::Proj{idx, src});
    }
    if (choice == 3 && deep) return gen_if(t, scope, out, depth);
    // list accumulators can grow geometrically under nested folds
    if (choice == 4 && deep && t.kind != Ty::Tup && t.kind != Ty::List)
      return gen_fold(t, scope, out, depth);
    switch (t.kind) {
      case Ty::Int: {
        int k = uniform(0, 3);
        if (k == 0 && opt_.effectful) return call(out, "ext_int", {pick_or_leaf(Ty::of(Ty::Int), scope, out)});
        if (k == 1) return call(out, "len", {pick_or_leaf(Ty::of(Ty::List), scope, out)});
        return call(out, k == 2 ? "+" : "-",
                    {pick_or_leaf(Ty::of(Ty::Int), scope, out), pick_or_leaf(Ty::of(Ty::Int), scope, out)});
      }
      case Ty::Bool: {
        int k = uniform(0, 3);
        if (k == 0 && opt_.effectful)
          return call(out, "ext_flag",
                      {pick_or_leaf(Ty::of(Ty::Str), scope, out), pick_or_leaf(Ty::of(Ty::Int), scope, out)});
        if (k == 1) return call(out, "not", {pick_or_leaf(Ty::of(Ty::Bool), scope, out)});
        if (k == 2) return call(out, "==", {pick_or_leaf(Ty::of(Ty::Str), scope, out), pick_or_leaf(Ty::of(Ty::Str), scope, out)});
        return call(out, "<", {pick_or_leaf(Ty::of(Ty::Int), scope, out), pick_or_leaf(Ty::of(Ty::Int), scope, out)});
      }
      case Ty::Str: {
        if (coin(0.5)) return call(out, "str", {pick_or_leaf(Ty::of(Ty::Int), scope, out)});
        return call(out, "+", {pick_or_leaf(Ty::of(Ty::Str), scope, out), pick_or_leaf(Ty::of(Ty::Str), scope, out)});
      }
      case Ty::List: {
        int k = uniform(0, 2);
        if (k == 0 && opt_.effectful) return call(out, "ext_list", {pick_or_leaf(Ty::of(Ty::Int), scope, out)});
        if (k == 1) return call(out, "__list", {pick_or_leaf(Ty::of(Ty::Int), scope, out)});
        return call(out, "+", {pick_or_leaf(Ty::of(Ty::List), scope, out), pick_or_leaf(Ty::of(Ty::List), scope, out)});
      }
      case Ty::Tup: {
        op::MkTuple mt;
        for (const auto& it : t.items) mt.items.push_back(gen(it, scope, out, depth));
        return bind(out, std::move(mt));
      }
    }
    return leaf(t, out);
  }

  Program body(const Ty& t, Scope scope, int depth) {
    Program p;
    int n = uniform(0, 3);
    for (int i = 0; i < n; ++i) gen(random_ty(0), scope, p.stmts, depth);
    p.ret = gen(t, scope, p.stmts, depth);
    return p;
  }

  VarId gen_if(const Ty& t, Scope& scope, std::vector<Stmt>& out, int depth) {
    VarId cond = pick_or_leaf(Ty::of(Ty::Bool), scope, out);
    VarId w1 = fresh();
    Scope s1 = scope;
    s1.push_back({w1, Ty::of(Ty::Tup)});
    auto b1 = make_block(w1, body(t, s1, depth + 1));
    VarId w2 = fresh();
    Scope s2 = scope;
    s2.push_back({w2, Ty::of(Ty::Tup)});
    auto b2 = make_block(w2, body(t, s2, depth + 1));
    return bind(out, op::If{cond, b1, b2});
  }

  VarId gen_fold(const Ty& t, Scope& scope, std::vector<Stmt>& out, int depth) {
    VarId list = pick_or_leaf(Ty::of(Ty::List), scope, out);
    VarId init = pick_or_leaf(t, scope, out);
    VarId param = fresh();
    Program p;
    Scope inner = scope;
    VarId acc = bind(p.stmts, op::Proj{0, param});
    VarId elem = bind(p.stmts, op::Proj{1, param});
    inner.push_back({acc, t});
    inner.push_back({elem, Ty::of(Ty::Int)});
    Program rest = body(t, inner, depth + 1);
    for (auto& s : rest.stmts) p.stmts.push_back(std::move(s));
    p.ret = rest.ret;
    return bind(out, op::Fold{list, init, make_block(param, std::move(p))});
  }
};

}  // namespace quasar::qt
