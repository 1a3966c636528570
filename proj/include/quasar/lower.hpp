#pragma once

// Lowering from the source subset to IR.
//
// Variables are rebound immutably: every assignment makes a fresh VarId and
// the environment maps source names to the latest one. Control flow that
// writes variables returns the written set from its blocks (a single var or a
// tuple) and the names are rebound from the result.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "quasar/builtins.hpp"
#include "quasar/ir.hpp"
#include "quasar/source.hpp"

namespace quasar {

struct LowerOptions {
  /// Iteration budget for `while` loops.
  std::size_t max_loop_iterations = 1000;
  /// External functions dispatched without approval.
  std::set<std::string> preapproved;
  /// Declarations to start from; functions used but not declared are added.
  FuncTable declared;
  /// Leading program params. Names read before any write are appended.
  std::vector<std::string> inputs;
};

struct Lowered {
  Program program;
  FuncTable funcs;
  /// Source names of the program params, in order.
  std::vector<std::string> inputs;
};

/// How a call in source resolves: a pure built-in or an external function.
struct ResolvedFunc {
  std::string name;
  bool pure = false;
};

inline ResolvedFunc resolve_call(const std::string& func) {
  if (func.rfind("__", 0) != 0 && find_builtin(func)) return {func, true};
  return {func, false};
}

inline ResolvedFunc resolve_method(const std::string& method) {
  std::string name = "." + method;
  return {name, find_builtin(name) != nullptr};
}

/// Expressions whose value is always a bool, so conditions need no `truthy`.
inline bool is_boolean_expr(const Expr& e) {
  return std::visit(
      [](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ast::Literal>) {
          return n.value.is_bool();
        } else if constexpr (std::is_same_v<T, ast::Binary>) {
          static const std::set<std::string> cmp{"==", "!=", "<", "<=", ">", ">=", "in", "not_in"};
          return cmp.count(n.op) > 0;
        } else if constexpr (std::is_same_v<T, ast::Unary>) {
          return n.op == "not";
        } else if constexpr (std::is_same_v<T, ast::BoolOp>) {
          return is_boolean_expr(*n.lhs) && is_boolean_expr(*n.rhs);
        } else if constexpr (std::is_same_v<T, ast::CondExpr>) {
          return is_boolean_expr(*n.then_e) && is_boolean_expr(*n.else_e);
        } else if constexpr (std::is_same_v<T, ast::Call>) {
          return n.func == "bool";
        } else if constexpr (std::is_same_v<T, ast::MethodCall>) {
          return n.method == "startswith" || n.method == "endswith";
        } else {
          return false;
        }
      },
      e.node);
}

namespace detail {

inline void add_name(std::vector<std::string>& out, const std::string& n) {
  if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
}

inline bool is_list_mutation(const ast::ExprStmt& s) {
  const auto* m = std::get_if<ast::MethodCall>(&s.value->node);
  return m && (m->method == "append" || m->method == "extend");
}

/// Names written anywhere in `suite`, in order of first write.
inline void assigned_names(const Suite& suite, std::vector<std::string>& out) {
  for (const auto& s : suite) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ast::Assign>) {
            for (const auto& t : n.targets)
              for (const auto& name : t.names) add_name(out, name);
          } else if constexpr (std::is_same_v<T, ast::ExprStmt>) {
            if (is_list_mutation(n)) {
              const auto& m = std::get<ast::MethodCall>(n.value->node);
              if (const auto* nm = std::get_if<ast::Name>(&m.obj->node)) add_name(out, nm->id);
            }
          } else if constexpr (std::is_same_v<T, ast::If>) {
            assigned_names(n.then_s, out);
            assigned_names(n.else_s, out);
          } else if constexpr (std::is_same_v<T, ast::For>) {
            for (const auto& name : n.target.names) add_name(out, name);
            assigned_names(n.body, out);
          } else if constexpr (std::is_same_v<T, ast::While>) {
            assigned_names(n.body, out);
          }
        },
        s->node);
  }
}

inline std::vector<std::string> assigned_names(const Suite& suite) {
  std::vector<std::string> out;
  assigned_names(suite, out);
  return out;
}

/// Names read before any write to them, in textual order. These become the
/// program inputs.
class InputScan {
 public:
  std::vector<std::string> run(const Suite& body) {
    suite(body);
    return order_;
  }

 private:
  void read(const std::string& n) {
    if (!written_.count(n) && seen_.insert(n).second) order_.push_back(n);
  }
  void write(const std::string& n) { written_.insert(n); }

  void exprs(const std::vector<ExprPtr>& es) {
    for (const auto& e : es) expr(e);
  }

  void expr(const ExprPtr& e) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ast::Name>) {
            read(n.id);
          } else if constexpr (std::is_same_v<T, ast::ListDisplay> || std::is_same_v<T, ast::TupleDisplay>) {
            exprs(n.items);
          } else if constexpr (std::is_same_v<T, ast::Call>) {
            exprs(n.args);
          } else if constexpr (std::is_same_v<T, ast::MethodCall>) {
            expr(n.obj);
            exprs(n.args);
          } else if constexpr (std::is_same_v<T, ast::Index>) {
            expr(n.obj);
            expr(n.index);
          } else if constexpr (std::is_same_v<T, ast::Unary>) {
            expr(n.operand);
          } else if constexpr (std::is_same_v<T, ast::Binary> || std::is_same_v<T, ast::BoolOp>) {
            expr(n.lhs);
            expr(n.rhs);
          } else if constexpr (std::is_same_v<T, ast::CondExpr>) {
            expr(n.cond);
            expr(n.then_e);
            expr(n.else_e);
          }
        },
        e->node);
  }

  void suite(const Suite& body) {
    for (const auto& st : body) {
      std::visit(
          [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ast::Assign>) {
              expr(n.value);
              for (const auto& t : n.targets)
                for (const auto& name : t.names) write(name);
            } else if constexpr (std::is_same_v<T, ast::ExprStmt>) {
              expr(n.value);
              if (is_list_mutation(n))
                if (const auto* nm = std::get_if<ast::Name>(&std::get<ast::MethodCall>(n.value->node).obj->node))
                  write(nm->id);
            } else if constexpr (std::is_same_v<T, ast::If>) {
              expr(n.cond);
              suite(n.then_s);
              suite(n.else_s);
            } else if constexpr (std::is_same_v<T, ast::For>) {
              expr(n.iter);
              for (const auto& name : n.target.names) write(name);
              suite(n.body);
            } else if constexpr (std::is_same_v<T, ast::While>) {
              expr(n.cond);
              suite(n.body);
            } else if constexpr (std::is_same_v<T, ast::Return>) {
              if (n.value) expr(n.value);
            }
          },
          st->node);
    }
  }

  std::set<std::string> written_;
  std::set<std::string> seen_;
  std::vector<std::string> order_;
};

inline bool contains_return(const Suite& suite) {
  for (const auto& s : suite) {
    if (std::holds_alternative<ast::Return>(s->node)) return true;
    if (const auto* i = std::get_if<ast::If>(&s->node))
      if (contains_return(i->then_s) || contains_return(i->else_s)) return true;
  }
  return false;
}

class Lowerer {
 public:
  Lowerer(const SrcAst& src, const LowerOptions& opts) : src_(src), opts_(opts), ft_(opts.declared) {}

  Lowered run() {
    Scope top;
    std::vector<Stmt> stmts;
    top.out = &stmts;
    input_names_ = opts_.inputs;
    for (const auto& name : InputScan().run(src_.body)) add_name(input_names_, name);
    for (const auto& name : input_names_) {
      params_.push_back(fresh());
      top.vars[name] = params_.back();
    }
    auto r = suite(src_.body, top);
    VarId ret = r ? *r : prim(top, Const(Null{}));
    Lowered out;
    out.program.params = params_;
    out.program.stmts = std::move(stmts);
    out.program.ret = ret;
    for (const auto& name : opts_.preapproved)
      if (const auto* d = ft_.find(name); d && d->purity == Purity::effectful) ft_.set_preapproved(name);
    out.funcs = std::move(ft_);
    out.inputs = input_names_;
    require_valid(out.program, out.funcs);
    return out;
  }

 private:
  struct Scope {
    std::map<std::string, VarId> vars;
    // name -> why it may be unbound here
    std::map<std::string, std::string> poisoned;
    std::vector<Stmt>* out = nullptr;
  };

  [[noreturn]] static void fail(SrcPos p, const std::string& code, const std::string& msg) {
    throw PositionedError(ErrorKind::lowering, p.line, p.col, code, msg);
  }

  static std::string at(SrcPos p) { return std::to_string(p.line) + ":" + std::to_string(p.col); }

  VarId fresh() { return VarId{next_++}; }

  VarId emit(Scope& s, Op o) {
    VarId v = fresh();
    s.out->push_back(Stmt{v, std::move(o)});
    return v;
  }

  VarId prim(Scope& s, Const c) { return emit(s, op::Prim{std::move(c)}); }

  VarId tuple(Scope& s, std::vector<VarId> items) { return emit(s, op::MkTuple{std::move(items)}); }

  VarId call(Scope& s, const ResolvedFunc& f, std::vector<VarId> args) {
    int arity = kVariadic;
    if (f.pure) arity = find_builtin(f.name)->arity;
    FuncId id = ft_.intern(f.name, f.pure ? Purity::pure : Purity::effectful, arity);
    VarId t = tuple(s, std::move(args));
    return emit(s, op::Call{id, t});
  }

  VarId builtin(Scope& s, const std::string& name, std::vector<VarId> args) {
    return call(s, ResolvedFunc{name, true}, std::move(args));
  }

  void bind(Scope& s, const std::string& name, VarId v) {
    s.vars[name] = v;
    s.poisoned.erase(name);
  }

  void bind_target(Scope& s, const Target& t, VarId v) {
    if (!t.unpack) {
      bind(s, t.names.front(), v);
      return;
    }
    for (std::size_t i = 0; i < t.names.size(); ++i) bind(s, t.names[i], emit(s, op::Proj{i, v}));
  }

  /// True when `name` holds a value on every path reaching this point.
  static bool defined(const Scope& s, const std::string& name) {
    return s.vars.count(name) && !s.poisoned.count(name);
  }

  VarId lookup(Scope& s, const std::string& name, SrcPos p) {
    if (auto it = s.poisoned.find(name); it != s.poisoned.end())
      fail(p, "maybe-undefined", "variable '" + name + "' may be undefined here (" + it->second + ")");
    if (auto it = s.vars.find(name); it != s.vars.end()) return it->second;
    fail(p, "undefined-name", "variable '" + name + "' is used before assignment");
  }

  /// Lowers `body` into a fresh child scope of `parent`.
  struct Branch {
    VarId param;
    Scope scope;
    std::vector<Stmt> stmts;
  };

  Branch open(const Scope& parent) {
    Branch b{fresh(), parent, {}};
    return b;
  }

  BlockPtr close(Branch& b, VarId ret) {
    Program p;
    p.stmts = std::move(b.stmts);
    p.ret = ret;
    return make_block(b.param, std::move(p));
  }

  VarId pack(Scope& s, const std::vector<VarId>& vs) {
    if (vs.size() == 1) return vs.front();
    return tuple(s, vs);
  }

  void unpack(Scope& s, const std::vector<std::string>& names, VarId v) {
    if (names.size() == 1) {
      bind(s, names.front(), v);
      return;
    }
    for (std::size_t i = 0; i < names.size(); ++i) bind(s, names[i], emit(s, op::Proj{i, v}));
  }

  VarId condition(Scope& s, const ExprPtr& e) {
    VarId v = expr(s, e);
    return is_boolean_expr(*e) ? v : builtin(s, "truthy", {v});
  }

  std::vector<VarId> exprs(Scope& s, const std::vector<ExprPtr>& es) {
    std::vector<VarId> out;
    for (const auto& e : es) out.push_back(expr(s, e));
    return out;
  }

  /// Lowers `then_e` and `else_e` as the two arms of an If on `c`.
  template <class Then, class Else>
  VarId branch_value(Scope& s, VarId c, Then then_fn, Else else_fn) {
    Branch t = open(s);
    t.scope.out = &t.stmts;
    VarId tv = then_fn(t.scope);
    Branch f = open(s);
    f.scope.out = &f.stmts;
    VarId fv = else_fn(f.scope);
    return emit(s, op::If{c, close(t, tv), close(f, fv)});
  }

  VarId expr(Scope& s, const ExprPtr& e) {
    const SrcPos p = e->pos;
    return std::visit(
        [&](const auto& n) -> VarId {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ast::Name>) {
            return lookup(s, n.id, p);
          } else if constexpr (std::is_same_v<T, ast::Literal>) {
            return prim(s, n.value);
          } else if constexpr (std::is_same_v<T, ast::ListDisplay>) {
            bool literal = std::all_of(n.items.begin(), n.items.end(), [](const ExprPtr& i) {
              return std::holds_alternative<ast::Literal>(i->node);
            });
            if (literal) {
              Const::List items;
              for (const auto& i : n.items) items.push_back(std::get<ast::Literal>(i->node).value);
              return prim(s, Const(std::move(items)));
            }
            return builtin(s, "__list", exprs(s, n.items));
          } else if constexpr (std::is_same_v<T, ast::TupleDisplay>) {
            return tuple(s, exprs(s, n.items));
          } else if constexpr (std::is_same_v<T, ast::Call>) {
            return call(s, resolve_call(n.func), exprs(s, n.args));
          } else if constexpr (std::is_same_v<T, ast::MethodCall>) {
            if (n.method == "append" || n.method == "extend")
              fail(p, "unsupported-construct", "unsupported construct: ." + n.method + "() used as a value");
            std::vector<VarId> args{expr(s, n.obj)};
            for (auto v : exprs(s, n.args)) args.push_back(v);
            return call(s, resolve_method(n.method), std::move(args));
          } else if constexpr (std::is_same_v<T, ast::Index>) {
            VarId o = expr(s, n.obj);
            VarId i = expr(s, n.index);
            return builtin(s, "getitem", {o, i});
          } else if constexpr (std::is_same_v<T, ast::Unary>) {
            return builtin(s, n.op, {expr(s, n.operand)});
          } else if constexpr (std::is_same_v<T, ast::Binary>) {
            VarId l = expr(s, n.lhs);
            VarId r = expr(s, n.rhs);
            return builtin(s, n.op, {l, r});
          } else if constexpr (std::is_same_v<T, ast::BoolOp>) {
            VarId l = expr(s, n.lhs);
            VarId c = is_boolean_expr(*n.lhs) ? l : builtin(s, "truthy", {l});
            auto keep = [&](Scope&) { return l; };
            auto rhs = [&](Scope& in) { return expr(in, n.rhs); };
            if (n.is_and) return branch_value(s, c, rhs, keep);
            return branch_value(s, c, keep, rhs);
          } else {
            VarId c = condition(s, n.cond);
            return branch_value(
                s, c, [&](Scope& in) { return expr(in, n.then_e); },
                [&](Scope& in) { return expr(in, n.else_e); });
          }
        },
        e->node);
  }

  /// Lowers a suite. Returns the program value when the suite returns.
  std::optional<VarId> suite(const Suite& body, Scope& s) {
    for (std::size_t i = 0; i < body.size(); ++i) {
      const auto& st = body[i];
      if (const auto* r = std::get_if<ast::Return>(&st->node)) {
        return r->value ? expr(s, r->value) : prim(s, Const(Null{}));
      }
      if (const auto* f = std::get_if<ast::If>(&st->node); f && (contains_return(f->then_s) || contains_return(f->else_s))) {
        // The rest of the suite runs after whichever arm falls through, so
        // append it to both arms and let each arm return.
        Suite rest(body.begin() + static_cast<std::ptrdiff_t>(i) + 1, body.end());
        Suite then_s = f->then_s;
        Suite else_s = f->else_s;
        then_s.insert(then_s.end(), rest.begin(), rest.end());
        else_s.insert(else_s.end(), rest.begin(), rest.end());
        VarId c = condition(s, f->cond);
        auto arm = [&](const Suite& arm_body) {
          return [&, arm_body](Scope& in) {
            auto r = suite(arm_body, in);
            return r ? *r : prim(in, Const(Null{}));
          };
        };
        return branch_value(s, c, arm(then_s), arm(else_s));
      }
      statement(*st, s);
    }
    return std::nullopt;
  }

  void statement(const SrcStmt& st, Scope& s) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ast::Assign>) {
            VarId v = expr(s, n.value);
            for (const auto& t : n.targets) bind_target(s, t, v);
          } else if constexpr (std::is_same_v<T, ast::ExprStmt>) {
            if (is_list_mutation(n)) {
              mutation(std::get<ast::MethodCall>(n.value->node), n.value->pos, s);
            } else {
              expr(s, n.value);
            }
          } else if constexpr (std::is_same_v<T, ast::If>) {
            if_stmt(n, st.pos, s);
          } else if constexpr (std::is_same_v<T, ast::For>) {
            for_stmt(n, st.pos, s);
          } else if constexpr (std::is_same_v<T, ast::While>) {
            while_stmt(n, st.pos, s);
          }
        },
        st.node);
  }

  // `xs.append(e)` rebinds xs to `xs + [e]`.
  void mutation(const ast::MethodCall& m, SrcPos p, Scope& s) {
    const auto* nm = std::get_if<ast::Name>(&m.obj->node);
    if (!nm) fail(p, "unsupported-construct", "unsupported construct: ." + m.method + "() on an expression");
    if (m.args.size() != 1)
      fail(p, "unsupported-construct", "unsupported construct: ." + m.method + "() takes exactly one argument");
    VarId xs = lookup(s, nm->id, m.obj->pos);
    VarId e = expr(s, m.args.front());
    VarId rhs = m.method == "append" ? builtin(s, "__list", {e}) : e;
    bind(s, nm->id, builtin(s, "+", {xs, rhs}));
  }

  void if_stmt(const ast::If& n, SrcPos p, Scope& s) {
    VarId c = condition(s, n.cond);
    Branch t = open(s);
    t.scope.out = &t.stmts;
    suite(n.then_s, t.scope);
    Branch f = open(s);
    f.scope.out = &f.stmts;
    suite(n.else_s, f.scope);

    std::vector<std::string> written = assigned_names(n.then_s);
    for (const auto& name : assigned_names(n.else_s)) add_name(written, name);
    std::vector<std::string> merged;
    std::vector<std::string> partial;
    for (const auto& name : written) {
      if (defined(t.scope, name) && defined(f.scope, name)) {
        merged.push_back(name);
      } else {
        partial.push_back(name);
      }
    }
    auto result = [&](Branch& b) {
      std::vector<VarId> vs;
      for (const auto& name : merged) vs.push_back(b.scope.vars.at(name));
      if (vs.empty()) return tuple(b.scope, {});
      return pack(b.scope, vs);
    };
    VarId tv = result(t);
    VarId fv = result(f);
    VarId y = emit(s, op::If{c, close(t, tv), close(f, fv)});
    if (!merged.empty()) unpack(s, merged, y);
    for (const auto& name : partial)
      s.poisoned[name] = "assigned on only one path through the if at " + at(p);
  }

  /// Names written in `body` that already hold a value here; the loop threads
  /// them as its accumulator. The rest are local to an iteration.
  std::vector<std::string> carried(const Suite& body, const Scope& s, const std::vector<std::string>& exclude,
                                   std::vector<std::string>& local) {
    std::vector<std::string> acc;
    for (const auto& name : assigned_names(body)) {
      if (std::find(exclude.begin(), exclude.end(), name) != exclude.end()) continue;
      if (defined(s, name)) {
        acc.push_back(name);
      } else {
        local.push_back(name);
      }
    }
    return acc;
  }

  std::vector<VarId> values_of(Scope& s, const std::vector<std::string>& names, SrcPos p) {
    std::vector<VarId> out;
    for (const auto& name : names) {
      if (auto it = s.poisoned.find(name); it != s.poisoned.end())
        fail(p, "maybe-undefined",
             "variable '" + name + "' may be undefined at the end of the loop body (" + it->second + ")");
      out.push_back(s.vars.at(name));
    }
    return out;
  }

  void for_stmt(const ast::For& n, SrcPos p, Scope& s) {
    VarId list = expr(s, n.iter);
    std::vector<std::string> local;
    auto acc = carried(n.body, s, n.target.names, local);
    std::vector<VarId> init_vs;
    for (const auto& name : acc) init_vs.push_back(s.vars.at(name));
    VarId init = init_vs.empty() ? tuple(s, {}) : pack(s, init_vs);

    Branch b = open(s);
    b.scope.out = &b.stmts;
    VarId a = emit(b.scope, op::Proj{0, b.param});
    VarId elem = emit(b.scope, op::Proj{1, b.param});
    if (!acc.empty()) unpack(b.scope, acc, a);
    bind_target(b.scope, n.target, elem);
    suite(n.body, b.scope);
    auto out_vs = values_of(b.scope, acc, p);
    VarId ret = out_vs.empty() ? tuple(b.scope, {}) : pack(b.scope, out_vs);

    VarId y = emit(s, op::Fold{list, init, close(b, ret)});
    if (!acc.empty()) unpack(s, acc, y);
    for (const auto& name : n.target.names)
      s.poisoned[name] = "loop variable of the for at " + at(p) + " is not available after the loop";
    for (const auto& name : local) s.poisoned[name] = "first assigned inside the loop at " + at(p);
  }

  // A while loop folds over a fixed budget of iterations. The accumulator is
  // (done, vars...); once the condition is false the remaining iterations pass
  // the state through. A final check fails the run if the budget ran out.
  void while_stmt(const ast::While& n, SrcPos p, Scope& s) {
    std::vector<std::string> local;
    auto acc = carried(n.body, s, {}, local);
    VarId list = prim(s, Const(Const::List(opts_.max_loop_iterations, Const(Null{}))));
    std::vector<VarId> init_vs{prim(s, Const(false))};
    for (const auto& name : acc) init_vs.push_back(s.vars.at(name));
    VarId init = tuple(s, init_vs);

    Branch b = open(s);
    b.scope.out = &b.stmts;
    VarId state = emit(b.scope, op::Proj{0, b.param});
    VarId done = emit(b.scope, op::Proj{0, state});
    for (std::size_t i = 0; i < acc.size(); ++i) bind(b.scope, acc[i], emit(b.scope, op::Proj{i + 1, state}));

    VarId step = branch_value(
        b.scope, done, [&](Scope&) { return state; },
        [&](Scope& live) {
          VarId c = condition(live, n.cond);
          return branch_value(
              live, c,
              [&](Scope& body) {
                suite(n.body, body);
                std::vector<VarId> vs{prim(body, Const(false))};
                for (auto v : values_of(body, acc, p)) vs.push_back(v);
                return tuple(body, vs);
              },
              [&](Scope& stop) {
                std::vector<VarId> vs{prim(stop, Const(true))};
                for (const auto& name : acc) vs.push_back(stop.vars.at(name));
                return tuple(stop, vs);
              });
        });
    VarId fin = emit(s, op::Fold{list, init, close(b, step)});
    VarId done_f = emit(s, op::Proj{0, fin});
    for (std::size_t i = 0; i < acc.size(); ++i) bind(s, acc[i], emit(s, op::Proj{i + 1, fin}));
    VarId chk = branch_value(
        s, done_f, [&](Scope& in) { return prim(in, Const(true)); },
        [&](Scope& in) { return builtin(in, "not", {condition(in, n.cond)}); });
    builtin(s, "__loop_done", {chk});
    for (const auto& name : local) s.poisoned[name] = "first assigned inside the loop at " + at(p);
  }

  const SrcAst& src_;
  const LowerOptions& opts_;
  FuncTable ft_;
  std::uint32_t next_ = 0;
  std::vector<std::string> input_names_;
  std::vector<VarId> params_;
};

}  // namespace detail

inline Lowered lower(const SrcAst& src, const LowerOptions& opts = {}) {
  return detail::Lowerer(src, opts).run();
}

inline Lowered transpile(std::string_view text, const LowerOptions& opts = {}) {
  return lower(parse_source(text), opts);
}

}  // namespace quasar
