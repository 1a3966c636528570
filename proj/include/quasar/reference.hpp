#pragma once

// Direct sequential interpreter for the source subset. It shares only the
// built-in table and the call resolution with the lowering, so it can serve as
// an independent check on lowering plus rewriting.

#include <map>
#include <string>
#include <vector>

#include "quasar/env.hpp"
#include "quasar/lower.hpp"
#include "quasar/runtime.hpp"
#include "quasar/source.hpp"

namespace quasar {

struct ReferenceResult {
  Value value;
  /// External calls in program order.
  std::vector<ExecutedCall> calls;
  /// Sum of call latencies, i.e. the sequential makespan.
  double latency_ms = 0;
};

namespace detail {

class Interpreter {
 public:
  Interpreter(Environment& env, const std::map<std::string, Value>& inputs, std::size_t max_loop)
      : env_(env), inputs_(inputs), max_loop_(max_loop) {}

  ReferenceResult run(const SrcAst& src) {
    ReferenceResult out;
    std::optional<Value> r = suite(src.body);
    out.value = r ? *r : Value(Const(Null{}));
    out.calls = std::move(calls_);
    out.latency_ms = latency_;
    return out;
  }

 private:
  Value call_builtin(const std::string& name, Value::Tuple args) {
    return apply_builtin(*find_builtin(name), Value::tuple(std::move(args)));
  }

  Value invoke(const ResolvedFunc& f, Value::Tuple args) {
    if (f.pure) return call_builtin(f.name, std::move(args));
    Value arg = Value::tuple(std::move(args));
    calls_.push_back({f.name, to_text(arg)});
    CallResult r = env_.call(f.name, arg);
    latency_ += r.latency_ms;
    return r.value;
  }

  Value name(const std::string& n, SrcPos p) {
    if (auto it = vars_.find(n); it != vars_.end()) return it->second;
    if (auto it = inputs_.find(n); it != inputs_.end()) return it->second;
    throw PositionedError(ErrorKind::eval, p.line, p.col, "undefined-name", "name '" + n + "' is not defined");
  }

  bool cond(const ExprPtr& e) { return builtin::truthy(expr(e)); }

  Value::Tuple exprs(const std::vector<ExprPtr>& es) {
    Value::Tuple out;
    for (const auto& e : es) out.push_back(expr(e));
    return out;
  }

  Value expr(const ExprPtr& e) {
    return std::visit(
        [&](const auto& n) -> Value {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ast::Name>) {
            return name(n.id, e->pos);
          } else if constexpr (std::is_same_v<T, ast::Literal>) {
            return Value(n.value);
          } else if constexpr (std::is_same_v<T, ast::ListDisplay>) {
            return call_builtin("__list", exprs(n.items));
          } else if constexpr (std::is_same_v<T, ast::TupleDisplay>) {
            return Value::tuple(exprs(n.items));
          } else if constexpr (std::is_same_v<T, ast::Call>) {
            return invoke(resolve_call(n.func), exprs(n.args));
          } else if constexpr (std::is_same_v<T, ast::MethodCall>) {
            Value::Tuple args{expr(n.obj)};
            for (auto& v : exprs(n.args)) args.push_back(std::move(v));
            return invoke(resolve_method(n.method), std::move(args));
          } else if constexpr (std::is_same_v<T, ast::Index>) {
            Value o = expr(n.obj);
            Value i = expr(n.index);
            return call_builtin("getitem", {o, i});
          } else if constexpr (std::is_same_v<T, ast::Unary>) {
            return call_builtin(n.op, {expr(n.operand)});
          } else if constexpr (std::is_same_v<T, ast::Binary>) {
            Value l = expr(n.lhs);
            Value r = expr(n.rhs);
            return call_builtin(n.op, {l, r});
          } else if constexpr (std::is_same_v<T, ast::BoolOp>) {
            Value l = expr(n.lhs);
            if (builtin::truthy(l) == n.is_and) return expr(n.rhs);
            return l;
          } else {
            return cond(n.cond) ? expr(n.then_e) : expr(n.else_e);
          }
        },
        e->node);
  }

  void assign(const Target& t, const Value& v) {
    if (!t.unpack) {
      vars_[t.names.front()] = v;
      return;
    }
    if (!v.is_tuple()) builtin::type_error("cannot unpack a non-tuple value");
    const auto& items = v.items();
    if (items.size() < t.names.size()) throw Error(ErrorKind::eval, "projection index out of range");
    for (std::size_t i = 0; i < t.names.size(); ++i) vars_[t.names[i]] = items[i];
  }

  std::optional<Value> suite(const Suite& body) {
    for (const auto& st : body) {
      if (auto r = statement(*st)) return r;
    }
    return std::nullopt;
  }

  std::optional<Value> statement(const SrcStmt& st) {
    return std::visit(
        [&](const auto& n) -> std::optional<Value> {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ast::Assign>) {
            Value v = expr(n.value);
            for (const auto& t : n.targets) assign(t, v);
          } else if constexpr (std::is_same_v<T, ast::ExprStmt>) {
            const auto* m = std::get_if<ast::MethodCall>(&n.value->node);
            if (m && (m->method == "append" || m->method == "extend")) {
              const auto& target = std::get<ast::Name>(m->obj->node).id;
              Value xs = name(target, m->obj->pos);
              Value e = expr(m->args.front());
              Value rhs = m->method == "append" ? call_builtin("__list", {e}) : e;
              vars_[target] = call_builtin("+", {xs, rhs});
            } else {
              expr(n.value);
            }
          } else if constexpr (std::is_same_v<T, ast::If>) {
            return cond(n.cond) ? suite(n.then_s) : suite(n.else_s);
          } else if constexpr (std::is_same_v<T, ast::For>) {
            Value xs = expr(n.iter);
            if (!xs.is_leaf() || !xs.leaf().is_list()) builtin::type_error("fold over a non-list");
            for (const auto& x : xs.leaf().as_list()) {
              assign(n.target, Value(x));
              suite(n.body);
            }
          } else if constexpr (std::is_same_v<T, ast::While>) {
            for (std::size_t i = 0; i < max_loop_; ++i) {
              if (!cond(n.cond)) return std::nullopt;
              suite(n.body);
            }
            if (cond(n.cond)) throw Error(ErrorKind::budget, "loop budget exceeded: condition still true");
          } else if constexpr (std::is_same_v<T, ast::Return>) {
            return n.value ? expr(n.value) : Value(Const(Null{}));
          }
          return std::nullopt;
        },
        st.node);
  }

  Environment& env_;
  const std::map<std::string, Value>& inputs_;
  std::size_t max_loop_;
  std::map<std::string, Value> vars_;
  std::vector<ExecutedCall> calls_;
  double latency_ = 0;
};

}  // namespace detail

/// Evaluates `src` in program order, calling `env` synchronously.
inline ReferenceResult reference_eval(const SrcAst& src, Environment& env,
                                      const std::map<std::string, Value>& inputs,
                                      std::size_t max_loop_iterations = LowerOptions{}.max_loop_iterations) {
  return detail::Interpreter(env, inputs, max_loop_iterations).run(src);
}

}  // namespace quasar
