#pragma once

#include <algorithm>
#include <functional>
#include <iterator>
#include <list>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "quasar/abstract.hpp"
#include "quasar/builtins.hpp"
#include "quasar/error.hpp"
#include "quasar/ir.hpp"
#include "quasar/value.hpp"

namespace quasar {

enum class Mode { concrete, conformal };

enum class Rule {
  alias,
  proj,
  if_t,
  if_f,
  fold_unroll,
  join_join,
  join_tuple,
  join_prim,
  if_tf,
  fold_abs,
  pure_apply,
  // Effectful call whose argument is set-valued: one call per concretization,
  // joined afterwards.
  call_split,
};

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::alias: return "alias";
    case Rule::proj: return "proj";
    case Rule::if_t: return "if-t";
    case Rule::if_f: return "if-f";
    case Rule::fold_unroll: return "fold";
    case Rule::join_join: return "join-join";
    case Rule::join_tuple: return "join-tuple";
    case Rule::join_prim: return "join-prim";
    case Rule::if_tf: return "if-tf";
    case Rule::fold_abs: return "fold-abs";
    case Rule::pure_apply: return "pure-apply";
    case Rule::call_split: return "call-split";
  }
  return "unknown";
}

inline bool is_conformal_rule(Rule r) {
  switch (r) {
    case Rule::join_join:
    case Rule::join_tuple:
    case Rule::join_prim:
    case Rule::if_tf:
    case Rule::fold_abs:
    case Rule::call_split: return true;
    default: return false;
  }
}

/// Statements are located by the variable they bind. Targets are unique and
/// survive every rewrite of other statements, so a locator never goes stale
/// until its own statement is rewritten away.
using Site = VarId;

inline std::string site_text(Site s) { return "v" + std::to_string(s.id); }

struct RuleInstance {
  Rule rule;
  Site site;
  friend bool operator==(const RuleInstance&, const RuleInstance&) = default;
};

struct Dispatchable {
  Site site;
  FuncId func;
  Value arg;
};

inline constexpr std::size_t kDefaultStepBudget = 1'000'000;
inline constexpr std::size_t kPointwiseCap = 64;

/// Mutable rewriting state for one program. Only top-level statements are
/// rewritten; blocks stay inert until an if/fold rule inlines a fresh copy.
/// Removed aliases are recorded in a forwarding map and resolved lazily, so
/// no rule ever needs to walk the whole program.
class RewriteContext {
 public:
  using RuleObserver = std::function<void(const RuleInstance&)>;

  RewriteContext(const Program& p, FuncTable ft, Mode mode = Mode::concrete)
      : ft_(std::move(ft)), mode_(mode), alloc_(VarAllocator::after(p)), params_(p.params),
        ret_(p.ret) {
    for (const auto& s : p.stmts) {
      auto it = stmts_.insert(stmts_.end(), s);
      defs_[s.target] = it;
    }
  }

  Mode mode() const { return mode_; }
  const FuncTable& func_table() const { return ft_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return stmts_.size(); }
  void set_step_budget(std::size_t b) { budget_ = b; }
  void set_observer(RuleObserver obs) { observer_ = std::move(obs); }

  const std::vector<VarId>& unbound_params() const { return params_; }

  VarId resolve(VarId v) const {
    VarId cur = v;
    for (auto it = fwd_.find(cur); it != fwd_.end(); it = fwd_.find(cur)) cur = it->second;
    if (cur != v) fwd_[v] = cur;
    return cur;
  }

  /// Concrete value of `x` when it is built from constants only. Singleton
  /// abstract sets and lists without uncertain elements count as constants.
  std::optional<Value> value_of(VarId x) const {
    if (state(x) != State::concrete) return std::nullopt;
    return build_value(x);
  }

  std::optional<AbsValue> abs_value_of(VarId x) const {
    if (state(x) == State::none) return std::nullopt;
    return build_abs(x);
  }

  std::optional<Value> result_value() const { return value_of(ret_); }
  std::optional<AbsValue> result_abs() const { return abs_value_of(ret_); }
  VarId ret() const { return resolve(ret_); }

  std::vector<RuleInstance> applicable() const {
    std::vector<RuleInstance> out;
    for (const auto& s : stmts_)
      if (auto r = match(s)) out.push_back({*r, s.target});
    return out;
  }

  /// Applies one rule instance; throws if it is no longer applicable.
  void apply(const RuleInstance& ri) {
    auto it = find_stmt(ri.site);
    auto r = it ? match(**it) : std::nullopt;
    if (!r || *r != ri.rule)
      throw Error(ErrorKind::validation, std::string("stale rule instance: ") +
                                             to_string(ri.rule) + " at " + site_text(ri.site));
    count_step();
    apply_at(*it, ri.rule);
  }

  /// Applies rules leftmost-first until none applies.
  void normalize() {
    auto it = stmts_.begin();
    while (it != stmts_.end()) {
      auto r = match(*it);
      if (!r) {
        ++it;
        continue;
      }
      count_step();
      it = apply_at(it, *r);
    }
  }

  std::vector<Dispatchable> find_dispatchable(const std::set<Site>& already = {}) const {
    std::vector<Dispatchable> out;
    for (const auto& s : stmts_) {
      const auto* c = std::get_if<op::Call>(&s.op);
      if (!c || already.count(s.target)) continue;
      const auto* d = ft_.find(c->func);
      if (!d || d->purity != Purity::effectful) continue;
      if (auto v = value_of(c->arg)) out.push_back({s.target, c->func, std::move(*v)});
    }
    return out;
  }

  void mark_pending(Site site, TaskId task) {
    auto it = find_stmt(site);
    if (!it || !std::holds_alternative<op::Call>((*it)->op))
      throw Error(ErrorKind::validation, "no call at " + site_text(site));
    (*it)->op = op::Pending{task};
  }

  std::vector<std::pair<Site, TaskId>> pending() const {
    std::vector<std::pair<Site, TaskId>> out;
    for (const auto& s : stmts_)
      if (const auto* p = std::get_if<op::Pending>(&s.op)) out.push_back({s.target, p->task});
    return out;
  }

  void substitute_result(Site site, const Value& v) {
    auto it = pending_at(site);
    it->op = value_op(it, v);
  }

  void substitute_result(Site site, const AbsResult& r) {
    auto it = pending_at(site);
    if (const auto* av = std::get_if<AbsValue>(&r)) {
      it->op = abs_op(it, *av);
      return;
    }
    const auto& al = std::get<AbsListValue>(r);
    bool all_certain = std::all_of(al.items.begin(), al.items.end(),
                                   [](const AbsItem& i) { return i.certain; });
    if (all_certain) {
      Const::List l;
      for (const auto& i : al.items) l.push_back(i.value);
      it->op = op::Prim{Const(std::move(l))};
    } else {
      it->op = op::AbsList{al.items};
    }
  }

  void bind_param(VarId param, const Value& v) {
    auto pos = take_param(param);
    Op o = value_op(pos, v);
    insert(pos, Stmt{param, std::move(o)});
  }

  void bind_param(VarId param, const AbsValue& v) {
    auto pos = take_param(param);
    Op o = abs_op(pos, v);
    insert(pos, Stmt{param, std::move(o)});
  }

  bool is_terminal() const {
    for (const auto& s : stmts_) {
      if (std::holds_alternative<op::Pending>(s.op)) return false;
      if (match(s)) return false;
    }
    return find_dispatchable().empty();
  }

  /// Current program with every forwarded name resolved, nested blocks included.
  Program program() const {
    Program out;
    out.params = params_;
    out.stmts.reserve(stmts_.size());
    for (const auto& s : stmts_) out.stmts.push_back(Stmt{s.target, resolve_op(s.op)});
    out.ret = resolve(ret_);
    return out;
  }

  /// Explains why a program with no applicable rule still has no result.
  Error diagnose_stuck() const {
    if (!params_.empty()) return Error(ErrorKind::eval, "unbound input " + site_text(params_.front()));
    for (const auto& s : stmts_)
      if (auto msg = stuck_reason(s)) return Error(mode_ == Mode::conformal && is_join(s)
                                                       ? ErrorKind::conformal
                                                       : ErrorKind::eval,
                                                   *msg);
    return Error(ErrorKind::eval, "program is stuck at " + site_text(resolve(ret_)));
  }

 private:
  using StmtList = std::list<Stmt>;
  using Iter = StmtList::iterator;
  using CIter = StmtList::const_iterator;

  enum class State { none, concrete, abstract };

  FuncTable ft_;
  Mode mode_;
  VarAllocator alloc_;
  std::vector<VarId> params_;
  VarId ret_;
  StmtList stmts_;
  std::unordered_map<VarId, Iter, VarIdHash> defs_;
  mutable std::unordered_map<VarId, VarId, VarIdHash> fwd_;
  std::size_t steps_ = 0;
  std::size_t budget_ = kDefaultStepBudget;
  RuleObserver observer_;

  void count_step() {
    if (++steps_ > budget_)
      throw Error(ErrorKind::budget,
                  "rewrite step budget of " + std::to_string(budget_) + " exceeded");
  }

  std::optional<Iter> find_stmt(Site site) {
    auto d = defs_.find(site);
    if (d == defs_.end()) return std::nullopt;
    return d->second;
  }

  const Stmt* def(VarId v) const {
    auto d = defs_.find(resolve(v));
    return d == defs_.end() ? nullptr : &*d->second;
  }

  Iter pending_at(Site site) {
    auto it = find_stmt(site);
    if (!it || !std::holds_alternative<op::Pending>((*it)->op))
      throw Error(ErrorKind::validation, "no pending call at " + site_text(site));
    return *it;
  }

  Iter take_param(VarId param) {
    auto p = std::find(params_.begin(), params_.end(), param);
    if (p == params_.end())
      throw Error(ErrorKind::validation, "not an unbound input: " + site_text(param));
    params_.erase(p);
    return stmts_.begin();
  }

  Iter insert(Iter pos, Stmt s) {
    VarId t = s.target;
    auto it = stmts_.insert(pos, std::move(s));
    defs_[t] = it;
    return it;
  }

  VarId emit(Iter pos, Op o) {
    VarId v = alloc_.fresh();
    insert(pos, Stmt{v, std::move(o)});
    return v;
  }

  void insert_body(Iter pos, const Program& body) {
    for (const auto& s : body.stmts) insert(pos, s);
  }

  Block fresh_copy(const BlockPtr& b) {
    return freshen(*b, alloc_, [this](VarId v) { return resolve(v); });
  }

  // -- value views ---------------------------------------------------------

  State state(VarId x) const {
    const Stmt* s = def(x);
    if (!s) return State::none;
    if (const auto* p = std::get_if<op::Prim>(&s->op)) {
      (void)p;
      return State::concrete;
    }
    if (const auto* a = std::get_if<op::AbsPrim>(&s->op))
      return a->values.size() == 1 ? State::concrete : State::abstract;
    if (const auto* l = std::get_if<op::AbsList>(&s->op)) {
      for (const auto& i : l->items)
        if (!i.certain) return State::abstract;
      return State::concrete;
    }
    if (const auto* t = std::get_if<op::MkTuple>(&s->op)) {
      State out = State::concrete;
      for (auto v : t->items) {
        State st = state(v);
        if (st == State::none) return State::none;
        if (st == State::abstract) out = State::abstract;
      }
      return out;
    }
    return State::none;
  }

  Value build_value(VarId x) const {
    const Stmt* s = def(x);
    if (const auto* p = std::get_if<op::Prim>(&s->op)) return Value(p->value);
    if (const auto* a = std::get_if<op::AbsPrim>(&s->op)) return Value(*a->values.begin());
    if (const auto* l = std::get_if<op::AbsList>(&s->op)) {
      Const::List out;
      for (const auto& i : l->items) out.push_back(i.value);
      return Value(Const(std::move(out)));
    }
    const auto& t = std::get<op::MkTuple>(s->op);
    Value::Tuple items;
    items.reserve(t.items.size());
    for (auto v : t.items) items.push_back(build_value(v));
    return Value::tuple(std::move(items));
  }

  AbsValue build_abs(VarId x) const {
    const Stmt* s = def(x);
    if (const auto* p = std::get_if<op::Prim>(&s->op)) return AbsValue::leaf_set({p->value});
    if (const auto* a = std::get_if<op::AbsPrim>(&s->op)) return AbsValue::leaf_set(a->values);
    if (const auto* l = std::get_if<op::AbsList>(&s->op))
      return as_abs_value(AbsListValue{l->items});
    const auto& t = std::get<op::MkTuple>(s->op);
    AbsValue::Tuple items;
    items.reserve(t.items.size());
    for (auto v : t.items) items.push_back(build_abs(v));
    return AbsValue::tuple(std::move(items));
  }

  /// Op binding `v`; tuple components are emitted before `pos`.
  Op value_op(Iter pos, const Value& v) {
    if (v.is_leaf()) return op::Prim{v.leaf()};
    op::MkTuple t;
    for (const auto& item : v.items()) t.items.push_back(emit(pos, value_op(pos, item)));
    return t;
  }

  Op abs_op(Iter pos, const AbsValue& v) {
    if (v.is_leaf_set()) {
      if (v.leaves().size() == 1) return op::Prim{*v.leaves().begin()};
      return op::AbsPrim{v.leaves()};
    }
    op::MkTuple t;
    for (const auto& item : v.items()) t.items.push_back(emit(pos, abs_op(pos, item)));
    return t;
  }

  // -- matching ------------------------------------------------------------

  const Builtin* pure_impl(FuncId f) const {
    const auto* d = ft_.find(f);
    if (!d || d->purity != Purity::pure) return nullptr;
    return find_builtin(d->name);
  }

  static bool is_join(const Stmt& s) { return std::holds_alternative<op::Join>(s.op); }

  static bool is_leaf_def(const Stmt* s) {
    return s && (std::holds_alternative<op::Prim>(s->op) ||
                 std::holds_alternative<op::AbsPrim>(s->op) ||
                 std::holds_alternative<op::AbsList>(s->op));
  }

  bool all_lists(const op::AbsPrim& a) const {
    return std::all_of(a.values.begin(), a.values.end(),
                       [](const Const& c) { return c.is_list(); });
  }

  std::optional<Rule> match(const Stmt& s) const {
    const bool conformal = mode_ == Mode::conformal;
    return std::visit(
        [&](const auto& o) -> std::optional<Rule> {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, op::Alias>) {
            return Rule::alias;
          } else if constexpr (std::is_same_v<T, op::Proj>) {
            const Stmt* d = def(o.src);
            if (!d) return std::nullopt;
            const auto* t = std::get_if<op::MkTuple>(&d->op);
            if (t && o.index < t->items.size()) return Rule::proj;
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, op::If>) {
            if (auto c = value_of(o.cond)) {
              if (c->is_leaf() && c->leaf().is_bool())
                return c->leaf().as_bool() ? Rule::if_t : Rule::if_f;
              return std::nullopt;
            }
            if (!conformal) return std::nullopt;
            const Stmt* d = def(o.cond);
            if (!d) return std::nullopt;
            const auto* a = std::get_if<op::AbsPrim>(&d->op);
            if (a && a->values == ConstSet{Const(false), Const(true)}) return Rule::if_tf;
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, op::Fold>) {
            if (auto l = value_of(o.list)) {
              if (l->is_leaf() && l->leaf().is_list()) return Rule::fold_unroll;
              return std::nullopt;
            }
            if (!conformal) return std::nullopt;
            const Stmt* d = def(o.list);
            if (!d) return std::nullopt;
            if (std::holds_alternative<op::AbsList>(d->op)) return Rule::fold_abs;
            const auto* a = std::get_if<op::AbsPrim>(&d->op);
            if (a && all_lists(*a)) return Rule::fold_abs;
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, op::Call>) {
            const auto* d = ft_.find(o.func);
            if (!d) return std::nullopt;
            State st = state(o.arg);
            if (d->purity == Purity::pure) {
              if (!find_builtin(d->name)) return std::nullopt;
              if (st == State::concrete || (conformal && st == State::abstract))
                return Rule::pure_apply;
              return std::nullopt;
            }
            if (conformal && st == State::abstract) return Rule::call_split;
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, op::Join>) {
            if (!conformal) return std::nullopt;
            return match_join(o);
          } else {
            return std::nullopt;
          }
        },
        s.op);
  }

  std::optional<Rule> match_join(const op::Join& j) const {
    std::set<VarId> seen;
    std::vector<const Stmt*> defs;
    for (auto m : j.members) {
      VarId r = resolve(m);
      if (!seen.insert(r).second) return Rule::join_join;
      const Stmt* d = def(r);
      if (d && is_join(*d)) return Rule::join_join;
      defs.push_back(d);
    }
    if (std::any_of(defs.begin(), defs.end(), [](const Stmt* d) { return !d; }))
      return std::nullopt;
    if (const auto* t0 = std::get_if<op::MkTuple>(&defs.front()->op)) {
      for (const auto* d : defs) {
        const auto* t = std::get_if<op::MkTuple>(&d->op);
        if (!t || t->items.size() != t0->items.size()) return std::nullopt;
      }
      return Rule::join_tuple;
    }
    if (std::all_of(defs.begin(), defs.end(), is_leaf_def)) return Rule::join_prim;
    return std::nullopt;
  }

  // -- application ---------------------------------------------------------

  /// Rewrites the statement at `it`; returns the first statement that may
  /// have become rewritable (the first inserted one, or the rewritten one).
  Iter apply_at(Iter it, Rule r) {
    const bool at_front = it == stmts_.begin();
    Iter before = at_front ? stmts_.end() : std::prev(it);
    Site site = it->target;

    switch (r) {
      case Rule::alias: {
        fwd_[site] = resolve(std::get<op::Alias>(it->op).src);
        defs_.erase(site);
        stmts_.erase(it);
        break;
      }
      case Rule::proj: {
        const auto& p = std::get<op::Proj>(it->op);
        const auto& t = std::get<op::MkTuple>(def(p.src)->op);
        it->op = op::Alias{t.items[p.index]};
        break;
      }
      case Rule::if_t:
      case Rule::if_f: {
        auto o = std::get<op::If>(it->op);
        Block b = fresh_copy(r == Rule::if_t ? o.then_blk : o.else_blk);
        insert(it, Stmt{b.param, op::MkTuple{}});
        insert_body(it, b.body);
        it->op = op::Alias{b.body.ret};
        break;
      }
      case Rule::if_tf: {
        auto o = std::get<op::If>(it->op);
        Block b1 = fresh_copy(o.then_blk);
        insert(it, Stmt{b1.param, op::MkTuple{}});
        insert_body(it, b1.body);
        Block b2 = fresh_copy(o.else_blk);
        insert(it, Stmt{b2.param, op::MkTuple{}});
        insert_body(it, b2.body);
        it->op = op::Join{{b1.body.ret, b2.body.ret}};
        break;
      }
      case Rule::fold_unroll: {
        auto o = std::get<op::Fold>(it->op);
        Const list = build_value(o.list).leaf();
        VarId z = emit(it, op::Alias{o.init});
        for (const auto& c : list.as_list()) {
          VarId w = emit(it, op::Prim{c});
          Block b = fresh_copy(o.body);
          insert(it, Stmt{b.param, op::MkTuple{{z, w}}});
          insert_body(it, b.body);
          z = b.body.ret;
        }
        it->op = op::Alias{z};
        break;
      }
      case Rule::fold_abs: {
        auto o = std::get<op::Fold>(it->op);
        const Stmt* d = def(o.list);
        if (const auto* a = std::get_if<op::AbsPrim>(&d->op)) {
          ConstSet lists = a->values;
          op::Join j;
          for (const auto& l : lists) {
            VarId lv = emit(it, op::Prim{l});
            Block b = fresh_copy(o.body);
            j.members.push_back(
                emit(it, op::Fold{lv, o.init, make_block(b.param, std::move(b.body))}));
          }
          it->op = std::move(j);
          break;
        }
        auto items = std::get<op::AbsList>(d->op).items;
        VarId z = emit(it, op::Alias{o.init});
        for (const auto& item : items) {
          VarId w = emit(it, op::Prim{item.value});
          Block b = fresh_copy(o.body);
          insert(it, Stmt{b.param, op::MkTuple{{z, w}}});
          insert_body(it, b.body);
          z = item.certain ? b.body.ret : emit(it, op::Join{{b.body.ret, z}});
        }
        it->op = op::Alias{z};
        break;
      }
      case Rule::pure_apply: {
        const auto& c = std::get<op::Call>(it->op);
        const Builtin& b = *pure_impl(c.func);
        if (state(c.arg) == State::concrete) {
          Value res = apply_builtin(b, build_value(c.arg));
          it->op = value_op(it, res);
        } else {
          AbsValue res = pointwise(b, build_abs(c.arg));
          it->op = abs_op(it, res);
        }
        break;
      }
      case Rule::call_split: {
        auto c = std::get<op::Call>(it->op);
        AbsValue a = build_abs(c.arg);
        check_pointwise_cap(a);
        op::Join j;
        for (const auto& v : concretize(a)) {
          VarId av = emit(it, value_op(it, v));
          j.members.push_back(emit(it, op::Call{c.func, av}));
        }
        it->op = std::move(j);
        break;
      }
      case Rule::join_join: {
        const auto members = std::get<op::Join>(it->op).members;
        std::vector<VarId> flat;
        std::set<VarId> seen;
        auto add = [&](VarId v) {
          if (seen.insert(v).second) flat.push_back(v);
        };
        for (auto m : members) {
          VarId r0 = resolve(m);
          const Stmt* d = def(r0);
          if (d && is_join(*d)) {
            for (auto inner : std::get<op::Join>(d->op).members) add(resolve(inner));
          } else {
            add(r0);
          }
        }
        if (flat.size() == 1) it->op = op::Alias{flat.front()};
        else it->op = op::Join{std::move(flat)};
        break;
      }
      case Rule::join_tuple: {
        const auto members = std::get<op::Join>(it->op).members;
        std::vector<std::vector<VarId>> tuples;
        for (auto m : members) tuples.push_back(std::get<op::MkTuple>(def(m)->op).items);
        op::MkTuple out;
        for (std::size_t k = 0; k < tuples.front().size(); ++k) {
          op::Join col;
          for (const auto& t : tuples) col.members.push_back(t[k]);
          out.items.push_back(emit(it, std::move(col)));
        }
        it->op = std::move(out);
        break;
      }
      case Rule::join_prim: {
        const auto members = std::get<op::Join>(it->op).members;
        ConstSet u;
        for (auto m : members) {
          AbsValue a = build_abs(m);
          u.insert(a.leaves().begin(), a.leaves().end());
        }
        if (u.size() == 1) it->op = op::Prim{*u.begin()};
        else it->op = op::AbsPrim{std::move(u)};
        break;
      }
    }

    if (observer_) observer_({r, site});
    return before == stmts_.end() ? stmts_.begin() : std::next(before);
  }

  static void check_pointwise_cap(const AbsValue& a) {
    if (concretization_count(a, kPointwiseCap) > kPointwiseCap)
      throw Error(ErrorKind::conformal, "pointwise evaluation exceeds " +
                                            std::to_string(kPointwiseCap) + " combinations");
  }

  /// Built-in applied to every concretization of its argument. Combinations
  /// that raise an evaluation error are dropped unless all of them do.
  static AbsValue pointwise(const Builtin& b, const AbsValue& arg) {
    check_pointwise_cap(arg);
    std::set<Value> results;
    std::optional<Error> first;
    for (const auto& v : concretize(arg)) {
      try {
        results.insert(apply_builtin(b, v));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::eval) throw;
        if (!first) first = e;
      }
    }
    if (results.empty()) throw *first;
    return abstract_union(results);
  }

  // -- export and diagnosis ------------------------------------------------

  Program resolve_program(const Program& p) const {
    Program out;
    out.params = p.params;
    out.stmts.reserve(p.stmts.size());
    for (const auto& s : p.stmts) out.stmts.push_back(Stmt{s.target, resolve_op(s.op)});
    out.ret = resolve(p.ret);
    return out;
  }

  BlockPtr resolve_block(const BlockPtr& b) const {
    return make_block(b->param, resolve_program(b->body));
  }

  Op resolve_op(const Op& o) const {
    Op out = map_operands(o, [this](VarId v) { return resolve(v); });
    if (auto* f = std::get_if<op::Fold>(&out)) {
      f->body = resolve_block(f->body);
    } else if (auto* i = std::get_if<op::If>(&out)) {
      i->then_blk = resolve_block(i->then_blk);
      i->else_blk = resolve_block(i->else_blk);
    }
    return out;
  }

  std::optional<std::string> stuck_reason(const Stmt& s) const {
    if (match(s)) return std::nullopt;
    const std::string at = " at " + site_text(s.target);
    if (const auto* p = std::get_if<op::Proj>(&s.op)) {
      const Stmt* d = def(p->src);
      if (!d) return std::nullopt;
      if (const auto* t = std::get_if<op::MkTuple>(&d->op))
        return "projection index " + std::to_string(p->index) + " out of range for tuple of " +
               std::to_string(t->items.size()) + at;
      if (is_leaf_def(d)) return "projection of a non-tuple" + at;
    } else if (const auto* i = std::get_if<op::If>(&s.op)) {
      if (auto c = abs_value_of(i->cond)) return "condition is not a boolean: " + to_text(*c) + at;
    } else if (const auto* f = std::get_if<op::Fold>(&s.op)) {
      if (auto l = abs_value_of(f->list)) return "fold over a non-list: " + to_text(*l) + at;
    } else if (const auto* c = std::get_if<op::Call>(&s.op)) {
      const auto* d = ft_.find(c->func);
      if (d && d->purity == Purity::pure && !find_builtin(d->name))
        return "no implementation for pure function " + d->name + at;
      if (d && d->purity == Purity::effectful && mode_ == Mode::concrete &&
          state(c->arg) == State::abstract)
        return "set-valued argument to " + d->name + " in concrete mode" + at;
    } else if (const auto* j = std::get_if<op::Join>(&s.op)) {
      if (mode_ == Mode::concrete) return "join in concrete mode" + at;
      bool all_known = std::all_of(j->members.begin(), j->members.end(), [&](VarId m) {
        const Stmt* d = def(m);
        return d && (is_leaf_def(d) || std::holds_alternative<op::MkTuple>(d->op));
      });
      if (all_known) return "incompatible join" + at;
    }
    return std::nullopt;
  }
};

/// One rule application on an immutable program.
inline Program apply(const Program& p, const FuncTable& ft, Mode mode, const RuleInstance& ri) {
  RewriteContext ctx(p, ft, mode);
  ctx.apply(ri);
  return ctx.program();
}

inline std::vector<RuleInstance> applicable(const Program& p, const FuncTable& ft, Mode mode) {
  return RewriteContext(p, ft, mode).applicable();
}

inline Program normalize(const Program& p, const FuncTable& ft, Mode mode = Mode::concrete,
                         std::size_t budget = kDefaultStepBudget) {
  RewriteContext ctx(p, ft, mode);
  ctx.set_step_budget(budget);
  ctx.normalize();
  return ctx.program();
}

inline std::optional<Value> value_of(const Program& p, const FuncTable& ft, VarId x) {
  return RewriteContext(p, ft).value_of(x);
}

}  // namespace quasar
