#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "quasar/error.hpp"
#include "quasar/value.hpp"

namespace quasar {

struct VarId {
  std::uint32_t id = 0;
  friend auto operator<=>(const VarId&, const VarId&) = default;
};

struct VarIdHash {
  std::size_t operator()(VarId v) const noexcept { return std::hash<std::uint32_t>{}(v.id); }
};

using FuncId = std::uint32_t;
using TaskId = std::uint64_t;

enum class Purity { pure, effectful };

inline constexpr int kVariadic = -1;

struct FuncDecl {
  FuncId id = 0;
  std::string name;
  Purity purity = Purity::effectful;
  int arity = kVariadic;
  // Granted ahead of time: dispatched without appearing in an approval batch.
  bool preapproved = false;

  friend bool operator==(const FuncDecl&, const FuncDecl&) = default;
};

class FuncTable {
 public:
  const FuncDecl* find(FuncId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  const FuncDecl* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : find(it->second);
  }

  const FuncDecl& at(FuncId id) const {
    if (const auto* d = find(id)) return *d;
    throw Error(ErrorKind::validation, "unknown function id " + std::to_string(id));
  }

  /// Adds a declaration with an explicit id. Ids and names must be unique.
  void add(FuncDecl decl) {
    if (by_id_.count(decl.id))
      throw Error(ErrorKind::validation, "duplicate function id " + std::to_string(decl.id));
    if (by_name_.count(decl.name))
      throw Error(ErrorKind::validation, "duplicate function name " + decl.name);
    by_name_[decl.name] = decl.id;
    next_id_ = std::max(next_id_, decl.id + 1);
    by_id_.emplace(decl.id, std::move(decl));
  }

  /// Returns the id for `name`, registering it with the next free id if absent.
  FuncId intern(const std::string& name, Purity purity, int arity = kVariadic) {
    if (const auto* d = find(name)) return d->id;
    FuncDecl decl{next_id_, name, purity, arity, false};
    add(decl);
    return decl.id;
  }

  void set_preapproved(const std::string& name, bool value = true) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw Error(ErrorKind::validation, "unknown function " + name);
    by_id_.at(it->second).preapproved = value;
  }

  const std::map<FuncId, FuncDecl>& decls() const { return by_id_; }
  std::size_t size() const { return by_id_.size(); }

  friend bool operator==(const FuncTable& a, const FuncTable& b) { return a.by_id_ == b.by_id_; }

 private:
  std::map<FuncId, FuncDecl> by_id_;
  std::map<std::string, FuncId> by_name_;
  FuncId next_id_ = 0;
};

struct Block;
using BlockPtr = std::shared_ptr<const Block>;

namespace op {
struct Prim { Const value; };
struct Alias { VarId src; };
struct MkTuple { std::vector<VarId> items; };
struct Call { FuncId func = 0; VarId arg; };
struct Proj { std::size_t index = 0; VarId src; };
struct Fold { VarId list; VarId init; BlockPtr body; };
struct If { VarId cond; BlockPtr then_blk; BlockPtr else_blk; };
struct Pending { TaskId task = 0; };
struct AbsPrim { ConstSet values; };
struct AbsList { std::vector<AbsItem> items; };
struct Join { std::vector<VarId> members; };
}  // namespace op

using Op = std::variant<op::Prim, op::Alias, op::MkTuple, op::Call, op::Proj, op::Fold,
                        op::If, op::Pending, op::AbsPrim, op::AbsList, op::Join>;

struct Stmt {
  VarId target;
  Op op;
};

struct Program {
  // Inputs bound at run start; empty for block bodies.
  std::vector<VarId> params;
  std::vector<Stmt> stmts;
  VarId ret;
};

struct Block {
  VarId param;
  Program body;
};

inline BlockPtr make_block(VarId param, Program body) {
  return std::make_shared<const Block>(Block{param, std::move(body)});
}

// ---------------------------------------------------------------------------
// Structural equality

bool operator==(const Program& a, const Program& b);

inline bool operator==(const Block& a, const Block& b) {
  return a.param == b.param && a.body == b.body;
}

inline bool same_block(const BlockPtr& a, const BlockPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

inline bool operator==(const Op& a, const Op& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b);
        if constexpr (std::is_same_v<T, op::Prim>) return x.value == y.value;
        else if constexpr (std::is_same_v<T, op::Alias>) return x.src == y.src;
        else if constexpr (std::is_same_v<T, op::MkTuple>) return x.items == y.items;
        else if constexpr (std::is_same_v<T, op::Call>) return x.func == y.func && x.arg == y.arg;
        else if constexpr (std::is_same_v<T, op::Proj>) return x.index == y.index && x.src == y.src;
        else if constexpr (std::is_same_v<T, op::Fold>)
          return x.list == y.list && x.init == y.init && same_block(x.body, y.body);
        else if constexpr (std::is_same_v<T, op::If>)
          return x.cond == y.cond && same_block(x.then_blk, y.then_blk) &&
                 same_block(x.else_blk, y.else_blk);
        else if constexpr (std::is_same_v<T, op::Pending>) return x.task == y.task;
        else if constexpr (std::is_same_v<T, op::AbsPrim>) return x.values == y.values;
        else if constexpr (std::is_same_v<T, op::AbsList>) return x.items == y.items;
        else return x.members == y.members;
      },
      a);
}

inline bool operator==(const Stmt& a, const Stmt& b) { return a.target == b.target && a.op == b.op; }

inline bool operator==(const Program& a, const Program& b) {
  return a.params == b.params && a.ret == b.ret && a.stmts == b.stmts;
}

// ---------------------------------------------------------------------------
// Variable traversal

/// Calls `f` on every variable the op reads directly (not inside its blocks).
template <class F>
void for_each_operand(const Op& o, F&& f) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, op::Alias>) f(x.src);
        else if constexpr (std::is_same_v<T, op::MkTuple>) for (auto v : x.items) f(v);
        else if constexpr (std::is_same_v<T, op::Call>) f(x.arg);
        else if constexpr (std::is_same_v<T, op::Proj>) f(x.src);
        else if constexpr (std::is_same_v<T, op::Fold>) { f(x.list); f(x.init); }
        else if constexpr (std::is_same_v<T, op::If>) f(x.cond);
        else if constexpr (std::is_same_v<T, op::Join>) for (auto v : x.members) f(v);
      },
      o);
}

/// Rewrites every variable the op reads directly through `f`.
template <class F>
Op map_operands(const Op& o, F&& f) {
  return std::visit(
      [&](const auto& x) -> Op {
        using T = std::decay_t<decltype(x)>;
        T y = x;
        if constexpr (std::is_same_v<T, op::Alias>) y.src = f(x.src);
        else if constexpr (std::is_same_v<T, op::MkTuple>) for (auto& v : y.items) v = f(v);
        else if constexpr (std::is_same_v<T, op::Call>) y.arg = f(x.arg);
        else if constexpr (std::is_same_v<T, op::Proj>) y.src = f(x.src);
        else if constexpr (std::is_same_v<T, op::Fold>) { y.list = f(x.list); y.init = f(x.init); }
        else if constexpr (std::is_same_v<T, op::If>) y.cond = f(x.cond);
        else if constexpr (std::is_same_v<T, op::Join>) for (auto& v : y.members) v = f(v);
        return y;
      },
      o);
}

template <class F>
void for_each_block(const Op& o, F&& f) {
  if (const auto* fo = std::get_if<op::Fold>(&o)) {
    f(*fo->body);
  } else if (const auto* io = std::get_if<op::If>(&o)) {
    f(*io->then_blk);
    f(*io->else_blk);
  }
}

namespace detail {

inline void collect_bound(const Program& p, std::vector<VarId>& out) {
  for (auto v : p.params) out.push_back(v);
  for (const auto& s : p.stmts) {
    out.push_back(s.target);
    for_each_block(s.op, [&](const Block& b) {
      out.push_back(b.param);
      collect_bound(b.body, out);
    });
  }
}

inline void collect_free(const Program& p, std::set<VarId>& bound, std::set<VarId>& out) {
  for (auto v : p.params) bound.insert(v);
  auto use = [&](VarId v) {
    if (!bound.count(v)) out.insert(v);
  };
  for (const auto& s : p.stmts) {
    for_each_operand(s.op, use);
    for_each_block(s.op, [&](const Block& b) {
      std::set<VarId> inner = bound;
      inner.insert(b.param);
      collect_free(b.body, inner, out);
    });
    bound.insert(s.target);
  }
  use(p.ret);
}

}  // namespace detail

/// Every variable bound anywhere in the program, nested blocks included, in
/// binding order. Duplicates are kept so callers can detect them.
inline std::vector<VarId> bound_vars(const Program& p) {
  std::vector<VarId> out;
  detail::collect_bound(p, out);
  return out;
}

inline std::vector<VarId> bound_vars(const Block& b) {
  std::vector<VarId> out{b.param};
  detail::collect_bound(b.body, out);
  return out;
}

inline std::set<VarId> free_vars(const Block& b) {
  std::set<VarId> bound{b.param};
  std::set<VarId> out;
  detail::collect_free(b.body, bound, out);
  return out;
}

inline std::set<VarId> free_vars(const Program& p) {
  std::set<VarId> bound;
  std::set<VarId> out;
  detail::collect_free(p, bound, out);
  return out;
}

inline std::uint32_t max_var_id(const Program& p) {
  std::uint32_t m = p.ret.id;
  for (auto v : bound_vars(p)) m = std::max(m, v.id);
  for (auto v : free_vars(p)) m = std::max(m, v.id);
  return m;
}

class VarAllocator {
 public:
  explicit VarAllocator(std::uint32_t next = 0) : next_(next) {}
  static VarAllocator after(const Program& p) { return VarAllocator(max_var_id(p) + 1); }

  VarId fresh() { return VarId{next_++}; }
  std::uint32_t peek() const { return next_; }

 private:
  std::uint32_t next_;
};

// ---------------------------------------------------------------------------
// Freshening

namespace detail {

using VarMap = std::unordered_map<VarId, VarId, VarIdHash>;

template <class Resolve>
Program freshen_program(const Program& p, VarAllocator& alloc, VarMap& map, Resolve& resolve);

template <class Resolve>
BlockPtr freshen_block(const Block& b, VarAllocator& alloc, VarMap& map, Resolve& resolve) {
  VarId param = alloc.fresh();
  map[b.param] = param;
  return make_block(param, freshen_program(b.body, alloc, map, resolve));
}

template <class Resolve>
Program freshen_program(const Program& p, VarAllocator& alloc, VarMap& map, Resolve& resolve) {
  auto ref = [&](VarId v) {
    auto it = map.find(v);
    return it != map.end() ? it->second : resolve(v);
  };
  Program out;
  for (auto v : p.params) {
    VarId f = alloc.fresh();
    map[v] = f;
    out.params.push_back(f);
  }
  out.stmts.reserve(p.stmts.size());
  for (const auto& s : p.stmts) {
    Op o = map_operands(s.op, ref);
    if (auto* fo = std::get_if<op::Fold>(&o)) {
      fo->body = freshen_block(*fo->body, alloc, map, resolve);
    } else if (auto* io = std::get_if<op::If>(&o)) {
      io->then_blk = freshen_block(*io->then_blk, alloc, map, resolve);
      io->else_blk = freshen_block(*io->else_blk, alloc, map, resolve);
    }
    VarId t = alloc.fresh();
    map[s.target] = t;
    out.stmts.push_back(Stmt{t, std::move(o)});
  }
  out.ret = ref(p.ret);
  return out;
}

}  // namespace detail

/// Copy of `b` with every bound variable replaced by a fresh one. Free
/// variables are passed through `resolve` (identity by default).
template <class Resolve>
Block freshen(const Block& b, VarAllocator& alloc, Resolve&& resolve) {
  detail::VarMap map;
  auto r = std::forward<Resolve>(resolve);
  BlockPtr fresh = detail::freshen_block(b, alloc, map, r);
  return *fresh;
}

inline Block freshen(const Block& b, VarAllocator& alloc) {
  return freshen(b, alloc, [](VarId v) { return v; });
}

/// Bound variables renumbered from 0 in binding order, so programs that
/// differ only in the choice of fresh names compare equal. Assumes `p` has
/// no free variables.
inline Program canonical_names(const Program& p) {
  VarAllocator alloc(0);
  detail::VarMap map;
  auto keep = [](VarId v) { return v; };
  return detail::freshen_program(p, alloc, map, keep);
}

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  std::vector<std::size_t> path;  // statement indices through nested blocks
  std::string message;
};

namespace detail {

struct Validator {
  const FuncTable& ft;
  std::vector<Diagnostic> diags;
  std::unordered_set<VarId, VarIdHash> seen;

  void bind(VarId v, const std::vector<std::size_t>& path) {
    if (!seen.insert(v).second)
      diags.push_back({path, "duplicate binding: " + std::to_string(v.id)});
  }

  void check_program(const Program& p, std::set<VarId> scope, std::vector<std::size_t> path,
                     bool top) {
    for (auto v : p.params) {
      bind(v, path);
      scope.insert(v);
    }
    for (std::size_t i = 0; i < p.stmts.size(); ++i) {
      const auto& s = p.stmts[i];
      auto here = path;
      here.push_back(i);
      for_each_operand(s.op, [&](VarId v) {
        if (!scope.count(v))
          diags.push_back({here, "unbound variable: " + std::to_string(v.id) + " in statement " +
                                     std::to_string(s.target.id)});
      });
      check_op(s.op, here);
      for_each_block(s.op, [&](const Block& b) {
        bind(b.param, here);
        auto inner = scope;
        inner.insert(b.param);
        check_program(b.body, std::move(inner), here, false);
      });
      bind(s.target, here);
      scope.insert(s.target);
    }
    if (!scope.count(p.ret))
      diags.push_back({path, std::string(top ? "unbound return: " : "unbound block return: ") +
                                 std::to_string(p.ret.id)});
  }

  void check_op(const Op& o, const std::vector<std::size_t>& here) {
    if (const auto* c = std::get_if<op::Call>(&o)) {
      if (!ft.find(c->func))
        diags.push_back({here, "unknown function: " + std::to_string(c->func)});
    } else if (const auto* a = std::get_if<op::AbsPrim>(&o)) {
      if (a->values.empty()) diags.push_back({here, "empty abstract primitive"});
    } else if (const auto* j = std::get_if<op::Join>(&o)) {
      if (j->members.size() < 2) diags.push_back({here, "join needs at least two members"});
    }
  }
};

}  // namespace detail

inline std::vector<Diagnostic> validate(const Program& p, const FuncTable& ft) {
  detail::Validator v{ft, {}, {}};
  v.check_program(p, {}, {}, true);
  return std::move(v.diags);
}

inline std::string format_diagnostics(const std::vector<Diagnostic>& diags) {
  std::string out;
  for (const auto& d : diags) {
    out += "[";
    for (std::size_t i = 0; i < d.path.size(); ++i) {
      if (i) out += ".";
      out += std::to_string(d.path[i]);
    }
    out += "] " + d.message + "\n";
  }
  return out;
}

inline void require_valid(const Program& p, const FuncTable& ft) {
  auto diags = validate(p, ft);
  if (!diags.empty())
    throw Error(ErrorKind::validation, "invalid program:\n" + format_diagnostics(diags));
}

}  // namespace quasar
