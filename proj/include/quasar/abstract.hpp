#pragma once

#include <cstddef>
#include <set>
#include <variant>
#include <vector>

#include "quasar/error.hpp"
#include "quasar/value.hpp"

namespace quasar {

inline constexpr std::size_t kDefaultConcretizeCap = 4096;

/// Result of an abstract external call: a set-valued value or an abstract
/// list whose uncertain elements may be absent.
using AbsResult = std::variant<AbsValue, AbsListValue>;

namespace detail {

inline std::size_t sat_mul(std::size_t a, std::size_t b, std::size_t cap) {
  if (a == 0 || b == 0) return 0;
  if (a > cap / b) return cap + 1;
  return a * b;
}

}  // namespace detail

/// Number of concrete values denoted, saturating just above `cap`.
inline std::size_t concretization_count(const AbsValue& av, std::size_t cap) {
  if (av.is_leaf_set()) return std::min(av.leaves().size(), cap + 1);
  std::size_t n = 1;
  for (const auto& it : av.items()) n = detail::sat_mul(n, concretization_count(it, cap), cap);
  return n;
}

inline std::size_t concretization_count(const AbsListValue& al, std::size_t cap) {
  std::size_t n = 1;
  for (const auto& it : al.items)
    if (!it.certain) n = detail::sat_mul(n, 2, cap);
  return n;
}

/// Enumerates every concrete value `av` denotes.
inline std::set<Value> concretize(const AbsValue& av, std::size_t cap = kDefaultConcretizeCap) {
  if (concretization_count(av, cap) > cap)
    throw Error(ErrorKind::conformal, "concretization exceeds cap of " + std::to_string(cap));
  if (av.is_leaf_set()) {
    std::set<Value> out;
    for (const auto& c : av.leaves()) out.insert(Value(c));
    return out;
  }
  std::vector<Value::Tuple> partial{{}};
  for (const auto& item : av.items()) {
    auto options = concretize(item, cap);
    std::vector<Value::Tuple> next;
    next.reserve(partial.size() * options.size());
    for (const auto& p : partial) {
      for (const auto& o : options) {
        auto t = p;
        t.push_back(o);
        next.push_back(std::move(t));
      }
    }
    partial = std::move(next);
  }
  std::set<Value> out;
  for (auto& t : partial) out.insert(Value::tuple(std::move(t)));
  return out;
}

/// Every concrete list an abstract list denotes; element order is preserved.
inline std::set<Const::List> concretize(const AbsListValue& al,
                                        std::size_t cap = kDefaultConcretizeCap) {
  if (concretization_count(al, cap) > cap)
    throw Error(ErrorKind::conformal, "concretization exceeds cap of " + std::to_string(cap));
  std::vector<Const::List> partial{{}};
  for (const auto& item : al.items) {
    std::vector<Const::List> next;
    next.reserve(partial.size() * 2);
    for (const auto& p : partial) {
      if (!item.certain) next.push_back(p);
      auto with = p;
      with.push_back(item.value);
      next.push_back(std::move(with));
    }
    partial = std::move(next);
  }
  return {partial.begin(), partial.end()};
}

inline AbsValue as_abs_value(const AbsListValue& al, std::size_t cap = kDefaultConcretizeCap) {
  ConstSet lists;
  for (auto& l : concretize(al, cap)) lists.insert(Const(l));
  return AbsValue::leaf_set(std::move(lists));
}

/// Smallest abstract value (in this domain) containing every value in `vs`.
/// Tuples of equal length merge componentwise; anything else mixed with a
/// leaf is incompatible.
inline AbsValue abstract_union(const std::vector<AbsValue>& vs) {
  if (vs.empty()) throw Error(ErrorKind::conformal, "union of no values");
  if (vs.front().is_leaf_set()) {
    ConstSet cs;
    for (const auto& v : vs) {
      if (!v.is_leaf_set()) throw Error(ErrorKind::conformal, "incompatible join: leaf and tuple");
      cs.insert(v.leaves().begin(), v.leaves().end());
    }
    return AbsValue::leaf_set(std::move(cs));
  }
  const std::size_t m = vs.front().items().size();
  for (const auto& v : vs) {
    if (!v.is_tuple()) throw Error(ErrorKind::conformal, "incompatible join: leaf and tuple");
    if (v.items().size() != m)
      throw Error(ErrorKind::conformal, "incompatible join: tuples of unequal length");
  }
  AbsValue::Tuple out;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<AbsValue> column;
    for (const auto& v : vs) column.push_back(v.items()[j]);
    out.push_back(abstract_union(column));
  }
  return AbsValue::tuple(std::move(out));
}

inline AbsValue abstract_union(const std::set<Value>& vs) {
  std::vector<AbsValue> avs;
  for (const auto& v : vs) avs.push_back(AbsValue::from_value(v));
  return abstract_union(avs);
}

/// True when `v` is one of the values `av` denotes.
inline bool contains(const AbsValue& av, const Value& v) {
  if (av.is_leaf_set()) return v.is_leaf() && av.leaves().count(v.leaf()) > 0;
  if (!v.is_tuple() || v.items().size() != av.items().size()) return false;
  for (std::size_t i = 0; i < v.items().size(); ++i)
    if (!contains(av.items()[i], v.items()[i])) return false;
  return true;
}

/// Single concrete value when `av` denotes exactly one.
inline std::optional<Value> singleton(const AbsValue& av) {
  if (av.is_leaf_set()) {
    if (av.leaves().size() != 1) return std::nullopt;
    return Value(*av.leaves().begin());
  }
  Value::Tuple t;
  for (const auto& it : av.items()) {
    auto s = singleton(it);
    if (!s) return std::nullopt;
    t.push_back(std::move(*s));
  }
  return Value::tuple(std::move(t));
}

}  // namespace quasar
