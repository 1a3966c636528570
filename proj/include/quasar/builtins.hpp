#pragma once

// Pure built-in functions shared by the rewrite engine (PureApply) and the
// sequential reference evaluator. Every built-in takes the tuple of its
// call arguments and follows host-language semantics for the supported
// types.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "quasar/ir.hpp"
#include "quasar/value.hpp"

namespace quasar {

using BuiltinFn = std::function<Value(const Value::Tuple&)>;

struct Builtin {
  std::string name;
  int arity;  // kVariadic or exact count
  BuiltinFn fn;
};

namespace builtin {

[[noreturn]] inline void type_error(const std::string& msg) {
  throw Error(ErrorKind::eval, "TypeError: " + msg);
}

[[noreturn]] inline void value_error(const std::string& msg) {
  throw Error(ErrorKind::eval, "ValueError: " + msg);
}

inline std::string py_repr(const Const& c);

inline std::string py_repr(const Value& v) {
  if (v.is_leaf()) return py_repr(v.leaf());
  std::string out = "(";
  for (std::size_t i = 0; i < v.items().size(); ++i) {
    if (i) out += ", ";
    out += py_repr(v.items()[i]);
  }
  if (v.items().size() == 1) out += ",";
  return out + ")";
}

inline std::string py_repr(const Const& c) {
  switch (c.kind()) {
    case Const::Kind::string: {
      std::string out = "'";
      for (char ch : c.as_string()) {
        if (ch == '\'' || ch == '\\') out.push_back('\\');
        out.push_back(ch);
      }
      return out + "'";
    }
    case Const::Kind::list: {
      std::string out = "[";
      for (std::size_t i = 0; i < c.as_list().size(); ++i) {
        if (i) out += ", ";
        out += py_repr(c.as_list()[i]);
      }
      return out + "]";
    }
    default: return to_text(c);
  }
}

inline std::string py_str(const Value& v) {
  if (v.is_leaf() && v.leaf().is_string()) return v.leaf().as_string();
  return py_repr(v);
}

inline const char* type_name(const Value& v) {
  if (v.is_tuple()) return "tuple";
  switch (v.leaf().kind()) {
    case Const::Kind::null: return "NoneType";
    case Const::Kind::boolean: return "bool";
    case Const::Kind::integer: return "int";
    case Const::Kind::floating: return "float";
    case Const::Kind::string: return "str";
    case Const::Kind::list: return "list";
  }
  return "?";
}

inline bool truthy(const Value& v) {
  if (v.is_tuple()) return !v.items().empty();
  const Const& c = v.leaf();
  switch (c.kind()) {
    case Const::Kind::null: return false;
    case Const::Kind::boolean: return c.as_bool();
    case Const::Kind::integer: return c.as_int() != 0;
    case Const::Kind::floating: return c.as_float() != 0.0;
    case Const::Kind::string: return !c.as_string().empty();
    case Const::Kind::list: return !c.as_list().empty();
  }
  return false;
}

// bool participates in arithmetic as 0/1.
inline bool is_numeric(const Value& v) {
  return v.is_leaf() && (v.leaf().is_number() || v.leaf().is_bool());
}
inline bool is_integral(const Value& v) {
  return v.is_leaf() && (v.leaf().is_int() || v.leaf().is_bool());
}
inline std::int64_t to_i64(const Value& v) {
  return v.leaf().is_bool() ? (v.leaf().as_bool() ? 1 : 0) : v.leaf().as_int();
}
inline double to_f64(const Value& v) {
  if (v.leaf().is_float()) return v.leaf().as_float();
  return static_cast<double>(to_i64(v));
}

inline bool py_eq(const Value& a, const Value& b);

inline bool py_eq_const(const Const& a, const Const& b) {
  const bool an = a.is_number() || a.is_bool();
  const bool bn = b.is_number() || b.is_bool();
  if (an && bn) {
    Value va(a), vb(b);
    if (is_integral(va) && is_integral(vb)) return to_i64(va) == to_i64(vb);
    return to_f64(va) == to_f64(vb);
  }
  if (a.kind() != b.kind()) return false;
  if (a.is_list()) {
    const auto& x = a.as_list();
    const auto& y = b.as_list();
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!py_eq_const(x[i], y[i])) return false;
    return true;
  }
  return a == b;
}

inline bool py_eq(const Value& a, const Value& b) {
  if (a.is_tuple() != b.is_tuple()) return false;
  if (a.is_leaf()) return py_eq_const(a.leaf(), b.leaf());
  if (a.items().size() != b.items().size()) return false;
  for (std::size_t i = 0; i < a.items().size(); ++i)
    if (!py_eq(a.items()[i], b.items()[i])) return false;
  return true;
}

/// -1/0/1 ordering with host-language comparability rules.
inline int py_cmp(const Value& a, const Value& b) {
  if (is_numeric(a) && is_numeric(b)) {
    if (is_integral(a) && is_integral(b)) {
      auto x = to_i64(a), y = to_i64(b);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    double x = to_f64(a), y = to_f64(b);
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (a.is_leaf() && b.is_leaf()) {
    const Const& x = a.leaf();
    const Const& y = b.leaf();
    if (x.is_string() && y.is_string()) {
      int c = x.as_string().compare(y.as_string());
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    if (x.is_list() && y.is_list()) {
      const auto& l = x.as_list();
      const auto& r = y.as_list();
      for (std::size_t i = 0; i < l.size() && i < r.size(); ++i) {
        if (py_eq_const(l[i], r[i])) continue;
        return py_cmp(Value(l[i]), Value(r[i]));
      }
      return l.size() < r.size() ? -1 : (l.size() > r.size() ? 1 : 0);
    }
  }
  if (a.is_tuple() && b.is_tuple()) {
    const auto& l = a.items();
    const auto& r = b.items();
    for (std::size_t i = 0; i < l.size() && i < r.size(); ++i) {
      if (py_eq(l[i], r[i])) continue;
      return py_cmp(l[i], r[i]);
    }
    return l.size() < r.size() ? -1 : (l.size() > r.size() ? 1 : 0);
  }
  type_error(std::string("'<' not supported between instances of '") + type_name(a) +
             "' and '" + type_name(b) + "'");
}

inline Value int_result(std::int64_t v) { return Value(Const(v)); }

[[noreturn]] inline void overflow() { throw Error(ErrorKind::eval, "OverflowError: integer overflow"); }

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) overflow();
  return r;
}

inline std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_sub_overflow(a, b, &r)) overflow();
  return r;
}

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) overflow();
  return r;
}

inline Value add(const Value& a, const Value& b) {
  if (is_integral(a) && is_integral(b)) {
    return int_result(checked_add(to_i64(a), to_i64(b)));
  }
  if (is_numeric(a) && is_numeric(b)) return Value(Const(to_f64(a) + to_f64(b)));
  if (a.is_leaf() && b.is_leaf() && a.leaf().is_string() && b.leaf().is_string())
    return Value(Const(a.leaf().as_string() + b.leaf().as_string()));
  if (a.is_leaf() && b.is_leaf() && a.leaf().is_list() && b.leaf().is_list()) {
    Const::List l = a.leaf().as_list();
    l.insert(l.end(), b.leaf().as_list().begin(), b.leaf().as_list().end());
    return Value(Const(std::move(l)));
  }
  if (a.is_tuple() && b.is_tuple()) {
    Value::Tuple t = a.items();
    t.insert(t.end(), b.items().begin(), b.items().end());
    return Value::tuple(std::move(t));
  }
  type_error(std::string("unsupported operand type(s) for +: '") + type_name(a) + "' and '" +
             type_name(b) + "'");
}

inline Value sub(const Value& a, const Value& b) {
  if (is_integral(a) && is_integral(b)) {
    return int_result(checked_sub(to_i64(a), to_i64(b)));
  }
  if (is_numeric(a) && is_numeric(b)) return Value(Const(to_f64(a) - to_f64(b)));
  type_error(std::string("unsupported operand type(s) for -: '") + type_name(a) + "' and '" +
             type_name(b) + "'");
}

inline Value repeat(const Value& seq, std::int64_t n) {
  n = std::max<std::int64_t>(n, 0);
  if (seq.leaf().is_string()) {
    if (n * static_cast<std::int64_t>(seq.leaf().as_string().size()) > 1'000'000)
      value_error("repeated string too large");
    std::string out;
    for (std::int64_t i = 0; i < n; ++i) out += seq.leaf().as_string();
    return Value(Const(std::move(out)));
  }
  if (n * static_cast<std::int64_t>(seq.leaf().as_list().size()) > 1'000'000)
    value_error("repeated list too large");
  Const::List out;
  for (std::int64_t i = 0; i < n; ++i)
    out.insert(out.end(), seq.leaf().as_list().begin(), seq.leaf().as_list().end());
  return Value(Const(std::move(out)));
}

inline Value mul(const Value& a, const Value& b) {
  if (is_integral(a) && is_integral(b)) {
    return int_result(checked_mul(to_i64(a), to_i64(b)));
  }
  if (is_numeric(a) && is_numeric(b)) return Value(Const(to_f64(a) * to_f64(b)));
  auto seq = [](const Value& v) {
    return v.is_leaf() && (v.leaf().is_string() || v.leaf().is_list());
  };
  if (seq(a) && is_integral(b)) return repeat(a, to_i64(b));
  if (is_integral(a) && seq(b)) return repeat(b, to_i64(a));
  type_error(std::string("unsupported operand type(s) for *: '") + type_name(a) + "' and '" +
             type_name(b) + "'");
}

inline Value truediv(const Value& a, const Value& b) {
  if (!is_numeric(a) || !is_numeric(b))
    type_error(std::string("unsupported operand type(s) for /: '") + type_name(a) + "' and '" +
               type_name(b) + "'");
  if (to_f64(b) == 0.0) throw Error(ErrorKind::eval, "ZeroDivisionError: division by zero");
  return Value(Const(to_f64(a) / to_f64(b)));
}

inline Value floordiv(const Value& a, const Value& b) {
  if (!is_numeric(a) || !is_numeric(b))
    type_error(std::string("unsupported operand type(s) for //: '") + type_name(a) + "' and '" +
               type_name(b) + "'");
  if (is_integral(a) && is_integral(b)) {
    auto x = to_i64(a), y = to_i64(b);
    if (y == 0) throw Error(ErrorKind::eval, "ZeroDivisionError: integer division by zero");
    if (x == std::numeric_limits<std::int64_t>::min() && y == -1)
      throw Error(ErrorKind::eval, "OverflowError: integer overflow");
    std::int64_t q = x / y;
    if ((x % y != 0) && ((x < 0) != (y < 0))) --q;
    return int_result(q);
  }
  if (to_f64(b) == 0.0) throw Error(ErrorKind::eval, "ZeroDivisionError: float floor division by zero");
  return Value(Const(std::floor(to_f64(a) / to_f64(b))));
}

inline Value mod(const Value& a, const Value& b) {
  if (!is_numeric(a) || !is_numeric(b))
    type_error(std::string("unsupported operand type(s) for %: '") + type_name(a) + "' and '" +
               type_name(b) + "'");
  if (is_integral(a) && is_integral(b)) {
    auto x = to_i64(a), y = to_i64(b);
    if (y == 0) throw Error(ErrorKind::eval, "ZeroDivisionError: integer modulo by zero");
    if (y == -1) return int_result(0);
    std::int64_t r = x % y;
    if (r != 0 && ((r < 0) != (y < 0))) r += y;
    return int_result(r);
  }
  double y = to_f64(b);
  if (y == 0.0) throw Error(ErrorKind::eval, "ZeroDivisionError: float modulo");
  double r = std::fmod(to_f64(a), y);
  if (r != 0.0 && ((r < 0) != (y < 0))) r += y;
  return Value(Const(r));
}

inline bool contains(const Value& container, const Value& item) {
  if (container.is_tuple()) {
    for (const auto& v : container.items())
      if (py_eq(v, item)) return true;
    return false;
  }
  const Const& c = container.leaf();
  if (c.is_list()) {
    for (const auto& e : c.as_list())
      if (py_eq(Value(e), item)) return true;
    return false;
  }
  if (c.is_string()) {
    if (!item.is_leaf() || !item.leaf().is_string())
      type_error("'in <string>' requires string as left operand");
    return c.as_string().find(item.leaf().as_string()) != std::string::npos;
  }
  type_error(std::string("argument of type '") + type_name(container) + "' is not iterable");
}

inline std::size_t normalize_index(std::int64_t i, std::size_t size, const char* what) {
  std::int64_t n = static_cast<std::int64_t>(size);
  if (i < 0) i += n;
  if (i < 0 || i >= n) throw Error(ErrorKind::eval, std::string("IndexError: ") + what + " index out of range");
  return static_cast<std::size_t>(i);
}

inline Value getitem(const Value& seq, const Value& idx) {
  if (!is_integral(idx)) type_error("indices must be integers");
  std::int64_t i = to_i64(idx);
  if (seq.is_tuple()) return seq.items()[normalize_index(i, seq.items().size(), "tuple")];
  const Const& c = seq.leaf();
  if (c.is_list()) return Value(c.as_list()[normalize_index(i, c.as_list().size(), "list")]);
  if (c.is_string()) {
    auto k = normalize_index(i, c.as_string().size(), "string");
    return Value(Const(std::string(1, c.as_string()[k])));
  }
  type_error(std::string("'") + type_name(seq) + "' object is not subscriptable");
}

inline std::int64_t length(const Value& v) {
  if (v.is_tuple()) return static_cast<std::int64_t>(v.items().size());
  if (v.leaf().is_list()) return static_cast<std::int64_t>(v.leaf().as_list().size());
  if (v.leaf().is_string()) return static_cast<std::int64_t>(v.leaf().as_string().size());
  type_error(std::string("object of type '") + type_name(v) + "' has no len()");
}

inline std::vector<Value> elements(const Value& v) {
  if (v.is_tuple()) return v.items();
  if (v.leaf().is_list()) {
    std::vector<Value> out;
    for (const auto& e : v.leaf().as_list()) out.emplace_back(e);
    return out;
  }
  type_error(std::string("'") + type_name(v) + "' object is not iterable");
}

inline Const to_const(const Value& v) {
  if (!v.is_leaf()) type_error("tuples cannot be stored in lists");
  return v.leaf();
}

inline const std::string& str_arg(const Value& v, const char* fn) {
  if (!v.is_leaf() || !v.leaf().is_string())
    type_error(std::string(fn) + " expects a string, got '" + type_name(v) + "'");
  return v.leaf().as_string();
}

inline Value make_range(const Value::Tuple& a) {
  if (a.empty() || a.size() > 3) type_error("range expected 1 to 3 arguments");
  for (const auto& v : a)
    if (!is_integral(v)) type_error("range arguments must be integers");
  std::int64_t start = 0, stop = 0, step = 1;
  if (a.size() == 1) {
    stop = to_i64(a[0]);
  } else {
    start = to_i64(a[0]);
    stop = to_i64(a[1]);
    if (a.size() == 3) step = to_i64(a[2]);
  }
  if (step == 0) value_error("range() arg 3 must not be zero");
  Const::List out;
  for (std::int64_t i = start; step > 0 ? i < stop : i > stop; i += step) {
    if (out.size() >= 100'000) value_error("range too large");
    out.emplace_back(i);
  }
  return Value(Const(std::move(out)));
}

inline Value min_max(const Value::Tuple& a, bool want_max) {
  std::vector<Value> items = a.size() == 1 ? elements(a[0]) : a;
  if (items.empty()) value_error(want_max ? "max() arg is an empty sequence" : "min() arg is an empty sequence");
  Value best = items[0];
  for (std::size_t i = 1; i < items.size(); ++i) {
    int c = py_cmp(items[i], best);
    if (want_max ? c > 0 : c < 0) best = items[i];
  }
  return best;
}

inline Value to_int(const Value& v) {
  if (is_integral(v)) return int_result(to_i64(v));
  if (v.is_leaf() && v.leaf().is_float()) {
    double d = v.leaf().as_float();
    if (!std::isfinite(d) || std::fabs(d) >= 9.2e18) value_error("cannot convert float to integer");
    return int_result(static_cast<std::int64_t>(std::trunc(d)));
  }
  if (v.is_leaf() && v.leaf().is_string()) {
    std::string s = v.leaf().as_string();
    auto b = s.find_first_not_of(" \t\n");
    auto e = s.find_last_not_of(" \t\n");
    if (b == std::string::npos) value_error("invalid literal for int(): ''");
    s = s.substr(b, e - b + 1);
    std::int64_t out = 0;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      value_error("invalid literal for int(): '" + v.leaf().as_string() + "'");
    return int_result(out);
  }
  type_error(std::string("int() argument must be a string or a number, not '") + type_name(v) + "'");
}

inline Value to_float(const Value& v) {
  if (is_numeric(v)) return Value(Const(to_f64(v)));
  if (v.is_leaf() && v.leaf().is_string()) {
    try {
      std::size_t used = 0;
      double d = std::stod(v.leaf().as_string(), &used);
      if (used == v.leaf().as_string().size()) return Value(Const(d));
    } catch (const std::exception&) {
    }
    value_error("could not convert string to float: '" + v.leaf().as_string() + "'");
  }
  type_error(std::string("float() argument must be a string or a number, not '") + type_name(v) + "'");
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

inline Value split(const Value::Tuple& a) {
  const std::string& s = str_arg(a[0], "split");
  Const::List out;
  if (a.size() == 1) {
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      std::size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j > i) out.emplace_back(s.substr(i, j - i));
      i = j;
    }
    return Value(Const(std::move(out)));
  }
  const std::string& sep = str_arg(a[1], "split");
  if (sep.empty()) value_error("empty separator");
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + sep.size();
  }
  return Value(Const(std::move(out)));
}

inline std::vector<Builtin> make_table() {
  auto bin = [](std::string name, std::function<Value(const Value&, const Value&)> f) {
    return Builtin{std::move(name), 2, [f](const Value::Tuple& a) { return f(a[0], a[1]); }};
  };
  auto un = [](std::string name, std::function<Value(const Value&)> f) {
    return Builtin{std::move(name), 1, [f](const Value::Tuple& a) { return f(a[0]); }};
  };
  auto b = [](bool v) { return Value(Const(v)); };
  std::vector<Builtin> t;
  t.push_back(bin("==", [b](const Value& x, const Value& y) { return b(py_eq(x, y)); }));
  t.push_back(bin("!=", [b](const Value& x, const Value& y) { return b(!py_eq(x, y)); }));
  t.push_back(bin("<", [b](const Value& x, const Value& y) { return b(py_cmp(x, y) < 0); }));
  t.push_back(bin("<=", [b](const Value& x, const Value& y) { return b(py_cmp(x, y) <= 0); }));
  t.push_back(bin(">", [b](const Value& x, const Value& y) { return b(py_cmp(x, y) > 0); }));
  t.push_back(bin(">=", [b](const Value& x, const Value& y) { return b(py_cmp(x, y) >= 0); }));
  t.push_back(bin("+", add));
  t.push_back(bin("-", sub));
  t.push_back(bin("*", mul));
  t.push_back(bin("/", truediv));
  t.push_back(bin("//", floordiv));
  t.push_back(bin("%", mod));
  t.push_back(bin("in", [b](const Value& x, const Value& y) { return b(contains(y, x)); }));
  t.push_back(bin("not_in", [b](const Value& x, const Value& y) { return b(!contains(y, x)); }));
  t.push_back(un("not", [b](const Value& x) { return b(!truthy(x)); }));
  t.push_back(un("truthy", [b](const Value& x) { return b(truthy(x)); }));
  t.push_back(un("neg", [](const Value& x) {
    if (is_integral(x)) {
      return int_result(checked_sub(std::int64_t{0}, to_i64(x)));
    }
    if (is_numeric(x)) return Value(Const(-to_f64(x)));
    type_error(std::string("bad operand type for unary -: '") + type_name(x) + "'");
  }));
  t.push_back(un("len", [](const Value& x) { return int_result(length(x)); }));
  t.push_back(bin("getitem", getitem));
  // List display: the arguments become the elements.
  t.push_back(Builtin{"__list", kVariadic, [](const Value::Tuple& a) {
                        Const::List out;
                        out.reserve(a.size());
                        for (const auto& v : a) out.push_back(to_const(v));
                        return Value(Const(std::move(out)));
                      }});
  t.push_back(un("list", [](const Value& x) {
    Const::List out;
    for (const auto& e : elements(x)) out.push_back(to_const(e));
    return Value(Const(std::move(out)));
  }));
  t.push_back(Builtin{"range", kVariadic, make_range});
  t.push_back(un("str", [](const Value& x) { return Value(Const(py_str(x))); }));
  t.push_back(un("int", to_int));
  t.push_back(un("float", to_float));
  t.push_back(un("bool", [b](const Value& x) { return b(truthy(x)); }));
  t.push_back(un("abs", [](const Value& x) {
    if (is_integral(x)) {
      auto v = to_i64(x);
      if (v == std::numeric_limits<std::int64_t>::min())
        throw Error(ErrorKind::eval, "OverflowError: integer overflow");
      return int_result(v < 0 ? -v : v);
    }
    if (is_numeric(x)) return Value(Const(std::fabs(to_f64(x))));
    type_error(std::string("bad operand type for abs(): '") + type_name(x) + "'");
  }));
  t.push_back(Builtin{"min", kVariadic, [](const Value::Tuple& a) {
                        if (a.empty()) type_error("min expected at least 1 argument");
                        return min_max(a, false);
                      }});
  t.push_back(Builtin{"max", kVariadic, [](const Value::Tuple& a) {
                        if (a.empty()) type_error("max expected at least 1 argument");
                        return min_max(a, true);
                      }});
  t.push_back(un("sum", [](const Value& x) {
    Value acc = int_result(0);
    for (const auto& e : elements(x)) acc = add(acc, e);
    return acc;
  }));
  t.push_back(un("sorted", [](const Value& x) {
    auto items = elements(x);
    std::stable_sort(items.begin(), items.end(),
                     [](const Value& l, const Value& r) { return py_cmp(l, r) < 0; });
    Const::List out;
    for (const auto& v : items) out.push_back(to_const(v));
    return Value(Const(std::move(out)));
  }));
  t.push_back(un(".lower", [](const Value& x) {
    std::string s = str_arg(x, "lower");
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return Value(Const(std::move(s)));
  }));
  t.push_back(un(".upper", [](const Value& x) {
    std::string s = str_arg(x, "upper");
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return Value(Const(std::move(s)));
  }));
  t.push_back(un(".strip", [](const Value& x) { return Value(Const(trim(str_arg(x, "strip")))); }));
  t.push_back(bin(".startswith", [b](const Value& x, const Value& y) {
    const auto& s = str_arg(x, "startswith");
    const auto& p = str_arg(y, "startswith");
    return b(s.compare(0, p.size(), p) == 0 && s.size() >= p.size());
  }));
  t.push_back(bin(".endswith", [b](const Value& x, const Value& y) {
    const auto& s = str_arg(x, "endswith");
    const auto& p = str_arg(y, "endswith");
    return b(s.size() >= p.size() && s.compare(s.size() - p.size(), p.size(), p) == 0);
  }));
  t.push_back(Builtin{".split", kVariadic, [](const Value::Tuple& a) {
                        if (a.empty() || a.size() > 2) type_error("split expected 0 or 1 arguments");
                        return split(a);
                      }});
  t.push_back(bin(".join", [](const Value& sep, const Value& xs) {
    const auto& s = str_arg(sep, "join");
    std::string out;
    bool first = true;
    for (const auto& e : elements(xs)) {
      if (!first) out += s;
      first = false;
      out += str_arg(e, "join");
    }
    return Value(Const(std::move(out)));
  }));
  t.push_back(un("__loop_done", [](const Value& x) {
    if (!truthy(x)) throw Error(ErrorKind::budget, "loop budget exceeded: condition still true");
    return Value(Const(Null{}));
  }));
  return t;
}

}  // namespace builtin

inline const std::map<std::string, Builtin>& builtins() {
  static const std::map<std::string, Builtin> table = [] {
    std::map<std::string, Builtin> m;
    for (auto& b : builtin::make_table()) m.emplace(b.name, std::move(b));
    return m;
  }();
  return table;
}

inline const Builtin* find_builtin(const std::string& name) {
  const auto& t = builtins();
  auto it = t.find(name);
  return it == t.end() ? nullptr : &it->second;
}

/// Applies a pure built-in to its argument tuple, checking arity.
inline Value apply_builtin(const Builtin& b, const Value& arg) {
  if (!arg.is_tuple()) builtin::type_error(b.name + " expects an argument tuple");
  if (b.arity != kVariadic && static_cast<int>(arg.items().size()) != b.arity)
    builtin::type_error(b.name + "() takes " + std::to_string(b.arity) + " argument(s) but " +
                        std::to_string(arg.items().size()) + " were given");
  return b.fn(arg.items());
}

/// Registers every built-in as a pure function.
inline void register_builtins(FuncTable& ft) {
  for (const auto& [name, b] : builtins()) ft.intern(name, Purity::pure, b.arity);
}

}  // namespace quasar
