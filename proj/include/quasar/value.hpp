#pragma once

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "quasar/error.hpp"

namespace quasar {

struct Null {
  friend bool operator==(Null, Null) { return true; }
};

/// Host constant: bool, int, float, string, None, or a list of constants.
class Const {
 public:
  using List = std::vector<Const>;
  using Storage =
      std::variant<Null, bool, std::int64_t, double, std::string, List>;

  enum class Kind { null, boolean, integer, floating, string, list };

  Const() = default;
  Const(Null) {}
  Const(bool b) : v_(b) {}
  Const(int i) : v_(static_cast<std::int64_t>(i)) {}
  Const(std::int64_t i) : v_(i) {}
  Const(double d) : v_(d) {}
  Const(const char* s) : v_(std::string(s)) {}
  Const(std::string s) : v_(std::move(s)) {}
  Const(List l) : v_(std::move(l)) {}

  Kind kind() const { return static_cast<Kind>(v_.index()); }
  bool is_null() const { return kind() == Kind::null; }
  bool is_bool() const { return kind() == Kind::boolean; }
  bool is_int() const { return kind() == Kind::integer; }
  bool is_float() const { return kind() == Kind::floating; }
  bool is_number() const { return is_int() || is_float(); }
  bool is_string() const { return kind() == Kind::string; }
  bool is_list() const { return kind() == Kind::list; }

  bool as_bool() const { return std::get<bool>(v_); }
  std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
  double as_float() const { return std::get<double>(v_); }
  const std::string& as_string() const { return std::get<std::string>(v_); }
  const List& as_list() const { return std::get<List>(v_); }

  const Storage& storage() const { return v_; }

 private:
  Storage v_;
};

namespace detail {

inline int cmp_double(double a, double b) {
  // NaN sorts after every other float so the order stays total.
  const bool an = std::isnan(a), bn = std::isnan(b);
  if (an || bn) return an == bn ? 0 : (an ? 1 : -1);
  if (a < b) return -1;
  if (b < a) return 1;
  if (a == 0.0 && b == 0.0) {
    const bool sa = std::signbit(a), sb = std::signbit(b);
    if (sa != sb) return sa ? -1 : 1;
  }
  return 0;
}

}  // namespace detail

/// Total order over constants: by kind first, then by value.
inline int compare(const Const& a, const Const& b) {
  if (a.kind() != b.kind()) return a.kind() < b.kind() ? -1 : 1;
  switch (a.kind()) {
    case Const::Kind::null: return 0;
    case Const::Kind::boolean:
      return a.as_bool() == b.as_bool() ? 0 : (a.as_bool() ? 1 : -1);
    case Const::Kind::integer:
      return a.as_int() == b.as_int() ? 0 : (a.as_int() < b.as_int() ? -1 : 1);
    case Const::Kind::floating: return detail::cmp_double(a.as_float(), b.as_float());
    case Const::Kind::string: {
      int c = a.as_string().compare(b.as_string());
      return c == 0 ? 0 : (c < 0 ? -1 : 1);
    }
    case Const::Kind::list: {
      const auto& x = a.as_list();
      const auto& y = b.as_list();
      for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        if (int c = compare(x[i], y[i]); c != 0) return c;
      }
      return x.size() == y.size() ? 0 : (x.size() < y.size() ? -1 : 1);
    }
  }
  return 0;
}

inline bool operator==(const Const& a, const Const& b) { return compare(a, b) == 0; }
inline bool operator<(const Const& a, const Const& b) { return compare(a, b) < 0; }

using ConstSet = std::set<Const>;

/// Concrete value: a constant leaf or a (possibly nested) tuple.
class Value {
 public:
  using Tuple = std::vector<Value>;

  Value() : v_(Const{}) {}
  Value(Const c) : v_(std::move(c)) {}
  static Value leaf(Const c) { return Value(std::move(c)); }
  static Value tuple(Tuple items) {
    Value v;
    v.v_ = std::move(items);
    return v;
  }

  bool is_leaf() const { return v_.index() == 0; }
  bool is_tuple() const { return v_.index() == 1; }
  const Const& leaf() const { return std::get<0>(v_); }
  const Tuple& items() const { return std::get<1>(v_); }

 private:
  std::variant<Const, Tuple> v_;
};

inline int compare(const Value& a, const Value& b) {
  if (a.is_leaf() != b.is_leaf()) return a.is_leaf() ? -1 : 1;
  if (a.is_leaf()) return compare(a.leaf(), b.leaf());
  const auto& x = a.items();
  const auto& y = b.items();
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (int c = compare(x[i], y[i]); c != 0) return c;
  }
  return x.size() == y.size() ? 0 : (x.size() < y.size() ? -1 : 1);
}

inline bool operator==(const Value& a, const Value& b) { return compare(a, b) == 0; }
inline bool operator<(const Value& a, const Value& b) { return compare(a, b) < 0; }

/// Set-valued counterpart of Value: a nonempty set of constants, or a tuple
/// of abstract values.
class AbsValue {
 public:
  using Tuple = std::vector<AbsValue>;

  AbsValue() : v_(ConstSet{Const{}}) {}
  static AbsValue leaf_set(ConstSet cs) {
    if (cs.empty()) throw Error(ErrorKind::conformal, "empty abstract leaf set");
    AbsValue a;
    a.v_ = std::move(cs);
    return a;
  }
  static AbsValue tuple(Tuple items) {
    AbsValue a;
    a.v_ = std::move(items);
    return a;
  }
  static AbsValue from_value(const Value& v) {
    if (v.is_leaf()) return leaf_set({v.leaf()});
    Tuple t;
    t.reserve(v.items().size());
    for (const auto& it : v.items()) t.push_back(from_value(it));
    return tuple(std::move(t));
  }

  bool is_leaf_set() const { return v_.index() == 0; }
  bool is_tuple() const { return v_.index() == 1; }
  const ConstSet& leaves() const { return std::get<0>(v_); }
  const Tuple& items() const { return std::get<1>(v_); }

 private:
  std::variant<ConstSet, Tuple> v_;
};

inline int compare(const AbsValue& a, const AbsValue& b) {
  if (a.is_leaf_set() != b.is_leaf_set()) return a.is_leaf_set() ? -1 : 1;
  if (a.is_leaf_set()) {
    const auto& x = a.leaves();
    const auto& y = b.leaves();
    auto i = x.begin();
    auto j = y.begin();
    for (; i != x.end() && j != y.end(); ++i, ++j) {
      if (int c = compare(*i, *j); c != 0) return c;
    }
    return x.size() == y.size() ? 0 : (x.size() < y.size() ? -1 : 1);
  }
  const auto& x = a.items();
  const auto& y = b.items();
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (int c = compare(x[i], y[i]); c != 0) return c;
  }
  return x.size() == y.size() ? 0 : (x.size() < y.size() ? -1 : 1);
}

inline bool operator==(const AbsValue& a, const AbsValue& b) { return compare(a, b) == 0; }
inline bool operator<(const AbsValue& a, const AbsValue& b) { return compare(a, b) < 0; }

/// One element of an abstract list; uncertain elements may or may not be
/// present in the concrete list.
struct AbsItem {
  Const value;
  bool certain = true;
  friend bool operator==(const AbsItem&, const AbsItem&) = default;
};

struct AbsListValue {
  std::vector<AbsItem> items;
  friend bool operator==(const AbsListValue&, const AbsListValue&) = default;
};

// ---------------------------------------------------------------------------
// Canonical text
//
//   None True False 42 -3 1.5 "text" [c, c] (v, v) (v,) () {c, c}
//
// Floats always carry a '.', an exponent, or are inf/nan so they never read
// back as integers.

inline void append_escaped(std::string& out, std::string_view s) {
  out.push_back('"');
  for (unsigned char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (ch < 0x20) {
          static const char* hex = "0123456789abcdef";
          out += "\\u00";
          out.push_back(hex[ch >> 4]);
          out.push_back(hex[ch & 0xf]);
        } else {
          out.push_back(static_cast<char>(ch));
        }
    }
  }
  out.push_back('"');
}

inline std::string format_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), d);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

inline void append_text(std::string& out, const Const& c) {
  switch (c.kind()) {
    case Const::Kind::null: out += "None"; break;
    case Const::Kind::boolean: out += c.as_bool() ? "True" : "False"; break;
    case Const::Kind::integer: out += std::to_string(c.as_int()); break;
    case Const::Kind::floating: out += format_double(c.as_float()); break;
    case Const::Kind::string: append_escaped(out, c.as_string()); break;
    case Const::Kind::list: {
      out.push_back('[');
      bool first = true;
      for (const auto& e : c.as_list()) {
        if (!first) out += ", ";
        first = false;
        append_text(out, e);
      }
      out.push_back(']');
      break;
    }
  }
}

inline void append_text(std::string& out, const Value& v) {
  if (v.is_leaf()) {
    append_text(out, v.leaf());
    return;
  }
  out.push_back('(');
  const auto& items = v.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    append_text(out, items[i]);
  }
  if (items.size() == 1) out.push_back(',');
  out.push_back(')');
}

inline void append_text(std::string& out, const AbsValue& v) {
  if (v.is_leaf_set()) {
    out.push_back('{');
    bool first = true;
    for (const auto& c : v.leaves()) {
      if (!first) out += ", ";
      first = false;
      append_text(out, c);
    }
    out.push_back('}');
    return;
  }
  out.push_back('(');
  const auto& items = v.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    append_text(out, items[i]);
  }
  if (items.size() == 1) out.push_back(',');
  out.push_back(')');
}

/// Abstract lists print like lists with uncertain elements marked '?'.
inline void append_text(std::string& out, const AbsListValue& v) {
  out.push_back('[');
  for (std::size_t i = 0; i < v.items.size(); ++i) {
    if (i) out += ", ";
    append_text(out, v.items[i].value);
    if (!v.items[i].certain) out.push_back('?');
  }
  out.push_back(']');
}

template <class T>
std::string to_text(const T& v) {
  std::string out;
  append_text(out, v);
  return out;
}

/// Cursor over canonical text. Shared by the IR reader and the replay-log
/// reader; positions are reported 1-based.
class TextReader {
 public:
  explicit TextReader(std::string_view text, std::size_t line = 1,
                      std::size_t col_offset = 0)
      : text_(text), line_(line), col_offset_(col_offset) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_ws() {
    while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool consume_word(std::string_view w) {
    skip_ws();
    if (text_.substr(pos_, w.size()) == w) {
      std::size_t end = pos_ + w.size();
      if (end < text_.size() && is_ident_char(text_[end])) return false;
      pos_ = end;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw PositionedError(ErrorKind::parse, line_, col_offset_ + pos_ + 1,
                          "syntax", msg);
  }

  std::string_view rest() const { return text_.substr(pos_); }

  std::uint64_t read_uint() {
    skip_ws();
    std::uint64_t v = 0;
    auto res = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (res.ec != std::errc{}) fail("expected unsigned integer");
    pos_ = static_cast<std::size_t>(res.ptr - text_.data());
    return v;
  }

  std::string read_word() {
    skip_ws();
    std::size_t start = pos_;
    while (!at_end() && text_[pos_] != ' ' && text_[pos_] != '\t') ++pos_;
    if (start == pos_) fail("expected word");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string read_string() {
    skip_ws();
    if (peek() != '"') fail("expected string literal");
    ++pos_;
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated string literal");
      char ch = text_[pos_++];
      if (ch == '"') break;
      if (ch != '\\') {
        out.push_back(ch);
        continue;
      }
      if (at_end()) fail("unterminated escape");
      char e = text_[pos_++];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'u': {
          if (pos_ + 4 > text_.size()) fail("short \\u escape");
          unsigned code = 0;
          auto res = std::from_chars(text_.data() + pos_, text_.data() + pos_ + 4, code, 16);
          if (res.ec != std::errc{} || res.ptr != text_.data() + pos_ + 4)
            fail("bad \\u escape");
          pos_ += 4;
          if (code >= 0x80) fail("\\u escape above 0x7f not supported");
          out.push_back(static_cast<char>(code));
          break;
        }
        default: fail(std::string("unknown escape \\") + e);
      }
    }
    return out;
  }

  Const read_const() {
    skip_ws();
    char c = peek();
    if (c == '"') return Const(read_string());
    if (c == '[') {
      ++pos_;
      Const::List items;
      if (consume(']')) return Const(std::move(items));
      do {
        items.push_back(read_const());
      } while (consume(','));
      expect(']');
      return Const(std::move(items));
    }
    if (consume_word("None")) return Const(Null{});
    if (consume_word("True")) return Const(true);
    if (consume_word("False")) return Const(false);
    if (consume_word("inf")) return Const(INFINITY);
    if (consume_word("nan")) return Const(NAN);
    if (text_.substr(pos_, 4) == "-inf") {
      pos_ += 4;
      return Const(-INFINITY);
    }
    return read_number();
  }

  Value read_value() {
    skip_ws();
    if (peek() != '(') return Value(read_const());
    ++pos_;
    Value::Tuple items;
    if (consume(')')) return Value::tuple(std::move(items));
    while (true) {
      items.push_back(read_value());
      if (consume(')')) break;
      expect(',');
      if (consume(')')) break;
    }
    return Value::tuple(std::move(items));
  }

  AbsValue read_abs_value() {
    skip_ws();
    if (peek() == '{') {
      ++pos_;
      ConstSet cs;
      do {
        cs.insert(read_const());
      } while (consume(','));
      expect('}');
      return AbsValue::leaf_set(std::move(cs));
    }
    if (peek() != '(') fail("expected abstract value");
    ++pos_;
    AbsValue::Tuple items;
    if (consume(')')) return AbsValue::tuple(std::move(items));
    while (true) {
      items.push_back(read_abs_value());
      if (consume(')')) break;
      expect(',');
      if (consume(')')) break;
    }
    return AbsValue::tuple(std::move(items));
  }

  static bool is_ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_';
  }

 private:
  Const read_number() {
    std::size_t start = pos_;
    if (peek() == '-' || peek() == '+') ++pos_;
    bool is_float = false;
    while (!at_end()) {
      char ch = text_[pos_];
      if (ch >= '0' && ch <= '9') {
        ++pos_;
      } else if (ch == '.' || ch == 'e' || ch == 'E') {
        is_float = true;
        ++pos_;
        if ((ch == 'e' || ch == 'E') && (peek() == '-' || peek() == '+')) ++pos_;
      } else {
        break;
      }
    }
    std::string_view tok = text_.substr(start, pos_ - start);
    if (tok.empty() || tok == "-" || tok == "+") {
      pos_ = start;
      fail("expected constant");
    }
    const char* b = tok.data();
    if (*b == '+') ++b;
    const char* e = tok.data() + tok.size();
    if (is_float) {
      double d = 0;
      auto res = std::from_chars(b, e, d);
      if (res.ec != std::errc{} || res.ptr != e) fail("malformed float");
      return Const(d);
    }
    std::int64_t i = 0;
    auto res = std::from_chars(b, e, i);
    if (res.ec != std::errc{} || res.ptr != e) fail("malformed integer");
    return Const(i);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_;
  std::size_t col_offset_;
};

inline Value parse_value(std::string_view text) {
  TextReader r(text);
  Value v = r.read_value();
  r.skip_ws();
  if (!r.at_end()) r.fail("trailing characters after value");
  return v;
}

inline AbsValue parse_abs_value(std::string_view text) {
  TextReader r(text);
  AbsValue v = r.read_abs_value();
  r.skip_ws();
  if (!r.at_end()) r.fail("trailing characters after abstract value");
  return v;
}

inline std::ostream& operator<<(std::ostream& os, const Const& c) { return os << to_text(c); }
inline std::ostream& operator<<(std::ostream& os, const Value& v) { return os << to_text(v); }
inline std::ostream& operator<<(std::ostream& os, const AbsValue& v) { return os << to_text(v); }

}  // namespace quasar
