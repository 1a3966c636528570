#pragma once

// Restricted agent source: a Python-syntax subset with assignments, calls,
// if/elif/else, for, while and return. Everything else is rejected with a
// positioned diagnostic naming the construct.

#include <cctype>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "quasar/error.hpp"
#include "quasar/value.hpp"

namespace quasar {

struct SrcPos {
  std::size_t line = 1;
  std::size_t col = 1;
};

[[noreturn]] inline void syntax_error(SrcPos p, const std::string& msg) {
  throw PositionedError(ErrorKind::parse, p.line, p.col, "syntax-error", msg);
}

[[noreturn]] inline void unsupported(SrcPos p, const std::string& construct) {
  throw PositionedError(ErrorKind::unsupported, p.line, p.col, "unsupported-construct",
                        "unsupported construct: " + construct);
}

// ---------------------------------------------------------------------------
// Tokens

enum class Tok { name, number, string, op, newline, indent, dedent, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  SrcPos pos;
  Const value;  // number and string literals
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    while (i_ < src_.size()) {
      if (at_line_start_) {
        if (!indentation()) continue;
      }
      char c = src_[i_];
      if (c == '\n') {
        newline();
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
        advance();
        continue;
      }
      if (c == '#') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
        continue;
      }
      if (c == '\\') {
        advance();
        if (i_ < src_.size() && src_[i_] == '\r') advance();
        if (i_ >= src_.size() || src_[i_] != '\n') syntax_error(pos(), "unexpected character after line continuation");
        advance_line();
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        name();
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
        number();
        continue;
      }
      if (c == '"' || c == '\'') {
        string(pos());
        continue;
      }
      op();
    }
    if (depth_ > 0) syntax_error(pos(), "unexpected end of input inside brackets");
    if (!out_.empty() && out_.back().kind != Tok::newline && out_.back().kind != Tok::dedent)
      push(Tok::newline, "", pos());
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(Tok::dedent, "", pos());
    }
    push(Tok::end, "", pos());
    return std::move(out_);
  }

 private:
  std::string_view src_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
  bool at_line_start_ = true;
  int depth_ = 0;  // open brackets suppress NEWLINE/INDENT
  std::vector<std::size_t> indents_;
  std::vector<Token> out_;

  SrcPos pos() const { return {line_, col_}; }

  void advance() {
    ++i_;
    ++col_;
  }

  void advance_line() {
    ++i_;
    ++line_;
    col_ = 1;
  }

  void push(Tok k, std::string text, SrcPos p, Const v = {}) {
    out_.push_back(Token{k, std::move(text), p, std::move(v)});
  }

  void newline() {
    if (depth_ == 0 && !out_.empty() && out_.back().kind != Tok::newline && out_.back().kind != Tok::indent &&
        out_.back().kind != Tok::dedent)
      push(Tok::newline, "", pos());
    advance_line();
    if (depth_ == 0) at_line_start_ = true;
  }

  // Measures the indentation of a logical line. Returns false when the line
  // is blank or a comment and has been consumed.
  bool indentation() {
    std::size_t width = 0;
    SrcPos start = pos();
    while (i_ < src_.size() && (src_[i_] == ' ' || src_[i_] == '\t' || src_[i_] == '\f')) {
      width = src_[i_] == '\t' ? (width / 8 + 1) * 8 : width + 1;
      advance();
    }
    if (i_ < src_.size() && src_[i_] == '\r') advance();
    if (i_ >= src_.size()) return false;
    if (src_[i_] == '\n') {
      advance_line();
      return false;
    }
    if (src_[i_] == '#') {
      while (i_ < src_.size() && src_[i_] != '\n') advance();
      return false;
    }
    at_line_start_ = false;
    if (width > indents_.back()) {
      if (out_.empty()) syntax_error(start, "unexpected indent");
      indents_.push_back(width);
      push(Tok::indent, "", pos());
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        push(Tok::dedent, "", pos());
      }
      if (width != indents_.back()) syntax_error(pos(), "unindent does not match any outer indentation level");
    }
    return true;
  }

  void name() {
    SrcPos p = pos();
    std::size_t b = i_;
    while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_')) advance();
    std::string id(src_.substr(b, i_ - b));
    if (i_ < src_.size() && (src_[i_] == '"' || src_[i_] == '\'') && id.size() <= 2) {
      std::string lower;
      for (char ch : id) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (lower.find('f') != std::string::npos) unsupported(p, "f-string");
      if (lower == "u") {
        string(p);
        return;
      }
      if (lower.find_first_not_of("rb") == std::string::npos) unsupported(p, "string prefix '" + id + "'");
    }
    push(Tok::name, std::move(id), p);
  }

  void number() {
    SrcPos p = pos();
    std::size_t b = i_;
    bool is_float = false;
    if (src_[i_] == '0' && i_ + 1 < src_.size() && std::isalpha(static_cast<unsigned char>(src_[i_ + 1])) &&
        src_[i_ + 1] != 'e' && src_[i_ + 1] != 'E')
      unsupported(p, "non-decimal integer literal");
    while (i_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_')) advance();
    if (i_ < src_.size() && src_[i_] == '.') {
      is_float = true;
      advance();
      while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) advance();
    }
    if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
      std::size_t save = i_, save_col = col_;
      advance();
      if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) advance();
      if (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
        is_float = true;
        while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) advance();
      } else {
        i_ = save;
        col_ = save_col;
      }
    }
    if (i_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_')) {
      if (src_[i_] == 'j' || src_[i_] == 'J') unsupported(p, "complex literal");
      syntax_error(p, "invalid decimal literal");
    }
    std::string text;
    for (char ch : src_.substr(b, i_ - b))
      if (ch != '_') text += ch;
    Const v;
    try {
      if (is_float) {
        v = Const(std::stod(text));
      } else {
        std::size_t idx = 0;
        long long n = std::stoll(text, &idx);
        v = Const(static_cast<std::int64_t>(n));
      }
    } catch (const std::out_of_range&) {
      if (is_float) {
        v = Const(std::stod("inf"));
      } else {
        unsupported(p, "integer literal beyond 64 bits");
      }
    }
    push(Tok::number, std::move(text), p, std::move(v));
  }

  void string(SrcPos p) {
    char q = src_[i_];
    if (i_ + 2 < src_.size() && src_[i_ + 1] == q && src_[i_ + 2] == q) unsupported(p, "triple-quoted string");
    advance();
    std::string out;
    for (;;) {
      if (i_ >= src_.size() || src_[i_] == '\n') syntax_error(p, "unterminated string literal");
      char c = src_[i_];
      if (c == q) {
        advance();
        break;
      }
      if (c != '\\') {
        out += c;
        advance();
        continue;
      }
      advance();
      if (i_ >= src_.size()) syntax_error(p, "unterminated string literal");
      char e = src_[i_];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '0': out += '\0'; break;
        case '\\': out += '\\'; break;
        case '\'': out += '\''; break;
        case '"': out += '"'; break;
        case '\n':
          advance_line();
          continue;
        default:
          out += '\\';
          out += e;
      }
      advance();
    }
    push(Tok::string, "", p, Const(std::move(out)));
  }

  void op() {
    static const char* ops3[] = {"**=", "//=", ">>=", "<<=", "..."};
    static const char* ops2[] = {"==", "!=", "<=", ">=", "//", "**", "->", "+=", "-=", "*=", "/=",
                                 "%=", "&=", "|=", "^=", ":=", "<<", ">>", "@="};
    SrcPos p = pos();
    auto rest = src_.substr(i_);
    for (const char* o : ops3)
      if (rest.substr(0, 3) == o) return emit_op(o, 3, p);
    for (const char* o : ops2)
      if (rest.substr(0, 2) == o) return emit_op(o, 2, p);
    char c = src_[i_];
    static const std::string singles = "+-*/%<>=()[]{},:.;@&|^~";
    if (singles.find(c) == std::string::npos) {
      if (c == '!') syntax_error(p, "invalid syntax");
      syntax_error(p, std::string("invalid character '") + c + "'");
    }
    if (c == '(' || c == '[' || c == '{') ++depth_;
    if (c == ')' || c == ']' || c == '}') {
      if (depth_ == 0) syntax_error(p, std::string("unmatched '") + c + "'");
      --depth_;
    }
    emit_op(std::string(1, c), 1, p);
  }

  void emit_op(const std::string& o, std::size_t n, SrcPos p) {
    for (std::size_t k = 0; k < n; ++k) advance();
    push(Tok::op, o, p);
  }
};

// ---------------------------------------------------------------------------
// AST

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

namespace ast {
struct Name { std::string id; };
struct Literal { Const value; };
struct ListDisplay { std::vector<ExprPtr> items; };
struct TupleDisplay { std::vector<ExprPtr> items; };
/// Call of a bare function name.
struct Call { std::string func; std::vector<ExprPtr> args; };
struct MethodCall { ExprPtr obj; std::string method; std::vector<ExprPtr> args; };
struct Index { ExprPtr obj; ExprPtr index; };
/// "not" or "neg".
struct Unary { std::string op; ExprPtr operand; };
/// Arithmetic and comparison operators, named after their built-ins.
struct Binary { std::string op; ExprPtr lhs; ExprPtr rhs; };
struct BoolOp { bool is_and = true; ExprPtr lhs; ExprPtr rhs; };
struct CondExpr { ExprPtr cond; ExprPtr then_e; ExprPtr else_e; };
}  // namespace ast

struct Expr {
  SrcPos pos;
  std::variant<ast::Name, ast::Literal, ast::ListDisplay, ast::TupleDisplay, ast::Call, ast::MethodCall,
               ast::Index, ast::Unary, ast::Binary, ast::BoolOp, ast::CondExpr>
      node;
};

template <class T>
ExprPtr make_expr(SrcPos p, T node) {
  return std::make_shared<const Expr>(Expr{p, std::move(node)});
}

struct SrcStmt;
using SrcStmtPtr = std::shared_ptr<const SrcStmt>;
using Suite = std::vector<SrcStmtPtr>;

/// Assignment target: one name, or names unpacked from a tuple.
struct Target {
  std::vector<std::string> names;
  bool unpack = false;
  SrcPos pos;
};

namespace ast {
struct Assign { std::vector<Target> targets; ExprPtr value; };
struct ExprStmt { ExprPtr value; };
/// `elif` chains nest in `else_s`.
struct If { ExprPtr cond; Suite then_s; Suite else_s; };
struct For { Target target; ExprPtr iter; Suite body; };
struct While { ExprPtr cond; Suite body; };
struct Return { ExprPtr value; };  // null for a bare return
struct Pass {};
}  // namespace ast

struct SrcStmt {
  SrcPos pos;
  std::variant<ast::Assign, ast::ExprStmt, ast::If, ast::For, ast::While, ast::Return, ast::Pass> node;
};

template <class T>
SrcStmtPtr make_stmt(SrcPos p, T node) {
  return std::make_shared<const SrcStmt>(SrcStmt{p, std::move(node)});
}

struct SrcAst {
  Suite body;
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

  SrcAst run() {
    SrcAst out;
    while (!at(Tok::end)) {
      if (at(Tok::newline)) {
        ++i_;
        continue;
      }
      statement(out.body);
    }
    return out;
  }

 private:
  std::vector<Token> t_;
  std::size_t i_ = 0;
  int loop_depth_ = 0;

  const Token& peek(std::size_t k = 0) const { return t_[std::min(i_ + k, t_.size() - 1)]; }
  bool at(Tok k) const { return peek().kind == k; }
  bool at_op(const char* o) const { return at(Tok::op) && peek().text == o; }
  bool at_kw(const char* k) const { return at(Tok::name) && peek().text == k; }

  const Token& take() { return t_[std::min(i_++, t_.size() - 1)]; }

  void expect_op(const char* o) {
    if (!at_op(o)) fail_expected(std::string("'") + o + "'");
    ++i_;
  }

  [[noreturn]] void fail_expected(const std::string& what) const {
    const Token& t = peek();
    std::string got;
    switch (t.kind) {
      case Tok::newline: got = "end of line"; break;
      case Tok::indent: got = "indent"; break;
      case Tok::dedent: got = "dedent"; break;
      case Tok::end: got = "end of input"; break;
      case Tok::string: got = "string literal"; break;
      default: got = "'" + t.text + "'";
    }
    syntax_error(t.pos, "expected " + what + ", found " + got);
  }

  static bool is_keyword(const std::string& s) {
    static const std::set<std::string> kw = {
        "False", "None",   "True",    "and",   "as",     "assert", "async", "await",    "break",
        "class", "continue", "def",   "del",   "elif",   "else",   "except", "finally", "for",
        "from",  "global", "if",      "import", "in",    "is",     "lambda", "nonlocal", "not",
        "or",    "pass",   "raise",   "return", "try",   "while",  "with",  "yield"};
    return kw.count(s) > 0;
  }

  // -- statements ----------------------------------------------------------

  void statement(Suite& out) {
    const Token& t = peek();
    if (t.kind == Tok::indent) syntax_error(t.pos, "unexpected indent");
    if (t.kind == Tok::name) {
      const std::string& k = t.text;
      if (k == "if") return out.push_back(if_stmt());
      if (k == "for") return out.push_back(for_stmt());
      if (k == "while") return out.push_back(while_stmt());
      if (k == "def" || k == "async") unsupported(t.pos, "function definition");
      if (k == "class") unsupported(t.pos, "class definition");
      if (k == "try") unsupported(t.pos, "exception handling");
      if (k == "with") unsupported(t.pos, "with statement");
      if (k == "elif" || k == "else") syntax_error(t.pos, "'" + k + "' without a matching 'if'");
    }
    if (t.kind == Tok::op && t.text == "@") unsupported(t.pos, "decorator");
    simple_statements(out);
  }

  void simple_statements(Suite& out) {
    for (;;) {
      out.push_back(small_statement());
      if (at_op(";")) {
        ++i_;
        if (at(Tok::newline) || at(Tok::end)) break;
        continue;
      }
      break;
    }
    if (at(Tok::end)) return;
    if (!at(Tok::newline)) fail_expected("end of line");
    ++i_;
  }

  SrcStmtPtr small_statement() {
    const Token& t = peek();
    SrcPos p = t.pos;
    if (t.kind == Tok::name) {
      const std::string& k = t.text;
      if (k == "pass") {
        ++i_;
        return make_stmt(p, ast::Pass{});
      }
      if (k == "break" || k == "continue") unsupported(p, k);
      if (k == "return") {
        if (loop_depth_ > 0) unsupported(p, "return inside loop");
        ++i_;
        ExprPtr v;
        if (!at(Tok::newline) && !at(Tok::end) && !at_op(";")) v = testlist();
        return make_stmt(p, ast::Return{v});
      }
      if (k == "import" || k == "from") unsupported(p, "import");
      if (k == "global" || k == "nonlocal") unsupported(p, k + " declaration");
      if (k == "del") unsupported(p, "del statement");
      if (k == "assert") unsupported(p, "assert statement");
      if (k == "raise") unsupported(p, "exception handling");
      if (k == "yield") unsupported(p, "generator");
    }
    ExprPtr first = testlist();
    if (at(Tok::op)) {
      const std::string& o = peek().text;
      if (o.size() >= 2 && o.back() == '=' && o != "==" && o != "!=" && o != "<=" && o != ">=")
        unsupported(peek().pos, "augmented assignment");
      if (o == ":") unsupported(peek().pos, "annotated assignment");
    }
    if (!at_op("=")) return make_stmt(p, ast::ExprStmt{first});
    std::vector<ExprPtr> chain{first};
    while (at_op("=")) {
      ++i_;
      chain.push_back(testlist());
    }
    ast::Assign a;
    a.value = chain.back();
    chain.pop_back();
    for (const auto& e : chain) a.targets.push_back(to_target(e));
    return make_stmt(p, std::move(a));
  }

  static Target to_target(const ExprPtr& e) {
    Target t;
    t.pos = e->pos;
    if (const auto* n = std::get_if<ast::Name>(&e->node)) {
      t.names.push_back(n->id);
      return t;
    }
    if (const auto* tu = std::get_if<ast::TupleDisplay>(&e->node)) {
      t.unpack = true;
      for (const auto& item : tu->items) {
        const auto* n = std::get_if<ast::Name>(&item->node);
        if (!n) {
          if (std::holds_alternative<ast::TupleDisplay>(item->node)) unsupported(item->pos, "nested unpacking");
          syntax_error(item->pos, "cannot assign to expression");
        }
        t.names.push_back(n->id);
      }
      return t;
    }
    if (std::holds_alternative<ast::ListDisplay>(e->node)) unsupported(e->pos, "list unpacking");
    if (std::holds_alternative<ast::Index>(e->node)) unsupported(e->pos, "subscript assignment");
    if (std::holds_alternative<ast::MethodCall>(e->node)) syntax_error(e->pos, "cannot assign to function call");
    syntax_error(e->pos, "cannot assign to expression");
  }

  Suite suite() {
    expect_op(":");
    Suite body;
    if (!at(Tok::newline)) {
      simple_statements(body);
      return body;
    }
    ++i_;
    if (!at(Tok::indent)) fail_expected("an indented block");
    ++i_;
    while (!at(Tok::dedent) && !at(Tok::end)) {
      if (at(Tok::newline)) {
        ++i_;
        continue;
      }
      statement(body);
    }
    if (at(Tok::dedent)) ++i_;
    return body;
  }

  SrcStmtPtr if_stmt() {
    SrcPos p = take().pos;  // 'if' or 'elif'
    ast::If s;
    s.cond = test();
    s.then_s = suite();
    if (at_kw("elif")) {
      s.else_s.push_back(if_stmt());
    } else if (at_kw("else")) {
      ++i_;
      s.else_s = suite();
    }
    return make_stmt(p, std::move(s));
  }

  SrcStmtPtr for_stmt() {
    SrcPos p = take().pos;
    ast::For s;
    ExprPtr target = target_list();
    s.target = to_target(target);
    if (!at_kw("in")) fail_expected("'in'");
    ++i_;
    s.iter = testlist();
    ++loop_depth_;
    s.body = suite();
    --loop_depth_;
    if (at_kw("else")) unsupported(peek().pos, "for-else");
    return make_stmt(p, std::move(s));
  }

  SrcStmtPtr while_stmt() {
    SrcPos p = take().pos;
    ast::While s;
    s.cond = test();
    ++loop_depth_;
    s.body = suite();
    --loop_depth_;
    if (at_kw("else")) unsupported(peek().pos, "while-else");
    return make_stmt(p, std::move(s));
  }

  // Names separated by commas, stopping before 'in'.
  ExprPtr target_list() {
    SrcPos p = peek().pos;
    std::vector<ExprPtr> items;
    bool comma = false;
    for (;;) {
      items.push_back(or_expr_level());
      if (!at_op(",")) break;
      comma = true;
      ++i_;
      if (at_kw("in")) break;
    }
    if (!comma) return items.front();
    return make_expr(p, ast::TupleDisplay{std::move(items)});
  }

  // -- expressions -----------------------------------------------------------

  ExprPtr testlist() {
    SrcPos p = peek().pos;
    ExprPtr first = test();
    if (!at_op(",")) return first;
    std::vector<ExprPtr> items{first};
    while (at_op(",")) {
      ++i_;
      if (!starts_expr()) break;
      items.push_back(test());
    }
    return make_expr(p, ast::TupleDisplay{std::move(items)});
  }

  bool starts_expr() const {
    const Token& t = peek();
    if (t.kind == Tok::name) {
      static const std::set<std::string> ok = {"True", "False", "None", "not", "lambda"};
      return !is_keyword(t.text) || ok.count(t.text);
    }
    if (t.kind == Tok::number || t.kind == Tok::string) return true;
    if (t.kind == Tok::op) return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" ||
                                  t.text == "+" || t.text == "~";
    return false;
  }

  ExprPtr test() {
    if (at_kw("lambda")) unsupported(peek().pos, "lambda");
    ExprPtr e = or_test();
    if (at_kw("if")) {
      SrcPos p = peek().pos;
      ++i_;
      ExprPtr c = or_test();
      if (!at_kw("else")) fail_expected("'else' in conditional expression");
      ++i_;
      ExprPtr other = test();
      return make_expr(p, ast::CondExpr{c, e, other});
    }
    if (at_op(":=")) unsupported(peek().pos, "assignment expression");
    return e;
  }

  ExprPtr or_test() {
    ExprPtr l = and_test();
    while (at_kw("or")) {
      SrcPos p = take().pos;
      ExprPtr r = and_test();
      l = make_expr(p, ast::BoolOp{false, l, r});
    }
    return l;
  }

  ExprPtr and_test() {
    ExprPtr l = not_test();
    while (at_kw("and")) {
      SrcPos p = take().pos;
      ExprPtr r = not_test();
      l = make_expr(p, ast::BoolOp{true, l, r});
    }
    return l;
  }

  ExprPtr not_test() {
    if (at_kw("not")) {
      SrcPos p = take().pos;
      return make_expr(p, ast::Unary{"not", not_test()});
    }
    return comparison();
  }

  std::optional<std::string> comp_op() {
    if (at(Tok::op)) {
      static const std::set<std::string> ops = {"==", "!=", "<", "<=", ">", ">="};
      if (ops.count(peek().text)) return take().text;
      return std::nullopt;
    }
    if (at_kw("in")) {
      ++i_;
      return std::string("in");
    }
    if (at_kw("not") && peek(1).kind == Tok::name && peek(1).text == "in") {
      i_ += 2;
      return std::string("not_in");
    }
    if (at_kw("is")) unsupported(peek().pos, "identity comparison");
    return std::nullopt;
  }

  ExprPtr comparison() {
    ExprPtr l = or_expr_level();
    SrcPos p = peek().pos;
    auto op = comp_op();
    if (!op) return l;
    ExprPtr r = or_expr_level();
    SrcPos q = peek().pos;
    if (comp_op()) unsupported(q, "chained comparison");
    return make_expr(p, ast::Binary{*op, l, r});
  }

  // Bitwise operators are outside the subset; reject them where Python
  // would parse them.
  ExprPtr or_expr_level() {
    ExprPtr e = arith();
    if (at(Tok::op)) {
      const std::string& o = peek().text;
      if (o == "|" || o == "&" || o == "^" || o == "<<" || o == ">>") unsupported(peek().pos, "bitwise operator");
    }
    return e;
  }

  ExprPtr arith() {
    ExprPtr l = term();
    while (at_op("+") || at_op("-")) {
      const Token& t = take();
      ExprPtr r = term();
      l = make_expr(t.pos, ast::Binary{t.text, l, r});
    }
    return l;
  }

  ExprPtr term() {
    ExprPtr l = factor();
    for (;;) {
      if (at_op("@")) unsupported(peek().pos, "matrix multiplication");
      if (!(at_op("*") || at_op("/") || at_op("//") || at_op("%"))) return l;
      const Token& t = take();
      ExprPtr r = factor();
      l = make_expr(t.pos, ast::Binary{t.text, l, r});
    }
  }

  ExprPtr factor() {
    if (at_op("-")) {
      SrcPos p = take().pos;
      ExprPtr e = factor();
      if (const auto* lit = std::get_if<ast::Literal>(&e->node)) {
        if (lit->value.is_int() && lit->value.as_int() != INT64_MIN)
          return make_expr(p, ast::Literal{Const(-lit->value.as_int())});
        if (lit->value.is_float()) return make_expr(p, ast::Literal{Const(-lit->value.as_float())});
      }
      return make_expr(p, ast::Unary{"neg", e});
    }
    if (at_op("+")) {
      ++i_;
      return factor();
    }
    if (at_op("~")) unsupported(peek().pos, "bitwise operator");
    ExprPtr e = postfix();
    if (at_op("**")) unsupported(peek().pos, "power operator");
    return e;
  }

  std::vector<ExprPtr> call_args() {
    expect_op("(");
    std::vector<ExprPtr> args;
    while (!at_op(")")) {
      if (at_op("*") || at_op("**")) unsupported(peek().pos, "star argument");
      if (at(Tok::name) && peek(1).kind == Tok::op && peek(1).text == "=") unsupported(peek().pos, "keyword argument");
      args.push_back(test());
      if (at_kw("for")) unsupported(peek().pos, "generator expression");
      if (at_op(",")) {
        ++i_;
        continue;
      }
      if (!at_op(")")) fail_expected("',' or ')'");
    }
    ++i_;
    return args;
  }

  ExprPtr postfix() {
    ExprPtr e = atom();
    for (;;) {
      if (at_op("(")) {
        const auto* n = std::get_if<ast::Name>(&e->node);
        if (!n) unsupported(peek().pos, "call of a computed function");
        std::string fn = n->id;
        SrcPos p = e->pos;
        e = make_expr(p, ast::Call{fn, call_args()});
        continue;
      }
      if (at_op("[")) {
        SrcPos p = take().pos;
        if (at_op(":")) unsupported(peek().pos, "slice");
        ExprPtr idx = test();
        if (at_op(":")) unsupported(peek().pos, "slice");
        if (at_op(",")) unsupported(peek().pos, "multi-dimensional index");
        expect_op("]");
        e = make_expr(p, ast::Index{e, idx});
        continue;
      }
      if (at_op(".")) {
        SrcPos p = take().pos;
        if (!at(Tok::name) || is_keyword(peek().text)) fail_expected("attribute name");
        std::string m = take().text;
        if (!at_op("(")) unsupported(p, "attribute access");
        e = make_expr(p, ast::MethodCall{e, m, call_args()});
        continue;
      }
      return e;
    }
  }

  ExprPtr atom() {
    const Token& t = peek();
    SrcPos p = t.pos;
    switch (t.kind) {
      case Tok::number:
        ++i_;
        return make_expr(p, ast::Literal{t.value});
      case Tok::string: {
        std::string s;
        while (at(Tok::string)) s += take().value.as_string();
        return make_expr(p, ast::Literal{Const(std::move(s))});
      }
      case Tok::name: {
        if (t.text == "True" || t.text == "False") {
          ++i_;
          return make_expr(p, ast::Literal{Const(t.text == "True")});
        }
        if (t.text == "None") {
          ++i_;
          return make_expr(p, ast::Literal{Const()});
        }
        if (t.text == "lambda") unsupported(p, "lambda");
        if (t.text == "await") unsupported(p, "await");
        if (t.text == "yield") unsupported(p, "generator");
        if (is_keyword(t.text)) fail_expected("an expression");
        ++i_;
        return make_expr(p, ast::Name{t.text});
      }
      case Tok::op:
        if (t.text == "(") return paren();
        if (t.text == "[") return list_display();
        if (t.text == "{") unsupported(p, "dict or set display");
        if (t.text == "...") unsupported(p, "ellipsis");
        break;
      default:
        break;
    }
    fail_expected("an expression");
  }

  ExprPtr paren() {
    SrcPos p = take().pos;
    if (at_op(")")) {
      ++i_;
      return make_expr(p, ast::TupleDisplay{});
    }
    ExprPtr first = test();
    if (at_kw("for")) unsupported(peek().pos, "generator expression");
    if (at_op(")")) {
      ++i_;
      return first;
    }
    std::vector<ExprPtr> items{first};
    while (at_op(",")) {
      ++i_;
      if (at_op(")")) break;
      items.push_back(test());
    }
    expect_op(")");
    return make_expr(p, ast::TupleDisplay{std::move(items)});
  }

  ExprPtr list_display() {
    SrcPos p = take().pos;
    std::vector<ExprPtr> items;
    while (!at_op("]")) {
      if (at_op("*")) unsupported(peek().pos, "star expression");
      items.push_back(test());
      if (at_kw("for")) unsupported(peek().pos, "list comprehension");
      if (at_op(",")) {
        ++i_;
        continue;
      }
      if (!at_op("]")) fail_expected("',' or ']'");
    }
    ++i_;
    return make_expr(p, ast::ListDisplay{std::move(items)});
  }
};

inline SrcAst parse_source(std::string_view text) { return Parser(Lexer(text).run()).run(); }

}  // namespace quasar
