#pragma once

// Canonical IR text.
//
//   funcs:
//   <id> <name> <pure|effectful> <arity|*> [preapproved]
//   prog:
//   param <var>                        (zero or more program inputs)
//   <var> <- TAG(args)                 (one statement per line)
//   ret <var>
//
// Tags: PRIM(c) ALIAS(x) TUPLE(x, ...) CALL(f, x) PROJ(i, x) PENDING(task)
// ABSPRIM(c, ...) ABSLIST((c, True), ...) JOIN(x, ...) and the two block
// forms
//
//   <var> <- FOLD(list, init) {        <var> <- IF(cond) {
//     param <var>                        param <var>
//     ...                                ...
//     ret <var>                          ret <var>
//   }                                  } else {
//                                        param <var> ... ret <var>
//                                      }
//
// Block bodies are indented by two spaces per nesting level. Output is
// deterministic: functions in id order, statements in program order,
// abstract sets in constant order.

#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "quasar/ir.hpp"

namespace quasar {

namespace detail {

inline void write_vars(std::string& out, const std::vector<VarId>& vs) {
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(vs[i].id);
  }
}

inline void write_program(std::string& out, const Program& p, int depth);

inline void write_block(std::string& out, const Block& b, int depth) {
  std::string ind(static_cast<std::size_t>(depth) * 2, ' ');
  out += ind + "param " + std::to_string(b.param.id) + "\n";
  write_program(out, b.body, depth);
}

inline void write_program(std::string& out, const Program& p, int depth) {
  std::string ind(static_cast<std::size_t>(depth) * 2, ' ');
  for (auto v : p.params) out += ind + "param " + std::to_string(v.id) + "\n";
  for (const auto& s : p.stmts) {
    out += ind + std::to_string(s.target.id) + " <- ";
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, op::Prim>) {
            out += "PRIM(";
            append_text(out, x.value);
            out += ")\n";
          } else if constexpr (std::is_same_v<T, op::Alias>) {
            out += "ALIAS(" + std::to_string(x.src.id) + ")\n";
          } else if constexpr (std::is_same_v<T, op::MkTuple>) {
            out += "TUPLE(";
            write_vars(out, x.items);
            out += ")\n";
          } else if constexpr (std::is_same_v<T, op::Call>) {
            out += "CALL(" + std::to_string(x.func) + ", " + std::to_string(x.arg.id) + ")\n";
          } else if constexpr (std::is_same_v<T, op::Proj>) {
            out += "PROJ(" + std::to_string(x.index) + ", " + std::to_string(x.src.id) + ")\n";
          } else if constexpr (std::is_same_v<T, op::Fold>) {
            out += "FOLD(" + std::to_string(x.list.id) + ", " + std::to_string(x.init.id) +
                   ") {\n";
            write_block(out, *x.body, depth + 1);
            out += ind + "}\n";
          } else if constexpr (std::is_same_v<T, op::If>) {
            out += "IF(" + std::to_string(x.cond.id) + ") {\n";
            write_block(out, *x.then_blk, depth + 1);
            out += ind + "} else {\n";
            write_block(out, *x.else_blk, depth + 1);
            out += ind + "}\n";
          } else if constexpr (std::is_same_v<T, op::Pending>) {
            out += "PENDING(" + std::to_string(x.task) + ")\n";
          } else if constexpr (std::is_same_v<T, op::AbsPrim>) {
            out += "ABSPRIM(";
            bool first = true;
            for (const auto& c : x.values) {
              if (!first) out += ", ";
              first = false;
              append_text(out, c);
            }
            out += ")\n";
          } else if constexpr (std::is_same_v<T, op::AbsList>) {
            out += "ABSLIST(";
            for (std::size_t i = 0; i < x.items.size(); ++i) {
              if (i) out += ", ";
              out += "(";
              append_text(out, x.items[i].value);
              out += x.items[i].certain ? ", True)" : ", False)";
            }
            out += ")\n";
          } else {
            out += "JOIN(";
            write_vars(out, x.members);
            out += ")\n";
          }
        },
        s.op);
  }
  out += ind + "ret " + std::to_string(p.ret.id) + "\n";
}

class IrReader {
 public:
  explicit IrReader(std::string_view text) {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines_.push_back(line);
      start = nl + 1;
    }
    // A trailing newline produces one empty final line.
    while (!lines_.empty() && lines_.back().empty()) lines_.pop_back();
  }

  std::pair<Program, FuncTable> read() {
    FuncTable ft;
    expect_exact("funcs:");
    while (cur_ < lines_.size() && trimmed(cur_) != "prog:") {
      ft.add(read_func());
      ++cur_;
    }
    expect_exact("prog:");
    Program p = read_program(true);
    if (cur_ != lines_.size()) fail(cur_, 0, "trailing content after program");
    return {std::move(p), std::move(ft)};
  }

 private:
  [[noreturn]] void fail(std::size_t line, std::size_t col, const std::string& msg) const {
    throw PositionedError(ErrorKind::parse, line + 1, col + 1, "ir", msg);
  }

  std::string_view trimmed(std::size_t i) const {
    std::string_view l = lines_[i];
    while (!l.empty() && (l.front() == ' ' || l.front() == '\t')) l.remove_prefix(1);
    while (!l.empty() && (l.back() == ' ' || l.back() == '\t')) l.remove_suffix(1);
    return l;
  }

  std::size_t indent(std::size_t i) const {
    std::size_t n = 0;
    while (n < lines_[i].size() && lines_[i][n] == ' ') ++n;
    return n;
  }

  void expect_exact(std::string_view what) {
    if (cur_ >= lines_.size()) fail(cur_, 0, "expected '" + std::string(what) + "'");
    if (trimmed(cur_) != what) fail(cur_, indent(cur_), "expected '" + std::string(what) + "'");
    ++cur_;
  }

  TextReader reader(std::size_t i) const {
    std::size_t ind = indent(i);
    return TextReader(lines_[i].substr(ind), i + 1, ind);
  }

  FuncDecl read_func() {
    TextReader r = reader(cur_);
    FuncDecl d;
    d.id = static_cast<FuncId>(r.read_uint());
    d.name = r.read_word();
    std::string purity = r.read_word();
    if (purity == "pure") d.purity = Purity::pure;
    else if (purity == "effectful") d.purity = Purity::effectful;
    else r.fail("unknown purity '" + purity + "'");
    std::string arity = r.read_word();
    if (arity == "*") {
      d.arity = kVariadic;
    } else {
      try {
        d.arity = std::stoi(arity);
      } catch (const std::exception&) {
        r.fail("bad arity '" + arity + "'");
      }
    }
    r.skip_ws();
    if (!r.at_end()) {
      std::string flag = r.read_word();
      if (flag != "preapproved") r.fail("unknown function flag '" + flag + "'");
      d.preapproved = true;
    }
    r.skip_ws();
    if (!r.at_end()) r.fail("trailing characters in function declaration");
    return d;
  }

  static VarId read_var(TextReader& r) { return VarId{static_cast<std::uint32_t>(r.read_uint())}; }

  static std::vector<VarId> read_var_list(TextReader& r) {
    std::vector<VarId> vs;
    if (r.consume(')')) return vs;
    do {
      vs.push_back(read_var(r));
    } while (r.consume(','));
    r.expect(')');
    return vs;
  }

  void end_of_line(TextReader& r) {
    r.skip_ws();
    if (!r.at_end()) r.fail("trailing characters");
  }

  BlockPtr read_block() {
    if (cur_ >= lines_.size()) fail(cur_, 0, "unterminated block");
    TextReader r = reader(cur_);
    if (!r.consume_word("param")) r.fail("block must start with 'param'");
    VarId param = read_var(r);
    end_of_line(r);
    ++cur_;
    Program body = read_program(false);
    return make_block(param, std::move(body));
  }

  Program read_program(bool top) {
    Program p;
    if (top) {
      while (cur_ < lines_.size()) {
        TextReader r = reader(cur_);
        if (!r.consume_word("param")) break;
        p.params.push_back(read_var(r));
        end_of_line(r);
        ++cur_;
      }
    }
    while (true) {
      if (cur_ >= lines_.size()) fail(cur_, 0, "missing 'ret' line");
      TextReader r = reader(cur_);
      if (r.consume_word("ret")) {
        p.ret = read_var(r);
        end_of_line(r);
        ++cur_;
        return p;
      }
      p.stmts.push_back(read_stmt(r));
    }
  }

  Stmt read_stmt(TextReader& r) {
    Stmt s;
    s.target = read_var(r);
    r.skip_ws();
    if (!(r.consume('<') && r.consume('-'))) r.fail("expected '<-'");
    r.skip_ws();
    std::string tag;
    while (!r.at_end() && r.peek() >= 'A' && r.peek() <= 'Z') {
      tag.push_back(r.peek());
      r.consume(r.peek());
    }
    r.expect('(');
    if (tag == "PRIM") {
      Const c = r.read_const();
      r.expect(')');
      s.op = op::Prim{std::move(c)};
    } else if (tag == "ALIAS") {
      VarId v = read_var(r);
      r.expect(')');
      s.op = op::Alias{v};
    } else if (tag == "TUPLE") {
      s.op = op::MkTuple{read_var_list(r)};
    } else if (tag == "CALL") {
      auto f = static_cast<FuncId>(r.read_uint());
      r.expect(',');
      VarId v = read_var(r);
      r.expect(')');
      s.op = op::Call{f, v};
    } else if (tag == "PROJ") {
      auto i = static_cast<std::size_t>(r.read_uint());
      r.expect(',');
      VarId v = read_var(r);
      r.expect(')');
      s.op = op::Proj{i, v};
    } else if (tag == "PENDING") {
      TaskId t = r.read_uint();
      r.expect(')');
      s.op = op::Pending{t};
    } else if (tag == "ABSPRIM") {
      ConstSet cs;
      do {
        cs.insert(r.read_const());
      } while (r.consume(','));
      r.expect(')');
      s.op = op::AbsPrim{std::move(cs)};
    } else if (tag == "ABSLIST") {
      std::vector<AbsItem> items;
      if (!r.consume(')')) {
        do {
          r.expect('(');
          Const c = r.read_const();
          r.expect(',');
          bool certain = false;
          if (r.consume_word("True")) certain = true;
          else if (!r.consume_word("False")) r.fail("expected certainty flag");
          r.expect(')');
          items.push_back({std::move(c), certain});
        } while (r.consume(','));
        r.expect(')');
      }
      s.op = op::AbsList{std::move(items)};
    } else if (tag == "JOIN") {
      s.op = op::Join{read_var_list(r)};
    } else if (tag == "FOLD") {
      VarId list = read_var(r);
      r.expect(',');
      VarId init = read_var(r);
      r.expect(')');
      r.expect('{');
      end_of_line(r);
      ++cur_;
      BlockPtr body = read_block();
      close_brace(false);
      s.op = op::Fold{list, init, std::move(body)};
      return s;
    } else if (tag == "IF") {
      VarId cond = read_var(r);
      r.expect(')');
      r.expect('{');
      end_of_line(r);
      ++cur_;
      BlockPtr then_blk = read_block();
      close_brace(true);
      BlockPtr else_blk = read_block();
      close_brace(false);
      s.op = op::If{cond, std::move(then_blk), std::move(else_blk)};
      return s;
    } else {
      fail(cur_, indent(cur_), "unknown op tag '" + tag + "'");
    }
    end_of_line(r);
    ++cur_;
    return s;
  }

  void close_brace(bool expect_else) {
    if (cur_ >= lines_.size()) fail(cur_, 0, "unterminated block");
    std::string_view t = trimmed(cur_);
    if (expect_else ? t != "} else {" : t != "}")
      fail(cur_, indent(cur_), expect_else ? "expected '} else {'" : "expected '}'");
    ++cur_;
  }

  std::vector<std::string_view> lines_;
  std::size_t cur_ = 0;
};

}  // namespace detail

inline std::string serialize(const Program& p, const FuncTable& ft) {
  std::string out = "funcs:\n";
  for (const auto& [id, d] : ft.decls()) {
    if (d.name.empty() || d.name.find_first_of(" \t\n") != std::string::npos)
      throw Error(ErrorKind::validation, "function name not serializable: '" + d.name + "'");
    out += std::to_string(id) + " " + d.name + " " +
           (d.purity == Purity::pure ? "pure" : "effectful") + " " +
           (d.arity == kVariadic ? std::string("*") : std::to_string(d.arity));
    if (d.preapproved) out += " preapproved";
    out += "\n";
  }
  out += "prog:\n";
  detail::write_program(out, p, 0);
  return out;
}

inline std::pair<Program, FuncTable> deserialize(std::string_view text) {
  return detail::IrReader(text).read();
}

}  // namespace quasar
