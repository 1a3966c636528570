#pragma once

// Random source programs over ints: arithmetic, `lookup` and `.count` calls,
// if/elif/else, for over literal lists and ranges, bounded while loops and
// early returns. Every generated program lowers.

#include <random>
#include <string>
#include <vector>

namespace quasar::qt {

class SrcGen {
 public:
  explicit SrcGen(std::uint64_t seed) : rng_(seed) {}

  std::string program() {
    out_.clear();
    std::vector<std::string> vars{"n"};
    out_ += "# input n = " + std::to_string(pick(0, 5)) + "\n";
    suite(vars, 0, 3 + pick(0, 4), true);
    out_ += "return " + expr(vars, 1) + "\n";
    return out_;
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  std::string var(const std::vector<std::string>& vars) {
    return vars[static_cast<std::size_t>(pick(0, static_cast<int>(vars.size()) - 1))];
  }

  std::string expr(const std::vector<std::string>& vars, int depth) {
    int k = pick(0, depth > 0 ? 6 : 1);
    switch (k) {
      case 0: return std::to_string(pick(0, 9));
      case 1: return var(vars);
      case 2: return "(" + expr(vars, depth - 1) + " + " + expr(vars, depth - 1) + ")";
      case 3: return "(" + expr(vars, depth - 1) + " - " + expr(vars, depth - 1) + ")";
      case 4: return "lookup(" + expr(vars, depth - 1) + ")";
      case 5: return "(" + expr(vars, depth - 1) + " % 7)";
      default: return "\"s\".count(" + expr(vars, depth - 1) + ")";
    }
  }

  std::string cond(const std::vector<std::string>& vars) {
    static const char* ops[] = {"<", "<=", ">", "==", "!="};
    std::string c = expr(vars, 1) + " " + ops[pick(0, 4)] + " " + expr(vars, 1);
    if (coin(0.2)) c = "not " + c;
    if (coin(0.15)) c += " and " + var(vars) + " > 1";
    return c;
  }

  void line(int indent, const std::string& s) { out_ += std::string(4 * indent, ' ') + s + "\n"; }

  // `vars` are the names defined on entry; the suite may only add names that
  // stay local to it.
  void suite(std::vector<std::string> vars, int indent, int count, bool top) {
    for (int i = 0; i < count; ++i) {
      int k = pick(0, indent >= 2 ? 1 : 5);
      if (k <= 1) {
        if (coin(0.3)) {
          std::string fresh = "t" + std::to_string(next_++);
          line(indent, fresh + " = " + expr(vars, 2));
          vars.push_back(fresh);
        } else {
          line(indent, var(vars) + " = " + expr(vars, 2));
        }
      } else if (k == 2) {
        line(indent, "if " + cond(vars) + ":");
        body(vars, indent + 1);
        if (coin(0.3)) {
          line(indent, "elif " + cond(vars) + ":");
          body(vars, indent + 1);
        }
        if (coin(0.6)) {
          line(indent, "else:");
          body(vars, indent + 1);
        }
      } else if (k == 3) {
        std::string it = "i" + std::to_string(next_++);
        std::string subject = coin(0.5) ? "range(" + std::to_string(pick(0, 4)) + ")"
                                        : "[" + std::to_string(pick(0, 5)) + ", " + std::to_string(pick(0, 5)) + "]";
        line(indent, "for " + it + " in " + subject + ":");
        auto inner = vars;
        inner.push_back(it);
        body(inner, indent + 1);
      } else if (k == 4) {
        std::string c = "w" + std::to_string(next_++);
        line(indent, c + " = 0");
        line(indent, "while " + c + " < " + std::to_string(pick(0, 3)) + ":");
        body(vars, indent + 1);
        line(indent + 1, c + " = " + c + " + 1");
      } else if (top && indent == 0 && coin(0.5)) {
        line(indent, "if " + cond(vars) + ":");
        line(indent + 1, "return " + expr(vars, 1));
      } else {
        line(indent, var(vars) + " = " + expr(vars, 1));
      }
    }
  }

  void body(const std::vector<std::string>& vars, int indent) { suite(vars, indent, 1 + pick(0, 2), false); }

  std::mt19937_64 rng_;
  std::string out_;
  int next_ = 0;
};

}  // namespace quasar::qt
