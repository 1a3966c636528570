#pragma once

// Stateless seeded environment answering the external functions used by the
// source corpus. Results depend only on (seed, fn, argument).

#include <string>

#include "quasar/env.hpp"
#include "gen_ir.hpp"

namespace quasar::qt {

class StubEnv : public Environment {
 public:
  explicit StubEnv(std::uint64_t seed) : seed_(seed) {}

  CallResult call(const std::string& fn, const Value& arg) override {
    std::uint64_t h = fnv1a(std::to_string(seed_) + "#" + fn + "|" + to_text(arg));
    double latency = 10.0 + static_cast<double>(h % 191);
    h >>= 8;
    return {answer(fn, arg, h), latency};
  }

 private:
  static std::string head(const Value& arg) {
    if (arg.is_tuple() && !arg.items().empty() && arg.items()[0].is_leaf() && arg.items()[0].leaf().is_string())
      return arg.items()[0].leaf().as_string();
    return "x";
  }

  static Value answer(const std::string& fn, const Value& arg, std::uint64_t h) {
    static const char* kLabels[] = {"soup", "salad", "bread", "soup"};
    static const char* kAnswers[] = {"yes", "no", "maybe", " yes "};
    if (fn == ".find" || fn == "search") {
      Const::List out;
      for (std::uint64_t i = 0; i < h % 4; ++i) out.push_back(head(arg) + "/" + std::to_string(i));
      return Value(Const(std::move(out)));
    }
    if (fn == ".simple_query") return Value((h % 3 == 0) ? "yes" : "no");
    if (fn == ".exists") return Value(h % 2 == 0);
    if (fn == ".count" || fn == ".score" || fn == "lookup") return Value(static_cast<std::int64_t>(h % 6));
    if (fn == "classify") return Value(kLabels[h % 4]);
    if (fn == "llm_query") return Value(kAnswers[h % 4]);
    if (fn == "fetch") return Value(head(arg) + "+" + std::to_string(h % 10));
    throw Error(ErrorKind::environment, "unknown external function " + fn);
  }

  std::uint64_t seed_;
};

}  // namespace quasar::qt
