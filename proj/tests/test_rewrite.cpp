#include <gtest/gtest.h>

#include <map>

#include "quasar/rewrite.hpp"
#include "quasar/serialize.hpp"
#include "support/drive.hpp"
#include "support/drink.hpp"
#include "support/gen_ir.hpp"

using namespace quasar;

namespace {

std::size_t count_rule(const std::vector<RuleInstance>& rs, Rule r) {
  return static_cast<std::size_t>(
      std::count_if(rs.begin(), rs.end(), [&](const RuleInstance& i) { return i.rule == r; }));
}

std::pair<Program, FuncTable> parse(const std::string& text) { return deserialize(text); }

const std::string kFuncs = "funcs:\n0 == pure 2\n1 truthy pure 1\n2 ext effectful *\nprog:\n";

}  // namespace

TEST(ValueOf, PrimAndTuple) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- PRIM(\"drink\")\n1 <- PRIM(1)\n2 <- PRIM(\"q\")\n3 <- TUPLE(1, 2)\n"
                       "4 <- CALL(2, 3)\n5 <- TUPLE(3, 0)\nret 5\n");
  RewriteContext ctx(p, ft);
  EXPECT_EQ(*ctx.value_of(VarId{0}), Value("drink"));
  EXPECT_EQ(*ctx.value_of(VarId{3}), parse_value("(1, \"q\")"));
  EXPECT_EQ(*ctx.value_of(VarId{5}), parse_value("((1, \"q\"), \"drink\")"));
  EXPECT_FALSE(ctx.value_of(VarId{4}));
}

TEST(Applicable, TerminalProgramHasNone) {
  Program p;
  p.params = {VarId{0}};
  p.ret = VarId{0};
  EXPECT_TRUE(applicable(p, FuncTable{}, Mode::concrete).empty());
}

TEST(Applicable, FoldAndUnrelatedAlias) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- PRIM([1, 2])\n1 <- PRIM(0)\n2 <- FOLD(0, 1) {\n  param 3\n  ret 3\n}\n"
                       "4 <- ALIAS(1)\n5 <- TUPLE(2, 4)\nret 5\n");
  auto rs = applicable(p, ft, Mode::concrete);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0], (RuleInstance{Rule::fold_unroll, VarId{2}}));
  EXPECT_EQ(rs[1], (RuleInstance{Rule::alias, VarId{4}}));
}

TEST(Apply, StaleInstanceRejected) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(1)\n1 <- ALIAS(0)\nret 1\n");
  RewriteContext ctx(p, ft);
  ctx.apply({Rule::alias, VarId{1}});
  EXPECT_THROW(ctx.apply({Rule::alias, VarId{1}}), Error);
  EXPECT_THROW(ctx.apply({Rule::proj, VarId{0}}), Error);
  EXPECT_EQ(*ctx.result_value(), Value(1));
}

TEST(Apply, IfTrueInlinesThenBranch) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- PRIM(True)\n1 <- IF(0) {\n  param 2\n  3 <- PRIM(1)\n  ret 3\n"
                       "} else {\n  param 4\n  5 <- PRIM(2)\n  ret 5\n}\nret 1\n");
  Program q = apply(p, ft, Mode::concrete, {Rule::if_t, VarId{1}});
  // w <- (); copy of the then-block; y <- z
  ASSERT_EQ(q.stmts.size(), 4u);
  EXPECT_EQ(std::get<op::MkTuple>(q.stmts[1].op).items.size(), 0u);
  EXPECT_EQ(std::get<op::Prim>(q.stmts[2].op).value, Const(1));
  EXPECT_EQ(std::get<op::Alias>(q.stmts[3].op).src, q.stmts[2].target);
  EXPECT_NE(q.stmts[2].target, VarId{3});
  EXPECT_TRUE(validate(q, ft).empty());
  EXPECT_EQ(*RewriteContext(normalize(q, ft), ft).result_value(), Value(1));
}

TEST(Apply, ProjBecomesAlias) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(1)\n1 <- PRIM(2)\n2 <- TUPLE(0, 1)\n3 <- PROJ(1, 2)\nret 3\n");
  Program q = apply(p, ft, Mode::concrete, {Rule::proj, VarId{3}});
  EXPECT_EQ(std::get<op::Alias>(q.stmts.back().op).src, VarId{1});
}

TEST(Drink, StepByStep) {
  auto [p1, ft] = qt::drink_p1();
  RewriteContext ctx(p1, ft);
  ctx.bind_param(VarId{0}, Value("image"));
  ctx.normalize();

  // P1: only the find call is dispatchable.
  auto d1 = ctx.find_dispatchable();
  ASSERT_EQ(d1.size(), 1u);
  EXPECT_EQ(ft.at(d1[0].func).name, ".find");
  EXPECT_EQ(d1[0].arg, parse_value("(\"image\", \"drink\")"));
  EXPECT_FALSE(ctx.is_terminal());

  ctx.mark_pending(d1[0].site, 1);
  EXPECT_TRUE(ctx.find_dispatchable().empty());
  EXPECT_TRUE(ctx.applicable().empty());
  ctx.substitute_result(d1[0].site, parse_value("[\"patch1\", \"patch2\"]"));

  // P2: the loop unrolls; P3 has two independent queries.
  auto rs = ctx.applicable();
  ASSERT_EQ(count_rule(rs, Rule::fold_unroll), 1u);
  ctx.normalize();
  auto d3 = ctx.find_dispatchable();
  ASSERT_EQ(d3.size(), 2u);
  EXPECT_EQ(d3[0].arg, parse_value("(\"patch1\", \"Does this have alcohol?\")"));
  EXPECT_EQ(d3[1].arg, parse_value("(\"patch2\", \"Does this have alcohol?\")"));
  ctx.mark_pending(d3[0].site, 2);
  ctx.mark_pending(d3[1].site, 3);
  ctx.substitute_result(d3[0].site, Value("no"));
  ctx.substitute_result(d3[1].site, Value("yes"));

  // P4: both comparisons are ready to evaluate.
  EXPECT_EQ(count_rule(ctx.applicable(), Rule::pure_apply), 2u);
  ctx.normalize();

  // P5: return True.
  EXPECT_TRUE(ctx.is_terminal());
  EXPECT_EQ(*ctx.result_value(), Value(true));
  Program p5 = ctx.program();
  EXPECT_TRUE(validate(p5, ft).empty());
}

TEST(Drink, SubstitutionOrderDoesNotMatter) {
  auto [p1, ft] = qt::drink_p1();
  std::vector<std::string> texts;
  for (int order = 0; order < 2; ++order) {
    RewriteContext ctx(p1, ft);
    ctx.bind_param(VarId{0}, Value("image"));
    ctx.normalize();
    auto d1 = ctx.find_dispatchable();
    ctx.mark_pending(d1[0].site, 1);
    ctx.substitute_result(d1[0].site, parse_value("[\"patch1\", \"patch2\"]"));
    ctx.normalize();
    auto d3 = ctx.find_dispatchable();
    ctx.mark_pending(d3[0].site, 2);
    ctx.mark_pending(d3[1].site, 3);
    std::vector<std::pair<Site, Value>> subs{{d3[0].site, Value("no")}, {d3[1].site, Value("yes")}};
    if (order == 1) std::swap(subs[0], subs[1]);
    for (const auto& [s, v] : subs) {
      ctx.substitute_result(s, v);
      ctx.normalize();
    }
    texts.push_back(serialize(canonical_names(ctx.program()), ft));
  }
  EXPECT_EQ(texts[0], texts[1]);
}

TEST(Normalize, AlreadyTerminalUnchanged) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(1)\n1 <- TUPLE(0)\nret 1\n");
  EXPECT_EQ(normalize(p, ft), p);
}

TEST(Normalize, BudgetIsEnforced) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- PRIM([1, 2, 3, 4, 5])\n1 <- PRIM(0)\n2 <- FOLD(0, 1) {\n  param 3\n"
                       "  4 <- PROJ(0, 3)\n  ret 4\n}\nret 2\n");
  try {
    normalize(p, ft, Mode::concrete, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::budget);
  }
  EXPECT_NO_THROW(normalize(p, ft, Mode::concrete, 1000));
}

TEST(Normalize, PureErrorsSurface) {
  auto [p, ft] = parse("funcs:\n0 + pure 2\nprog:\n0 <- PRIM(1)\n1 <- PRIM(\"a\")\n"
                       "2 <- TUPLE(0, 1)\n3 <- CALL(0, 2)\nret 3\n");
  EXPECT_THROW(normalize(p, ft), Error);
}

TEST(Normalize, StuckProgramsAreDiagnosed) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(3)\n1 <- IF(0) {\n  param 2\n  ret 2\n} else {\n"
                                "  param 3\n  ret 3\n}\nret 1\n");
  RewriteContext ctx(p, ft);
  ctx.normalize();
  EXPECT_FALSE(ctx.result_value());
  EXPECT_NE(std::string(ctx.diagnose_stuck().what()).find("not a boolean"), std::string::npos);
}

TEST(Conformal, JoinOfPrimsIsAbstractSet) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(\"yes\")\n1 <- PRIM(\"no\")\n2 <- JOIN(0, 1)\nret 2\n");
  Program q = apply(p, ft, Mode::conformal, {Rule::join_prim, VarId{2}});
  EXPECT_EQ(std::get<op::AbsPrim>(q.stmts.back().op).values, (ConstSet{"no", "yes"}));
  EXPECT_TRUE(applicable(p, ft, Mode::concrete).empty());
}

TEST(Conformal, JoinJoinFlattensAndTupleSplits) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- PRIM(1)\n1 <- PRIM(2)\n2 <- PRIM(3)\n3 <- JOIN(0, 1)\n4 <- JOIN(3, 2)\n"
                       "5 <- TUPLE(0, 2)\n6 <- TUPLE(1, 1)\n7 <- JOIN(5, 6)\n8 <- TUPLE(4, 7)\nret 8\n");
  Program q = apply(p, ft, Mode::conformal, {Rule::join_join, VarId{4}});
  EXPECT_EQ(std::get<op::Join>(q.stmts[4].op).members, (std::vector<VarId>{VarId{0}, VarId{1}, VarId{2}}));
  RewriteContext ctx(p, ft, Mode::conformal);
  ctx.normalize();
  EXPECT_EQ(to_text(*ctx.result_abs()), "({1, 2, 3}, ({1, 2}, {2, 3}))");
}

TEST(Conformal, JoinDuplicatesCollapse) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(1)\n1 <- ALIAS(0)\n2 <- JOIN(0, 1)\nret 2\n");
  RewriteContext ctx(p, ft, Mode::conformal);
  ctx.normalize();
  EXPECT_EQ(*ctx.result_value(), Value(1));
}

TEST(Conformal, IncompatibleJoinAbstains) {
  auto [p, ft] = parse(kFuncs + "0 <- PRIM(1)\n1 <- TUPLE(0)\n2 <- JOIN(0, 1)\nret 2\n");
  RewriteContext ctx(p, ft, Mode::conformal);
  ctx.normalize();
  EXPECT_FALSE(ctx.result_abs());
  Error e = ctx.diagnose_stuck();
  EXPECT_EQ(e.kind(), ErrorKind::conformal);
  EXPECT_NE(std::string(e.what()).find("incompatible join"), std::string::npos);
}

TEST(Conformal, IfTakesBothBranches) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- ABSPRIM(True, False)\n1 <- IF(0) {\n  param 2\n  3 <- PRIM(1)\n  ret 3\n"
                       "} else {\n  param 4\n  5 <- PRIM(2)\n  ret 5\n}\nret 1\n");
  auto rs = applicable(p, ft, Mode::conformal);
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].rule, Rule::if_tf);
  Program q = apply(p, ft, Mode::conformal, rs[0]);
  const auto& j = std::get<op::Join>(q.stmts.back().op);
  ASSERT_EQ(j.members.size(), 2u);
  RewriteContext ctx(q, ft, Mode::conformal);
  ctx.normalize();
  EXPECT_EQ(to_text(*ctx.result_abs()), "{1, 2}");
}

TEST(Conformal, FoldOverUncertainList) {
  // acc + [elem] over [(p1, uncertain), (p2, certain)]
  std::string body = "  param 3\n  4 <- PROJ(0, 3)\n  5 <- PROJ(1, 3)\n  9 <- TUPLE(5)\n"
                     "  6 <- CALL(3, 9)\n  7 <- TUPLE(4, 6)\n  8 <- CALL(4, 7)\n  ret 8\n";
  std::string fns = "funcs:\n3 __list pure *\n4 + pure 2\nprog:\n";
  auto [p, ft] = parse(fns + "0 <- ABSLIST((\"p1\", False), (\"p2\", True))\n1 <- PRIM([])\n"
                             "2 <- FOLD(0, 1) {\n" + body + "}\nret 2\n");
  RewriteContext ctx(p, ft, Mode::conformal);
  ctx.normalize();
  auto out = *ctx.result_abs();

  // Oracle: run the concrete engine over every concretization of the list.
  std::set<Value> expect;
  for (const auto& l : concretize(AbsListValue{{{"p1", false}, {"p2", true}}})) {
    auto [q, qft] = parse(fns + "0 <- PRIM(" + to_text(Const(l)) + ")\n1 <- PRIM([])\n"
                                "2 <- FOLD(0, 1) {\n" + body + "}\nret 2\n");
    RewriteContext c(q, qft);
    c.normalize();
    expect.insert(*c.result_value());
  }
  ASSERT_EQ(expect.size(), 2u);
  for (const auto& v : expect) EXPECT_TRUE(contains(out, v)) << to_text(v);
}

TEST(Conformal, PointwiseBuiltinsAndSplitCalls) {
  auto [p, ft] = parse(kFuncs +
                       "0 <- ABSPRIM(\"yes\", \"no\")\n1 <- PRIM(\"yes\")\n2 <- TUPLE(0, 1)\n"
                       "3 <- CALL(0, 2)\n4 <- TUPLE(0)\n5 <- CALL(2, 4)\n6 <- TUPLE(3, 5)\nret 6\n");
  RewriteContext ctx(p, ft, Mode::conformal);
  ctx.normalize();
  EXPECT_EQ(to_text(*ctx.abs_value_of(VarId{3})), "{False, True}");
  auto ds = ctx.find_dispatchable();
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].arg, parse_value("(\"no\",)"));
  EXPECT_EQ(ds[1].arg, parse_value("(\"yes\",)"));
}

TEST(Conformal, PointwiseCap) {
  std::string text = kFuncs + "0 <- ABSPRIM(0, 1, 2, 3, 4, 5, 6, 7)\n1 <- ABSPRIM(0, 1, 2, 3, 4, 5, 6, 7, 8)\n"
                              "2 <- TUPLE(0, 1)\n3 <- CALL(0, 2)\nret 3\n";
  auto [p, ft] = parse(text);
  RewriteContext ctx(p, ft, Mode::conformal);
  try {
    ctx.normalize();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::conformal);
  }
}

TEST(Properties, PreservationUnderRandomRules) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    qt::GenOptions opt;
    opt.effectful = false;
    qt::IrGen gen(seed, opt);
    Program p = gen.program();
    std::mt19937_64 rng(seed);
    RewriteContext ctx(p, gen.funcs());
    for (auto v : p.params) ctx.bind_param(v, Value(2));
    for (int step = 0; step < 10000; ++step) {
      auto rs = ctx.applicable();
      if (rs.empty()) break;
      ctx.apply(rs[std::uniform_int_distribution<std::size_t>(0, rs.size() - 1)(rng)]);
      ASSERT_TRUE(validate(ctx.program(), gen.funcs()).empty())
          << seed << "\n" << serialize(ctx.program(), gen.funcs());
    }
    ASSERT_TRUE(ctx.result_value()) << seed << " " << ctx.diagnose_stuck().what();
  }
}

TEST(Properties, OrderIndependence) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    qt::IrGen gen(seed, {});
    Program p = gen.program();
    std::vector<std::pair<VarId, Value>> inputs;
    for (auto v : p.params) inputs.push_back({v, Value(3)});
    auto base = qt::drive(p, gen.funcs(), qt::stub_result, 0, Mode::concrete, inputs);
    ASSERT_TRUE(base.value) << seed << ": " << base.error;
    for (std::uint64_t order = 1; order <= 5; ++order) {
      auto r = qt::drive(p, gen.funcs(), qt::stub_result, seed * 100 + order,
                              Mode::concrete, inputs);
      ASSERT_TRUE(r.value) << r.error;
      EXPECT_EQ(*r.value, *base.value) << seed;
      EXPECT_EQ(r.calls, base.calls) << seed;
    }
  }
}

TEST(Properties, InternalRulesHaveNoEffects) {
  // An effectful call leaves the program only through mark_pending, so the
  // top-level effectful calls may grow under internal rules but never vanish.
  auto effectful_calls = [](const Program& p, const FuncTable& ft) {
    std::size_t n = 0;
    for (const auto& s : p.stmts)
      if (const auto* c = std::get_if<op::Call>(&s.op))
        n += ft.at(c->func).purity == Purity::effectful;
    return n;
  };
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    qt::IrGen gen(seed, {});
    Program p = gen.program();
    RewriteContext ctx(p, gen.funcs());
    for (auto v : p.params) ctx.bind_param(v, Value(1));
    std::size_t last = effectful_calls(ctx.program(), gen.funcs());
    ctx.set_observer([&](const RuleInstance&) {
      std::size_t now = effectful_calls(ctx.program(), gen.funcs());
      EXPECT_GE(now, last);
      last = now;
      EXPECT_TRUE(ctx.pending().empty());
    });
    ctx.normalize();
    for (const auto& d : ctx.find_dispatchable())
      EXPECT_EQ(gen.funcs().at(d.func).purity, Purity::effectful);
  }
}
