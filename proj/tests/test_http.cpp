#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "quasar/http_approver.hpp"
#include "support/drink.hpp"

using namespace quasar;
using Json = nlohmann::json;

namespace {

Json fixture(const std::string& name) {
  std::ifstream f(std::string(QUASAR_SOURCE_DIR) + "/tests/fixtures/http/" + name);
  if (!f) throw std::runtime_error("missing fixture " + name);
  std::stringstream ss;
  ss << f.rdbuf();
  return Json::parse(ss.str());
}

/// Runs the drink program against an HTTP approver on a background thread.
struct Session {
  TraceLog trace;
  HttpApprover approver{trace};
  httplib::Client client{"127.0.0.1", approver.port()};
  FunctionEnv env = qt::drink_env();
  VirtualExecutor exec;
  RunOutcome outcome;
  std::thread runner;

  Session() {
    client.set_connection_timeout(5);
    client.set_read_timeout(5);
    runner = std::thread([this] {
      auto [p, ft] = qt::drink_p1();
      RunOptions opt;
      opt.inputs = {Value("image")};
      opt.trace = &trace;
      opt.trace_rules = false;
      outcome = run(p, ft, env, approver, exec, opt);
    });
  }

  ~Session() {
    approver.stop();
    if (runner.joinable()) runner.join();
  }

  Json wait_pending() {
    for (int i = 0; i < 2000; ++i) {
      auto r = client.Get("/pending");
      if (r && r->status == 200) return Json::parse(r->body);
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    throw std::runtime_error("no pending batch");
  }

  httplib::Result decide(const Json& body) {
    return client.Post("/decision", body.dump(), "application/json");
  }

  void finish() { runner.join(); }
};

}  // namespace

TEST(HttpApproval, DrinkApproveTwiceMatchesFixtures) {
  Session s;
  Json b1 = s.wait_pending();
  EXPECT_EQ(b1, fixture("pending_drink_batch1.json"));

  auto conflict = s.decide({{"batch_id", 7}, {"approve", true}});
  ASSERT_TRUE(conflict);
  EXPECT_EQ(conflict->status, 409);
  EXPECT_EQ(Json::parse(conflict->body), fixture("decision_conflict.json"));

  auto ok = s.decide({{"batch_id", 1}, {"approve", true}});
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(Json::parse(ok->body), fixture("decision_ok.json"));

  Json b2 = s.wait_pending();
  EXPECT_EQ(b2, fixture("pending_drink_batch2.json"));
  auto stale = s.decide({{"batch_id", 1}, {"approve", true}});
  EXPECT_EQ(stale->status, 409);
  EXPECT_EQ(s.decide({{"batch_id", 2}, {"approve", true}})->status, 200);
  s.finish();

  ASSERT_TRUE(s.outcome.ok());
  EXPECT_EQ(*s.outcome.value, Value(true));
  auto none = s.client.Get("/pending");
  EXPECT_EQ(none->status, 204);
  auto trace = s.client.Get("/trace");
  ASSERT_EQ(trace->status, 200);
  EXPECT_EQ(Json::parse(trace->body), fixture("trace_drink.json"));
}

TEST(HttpApproval, RejectEndsRun) {
  Session s;
  s.wait_pending();
  s.decide({{"batch_id", 1}, {"approve", true}});
  Json b2 = s.wait_pending();
  EXPECT_EQ(b2["batch_id"], 2);
  EXPECT_EQ(s.decide({{"batch_id", 2}, {"approve", false}})->status, 200);
  s.finish();
  EXPECT_EQ(s.outcome.status, RunOutcome::Status::rejected);
  EXPECT_EQ(s.outcome.rejected_batch, 2u);
  auto trace = Json::parse(s.client.Get("/trace")->body);
  const auto& last = trace.back();
  EXPECT_EQ(last["event"], "result");
  EXPECT_EQ(last["outcome"], "rejected");
  EXPECT_EQ(last["batch_id"], 2);
  for (const auto& e : trace) {
    if (e["event"] == "dispatch") {
      EXPECT_EQ(e["fn"], ".find");
    }
  }
}

TEST(HttpApproval, MalformedDecisionIs400) {
  Session s;
  s.wait_pending();
  EXPECT_EQ(s.client.Post("/decision", "not json", "application/json")->status, 400);
  EXPECT_EQ(s.decide({{"batch_id", 1}})->status, 400);
  EXPECT_EQ(s.decide({{"batch_id", "1"}, {"approve", true}})->status, 400);
  EXPECT_TRUE(s.approver.awaiting());
}

TEST(HttpApproval, NothingPendingIs204) {
  TraceLog trace;
  HttpApprover approver(trace);
  httplib::Client c("127.0.0.1", approver.port());
  auto r = c.Get("/pending");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  EXPECT_EQ(c.Post("/decision", Json{{"batch_id", 1}, {"approve", true}}.dump(), "application/json")->status,
            409);
  EXPECT_EQ(Json::parse(c.Get("/trace")->body), Json::array());
}

TEST(HttpApproval, StopWhileWaitingRejects) {
  Session s;
  s.wait_pending();
  s.approver.stop();
  s.finish();
  EXPECT_EQ(s.outcome.status, RunOutcome::Status::rejected);
  EXPECT_EQ(s.outcome.rejected_batch, 1u);
}
