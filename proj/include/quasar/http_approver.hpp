#pragma once

// Approval over HTTP for the browser console.
//   GET  /pending   -> {"batch_id", "calls": [{"fn", "args", "site"}]} or 204
//   POST /decision  <- {"batch_id", "approve"}; 409 when batch_id is not pending
//   GET  /trace     -> array of trace events

#include <condition_variable>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "quasar/runtime.hpp"

namespace quasar {

class HttpApprover : public Approver {
 public:
  /// Binds immediately; `port == 0` picks a free port.
  HttpApprover(const TraceLog& trace, std::string host = "127.0.0.1", int port = 0)
      : trace_(trace) {
    routes();
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else if (server_.bind_to_port(host, port)) {
      port_ = port;
    }
    if (port_ <= 0) throw Error(ErrorKind::environment, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~HttpApprover() override { stop(); }

  HttpApprover(const HttpApprover&) = delete;
  HttpApprover& operator=(const HttpApprover&) = delete;

  int port() const { return port_; }

  /// Stops serving. A decision still awaited is answered with a reject.
  void stop() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  ApproverDecision decide(const ApprovalBatch& batch) override {
    std::unique_lock<std::mutex> lock(mu_);
    pending_ = batch;
    decision_.reset();
    cv_.wait(lock, [&] { return closed_ || decision_.has_value(); });
    pending_.reset();
    if (!decision_) return {batch.batch_id, Verdict::reject};
    ApproverDecision d = *decision_;
    decision_.reset();
    return d;
  }

  /// True while a batch is waiting on a decision.
  bool awaiting() const {
    std::lock_guard<std::mutex> lock(mu_);
    return pending_.has_value();
  }

 private:
  using Json = nlohmann::ordered_json;

  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  void routes() {
    server_.Get("/pending", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!pending_ || decision_) {
        res.status = 204;
        return;
      }
      send_json(res, 200, to_json(*pending_));
    });

    server_.Post("/decision", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("batch_id") ||
          !body.contains("approve") || !body["batch_id"].is_number_integer() ||
          !body["approve"].is_boolean()) {
        send_json(res, 400, {{"error", "expected {\"batch_id\": int, \"approve\": bool}"}});
        return;
      }
      auto id = body["batch_id"].get<std::int64_t>();
      bool approve = body["approve"].get<bool>();
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (!pending_ || decision_ || id < 0 || static_cast<std::uint64_t>(id) != pending_->batch_id) {
          Json err{{"error", "batch is not pending"}};
          err["pending"] = pending_ && !decision_ ? Json(pending_->batch_id) : Json(nullptr);
          send_json(res, 409, err);
          return;
        }
        decision_ = ApproverDecision{pending_->batch_id, approve ? Verdict::approve_all : Verdict::reject};
      }
      cv_.notify_all();
      send_json(res, 200, {{"batch_id", id}, {"approve", approve}});
    });

    server_.Get("/trace", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, trace_.snapshot());
    });
  }

  const TraceLog& trace_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<ApprovalBatch> pending_;
  std::optional<ApproverDecision> decision_;
  bool closed_ = false;
};

}  // namespace quasar
