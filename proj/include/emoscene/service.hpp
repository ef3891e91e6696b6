#pragma once

// JSON-over-HTTP facade for the review queue.
//
//   GET  /api/queue/next?reviewer=<id>   200 item | 204 | 400
//   POST /api/items/{stem}/decision      200 {state, round} | 400 | 404 | 409 | 422
//   GET  /api/stats                      200 agreement payload
//   GET  /api/images/{scene}/{stem}      200 image bytes | 404
//
// Every state change goes through ReviewQueue::submit.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emoscene/corpus.hpp"
#include "emoscene/error.hpp"
#include "emoscene/hitl.hpp"

namespace emoscene {

struct ServiceOptions {
  std::string cors_origin = "*";
};

// scene/stem -> image path, as discovered by a corpus scan.
using ImageIndex = std::map<std::string, fs::path>;

inline std::string image_key(std::string_view scene, std::string_view stem) {
  return std::string{scene} + "/" + std::string{stem};
}

inline ImageIndex image_index(const CorpusScan& scan) {
  ImageIndex idx;
  for (const auto& p : scan.pairs) idx.emplace(image_key(p.scene, p.stem), p.image_path);
  return idx;
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownItem: return 404;
    case ErrorCode::AlreadyFinalized: return 409;
    case ErrorCode::MissingRationale:
    case ErrorCode::IncompleteDecision:
    case ErrorCode::InvalidVerdict: return 422;
    case ErrorCode::MalformedSyntax: return 400;
    default: return 500;
  }
}

class ReviewService {
 public:
  ReviewService(ReviewQueue& queue, ImageIndex images, ServiceOptions options = {})
      : queue_(queue), images_(std::move(images)), options_(std::move(options)) {
    routes();
  }

  ~ReviewService() { stop(); }

  // Binds to host:port (port 0 picks a free one) and serves on a background
  // thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, host + ":" + std::to_string(port), "cannot bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  // Serves on the calling thread until stop() is called.
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error(ErrorCode::IoError, host + ":" + std::to_string(port), "cannot listen");
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  nlohmann::json stats() const {
    const auto items = queue_.items();
    const auto pairs = finalized_pairs(items);
    auto payload = to_json(agreement_report(pairs));
    payload["finalized"] = pairs.size();
    payload["items"] = items.size();
    payload["empty"] = pairs.empty();
    return payload;
  }

  nlohmann::json item_payload(const ReviewItem& item) const {
    auto j = to_json(item);
    j["image_url"] = "/api/images/" + item.scene + "/" + item.stem;
    auto fields = nlohmann::json::array();
    for (auto f : item.presented_fields()) fields.push_back(std::string{to_string(f)});
    j["fields"] = fields;
    return j;
  }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& field,
                         const std::string& reason) {
    nlohmann::json body = {{"error", code}, {"reason", reason}};
    if (!field.empty()) body["field"] = field;
    send_json(res, status, body);
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server_.Get("/api/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
      const auto reviewer = req.get_param_value("reviewer");
      if (reviewer.empty()) return send_error(res, 400, "BadRequest", "reviewer", "reviewer id is required");
      auto item = queue_.next_pending(reviewer);
      if (!item) {
        res.status = 204;
        return;
      }
      send_json(res, 200, item_payload(*item));
    });

    server_.Post(R"(/api/items/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string stem = req.matches[1];
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        return send_error(res, 400, "BadRequest", "body", "body is not valid JSON");
      }
      try {
        if (!queue_.find(stem)) throw Error(ErrorCode::UnknownItem, stem, "no such item");
        auto decision = review_decision_from_json(body);
        if (decision.stem.empty()) decision.stem = stem;
        if (decision.stem != stem)
          throw Error(ErrorCode::IncompleteDecision, "stem", "body stem does not match the URL");
        if (decision.reviewer.empty()) throw Error(ErrorCode::IncompleteDecision, "reviewer", "reviewer id is required");
        const auto next = queue_.submit(decision);
        send_json(res, 200, {{"stem", next.stem}, {"state", std::string{to_string(next.state)}}, {"round", next.round}});
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), std::string{to_string(e.code())}, e.field(), e.reason());
      }
    });

    server_.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, stats()); });

    // Only files found by the corpus scan are served; the URL never reaches
    // the filesystem as a path.
    server_.Get(R"(/api/images/([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto it = images_.find(image_key(req.matches[1].str(), req.matches[2].str()));
      if (it == images_.end()) return send_error(res, 404, "UnknownItem", "stem", "no such image");
      std::string bytes;
      try {
        bytes = read_file(it->second);
      } catch (const Error&) {
        return send_error(res, 404, "UnknownItem", "stem", "image unreadable");
      }
      const auto ext = to_lower(it->second.extension().string());
      res.set_content(std::move(bytes), ext == ".png" ? "image/png" : "image/jpeg");
    });

    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty() && res.status == 404) send_error(res, 404, "NotFound", "", "no such resource");
    });
  }

  ReviewQueue& queue_;
  ImageIndex images_;
  ServiceOptions options_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace emoscene
