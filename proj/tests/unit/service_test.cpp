#include <gtest/gtest.h>

#include "../support/service_checks.hpp"

using namespace emoscene;

TEST(Service, ContractScript) {
  for (const auto& f : service_checks::run_contract()) ADD_FAILURE() << f;
}

TEST(Service, StatusMapping) {
  EXPECT_EQ(http_status(ErrorCode::UnknownItem), 404);
  EXPECT_EQ(http_status(ErrorCode::AlreadyFinalized), 409);
  EXPECT_EQ(http_status(ErrorCode::MissingRationale), 422);
  EXPECT_EQ(http_status(ErrorCode::IncompleteDecision), 422);
  EXPECT_EQ(http_status(ErrorCode::InvalidVerdict), 422);
  EXPECT_EQ(http_status(ErrorCode::MalformedSyntax), 400);
}

TEST(Service, EmptyQueueAndEmptyStats) {
  ReviewQueue q;
  ReviewService service(q, {});
  const int port = service.start();
  httplib::Client cli("127.0.0.1", port);
  auto r = cli.Get("/api/queue/next?reviewer=r1");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  r = cli.Get("/api/stats");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto st = nlohmann::json::parse(r->body);
  EXPECT_EQ(st["empty"], true);
  EXPECT_TRUE(st["accuracy"].is_null());
  EXPECT_TRUE(st["errors"].contains("accuracy"));
}

TEST(Service, ConfiguredCorsOrigin) {
  ReviewQueue q;
  ReviewService service(q, {}, ServiceOptions{"http://localhost:5173"});
  const int port = service.start();
  httplib::Client cli("127.0.0.1", port);
  auto r = cli.Get("/api/stats");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
}

TEST(Service, ItemPayloadForSingleCandidate) {
  ReviewQueue q;
  ReviewService service(q, {});
  const auto j = service.item_payload(fixtures::review_item("a", 1));
  EXPECT_EQ(j["fields"], nlohmann::json::array({"emotion_1", "valence", "arousal", "dominance"}));
  EXPECT_EQ(j["image_url"], "/api/images/beach/a");
}
