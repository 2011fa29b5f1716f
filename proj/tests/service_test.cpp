#include <gtest/gtest.h>
#include <httplib.h>
#include <unistd.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <thread>

#include "idip/base64.hpp"
#include "idip/fixtures.hpp"
#include "idip/image_io.hpp"
#include "idip/service.hpp"

using namespace idip;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ParsedEvent {
  std::uint64_t id = 0;
  std::string type;
  json data;
};

std::vector<ParsedEvent> parse_sse(const std::string& text) {
  std::vector<ParsedEvent> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find("\n\n", pos);
    if (end == std::string::npos) break;
    const auto block = text.substr(pos, end - pos);
    pos = end + 2;
    if (block.empty() || block[0] == ':') continue;
    ParsedEvent ev;
    std::size_t line_start = 0;
    while (line_start < block.size()) {
      auto line_end = block.find('\n', line_start);
      if (line_end == std::string::npos) line_end = block.size();
      const auto line = block.substr(line_start, line_end - line_start);
      line_start = line_end + 1;
      if (line.rfind("id: ", 0) == 0) ev.id = std::stoull(line.substr(4));
      if (line.rfind("event: ", 0) == 0) ev.type = line.substr(7);
      if (line.rfind("data: ", 0) == 0) ev.data = json::parse(line.substr(6));
    }
    out.push_back(std::move(ev));
  }
  return out;
}

class ServiceTest : public ::testing::Test {
 protected:
  void start(ServiceOptions options = {}) {
    options.defaults.iterations_per_phase = 20;
    manager = std::make_unique<SessionManager>(options);
    http = std::make_unique<HttpService>(*manager);
    port = http->bind("127.0.0.1", 0);
    server_thread = std::thread([this] { http->listen(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(60, 0);
    for (int i = 0; i < 100 && !client->Get("/v1/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  void TearDown() override {
    client.reset();
    if (http) http->stop();
    if (server_thread.joinable()) server_thread.join();
    http.reset();
    manager.reset();
  }

  static json create_body(std::uint64_t fixture_seed = 1, std::size_t size = 16) {
    auto f = make_fixture(FixtureKind::Texture, size, 0.25, fixture_seed);
    return {{"image", base64_encode(encode_png(f.corrupted))},
            {"mask", base64_encode(encode_mask_png(f.mask))},
            {"seed", 5}};
  }

  json post(const std::string& path, const json& body, int expected) {
    auto r = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expected) << path << ": " << r->body;
    return r->body.empty() ? json{} : json::parse(r->body);
  }

  json get(const std::string& path, int expected = 200) {
    auto r = client->Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expected) << path << ": " << r->body;
    return json::parse(r->body);
  }

  std::string create_session(std::uint64_t fixture_seed = 1) {
    return post("/v1/sessions", create_body(fixture_seed), 201).at("id").get<std::string>();
  }

  std::vector<ParsedEvent> stream_until_snapshot(const std::string& id, std::uint64_t after) {
    std::string text;
    auto r = client->Get("/v1/sessions/" + id + "/events?until=snapshot&after=" + std::to_string(after),
                         [&](const char* data, std::size_t n) {
                           text.append(data, n);
                           return true;
                         });
    EXPECT_TRUE(r);
    return parse_sse(text);
  }

  std::unique_ptr<SessionManager> manager;
  std::unique_ptr<HttpService> http;
  std::unique_ptr<httplib::Client> client;
  std::thread server_thread;
  int port = 0;
};

}  // namespace

TEST_F(ServiceTest, CreateShowsIdlePhaseZero) {
  start();
  auto view = post("/v1/sessions", create_body(), 201);
  EXPECT_EQ(view.at("phase"), 0);
  EXPECT_EQ(view.at("status"), "idle");
  EXPECT_EQ(view.at("width"), 16);
  EXPECT_EQ(view.at("seed"), 5);
  EXPECT_TRUE(view.at("latest_loss").is_null());
  auto again = get("/v1/sessions/" + view.at("id").get<std::string>());
  EXPECT_EQ(again, view);
  auto list = get("/v1/sessions");
  EXPECT_EQ(list.at("sessions").size(), 1u);
}

TEST_F(ServiceTest, FiftyIterationsStreamThreeEvents) {
  start();
  const auto id = create_session();
  auto view = post("/v1/sessions/" + id + "/phases", {{"iterations", 50}}, 202);
  EXPECT_EQ(view.at("status"), "optimizing");
  auto events = stream_until_snapshot(id, 0);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].type, "progress");
  EXPECT_EQ(events[0].data.at("iteration"), 25);
  EXPECT_EQ(events[1].type, "progress");
  EXPECT_EQ(events[1].data.at("iteration"), 50);
  EXPECT_EQ(events[2].type, "snapshot");
  EXPECT_EQ(events[2].data.at("iterations_run"), 50);
  EXPECT_FALSE(events[2].data.at("stopped_early").get<bool>());
  EXPECT_LT(events[0].id, events[1].id);
  EXPECT_LT(events[1].id, events[2].id);

  // The final event carries the full-resolution composite served by /result.
  auto payload = events[2].data.at("image");
  EXPECT_EQ(payload.at("width"), 16);
  auto png = client->Get("/v1/sessions/" + id + "/result");
  ASSERT_TRUE(png);
  EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(decode_png(base64_decode(payload.at("png").get<std::string>())),
            decode_png(std::vector<std::uint8_t>(png->body.begin(), png->body.end())));

  auto after = get("/v1/sessions/" + id);
  EXPECT_EQ(after.at("phase"), 1);
  EXPECT_EQ(after.at("status"), "idle");
  EXPECT_EQ(after.at("sequence"), events[2].id);
  EXPECT_TRUE(after.at("latest_loss").is_number());
}

TEST_F(ServiceTest, CadenceIncludesPhaseEnd) {
  start();
  const auto id = create_session();
  post("/v1/sessions/" + id + "/phases", {{"iterations", 30}}, 202);
  auto events = stream_until_snapshot(id, 0);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].data.at("iteration"), 25);
  EXPECT_EQ(events[1].data.at("iteration"), 30);
}

TEST_F(ServiceTest, PreviewIsDownscaledToCap) {
  ServiceOptions options;
  options.preview_max_side = 8;
  start(options);
  const auto id = create_session();
  post("/v1/sessions/" + id + "/phases", {{"iterations", 25}}, 202);
  auto events = stream_until_snapshot(id, 0);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].data.at("preview").at("width"), 8);
  EXPECT_EQ(events[1].data.at("image").at("width"), 16);
}

TEST_F(ServiceTest, StrokesAndPhasesConflictWhileOptimizing) {
  start();
  const auto id = create_session();
  auto mask_before = client->Get("/v1/sessions/" + id + "/mask")->body;
  post("/v1/sessions/" + id + "/phases", {{"iterations", 100000}}, 202);
  json strokes = {{"strokes", {{{"mode", "guidance"}, {"color", {1, 0, 0}}, {"radius", 2}, {"points", {{3, 3}}}}}}};
  auto err = post("/v1/sessions/" + id + "/strokes", strokes, 409);
  EXPECT_EQ(err.at("error").at("code"), "conflict");
  post("/v1/sessions/" + id + "/phases", {{"iterations", 5}}, 409);
  post("/v1/sessions/" + id + "/stop", json::object(), 200);
  auto events = stream_until_snapshot(id, 0);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().type, "snapshot");
  EXPECT_TRUE(events.back().data.at("stopped_early").get<bool>());
  EXPECT_EQ(client->Get("/v1/sessions/" + id + "/mask")->body, mask_before);
  EXPECT_EQ(get("/v1/sessions/" + id).at("status"), "stopped");
  // Strokes are accepted again once the phase has ended.
  auto ok = post("/v1/sessions/" + id + "/strokes", strokes, 200);
  EXPECT_EQ(ok.at("session").at("status"), "stopped");
}

TEST_F(ServiceTest, StrokesUpdateMaskAndTarget) {
  start();
  const auto id = create_session();
  const auto before = manager->mask(id).known_count();
  json strokes = json::array({{{"mode", "guidance"}, {"color", {0, 1, 0}}, {"radius", 16}, {"points", {{8, 8}}}}});
  auto r = post("/v1/sessions/" + id + "/strokes", strokes, 200);
  EXPECT_EQ(r.at("refinement").at("known_before"), before);
  EXPECT_EQ(r.at("refinement").at("known_after"), 256);
  EXPECT_DOUBLE_EQ(r.at("session").at("known_fraction").get<double>(), 1.0);
}

TEST_F(ServiceTest, UnknownSessionIsNotFound) {
  start();
  auto err = get("/v1/sessions/nope", 404);
  EXPECT_EQ(err.at("error").at("code"), "not_found");
  post("/v1/sessions/nope/phases", json::object(), 404);
  post("/v1/sessions/nope/strokes", json::array(), 404);
  get("/v1/sessions/nope/events", 404);
  get("/v1/no-such-route", 404);
}

TEST_F(ServiceTest, MalformedStrokesReportFieldPath) {
  start();
  const auto id = create_session();
  auto err = post("/v1/sessions/" + id + "/strokes",
                  {{"strokes", {{{"mode", "guidance"}, {"color", {2, 0, 0}}, {"points", {{1, 1}}}}}}}, 400);
  EXPECT_EQ(err.at("error").at("field"), "strokes[0].color[0]");
  err = post("/v1/sessions/" + id + "/strokes",
             {{"strokes", {{{"mode", "correction"}, {"points", {{1, 1}, {2}}}}}}}, 400);
  EXPECT_EQ(err.at("error").at("field"), "strokes[0].points[1]");
  err = post("/v1/sessions/" + id + "/strokes", {{"strokes", {{{"mode", "smudge"}, {"points", json::array()}}}}}, 400);
  EXPECT_EQ(err.at("error").at("field"), "strokes[0].mode");

  auto r = client->Post("/v1/sessions/" + id + "/strokes", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body).at("error").at("code"), "malformed_json");
}

TEST_F(ServiceTest, MalformedCreateReportsField) {
  start();
  auto body = create_body();
  body["mask"] = "!!!";
  EXPECT_EQ(post("/v1/sessions", body, 400).at("error").at("field"), "mask");
  body = create_body();
  body["config"] = {{"depth", 7}};
  EXPECT_EQ(post("/v1/sessions", body, 400).at("error").at("field"), "config");
  body = create_body();
  auto other = make_fixture(FixtureKind::Texture, 32, 0.25, 1);
  body["mask"] = base64_encode(encode_mask_png(other.mask));
  EXPECT_EQ(post("/v1/sessions", body, 400).at("error").at("field"), "mask");
  body = create_body();
  body["mask"] = base64_encode(encode_mask_png(DamageMask(16, 16, false)));
  EXPECT_EQ(post("/v1/sessions", body, 400).at("error").at("field"), "mask");
  body = create_body();
  body["id"] = "fixed-id";
  post("/v1/sessions", body, 201);
  post("/v1/sessions", body, 409);
}

TEST_F(ServiceTest, OversizedUploadRejected) {
  ServiceOptions options;
  options.max_payload_bytes = 1024;
  start(options);
  auto body = create_body(1, 64);
  ASSERT_GT(body.dump().size(), 1024u);
  auto r = client->Post("/v1/sessions", body.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 413);
  EXPECT_EQ(json::parse(r->body).at("error").at("code"), "payload_too_large");
}

TEST_F(ServiceTest, QueuedPhaseCanBeCancelled) {
  ServiceOptions options;
  options.workers = 1;
  start(options);
  const auto a = create_session(1);
  const auto b = create_session(2);
  post("/v1/sessions/" + a + "/phases", {{"iterations", 100000}}, 202);
  auto queued = post("/v1/sessions/" + b + "/phases", {{"iterations", 10}}, 202);
  EXPECT_TRUE(queued.at("queued").get<bool>());
  post("/v1/sessions/" + b + "/stop", json::object(), 200);
  post("/v1/sessions/" + a + "/stop", json::object(), 200);
  auto events = stream_until_snapshot(b, 0);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].type, "cancelled");
  auto view = get("/v1/sessions/" + b);
  EXPECT_EQ(view.at("status"), "idle");
  EXPECT_EQ(view.at("phase"), 0);
}

TEST_F(ServiceTest, ResumeFromLastEventId) {
  start();
  const auto id = create_session();
  post("/v1/sessions/" + id + "/phases", {{"iterations", 50}}, 202);
  auto all = stream_until_snapshot(id, 0);
  ASSERT_EQ(all.size(), 3u);
  std::string text;
  httplib::Headers headers{{"Last-Event-ID", std::to_string(all[0].id)}};
  client->Get("/v1/sessions/" + id + "/events?until=snapshot", headers, [&](const char* d, std::size_t n) {
    text.append(d, n);
    return true;
  });
  auto rest = parse_sse(text);
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(rest[0].id, all[1].id);
}

TEST_F(ServiceTest, MetricsAgainstUploadedTruth) {
  start();
  const auto id = create_session();
  auto result = client->Get("/v1/sessions/" + id + "/result");
  ASSERT_TRUE(result);
  std::vector<std::uint8_t> png(result->body.begin(), result->body.end());
  auto report = post("/v1/sessions/" + id + "/metrics", {{"truth", base64_encode(png)}, {"window_k", 1}}, 200);
  EXPECT_EQ(report.at("dssim").get<double>(), 0.0);
  EXPECT_EQ(report.at("lmse").get<double>(), 0.0);
  auto truth = make_fixture(FixtureKind::Texture, 16, 0.25, 1).truth.value();
  report = post("/v1/sessions/" + id + "/metrics", {{"truth", base64_encode(encode_png(truth))}}, 200);
  EXPECT_GT(report.at("dssim").get<double>(), 0.0);
  EXPECT_EQ(report.at("image_id"), id);
  post("/v1/sessions/" + id + "/metrics", {{"truth", base64_encode(encode_png(Image(8, 8)))}}, 400);
}

TEST_F(ServiceTest, DeleteRemovesSession) {
  start();
  const auto id = create_session();
  auto r = client->Delete("/v1/sessions/" + id);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  get("/v1/sessions/" + id, 404);
}

TEST(ServicePersistence, IdleSessionReloadsToIdenticalView) {
  const auto dir = fs::temp_directory_path() / ("idip-state-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  ServiceOptions options;
  options.state_dir = dir;
  SessionView before;
  Image result;
  std::string id;
  {
    SessionManager m(options);
    auto f = make_fixture(FixtureKind::Checker, 16, 0.25, 3);
    RestorationConfig config;
    config.seed = 9;
    id = m.create("", f.corrupted, f.mask, config).id;
    m.start_phase(id, 12);
    m.wait_idle(id, std::chrono::minutes(1));
    PaintStroke s;
    s.color = {0.5f, 0.5f, 0.5f};
    s.radius = 2;
    s.points = {{4, 4}};
    m.refine(id, {s});
    before = m.view(id);
    result = m.result(id);
  }
  SessionManager reloaded(options);
  EXPECT_EQ(reloaded.view(id), before);
  EXPECT_EQ(reloaded.result(id), result);
  reloaded.start_phase(id, 3);
  EXPECT_EQ(reloaded.wait_idle(id, std::chrono::minutes(1)).phase, 2);
  fs::remove_all(dir);
}
