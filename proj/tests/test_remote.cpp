#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "unav/remote_backend.hpp"
#include "unav/worldgen.hpp"

using namespace unav;

namespace {

// Loopback HTTP stub; each test installs handlers and reads what arrived.
struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  StubServer() {
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

EndpointConfig fast_config(const std::string& base_url) {
  EndpointConfig config;
  config.base_url = base_url;
  config.timeout_s = 5.0;
  config.backoff_scale = 0.001;  // millisecond-scale retry schedule
  return config;
}

PromptPayload sample_payload() {
  PromptPayload p;
  p.role = "lang";
  p.text_blocks = {"Task (ObjectNav): find the crate", "History:\n"};
  p.images.push_back(EncodedImage{"depth view: front", "\x89PNG-bytes"});
  p.task_family = "ObjectNav";
  p.step_index = 7;
  return p;
}

}  // namespace

TEST_CASE("a decision round-trips over the loopback wire") {
  StubServer stub;
  std::string seen_body;
  std::string seen_auth;
  stub.server.Post("/lang", [&](const httplib::Request& req,
                                httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"text": "{\"action\":{\"name\":\"turn\",\"direction\":\"left\"}}"})",
                    "application/json");
  });

  EndpointConfig config = fast_config(stub.url());
  config.auth_token = "secret-token";
  auto backend = make_remote_backend(config);
  const std::string text = backend->decide_lang(sample_payload());
  const LangDecision d = parse_lang_response(text);
  CHECK(std::get<TurnAction>(d.action).dir == TurnDirection::left);
  CHECK(backend->name().find("http://127.0.0.1") != std::string::npos);

  // The request carried exactly the documented wire fields.
  const nlohmann::json j = nlohmann::json::parse(seen_body);
  CHECK(j.at("role") == "lang");
  CHECK(j.at("text_blocks").size() == 2);
  CHECK(j.at("images").size() == 1);
  CHECK(j.at("images")[0].contains("png_base64"));
  CHECK(j.at("metadata").at("step_index") == 7);
  CHECK(j.at("metadata").at("task_family") == "ObjectNav");
  CHECK(seen_auth == "Bearer secret-token");
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  // Parsed keys come back alphabetically sorted.
  CHECK(keys == std::vector<std::string>{"images", "metadata", "role",
                                         "text_blocks"});
}

TEST_CASE("vis decisions go to the vis path") {
  StubServer stub;
  std::atomic<int> vis_hits{0};
  stub.server.Post("/vis", [&](const httplib::Request&, httplib::Response& res) {
    ++vis_hits;
    res.set_content(R"({"text": "{\"select\":[1,2]}"})", "application/json");
  });
  auto backend = make_remote_backend(fast_config(stub.url()));
  PromptPayload p = sample_payload();
  p.role = "vis";
  CHECK(backend->decide_vis(p) == R"({"select":[1,2]})");
  CHECK(vis_hits == 1);
}

TEST_CASE("5xx responses retry on the backoff schedule until one succeeds") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/lang", [&](const httplib::Request&, httplib::Response& res) {
    const int n = ++hits;
    if (n <= 2) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
      return;
    }
    res.set_content(R"({"text": "ok"})", "application/json");
  });

  const auto start = std::chrono::steady_clock::now();
  const std::string text =
      remote_decide(fast_config(stub.url()), "lang", sample_payload());
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  CHECK(text == "ok");
  CHECK(hits == 3);
  // Two retries: 1 and 4 units of the scaled schedule (5 ms total here).
  CHECK(elapsed >= 0.005);
  CHECK(elapsed < 2.0);
}

TEST_CASE("exhausted retries surface a backend error with the last cause") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/lang", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  EndpointConfig config = fast_config(stub.url());
  config.max_retries = 3;
  try {
    remote_decide(config, "lang", sample_payload());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendError);
    CHECK(std::string(e.what()).find("500") != std::string::npos);
  }
  CHECK(hits == 4);  // the first attempt plus three retries
}

TEST_CASE("connection failures retry and then report a timeout") {
  // Nothing listens on this port: every attempt fails to connect.
  EndpointConfig config = fast_config("http://127.0.0.1:1");
  config.max_retries = 1;
  config.timeout_s = 1.0;
  try {
    remote_decide(config, "lang", sample_payload());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendError);
  }
}

TEST_CASE("4xx and malformed responses fail immediately without retries") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/lang", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 403;
  });
  stub.server.Post("/vis", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content("plain text, not the expected object", "text/plain");
  });

  const EndpointConfig config = fast_config(stub.url());
  try {
    remote_decide(config, "lang", sample_payload());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendError);
    CHECK(std::string(e.what()).find("403") != std::string::npos);
  }
  CHECK(hits == 1);
  try {
    remote_decide(config, "vis", sample_payload());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendError);
    CHECK(std::string(e.what()).find("malformed") != std::string::npos);
  }
  CHECK(hits == 2);
}

TEST_CASE("the bearer token falls back to the environment variable") {
  StubServer stub;
  std::string seen_auth = "unset";
  stub.server.Post("/lang", [&](const httplib::Request& req,
                                httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"text": "ok"})", "application/json");
  });
  const EndpointConfig config = fast_config(stub.url());

  setenv("UNAV_API_TOKEN", "env-token", 1);
  remote_decide(config, "lang", sample_payload());
  CHECK(seen_auth == "Bearer env-token");

  // An explicit config token wins over the environment.
  EndpointConfig with_token = config;
  with_token.auth_token = "config-token";
  remote_decide(with_token, "lang", sample_payload());
  CHECK(seen_auth == "Bearer config-token");

  unsetenv("UNAV_API_TOKEN");
  remote_decide(config, "lang", sample_payload());
  CHECK(seen_auth.empty());
}

TEST_CASE("the wire payload carries no simulator ground truth") {
  const WorldModel world = generate_world(5, generator_spec_from_kind("room"));
  const PanoramaObservation pano = render_panorama(world, world.start_pose);
  const TodoList todo = init_list({"reach the goal"});
  const PromptPayload payload = build_lang_prompt(
      world.task, pano, {{0, "waypoint at (1.00, 1.00) yaw 0 floor 0"}}, &todo,
      0, kGroundMaxRange);
  const std::string wire = payload_to_wire_json(payload, "lang");

  // Nothing that names or encodes the true map may cross the boundary.
  for (const char* forbidden :
       {"goal_positions", "start_pose", "occupied", "floors", "stair_links",
        "voxels", "label_table", "shortest", "geodesic", "success_radius",
        "world"}) {
    CAPTURE(forbidden);
    CHECK(wire.find(forbidden) == std::string::npos);
  }
  // Only prompt text, images, and the declared metadata go out.
  const nlohmann::json j = nlohmann::json::parse(wire);
  CHECK(j.size() == 4);
  // The instruction itself is part of the prompt, as intended.
  CHECK(wire.find(world.task.instruction) != std::string::npos);
}
