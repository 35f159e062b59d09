#include "unav/remote_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "unav/image.hpp"

namespace unav {

using ordered_json = nlohmann::ordered_json;

std::string payload_to_wire_json(const PromptPayload& payload,
                                 const std::string& role) {
  ordered_json j;
  j["role"] = role;
  j["text_blocks"] = payload.text_blocks;
  j["images"] = ordered_json::array();
  for (const EncodedImage& img : payload.images) {
    j["images"].push_back(ordered_json{{"caption", img.caption},
                                       {"png_base64", base64_encode(img.png)}});
  }
  j["metadata"] = ordered_json{{"task_family", payload.task_family},
                               {"step_index", payload.step_index},
                               {"recovery", payload.recovery},
                               {"verification", payload.verification},
                               {"init", payload.init}};
  return j.dump();
}

std::string remote_decide(const EndpointConfig& config, const std::string& role,
                          const PromptPayload& payload) {
  httplib::Client client(config.base_url);
  client.set_connection_timeout(std::chrono::duration<double>(config.timeout_s));
  client.set_read_timeout(std::chrono::duration<double>(config.timeout_s));
  client.set_write_timeout(std::chrono::duration<double>(config.timeout_s));

  std::string token = config.auth_token;
  if (token.empty()) {
    if (const char* env = std::getenv("UNAV_API_TOKEN")) token = env;
  }
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

  const std::string path =
      role == "vis" ? config.vis_path : config.lang_path;
  const std::string body = payload_to_wire_json(payload, role);

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      // 1 s, 4 s, 16 s ... scaled so tests can run in milliseconds.
      const double delay_s =
          std::pow(4.0, attempt - 1) * config.backoff_scale;
      std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
    }
    httplib::Result res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "timeout: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "http: status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::BackendError,
                  "http: status " + std::to_string(res->status));
    }
    const ordered_json j = ordered_json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("text") ||
        !j["text"].is_string()) {
      throw Error(ErrorCode::BackendError, "malformed: response is not "
                                           "{\"text\": ...}");
    }
    return j["text"].get<std::string>();
  }
  throw Error(ErrorCode::BackendError, last_error);
}

namespace {

class RemoteBackend : public DecisionBackend {
 public:
  explicit RemoteBackend(EndpointConfig config) : config_(std::move(config)) {}

  std::string decide_lang(const PromptPayload& payload) override {
    return remote_decide(config_, "lang", payload);
  }
  std::string decide_vis(const PromptPayload& payload) override {
    return remote_decide(config_, "vis", payload);
  }
  std::string name() const override { return "http(" + config_.base_url + ")"; }

 private:
  EndpointConfig config_;
};

}  // namespace

std::unique_ptr<DecisionBackend> make_remote_backend(EndpointConfig config) {
  return std::make_unique<RemoteBackend>(std::move(config));
}

}  // namespace unav
