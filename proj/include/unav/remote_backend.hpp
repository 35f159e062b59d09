#pragma once

#include <memory>
#include <string>

#include "unav/agent.hpp"

namespace unav {

struct EndpointConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  std::string lang_path = "/lang";
  std::string vis_path = "/vis";
  double timeout_s = 180.0;
  int max_retries = 3;
  std::string auth_token;      // read from UNAV_API_TOKEN when empty
  double backoff_scale = 1.0;  // multiplies the 1 s / 4 s / 16 s schedule
};

/// JSON request body for one decision: {role, text_blocks, images (base64
/// PNG), metadata}. This is the complete wire format.
std::string payload_to_wire_json(const PromptPayload& payload,
                                 const std::string& role);

/// POSTs the payload and returns the `text` field of the JSON response.
/// Retries on timeout/5xx with exponential backoff; throws BackendError
/// when retries are exhausted or the response is not JSON.
std::string remote_decide(const EndpointConfig& config, const std::string& role,
                          const PromptPayload& payload);

std::unique_ptr<DecisionBackend> make_remote_backend(EndpointConfig config);

}  // namespace unav
