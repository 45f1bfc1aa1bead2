// Copyright 2026 The floodrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <regex>

#include "floodrag/llm_gateway.hpp"
#include "httplib.h"

namespace floodrag::llm {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error("endpoint is not an http(s) URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

BackendReply HttpBackend::complete(const prompt::PromptBundle& bundle, const BackendConfig& config) {
  const auto env = config.api_key_env();
  const char* key = std::getenv(env.c_str());
  if (key == nullptr || *key == '\0') throw AuthError("environment variable " + env + " is not set");

  const auto ep = split_endpoint(config.endpoint);
  httplib::Client client(ep.origin);
  client.set_connection_timeout(config.timeout_seconds, 0);
  client.set_read_timeout(config.timeout_seconds, 0);
  client.set_write_timeout(config.timeout_seconds, 0);
  client.set_bearer_token_auth(key);

  nlohmann::json body;
  body["model"] = config.model_name;
  body["temperature"] = config.temperature;
  body["max_tokens"] = config.max_tokens;
  body["messages"] = nlohmann::json::array({{{"role", "system"}, {"content", bundle.system}},
                                            {{"role", "user"}, {"content", bundle.user}}});

  auto res = client.Post(ep.path, body.dump(), "application/json");
  if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw AuthError("authentication rejected (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw Error("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  if (res->body.size() > config.max_response_bytes) {
    throw ResponseTooLarge("response body of " + std::to_string(res->body.size()) + " bytes exceeds the limit");
  }

  BackendReply reply;
  try {
    const auto j = nlohmann::json::parse(res->body);
    reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      const auto& u = j.at("usage");
      if (u.contains("prompt_tokens")) reply.prompt_tokens = u.at("prompt_tokens").get<std::int64_t>();
      if (u.contains("completion_tokens")) reply.completion_tokens = u.at("completion_tokens").get<std::int64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("unexpected chat-completions payload: ") + e.what());
  }
  return reply;
}

}  // namespace floodrag::llm
