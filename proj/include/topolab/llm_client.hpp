#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

// <resolv.h>, pulled in by httplib, defines _res as a macro; Eigen uses the
// same name for function parameters.
#ifdef _res
#undef _res
#endif

#include "topolab/agents.hpp"
#include "topolab/error.hpp"

namespace topolab {

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string api_key;
  std::string model = "gpt-4o";
  double temperature = 0.0;
  int timeout_seconds = 60;
  int max_attempts = 3;
  int backoff_initial_ms = 500;  // doubled after every failed attempt

  // Reads MAS_LLM_BASE_URL and MAS_LLM_API_KEY; leaves other fields as given.
  static EndpointConfig from_env(EndpointConfig base);
  static EndpointConfig from_env() { return from_env(EndpointConfig{}); }
};

inline EndpointConfig EndpointConfig::from_env(EndpointConfig base) {
  if (const char* url = std::getenv("MAS_LLM_BASE_URL")) base.base_url = url;
  if (const char* key = std::getenv("MAS_LLM_API_KEY")) base.api_key = key;
  return base;
}

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline SplitUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint base URL must include a scheme: '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

// POSTs a JSON body with retry on transport failure and HTTP 429; returns the
// parsed 2xx body.
inline nlohmann::json post_json(const EndpointConfig& cfg, const std::string& path, const nlohmann::json& body) {
  if (cfg.base_url.empty()) throw ConfigError("LLM endpoint base URL is not configured (MAS_LLM_BASE_URL)");
  if (cfg.api_key.empty()) throw ConfigError("LLM API key is not configured (MAS_LLM_API_KEY)");
  const auto url = split_base_url(cfg.base_url);

  httplib::Client client(url.origin);
  client.set_connection_timeout(cfg.timeout_seconds, 0);
  client.set_read_timeout(cfg.timeout_seconds, 0);
  client.set_write_timeout(cfg.timeout_seconds, 0);
  const httplib::Headers headers{{"Authorization", "Bearer " + cfg.api_key}};
  const std::string payload = body.dump();

  std::string last_failure;
  int delay_ms = cfg.backoff_initial_ms;
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    auto res = client.Post(url.prefix + path, headers, payload, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 429) {
      last_failure = "rate limited (HTTP 429)";
    } else if (res->status < 200 || res->status >= 300) {
      throw ProtocolError(res->status, res->body);
    } else {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw MalformedResponse(std::string("response body is not JSON: ") + e.what());
      }
    }
    if (attempt < cfg.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
  }
  throw BackendUnavailable("LLM backend unavailable after " + std::to_string(cfg.max_attempts) +
                           " attempts; last failure: " + last_failure);
}

}  // namespace detail

inline nlohmann::json chat_request_body(const Prompt& prompt, const EndpointConfig& cfg) {
  return {{"model", cfg.model},
          {"messages",
           {{{"role", "system"}, {"content", prompt.system_text}}, {{"role", "user"}, {"content", prompt.user_text}}}},
          {"temperature", cfg.temperature}};
}

// One chat-completion call; returns choices[0].message.content.
inline std::string llm_respond(const Prompt& prompt, const EndpointConfig& cfg) {
  const auto reply = detail::post_json(cfg, "/chat/completions", chat_request_body(prompt, cfg));
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw MalformedResponse("choices[0].message.content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponse("response lacks choices[0].message.content");
  }
}

// Optional remote text embedding: POST {base_url}/embeddings, reads data[0].embedding.
inline std::vector<double> remote_embedding(const std::string& text, const EndpointConfig& cfg) {
  const auto reply = detail::post_json(cfg, "/embeddings", {{"model", cfg.model}, {"input", text}});
  try {
    return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponse("response lacks data[0].embedding");
  }
}

}  // namespace topolab
