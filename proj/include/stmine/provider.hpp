#pragma once

// HTTP adapter for a Gemini-style generateContent endpoint.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stmine/error.hpp"
#include "stmine/explain.hpp"

namespace stmine {

struct GeminiConfig {
  std::string apiKey;
  std::string model = "gemini-2.0-flash";
  std::string baseUrl = "https://generativelanguage.googleapis.com";
  int timeoutSeconds = 60;
  bool googleSearch = true;

  /// STMINE_LLM_API_KEY, STMINE_LLM_MODEL, STMINE_LLM_URL override the defaults.
  static GeminiConfig from_env() {
    GeminiConfig c;
    if (const char* v = std::getenv("STMINE_LLM_API_KEY")) c.apiKey = v;
    if (const char* v = std::getenv("STMINE_LLM_MODEL")) c.model = v;
    if (const char* v = std::getenv("STMINE_LLM_URL")) c.baseUrl = v;
    return c;
  }
};

inline nlohmann::json gemini_request_body(const std::string& prompt, const GeminiConfig& config) {
  nlohmann::json body{{"contents", {{{"role", "user"}, {"parts", {{{"text", prompt}}}}}}}};
  if (config.googleSearch) body["tools"] = {{{"google_search", nlohmann::json::object()}}};
  return body;
}

/// Concatenated text parts of the first candidate.
inline std::string gemini_response_text(const nlohmann::json& response) {
  if (!response.contains("candidates") || !response["candidates"].is_array() || response["candidates"].empty())
    fail("ProviderUnavailable", "provider returned no candidates");
  const auto& content = response["candidates"][0].value("content", nlohmann::json::object());
  std::string text;
  for (const auto& part : content.value("parts", nlohmann::json::array()))
    if (part.contains("text") && part["text"].is_string()) text += part["text"].get<std::string>();
  if (text.empty()) fail("ProviderUnavailable", "provider returned an empty completion");
  return text;
}

class GeminiProvider : public TextProvider {
 public:
  explicit GeminiProvider(GeminiConfig config) : config_(std::move(config)) {}

  std::string complete(const std::string& prompt) override {
    if (config_.apiKey.empty()) fail("ProviderUnavailable", "no LLM API key configured");
    httplib::Client client(config_.baseUrl);
    client.set_connection_timeout(config_.timeoutSeconds, 0);
    client.set_read_timeout(config_.timeoutSeconds, 0);
    client.set_write_timeout(config_.timeoutSeconds, 0);
    httplib::Headers headers{{"x-goog-api-key", config_.apiKey}};
    auto res = client.Post("/v1beta/models/" + config_.model + ":generateContent", headers,
                           gemini_request_body(prompt, config_).dump(), "application/json");
    if (!res) fail("ProviderUnavailable", "LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      fail("ProviderUnavailable", "LLM endpoint answered HTTP " + std::to_string(res->status));
    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) fail("ProviderUnavailable", "LLM endpoint returned non-JSON");
    return gemini_response_text(doc);
  }

 private:
  GeminiConfig config_;
};

}  // namespace stmine
