#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "empathy/llm/transport.hpp"

namespace empathy::llm {

using nlohmann::json;

BaseUrl split_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw PreconditionError("base URL needs a scheme: " + std::string(url));
  const auto path_start = url.find('/', scheme_end + 3);
  BaseUrl out;
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.prefix = std::string(url.substr(path_start));
  }
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

std::string api_key_from_env(const std::string& variable) {
  const char* value = std::getenv(variable.c_str());
  if (value == nullptr || *value == '\0') {
    throw BackendError("credential environment variable " + variable + " is not set");
  }
  return value;
}

HttpTransport::HttpTransport(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), url_(split_base_url(endpoint_.base_url)) {}

std::string HttpTransport::post_json(const std::string& path, const std::string& body) {
  httplib::Client client(url_.origin);
  const auto secs = static_cast<time_t>(endpoint_.timeout_s);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  const auto res = client.Post(url_.prefix + path, headers, body, "application/json");
  if (!res) throw TransientError("HTTP request to " + url_.origin + url_.prefix + path + " failed: " +
                                 httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
  }
  if (res->status >= 400) {
    throw BackendError("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
  }
  return res->body;
}

std::string HttpTransport::chat(const ChatRequest& request) {
  json body;
  body["model"] = request.model_id;
  body["messages"] = json::array({
      {{"role", "system"}, {"content", request.system_text}},
      {{"role", "user"}, {"content", request.user_text}},
  });
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  if (request.seed_hint) body["seed"] = *request.seed_hint;

  const auto raw = post_json("/chat/completions", body.dump());
  try {
    const auto reply = json::parse(raw);
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("unexpected chat completion payload: ") + e.what());
  }
}

std::vector<double> HttpTransport::embed(const EmbeddingRequest& request) {
  json body;
  body["model"] = request.model_id;
  body["input"] = request.input;
  const auto raw = post_json("/embeddings", body.dump());
  try {
    const auto reply = json::parse(raw);
    return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("unexpected embeddings payload: ") + e.what());
  }
}

}  // namespace empathy::llm
