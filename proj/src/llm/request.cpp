#include "empathy/llm/request.hpp"

#include <nlohmann/json.hpp>

#include "empathy/common.hpp"
#include "empathy/hash.hpp"
#include "empathy/text.hpp"

namespace empathy::llm {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::live: return "live";
    case BackendKind::cache: return "cache";
    case BackendKind::mock: return "mock";
  }
  return "live";
}

void validate(const ChatRequest& request) {
  if (text::trim(request.model_id).empty()) throw PreconditionError("chat request has an empty model id");
  if (!(request.temperature >= 0.0)) throw PreconditionError("chat request temperature must be >= 0");
  if (request.max_output_tokens <= 0) throw PreconditionError("chat request max_output_tokens must be positive");
}

std::string canonical_serialization(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["kind"] = "chat";
  j["model_id"] = text::trim(request.model_id);
  j["system_text"] = text::normalize_whitespace(request.system_text);
  j["user_text"] = text::normalize_whitespace(request.user_text);
  j["temperature"] = request.temperature;
  j["max_output_tokens"] = request.max_output_tokens;
  if (request.seed_hint) {
    j["seed_hint"] = *request.seed_hint;
  } else {
    j["seed_hint"] = nullptr;
  }
  return j.dump();
}

std::string canonical_serialization(const EmbeddingRequest& request) {
  nlohmann::ordered_json j;
  j["kind"] = "embedding";
  j["model_id"] = text::trim(request.model_id);
  j["input"] = text::normalize_whitespace(request.input);
  return j.dump();
}

std::string cache_key(const ChatRequest& request) { return sha256_hex(canonical_serialization(request)); }

std::string cache_key(const EmbeddingRequest& request) { return sha256_hex(canonical_serialization(request)); }

}  // namespace empathy::llm
