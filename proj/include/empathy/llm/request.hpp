#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace empathy::llm {

struct ChatRequest {
  std::string model_id;
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_output_tokens = 16;
  std::optional<std::int64_t> seed_hint;

  bool operator==(const ChatRequest&) const = default;
};

struct EmbeddingRequest {
  std::string model_id;
  std::string input;

  bool operator==(const EmbeddingRequest&) const = default;
};

enum class BackendKind { live, cache, mock };
std::string_view to_string(BackendKind kind);

struct ChatResponse {
  std::string text;
  BackendKind backend = BackendKind::live;
  double latency_ms = 0.0;
};

struct EmbeddingResponse {
  std::vector<double> values;
  BackendKind backend = BackendKind::live;
  double latency_ms = 0.0;
};

/// Throws PreconditionError on an empty model id or negative temperature.
void validate(const ChatRequest& request);

// Canonical serialization: fixed field order, whitespace-normalized texts,
// compact JSON. Cache keys are the SHA-256 of this string.
std::string canonical_serialization(const ChatRequest& request);
std::string canonical_serialization(const EmbeddingRequest& request);

std::string cache_key(const ChatRequest& request);
std::string cache_key(const EmbeddingRequest& request);

}  // namespace empathy::llm
