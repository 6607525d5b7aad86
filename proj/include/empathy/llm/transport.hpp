#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "empathy/common.hpp"
#include "empathy/llm/request.hpp"

namespace empathy::llm {

/// A failure worth retrying: timeouts, connection resets, HTTP 429 and 5xx.
class TransientError : public BackendError {
public:
  using BackendError::BackendError;
};

/// Raw access to a model provider. Implementations do no caching or retrying;
/// Gateway layers both on top.
class Transport {
public:
  virtual ~Transport() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual std::vector<double> embed(const EmbeddingRequest& request) = 0;
};

struct HttpEndpoint {
  /// e.g. "https://api.openai.com/v1"
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  double timeout_s = 60.0;
};

struct BaseUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash, may be empty
};

BaseUrl split_base_url(std::string_view url);

/// Reads the credential from the named environment variable. Throws BackendError if unset.
std::string api_key_from_env(const std::string& variable);

/// OpenAI-compatible chat-completions and embeddings client.
class HttpTransport final : public Transport {
public:
  explicit HttpTransport(HttpEndpoint endpoint);

  std::string chat(const ChatRequest& request) override;
  std::vector<double> embed(const EmbeddingRequest& request) override;

private:
  std::string post_json(const std::string& path, const std::string& body);

  HttpEndpoint endpoint_;
  BaseUrl url_;
};

}  // namespace empathy::llm
