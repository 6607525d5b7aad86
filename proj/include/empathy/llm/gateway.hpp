#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empathy/common.hpp"
#include "empathy/llm/cache.hpp"
#include "empathy/llm/request.hpp"
#include "empathy/llm/transport.hpp"

namespace empathy::llm {

enum class BackendMode {
  live,     ///< cache first, then the HTTP provider; new exchanges are cached
  offline,  ///< cache only; a miss is an error
  mock,     ///< cache first, then the fixture directory; a missing fixture is an error
};

std::string_view to_string(BackendMode mode);
BackendMode parse_backend_mode(std::string_view text);

struct BackendConfig {
  BackendMode mode = BackendMode::offline;
  std::filesystem::path cache_dir;
  std::filesystem::path fixture_dir;
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 4;
  double initial_backoff_ms = 500.0;
  double max_backoff_ms = 16000.0;
  double requests_per_minute = 500.0;
  int max_in_flight = 8;
};

/// Token bucket refilled continuously at rate/60 tokens per second, holding
/// at most `burst` tokens.
class TokenBucket {
public:
  using Clock = std::chrono::steady_clock;

  TokenBucket(double requests_per_minute, double burst);

  /// Takes a token if available at `now`; otherwise returns the wait until one is.
  std::optional<Clock::duration> try_acquire(Clock::time_point now);
  /// Blocks until a token is available.
  void acquire();

private:
  std::mutex mutex_;
  double rate_per_sec_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
};

/// Delay before retry `attempt` (0-based): initial * 2^attempt, capped.
std::chrono::milliseconds backoff_delay(int attempt, double initial_ms, double max_ms);

struct GatewayStats {
  std::size_t live_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t mock_hits = 0;
  std::size_t retries = 0;
};

/// Front door for every model call: resolves requests from the cache, a mock
/// fixture table, or the live provider, and records new live exchanges.
/// Safe for concurrent use.
class Gateway {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// In live mode a null transport means "build an HttpTransport from config".
  explicit Gateway(BackendConfig config, std::shared_ptr<Transport> transport = nullptr);

  ChatResponse complete(const ChatRequest& request);
  EmbeddingResponse embed(const EmbeddingRequest& request);

  struct Outcome {
    std::optional<ChatResponse> response;
    std::string error;
  };
  /// Runs requests with at most max_in_flight concurrent calls. Results are
  /// positionally aligned with the input.
  std::vector<Outcome> complete_all(std::span<const ChatRequest> requests);

  GatewayStats stats() const;
  const BackendConfig& config() const { return config_; }

  /// Replaces the backoff sleep, e.g. with a no-op in tests.
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

private:
  template <typename Fn>
  auto with_retries(Fn&& call) -> decltype(call());

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  std::optional<CacheStore> cache_;
  std::optional<CacheStore> fixtures_;
  TokenBucket bucket_;
  Sleeper sleeper_;

  std::atomic<std::size_t> live_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> mock_hits_{0};
  std::atomic<std::size_t> retries_{0};
};

}  // namespace empathy::llm
