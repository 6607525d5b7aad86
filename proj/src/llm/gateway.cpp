#include "empathy/llm/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "empathy/text.hpp"

namespace empathy::llm {

std::string_view to_string(BackendMode mode) {
  switch (mode) {
    case BackendMode::live: return "live";
    case BackendMode::offline: return "offline";
    case BackendMode::mock: return "mock";
  }
  return "offline";
}

BackendMode parse_backend_mode(std::string_view raw) {
  const auto s = text::canonical_name(raw);
  if (s == "live") return BackendMode::live;
  if (s == "offline" || s == "cache") return BackendMode::offline;
  if (s == "mock") return BackendMode::mock;
  throw DataError("unknown backend mode: " + std::string(raw));
}

// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double requests_per_minute, double burst)
    : rate_per_sec_(requests_per_minute / 60.0), burst_(std::max(1.0, burst)), tokens_(burst_), last_(Clock::now()) {
  if (!(requests_per_minute > 0.0)) throw PreconditionError("requests_per_minute must be positive");
}

std::optional<TokenBucket::Clock::duration> TokenBucket::try_acquire(Clock::time_point now) {
  std::lock_guard lock(mutex_);
  if (now > last_) {
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_per_sec_);
    last_ = now;
  }
  if (tokens_ >= 1.0) {
    tokens_ -= 1.0;
    return std::nullopt;
  }
  const double wait_s = (1.0 - tokens_) / rate_per_sec_;
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(wait_s));
}

void TokenBucket::acquire() {
  while (auto wait = try_acquire(Clock::now())) std::this_thread::sleep_for(*wait);
}

std::chrono::milliseconds backoff_delay(int attempt, double initial_ms, double max_ms) {
  const double ms = std::min(max_ms, initial_ms * std::pow(2.0, attempt));
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

// ---------------------------------------------------------------------------

Gateway::Gateway(BackendConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      bucket_(config_.requests_per_minute, std::max(1.0, config_.requests_per_minute / 60.0)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (!config_.cache_dir.empty()) cache_.emplace(config_.cache_dir);
  switch (config_.mode) {
    case BackendMode::live:
      if (!transport_) {
        HttpEndpoint endpoint;
        endpoint.base_url = config_.base_url;
        endpoint.api_key = api_key_from_env(config_.api_key_env);
        endpoint.timeout_s = config_.timeout_s;
        transport_ = std::make_shared<HttpTransport>(std::move(endpoint));
      }
      break;
    case BackendMode::mock:
      if (config_.fixture_dir.empty()) throw PreconditionError("mock backend needs a fixture directory");
      fixtures_.emplace(config_.fixture_dir);
      break;
    case BackendMode::offline:
      if (!cache_) throw PreconditionError("offline backend needs a cache directory");
      break;
  }
}

template <typename Fn>
auto Gateway::with_retries(Fn&& call) -> decltype(call()) {
  for (int attempt = 0;; ++attempt) {
    bucket_.acquire();
    try {
      return call();
    } catch (const TransientError& e) {
      if (attempt >= config_.max_retries) {
        throw BackendError("giving up after " + std::to_string(attempt + 1) + " attempts: " + e.what());
      }
      ++retries_;
      sleeper_(backoff_delay(attempt, config_.initial_backoff_ms, config_.max_backoff_ms));
    }
  }
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  validate(request);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };

  if (cache_) {
    if (auto hit = cache_->find_chat(request)) {
      ++cache_hits_;
      return ChatResponse{std::move(*hit), BackendKind::cache, elapsed_ms()};
    }
  }
  switch (config_.mode) {
    case BackendMode::offline:
      throw BackendError("cache miss in offline mode for key " + cache_key(request));
    case BackendMode::mock: {
      auto hit = fixtures_->find_chat(request);
      if (!hit) throw BackendError("mock fixture missing for key " + cache_key(request));
      ++mock_hits_;
      return ChatResponse{std::move(*hit), BackendKind::mock, elapsed_ms()};
    }
    case BackendMode::live:
      break;
  }
  auto text = with_retries([&] { return transport_->chat(request); });
  ++live_calls_;
  ChatResponse response{std::move(text), BackendKind::live, elapsed_ms()};
  if (cache_) cache_->store_chat(request, response);
  return response;
}

EmbeddingResponse Gateway::embed(const EmbeddingRequest& request) {
  if (text::trim(request.model_id).empty()) throw PreconditionError("embedding request has an empty model id");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };

  if (cache_) {
    if (auto hit = cache_->find_embedding(request)) {
      ++cache_hits_;
      return EmbeddingResponse{std::move(*hit), BackendKind::cache, elapsed_ms()};
    }
  }
  switch (config_.mode) {
    case BackendMode::offline:
      throw BackendError("cache miss in offline mode for key " + cache_key(request));
    case BackendMode::mock: {
      auto hit = fixtures_->find_embedding(request);
      if (!hit) throw BackendError("mock fixture missing for key " + cache_key(request));
      ++mock_hits_;
      return EmbeddingResponse{std::move(*hit), BackendKind::mock, elapsed_ms()};
    }
    case BackendMode::live:
      break;
  }
  auto values = with_retries([&] { return transport_->embed(request); });
  ++live_calls_;
  EmbeddingResponse response{std::move(values), BackendKind::live, elapsed_ms()};
  if (cache_) cache_->store_embedding(request, response);
  return response;
}

std::vector<Gateway::Outcome> Gateway::complete_all(std::span<const ChatRequest> requests) {
  std::vector<Outcome> outcomes(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        outcomes[i].response = complete(requests[i]);
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(std::max(1, config_.max_in_flight), requests.size());
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return outcomes;
}

GatewayStats Gateway::stats() const {
  return GatewayStats{live_calls_.load(), cache_hits_.load(), mock_hits_.load(), retries_.load()};
}

}  // namespace empathy::llm
