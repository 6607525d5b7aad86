#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empathy/llm/gateway.hpp"
#include "empathy/registry.hpp"

namespace empathy::llm {

/// Unparseable outputs are retried this many times before a scoring failure is recorded.
inline constexpr int kDefaultRetryBudget = 3;

/// Retry k (k >= 1) re-issues the request with seed_hint = k, so each retry
/// is its own cache entry and a warmed cache replays the whole sequence.
ChatRequest retry_variant(const ChatRequest& base, int attempt);

struct EmpathyScoreOutcome {
  std::optional<EmpathyLabel> label;  ///< nullopt = scoring failure
  int attempts = 0;
  std::string last_text;
};

EmpathyScoreOutcome score_empathy(Gateway& gateway, const ChatRequest& base, int retry_budget = kDefaultRetryBudget);

struct SubfactorScoreOutcome {
  std::optional<SubfactorVector> scores;
  int attempts = 0;
  std::vector<std::string> warnings;
  std::string error;
};

SubfactorScoreOutcome score_subfactors(Gateway& gateway, const ChatRequest& base, const SubfactorRegistry& registry,
                                       int retry_budget = kDefaultRetryBudget);

/// Scores a batch through the gateway with its bounded concurrency. Transport
/// errors propagate; parse failures become nullopt labels.
std::vector<EmpathyScoreOutcome> score_empathy_batch(Gateway& gateway, std::span<const ChatRequest> requests,
                                                     int retry_budget = kDefaultRetryBudget);
std::vector<SubfactorScoreOutcome> score_subfactors_batch(Gateway& gateway, std::span<const ChatRequest> requests,
                                                          const SubfactorRegistry& registry,
                                                          int retry_budget = kDefaultRetryBudget);

}  // namespace empathy::llm
