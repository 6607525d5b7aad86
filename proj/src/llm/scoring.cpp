#include "empathy/llm/scoring.hpp"

#include "empathy/concurrency.hpp"
#include "empathy/llm/parse.hpp"

namespace empathy::llm {

ChatRequest retry_variant(const ChatRequest& base, int attempt) {
  ChatRequest req = base;
  if (attempt > 0) req.seed_hint = attempt;
  return req;
}

EmpathyScoreOutcome score_empathy(Gateway& gateway, const ChatRequest& base, int retry_budget) {
  EmpathyScoreOutcome out;
  for (int attempt = 0; attempt <= retry_budget; ++attempt) {
    const auto response = gateway.complete(retry_variant(base, attempt));
    out.attempts = attempt + 1;
    out.last_text = response.text;
    if (auto label = try_parse_empathy_score(response.text)) {
      out.label = label;
      return out;
    }
  }
  return out;
}

SubfactorScoreOutcome score_subfactors(Gateway& gateway, const ChatRequest& base, const SubfactorRegistry& registry,
                                       int retry_budget) {
  SubfactorScoreOutcome out;
  for (int attempt = 0; attempt <= retry_budget; ++attempt) {
    const auto response = gateway.complete(retry_variant(base, attempt));
    out.attempts = attempt + 1;
    try {
      auto parsed = parse_subfactor_scores(response.text, registry);
      out.scores = std::move(parsed.scores);
      out.warnings = std::move(parsed.warnings);
      out.error.clear();
      return out;
    } catch (const ParseError& e) {
      out.error = e.what();
    }
  }
  return out;
}

std::vector<EmpathyScoreOutcome> score_empathy_batch(Gateway& gateway, std::span<const ChatRequest> requests,
                                                     int retry_budget) {
  std::vector<EmpathyScoreOutcome> out(requests.size());
  run_bounded(requests.size(), gateway.config().max_in_flight,
              [&](std::size_t i) { out[i] = score_empathy(gateway, requests[i], retry_budget); });
  return out;
}

std::vector<SubfactorScoreOutcome> score_subfactors_batch(Gateway& gateway, std::span<const ChatRequest> requests,
                                                          const SubfactorRegistry& registry, int retry_budget) {
  std::vector<SubfactorScoreOutcome> out(requests.size());
  run_bounded(requests.size(), gateway.config().max_in_flight,
              [&](std::size_t i) { out[i] = score_subfactors(gateway, requests[i], registry, retry_budget); });
  return out;
}

}  // namespace empathy::llm
