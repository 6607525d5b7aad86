#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/llm/transport.hpp"

namespace empathy::tools {

/// Deterministic stand-in for a model provider. It knows the human labels of
/// the corpus it was built from and answers like a noisy judge: the chance of
/// agreeing with the human label depends on the model id and prompt. Replies
/// are a pure function of the request, so regenerated fixtures are stable.
///
/// Handles empathy scoring (naive and subfactor-enhanced prompts, fine-tuned
/// model ids), subfactor scoring, subfactor elicitation, and embeddings for
/// "mock-embedding-<dim>" models.
class SyntheticLlm final : public llm::Transport {
public:
  explicit SyntheticLlm(std::span<const DialogueTriplet> corpus);

  std::string chat(const llm::ChatRequest& request) override;
  std::vector<double> embed(const llm::EmbeddingRequest& request) override;

  /// Probability that an empathy score agrees with the human label.
  static double agreement(const llm::ChatRequest& request);

private:
  int truth_for(const std::string& response) const;
  std::string score_empathy(const llm::ChatRequest& request, const std::string& response) const;
  std::string score_subfactors(const llm::ChatRequest& request, const std::string& response) const;
  std::string elicit(const llm::ChatRequest& request) const;

  std::map<std::string, int> truth_;
};

}  // namespace empathy::tools
