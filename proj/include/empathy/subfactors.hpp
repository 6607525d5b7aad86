#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/llm/gateway.hpp"
#include "empathy/llm/request.hpp"
#include "empathy/registry.hpp"

namespace empathy {

/// One elicitation round's answer: recommended subfactors per dimension.
struct CandidateSet {
  int round = 0;
  std::array<std::vector<SubfactorDefinition>, 3> by_dimension;
};

struct ElicitationOptions {
  std::string model_id = "gpt-4o";
  double temperature = 1.0;
  int max_output_tokens = 1500;
  std::size_t per_dimension = SubfactorRegistry::kPerDimension;
};

/// Prompt for round `round` (1-based). The round index is carried in
/// seed_hint so every round is a distinct cache entry.
llm::ChatRequest build_elicitation_prompt(std::span<const DialogueTriplet> sample, int round,
                                          const ElicitationOptions& options = {});

/// Parses {"cognitive": [{"name":..,"definition":..}, ...], "affective": ..., "compassionate": ...}.
/// Extra entries beyond per_dimension are dropped; fewer is a ParseError.
CandidateSet parse_candidate_set(std::string_view text, int round, std::size_t per_dimension);

struct ElicitationResult {
  std::vector<CandidateSet> sets;        ///< ordered by round
  std::vector<std::string> failures;     ///< one message per skipped round
};

/// Issues `rounds` elicitation prompts grounded in the sample dialogues and
/// their human scores. Unparseable rounds are recorded and skipped.
ElicitationResult elicit_candidates(llm::Gateway& gateway, std::span<const DialogueTriplet> corpus_sample, int rounds,
                                    const ElicitationOptions& options = {});

/// Per dimension, counts in how many rounds each canonical name (lowercased,
/// trimmed, whitespace-collapsed) appears and keeps the top `per_dimension`
/// by count, ties going to the lexicographically smaller name. A name's
/// definition comes from the highest-numbered round that mentions it. A name
/// already taken by an earlier dimension is skipped.
SubfactorRegistry select_recurring(std::span<const CandidateSet> candidates, std::size_t per_dimension,
                                   RegistryVersion version = RegistryVersion::custom, std::string provenance = {});

}  // namespace empathy
