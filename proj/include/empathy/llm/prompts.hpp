#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "empathy/corpus.hpp"
#include "empathy/llm/request.hpp"
#include "empathy/registry.hpp"

namespace empathy::llm {

/// The baseline scoring instruction, word for word.
inline constexpr std::string_view kNaiveInstruction =
    "You are given a situation context, a speaker utterance, and a response to the speaker utterance in "
    "the situation context. Please score the response on a scale of 1 to 3, where a score of 1 means a bad "
    "empathetic response, a score of 2 means an okay empathetic response, and a score of 3 means a good "
    "empathetic response.";

inline constexpr std::string_view kScoreOnlyInstruction = "Reply with only the integer score (1, 2, or 3).";

struct PromptOptions {
  std::string model_id = "gpt-4o-mini";
  double temperature = 0.0;
  int max_output_tokens = 8;
};

/// The labelled dialogue block sent as the user message. Section labels are
/// lowercase so that the dialogue text is the only capitalised content.
std::string format_dialogue(const DialogueTriplet& triplet);

struct DialogueText {
  std::string situation;
  std::string utterance;
  std::string response;
};
/// Inverse of format_dialogue; nullopt if the text is not in that layout.
std::optional<DialogueText> parse_dialogue(std::string_view user_text);

/// System message of the naive prompt (instruction + output format).
std::string naive_system_text();

ChatRequest build_naive_prompt(const DialogueTriplet& triplet, const PromptOptions& options = {});

/// Naive instruction extended with the 15 subfactors and their definitions,
/// grouped under the three empathy dimensions. Throws PreconditionError
/// unless the registry is standard-sized.
ChatRequest build_subfactor_enhanced_prompt(const DialogueTriplet& triplet, const SubfactorRegistry& registry,
                                            const PromptOptions& options = {});

/// Asks for a JSON object mapping every subfactor name to an integer 1-10.
/// max_output_tokens is raised to fit the object.
ChatRequest build_subfactor_scoring_prompt(const DialogueTriplet& triplet, const SubfactorRegistry& registry,
                                           const PromptOptions& options = {});

/// Input text for the embedding model: "Situation: ...\nSpeaker: ...\nResponse: ...",
/// or the response alone when response_only is set.
std::string embedding_input(const DialogueTriplet& triplet, bool response_only = false);

}  // namespace empathy::llm
