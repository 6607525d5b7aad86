#include "empathy/llm/prompts.hpp"

#include <algorithm>

#include "empathy/text.hpp"

namespace empathy::llm {

namespace {

constexpr std::string_view kSituationLabel = "situation context:\n";
constexpr std::string_view kUtteranceLabel = "\n\nspeaker utterance:\n";
constexpr std::string_view kResponseLabel = "\n\nresponse:\n";

std::string grouped_subfactors(const SubfactorRegistry& registry) {
  std::string out;
  for (auto dim : kDimensions) {
    out += std::string(display_name(dim)) + ":\n";
    for (const auto& sf : registry.subfactors()) {
      if (sf.dimension != dim) continue;
      out += "- " + sf.name + ": " + sf.definition + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string format_dialogue(const DialogueTriplet& t) {
  std::string out;
  out.reserve(t.situation.size() + t.utterance.size() + t.response.size() + 64);
  out += kSituationLabel;
  out += t.situation;
  out += kUtteranceLabel;
  out += t.utterance;
  out += kResponseLabel;
  out += t.response;
  return out;
}

std::optional<DialogueText> parse_dialogue(std::string_view s) {
  if (!s.starts_with(kSituationLabel)) return std::nullopt;
  s.remove_prefix(kSituationLabel.size());
  const auto u = s.find(kUtteranceLabel);
  if (u == std::string_view::npos) return std::nullopt;
  // Search for the response label after the utterance label only.
  const auto r = s.find(kResponseLabel, u + kUtteranceLabel.size());
  if (r == std::string_view::npos) return std::nullopt;
  DialogueText d;
  d.situation = std::string(s.substr(0, u));
  d.utterance = std::string(s.substr(u + kUtteranceLabel.size(), r - u - kUtteranceLabel.size()));
  d.response = std::string(s.substr(r + kResponseLabel.size()));
  return d;
}

std::string naive_system_text() { return std::string(kNaiveInstruction) + "\n\n" + std::string(kScoreOnlyInstruction); }

ChatRequest build_naive_prompt(const DialogueTriplet& triplet, const PromptOptions& options) {
  ChatRequest req;
  req.model_id = options.model_id;
  req.system_text = naive_system_text();
  req.user_text = format_dialogue(triplet);
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  return req;
}

ChatRequest build_subfactor_enhanced_prompt(const DialogueTriplet& triplet, const SubfactorRegistry& registry,
                                            const PromptOptions& options) {
  registry.require_standard();
  ChatRequest req = build_naive_prompt(triplet, options);
  req.system_text = std::string(kNaiveInstruction) +
                    "\n\nWhen judging empathy, consider the following 15 subfactors, grouped under the three "
                    "dimensions of empathy.\n\n" +
                    grouped_subfactors(registry) + std::string(kScoreOnlyInstruction);
  return req;
}

ChatRequest build_subfactor_scoring_prompt(const DialogueTriplet& triplet, const SubfactorRegistry& registry,
                                           const PromptOptions& options) {
  registry.require_standard();
  ChatRequest req;
  req.model_id = options.model_id;
  req.temperature = options.temperature;
  req.max_output_tokens = std::max(options.max_output_tokens, 400);
  req.system_text =
      "You are given a situation context, a speaker utterance, and a response to the speaker utterance in the "
      "situation context. Rate each of the following 15 subfactors of empathy on a scale from 1 to 10, where a "
      "score of 1 means the subfactor is not found in the response and a score of 10 means the subfactor is "
      "extremely prevalent in the dialogue.\n\n" +
      grouped_subfactors(registry) +
      "Reply with only a JSON object whose keys are the 15 subfactor names exactly as listed above and whose "
      "values are integers from 1 to 10.";
  req.user_text = format_dialogue(triplet);
  return req;
}

std::string embedding_input(const DialogueTriplet& t, bool response_only) {
  if (response_only) return t.response;
  return "Situation: " + t.situation + "\nSpeaker: " + t.utterance + "\nResponse: " + t.response;
}

}  // namespace empathy::llm
