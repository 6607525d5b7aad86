#include "synthetic_llm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <nlohmann/json.hpp>

#include "empathy/hash.hpp"
#include "empathy/llm/prompts.hpp"
#include "empathy/rng.hpp"
#include "empathy/text.hpp"

namespace empathy::tools {

using nlohmann::ordered_json;

namespace {

struct Candidate {
  const char* name;
  const char* definition;
};

// Ordered by how often the judge proposes them.
const std::array<std::array<Candidate, 8>, 3> kPool = {{
    {{{"Perspective Taking", "Understanding the situation from the speaker's point of view."},
      {"Situational Understanding", "Grasping the circumstances described in the situation context."},
      {"Accurate Reflection", "Restating the speaker's meaning without distortion."},
      {"Recognition of Needs", "Identifying what the speaker needs from the conversation."},
      {"Clarifying Inquiry", "Asking questions that help the speaker elaborate."},
      {"Contextual Awareness", "Relating the reply to details the speaker mentioned."},
      {"Cognitive Flexibility", "Considering more than one interpretation of the speaker's feelings."},
      {"Insightfulness", "Offering an observation that deepens the speaker's self-understanding."}}},
    {{{"Emotional Validation", "Acknowledging the speaker's feelings as legitimate."},
      {"Emotional Resonance", "Conveying that the responder shares or feels the speaker's emotion."},
      {"Warmth", "A kind and caring tone."},
      {"Sensitivity", "Avoiding language that could hurt or dismiss the speaker."},
      {"Emotional Labeling", "Naming the emotion the speaker is likely experiencing."},
      {"Sympathy Expression", "Expressing sorrow or concern for the speaker."},
      {"Tone Matching", "Matching the emotional intensity of the speaker."},
      {"Presence", "Signalling full attention to the speaker."}}},
    {{{"Supportiveness", "Offering help or encouragement."},
      {"Actionable Guidance", "Suggesting concrete and respectful next steps."},
      {"Encouragement", "Motivating the speaker and affirming their strengths."},
      {"Reassurance", "Reducing the speaker's worry where appropriate."},
      {"Respect for Autonomy", "Leaving decisions to the speaker."},
      {"Commitment to Help", "Offering continued availability."},
      {"Hopefulness", "Pointing toward a better outcome."},
      {"Practical Kindness", "Proposing a small, caring action."}}},
}};

const char* kDimensionKeys[] = {"cognitive", "affective", "compassionate"};

std::uint64_t key_hash(std::initializer_list<std::string_view> parts) {
  std::string joined;
  for (auto p : parts) {
    joined += p;
    joined += '\x1f';
  }
  return hash64(joined);
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::string phrase(int label, std::uint64_t h) {
  const auto n = std::to_string(label);
  switch (h % 8) {
    case 0: return n;
    case 1: return "Score: " + n;
    case 2: return "I would rate this response a " + n + ".";
    case 3: return "**" + n + "**";
    case 4: return n + "\n\nThe response is " + (label == 3 ? "good." : label == 2 ? "okay." : "bad.");
    case 5: return "Rating: " + n;
    case 6: return "The score is " + n + " out of 3.";
    default: return n + ".";
  }
}

std::vector<std::string> listed_names(const std::string& system_text) {
  std::vector<std::string> names;
  for (const auto& line : text::split(system_text, '\n')) {
    if (!line.starts_with("- ")) continue;
    const auto colon = line.find(": ");
    if (colon != std::string::npos) names.push_back(line.substr(2, colon - 2));
  }
  return names;
}

}  // namespace

SyntheticLlm::SyntheticLlm(std::span<const DialogueTriplet> corpus) {
  for (const auto& t : corpus) truth_[text::normalize_whitespace(t.response)] = t.human_score.value();
}

int SyntheticLlm::truth_for(const std::string& response) const {
  const auto it = truth_.find(text::normalize_whitespace(response));
  if (it != truth_.end()) return it->second;
  return 1 + static_cast<int>(hash64(response) % 3);
}

double SyntheticLlm::agreement(const llm::ChatRequest& request) {
  double p = 0.45;
  if (request.model_id.starts_with("ft:")) {
    p = 0.6;
  } else if (request.model_id == "gpt-4o") {
    p = 0.5;
  }
  if (request.system_text.find("consider the following 15 subfactors") != std::string::npos) p += 0.08;
  return p;
}

std::string SyntheticLlm::score_empathy(const llm::ChatRequest& request, const std::string& response) const {
  const int truth = truth_for(response);
  const auto attempt = std::to_string(request.seed_hint.value_or(0));
  const auto h = key_hash({request.model_id, request.system_text, response, attempt});
  if (!request.seed_hint && h % 11 == 0) return "I am not able to give a definitive rating for this exchange.";
  const auto base = key_hash({request.model_id, request.system_text, response});
  int label = truth;
  if (unit(base) >= agreement(request)) {
    const int offset = 1 + static_cast<int>((base >> 7) % 2);
    label = 1 + (truth - 1 + offset) % 3;
  }
  return phrase(label, h >> 17);
}

std::string SyntheticLlm::score_subfactors(const llm::ChatRequest& request, const std::string& response) const {
  const int truth = truth_for(response);
  const auto names = listed_names(request.system_text);
  const auto attempt = std::to_string(request.seed_hint.value_or(0));
  const auto h = key_hash({request.model_id, request.system_text, response, attempt});
  const bool truncated = !request.seed_hint && h % 13 == 0;
  ordered_json obj = ordered_json::object();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (truncated && i + 1 == names.size()) break;
    const auto nh = key_hash({names[i]});
    Rng rng(key_hash({request.model_id, names[i], response}));
    double value;
    if (nh % 3 != 0) {
      const double strength = 1.0 + static_cast<double>(nh % 7) / 4.0;
      value = 5.5 + strength * (truth - 2) + 1.6 * rng.normal();
    } else {
      value = 1.0 + static_cast<double>(rng.below(10));
    }
    int v = static_cast<int>(std::lround(value));
    if (key_hash({names[i], response, "spill"}) % 41 != 0) v = std::clamp(v, 1, 10);
    obj[names[i]] = v;
  }
  const auto body = obj.dump();
  switch ((h >> 9) % 3) {
    case 0: return body;
    case 1: return "```json\n" + obj.dump(2) + "\n```";
    default: return "Here are the scores:\n" + body;
  }
}

std::string SyntheticLlm::elicit(const llm::ChatRequest& request) const {
  const int round = static_cast<int>(request.seed_hint.value_or(1));
  ordered_json out = ordered_json::object();
  for (std::size_t d = 0; d < kPool.size(); ++d) {
    Rng rng(mix_seed(0xE11C, static_cast<std::uint64_t>(round), d));
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < kPool[d].size(); ++i) {
      keyed.emplace_back(static_cast<double>(i) + 3.0 * rng.uniform(), i);
    }
    std::sort(keyed.begin(), keyed.end());
    ordered_json list = ordered_json::array();
    for (std::size_t j = 0; j < 5; ++j) {
      const auto& c = kPool[d][keyed[j].second];
      list.push_back({{"name", c.name}, {"definition", c.definition}});
    }
    out[kDimensionKeys[d]] = list;
  }
  return out.dump(2);
}

std::string SyntheticLlm::chat(const llm::ChatRequest& request) {
  if (request.system_text.find("recommend") != std::string::npos &&
      request.system_text.find("subfactors for each dimension") != std::string::npos) {
    return elicit(request);
  }
  const auto dialogue = llm::parse_dialogue(request.user_text);
  if (!dialogue) throw DataError("synthetic judge: unrecognized request layout");
  if (request.system_text.find("Rate each of the following") != std::string::npos) {
    return score_subfactors(request, dialogue->response);
  }
  return score_empathy(request, dialogue->response);
}

std::vector<double> SyntheticLlm::embed(const llm::EmbeddingRequest& request) {
  std::size_t dim = 1536;
  const std::string prefix = "mock-embedding-";
  if (request.model_id.starts_with(prefix)) dim = std::stoul(request.model_id.substr(prefix.size()));
  const auto marker = request.input.rfind("Response: ");
  const auto response = marker == std::string::npos ? request.input : request.input.substr(marker + 10);
  const int truth = truth_for(response);
  Rng rng(key_hash({request.model_id, request.input}));
  std::vector<double> v(dim);
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = rng.normal() + (i < 4 ? 0.8 * (truth - 2) * (i % 2 ? -1.0 : 1.0) : 0.0);
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace empathy::tools
