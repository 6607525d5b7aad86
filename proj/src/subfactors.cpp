#include "empathy/subfactors.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "empathy/common.hpp"
#include "empathy/concurrency.hpp"
#include "empathy/hash.hpp"
#include "empathy/llm/parse.hpp"
#include "empathy/llm/prompts.hpp"
#include "empathy/text.hpp"

namespace empathy {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Registry

std::string_view to_string(EmpathyDimension d) {
  switch (d) {
    case EmpathyDimension::cognitive: return "cognitive";
    case EmpathyDimension::affective: return "affective";
    case EmpathyDimension::compassionate: return "compassionate";
  }
  return "cognitive";
}

std::string_view display_name(EmpathyDimension d) {
  switch (d) {
    case EmpathyDimension::cognitive: return "Cognitive Empathy";
    case EmpathyDimension::affective: return "Affective (Emotional) Empathy";
    case EmpathyDimension::compassionate: return "Compassionate Empathy";
  }
  return "Cognitive Empathy";
}

EmpathyDimension parse_dimension(std::string_view raw) {
  const auto s = text::canonical_name(raw);
  for (auto d : kDimensions) {
    if (s.starts_with(to_string(d))) return d;
  }
  if (s.starts_with("emotional")) return EmpathyDimension::affective;
  throw DataError("unknown empathy dimension: '" + std::string(raw) + "'");
}

std::string_view to_string(RegistryVersion v) {
  switch (v) {
    case RegistryVersion::V1: return "V1";
    case RegistryVersion::V2: return "V2";
    case RegistryVersion::custom: return "custom";
  }
  return "custom";
}

RegistryVersion parse_registry_version(std::string_view raw) {
  const auto s = text::canonical_name(raw);
  if (s == "v1") return RegistryVersion::V1;
  if (s == "v2") return RegistryVersion::V2;
  if (s == "custom") return RegistryVersion::custom;
  throw DataError("unknown registry version: '" + std::string(raw) + "'");
}

SubfactorRegistry::SubfactorRegistry(RegistryVersion version, std::vector<SubfactorDefinition> subfactors,
                                     std::string provenance)
    : version_(version), provenance_(std::move(provenance)) {
  std::set<std::string> seen;
  std::array<std::size_t, 3> per_dim{};
  for (const auto& sf : subfactors) {
    const auto canon = text::canonical_name(sf.name);
    if (canon.empty()) throw DataError("subfactor with an empty name");
    if (text::trim(sf.definition).empty()) throw DataError("subfactor '" + sf.name + "' has an empty definition");
    if (!seen.insert(canon).second) throw DataError("duplicate subfactor name: '" + sf.name + "'");
    ++per_dim[static_cast<std::size_t>(sf.dimension)];
  }
  if (subfactors.empty() || per_dim[0] != per_dim[1] || per_dim[1] != per_dim[2]) {
    throw DataError("subfactor registry needs the same non-zero number of subfactors per dimension (got " +
                    std::to_string(per_dim[0]) + "/" + std::to_string(per_dim[1]) + "/" +
                    std::to_string(per_dim[2]) + ")");
  }
  // dimension-major, declared order within each dimension
  std::stable_sort(subfactors.begin(), subfactors.end(),
                   [](const auto& a, const auto& b) { return a.dimension < b.dimension; });
  subfactors_ = std::move(subfactors);
}

void SubfactorRegistry::require_standard() const {
  if (subfactors_.size() != kStandardSize) {
    throw PreconditionError("subfactor registry must hold exactly 15 subfactors (has " +
                            std::to_string(subfactors_.size()) + ")");
  }
}

std::vector<std::string> SubfactorRegistry::column_names() const {
  std::vector<std::string> names;
  names.reserve(subfactors_.size());
  for (const auto& sf : subfactors_) names.push_back(text::to_lower(text::column_name(sf.name)));
  return names;
}

ordered_json SubfactorRegistry::to_json() const {
  ordered_json doc;
  doc["version"] = std::string(to_string(version_));
  doc["provenance"] = provenance_;
  ordered_json dims = ordered_json::object();
  for (auto d : kDimensions) {
    ordered_json list = ordered_json::array();
    for (const auto& sf : subfactors_) {
      if (sf.dimension != d) continue;
      ordered_json entry;
      entry["name"] = sf.name;
      entry["definition"] = sf.definition;
      list.push_back(std::move(entry));
    }
    dims[std::string(to_string(d))] = std::move(list);
  }
  doc["dimensions"] = std::move(dims);
  return doc;
}

SubfactorRegistry SubfactorRegistry::from_json(const json& doc) {
  try {
    const auto version = parse_registry_version(doc.at("version").get<std::string>());
    const auto provenance = doc.value("provenance", std::string());
    std::vector<SubfactorDefinition> subfactors;
    const auto& dims = doc.at("dimensions");
    if (!dims.is_object() || dims.size() != 3) throw DataError("registry must list exactly three dimensions");
    for (auto d : kDimensions) {
      const auto key = std::string(to_string(d));
      if (!dims.contains(key)) throw DataError("registry is missing dimension '" + key + "'");
      for (const auto& entry : dims.at(key)) {
        subfactors.push_back({entry.at("name").get<std::string>(), entry.at("definition").get<std::string>(), d});
      }
    }
    return SubfactorRegistry(version, std::move(subfactors), provenance);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed subfactor registry: ") + e.what());
  }
}

std::string SubfactorRegistry::content_hash() const { return sha256_hex(to_json().dump()); }

SubfactorRegistry load_registry(RegistryVersion expected, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("registry file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("registry file " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto& dims = doc.contains("dimensions") ? doc["dimensions"] : json();
  if (dims.is_object()) {
    for (auto it = dims.begin(); it != dims.end(); ++it) {
      if (it.value().size() != SubfactorRegistry::kPerDimension) {
        throw DataError("registry " + path.string() + ": dimension '" + it.key() + "' has " +
                        std::to_string(it.value().size()) + " subfactors, expected 5");
      }
    }
  }
  auto registry = SubfactorRegistry::from_json(doc);
  registry.require_standard();
  if (expected != RegistryVersion::custom && registry.version() != expected) {
    throw DataError("registry " + path.string() + " is version " + std::string(to_string(registry.version())) +
                    ", expected " + std::string(to_string(expected)));
  }
  return registry;
}

void save_registry(const SubfactorRegistry& registry, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write registry: " + path.string());
  out << registry.to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Elicitation

llm::ChatRequest build_elicitation_prompt(std::span<const DialogueTriplet> sample, int round,
                                          const ElicitationOptions& options) {
  if (sample.empty()) throw PreconditionError("elicitation needs a non-empty corpus sample");
  const auto n = std::to_string(options.per_dimension);
  llm::ChatRequest req;
  req.model_id = options.model_id;
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  req.seed_hint = round;
  req.system_text =
      "Empathy has three dimensions: Cognitive Empathy, Affective (Emotional) Empathy, and Compassionate "
      "Empathy. You are given dialogues, each with a situation context, a speaker utterance, a response, and "
      "the empathy score that human raters gave the response (1 = bad, 2 = okay, 3 = good). Based on these "
      "dialogues and their scores, recommend " + n + " subfactors for each dimension of empathy that determine how "
      "empathetic a response is. Give every subfactor a short name and a one to three sentence definition.\n\n"
      "Reply with only a JSON object of the form {\"cognitive\": [{\"name\": \"...\", \"definition\": \"...\"}], "
      "\"affective\": [...], \"compassionate\": [...]} with exactly " + n + " subfactors per dimension.";
  std::string user;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (i) user += "\n\n";
    user += "dialogue " + std::to_string(i + 1) + " (human score: " +
            std::to_string(sample[i].human_score.value()) + ")\n" + llm::format_dialogue(sample[i]);
  }
  req.user_text = std::move(user);
  return req;
}

CandidateSet parse_candidate_set(std::string_view text_in, int round, std::size_t per_dimension) {
  const auto block = llm::find_json_object(text_in);
  if (!block) throw llm::ParseError("round " + std::to_string(round) + ": no JSON object in elicitation output");
  const auto doc = json::parse(*block);
  CandidateSet set;
  set.round = round;
  std::array<bool, 3> seen{};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    EmpathyDimension dim;
    try {
      dim = parse_dimension(it.key());
    } catch (const DataError&) {
      continue;
    }
    if (!it.value().is_array()) {
      throw llm::ParseError("round " + std::to_string(round) + ": dimension '" + it.key() + "' is not a list");
    }
    auto& list = set.by_dimension[static_cast<std::size_t>(dim)];
    for (const auto& entry : it.value()) {
      if (list.size() == per_dimension) break;
      if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
        throw llm::ParseError("round " + std::to_string(round) + ": malformed subfactor entry");
      }
      SubfactorDefinition sf;
      sf.name = text::trim(entry["name"].get<std::string>());
      sf.definition = entry.contains("definition") && entry["definition"].is_string()
                          ? text::trim(entry["definition"].get<std::string>())
                          : std::string();
      sf.dimension = dim;
      if (sf.name.empty()) throw llm::ParseError("round " + std::to_string(round) + ": empty subfactor name");
      list.push_back(std::move(sf));
    }
    seen[static_cast<std::size_t>(dim)] = true;
  }
  for (auto d : kDimensions) {
    const auto& list = set.by_dimension[static_cast<std::size_t>(d)];
    if (!seen[static_cast<std::size_t>(d)] || list.size() < per_dimension) {
      throw llm::ParseError("round " + std::to_string(round) + ": dimension '" + std::string(to_string(d)) +
                            "' has " + std::to_string(list.size()) + " subfactors, expected " +
                            std::to_string(per_dimension));
    }
  }
  return set;
}

ElicitationResult elicit_candidates(llm::Gateway& gateway, std::span<const DialogueTriplet> corpus_sample, int rounds,
                                    const ElicitationOptions& options) {
  if (rounds < 1) throw PreconditionError("elicitation needs rounds >= 1");
  if (corpus_sample.empty()) throw PreconditionError("elicitation needs a non-empty corpus sample");

  std::vector<std::optional<CandidateSet>> parsed(static_cast<std::size_t>(rounds));
  std::vector<std::string> errors(static_cast<std::size_t>(rounds));
  run_bounded(parsed.size(), gateway.config().max_in_flight, [&](std::size_t i) {
    const int round = static_cast<int>(i) + 1;
    const auto response = gateway.complete(build_elicitation_prompt(corpus_sample, round, options));
    try {
      parsed[i] = parse_candidate_set(response.text, round, options.per_dimension);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  ElicitationResult result;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i]) {
      result.sets.push_back(std::move(*parsed[i]));
    } else {
      result.failures.push_back(errors[i]);
    }
  }
  return result;
}

SubfactorRegistry select_recurring(std::span<const CandidateSet> candidates, std::size_t per_dimension,
                                   RegistryVersion version, std::string provenance) {
  if (candidates.empty()) throw PreconditionError("select_recurring needs at least one candidate set");
  if (per_dimension < 1) throw PreconditionError("select_recurring needs per_dimension >= 1");

  std::vector<SubfactorDefinition> selected;
  std::set<std::string> taken;
  for (auto dim : kDimensions) {
    struct Tally {
      std::size_t rounds = 0;
      int latest_round = -1;
      std::string definition;
    };
    std::map<std::string, Tally> tally;
    for (const auto& set : candidates) {
      std::set<std::string> in_this_round;
      for (const auto& sf : set.by_dimension[static_cast<std::size_t>(dim)]) {
        const auto canon = text::canonical_name(sf.name);
        if (canon.empty()) continue;
        auto& t = tally[canon];
        if (in_this_round.insert(canon).second) ++t.rounds;
        if (set.round >= t.latest_round) {
          // equal round index: first mention within that round wins
          if (set.round > t.latest_round || t.definition.empty()) t.definition = sf.definition;
          t.latest_round = set.round;
        }
      }
    }
    std::vector<std::pair<std::string, Tally>> ranked(tally.begin(), tally.end());
    std::erase_if(ranked, [&](const auto& entry) { return taken.contains(entry.first); });
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.rounds != b.second.rounds) return a.second.rounds > b.second.rounds;
      return a.first < b.first;
    });
    if (ranked.size() < per_dimension) {
      throw DataError("dimension '" + std::string(to_string(dim)) + "' has only " + std::to_string(ranked.size()) +
                      " distinct candidate names, need " + std::to_string(per_dimension));
    }
    for (std::size_t k = 0; k < per_dimension; ++k) {
      taken.insert(ranked[k].first);
      selected.push_back({ranked[k].first, ranked[k].second.definition, dim});
    }
  }
  return SubfactorRegistry(version, std::move(selected), std::move(provenance));
}

}  // namespace empathy
