#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "empathy/llm/request.hpp"

namespace empathy::llm {

/// One file per exchange, named `<hex key>.json`, holding the canonical
/// request, the response and metadata. Mock fixture directories use the
/// identical layout. Writes go to a temp file that is renamed into place, so
/// concurrent writers of the same key never expose a partial entry.
class CacheStore {
public:
  explicit CacheStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::string> find_chat(const ChatRequest& request) const;
  std::optional<std::vector<double>> find_embedding(const EmbeddingRequest& request) const;

  void store_chat(const ChatRequest& request, const ChatResponse& response) const;
  void store_embedding(const EmbeddingRequest& request, const EmbeddingResponse& response) const;

  bool contains(const std::string& key) const;
  std::filesystem::path path_for(const std::string& key) const;
  std::size_t size() const;

private:
  void write_atomic(const std::string& key, const std::string& body) const;

  std::filesystem::path dir_;
};

}  // namespace empathy::llm
