#include "empathy/llm/cache.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "empathy/common.hpp"

namespace empathy::llm {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<json> read_entry(const std::filesystem::path& path, const std::string& key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  json entry;
  try {
    entry = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("corrupt cache entry " + path.string() + ": " + e.what());
  }
  if (entry.value("key", "") != key) throw DataError("cache entry key mismatch in " + path.string());
  return entry;
}

}  // namespace

CacheStore::CacheStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path CacheStore::path_for(const std::string& key) const { return dir_ / (key + ".json"); }

bool CacheStore::contains(const std::string& key) const { return std::filesystem::exists(path_for(key)); }

std::size_t CacheStore::size() const {
  if (!std::filesystem::exists(dir_)) return 0;
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    if (e.path().extension() == ".json") ++n;
  }
  return n;
}

std::optional<std::string> CacheStore::find_chat(const ChatRequest& request) const {
  const auto key = cache_key(request);
  const auto entry = read_entry(path_for(key), key);
  if (!entry) return std::nullopt;
  return entry->at("response").at("text").get<std::string>();
}

std::optional<std::vector<double>> CacheStore::find_embedding(const EmbeddingRequest& request) const {
  const auto key = cache_key(request);
  const auto entry = read_entry(path_for(key), key);
  if (!entry) return std::nullopt;
  return entry->at("response").at("embedding").get<std::vector<double>>();
}

void CacheStore::store_chat(const ChatRequest& request, const ChatResponse& response) const {
  ordered_json entry;
  const auto key = cache_key(request);
  entry["key"] = key;
  entry["request"] = ordered_json::parse(canonical_serialization(request));
  entry["response"]["text"] = response.text;
  entry["response"]["backend"] = std::string(to_string(response.backend));
  entry["response"]["latency_ms"] = response.latency_ms;
  entry["created_at"] = utc_timestamp();
  write_atomic(key, entry.dump(2) + "\n");
}

void CacheStore::store_embedding(const EmbeddingRequest& request, const EmbeddingResponse& response) const {
  ordered_json entry;
  const auto key = cache_key(request);
  entry["key"] = key;
  entry["request"] = ordered_json::parse(canonical_serialization(request));
  entry["response"]["embedding"] = response.values;
  entry["response"]["backend"] = std::string(to_string(response.backend));
  entry["response"]["latency_ms"] = response.latency_ms;
  entry["created_at"] = utc_timestamp();
  write_atomic(key, entry.dump() + "\n");
}

void CacheStore::write_atomic(const std::string& key, const std::string& body) const {
  static std::atomic<unsigned long> counter{0};
  std::filesystem::create_directories(dir_);
  std::ostringstream tmp_name;
  tmp_name << "." << key << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
           << counter.fetch_add(1);
  const auto tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw BackendError("cannot write cache entry in " + dir_.string());
    out << body;
    if (!out.flush()) throw BackendError("cannot write cache entry in " + dir_.string());
  }
  std::filesystem::rename(tmp, path_for(key));
}

}  // namespace empathy::llm
