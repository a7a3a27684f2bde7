#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "jbshield/dataset.hpp"

namespace jbshield {

enum class LicenseClass { Permissive, NonCommercial };

struct EmbedderProfile {
  std::string name;
  std::size_t dimension = 0;
  std::size_t max_context_tokens = 0;
  LicenseClass license_class = LicenseClass::Permissive;
};

/// The four embedders the engine ships metadata for. Weights never enter
/// this codebase; vectors arrive through a provider.
const std::vector<EmbedderProfile>& builtin_profiles();

/// Lookup by profile name or short alias (meta, nvembed, snowflake, nve5).
const EmbedderProfile* find_profile(std::string_view name);

EmbedderProfile mock_profile(std::size_t dim);

struct EmbeddingVector {
  std::string embedder;
  std::vector<float> values;
};

/// Dimension and finiteness gate every vector passes before any detector
/// sees it. Throws naming expected/actual on mismatch.
void validate_embedding(std::span<const float> values,
                        const EmbedderProfile& expected);

struct LabeledEmbedding {
  std::string record_id;
  std::string text_key;  // cache key of the source text; empty for synthetic data
  Label label = Label::Benign;
  EmbeddingVector vector;
};

/// Deterministic test-double embedding: seed splitmix64 with the FNV-1a
/// hash of the normalized text, draw dim standard normals via Box-Muller,
/// divide by the Euclidean norm. dim must be >= 2.
std::vector<float> mock_embed_values(std::size_t dim, std::string_view text);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const EmbedderProfile& profile() const = 0;
  /// Embed one non-empty text. Must be safe for concurrent calls.
  virtual EmbeddingVector embed(const std::string& text) = 0;
};

class MockProvider final : public EmbeddingProvider {
 public:
  explicit MockProvider(std::size_t dim);
  const EmbedderProfile& profile() const override { return profile_; }
  EmbeddingVector embed(const std::string& text) override;

 private:
  EmbedderProfile profile_;
};

class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, int attempts, bool retriable)
      : std::runtime_error(what), attempts_(attempts), retriable_(retriable) {}
  int attempts() const { return attempts_; }
  bool retriable() const { return retriable_; }

 private:
  int attempts_;
  bool retriable_;
};

struct RemoteProviderConfig {
  std::string endpoint;  // e.g. http://host:port/v1/embeddings
  std::string model;     // model name sent on the wire
  EmbedderProfile profile;
  std::string auth_token_env;  // env var holding the bearer token; empty = none
  double timeout_s = 30.0;
  int max_attempts = 3;
  int initial_backoff_ms = 250;
};

/// Client for the de-facto embeddings API shape: POST {"input": [texts],
/// "model": name} -> {"data": [{"embedding": [...]}, ...]}. Transport
/// failures and 5xx responses are retried max_attempts times with
/// exponential backoff; other HTTP errors are not retriable.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteProviderConfig config);
  const EmbedderProfile& profile() const override { return config_.profile; }
  EmbeddingVector embed(const std::string& text) override;

 private:
  RemoteProviderConfig config_;
  std::string base_url_;
  std::string path_;
};

/// Read-only provider over a cache file; texts absent from the cache are
/// errors. Lets evaluation and serving run without network access.
class EmbeddingCache;
class CacheProvider final : public EmbeddingProvider {
 public:
  CacheProvider(std::shared_ptr<const EmbeddingCache> cache,
                EmbedderProfile profile);
  const EmbedderProfile& profile() const override { return profile_; }
  EmbeddingVector embed(const std::string& text) override;

 private:
  std::shared_ptr<const EmbeddingCache> cache_;
  EmbedderProfile profile_;
};

/// Append-only JSONL store. First line is the header
/// {"format":"jbshield-embcache","version":1}; entries are
/// {"key","embedder","dim","values"}. One writer, values round-trip
/// bit-exactly.
class EmbeddingCache {
 public:
  static std::shared_ptr<EmbeddingCache> open(const std::filesystem::path& path);

  const std::filesystem::path& path() const { return path_; }
  std::size_t size() const;
  std::vector<std::string> embedders() const;

  /// nullopt when (key, embedder, dim) is absent.
  std::optional<std::vector<float>> lookup(std::string_view key,
                                           std::string_view embedder,
                                           std::size_t dim) const;

  void append(std::string_view key, const EmbeddingVector& vector);

 private:
  EmbeddingCache() = default;

  std::filesystem::path path_;
  std::ofstream out_;
  std::unordered_map<std::string, std::vector<float>> entries_;
  std::unordered_map<std::string, std::size_t> dims_;  // embedder -> dim seen
  mutable std::mutex mutex_;
};

/// Cache-first corpus embedding: cached texts are not re-requested, misses
/// go to the provider and are appended to the cache as they arrive (partial
/// progress survives a failure). Output order matches corpus order. Errors
/// carry the failing record id.
std::vector<LabeledEmbedding> embed_corpus(EmbeddingProvider& provider,
                                           const Corpus& corpus,
                                           EmbeddingCache& cache);

}  // namespace jbshield
