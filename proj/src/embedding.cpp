#include "jbshield/embedding.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "jbshield/log.hpp"
#include "jbshield/prng.hpp"
#include "jbshield/text.hpp"

namespace jbshield {

using nlohmann::json;

const std::vector<EmbedderProfile>& builtin_profiles() {
  static const std::vector<EmbedderProfile> profiles = {
      {"dpr-ctx_encoder-single-nq-base", 768, 512, LicenseClass::NonCommercial},
      {"NV-Embed-v1", 4096, 4096, LicenseClass::NonCommercial},
      {"snowflake-arctic-embed-m-long", 768, 8192, LicenseClass::Permissive},
      {"nv-embedqa-e5-v5", 1024, 512, LicenseClass::Permissive},
  };
  return profiles;
}

const EmbedderProfile* find_profile(std::string_view name) {
  static const std::unordered_map<std::string_view, std::size_t> aliases = {
      {"meta", 0}, {"nvembed", 1}, {"snowflake", 2}, {"nve5", 3}};
  const auto& profiles = builtin_profiles();
  for (const auto& p : profiles) {
    if (p.name == name) return &p;
  }
  if (auto it = aliases.find(name); it != aliases.end()) {
    return &profiles[it->second];
  }
  return nullptr;
}

EmbedderProfile mock_profile(std::size_t dim) {
  return {"mock-" + std::to_string(dim), dim,
          std::numeric_limits<std::size_t>::max(), LicenseClass::Permissive};
}

void validate_embedding(std::span<const float> values,
                        const EmbedderProfile& expected) {
  if (values.size() != expected.dimension) {
    throw std::runtime_error(
        "embedding dimension mismatch for \"" + expected.name + "\": expected " +
        std::to_string(expected.dimension) + ", got " +
        std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::runtime_error("embedding component " + std::to_string(i) +
                               " is not finite");
    }
  }
}

std::vector<float> mock_embed_values(std::size_t dim, std::string_view text) {
  if (dim < 2) {
    throw std::invalid_argument("mock embedding dimension must be >= 2");
  }
  SplitMix64 rng(fnv1a64(normalize_text(text)));
  std::vector<double> draws(dim);
  for (std::size_t i = 0; i < dim; i += 2) {
    const auto [z0, z1] = rng.gaussian_pair();
    draws[i] = z0;
    if (i + 1 < dim) draws[i + 1] = z1;
  }
  double sq = 0.0;
  for (double z : draws) sq += z * z;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw std::runtime_error("degenerate mock embedding");
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    out[i] = static_cast<float>(draws[i] / norm);
  }
  return out;
}

MockProvider::MockProvider(std::size_t dim) : profile_(mock_profile(dim)) {}

EmbeddingVector MockProvider::embed(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("cannot embed empty text");
  return {profile_.name, mock_embed_values(profile_.dimension, text)};
}

RemoteProvider::RemoteProvider(RemoteProviderConfig config)
    : config_(std::move(config)) {
  if (config_.profile.dimension == 0) {
    throw std::invalid_argument("remote provider profile needs a dimension");
  }
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint must include a scheme: " +
                                config_.endpoint);
  }
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    base_url_ = config_.endpoint;
    path_ = "/";
  } else {
    base_url_ = config_.endpoint.substr(0, path_start);
    path_ = config_.endpoint.substr(path_start);
  }
}

EmbeddingVector RemoteProvider::embed(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("cannot embed empty text");

  const json request = {{"input", json::array({text})},
                        {"model", config_.model}};
  const std::string body = request.dump();

  httplib::Headers headers;
  if (!config_.auth_token_env.empty()) {
    const char* token = std::getenv(config_.auth_token_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw ProviderError("auth token environment variable \"" +
                              config_.auth_token_env + "\" is unset",
                          0, false);
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  std::string last_failure;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) {
      const int backoff =
          config_.initial_backoff_ms * (1 << (attempt - 2));
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
    }

    httplib::Client client(base_url_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_s);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_failure = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "server returned " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("embedding request rejected with HTTP " +
                              std::to_string(res->status),
                          attempt, false);
    }

    json doc;
    try {
      doc = json::parse(res->body);
    } catch (const json::exception& e) {
      throw ProviderError(std::string("invalid response JSON: ") + e.what(),
                          attempt, false);
    }
    if (!doc.contains("data") || !doc["data"].is_array() ||
        doc["data"].empty() || !doc["data"][0].contains("embedding")) {
      throw ProviderError("response lacks data[0].embedding", attempt, false);
    }
    std::vector<float> values;
    try {
      values = doc["data"][0]["embedding"].get<std::vector<float>>();
    } catch (const json::exception& e) {
      throw ProviderError(std::string("malformed embedding array: ") + e.what(),
                          attempt, false);
    }
    validate_embedding(values, config_.profile);
    return {config_.profile.name, std::move(values)};
  }
  throw ProviderError("embedding request failed after " +
                          std::to_string(config_.max_attempts) +
                          " attempts; last: " + last_failure,
                      config_.max_attempts, true);
}

CacheProvider::CacheProvider(std::shared_ptr<const EmbeddingCache> cache,
                             EmbedderProfile profile)
    : cache_(std::move(cache)), profile_(std::move(profile)) {
  if (!cache_) throw std::invalid_argument("cache provider needs a cache");
}

EmbeddingVector CacheProvider::embed(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("cannot embed empty text");
  const std::string key = text_key(text);
  auto hit = cache_->lookup(key, profile_.name, profile_.dimension);
  if (!hit) {
    throw std::runtime_error("no cached embedding for key " + key +
                             " (embedder " + profile_.name + ") in " +
                             cache_->path().string());
  }
  return {profile_.name, std::move(*hit)};
}

namespace {

std::string cache_map_key(std::string_view key, std::string_view embedder) {
  std::string k;
  k.reserve(key.size() + embedder.size() + 1);
  k.append(key);
  k.push_back('\n');
  k.append(embedder);
  return k;
}

json cache_header() {
  return {{"format", "jbshield-embcache"}, {"version", 1}};
}

}  // namespace

std::shared_ptr<EmbeddingCache> EmbeddingCache::open(
    const std::filesystem::path& path) {
  auto cache = std::shared_ptr<EmbeddingCache>(new EmbeddingCache());
  cache->path_ = path;

  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json row;
      try {
        row = json::parse(line);
      } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": line " +
                                 std::to_string(line_no) +
                                 ": invalid JSON: " + e.what());
      }
      if (!saw_header) {
        if (row.value("format", "") != "jbshield-embcache" ||
            row.value("version", 0) != 1) {
          throw std::runtime_error(path.string() +
                                   ": missing jbshield-embcache v1 header");
        }
        saw_header = true;
        continue;
      }
      const auto key = row.at("key").get<std::string>();
      const auto embedder = row.at("embedder").get<std::string>();
      const auto dim = row.at("dim").get<std::size_t>();
      auto values = row.at("values").get<std::vector<float>>();
      if (values.size() != dim) {
        throw std::runtime_error(path.string() + ": line " +
                                 std::to_string(line_no) +
                                 ": dim disagrees with values length");
      }
      validate_embedding(values, {embedder, dim, 0, LicenseClass::Permissive});
      cache->dims_[embedder] = dim;
      cache->entries_[cache_map_key(key, embedder)] = std::move(values);
    }
    if (!saw_header) {
      throw std::runtime_error(path.string() +
                               ": missing jbshield-embcache v1 header");
    }
    cache->out_.open(path, std::ios::app);
  } else {
    cache->out_.open(path, std::ios::app);
    if (!cache->out_) throw std::runtime_error("cannot create " + path.string());
    cache->out_ << cache_header().dump() << "\n";
    cache->out_.flush();
  }
  if (!cache->out_) throw std::runtime_error("cannot append to " + path.string());
  return cache;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<std::string> EmbeddingCache::embedders() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> names;
  names.reserve(dims_.size());
  for (const auto& [name, dim] : dims_) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

std::optional<std::vector<float>> EmbeddingCache::lookup(
    std::string_view key, std::string_view embedder, std::size_t dim) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(cache_map_key(key, embedder));
  if (it == entries_.end() || it->second.size() != dim) return std::nullopt;
  return it->second;
}

void EmbeddingCache::append(std::string_view key, const EmbeddingVector& vector) {
  json row = {{"key", std::string(key)},
              {"embedder", vector.embedder},
              {"dim", vector.values.size()},
              {"values", vector.values}};
  const std::string line = row.dump();
  std::lock_guard lock(mutex_);
  out_ << line << "\n";
  out_.flush();
  if (!out_) throw std::runtime_error("failed appending to " + path_.string());
  dims_[vector.embedder] = vector.values.size();
  entries_[cache_map_key(key, vector.embedder)] = vector.values;
}

std::vector<LabeledEmbedding> embed_corpus(EmbeddingProvider& provider,
                                           const Corpus& corpus,
                                           EmbeddingCache& cache) {
  const EmbedderProfile& prof = provider.profile();
  std::vector<LabeledEmbedding> out;
  out.reserve(corpus.size());
  for (const PromptRecord& record : corpus.records()) {
    // crude length screen; token counting is the provider's business
    if (prof.max_context_tokens != std::numeric_limits<std::size_t>::max() &&
        record.text.size() > 4 * prof.max_context_tokens) {
      log::warn("record ", record.id, " likely exceeds the ", prof.name,
                " context window (", record.text.size(), " bytes)");
    }
    const std::string key = text_key(record.text);
    if (auto hit = cache.lookup(key, prof.name, prof.dimension)) {
      out.push_back(
          {record.id, key, record.label, {prof.name, std::move(*hit)}});
      continue;
    }
    try {
      EmbeddingVector vec = provider.embed(record.text);
      validate_embedding(vec.values, prof);
      cache.append(key, vec);
      out.push_back({record.id, key, record.label, std::move(vec)});
    } catch (const ProviderError& e) {
      throw ProviderError("record " + record.id + ": " + e.what(),
                          e.attempts(), e.retriable());
    } catch (const std::exception& e) {
      throw std::runtime_error("record " + record.id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace jbshield
