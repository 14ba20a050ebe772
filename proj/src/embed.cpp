#include "icat/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace icat::embed {

using nlohmann::json;

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStopwords = {
      "a",   "an",  "and", "are", "as",   "at",   "be",   "by",   "for",
      "from", "has", "he",  "in",  "is",   "it",   "its",  "of",   "on",
      "or",  "she", "that", "the", "their", "this", "to",  "was",  "were",
      "what", "when", "where", "which", "who", "will", "with"};
  return kStopwords;
}

}  // namespace

bool EmbeddingVector::finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

void TokenEmbeddingSet::validate() const {
  if (tokens.empty() || tokens.size() != vectors.size()) {
    throw DimensionMismatchError(
        "TokenEmbeddingSet: tokens/vectors length mismatch for text: " +
        source_text);
  }
  const std::size_t d = vectors.front().dim();
  for (const auto& v : vectors) {
    if (v.dim() != d)
      throw DimensionMismatchError("TokenEmbeddingSet: inconsistent dims");
    if (!v.finite())
      throw DimensionMismatchError("TokenEmbeddingSet: non-finite entry");
  }
}

std::string TokenizationScheme::id() const {
  std::string base = "lower-nopunct-ws";
  if (remove_stopwords) base += "-nostop";
  return base;
}

std::vector<std::string> tokenize_lenient(const std::string& text,
                                          const TokenizationScheme& scheme) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      if (!scheme.remove_stopwords || stopwords().count(cur) == 0)
        tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      // punctuation is deleted, not treated as a separator: "rs.360" -> "rs360"
    } else {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizationScheme& scheme) {
  auto tokens = tokenize_lenient(text, scheme);
  if (tokens.empty())
    throw EmptyTextError("tokenize: no tokens survive in text: \"" + text +
                         "\"");
  return tokens;
}

// ---------------------------------------------------------------------------
// Local deterministic embedder
// ---------------------------------------------------------------------------

LocalDeterministicEmbedder::LocalDeterministicEmbedder(std::uint64_t seed,
                                                       std::size_t dim)
    : seed_(seed), dim_(dim) {
  if (dim_ == 0) throw ConfigError("embedder dim must be positive");
}

std::string LocalDeterministicEmbedder::id() const {
  return "local-det-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

std::vector<EmbeddingVector> LocalDeterministicEmbedder::embed(
    const std::vector<std::string>& texts) {
  ++requests_;
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    DetRng rng(mix64(fnv1a64(text), seed_));
    EmbeddingVector v;
    v.values.resize(dim_);
    double norm_sq = 0.0;
    for (auto& x : v.values) {
      x = rng.uniform_pm1();
      norm_sq += x * x;
    }
    // All-zero draws are essentially impossible; keep the vector unit-norm.
    const double norm = std::sqrt(norm_sq);
    if (norm > 0.0)
      for (auto& x : v.values) x /= norm;
    else
      v.values[0] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remote embedder
// ---------------------------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config)
    : config_(std::move(config)) {
  if (config_.endpoint.empty())
    throw ConfigError("remote embedder: endpoint not configured");
}

std::string RemoteEmbedder::id() const {
  std::string model = config_.model;
  std::replace(model.begin(), model.end(), '/', '_');
  return "remote-" + model + "-d" + std::to_string(config_.dim);
}

std::vector<EmbeddingVector> RemoteEmbedder::embed(
    const std::vector<std::string>& texts) {
  ++requests_;

  json body;
  body["model"] = config_.model;
  body["input"] = texts;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str());
      key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          config_.retry_base_ms * (1 << (attempt - 1))));
    }
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);

    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendUnavailableError("embedding service returned HTTP " +
                                    std::to_string(res->status) + ": " +
                                    res->body);
    }

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("data") ||
        !reply["data"].is_array() || reply["data"].size() != texts.size()) {
      throw BackendUnavailableError(
          "embedding service returned a malformed reply");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& item : reply["data"]) {
      EmbeddingVector v;
      v.values = item.at("embedding").get<std::vector<double>>();
      if (v.dim() != config_.dim) {
        throw DimensionMismatchError(
            "embedding service returned dim " + std::to_string(v.dim()) +
            ", expected " + std::to_string(config_.dim));
      }
      out.push_back(std::move(v));
    }
    return out;
  }
  throw BackendUnavailableError("embedding service unavailable after " +
                                std::to_string(config_.max_retries + 1) +
                                " attempts (" + last_error + ")");
}

// ---------------------------------------------------------------------------
// Embedder front door with content-addressed cache
// ---------------------------------------------------------------------------

namespace {

json set_to_json(const TokenEmbeddingSet& set) {
  json j;
  j["tokens"] = set.tokens;
  json vecs = json::array();
  for (const auto& v : set.vectors) vecs.push_back(v.values);
  j["vectors"] = std::move(vecs);
  j["source_text"] = set.source_text;
  j["embedder_id"] = set.embedder_id;
  return j;
}

TokenEmbeddingSet set_from_json(const json& j) {
  TokenEmbeddingSet set;
  set.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& row : j.at("vectors")) {
    EmbeddingVector v;
    v.values = row.get<std::vector<double>>();
    set.vectors.push_back(std::move(v));
  }
  set.source_text = j.at("source_text").get<std::string>();
  set.embedder_id = j.at("embedder_id").get<std::string>();
  return set;
}

}  // namespace

Embedder::Embedder(std::shared_ptr<EmbedderBackend> backend,
                   TokenizationScheme scheme,
                   std::optional<std::filesystem::path> cache_dir)
    : backend_(std::move(backend)),
      scheme_(scheme),
      cache_dir_(std::move(cache_dir)) {
  if (!backend_) throw ConfigError("Embedder: null backend");
}

std::filesystem::path Embedder::cache_path(const std::string& text) const {
  return *cache_dir_ / "embed" / backend_->id() / scheme_.id() /
         (sha256_hex(text) + ".json");
}

TokenEmbeddingSet Embedder::embed_tokens(const std::string& text) const {
  if (cache_dir_) {
    const auto path = cache_path(text);
    if (std::filesystem::exists(path)) {
      auto set = set_from_json(json::parse(read_file(path)));
      set.validate();
      return set;
    }
  }

  TokenEmbeddingSet set;
  set.tokens = tokenize(text, scheme_);
  set.vectors = backend_->embed(set.tokens);
  set.source_text = text;
  set.embedder_id = backend_->id();
  set.validate();

  if (cache_dir_) write_file_atomic(cache_path(text), set_to_json(set).dump());
  return set;
}

EmbeddingVector mean_pool(const std::vector<EmbeddingVector>& vectors) {
  if (vectors.empty()) throw EmptyTextError("mean_pool: no vectors");
  EmbeddingVector out;
  out.values.assign(vectors.front().dim(), 0.0);
  for (const auto& v : vectors) {
    if (v.dim() != out.dim())
      throw DimensionMismatchError("mean_pool: inconsistent dims");
    for (std::size_t i = 0; i < v.dim(); ++i) out.values[i] += v.values[i];
  }
  for (auto& x : out.values) x /= static_cast<double>(vectors.size());
  return out;
}

EmbeddingVector Embedder::embed_sentence(const std::string& text) const {
  if (!backend_->pools_sentences()) return mean_pool(embed_tokens(text).vectors);

  // Sentence-pooling backends embed the raw text in one call; cached under a
  // dedicated namespace so token and sentence entries cannot collide.
  std::filesystem::path path;
  if (cache_dir_) {
    path = *cache_dir_ / "embed" / backend_->id() / scheme_.id() / "sent" /
           (sha256_hex(text) + ".json");
    if (std::filesystem::exists(path)) {
      EmbeddingVector v;
      v.values = json::parse(read_file(path)).get<std::vector<double>>();
      return v;
    }
  }
  auto vectors = backend_->embed({text});
  if (vectors.size() != 1)
    throw BackendUnavailableError("sentence embedding: expected one vector");
  if (cache_dir_) write_file_atomic(path, json(vectors.front().values).dump());
  return vectors.front();
}

}  // namespace icat::embed
