#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icat/common.hpp"

namespace icat::embed {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool finite() const;
};

/// One vector per surviving token of `source_text`, all sharing a dimension.
struct TokenEmbeddingSet {
  std::vector<std::string> tokens;
  std::vector<EmbeddingVector> vectors;
  std::string source_text;
  std::string embedder_id;

  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().dim(); }
  void validate() const;  // throws DimensionMismatchError / EmptyTextError
};

// Tokenization rule: ASCII-lowercase, delete punctuation characters,
// split on whitespace. Recorded in outputs so distribution comparisons
// are reproducible. `remove_stopwords` defaults to keeping them; every
// report that depends on a scheme carries its id().
struct TokenizationScheme {
  bool remove_stopwords = false;

  std::string id() const;
};

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizationScheme& scheme = {});

// Same rule but returns an empty vector instead of throwing EmptyTextError.
std::vector<std::string> tokenize_lenient(const std::string& text,
                                          const TokenizationScheme& scheme = {});

class EmbedderBackend {
 public:
  virtual ~EmbedderBackend() = default;

  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;

  // One vector per input text, all of dim(). Throws BackendUnavailableError /
  // DimensionMismatchError.
  virtual std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& texts) = 0;

  // True when the backend embeds whole sentences itself; otherwise the
  // sentence vector is the mean of the token vectors.
  virtual bool pools_sentences() const { return false; }

  // Number of embed() calls that reached the backend (cache bypasses these).
  std::size_t request_count() const { return requests_.load(); }

 protected:
  std::atomic<std::size_t> requests_{0};
};

// Offline embedder: each distinct token maps to a pseudo-random unit vector
// derived from hash(token, seed). Pure function of (text, seed, dim, scheme).
class LocalDeterministicEmbedder final : public EmbedderBackend {
 public:
  static constexpr std::size_t kTestDim = 32;       // default for tests
  static constexpr std::size_t kRealisticDim = 384;

  LocalDeterministicEmbedder(std::uint64_t seed, std::size_t dim = kTestDim);

  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& texts) override;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

struct RemoteEmbedderConfig {
  std::string endpoint;                      // e.g. https://api.example.com
  std::string path = "/v1/embeddings";
  std::string model = "paraphrase-MiniLM-L6-v2";
  std::string api_key_env = "ICAT_API_KEY";  // key read from environment
  std::size_t dim = 384;
  int max_retries = 3;
  int retry_base_ms = 250;
  int timeout_s = 60;
};

// JSON-over-HTTP embedding service speaking the common
// {"model": ..., "input": [...]} -> {"data": [{"embedding": [...]}...]} shape.
class RemoteEmbedder final : public EmbedderBackend {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);

  std::string id() const override;
  std::size_t dim() const override { return config_.dim; }
  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& texts) override;
  bool pools_sentences() const override { return true; }

 private:
  RemoteEmbedderConfig config_;
};

/// Front door used by selection and analysis code: tokenize + embed with an
/// optional content-addressed file cache keyed by (embedder_id, scheme,
/// sha256(text)). With the cache on, outputs are bit-identical to cache-off.
class Embedder {
 public:
  Embedder(std::shared_ptr<EmbedderBackend> backend,
           TokenizationScheme scheme = {},
           std::optional<std::filesystem::path> cache_dir = std::nullopt);

  TokenEmbeddingSet embed_tokens(const std::string& text) const;
  EmbeddingVector embed_sentence(const std::string& text) const;

  const TokenizationScheme& scheme() const { return scheme_; }
  std::string id() const { return backend_->id(); }
  std::size_t dim() const { return backend_->dim(); }
  std::size_t backend_requests() const { return backend_->request_count(); }

 private:
  std::filesystem::path cache_path(const std::string& text) const;

  std::shared_ptr<EmbedderBackend> backend_;
  TokenizationScheme scheme_;
  std::optional<std::filesystem::path> cache_dir_;
};

EmbeddingVector mean_pool(const std::vector<EmbeddingVector>& vectors);

}  // namespace icat::embed
