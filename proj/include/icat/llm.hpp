#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icat/prompt.hpp"

namespace icat::llm {

struct GenerationParams {
  double temperature = 0.3;
  double frequency_penalty = 0.8;
  double presence_penalty = 0.6;
  int max_tokens = 900;
  std::string model_id = "gpt-3.5-turbo";

  void validate() const;
  std::string cache_key() const;  // canonical digest component
  bool operator==(const GenerationParams&) const = default;
};

enum class CompletionSource { remote, cache, replay };

const char* to_string(CompletionSource source);

struct CompletionRecord {
  std::string prompt_hash;
  GenerationParams params;
  bool ok = false;
  std::string raw_text;  // present iff ok
  std::string error;     // present iff !ok (run_batch embeds failures)
  long latency_ms = 0;
  CompletionSource backend = CompletionSource::replay;
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionRecord complete(const prompt::PromptRecord& prompt,
                                    const GenerationParams& params) = 0;
  virtual std::string name() const = 0;

  std::size_t request_count() const { return requests_.load(); }

 protected:
  std::atomic<std::size_t> requests_{0};
};

/// Serves only pre-recorded responses keyed by (prompt_hash, params);
/// missing fixtures raise ReplayMissError instead of fabricating output.
class ReplayBackend final : public CompletionBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& fixture_file);

  CompletionRecord complete(const prompt::PromptRecord& prompt,
                            const GenerationParams& params) override;
  std::string name() const override { return "replay"; }

  std::size_t size() const { return fixtures_.size(); }

  // Fixture format: JSON-lines of {prompt_hash, params, raw_text}.
  static void append_fixture(const std::filesystem::path& fixture_file,
                             const std::string& prompt_hash,
                             const GenerationParams& params,
                             const std::string& raw_text);

 private:
  std::map<std::string, std::string> fixtures_;  // key -> raw_text
};

struct RemoteConfig {
  std::string endpoint;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "ICAT_API_KEY";
  int max_retries = 3;
  int retry_base_ms = 500;
  int timeout_s = 120;
  // Spend cap: remote calls allowed per process run. Deliberately 0 by
  // default; raising it is an explicit decision.
  int max_remote_calls = 0;
};

/// JSON chat-completion HTTP client with exponential backoff on transient
/// failures and a mandatory spend cap.
class RemoteBackend final : public CompletionBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  CompletionRecord complete(const prompt::PromptRecord& prompt,
                            const GenerationParams& params) override;
  std::string name() const override { return "remote"; }

  int remote_calls() const { return calls_.load(); }

 private:
  RemoteConfig config_;
  std::atomic<int> calls_{0};
};

/// Cache-first completion service. The cache is content-addressed on
/// (sha256(rendered prompt), params); hits never contact the backend.
class CompletionService {
 public:
  CompletionService(std::shared_ptr<CompletionBackend> backend,
                    std::optional<std::filesystem::path> cache_dir = std::nullopt);

  CompletionRecord complete(const prompt::PromptRecord& prompt,
                            const GenerationParams& params) const;

  /// Ordered batch execution with at most `parallelism` in-flight calls.
  /// Output order matches input order; per-item failures are embedded in the
  /// records and never abort the batch.
  std::vector<CompletionRecord> run_batch(
      const std::vector<prompt::PromptRecord>& prompts,
      const GenerationParams& params, int parallelism = 1) const;

  std::size_t backend_requests() const { return backend_->request_count(); }

 private:
  std::filesystem::path cache_path(const std::string& prompt_hash,
                                   const GenerationParams& params) const;

  std::shared_ptr<CompletionBackend> backend_;
  std::optional<std::filesystem::path> cache_dir_;
};

}  // namespace icat::llm
