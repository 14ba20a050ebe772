#include "icat/llm.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace icat::llm {

using nlohmann::json;

void GenerationParams::validate() const {
  if (temperature < 0.0)
    throw ConfigError("generation params: temperature must be >= 0");
  if (max_tokens < 1)
    throw ConfigError("generation params: max_tokens must be >= 1");
  if (model_id.empty()) throw ConfigError("generation params: empty model_id");
}

std::string GenerationParams::cache_key() const {
  // json objects serialize with sorted keys, so this digest is canonical.
  json j;
  j["temperature"] = temperature;
  j["frequency_penalty"] = frequency_penalty;
  j["presence_penalty"] = presence_penalty;
  j["max_tokens"] = max_tokens;
  j["model_id"] = model_id;
  return sha256_hex(j.dump()).substr(0, 16);
}

const char* to_string(CompletionSource source) {
  switch (source) {
    case CompletionSource::remote: return "remote";
    case CompletionSource::cache: return "cache";
    case CompletionSource::replay: return "replay";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Replay backend
// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(const std::filesystem::path& fixture_file) {
  std::ifstream in(fixture_file);
  if (!in)
    throw ConfigError("replay backend: cannot open fixture file " +
                      fixture_file.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ConfigError("replay fixture " + fixture_file.string() + ":" +
                        std::to_string(line_no) + ": invalid JSON");
    GenerationParams params;
    const auto& p = j.at("params");
    params.temperature = p.at("temperature").get<double>();
    params.frequency_penalty = p.at("frequency_penalty").get<double>();
    params.presence_penalty = p.at("presence_penalty").get<double>();
    params.max_tokens = p.at("max_tokens").get<int>();
    params.model_id = p.at("model_id").get<std::string>();
    fixtures_[j.at("prompt_hash").get<std::string>() + ":" +
              params.cache_key()] = j.at("raw_text").get<std::string>();
  }
}

CompletionRecord ReplayBackend::complete(const prompt::PromptRecord& prompt,
                                         const GenerationParams& params) {
  ++requests_;
  auto it = fixtures_.find(prompt.content_hash + ":" + params.cache_key());
  if (it == fixtures_.end())
    throw ReplayMissError("replay backend: no fixture for prompt hash " +
                          prompt.content_hash + " with params " +
                          params.cache_key());
  CompletionRecord record;
  record.prompt_hash = prompt.content_hash;
  record.params = params;
  record.ok = true;
  record.raw_text = it->second;
  record.latency_ms = 0;
  record.backend = CompletionSource::replay;
  return record;
}

void ReplayBackend::append_fixture(const std::filesystem::path& fixture_file,
                                   const std::string& prompt_hash,
                                   const GenerationParams& params,
                                   const std::string& raw_text) {
  json p;
  p["temperature"] = params.temperature;
  p["frequency_penalty"] = params.frequency_penalty;
  p["presence_penalty"] = params.presence_penalty;
  p["max_tokens"] = params.max_tokens;
  p["model_id"] = params.model_id;
  json j;
  j["prompt_hash"] = prompt_hash;
  j["params"] = std::move(p);
  j["raw_text"] = raw_text;

  if (fixture_file.has_parent_path())
    std::filesystem::create_directories(fixture_file.parent_path());
  std::ofstream out(fixture_file, std::ios::app);
  if (!out)
    throw ConfigError("cannot append fixture to " + fixture_file.string());
  out << j.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty())
    throw ConfigError("remote backend: endpoint not configured");
}

CompletionRecord RemoteBackend::complete(const prompt::PromptRecord& prompt,
                                         const GenerationParams& params) {
  params.validate();

  // The spend cap is checked before any network traffic.
  const int ticket = calls_.fetch_add(1) + 1;
  if (ticket > config_.max_remote_calls) {
    calls_.fetch_sub(1);
    throw BudgetExceededError(
        "remote backend: spend cap of " +
        std::to_string(config_.max_remote_calls) +
        " remote calls reached; raise --max-remote-calls explicitly");
  }
  ++requests_;

  json body;
  body["model"] = params.model_id;
  body["messages"] =
      json::array({{{"role", "user"}, {"content", prompt.rendered}}});
  body["temperature"] = params.temperature;
  body["frequency_penalty"] = params.frequency_penalty;
  body["presence_penalty"] = params.presence_penalty;
  body["max_tokens"] = params.max_tokens;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str());
      key != nullptr && *key != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + key);

  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(
          config_.retry_base_ms * (1 << (attempt - 1))));

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
    if (res->status != 200)
      throw BackendUnavailableError("completion service returned HTTP " +
                                    std::to_string(res->status) + ": " +
                                    res->body);

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") ||
        reply["choices"].empty())
      throw BackendUnavailableError(
          "completion service returned a malformed reply");

    CompletionRecord record;
    record.prompt_hash = prompt.content_hash;
    record.params = params;
    record.ok = true;
    record.raw_text = reply["choices"][0]
                          .at("message")
                          .at("content")
                          .get<std::string>();
    record.latency_ms = static_cast<long>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start)
            .count());
    record.backend = CompletionSource::remote;
    return record;
  }
  throw BackendUnavailableError("completion service unavailable after " +
                                std::to_string(config_.max_retries + 1) +
                                " attempts (" + last_error + ")");
}

// ---------------------------------------------------------------------------
// Cache-first service
// ---------------------------------------------------------------------------

CompletionService::CompletionService(
    std::shared_ptr<CompletionBackend> backend,
    std::optional<std::filesystem::path> cache_dir)
    : backend_(std::move(backend)), cache_dir_(std::move(cache_dir)) {
  if (!backend_) throw ConfigError("CompletionService: null backend");
}

std::filesystem::path CompletionService::cache_path(
    const std::string& prompt_hash, const GenerationParams& params) const {
  return *cache_dir_ / "llm" /
         (prompt_hash + "-" + params.cache_key() + ".json");
}

CompletionRecord CompletionService::complete(
    const prompt::PromptRecord& prompt, const GenerationParams& params) const {
  if (cache_dir_) {
    const auto path = cache_path(prompt.content_hash, params);
    if (std::filesystem::exists(path)) {
      json j = json::parse(read_file(path));
      CompletionRecord record;
      record.prompt_hash = prompt.content_hash;
      record.params = params;
      record.ok = true;
      record.raw_text = j.at("raw_text").get<std::string>();
      record.latency_ms = 0;
      record.backend = CompletionSource::cache;
      return record;
    }
  }

  CompletionRecord record = backend_->complete(prompt, params);

  if (cache_dir_ && record.ok) {
    json j;
    j["raw_text"] = record.raw_text;
    j["source"] = to_string(record.backend);
    write_file_atomic(cache_path(prompt.content_hash, params), j.dump());
  }
  return record;
}

std::vector<CompletionRecord> CompletionService::run_batch(
    const std::vector<prompt::PromptRecord>& prompts,
    const GenerationParams& params, int parallelism) const {
  if (parallelism < 1) throw ConfigError("run_batch: parallelism must be >= 1");

  std::vector<CompletionRecord> records(prompts.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= prompts.size()) return;
      try {
        records[i] = complete(prompts[i], params);
      } catch (const Error& e) {
        records[i].prompt_hash = prompts[i].content_hash;
        records[i].params = params;
        records[i].ok = false;
        records[i].error = e.what();
      }
    }
  };

  const auto n_workers = std::min<std::size_t>(
      static_cast<std::size_t>(parallelism), std::max<std::size_t>(prompts.size(), 1));
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return records;
}

}  // namespace icat::llm
