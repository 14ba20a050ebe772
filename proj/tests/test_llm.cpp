#include "icat/llm.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "icat/embed.hpp"
#include "json.hpp"

using namespace icat;
using namespace icat::llm;

namespace {

prompt::PromptRecord make_prompt(const std::string& text) {
  prompt::PromptRecord record;
  record.mode = prompt::PromptMode::icat_qd;
  record.rendered = text;
  record.content_hash = sha256_hex(text);
  record.test_id = "t";
  return record;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("icat-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("replay backend serves recorded text verbatim and misses loudly") {
  const auto dir = temp_dir("replay");
  const auto fixture_file = dir / "fixtures.jsonl";
  const GenerationParams params;

  const auto prompt_a = make_prompt("prompt a");
  ReplayBackend::append_fixture(fixture_file, prompt_a.content_hash, params,
                                "recorded completion a");

  ReplayBackend backend(fixture_file);
  CHECK(backend.size() == 1);

  const auto record = backend.complete(prompt_a, params);
  CHECK(record.ok);
  CHECK(record.raw_text == "recorded completion a");
  CHECK(record.backend == CompletionSource::replay);
  CHECK(record.latency_ms == 0);

  const auto prompt_b = make_prompt("prompt b");
  CHECK_THROWS_WITH_AS(backend.complete(prompt_b, params),
                       doctest::Contains(prompt_b.content_hash.c_str()),
                       ReplayMissError);

  // same hash, different params -> still a miss
  GenerationParams other = params;
  other.temperature = 0.9;
  CHECK_THROWS_AS(backend.complete(prompt_a, other), ReplayMissError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("cache-first service: second identical call bypasses the backend") {
  const auto dir = temp_dir("llmcache");
  const auto fixture_file = dir / "fixtures.jsonl";
  const GenerationParams params;
  const auto p = make_prompt("cached prompt");
  ReplayBackend::append_fixture(fixture_file, p.content_hash, params, "hello");

  auto backend = std::make_shared<ReplayBackend>(fixture_file);
  CompletionService service(backend, dir / "cache");

  const auto first = service.complete(p, params);
  CHECK(first.backend == CompletionSource::replay);
  CHECK(backend->request_count() == 1);

  const auto second = service.complete(p, params);
  CHECK(second.backend == CompletionSource::cache);
  CHECK(second.raw_text == first.raw_text);
  CHECK(backend->request_count() == 1);  // zero further backend requests

  std::filesystem::remove_all(dir);
}

TEST_CASE("run_batch keeps order and embeds partial failures") {
  const auto dir = temp_dir("batch");
  const auto fixture_file = dir / "fixtures.jsonl";
  const GenerationParams params;

  std::vector<prompt::PromptRecord> prompts;
  for (int i = 0; i < 10; ++i)
    prompts.push_back(make_prompt("prompt " + std::to_string(i)));
  // record fixtures for all but #7
  for (int i = 0; i < 10; ++i) {
    if (i == 7) continue;
    ReplayBackend::append_fixture(fixture_file, prompts[i].content_hash, params,
                                  "reply " + std::to_string(i));
  }

  CompletionService service(std::make_shared<ReplayBackend>(fixture_file));
  const auto records = service.run_batch(prompts, params, /*parallelism=*/3);
  REQUIRE(records.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(records[i].prompt_hash == prompts[i].content_hash);
    if (i == 7) {
      CHECK_FALSE(records[i].ok);
      CHECK(records[i].error.find("no fixture") != std::string::npos);
    } else {
      CHECK(records[i].ok);
      CHECK(records[i].raw_text == "reply " + std::to_string(i));
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("rerun of a completed batch with cache makes zero backend calls") {
  const auto dir = temp_dir("batch-cache");
  const auto fixture_file = dir / "fixtures.jsonl";
  const GenerationParams params;

  std::vector<prompt::PromptRecord> prompts;
  for (int i = 0; i < 4; ++i) {
    prompts.push_back(make_prompt("pp " + std::to_string(i)));
    ReplayBackend::append_fixture(fixture_file, prompts[i].content_hash, params,
                                  "r" + std::to_string(i));
  }
  auto backend = std::make_shared<ReplayBackend>(fixture_file);
  CompletionService service(backend, dir / "cache");
  const auto first = service.run_batch(prompts, params, 2);
  const auto calls_after_first = backend->request_count();
  CHECK(calls_after_first == 4);

  const auto second = service.run_batch(prompts, params, 2);
  CHECK(backend->request_count() == calls_after_first);
  for (int i = 0; i < 4; ++i) {
    CHECK(second[i].backend == CompletionSource::cache);
    CHECK(second[i].raw_text == first[i].raw_text);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("remote backend spend cap trips before any network traffic") {
  RemoteConfig config;
  config.endpoint = "http://127.0.0.1:1";  // nothing listens here
  config.max_remote_calls = 0;
  RemoteBackend backend(config);
  CHECK_THROWS_AS(backend.complete(make_prompt("x"), GenerationParams{}),
                  BudgetExceededError);
  CHECK(backend.request_count() == 0);
}

TEST_CASE("remote chat-completion client against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};

  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                ++hits;
                auto body = nlohmann::json::parse(req.body);
                // echo the prompt back so the test can assert wiring
                const std::string content =
                    body.at("messages").at(0).at("content").get<std::string>();
                nlohmann::json reply = {
                    {"choices",
                     {{{"message",
                        {{"role", "assistant"},
                         {"content", "echo: " + content}}}}}}};
                res.set_content(reply.dump(), "application/json");
              });
  server.Post("/flaky/chat/completions",
              [&](const httplib::Request&, httplib::Response& res) {
                ++hits;
                res.status = 500;
              });

  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  SUBCASE("round trip") {
    RemoteConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.max_remote_calls = 2;
    RemoteBackend backend(config);
    const auto record =
        backend.complete(make_prompt("ping"), GenerationParams{});
    CHECK(record.ok);
    CHECK(record.raw_text == "echo: ping");
    CHECK(record.backend == CompletionSource::remote);
    CHECK(backend.remote_calls() == 1);

    // params validation still applies
    GenerationParams bad;
    bad.max_tokens = 0;
    CHECK_THROWS_AS(backend.complete(make_prompt("x"), bad), ConfigError);
  }

  SUBCASE("5xx responses are retried, then surface as BackendUnavailable") {
    RemoteConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.path = "/flaky/chat/completions";
    config.max_remote_calls = 10;
    config.max_retries = 2;
    config.retry_base_ms = 1;
    RemoteBackend backend(config);
    const int before = hits.load();
    CHECK_THROWS_AS(backend.complete(make_prompt("x"), GenerationParams{}),
                    BackendUnavailableError);
    CHECK(hits.load() - before == 3);  // initial try + 2 retries
  }

  server.stop();
  server_thread.join();
}

TEST_CASE("remote embedder against a local server, with retry exhaustion") {
  httplib::Server server;
  server.Post("/v1/embeddings",
              [&](const httplib::Request& req, httplib::Response& res) {
                auto body = nlohmann::json::parse(req.body);
                nlohmann::json data = nlohmann::json::array();
                for (std::size_t i = 0; i < body.at("input").size(); ++i)
                  data.push_back(
                      {{"embedding", std::vector<double>{1.0, 0.0, 0.0}}});
                res.set_content(nlohmann::json{{"data", data}}.dump(),
                                "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  SUBCASE("token embedding round trip") {
    embed::RemoteEmbedderConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.dim = 3;
    embed::Embedder embedder(std::make_shared<embed::RemoteEmbedder>(config));
    const auto set = embedder.embed_tokens("two tokens");
    CHECK(set.vectors.size() == 2);
    CHECK(set.vectors[0].values == std::vector<double>{1.0, 0.0, 0.0});
    // sentence path goes through the service (pools_sentences)
    const auto sentence = embedder.embed_sentence("two tokens");
    CHECK(sentence.values == std::vector<double>{1.0, 0.0, 0.0});
  }

  SUBCASE("cached sentence embedding makes zero further requests") {
    const auto dir = temp_dir("embed-remote-cache");
    embed::RemoteEmbedderConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.dim = 3;
    auto backend = std::make_shared<embed::RemoteEmbedder>(config);
    embed::Embedder embedder(backend, {}, dir);
    const auto first = embedder.embed_sentence("a sentence");
    CHECK(backend->request_count() == 1);
    const auto second = embedder.embed_sentence("a sentence");
    CHECK(backend->request_count() == 1);
    CHECK(first.values == second.values);
    std::filesystem::remove_all(dir);
  }

  SUBCASE("dimension mismatch is detected") {
    embed::RemoteEmbedderConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.dim = 5;  // server returns dim 3
    embed::RemoteEmbedder backend(config);
    CHECK_THROWS_AS(backend.embed({"x"}), DimensionMismatchError);
  }

  server.stop();
  server_thread.join();

  SUBCASE("unreachable service fails after the configured retries") {
    embed::RemoteEmbedderConfig config;
    config.endpoint = "http://127.0.0.1:1";
    config.max_retries = 1;
    config.retry_base_ms = 1;
    config.timeout_s = 1;
    embed::RemoteEmbedder backend(config);
    CHECK_THROWS_WITH_AS(backend.embed({"x"}),
                         doctest::Contains("2 attempts"),
                         BackendUnavailableError);
  }
}
