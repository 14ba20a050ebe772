#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icat/data.hpp"
#include "icat/embed.hpp"
#include "icat/eval.hpp"
#include "icat/llm.hpp"
#include "icat/prompt.hpp"
#include "icat/select.hpp"

namespace icat::pipeline {

struct DatasetSpec {
  std::filesystem::path path;
  data::DatasetFormat format = data::DatasetFormat::unified;
  std::optional<std::size_t> sample_n;      // seeded evaluation subset
  std::optional<std::uint64_t> sample_seed;
  bool two_hop_only = false;                // musique two-hop filter
};

struct EmbedderSpec {
  std::string kind = "local";  // local | remote
  std::uint64_t seed = 7;
  std::size_t dim = embed::LocalDeterministicEmbedder::kTestDim;
  bool remove_stopwords = false;
  embed::RemoteEmbedderConfig remote;
};

struct BackendSpec {
  std::string kind = "replay";      // replay | remote
  std::filesystem::path fixtures;   // replay fixture file
  llm::RemoteConfig remote;
  int parallelism = 1;
};

struct SelectionSpec {
  select::SelectionMethod method = select::SelectionMethod::ftd;
  int k = 6;
  double mmr_lambda = select::kDefaultMmrLambda;
  double ridge_scale = gauss::kDefaultRidgeScale;
  gauss::MeanNormMode mean_norm_mode = gauss::MeanNormMode::unsquared;
  std::uint64_t seed = 7;
  select::SourceQuota per_source_quota;
  std::optional<std::filesystem::path> static_manifest;
};

/// Everything that determines a run. Two executions of one manifest against
/// replay fixtures produce bit-identical artifacts.
struct RunManifest {
  std::string name = "run";
  std::string method_label;  // defaults to "<mode>/<selection method>"
  DatasetSpec target;
  std::vector<DatasetSpec> transfers;
  SelectionSpec selection;
  prompt::PromptMode mode = prompt::PromptMode::icat_qd;
  std::string template_version = "v1";
  std::optional<std::filesystem::path> templates_dir;
  int context_tokens = 4096;
  int chars_per_token = 4;
  llm::GenerationParams generation;
  BackendSpec backend;
  EmbedderSpec embedder;
  eval::Metric metric = eval::Metric::cover_em;
  std::optional<std::filesystem::path> cache_dir;

  std::string label() const;
  prompt::BuildOptions build_options() const;

  // Relative paths inside the file resolve against its directory.
  static RunManifest load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

data::Dataset load_with_options(const DatasetSpec& spec);

/// Concatenated exemplar pools of all transfer datasets, file order.
std::vector<select::Exemplar> load_pool(const RunManifest& manifest);

embed::Embedder make_embedder(const RunManifest& manifest);
std::shared_ptr<llm::CompletionBackend> make_backend(const BackendSpec& spec);
prompt::TemplateSet load_templates(const RunManifest& manifest);

select::SelectionResult select_for_item(const RunManifest& manifest,
                                        const std::vector<select::Exemplar>& pool,
                                        const data::TargetItem& item,
                                        const embed::Embedder& embedder);

/// One row of outputs.jsonl; self-contained so `eval` never re-contacts a
/// backend.
struct ItemRecord {
  std::string test_id;
  std::string method;
  select::SelectionResult selection;
  std::string prompt_hash;
  std::vector<std::string> exemplar_ids;
  llm::CompletionRecord completion;
  prompt::ParsedCompletion parsed;
  std::string gold;
  data::AnswerType answer_type = data::AnswerType::span;
  eval::Metric metric = eval::Metric::cover_em;
};

std::string item_record_to_json(const ItemRecord& record);
ItemRecord item_record_from_json(const std::string& line);

/// Timestamped artifact directory <out_root>/<name>-<UTC stamp>/ with the
/// frozen manifest copied in.
std::filesystem::path make_run_dir(const std::filesystem::path& out_root,
                                   const RunManifest& manifest);

/// Selection log per test item -> selections.jsonl under run_dir.
void run_select(const RunManifest& manifest,
                const std::filesystem::path& run_dir);

/// Full pipeline: select -> build_prompt -> complete -> parse. Writes
/// outputs.jsonl and prompts/<test_id>.txt under run_dir.
void run_pipeline(const RunManifest& manifest,
                  const std::filesystem::path& run_dir);

/// Score outputs.jsonl; writes results.csv / results.json / results.txt and
/// returns the outcomes. `metric_override` rescores under another metric.
std::vector<eval::RunOutcome> run_eval(
    const std::filesystem::path& run_dir,
    std::optional<eval::Metric> metric_override = std::nullopt);

/// Cross-run comparison: accuracy per run, confusion + McNemar against the
/// baseline method. Writes report.csv / report.txt under out_dir.
void run_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir,
                const std::string& baseline_label = {});

}  // namespace icat::pipeline
