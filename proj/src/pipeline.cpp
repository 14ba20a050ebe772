#include "icat/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace icat::pipeline {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

DatasetSpec dataset_spec_from_json(const json& j,
                                   const std::filesystem::path& base) {
  DatasetSpec spec;
  spec.path = resolve(base, j.at("path").get<std::string>());
  spec.format = data::format_from_string(j.value("format", "unified"));
  if (j.contains("sample_n")) spec.sample_n = j.at("sample_n").get<std::size_t>();
  if (j.contains("sample_seed"))
    spec.sample_seed = j.at("sample_seed").get<std::uint64_t>();
  spec.two_hop_only = j.value("two_hop_only", false);
  return spec;
}

json dataset_spec_to_json(const DatasetSpec& spec) {
  json j;
  j["path"] = spec.path.string();
  j["format"] = data::to_string(spec.format);
  if (spec.sample_n) j["sample_n"] = *spec.sample_n;
  if (spec.sample_seed) j["sample_seed"] = *spec.sample_seed;
  if (spec.two_hop_only) j["two_hop_only"] = true;
  return j;
}

json params_to_json(const llm::GenerationParams& params) {
  json j;
  j["temperature"] = params.temperature;
  j["frequency_penalty"] = params.frequency_penalty;
  j["presence_penalty"] = params.presence_penalty;
  j["max_tokens"] = params.max_tokens;
  j["model_id"] = params.model_id;
  return j;
}

llm::GenerationParams params_from_json(const json& j) {
  llm::GenerationParams params;
  params.temperature = j.value("temperature", params.temperature);
  params.frequency_penalty = j.value("frequency_penalty", params.frequency_penalty);
  params.presence_penalty = j.value("presence_penalty", params.presence_penalty);
  params.max_tokens = j.value("max_tokens", params.max_tokens);
  params.model_id = j.value("model_id", params.model_id);
  return params;
}

}  // namespace

std::string RunManifest::label() const {
  if (!method_label.empty()) return method_label;
  return std::string(prompt::to_string(mode)) + "/" +
         select::to_string(selection.method);
}

prompt::BuildOptions RunManifest::build_options() const {
  prompt::BuildOptions options;
  options.context_tokens = context_tokens;
  options.completion_tokens = generation.max_tokens;
  options.chars_per_token = chars_per_token;
  return options;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("manifest not found: " + path.string());
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded())
    throw ConfigError("manifest " + path.string() + ": invalid JSON");
  const auto base = path.has_parent_path()
                        ? path.parent_path()
                        : std::filesystem::path(".");

  RunManifest m;
  m.name = j.value("name", m.name);
  m.method_label = j.value("method_label", std::string{});
  if (!j.contains("target"))
    throw ConfigError("manifest " + path.string() + ": missing target");
  m.target = dataset_spec_from_json(j.at("target"), base);
  if (j.contains("transfers"))
    for (const auto& t : j.at("transfers"))
      m.transfers.push_back(dataset_spec_from_json(t, base));

  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    m.selection.method =
        select::selection_method_from_string(s.value("method", "ftd"));
    m.selection.k = s.value("k", m.selection.k);
    m.selection.mmr_lambda = s.value("mmr_lambda", m.selection.mmr_lambda);
    m.selection.ridge_scale = s.value("ridge_scale", m.selection.ridge_scale);
    if (s.value("mean_norm", "unsquared") == std::string("squared"))
      m.selection.mean_norm_mode = gauss::MeanNormMode::squared;
    m.selection.seed = s.value("seed", m.selection.seed);
    if (s.contains("per_source_quota"))
      m.selection.per_source_quota =
          s.at("per_source_quota").get<select::SourceQuota>();
    if (s.contains("static_manifest"))
      m.selection.static_manifest =
          resolve(base, s.at("static_manifest").get<std::string>());
  }

  if (j.contains("prompt")) {
    const auto& p = j.at("prompt");
    m.mode = prompt::prompt_mode_from_string(p.value("mode", "icat_qd"));
    m.template_version = p.value("template_version", m.template_version);
    if (p.contains("templates_dir"))
      m.templates_dir = resolve(base, p.at("templates_dir").get<std::string>());
    m.context_tokens = p.value("context_tokens", m.context_tokens);
    m.chars_per_token = p.value("chars_per_token", m.chars_per_token);
  }

  if (j.contains("generation")) m.generation = params_from_json(j.at("generation"));

  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    m.backend.kind = b.value("kind", m.backend.kind);
    if (b.contains("fixtures"))
      m.backend.fixtures = resolve(base, b.at("fixtures").get<std::string>());
    m.backend.parallelism = b.value("parallelism", m.backend.parallelism);
    m.backend.remote.endpoint = b.value("endpoint", std::string{});
    m.backend.remote.path = b.value("path", m.backend.remote.path);
    m.backend.remote.api_key_env =
        b.value("api_key_env", m.backend.remote.api_key_env);
    m.backend.remote.max_retries =
        b.value("max_retries", m.backend.remote.max_retries);
    m.backend.remote.max_remote_calls =
        b.value("max_remote_calls", m.backend.remote.max_remote_calls);
  }

  if (j.contains("embedder")) {
    const auto& e = j.at("embedder");
    m.embedder.kind = e.value("kind", m.embedder.kind);
    m.embedder.seed = e.value("seed", m.embedder.seed);
    m.embedder.dim = e.value("dim", m.embedder.dim);
    m.embedder.remove_stopwords =
        e.value("remove_stopwords", m.embedder.remove_stopwords);
    m.embedder.remote.endpoint = e.value("endpoint", std::string{});
    m.embedder.remote.model = e.value("model", m.embedder.remote.model);
    m.embedder.remote.dim = m.embedder.dim;
  }

  m.metric = eval::metric_from_string(j.value("metric", "cover_em"));
  if (j.contains("cache_dir"))
    m.cache_dir = resolve(base, j.at("cache_dir").get<std::string>());
  return m;
}

std::string RunManifest::to_json_text() const {
  json j;
  j["name"] = name;
  j["method_label"] = label();
  j["target"] = dataset_spec_to_json(target);
  json transfers_json = json::array();
  for (const auto& t : transfers) transfers_json.push_back(dataset_spec_to_json(t));
  j["transfers"] = std::move(transfers_json);

  json s;
  s["method"] = select::to_string(selection.method);
  s["k"] = selection.k;
  s["mmr_lambda"] = selection.mmr_lambda;
  s["ridge_scale"] = selection.ridge_scale;
  s["mean_norm"] = gauss::to_string(selection.mean_norm_mode);
  s["seed"] = selection.seed;
  if (!selection.per_source_quota.empty())
    s["per_source_quota"] = selection.per_source_quota;
  if (selection.static_manifest)
    s["static_manifest"] = selection.static_manifest->string();
  j["selection"] = std::move(s);

  json p;
  p["mode"] = prompt::to_string(mode);
  p["template_version"] = template_version;
  if (templates_dir) p["templates_dir"] = templates_dir->string();
  p["context_tokens"] = context_tokens;
  p["chars_per_token"] = chars_per_token;
  j["prompt"] = std::move(p);

  j["generation"] = params_to_json(generation);

  json b;
  b["kind"] = backend.kind;
  if (!backend.fixtures.empty()) b["fixtures"] = backend.fixtures.string();
  b["parallelism"] = backend.parallelism;
  if (!backend.remote.endpoint.empty()) {
    b["endpoint"] = backend.remote.endpoint;
    b["path"] = backend.remote.path;
    b["api_key_env"] = backend.remote.api_key_env;
    b["max_retries"] = backend.remote.max_retries;
  }
  b["max_remote_calls"] = backend.remote.max_remote_calls;
  j["backend"] = std::move(b);

  json e;
  e["kind"] = embedder.kind;
  e["seed"] = embedder.seed;
  e["dim"] = embedder.dim;
  e["remove_stopwords"] = embedder.remove_stopwords;
  if (!embedder.remote.endpoint.empty()) {
    e["endpoint"] = embedder.remote.endpoint;
    e["model"] = embedder.remote.model;
  }
  j["embedder"] = std::move(e);

  j["metric"] = eval::to_string(metric);
  if (cache_dir) j["cache_dir"] = cache_dir->string();
  return j.dump(2) + "\n";
}

data::Dataset load_with_options(const DatasetSpec& spec) {
  data::Dataset dataset = data::load_dataset(spec.path, spec.format);
  if (spec.two_hop_only) dataset.targets = data::filter_two_hop(dataset.targets);
  if (spec.sample_n)
    dataset.targets = data::sample_items(dataset.targets, *spec.sample_n,
                                         spec.sample_seed.value_or(0));
  return dataset;
}

std::vector<select::Exemplar> load_pool(const RunManifest& manifest) {
  std::vector<select::Exemplar> pool;
  for (const auto& spec : manifest.transfers) {
    data::Dataset dataset = load_with_options(spec);
    for (auto& exemplar : dataset.exemplars) pool.push_back(std::move(exemplar));
  }
  return pool;
}

embed::Embedder make_embedder(const RunManifest& manifest) {
  embed::TokenizationScheme scheme;
  scheme.remove_stopwords = manifest.embedder.remove_stopwords;

  std::shared_ptr<embed::EmbedderBackend> backend;
  if (manifest.embedder.kind == "local") {
    backend = std::make_shared<embed::LocalDeterministicEmbedder>(
        manifest.embedder.seed, manifest.embedder.dim);
  } else if (manifest.embedder.kind == "remote") {
    backend = std::make_shared<embed::RemoteEmbedder>(manifest.embedder.remote);
  } else {
    throw ConfigError("unknown embedder kind: " + manifest.embedder.kind);
  }
  return embed::Embedder(std::move(backend), scheme, manifest.cache_dir);
}

std::shared_ptr<llm::CompletionBackend> make_backend(const BackendSpec& spec) {
  if (spec.kind == "replay") {
    if (spec.fixtures.empty())
      throw ConfigError("replay backend requires a fixtures path");
    return std::make_shared<llm::ReplayBackend>(spec.fixtures);
  }
  if (spec.kind == "remote")
    return std::make_shared<llm::RemoteBackend>(spec.remote);
  throw ConfigError("unknown backend kind: " + spec.kind);
}

prompt::TemplateSet load_templates(const RunManifest& manifest) {
  if (manifest.templates_dir)
    return prompt::TemplateSet::load(*manifest.templates_dir,
                                     manifest.template_version);
  if (manifest.template_version == "v1")
    return prompt::TemplateSet::builtin_v1();
  throw ConfigError("template version " + manifest.template_version +
                    " needs prompt.templates_dir");
}

select::SelectionResult select_for_item(
    const RunManifest& manifest, const std::vector<select::Exemplar>& pool,
    const data::TargetItem& item, const embed::Embedder& embedder) {
  const auto& spec = manifest.selection;
  switch (spec.method) {
    case select::SelectionMethod::ftd: {
      select::FtdOptions options;
      options.ridge_scale = spec.ridge_scale;
      options.mean_norm_mode = spec.mean_norm_mode;
      options.per_source_quota = spec.per_source_quota;
      return select::select_ftd(item.question, pool, spec.k, embedder, options);
    }
    case select::SelectionMethod::knn:
      return select::select_knn(item.question, pool, spec.k, embedder,
                                spec.per_source_quota);
    case select::SelectionMethod::mmr:
      return select::select_mmr(item.question, pool, spec.k, spec.mmr_lambda,
                                embedder, spec.per_source_quota);
    case select::SelectionMethod::random_static:
      return select::select_random(pool, spec.k, spec.seed, /*dynamic=*/false,
                                   {}, spec.per_source_quota);
    case select::SelectionMethod::random_dynamic:
      return select::select_random(pool, spec.k, spec.seed, /*dynamic=*/true,
                                   item.id, spec.per_source_quota);
    case select::SelectionMethod::static_manifest: {
      if (!spec.static_manifest)
        throw ConfigError("static selection requires selection.static_manifest");
      return select::select_static(
          select::load_static_manifest(*spec.static_manifest), pool);
    }
  }
  throw ConfigError("select_for_item: unhandled method");
}

namespace {

json selection_to_json(const select::SelectionResult& selection) {
  json j;
  j["method"] = select::to_string(selection.method);
  j["chosen"] = selection.chosen;
  if (!selection.scores.empty()) j["scores"] = selection.scores;
  j["k"] = selection.k;
  if (selection.seed) j["seed"] = *selection.seed;
  if (!selection.per_source_quota.empty())
    j["per_source_quota"] = selection.per_source_quota;
  return j;
}

select::SelectionResult selection_from_json(const json& j) {
  select::SelectionResult selection;
  selection.method = select::selection_method_from_string(j.at("method"));
  selection.chosen = j.at("chosen").get<std::vector<std::string>>();
  if (j.contains("scores"))
    selection.scores = j.at("scores").get<std::vector<double>>();
  selection.k = j.at("k").get<int>();
  if (j.contains("seed")) selection.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("per_source_quota"))
    selection.per_source_quota =
        j.at("per_source_quota").get<select::SourceQuota>();
  return selection;
}

json parsed_to_json(const prompt::ParsedCompletion& parsed) {
  json j;
  j["status"] = prompt::to_string(parsed.parse_status);
  j["final_answer"] = parsed.final_answer;
  json steps = json::array();
  for (const auto& step : parsed.steps)
    steps.push_back({{"sub_question", step.sub_question},
                     {"sub_answer", step.sub_answer}});
  j["steps"] = std::move(steps);
  if (!parsed.rationale_text.empty()) j["rationale_text"] = parsed.rationale_text;
  return j;
}

prompt::ParsedCompletion parsed_from_json(const json& j) {
  prompt::ParsedCompletion parsed;
  const std::string status = j.at("status").get<std::string>();
  parsed.parse_status = status == "clean"     ? prompt::ParseStatus::clean
                        : status == "fallback" ? prompt::ParseStatus::fallback
                                                : prompt::ParseStatus::failed;
  parsed.final_answer = j.at("final_answer").get<std::string>();
  for (const auto& step : j.at("steps"))
    parsed.steps.push_back({step.at("sub_question").get<std::string>(),
                            step.at("sub_answer").get<std::string>()});
  parsed.rationale_text = j.value("rationale_text", std::string{});
  return parsed;
}

}  // namespace

std::string item_record_to_json(const ItemRecord& record) {
  json j;
  j["test_id"] = record.test_id;
  j["method"] = record.method;
  j["selection"] = selection_to_json(record.selection);
  j["prompt_hash"] = record.prompt_hash;
  j["exemplar_ids"] = record.exemplar_ids;

  json c;
  c["ok"] = record.completion.ok;
  c["backend"] = llm::to_string(record.completion.backend);
  c["latency_ms"] = record.completion.latency_ms;
  if (record.completion.ok) c["raw_text"] = record.completion.raw_text;
  else c["error"] = record.completion.error;
  j["completion"] = std::move(c);

  j["parsed"] = parsed_to_json(record.parsed);
  j["gold"] = record.gold;
  j["answer_type"] =
      record.answer_type == data::AnswerType::numeric ? "numeric" : "span";
  j["metric"] = eval::to_string(record.metric);
  return j.dump();
}

ItemRecord item_record_from_json(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ParseError("item record: invalid JSON line");

  ItemRecord record;
  record.test_id = j.at("test_id").get<std::string>();
  record.method = j.at("method").get<std::string>();
  record.selection = selection_from_json(j.at("selection"));
  record.prompt_hash = j.at("prompt_hash").get<std::string>();
  record.exemplar_ids = j.at("exemplar_ids").get<std::vector<std::string>>();

  const auto& c = j.at("completion");
  record.completion.ok = c.at("ok").get<bool>();
  record.completion.latency_ms = c.at("latency_ms").get<long>();
  const std::string source = c.at("backend").get<std::string>();
  record.completion.backend = source == "remote" ? llm::CompletionSource::remote
                              : source == "cache" ? llm::CompletionSource::cache
                                                   : llm::CompletionSource::replay;
  if (record.completion.ok)
    record.completion.raw_text = c.at("raw_text").get<std::string>();
  else
    record.completion.error = c.value("error", std::string{});
  record.completion.prompt_hash = record.prompt_hash;

  record.parsed = parsed_from_json(j.at("parsed"));
  record.gold = j.at("gold").get<std::string>();
  record.answer_type = j.at("answer_type").get<std::string>() == "numeric"
                           ? data::AnswerType::numeric
                           : data::AnswerType::span;
  record.metric = eval::metric_from_string(j.at("metric").get<std::string>());
  return record;
}

std::filesystem::path make_run_dir(const std::filesystem::path& out_root,
                                   const RunManifest& manifest) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y%m%d-%H%M%S");

  std::filesystem::path run_dir = out_root / (manifest.name + "-" + stamp.str());
  for (int suffix = 1; std::filesystem::exists(run_dir); ++suffix)
    run_dir = out_root /
              (manifest.name + "-" + stamp.str() + "-" + std::to_string(suffix));
  std::filesystem::create_directories(run_dir);
  write_file_atomic(run_dir / "manifest.json", manifest.to_json_text());
  return run_dir;
}

void run_select(const RunManifest& manifest,
                const std::filesystem::path& run_dir) {
  const data::Dataset target = load_with_options(manifest.target);
  const auto pool = load_pool(manifest);
  const auto embedder = make_embedder(manifest);

  std::string log;
  for (const auto& item : target.targets) {
    const auto selection = select_for_item(manifest, pool, item, embedder);
    json j;
    j["test_id"] = item.id;
    j["selection"] = selection_to_json(selection);
    log += j.dump() + "\n";
  }
  write_file_atomic(run_dir / "selections.jsonl", log);
}

void run_pipeline(const RunManifest& manifest,
                  const std::filesystem::path& run_dir) {
  const data::Dataset target = load_with_options(manifest.target);
  const auto pool = load_pool(manifest);
  const auto embedder = make_embedder(manifest);
  const auto templates = load_templates(manifest);
  const llm::CompletionService service(make_backend(manifest.backend),
                                       manifest.cache_dir);

  const bool needs_selection = manifest.mode != prompt::PromptMode::zero_shot_cot;

  std::vector<select::SelectionResult> selections;
  std::vector<prompt::PromptRecord> prompts;
  selections.reserve(target.targets.size());
  prompts.reserve(target.targets.size());
  for (const auto& item : target.targets) {
    select::SelectionResult selection;
    if (needs_selection)
      selection = select_for_item(manifest, pool, item, embedder);
    prompts.push_back(prompt::build_prompt(manifest.mode, selection, pool, item,
                                           templates,
                                           manifest.build_options()));
    selections.push_back(std::move(selection));
  }

  const auto completions =
      service.run_batch(prompts, manifest.generation, manifest.backend.parallelism);

  prompt::ParseOptions parse_options;
  parse_options.numeric_task = manifest.metric == eval::Metric::em;

  std::string log;
  for (std::size_t i = 0; i < target.targets.size(); ++i) {
    const auto& item = target.targets[i];
    ItemRecord record;
    record.test_id = item.id;
    record.method = manifest.label();
    record.selection = selections[i];
    record.prompt_hash = prompts[i].content_hash;
    record.exemplar_ids = prompts[i].exemplar_ids;
    record.completion = completions[i];
    if (record.completion.ok)
      record.parsed = prompt::parse_completion(record.completion.raw_text,
                                               manifest.mode, parse_options);
    record.gold = item.gold_answer;
    record.answer_type = item.answer_type;
    record.metric = manifest.metric;
    log += item_record_to_json(record) + "\n";

    write_file_atomic(run_dir / "prompts" / (item.id + ".txt"),
                      prompts[i].rendered);
  }
  write_file_atomic(run_dir / "outputs.jsonl", log);
}

std::vector<eval::RunOutcome> run_eval(
    const std::filesystem::path& run_dir,
    std::optional<eval::Metric> metric_override) {
  std::ifstream in(run_dir / "outputs.jsonl");
  if (!in)
    throw ConfigError("run_eval: no outputs.jsonl under " + run_dir.string());

  std::vector<eval::RunOutcome> outcomes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const ItemRecord record = item_record_from_json(line);
    const eval::Metric metric = metric_override.value_or(record.metric);
    outcomes.push_back(eval::score(
        record.test_id, record.method, record.prompt_hash, record.parsed,
        record.gold, metric,
        record.answer_type == data::AnswerType::numeric));
  }

  const auto rows = eval::aggregate(outcomes);
  write_file_atomic(run_dir / "results.csv", eval::accuracy_csv(rows));
  write_file_atomic(run_dir / "results.txt", eval::accuracy_table(rows));

  json j = json::array();
  for (const auto& row : rows) {
    json r;
    r["method"] = row.method;
    r["accuracy"] = row.accuracy;
    r["correct"] = row.correct;
    r["total"] = row.total;
    j.push_back(std::move(r));
  }
  write_file_atomic(run_dir / "results.json", j.dump(2) + "\n");
  return outcomes;
}

void run_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir,
                const std::string& baseline_label) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");

  std::vector<std::vector<eval::RunOutcome>> per_run;
  per_run.reserve(run_dirs.size());
  for (const auto& dir : run_dirs) per_run.push_back(run_eval(dir));

  std::string baseline = baseline_label;
  if (baseline.empty() && !per_run.front().empty())
    baseline = per_run.front().front().method;

  const std::vector<eval::RunOutcome>* baseline_outcomes = nullptr;
  for (const auto& outcomes : per_run)
    if (!outcomes.empty() && outcomes.front().method == baseline)
      baseline_outcomes = &outcomes;
  if (baseline_outcomes == nullptr)
    throw ConfigError("report: baseline method " + baseline +
                      " not found among runs");

  std::ostringstream table;
  std::ostringstream csv;
  csv << "method,accuracy,correct,total,p_vs_" << baseline << ",significance\n";
  table << "comparison (baseline: " << baseline << ")\n";

  std::ostringstream confusions;
  for (const auto& outcomes : per_run) {
    const auto rows = eval::aggregate(outcomes);
    for (const auto& row : rows) {
      std::string marks;
      double p = 1.0;
      if (row.method != baseline) {
        const auto c = eval::confusion(outcomes, *baseline_outcomes);
        const auto sig = eval::significance(c);
        p = sig.p_value;
        if (sig.at_0_01) marks = "++";
        else if (sig.at_0_10) marks = "+";
        confusions << eval::confusion_table(c, row.method, baseline) << "\n";
      }
      csv << row.method << "," << std::fixed << std::setprecision(2)
          << row.accuracy << "," << row.correct << "," << row.total << ","
          << std::setprecision(6) << p << "," << marks << "\n";
      table << std::left << std::setw(28) << row.method << std::right
            << std::setw(8) << std::fixed << std::setprecision(2)
            << row.accuracy << marks << "\n";
    }
  }
  table << "\n(+ p<=0.1, ++ p<=0.01, exact McNemar vs " << baseline << ")\n\n";
  table << confusions.str();

  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "report.csv", csv.str());
  write_file_atomic(out_dir / "report.txt", table.str());
}

}  // namespace icat::pipeline
