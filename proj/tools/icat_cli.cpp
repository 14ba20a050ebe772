// icat — in-context ability transfer pipeline.
//
// Subcommands: analyze, select, run, eval, report.
// Exit codes: 0 success, 2 config error, 3 backend error, 4 fixture miss.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icat/pipeline.hpp"

namespace fs = std::filesystem;
using namespace icat;

namespace {

struct GlobalFlags {
  std::string data_root;
  std::string cache_dir;
  std::string backend;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_remote_calls;
  std::optional<int> parallelism;
};

pipeline::RunManifest load_manifest(const std::string& path,
                                    const GlobalFlags& flags) {
  auto manifest = pipeline::RunManifest::load(path);

  // CLI overrides are frozen into the stored manifest copy.
  if (!flags.data_root.empty()) {
    auto rebase = [&](pipeline::DatasetSpec& spec) {
      if (spec.path.is_relative())
        spec.path = fs::path(flags.data_root) / spec.path;
      else if (!fs::exists(spec.path))
        spec.path = fs::path(flags.data_root) / spec.path.filename();
    };
    rebase(manifest.target);
    for (auto& t : manifest.transfers) rebase(t);
  }
  if (!flags.cache_dir.empty()) manifest.cache_dir = fs::path(flags.cache_dir);
  if (!flags.backend.empty()) manifest.backend.kind = flags.backend;
  if (flags.seed) {
    manifest.selection.seed = *flags.seed;
    manifest.embedder.seed = *flags.seed;
  }
  if (flags.max_remote_calls)
    manifest.backend.remote.max_remote_calls = *flags.max_remote_calls;
  if (flags.parallelism) manifest.backend.parallelism = *flags.parallelism;
  return manifest;
}

struct AnalyzePair {
  std::string transfer_path, transfer_format, target_path, target_format;
};

AnalyzePair parse_pair(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4)
    throw ConfigError("--pair expects transfer_path,format,target_path,format");
  return {parts[0], parts[1], parts[2], parts[3]};
}

int dispatch(int argc, char** argv) {
  CLI::App app{"icat: exemplar selection, decomposition prompting and "
               "evaluation for in-context ability transfer"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--data-root", flags.data_root,
                 "Base directory for relative dataset paths");
  app.add_option("--cache-dir", flags.cache_dir,
                 "Embedding/completion cache directory");
  app.add_option("--backend", flags.backend,
                 "Completion backend override: replay|remote");
  app.add_option("--out", flags.out, "Output root for run directories");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed override");
  int max_calls_value = 0;
  auto* max_calls_opt = app.add_option("--max-remote-calls", max_calls_value,
                                       "Spend cap for remote backends");
  int parallelism_value = 1;
  auto* par_opt =
      app.add_option("--parallelism", parallelism_value, "In-flight calls");

  // analyze ------------------------------------------------------------
  auto* analyze = app.add_subcommand(
      "analyze", "JS-divergence relatedness report between datasets");
  analyze->fallthrough();
  std::vector<std::string> pair_specs;
  std::string transfer_path, transfer_format = "unified";
  std::string target_path, target_format = "unified";
  bool remove_stopwords = false;
  analyze->add_option("--pair", pair_specs,
                      "transfer_path,format,target_path,format (repeatable)");
  analyze->add_option("--transfer", transfer_path, "Transfer dataset path");
  analyze->add_option("--transfer-format", transfer_format, "Transfer format");
  analyze->add_option("--target", target_path, "Target dataset path");
  analyze->add_option("--target-format", target_format, "Target format");
  analyze->add_flag("--remove-stopwords", remove_stopwords,
                    "Drop stopwords before the unigram distributions");

  // select / run ---------------------------------------------------------
  std::string manifest_path;
  auto* select_cmd =
      app.add_subcommand("select", "Selection log per test item");
  select_cmd->fallthrough();
  select_cmd->add_option("--manifest", manifest_path, "Run manifest (JSON)")
      ->required();
  auto* run_cmd =
      app.add_subcommand("run", "Full pipeline: select, prompt, complete, parse");
  run_cmd->fallthrough();
  run_cmd->add_option("--manifest", manifest_path, "Run manifest (JSON)")
      ->required();

  // eval -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Score a finished run directory");
  eval_cmd->fallthrough();
  std::string run_dir;
  std::string metric_name;
  eval_cmd->add_option("--run-dir", run_dir, "Run directory")->required();
  eval_cmd->add_option("--metric", metric_name, "em|cover_em override");

  // report ---------------------------------------------------------------
  auto* report_cmd = app.add_subcommand(
      "report", "Comparison table, confusion matrices and significance");
  report_cmd->fallthrough();
  std::vector<std::string> report_dirs;
  std::string baseline;
  report_cmd->add_option("run_dirs", report_dirs, "Run directories")
      ->required();
  report_cmd->add_option("--baseline", baseline,
                         "Baseline method label for McNemar");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are config errors
  }

  if (seed_opt->count() > 0) flags.seed = seed_value;
  if (max_calls_opt->count() > 0) flags.max_remote_calls = max_calls_value;
  if (par_opt->count() > 0) flags.parallelism = parallelism_value;

  if (analyze->parsed()) {
    embed::TokenizationScheme scheme;
    scheme.remove_stopwords = remove_stopwords;

    std::vector<AnalyzePair> pairs;
    for (const auto& spec : pair_specs) pairs.push_back(parse_pair(spec));
    if (!transfer_path.empty() && !target_path.empty())
      pairs.push_back(
          {transfer_path, transfer_format, target_path, target_format});
    if (pairs.empty())
      throw ConfigError("analyze: give --pair or --transfer/--target");

    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      if (path.is_relative() && !flags.data_root.empty())
        path = fs::path(flags.data_root) / path;
      return path;
    };

    std::vector<std::pair<data::Dataset, data::Dataset>> loaded;
    for (const auto& pair : pairs)
      loaded.emplace_back(
          data::load_dataset(resolve(pair.transfer_path),
                             data::format_from_string(pair.transfer_format)),
          data::load_dataset(resolve(pair.target_path),
                             data::format_from_string(pair.target_format)));

    const auto rows = data::relatedness_report(loaded, scheme);
    std::cout << data::relatedness_table(rows, scheme);
    fs::create_directories(flags.out);
    write_file_atomic(fs::path(flags.out) / "relatedness.csv",
                      data::relatedness_csv(rows, scheme));
    std::cout << "wrote " << (fs::path(flags.out) / "relatedness.csv").string()
              << "\n";
    return 0;
  }

  if (select_cmd->parsed()) {
    const auto manifest = load_manifest(manifest_path, flags);
    const auto dir = pipeline::make_run_dir(flags.out, manifest);
    pipeline::run_select(manifest, dir);
    std::cout << "selections written to " << dir.string() << "\n";
    return 0;
  }

  if (run_cmd->parsed()) {
    const auto manifest = load_manifest(manifest_path, flags);
    const auto dir = pipeline::make_run_dir(flags.out, manifest);
    pipeline::run_pipeline(manifest, dir);

    // A batch with embedded failures must not exit 0 silently.
    std::ifstream in(dir / "outputs.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto record = pipeline::item_record_from_json(line);
      if (!record.completion.ok) {
        std::cerr << "item " << record.test_id
                  << " failed: " << record.completion.error << "\n";
        if (record.completion.error.find("no fixture") != std::string::npos)
          throw ReplayMissError(record.completion.error);
        throw BackendUnavailableError(record.completion.error);
      }
    }

    const auto outcomes = pipeline::run_eval(dir);
    std::cout << eval::accuracy_table(eval::aggregate(outcomes));
    std::cout << "run directory: " << dir.string() << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    std::optional<eval::Metric> metric;
    if (!metric_name.empty()) metric = eval::metric_from_string(metric_name);
    const auto outcomes = pipeline::run_eval(run_dir, metric);
    std::cout << eval::accuracy_table(eval::aggregate(outcomes));
    return 0;
  }

  if (report_cmd->parsed()) {
    std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
    pipeline::run_report(dirs, flags.out, baseline);
    std::cout << read_file(fs::path(flags.out) / "report.txt");
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ReplayMissError& e) {
    std::cerr << "fixture miss: " << e.what() << "\n";
    return 4;
  } catch (const BudgetExceededError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 3;
  } catch (const BackendUnavailableError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
