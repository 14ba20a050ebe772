#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "icat/embed.hpp"
#include "icat/select.hpp"

namespace icat::data {

enum class DatasetFormat {
  aqua_rat,
  tabmwp,
  subqa,
  strategyqa,
  multiarith,
  svamp,
  wqa,
  musique,
  finqa,
  unified,
};

DatasetFormat format_from_string(const std::string& name);
const char* to_string(DatasetFormat format);

enum class AnswerType { numeric, span };

struct TableContext {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string pre_text;
  std::string post_text;

  void validate() const;  // all rows share the header arity
};

struct TargetItem {
  std::string id;
  std::string question;
  std::string gold_answer;
  std::optional<TableContext> context;
  AnswerType answer_type = AnswerType::span;

  void validate() const;
};

/// One loaded file, normalized: transfer datasets populate `exemplars`,
/// target datasets populate `targets`. Record order follows file order.
struct Dataset {
  std::string name;           // defaults to the file stem
  DatasetFormat format = DatasetFormat::unified;
  std::vector<select::Exemplar> exemplars;
  std::vector<TargetItem> targets;

  std::vector<std::string> question_texts() const;
};

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Writes the unified JSON-lines interchange form; re-importing is identity.
void save_unified(const Dataset& dataset, const std::filesystem::path& path);

enum class TableStyle { pipe_rows };

/// Linearize a table for prompting: pre_text, one "header: cell | ..." line
/// per row, post_text. Byte-stable.
std::string serialize_table(const TableContext& table,
                            TableStyle style = TableStyle::pipe_rows);

/// Deterministic subset of n items drawn without replacement from (seed),
/// returned in original file order. Used to materialize evaluation subsets
/// whose published ids are unknown.
std::vector<TargetItem> sample_items(const std::vector<TargetItem>& items,
                                     std::size_t n, std::uint64_t seed);

/// Keep only two-hop questions (ids prefixed "2hop").
std::vector<TargetItem> filter_two_hop(const std::vector<TargetItem>& items);

struct RelatednessRow {
  std::string transfer;
  std::string target;
  double js = 0.0;
};

/// JS divergence over the question texts of each (transfer, target) pair,
/// sorted ascending by divergence.
std::vector<RelatednessRow> relatedness_report(
    const std::vector<std::pair<Dataset, Dataset>>& pairs,
    const embed::TokenizationScheme& scheme = {});

std::string relatedness_csv(const std::vector<RelatednessRow>& rows,
                            const embed::TokenizationScheme& scheme);
std::string relatedness_table(const std::vector<RelatednessRow>& rows,
                              const embed::TokenizationScheme& scheme);

/// Strip currency symbols, commas, percent signs, parentheses and trailing
/// unit words, then parse the last remaining number. Nullopt when no number
/// survives.
std::optional<double> parse_numeric_answer(const std::string& text);

}  // namespace icat::data
