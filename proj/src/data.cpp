#include "icat/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "json.hpp"

namespace icat::data {

// Loaders use ordered_json so record order follows file order even for
// dict-shaped files.
using ojson = nlohmann::ordered_json;

DatasetFormat format_from_string(const std::string& name) {
  if (name == "aqua_rat") return DatasetFormat::aqua_rat;
  if (name == "tabmwp") return DatasetFormat::tabmwp;
  if (name == "subqa") return DatasetFormat::subqa;
  if (name == "strategyqa") return DatasetFormat::strategyqa;
  if (name == "multiarith") return DatasetFormat::multiarith;
  if (name == "svamp") return DatasetFormat::svamp;
  if (name == "wqa") return DatasetFormat::wqa;
  if (name == "musique") return DatasetFormat::musique;
  if (name == "finqa") return DatasetFormat::finqa;
  if (name == "unified") return DatasetFormat::unified;
  throw ConfigError("unknown dataset format: " + name);
}

const char* to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::aqua_rat: return "aqua_rat";
    case DatasetFormat::tabmwp: return "tabmwp";
    case DatasetFormat::subqa: return "subqa";
    case DatasetFormat::strategyqa: return "strategyqa";
    case DatasetFormat::multiarith: return "multiarith";
    case DatasetFormat::svamp: return "svamp";
    case DatasetFormat::wqa: return "wqa";
    case DatasetFormat::musique: return "musique";
    case DatasetFormat::finqa: return "finqa";
    case DatasetFormat::unified: return "unified";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

const ojson& require_field(const ojson& j, const char* field,
                           const std::string& context) {
  if (!j.contains(field))
    throw SchemaError(context + ": missing field \"" + field + "\"");
  return j.at(field);
}

std::string string_field(const ojson& j, const char* field,
                         const std::string& context) {
  const auto& v = require_field(j, field, context);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return ojson(v).dump();
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  throw SchemaError(context + ": field \"" + field + "\" is not a string");
}

// Shortest clean rendering of a numeric gold answer: 35.0 -> "35".
std::string format_number(double value) {
  if (std::isfinite(value) && value == std::floor(value) &&
      std::abs(value) < 1e15) {
    std::ostringstream out;
    out << static_cast<long long>(value);
    return out.str();
  }
  std::ostringstream out;
  out << std::setprecision(12) << value;
  return out.str();
}

std::vector<ojson> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path.string());
  std::vector<ojson> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ojson j = ojson::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": invalid JSON");
    records.push_back(std::move(j));
  }
  return records;
}

ojson read_json(const std::filesystem::path& path) {
  ojson j = ojson::parse(read_file(path), nullptr, false);
  if (j.is_discarded())
    throw ParseError(path.string() + ": invalid JSON");
  return j;
}

std::set<select::Category> categories_field(const ojson& j) {
  std::set<select::Category> tags;
  if (j.contains("category"))
    for (const auto& tag : j.at("category"))
      tags.insert(select::category_from_string(tag.get<std::string>()));
  return tags;
}

bool looks_like_comparison(const std::string& question) {
  static const std::set<std::string> kMarkers = {
      "than",  "more",  "exceed", "exceeds", "earlier", "later",
      "older", "younger", "higher", "lower",  "longer",  "shorter",
      "bigger", "smaller", "fewer", "most",   "least"};
  for (const auto& token : embed::tokenize_lenient(question))
    if (kMarkers.count(token) != 0) return true;
  return false;
}

std::string join(const std::vector<std::string>& parts,
                 const std::string& sep) {
  std::string out;
  for (const auto& part : parts) {
    if (!out.empty() && !part.empty()) out += sep;
    out += part;
  }
  return out;
}

// --- per-format adapters ---------------------------------------------------

void load_unified(const std::filesystem::path& path, Dataset& out) {
  std::size_t line_no = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line_no;
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    const bool is_exemplar = j.contains("rationale") || j.contains("decomposition");
    if (is_exemplar) {
      select::Exemplar e;
      e.id = string_field(j, "id", ctx);
      e.question = string_field(j, "question", ctx);
      e.answer = string_field(j, "answer", ctx);
      if (j.contains("rationale"))
        e.rationale = j.at("rationale").get<std::string>();
      if (j.contains("decomposition"))
        for (const auto& step : j.at("decomposition"))
          e.decomposition.push_back(
              {string_field(step, "sub_question", ctx),
               string_field(step, "sub_answer", ctx)});
      e.category = categories_field(j);
      e.source_dataset = j.value("source_dataset", out.name);
      e.validate();
      out.exemplars.push_back(std::move(e));
    } else {
      TargetItem t;
      t.id = string_field(j, "id", ctx);
      t.question = string_field(j, "question", ctx);
      t.gold_answer = string_field(j, "answer", ctx);
      if (j.contains("answer_type"))
        t.answer_type = j.at("answer_type").get<std::string>() == "numeric"
                            ? AnswerType::numeric
                            : AnswerType::span;
      if (j.contains("context")) {
        const auto& c = j.at("context");
        TableContext table;
        table.pre_text = c.value("pre_text", "");
        table.post_text = c.value("post_text", "");
        if (c.contains("header"))
          table.header = c.at("header").get<std::vector<std::string>>();
        if (c.contains("rows"))
          for (const auto& row : c.at("rows"))
            table.rows.push_back(row.get<std::vector<std::string>>());
        t.context = std::move(table);
      }
      t.validate();
      out.targets.push_back(std::move(t));
    }
  }
}

void load_aqua_rat(const std::filesystem::path& path, Dataset& out) {
  std::size_t line_no = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line_no;
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    select::Exemplar e;
    e.id = j.contains("id") ? string_field(j, "id", ctx)
                            : "aqua-" + std::to_string(line_no);
    const std::string correct = string_field(j, "correct", ctx);
    const auto options =
        require_field(j, "options", ctx).get<std::vector<std::string>>();

    // Multiple-choice options fold into the question text; the gold letter
    // resolves to its option value when that value is numeric.
    e.question = string_field(j, "question", ctx) + " Options: " +
                 join(options, " ");
    std::string resolved = correct;
    for (const auto& option : options) {
      if (option.size() >= 2 && option.compare(0, correct.size(), correct) == 0 &&
          option[correct.size()] == ')') {
        const std::string value = trim(option.substr(correct.size() + 1));
        if (parse_numeric_answer(value).has_value()) resolved = value;
        break;
      }
    }
    e.answer = resolved;
    e.rationale = string_field(j, "rationale", ctx);
    e.category = categories_field(j);
    e.source_dataset = j.value("source_dataset", std::string("aqua_rat"));
    e.validate();
    out.exemplars.push_back(std::move(e));
  }
}

void load_tabmwp(const std::filesystem::path& path, Dataset& out) {
  const ojson all = read_json(path);
  if (!all.is_object())
    throw SchemaError(path.string() + ": expected an object keyed by problem id");
  for (const auto& [key, j] : all.items()) {
    const std::string ctx = path.string() + "#" + key;
    select::Exemplar e;
    e.id = key;
    std::vector<std::string> parts;
    if (j.contains("table_title")) parts.push_back(j.at("table_title"));
    parts.push_back(string_field(j, "table", ctx));
    parts.push_back(string_field(j, "question", ctx));
    e.question = join(parts, "\n");
    e.answer = string_field(j, "answer", ctx);
    e.rationale = string_field(j, "solution", ctx);
    e.category = categories_field(j);
    e.category.insert(select::Category::table);
    e.source_dataset = j.value("source_dataset", std::string("tabmwp"));
    e.validate();
    out.exemplars.push_back(std::move(e));
  }
}

void load_subqa(const std::filesystem::path& path, Dataset& out) {
  std::size_t line_no = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line_no;
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    select::Exemplar e;
    e.id = j.contains("id") ? string_field(j, "id", ctx)
                            : "subqa-" + std::to_string(line_no);
    e.question = string_field(j, "question", ctx);
    e.answer = string_field(j, "answer", ctx);
    for (const auto& step : require_field(j, "decomposition", ctx))
      e.decomposition.push_back({string_field(step, "sub_question", ctx),
                                 string_field(step, "sub_answer", ctx)});
    e.category = categories_field(j);
    if (e.category.empty()) e.category.insert(select::Category::compositional);
    e.source_dataset = j.value("source_dataset", std::string("subqa"));
    e.validate();
    out.exemplars.push_back(std::move(e));
  }
}

void load_strategyqa(const std::filesystem::path& path, Dataset& out) {
  const ojson all = read_json(path);
  if (!all.is_array())
    throw SchemaError(path.string() + ": expected an array of records");
  std::size_t index = 0;
  for (const auto& j : all) {
    ++index;
    const std::string ctx = path.string() + "#" + std::to_string(index);
    select::Exemplar e;
    e.id = j.contains("qid") ? string_field(j, "qid", ctx)
                             : "strategyqa-" + std::to_string(index);
    e.question = string_field(j, "question", ctx);
    e.answer = string_field(j, "answer", ctx);

    const auto& decomposition = require_field(j, "decomposition", ctx);
    std::vector<std::string> sub_answers;
    if (j.contains("sub_answers"))
      sub_answers = j.at("sub_answers").get<std::vector<std::string>>();
    else if (j.contains("facts"))
      sub_answers = j.at("facts").get<std::vector<std::string>>();

    std::size_t step_index = 0;
    for (const auto& step : decomposition) {
      if (step.is_object()) {
        e.decomposition.push_back({string_field(step, "sub_question", ctx),
                                   string_field(step, "sub_answer", ctx)});
      } else {
        // Plain sub-question strings need aligned answers; refuse to emit
        // hollow exemplars when none exist.
        if (step_index >= sub_answers.size())
          throw SchemaError(ctx +
                            ": missing field \"sub_answers\" (decomposition "
                            "strings lack aligned answers)");
        e.decomposition.push_back(
            {step.get<std::string>(), sub_answers[step_index]});
      }
      ++step_index;
    }

    e.category = categories_field(j);
    if (e.category.empty())
      e.category.insert(looks_like_comparison(e.question)
                            ? select::Category::comparison
                            : select::Category::inference);
    e.source_dataset = j.value("source_dataset", std::string("strategyqa"));
    e.validate();
    out.exemplars.push_back(std::move(e));
  }
}

void load_multiarith(const std::filesystem::path& path, Dataset& out) {
  const ojson all = read_json(path);
  std::size_t index = 0;
  for (const auto& j : all) {
    ++index;
    const std::string ctx = path.string() + "#" + std::to_string(index);
    TargetItem t;
    t.id = j.contains("iIndex")
               ? "multiarith-" + string_field(j, "iIndex", ctx)
               : "multiarith-" + std::to_string(index);
    t.question = trim(string_field(j, "sQuestion", ctx));
    const auto& solutions = require_field(j, "lSolutions", ctx);
    if (!solutions.is_array() || solutions.empty())
      throw SchemaError(ctx + ": field \"lSolutions\" is empty");
    t.gold_answer = format_number(solutions.at(0).get<double>());
    t.answer_type = AnswerType::numeric;
    t.validate();
    out.targets.push_back(std::move(t));
  }
}

void load_svamp(const std::filesystem::path& path, Dataset& out) {
  const ojson all = read_json(path);
  std::size_t index = 0;
  for (const auto& j : all) {
    ++index;
    const std::string ctx = path.string() + "#" + std::to_string(index);
    TargetItem t;
    t.id = j.contains("ID") ? string_field(j, "ID", ctx)
                            : "svamp-" + std::to_string(index);
    t.question =
        trim(trim(string_field(j, "Body", ctx)) + " " +
             trim(string_field(j, "Question", ctx)));
    t.gold_answer = format_number(require_field(j, "Answer", ctx).get<double>());
    t.answer_type = AnswerType::numeric;
    t.validate();
    out.targets.push_back(std::move(t));
  }
}

void load_wqa(const std::filesystem::path& path, Dataset& out) {
  const ojson all = read_json(path);
  std::size_t index = 0;
  for (const auto& j : all) {
    ++index;
    const std::string ctx = path.string() + "#" + std::to_string(index);
    TargetItem t;
    t.id = j.contains("_id") ? string_field(j, "_id", ctx)
                             : string_field(j, "id", ctx);
    t.question = string_field(j, "question", ctx);
    t.gold_answer = string_field(j, "answer", ctx);
    t.answer_type = AnswerType::span;
    t.validate();
    out.targets.push_back(std::move(t));
  }
}

void load_musique(const std::filesystem::path& path, Dataset& out) {
  std::size_t line_no = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line_no;
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    TargetItem t;
    t.id = string_field(j, "id", ctx);
    t.question = string_field(j, "question", ctx);
    t.gold_answer = string_field(j, "answer", ctx);
    t.answer_type = AnswerType::span;
    t.validate();
    out.targets.push_back(std::move(t));
  }
}

void load_finqa(const std::filesystem::path& path, Dataset& out) {
  const ojson all = read_json(path);
  std::size_t index = 0;
  for (const auto& j : all) {
    ++index;
    const std::string ctx = path.string() + "#" + std::to_string(index);
    TargetItem t;
    t.id = j.contains("id") ? string_field(j, "id", ctx)
                            : "finqa-" + std::to_string(index);
    const auto& qa = require_field(j, "qa", ctx);
    t.question = string_field(qa, "question", ctx);
    t.gold_answer = string_field(qa, "answer", ctx);
    t.answer_type = parse_numeric_answer(t.gold_answer).has_value()
                        ? AnswerType::numeric
                        : AnswerType::span;

    TableContext table;
    const auto& grid = require_field(j, "table", ctx);
    if (!grid.is_array() || grid.empty())
      throw SchemaError(ctx + ": field \"table\" is empty");
    table.header = grid.at(0).get<std::vector<std::string>>();
    for (std::size_t r = 1; r < grid.size(); ++r)
      table.rows.push_back(grid.at(r).get<std::vector<std::string>>());
    if (j.contains("pre_text"))
      table.pre_text = join(j.at("pre_text").get<std::vector<std::string>>(), " ");
    if (j.contains("post_text"))
      table.post_text =
          join(j.at("post_text").get<std::vector<std::string>>(), " ");
    t.context = std::move(table);
    t.validate();
    out.targets.push_back(std::move(t));
  }
}

}  // namespace

void TableContext::validate() const {
  for (const auto& row : rows)
    if (row.size() != header.size())
      throw SchemaError("table row arity " + std::to_string(row.size()) +
                        " does not match header arity " +
                        std::to_string(header.size()));
}

void TargetItem::validate() const {
  if (question.empty()) throw SchemaError("target item " + id + ": empty question");
  if (answer_type == AnswerType::numeric &&
      !parse_numeric_answer(gold_answer).has_value())
    throw SchemaError("target item " + id + ": numeric gold answer \"" +
                      gold_answer + "\" does not parse");
  if (context) context->validate();
}

std::vector<std::string> Dataset::question_texts() const {
  std::vector<std::string> out;
  out.reserve(exemplars.size() + targets.size());
  for (const auto& e : exemplars) out.push_back(e.question);
  for (const auto& t : targets) out.push_back(t.question);
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  Dataset out;
  out.name = path.stem().string();
  out.format = format;
  switch (format) {
    case DatasetFormat::unified: load_unified(path, out); break;
    case DatasetFormat::aqua_rat: load_aqua_rat(path, out); break;
    case DatasetFormat::tabmwp: load_tabmwp(path, out); break;
    case DatasetFormat::subqa: load_subqa(path, out); break;
    case DatasetFormat::strategyqa: load_strategyqa(path, out); break;
    case DatasetFormat::multiarith: load_multiarith(path, out); break;
    case DatasetFormat::svamp: load_svamp(path, out); break;
    case DatasetFormat::wqa: load_wqa(path, out); break;
    case DatasetFormat::musique: load_musique(path, out); break;
    case DatasetFormat::finqa: load_finqa(path, out); break;
  }
  return out;
}

void save_unified(const Dataset& dataset, const std::filesystem::path& path) {
  std::string out;
  for (const auto& e : dataset.exemplars) {
    ojson j;
    j["id"] = e.id;
    j["question"] = e.question;
    j["answer"] = e.answer;
    if (e.has_rationale()) j["rationale"] = e.rationale;
    if (e.has_decomposition()) {
      ojson steps = ojson::array();
      for (const auto& step : e.decomposition)
        steps.push_back({{"sub_question", step.sub_question},
                         {"sub_answer", step.sub_answer}});
      j["decomposition"] = std::move(steps);
    }
    if (!e.category.empty()) {
      ojson tags = ojson::array();
      for (auto tag : e.category) tags.push_back(select::to_string(tag));
      j["category"] = std::move(tags);
    }
    j["source_dataset"] = e.source_dataset;
    out += j.dump() + "\n";
  }
  for (const auto& t : dataset.targets) {
    ojson j;
    j["id"] = t.id;
    j["question"] = t.question;
    j["answer"] = t.gold_answer;
    j["answer_type"] =
        t.answer_type == AnswerType::numeric ? "numeric" : "span";
    if (t.context) {
      ojson c;
      c["pre_text"] = t.context->pre_text;
      c["header"] = t.context->header;
      c["rows"] = t.context->rows;
      c["post_text"] = t.context->post_text;
      j["context"] = std::move(c);
    }
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::string serialize_table(const TableContext& table, TableStyle style) {
  (void)style;  // pipe_rows is the only style
  table.validate();
  std::vector<std::string> sections;
  if (!table.pre_text.empty()) sections.push_back(table.pre_text);
  for (const auto& row : table.rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += " | ";
      line += table.header[c] + ": " + row[c];
    }
    sections.push_back(line);
  }
  if (!table.post_text.empty()) sections.push_back(table.post_text);
  return join(sections, "\n");
}

std::vector<TargetItem> sample_items(const std::vector<TargetItem>& items,
                                     std::size_t n, std::uint64_t seed) {
  if (n >= items.size()) return items;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  DetRng rng(mix64(seed, 0x73616d70ull));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());  // keep file order
  std::vector<TargetItem> out;
  out.reserve(n);
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

std::vector<TargetItem> filter_two_hop(const std::vector<TargetItem>& items) {
  std::vector<TargetItem> out;
  for (const auto& item : items)
    if (item.id.rfind("2hop", 0) == 0) out.push_back(item);
  return out;
}

std::vector<RelatednessRow> relatedness_report(
    const std::vector<std::pair<Dataset, Dataset>>& pairs,
    const embed::TokenizationScheme& scheme) {
  std::vector<RelatednessRow> rows;
  rows.reserve(pairs.size());
  for (const auto& [transfer, target] : pairs) {
    RelatednessRow row;
    row.transfer = transfer.name;
    row.target = target.name;
    row.js = select::js_divergence(transfer.question_texts(),
                                   target.question_texts(), scheme);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.js != b.js) return a.js < b.js;
    return std::tie(a.transfer, a.target) < std::tie(b.transfer, b.target);
  });
  return rows;
}

std::string relatedness_csv(const std::vector<RelatednessRow>& rows,
                            const embed::TokenizationScheme& scheme) {
  std::ostringstream out;
  out << "transfer,target,js_divergence,scheme\n";
  for (const auto& row : rows) {
    out << row.transfer << "," << row.target << "," << std::fixed
        << std::setprecision(6) << row.js << "," << scheme.id() << "\n";
  }
  return out.str();
}

std::string relatedness_table(const std::vector<RelatednessRow>& rows,
                              const embed::TokenizationScheme& scheme) {
  std::size_t w1 = 8, w2 = 6;
  for (const auto& row : rows) {
    w1 = std::max(w1, row.transfer.size());
    w2 = std::max(w2, row.target.size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(w1) + 2) << "transfer"
      << std::setw(static_cast<int>(w2) + 2) << "target" << "js\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(static_cast<int>(w1) + 2) << row.transfer
        << std::setw(static_cast<int>(w2) + 2) << row.target << std::fixed
        << std::setprecision(4) << row.js << "\n";
  }
  out << "(tokenization: " << scheme.id() << ")\n";
  return out.str();
}

std::optional<double> parse_numeric_answer(const std::string& text) {
  static const std::set<std::string> kUnitWords = {
      "billion", "billions", "million",  "millions", "thousand",
      "thousands", "dollar", "dollars",  "usd",      "rs",
      "percent",  "percentage", "points", "units"};

  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    if (c == '$' || c == ',' || c == '%') continue;
    if (c == '(' || c == ')') {
      cleaned.push_back(' ');
      continue;
    }
    cleaned.push_back(c);
  }

  // Drop unit words so "68.9 (billion)" reduces to its number.
  std::istringstream words(cleaned);
  std::string word, rebuilt;
  while (words >> word) {
    if (kUnitWords.count(lower(word)) != 0) continue;
    rebuilt += word + " ";
  }

  static const std::regex kNumber(
      R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
  std::optional<double> last;
  for (auto it = std::sregex_iterator(rebuilt.begin(), rebuilt.end(), kNumber);
       it != std::sregex_iterator(); ++it) {
    std::string value = it->str();
    // A dot right after a word is an abbreviation period, not a decimal
    // point: "Rs.360" reads as 360, not .360.
    const auto pos = static_cast<std::size_t>(it->position());
    if (value.size() > 1 && value.front() == '.' && pos > 0 &&
        std::isalpha(static_cast<unsigned char>(rebuilt[pos - 1])))
      value.erase(value.begin());
    try {
      const double v = std::stod(value);
      if (std::isfinite(v)) last = v;
    } catch (const std::exception&) {
    }
  }
  return last;
}

}  // namespace icat::data
