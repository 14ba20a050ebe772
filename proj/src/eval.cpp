#include "icat/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "icat/data.hpp"

namespace icat::eval {

Metric metric_from_string(const std::string& name) {
  if (name == "em") return Metric::em;
  if (name == "cover_em") return Metric::cover_em;
  throw ConfigError("unknown metric: " + name);
}

const char* to_string(Metric metric) {
  return metric == Metric::em ? "em" : "cover_em";
}

namespace {

// Case/whitespace/punctuation normalization shared by span EM and cover-EM.
// Punctuation becomes a separator so token boundaries survive.
std::vector<std::string> normalize_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c) || (c < 0x80 && std::ispunct(c))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& token : tokens) {
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

}  // namespace

bool exact_match(const std::string& pred, const std::string& gold,
                 bool numeric, bool* unparseable) {
  if (unparseable != nullptr) *unparseable = false;
  if (gold.empty()) throw ConfigError("exact_match: empty gold answer");

  if (numeric) {
    const auto gold_value = data::parse_numeric_answer(gold);
    if (!gold_value)
      throw ConfigError("exact_match: numeric gold \"" + gold +
                        "\" has no number");
    const auto pred_value = data::parse_numeric_answer(pred);
    if (!pred_value) {
      if (unparseable != nullptr) *unparseable = true;
      return false;
    }
    const double tol = 1e-4 * std::max(1.0, std::abs(*gold_value));
    return std::abs(*pred_value - *gold_value) <= tol;
  }

  return join_tokens(normalize_tokens(pred)) ==
         join_tokens(normalize_tokens(gold));
}

bool cover_em(const std::string& pred, const std::string& gold) {
  if (gold.empty()) throw ConfigError("cover_em: empty gold answer");
  const auto pred_tokens = normalize_tokens(pred);
  const auto gold_tokens = normalize_tokens(gold);
  if (gold_tokens.empty() || pred_tokens.size() < gold_tokens.size())
    return false;

  for (std::size_t start = 0;
       start + gold_tokens.size() <= pred_tokens.size(); ++start) {
    bool match = true;
    for (std::size_t i = 0; i < gold_tokens.size(); ++i) {
      if (pred_tokens[start + i] != gold_tokens[i]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

RunOutcome score(const std::string& test_id, const std::string& method,
                 const std::string& prompt_hash,
                 const prompt::ParsedCompletion& parsed,
                 const std::string& gold, Metric metric, bool numeric_gold) {
  RunOutcome outcome;
  outcome.test_id = test_id;
  outcome.method = method;
  outcome.prompt_hash = prompt_hash;
  outcome.parsed = parsed;
  outcome.gold = gold;
  outcome.metric = metric;

  if (parsed.parse_status == prompt::ParseStatus::failed ||
      parsed.final_answer.empty()) {
    outcome.correct = false;
    return outcome;
  }
  if (metric == Metric::em) {
    outcome.correct = exact_match(parsed.final_answer, gold, numeric_gold,
                                  &outcome.flagged_unparseable);
  } else {
    outcome.correct = cover_em(parsed.final_answer, gold);
  }
  return outcome;
}

std::vector<MethodAccuracy> aggregate(const std::vector<RunOutcome>& outcomes) {
  std::map<std::string, MethodAccuracy> by_method;
  for (const auto& outcome : outcomes) {
    auto& row = by_method[outcome.method];
    row.method = outcome.method;
    ++row.total;
    if (outcome.correct) ++row.correct;
  }
  std::vector<MethodAccuracy> rows;
  rows.reserve(by_method.size());
  for (auto& [name, row] : by_method) {
    row.accuracy =
        row.total == 0 ? 0.0 : 100.0 * row.correct / static_cast<double>(row.total);
    rows.push_back(row);
  }
  return rows;
}

std::string accuracy_table(const std::vector<MethodAccuracy>& rows) {
  std::size_t width = 6;
  for (const auto& row : rows) width = std::max(width, row.method.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width) + 2) << "method"
      << std::right << std::setw(9) << "accuracy" << std::setw(9) << "correct"
      << std::setw(7) << "total" << "\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << row.method
        << std::right << std::setw(9) << std::fixed << std::setprecision(2)
        << row.accuracy << std::setw(9) << row.correct << std::setw(7)
        << row.total << "\n";
  }
  return out.str();
}

std::string accuracy_csv(const std::vector<MethodAccuracy>& rows) {
  std::ostringstream out;
  out << "method,accuracy,correct,total\n";
  for (const auto& row : rows)
    out << row.method << "," << std::fixed << std::setprecision(2)
        << row.accuracy << "," << row.correct << "," << row.total << "\n";
  return out.str();
}

Confusion confusion(const std::vector<RunOutcome>& method_a,
                    const std::vector<RunOutcome>& method_b) {
  std::map<std::string, bool> b_by_id;
  for (const auto& outcome : method_b) b_by_id[outcome.test_id] = outcome.correct;
  if (method_a.size() != method_b.size() || method_a.size() != b_by_id.size())
    throw ConfigError("confusion: methods cover different test sets");

  Confusion c;
  for (const auto& outcome : method_a) {
    auto it = b_by_id.find(outcome.test_id);
    if (it == b_by_id.end())
      throw ConfigError("confusion: test id " + outcome.test_id +
                        " missing from second method");
    if (outcome.correct && it->second) ++c.both_correct;
    else if (outcome.correct) ++c.a_only;
    else if (it->second) ++c.b_only;
    else ++c.both_wrong;
  }
  return c;
}

std::string confusion_table(const Confusion& c, const std::string& name_a,
                            const std::string& name_b) {
  std::ostringstream out;
  out << "confusion (" << name_a << " vs " << name_b << ")\n";
  out << "              " << name_b << "+   " << name_b << "-\n";
  out << name_a << "+   " << std::setw(5) << c.both_correct << std::setw(7)
      << c.a_only << "\n";
  out << name_a << "-   " << std::setw(5) << c.b_only << std::setw(7)
      << c.both_wrong << "\n";
  return out.str();
}

std::string confusion_csv(const Confusion& c, const std::string& name_a,
                          const std::string& name_b) {
  std::ostringstream out;
  out << "method_a,method_b,both_correct,a_only,b_only,both_wrong\n";
  out << name_a << "," << name_b << "," << c.both_correct << "," << c.a_only
      << "," << c.b_only << "," << c.both_wrong << "\n";
  return out.str();
}

double mcnemar(const Confusion& c) {
  const int b = c.a_only;
  const int n = c.a_only + c.b_only;
  if (n == 0) return 1.0;

  // Two-sided exact binomial: accumulate the lighter tail in log space.
  const int k = std::min(b, n - b);
  const double log_half_n = n * std::log(0.5);
  double tail = 0.0;
  double log_comb = 0.0;  // log C(n, 0)
  for (int i = 0; i <= k; ++i) {
    tail += std::exp(log_comb + log_half_n);
    log_comb += std::log(static_cast<double>(n - i)) -
                std::log(static_cast<double>(i + 1));
  }
  return std::min(1.0, 2.0 * tail);
}

Significance significance(const Confusion& c) {
  Significance s;
  s.p_value = mcnemar(c);
  s.at_0_10 = s.p_value <= 0.1;
  s.at_0_01 = s.p_value <= 0.01;
  return s;
}

}  // namespace icat::eval
