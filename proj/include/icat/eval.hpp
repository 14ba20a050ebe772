#pragma once

#include <string>
#include <vector>

#include "icat/prompt.hpp"

namespace icat::eval {

enum class Metric { em, cover_em };

Metric metric_from_string(const std::string& name);
const char* to_string(Metric metric);

struct RunOutcome {
  std::string test_id;
  std::string method;
  std::string prompt_hash;
  prompt::ParsedCompletion parsed;
  std::string gold;
  bool correct = false;
  Metric metric = Metric::em;
  bool flagged_unparseable = false;  // numeric EM with no number in pred
};

/// Exact match. Numeric mode normalizes both sides (currency symbols,
/// commas, percent signs, parentheses, unit words) and compares reals within
/// 1e-4 relative; span mode compares case/whitespace/punctuation-normalized
/// strings. `unparseable`, when given, flags numeric predictions with no
/// extractable number (always scored false).
bool exact_match(const std::string& pred, const std::string& gold,
                 bool numeric, bool* unparseable = nullptr);

/// True iff the normalized gold appears as a token-boundary substring of the
/// normalized prediction ("art" does not match inside "Bogart").
bool cover_em(const std::string& pred, const std::string& gold);

/// Score one parsed completion under the given metric. `numeric_gold`
/// selects numeric vs span comparison when the metric is EM (cover-EM is
/// always a span check).
RunOutcome score(const std::string& test_id, const std::string& method,
                 const std::string& prompt_hash,
                 const prompt::ParsedCompletion& parsed,
                 const std::string& gold, Metric metric,
                 bool numeric_gold = true);

struct MethodAccuracy {
  std::string method;
  int total = 0;
  int correct = 0;
  double accuracy = 0.0;  // 100 * correct / total
};

std::vector<MethodAccuracy> aggregate(const std::vector<RunOutcome>& outcomes);

std::string accuracy_table(const std::vector<MethodAccuracy>& rows);
std::string accuracy_csv(const std::vector<MethodAccuracy>& rows);

/// 2x2 paired counts over a shared test set.
struct Confusion {
  int both_correct = 0;
  int a_only = 0;
  int b_only = 0;
  int both_wrong = 0;

  int total() const { return both_correct + a_only + b_only + both_wrong; }
};

/// Requires identical test_id sets; pairs outcomes by test_id.
Confusion confusion(const std::vector<RunOutcome>& method_a,
                    const std::vector<RunOutcome>& method_b);

std::string confusion_table(const Confusion& c, const std::string& name_a,
                            const std::string& name_b);
std::string confusion_csv(const Confusion& c, const std::string& name_a,
                          const std::string& name_b);

/// Exact binomial McNemar on the discordant cells:
/// p = min(1, 2 * P[X <= min(b, c)]) with X ~ Binomial(b + c, 1/2).
double mcnemar(const Confusion& c);

struct Significance {
  double p_value = 1.0;
  bool at_0_10 = false;
  bool at_0_01 = false;
};

Significance significance(const Confusion& c);

}  // namespace icat::eval
