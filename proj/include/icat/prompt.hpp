#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "icat/data.hpp"
#include "icat/select.hpp"

namespace icat::prompt {

enum class PromptMode { icat_qd, icat_rg, few_shot, few_shot_cot, zero_shot_cot };

PromptMode prompt_mode_from_string(const std::string& name);
const char* to_string(PromptMode mode);

// Transcripts print "[Question 0]:" while the exemplar-block convention is
// "[Question1]:"; both styles are emitted by the same renderer and accepted
// by the parser.
enum class StepNumbering { one_based_compact, zero_based_spaced };

/// Versioned instruction headers per mode plus the numbering convention used
/// inside exemplar blocks. Instruction text ships as plain files under
/// templates/<version>/<mode>.txt; builtin_v1() carries the same text so the
/// library works without a checkout.
struct TemplateSet {
  std::string version;
  std::map<PromptMode, std::string> instructions;
  StepNumbering exemplar_numbering = StepNumbering::one_based_compact;

  static TemplateSet builtin_v1();
  static TemplateSet load(const std::filesystem::path& dir,
                          const std::string& version);

  const std::string& instructions_for(PromptMode mode) const;
};

struct PromptRecord {
  PromptMode mode = PromptMode::icat_qd;
  std::string instructions;
  std::string rendered;
  std::vector<std::string> exemplar_ids;
  std::string test_id;
  std::string content_hash;  // sha256(rendered)
};

struct BuildOptions {
  // Budget estimated at kCharsPerToken characters per token against the
  // model context minus the completion cap; exceeding it throws rather than
  // letting the backend truncate silently.
  int context_tokens = 4096;
  int completion_tokens = 900;
  int chars_per_token = 4;

  int budget_chars() const {
    return (context_tokens - completion_tokens) * chars_per_token;
  }
};

/// Deterministic prompt assembly: instruction header, exemplar blocks in
/// selection order, then the test block ending at the generation slot.
/// Throws PayloadMismatchError on mode-incompatible exemplars and
/// TokenBudgetExceededError past the budget.
PromptRecord build_prompt(PromptMode mode,
                          const select::SelectionResult& selection,
                          const std::vector<select::Exemplar>& pool,
                          const data::TargetItem& test,
                          const TemplateSet& templates,
                          const BuildOptions& options = {});

/// One exemplar as it appears inside a prompt (exposed for the parse
/// round-trip property).
std::string render_exemplar_block(const select::Exemplar& exemplar,
                                  PromptMode mode, StepNumbering numbering);

enum class ParseStatus { clean, fallback, failed };

const char* to_string(ParseStatus status);

struct ParsedCompletion {
  std::vector<select::DecompositionStep> steps;  // icat_qd bracket pairs
  std::string rationale_text;                    // raw reasoning text
  std::string final_answer;
  ParseStatus parse_status = ParseStatus::failed;
};

struct ParseOptions {
  bool numeric_task = false;  // enables the last-number fallback
};

/// Extract decomposition steps and the final answer from a model completion.
/// Never throws; parse_status records how the answer was obtained.
ParsedCompletion parse_completion(const std::string& raw, PromptMode mode,
                                  const ParseOptions& options = {});

}  // namespace icat::prompt
