#include "icat/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>
#include <unordered_map>

namespace icat::prompt {

PromptMode prompt_mode_from_string(const std::string& name) {
  if (name == "icat_qd") return PromptMode::icat_qd;
  if (name == "icat_rg") return PromptMode::icat_rg;
  if (name == "few_shot") return PromptMode::few_shot;
  if (name == "few_shot_cot") return PromptMode::few_shot_cot;
  if (name == "zero_shot_cot") return PromptMode::zero_shot_cot;
  throw ConfigError("unknown prompt mode: " + name);
}

const char* to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::icat_qd: return "icat_qd";
    case PromptMode::icat_rg: return "icat_rg";
    case PromptMode::few_shot: return "few_shot";
    case PromptMode::few_shot_cot: return "few_shot_cot";
    case PromptMode::zero_shot_cot: return "zero_shot_cot";
  }
  return "?";
}

const char* to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::clean: return "clean";
    case ParseStatus::fallback: return "fallback";
    case ParseStatus::failed: return "failed";
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

std::string step_label(const char* word, std::size_t index,
                       StepNumbering numbering) {
  if (numbering == StepNumbering::zero_based_spaced)
    return std::string("[") + word + " " + std::to_string(index) + "]: ";
  return std::string("[") + word + std::to_string(index + 1) + "]: ";
}

std::size_t count_occurrences(const std::string& haystack,
                              const std::string& needle) {
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + 1))
    ++count;
  return count;
}

}  // namespace

TemplateSet TemplateSet::builtin_v1() {
  TemplateSet set;
  set.version = "v1";
  set.instructions[PromptMode::icat_qd] =
      "You are a question answering assistant. Decompose the test question "
      "into simpler sub-questions in the style of the examples, answer each "
      "sub-question from your own knowledge, and state the final answer "
      "after [Final Answer]:.";
  set.instructions[PromptMode::icat_rg] =
      "You are a question answering assistant. Reason step by step in the "
      "style of the example rationales and state the final answer after "
      "Answer:.";
  set.instructions[PromptMode::few_shot] = "Answer the question directly.";
  set.instructions[PromptMode::few_shot_cot] =
      "Answer the question, reasoning step by step like the examples, and "
      "finish with: The answer is <answer>.";
  set.instructions[PromptMode::zero_shot_cot] = "";
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir,
                              const std::string& version) {
  TemplateSet set;
  set.version = version;
  for (PromptMode mode :
       {PromptMode::icat_qd, PromptMode::icat_rg, PromptMode::few_shot,
        PromptMode::few_shot_cot, PromptMode::zero_shot_cot}) {
    const auto path = dir / version / (std::string(to_string(mode)) + ".txt");
    if (!std::filesystem::exists(path)) {
      if (mode == PromptMode::zero_shot_cot) {
        set.instructions[mode] = "";
        continue;
      }
      throw ConfigError("template file missing: " + path.string());
    }
    std::string text = read_file(path);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
      text.pop_back();
    set.instructions[mode] = std::move(text);
  }
  return set;
}

const std::string& TemplateSet::instructions_for(PromptMode mode) const {
  auto it = instructions.find(mode);
  if (it == instructions.end())
    throw ConfigError(std::string("template set ") + version +
                      " has no instructions for mode " + to_string(mode));
  return it->second;
}

std::string render_exemplar_block(const select::Exemplar& exemplar,
                                  PromptMode mode, StepNumbering numbering) {
  std::ostringstream out;
  switch (mode) {
    case PromptMode::icat_qd: {
      if (!exemplar.has_decomposition())
        throw PayloadMismatchError("exemplar " + exemplar.id +
                                   " has no decomposition payload "
                                   "(required by icat_qd)");
      out << "Q: " << exemplar.question << "\n";
      out << "A: " << exemplar.answer << "\n";
      out << "Decomposition:\n";
      for (std::size_t i = 0; i < exemplar.decomposition.size(); ++i) {
        const auto& step = exemplar.decomposition[i];
        out << step_label("Question", i, numbering) << step.sub_question
            << "\n";
        out << step_label("Answer", i, numbering) << step.sub_answer << "\n";
      }
      out << "[Final Answer]: " << exemplar.answer;
      break;
    }
    case PromptMode::icat_rg: {
      if (!exemplar.has_rationale())
        throw PayloadMismatchError("exemplar " + exemplar.id +
                                   " has no rationale payload "
                                   "(required by icat_rg)");
      out << "Q: " << exemplar.question << "\n";
      out << "Rationale: " << exemplar.rationale << "\n";
      out << "Answer: " << exemplar.answer;
      break;
    }
    case PromptMode::few_shot: {
      out << "Q: " << exemplar.question << "\n";
      out << "A: " << exemplar.answer;
      break;
    }
    case PromptMode::few_shot_cot: {
      if (!exemplar.has_rationale())
        throw PayloadMismatchError("exemplar " + exemplar.id +
                                   " has no rationale payload "
                                   "(required by few_shot_cot)");
      out << "Q: " << exemplar.question << "\n";
      out << "A: " << exemplar.rationale << " The answer is " << exemplar.answer
          << ".";
      break;
    }
    case PromptMode::zero_shot_cot:
      throw PayloadMismatchError("zero_shot_cot takes no exemplars");
  }
  return out.str();
}

PromptRecord build_prompt(PromptMode mode,
                          const select::SelectionResult& selection,
                          const std::vector<select::Exemplar>& pool,
                          const data::TargetItem& test,
                          const TemplateSet& templates,
                          const BuildOptions& options) {
  if (mode == PromptMode::zero_shot_cot && !selection.chosen.empty())
    throw PayloadMismatchError("zero_shot_cot takes no exemplars, got " +
                               std::to_string(selection.chosen.size()));

  std::unordered_map<std::string, const select::Exemplar*> by_id;
  for (const auto& exemplar : pool) by_id.emplace(exemplar.id, &exemplar);

  PromptRecord record;
  record.mode = mode;
  record.test_id = test.id;
  record.instructions = templates.instructions_for(mode);

  std::ostringstream out;
  if (!record.instructions.empty())
    out << "Instructions: " << record.instructions << "\n\n";

  if (mode == PromptMode::icat_qd || mode == PromptMode::icat_rg)
    out << "Examples:\n";

  for (const auto& id : selection.chosen) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw UnknownExemplarIdError("build_prompt: exemplar id " + id +
                                   " not in pool");
    record.exemplar_ids.push_back(id);
    out << render_exemplar_block(*it->second, mode,
                                 templates.exemplar_numbering)
        << "\n\n";
  }

  // Test block; FinQA-style items carry their serialized table just before
  // the question.
  std::string context_text;
  if (test.context) context_text = data::serialize_table(*test.context);

  std::string test_block;
  switch (mode) {
    case PromptMode::icat_qd:
      test_block = "Test Q: " + test.question + "\nDecomposition:";
      break;
    case PromptMode::icat_rg:
      test_block = "Test Q: " + test.question + "\nRationale:";
      break;
    case PromptMode::few_shot:
    case PromptMode::few_shot_cot:
      test_block = "Q: " + test.question + "\nA:";
      break;
    case PromptMode::zero_shot_cot:
      test_block = test.question + "\nLet's think step by step";
      break;
  }
  if (!context_text.empty()) out << context_text << "\n";
  out << test_block;

  record.rendered = out.str();
  record.content_hash = sha256_hex(record.rendered);

  if (count_occurrences(record.rendered, test_block) != 1)
    throw Error("build_prompt: test question must appear exactly once "
                "(exemplar leakage for test id " +
                test.id + ")");

  const int estimated_tokens =
      static_cast<int>((record.rendered.size() +
                        static_cast<std::size_t>(options.chars_per_token) - 1) /
                       static_cast<std::size_t>(options.chars_per_token));
  const int budget = options.context_tokens - options.completion_tokens;
  if (estimated_tokens > budget)
    throw TokenBudgetExceededError(
        "prompt estimated at " + std::to_string(estimated_tokens) +
        " tokens exceeds budget " + std::to_string(budget) + " for test id " +
        test.id);

  return record;
}

namespace {

struct Marker {
  enum class Kind { question, answer, final_answer } kind;
  std::size_t begin;      // offset of '['
  std::size_t value_pos;  // offset just past ':'
};

// Finds "[Question N]:", "[Answer N]:" and "[Final Answer]:" markers,
// tolerating both numbering styles and any case.
std::vector<Marker> find_markers(const std::string& raw) {
  static const std::regex kMarker(
      R"(\[\s*(question|answer|final\s+answer)\s*(\d*)\s*\]\s*:)",
      std::regex::icase);
  std::vector<Marker> markers;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kMarker);
       it != std::sregex_iterator(); ++it) {
    std::string word = (*it)[1].str();
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    Marker m;
    if (word == "question") {
      m.kind = Marker::Kind::question;
    } else if (word == "answer") {
      m.kind = Marker::Kind::answer;
    } else {
      m.kind = Marker::Kind::final_answer;
    }
    m.begin = static_cast<std::size_t>(it->position());
    m.value_pos = m.begin + static_cast<std::size_t>(it->length());
    markers.push_back(m);
  }
  return markers;
}

std::optional<std::string> last_answer_pattern(const std::string& raw) {
  static const std::regex kAnswer(R"((?:the\s+answer\s+is|answer\s*:)\s*)",
                                  std::regex::icase);
  std::optional<std::size_t> value_pos;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kAnswer);
       it != std::sregex_iterator(); ++it)
    value_pos = static_cast<std::size_t>(it->position() + it->length());
  if (!value_pos) return std::nullopt;

  // Capture to end of line, then strip one trailing sentence period.
  std::size_t eol = raw.find('\n', *value_pos);
  std::string value = raw.substr(
      *value_pos, eol == std::string::npos ? std::string::npos : eol - *value_pos);
  value = trim(value);
  if (!value.empty() && value.back() == '.') value.pop_back();
  return trim(value);
}

std::optional<std::string> last_number(const std::string& raw) {
  static const std::regex kNumber(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
  std::optional<std::string> out;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kNumber);
       it != std::sregex_iterator(); ++it)
    out = it->str();
  return out;
}

ParsedCompletion parse_bracketed(const std::string& raw) {
  ParsedCompletion parsed;
  parsed.rationale_text = trim(raw);

  const auto markers = find_markers(raw);
  auto segment = [&](std::size_t i) {
    const std::size_t end =
        i + 1 < markers.size() ? markers[i + 1].begin : raw.size();
    return trim(raw.substr(markers[i].value_pos, end - markers[i].value_pos));
  };

  std::optional<std::string> pending_question;
  std::optional<std::string> final_answer;
  std::optional<std::string> last_step_answer;
  for (std::size_t i = 0; i < markers.size(); ++i) {
    switch (markers[i].kind) {
      case Marker::Kind::question:
        pending_question = segment(i);
        break;
      case Marker::Kind::answer:
        if (pending_question) {
          parsed.steps.push_back({*pending_question, segment(i)});
          pending_question.reset();
        }
        last_step_answer = segment(i);
        break;
      case Marker::Kind::final_answer:
        final_answer = segment(i);
        break;
    }
  }

  if (final_answer && !final_answer->empty()) {
    parsed.final_answer = *final_answer;
    parsed.parse_status = ParseStatus::clean;
  } else if (last_step_answer && !last_step_answer->empty()) {
    parsed.final_answer = *last_step_answer;
    parsed.parse_status = ParseStatus::fallback;
  } else {
    parsed.parse_status = ParseStatus::failed;
  }
  return parsed;
}

ParsedCompletion parse_freeform(const std::string& raw, bool numeric_task) {
  ParsedCompletion parsed;
  parsed.rationale_text = trim(raw);

  if (auto answer = last_answer_pattern(raw); answer && !answer->empty()) {
    parsed.final_answer = *answer;
    parsed.parse_status = ParseStatus::clean;
    return parsed;
  }
  if (numeric_task) {
    if (auto number = last_number(raw)) {
      parsed.final_answer = *number;
      parsed.parse_status = ParseStatus::fallback;
      return parsed;
    }
  }
  parsed.parse_status = ParseStatus::failed;
  return parsed;
}

}  // namespace

ParsedCompletion parse_completion(const std::string& raw, PromptMode mode,
                                  const ParseOptions& options) {
  if (trim(raw).empty()) {
    ParsedCompletion parsed;
    parsed.parse_status = ParseStatus::failed;
    return parsed;
  }

  switch (mode) {
    case PromptMode::icat_qd:
      return parse_bracketed(raw);
    case PromptMode::few_shot: {
      // No reasoning requested; the completion itself is the answer.
      ParsedCompletion parsed;
      parsed.final_answer = trim(raw);
      parsed.parse_status =
          parsed.final_answer.empty() ? ParseStatus::failed : ParseStatus::clean;
      return parsed;
    }
    case PromptMode::icat_rg:
    case PromptMode::few_shot_cot:
    case PromptMode::zero_shot_cot:
      return parse_freeform(raw, options.numeric_task);
  }
  throw ConfigError("parse_completion: unhandled mode");
}

}  // namespace icat::prompt
