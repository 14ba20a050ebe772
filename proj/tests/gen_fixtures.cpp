// Regenerates committed fixtures:
//   - golden prompt renders + their hash manifest (fixtures/golden/)
//   - the finqa table serialization snapshot
//   - the corpus10 replay fixture file (fixtures/corpus10/replay.jsonl)
//
// Run after a deliberate prompt-format change and review the diff; the
// replay completions are hand-crafted transcripts keyed by prompt hash, so
// any render change requires regenerating them.

#include <filesystem>
#include <iostream>
#include <map>

#include "icat/pipeline.hpp"
#include "json.hpp"

using namespace icat;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ICAT_FIXTURES_DIR;

select::Exemplar qd_exemplar(const std::string& id) {
  select::Exemplar e;
  e.id = id;
  if (id == "e2") {
    e.question = "What award did the writer of the Never Let Me Go novel win in 1989?";
    e.answer = "the Booker Prize";
    e.decomposition = {
        {"Who wrote the novel Never Let Me Go?", "Kazuo Ishiguro"},
        {"What award did Kazuo Ishiguro win in 1989?", "the Booker Prize"},
    };
  } else {
    e.question =
        "Who is the spouse of the person who voices Jarvis in Iron Man?";
    e.answer = "Jennifer Connelly";
    e.decomposition = {
        {"Who voices Jarvis in Iron Man?", "Paul Bettany"},
        {"Who is the spouse of Paul Bettany?", "Jennifer Connelly"},
    };
  }
  e.source_dataset = "subqa";
  return e;
}

select::Exemplar rg_exemplar(const std::string& id) {
  select::Exemplar e;
  e.id = id;
  e.question = "A team paints 4 walls per hour. How many walls in 3 hours?";
  e.answer = "12";
  e.rationale = "The team paints 4 walls each hour, so 4 * 3 = 12.";
  e.source_dataset = "aqua_rat";
  return e;
}

select::SelectionResult chosen(std::vector<std::string> ids) {
  select::SelectionResult s;
  s.method = select::SelectionMethod::static_manifest;
  s.chosen = std::move(ids);
  s.k = static_cast<int>(s.chosen.size());
  return s;
}

void write_golden_prompts() {
  const auto templates = prompt::TemplateSet::builtin_v1();
  const fs::path dir = kFixtures / "golden";
  fs::create_directories(dir);

  data::TargetItem river;
  river.id = "g1";
  river.question = "What is the mouth of the Naches River?";
  river.gold_answer = "Yakima River";

  const std::vector<select::Exemplar> qd_pool = {qd_exemplar("e1"),
                                                 qd_exemplar("e2")};
  const auto qd = prompt::build_prompt(prompt::PromptMode::icat_qd,
                                       chosen({"e1", "e2"}), qd_pool, river,
                                       templates);

  data::TargetItem math;
  math.id = "g2";
  math.question =
      "A mason builds 14 walls a week. How many walls in 4 weeks?";
  math.gold_answer = "56";
  math.answer_type = data::AnswerType::numeric;
  const std::vector<select::Exemplar> rg_pool = {rg_exemplar("r1")};
  const auto rg = prompt::build_prompt(prompt::PromptMode::icat_rg,
                                       chosen({"r1"}), rg_pool, math,
                                       templates);

  const auto zero = prompt::build_prompt(prompt::PromptMode::zero_shot_cot,
                                         chosen({}), {}, math, templates);

  nlohmann::json hashes;
  auto store = [&](const char* name, const prompt::PromptRecord& record) {
    write_file_atomic(dir / name, record.rendered);
    hashes[name] = record.content_hash;
  };
  store("icat_qd_prompt.txt", qd);
  store("icat_rg_prompt.txt", rg);
  store("zero_shot_cot_prompt.txt", zero);
  write_file_atomic(dir / "goldens.json", hashes.dump(2) + "\n");
  std::cout << "golden prompts written\n";
}

void write_finqa_snapshot() {
  const auto dataset = data::load_dataset(kFixtures / "datasets" / "finqa.json",
                                          data::DatasetFormat::finqa);
  write_file_atomic(kFixtures / "golden" / "finqa_table.txt",
                    data::serialize_table(*dataset.targets.at(0).context));
  std::cout << "finqa table snapshot written\n";
}

// Hand-crafted completions for the 10-question corpus: decomposition
// transcripts in the spaced zero-based style models emit, with two planted
// failures (one wrong entity, one refusal). Frozen accuracy: 8/10.
std::string crafted_completion(const std::string& test_id,
                               const std::string& gold) {
  static const std::map<std::string, std::pair<std::string, std::string>>
      kTranscripts = {
          {"c01",
           {"[Question 0]: What river receives the Bumping River?\n"
            "[Answer 0]: The Naches River\n"
            "[Question 1]: What is the mouth of the Naches River?\n"
            "[Answer 1]: Yakima River\n",
            "The mouth is the Yakima River"}},
          {"c02",
           {"[Question 0]: Which studio released Steamboat Willie?\n"
            "[Answer 0]: Walt Disney Studio\n"
            "[Question 1]: Who founded the Walt Disney Studio?\n"
            "[Answer 1]: Walt Disney\n",
            "Walt Disney"}},
          {"c03",
           {"[Question 0]: In which country does the Matterhorn stand?\n"
            "[Answer 0]: Switzerland\n"
            "[Question 1]: What is the capital of Switzerland?\n"
            "[Answer 1]: Bern\n",
            "The capital is Bern"}},
          {"c04",
           {"[Question 0]: When was Ada Lovelace born?\n"
            "[Answer 0]: 1815\n"
            "[Question 1]: When was Charles Babbage born?\n"
            "[Answer 1]: 1791\n",
            "Ada Lovelace"}},  // planted wrong comparison
          {"c05",
           {"[Question 0]: Which continent contains the Sahara?\n"
            "[Answer 0]: Africa\n"
            "[Question 1]: What is the longest river of Africa?\n"
            "[Answer 1]: the Nile\n",
            "the Nile"}},
          {"c06",
           {"[Question 0]: Which country has Lima as its capital?\n"
            "[Answer 0]: Peru\n"
            "[Question 1]: Which ocean borders Peru?\n"
            "[Answer 1]: the Pacific Ocean\n",
            "The Pacific Ocean borders Peru"}},
          {"c07",
           {"[Question 0]: In which film does HAL 9000 appear?\n"
            "[Answer 0]: 2001: A Space Odyssey\n"
            "[Question 1]: Who directed 2001: A Space Odyssey?\n"
            "[Answer 1]: Stanley Kubrick\n",
            "Stanley Kubrick"}},
          {"c09",
           {"[Question 0]: Which planet does Titan orbit?\n"
            "[Answer 0]: Saturn\n",
            "Saturn"}},
          {"c10",
           {"[Question 0]: Which opera features the aria Nessun dorma?\n"
            "[Answer 0]: Turandot\n"
            "[Question 1]: Who wrote Turandot?\n"
            "[Answer 1]: Giacomo Puccini\n",
            "Giacomo Puccini"}},
      };

  if (test_id == "c08") return "I am not sure I can determine this.";
  const auto it = kTranscripts.find(test_id);
  if (it == kTranscripts.end())
    throw Error("no crafted transcript for " + test_id + " (gold " + gold + ")");
  return it->second.first + "[Final Answer]: " + it->second.second;
}

// Weaker transcripts for the random-selection run (6/10 correct), so the
// report command has two genuinely different methods to compare.
std::string crafted_completion_random(const std::string& test_id,
                                      const std::string& gold) {
  static const std::map<std::string, std::string> kFinals = {
      {"c01", "the Columbia River"},          // wrong
      {"c02", "Walt Disney"},
      {"c03", "Bern"},
      {"c04", "Ada Lovelace"},                // wrong
      {"c05", "the Nile"},
      {"c06", "the Atlantic Ocean"},          // wrong
      {"c07", "Stanley Kubrick"},
      {"c09", "Saturn"},
      {"c10", "Giacomo Puccini"},
  };
  if (test_id == "c08") return "I am not sure I can determine this.";
  const auto it = kFinals.find(test_id);
  if (it == kFinals.end())
    throw Error("no crafted transcript for " + test_id + " (gold " + gold + ")");
  return "[Question 0]: Rephrasing the question.\n[Answer 0]: " + it->second +
         "\n[Final Answer]: " + it->second;
}

void write_replay_corpus() {
  const fs::path replay = kFixtures / "corpus10" / "replay.jsonl";
  fs::remove(replay);

  std::size_t total = 0;
  const std::pair<const char*,
                  std::string (*)(const std::string&, const std::string&)>
      corpora[] = {{"manifest.json", crafted_completion},
                   {"manifest_random.json", crafted_completion_random}};
  for (const auto& [manifest_name, craft] : corpora) {
    const auto manifest =
        pipeline::RunManifest::load(kFixtures / "corpus10" / manifest_name);
    const auto target = pipeline::load_with_options(manifest.target);
    const auto pool = pipeline::load_pool(manifest);
    const auto embedder = pipeline::make_embedder(manifest);
    const auto templates = pipeline::load_templates(manifest);

    for (const auto& item : target.targets) {
      const auto selection =
          pipeline::select_for_item(manifest, pool, item, embedder);
      const auto record = prompt::build_prompt(manifest.mode, selection, pool,
                                               item, templates,
                                               manifest.build_options());
      llm::ReplayBackend::append_fixture(replay, record.content_hash,
                                         manifest.generation,
                                         craft(item.id, item.gold_answer));
      ++total;
    }
  }
  std::cout << "replay corpus written (" << total << " fixtures)\n";
}

}  // namespace

int main() {
  try {
    write_golden_prompts();
    write_finqa_snapshot();
    write_replay_corpus();
  } catch (const std::exception& e) {
    std::cerr << "fixture generation failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
