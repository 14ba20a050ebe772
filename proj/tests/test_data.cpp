#include "icat/data.hpp"

#include <unistd.h>

#include <filesystem>

#include "doctest.h"

using namespace icat;
using namespace icat::data;

namespace {

const std::filesystem::path kDatasets =
    std::filesystem::path(ICAT_FIXTURES_DIR) / "datasets";

}  // namespace

TEST_CASE("unified loader maps rationale records to exemplars") {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("icat-data-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "mini.jsonl",
                    "{\"id\":\"x\",\"question\":\"How many?\","
                    "\"answer\":\"9\",\"rationale\":\"count them\"}\n");
  const auto dataset = load_dataset(dir / "mini.jsonl", DatasetFormat::unified);
  REQUIRE(dataset.exemplars.size() == 1);
  CHECK(dataset.targets.empty());
  CHECK(dataset.exemplars[0].id == "x");
  CHECK(dataset.exemplars[0].rationale == "count them");
  CHECK(dataset.exemplars[0].has_rationale());
  std::filesystem::remove_all(dir);
}

TEST_CASE("unified loader reports parse errors with line numbers") {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("icat-data-bad-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "bad.jsonl",
                    "{\"id\":\"ok\",\"question\":\"q\",\"answer\":\"a\","
                    "\"rationale\":\"r\"}\nnot json at all\n");
  CHECK_THROWS_WITH_AS(load_dataset(dir / "bad.jsonl", DatasetFormat::unified),
                       doctest::Contains(":2"), ParseError);

  write_file_atomic(dir / "hollow.jsonl", "{\"id\":\"x\",\"answer\":\"a\"}\n");
  CHECK_THROWS_WITH_AS(
      load_dataset(dir / "hollow.jsonl", DatasetFormat::unified),
      doctest::Contains("question"), SchemaError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("aqua adapter folds options and resolves the gold letter") {
  const auto dataset = load_dataset(kDatasets / "aqua.jsonl",
                                    DatasetFormat::aqua_rat);
  REQUIRE(dataset.exemplars.size() == 3);
  const auto& first = dataset.exemplars[0];
  CHECK(first.question ==
        "A trader sold an article at a profit of 20% for Rs.360. What is the "
        "cost price of the article? Options: A)300 B)320 C)340 D)360 E)380");
  CHECK(first.answer == "300");  // letter A resolved to its numeric value
  CHECK(first.has_rationale());
  CHECK(first.category.count(select::Category::division) == 1);
  CHECK(first.source_dataset == "aqua_rat");

  // non-numeric gold option keeps the letter
  CHECK(dataset.exemplars[2].answer == "E");
}

TEST_CASE("tabmwp adapter folds the table into the question and tags it") {
  const auto dataset =
      load_dataset(kDatasets / "tabmwp.json", DatasetFormat::tabmwp);
  REQUIRE(dataset.exemplars.size() == 2);
  // ordered_json keeps file order: key "21" first
  CHECK(dataset.exemplars[0].id == "21");
  CHECK(dataset.exemplars[0].question.find("Kilometers walked") !=
        std::string::npos);
  CHECK(dataset.exemplars[0].question.find("Monday | 12") != std::string::npos);
  CHECK(dataset.exemplars[0].category.count(select::Category::table) == 1);
  CHECK(dataset.exemplars[0].rationale.find("12 - 3 = 9") != std::string::npos);
}

TEST_CASE("subqa adapter yields ordered decomposition exemplars") {
  const auto dataset =
      load_dataset(kDatasets / "subqa.jsonl", DatasetFormat::subqa);
  REQUIRE(dataset.exemplars.size() == 2);
  const auto& e = dataset.exemplars[1];
  CHECK(e.id == "sq2");
  REQUIRE(e.decomposition.size() == 2);
  CHECK(e.decomposition[0].sub_question == "Who voices Jarvis in Iron Man?");
  CHECK(e.decomposition[0].sub_answer == "Paul Bettany");
  CHECK(e.category.count(select::Category::compositional) == 1);
}

TEST_CASE("strategyqa adapter aligns facts with plain decomposition strings") {
  const auto dataset =
      load_dataset(kDatasets / "strategyqa.json", DatasetFormat::strategyqa);
  REQUIRE(dataset.exemplars.size() == 2);

  const auto& comparison = dataset.exemplars[0];
  CHECK(comparison.answer == "no");
  REQUIRE(comparison.decomposition.size() == 3);
  CHECK(comparison.decomposition[0].sub_answer ==
        "Andrew Johnson was the 17th president of the United States.");
  // "exceed" marks the question as a comparison
  CHECK(comparison.category.count(select::Category::comparison) == 1);

  const auto& inference = dataset.exemplars[1];
  CHECK(inference.decomposition[0].sub_answer == "about 30 kilograms");
  CHECK(inference.category.count(select::Category::inference) == 1);
}

TEST_CASE("strategyqa adapter refuses records without aligned sub-answers") {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("icat-strategy-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "s.json",
                    "[{\"qid\":\"b\",\"question\":\"was x before y?\","
                    "\"answer\":true,\"decomposition\":[\"when was x?\","
                    "\"when was y?\"],\"facts\":[\"x was 1900.\"]}]");
  CHECK_THROWS_WITH_AS(load_dataset(dir / "s.json", DatasetFormat::strategyqa),
                       doctest::Contains("sub_answers"), SchemaError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("numeric target adapters normalize gold answers") {
  const auto multiarith =
      load_dataset(kDatasets / "multiarith.json", DatasetFormat::multiarith);
  REQUIRE(multiarith.targets.size() == 2);
  CHECK(multiarith.targets[0].id == "multiarith-1");
  CHECK(multiarith.targets[0].gold_answer == "48");  // 48.0 -> "48"
  CHECK(multiarith.targets[0].answer_type == AnswerType::numeric);

  const auto svamp = load_dataset(kDatasets / "svamp.json", DatasetFormat::svamp);
  REQUIRE(svamp.targets.size() == 2);
  CHECK(svamp.targets[0].question ==
        "Each pack of dvds costs 76 dollars. If there is a discount of 25 "
        "dollars on each pack. How much do you have to pay to buy each pack?");
  CHECK(svamp.targets[0].gold_answer == "51");
}

TEST_CASE("wqa and musique adapters yield span targets") {
  const auto wqa = load_dataset(kDatasets / "wqa.json", DatasetFormat::wqa);
  REQUIRE(wqa.targets.size() == 2);
  CHECK(wqa.targets[0].id == "wq1");
  CHECK(wqa.targets[0].answer_type == AnswerType::span);

  const auto musique =
      load_dataset(kDatasets / "musique.jsonl", DatasetFormat::musique);
  REQUIRE(musique.targets.size() == 3);
  const auto two_hop = filter_two_hop(musique.targets);
  REQUIRE(two_hop.size() == 2);
  CHECK(two_hop[0].id == "2hop__1001_2002");
  CHECK(two_hop[1].id == "2hop__3003_4004");
}

TEST_CASE("finqa adapter preserves the table verbatim") {
  const auto dataset =
      load_dataset(kDatasets / "finqa.json", DatasetFormat::finqa);
  REQUIRE(dataset.targets.size() == 2);
  const auto& item = dataset.targets[0];
  REQUIRE(item.context.has_value());
  CHECK(item.context->header ==
        std::vector<std::string>{"year ended december 31", "2010", "2009"});
  REQUIRE(item.context->rows.size() == 2);
  CHECK(item.context->rows[0][1] == "25.0");
  CHECK(item.answer_type == AnswerType::numeric);
  CHECK(item.context->pre_text.find("note 29") != std::string::npos);

  // percentage answers still parse as numeric
  CHECK(dataset.targets[1].answer_type == AnswerType::numeric);
}

TEST_CASE("serialize_table emits pipe rows between pre and post text") {
  SUBCASE("single row") {
    TableContext table;
    table.header = {"year", "value"};
    table.rows = {{"2010", "25.0"}};
    CHECK(serialize_table(table) == "year: 2010 | value: 25.0");
  }
  SUBCASE("empty rows preserve pre/post text only") {
    TableContext table;
    table.header = {"a"};
    table.pre_text = "before";
    table.post_text = "after";
    CHECK(serialize_table(table) == "before\nafter");
  }
  SUBCASE("arity violations are rejected") {
    TableContext table;
    table.header = {"a", "b"};
    table.rows = {{"only one"}};
    CHECK_THROWS_AS(serialize_table(table), SchemaError);
  }
  SUBCASE("golden snapshot of the finqa fixture") {
    const auto dataset =
        load_dataset(kDatasets / "finqa.json", DatasetFormat::finqa);
    const auto snapshot_path =
        std::filesystem::path(ICAT_FIXTURES_DIR) / "golden" /
        "finqa_table.txt";
    REQUIRE(std::filesystem::exists(snapshot_path));
    CHECK(serialize_table(*dataset.targets[0].context) ==
          read_file(snapshot_path));
  }
}

TEST_CASE("unified round trip is identity on all fields") {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("icat-roundtrip-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);

  for (const char* name :
       {"aqua.jsonl", "subqa.jsonl", "strategyqa.json", "finqa.json"}) {
    const DatasetFormat format =
        std::string(name) == "aqua.jsonl"       ? DatasetFormat::aqua_rat
        : std::string(name) == "subqa.jsonl"    ? DatasetFormat::subqa
        : std::string(name) == "strategyqa.json" ? DatasetFormat::strategyqa
                                                  : DatasetFormat::finqa;
    const auto original = load_dataset(kDatasets / name, format);
    save_unified(original, dir / "export.jsonl");
    const auto reloaded =
        load_dataset(dir / "export.jsonl", DatasetFormat::unified);

    REQUIRE(reloaded.exemplars.size() == original.exemplars.size());
    for (std::size_t i = 0; i < original.exemplars.size(); ++i) {
      const auto& a = original.exemplars[i];
      const auto& b = reloaded.exemplars[i];
      CHECK(a.id == b.id);
      CHECK(a.question == b.question);
      CHECK(a.answer == b.answer);
      CHECK(a.rationale == b.rationale);
      CHECK(a.category == b.category);
      CHECK(a.source_dataset == b.source_dataset);
      REQUIRE(a.decomposition.size() == b.decomposition.size());
      for (std::size_t s = 0; s < a.decomposition.size(); ++s) {
        CHECK(a.decomposition[s].sub_question == b.decomposition[s].sub_question);
        CHECK(a.decomposition[s].sub_answer == b.decomposition[s].sub_answer);
      }
    }
    REQUIRE(reloaded.targets.size() == original.targets.size());
    for (std::size_t i = 0; i < original.targets.size(); ++i) {
      const auto& a = original.targets[i];
      const auto& b = reloaded.targets[i];
      CHECK(a.id == b.id);
      CHECK(a.question == b.question);
      CHECK(a.gold_answer == b.gold_answer);
      CHECK((a.answer_type == b.answer_type));
      CHECK(a.context.has_value() == b.context.has_value());
      if (a.context) {
        CHECK(a.context->header == b.context->header);
        CHECK(a.context->rows == b.context->rows);
        CHECK(a.context->pre_text == b.context->pre_text);
        CHECK(a.context->post_text == b.context->post_text);
      }
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("sample_items is seeded, stable and order-preserving") {
  std::vector<TargetItem> items;
  for (int i = 0; i < 20; ++i) {
    TargetItem t;
    t.id = "id" + std::to_string(i);
    t.question = "q" + std::to_string(i);
    t.gold_answer = "a";
    items.push_back(t);
  }
  const auto a = sample_items(items, 5, 42);
  const auto b = sample_items(items, 5, 42);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a[i].id == b[i].id);
  // original order preserved
  for (std::size_t i = 1; i < a.size(); ++i)
    CHECK(std::stoi(a[i].id.substr(2)) > std::stoi(a[i - 1].id.substr(2)));
  const auto c = sample_items(items, 5, 43);
  bool differs = false;
  for (std::size_t i = 0; i < 5; ++i) differs |= a[i].id != c[i].id;
  CHECK(differs);
  CHECK(sample_items(items, 50, 1).size() == 20);
}

TEST_CASE("relatedness report sorts ascending and zeroes identical datasets") {
  const auto subqa = load_dataset(kDatasets / "subqa.jsonl", DatasetFormat::subqa);
  const auto wqa = load_dataset(kDatasets / "wqa.json", DatasetFormat::wqa);

  const auto rows = relatedness_report({{subqa, subqa}, {subqa, wqa}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].js == 0.0);  // identical datasets first
  CHECK(rows[0].transfer == "subqa");
  CHECK(rows[1].js > 0.0);
  CHECK(rows[1].js <= 1.0);

  const auto csv = relatedness_csv(rows, {});
  CHECK(csv.find("transfer,target,js_divergence,scheme") == 0);
  CHECK(csv.find("0.000000") != std::string::npos);
}

TEST_CASE("parse_numeric_answer strips units, currency and separators") {
  CHECK(parse_numeric_answer("68.9 (billion)") == doctest::Approx(68.9));
  CHECK(parse_numeric_answer("$1,234.5") == doctest::Approx(1234.5));
  CHECK(parse_numeric_answer("56%") == doctest::Approx(56.0));
  CHECK(parse_numeric_answer("-9") == doctest::Approx(-9.0));
  CHECK(parse_numeric_answer("Rs.360") == doctest::Approx(360.0));
  CHECK_FALSE(parse_numeric_answer("route sixty six").has_value());
  CHECK_FALSE(parse_numeric_answer("").has_value());
}
