#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "curiosity/data.hpp"
#include "curiosity/io.hpp"

using namespace curiosity;
using data::Dialog;
using data::DialogAct;
using data::Message;
using data::Sender;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

Dialog tiny_dialog(const std::string& id = "d1") {
  Dialog d;
  d.id = id;
  d.topic = "lesotho";
  d.aspects = {"history", "culture"};
  d.known_entities = {"africa"};
  Message u;
  u.sender = Sender::user;
  u.text = "tell me about lesotho";
  u.acts = {DialogAct::request_topic};
  Message a;
  a.sender = Sender::assistant;
  a.text = "lesotho is a landlocked country";
  a.acts = {DialogAct::inform_response};
  a.liked = true;
  d.messages = {u, a};
  return d;
}

}  // namespace

TEST_CASE("ingest reads a minimal canonical dialog file") {
  auto path = temp_file("curiosity_minimal.jsonl");
  {
    std::ofstream out(path);
    out << data::dialog_to_json(tiny_dialog()).dump() << "\n";
  }
  auto result = data::ingest_dialogs(path.string(), data::IngestAdapter::canonical);
  CHECK(result.diagnostics.empty());
  REQUIRE(result.dialogs.size() == 1);
  const Dialog& d = result.dialogs[0];
  CHECK(d.id == "d1");
  CHECK(d.topic == "lesotho");
  CHECK(d.aspects[0] == "history");
  CHECK(d.aspects[1] == "culture");
  REQUIRE(d.messages.size() == 2);
  CHECK(d.messages[0].sender == Sender::user);
  CHECK(d.messages[0].acts == std::set<DialogAct>{DialogAct::request_topic});
  CHECK(d.messages[1].liked);
  std::filesystem::remove(path);
}

TEST_CASE("ingest -> serialize -> ingest is the identity on the canonical format") {
  auto bank = corpus::FactBank{};
  bank.turn_index = 1;
  bank.slots.push_back({"f1", corpus::BankGroup::aspect, corpus::FactCategory::aspect, true,
                        0.123456789012345});
  bank.slots.push_back({"f2", corpus::BankGroup::general, corpus::FactCategory::general, false,
                        0.0});
  Dialog d = tiny_dialog();
  d.messages[1].shown_facts = bank;
  d.messages[1].used_fact_ids = {"f1"};

  auto path_a = temp_file("curiosity_roundtrip_a.jsonl");
  auto path_b = temp_file("curiosity_roundtrip_b.jsonl");
  data::write_dialogs(path_a.string(), {d});
  auto first = data::ingest_dialogs(path_a.string(), data::IngestAdapter::canonical);
  REQUIRE(first.dialogs.size() == 1);
  data::write_dialogs(path_b.string(), first.dialogs);

  std::ifstream ina(path_a), inb(path_b);
  std::string a((std::istreambuf_iterator<char>(ina)), std::istreambuf_iterator<char>());
  std::string b((std::istreambuf_iterator<char>(inb)), std::istreambuf_iterator<char>());
  CHECK(a == b);
  std::filesystem::remove(path_a);
  std::filesystem::remove(path_b);
}

TEST_CASE("malformed dialogs are rejected with diagnostics, not dropped silently") {
  auto path = temp_file("curiosity_malformed.jsonl");
  {
    std::ofstream out(path);
    out << data::dialog_to_json(tiny_dialog("ok1")).dump() << "\n";
    // two user messages in a row
    nlohmann::json bad = data::dialog_to_json(tiny_dialog("bad1"));
    bad["messages"][1]["sender"] = "user";
    out << bad.dump() << "\n";
    out << data::dialog_to_json(tiny_dialog("ok2")).dump() << "\n";
  }
  auto result = data::ingest_dialogs(path.string(), data::IngestAdapter::canonical);
  CHECK(result.dialogs.size() == 2);
  REQUIRE(result.diagnostics.size() == 1);
  CHECK(result.diagnostics[0].find("bad1") != std::string::npos);
  CHECK(result.diagnostics[0].find("alternate") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("dialog validation catches the documented invariants") {
  Dialog d = tiny_dialog();
  d.messages[0].liked = true;
  CHECK_THROWS_AS(d.validate(), SchemaError);

  d = tiny_dialog();
  d.messages.clear();
  CHECK_THROWS_AS(d.validate(), SchemaError);

  d = tiny_dialog();
  d.aspects[1] = "";
  CHECK_THROWS_AS(d.validate(), SchemaError);

  // using facts requires a shown bank
  d = tiny_dialog();
  d.messages[1].used_fact_ids = {"ghost"};
  CHECK_THROWS_WITH(d.validate(), Catch::Matchers::ContainsSubstring("shown_facts"));

  // used ids must be among the shown slots
  d = tiny_dialog();
  corpus::FactBank bank;
  bank.slots.push_back(
      {"real", corpus::BankGroup::general, corpus::FactCategory::general, false, 0.0});
  d.messages[1].shown_facts = bank;
  d.messages[1].used_fact_ids = {"ghost"};
  CHECK_THROWS_WITH(d.validate(), Catch::Matchers::ContainsSubstring("ghost"));
}

TEST_CASE("released adapter maps the public field names") {
  auto path = temp_file("curiosity_released.json");
  {
    std::ofstream out(path);
    nlohmann::json j = {
        {"dialogs",
         {{
             {"dialog_id", 77},
             {"focus_entity", "puerto_rico"},
             {"first_aspect", "history"},
             {"second_aspect", "economy"},
             {"known_entities", {"united_states"}},
             {"messages",
              {{
                   {"message", "tell me about puerto rico"},
                   {"sender", "user"},
                   {"liked", false},
                   {"dialog_acts", {"request topic"}},
               },
               {
                   {"message", "puerto rico is a caribbean island"},
                   {"sender", "assistant"},
                   {"liked", true},
                   {"dialog_acts", {"inform response"}},
                   {"facts",
                    {{{"fid", 12}, {"used", true}, {"source", "known"}},
                     {{"fid", 13}, {"used", false}, {"source", "section"}},
                     {{"fid", 14}, {"used", false}, {"source", "random"}}}},
               }}},
         }}}};
    out << j.dump();
  }
  auto result = data::ingest_dialogs(path.string(), data::IngestAdapter::released);
  CHECK(result.diagnostics.empty());
  REQUIRE(result.dialogs.size() == 1);
  const Dialog& d = result.dialogs[0];
  CHECK(d.id == "77");
  CHECK(d.topic == "puerto_rico");
  CHECK(d.aspects[0] == "history");
  REQUIRE(d.messages.size() == 2);
  CHECK(d.messages[0].acts == std::set<DialogAct>{DialogAct::request_topic});
  REQUIRE(d.messages[1].shown_facts.has_value());
  CHECK(d.messages[1].shown_facts->slots.size() == 3);
  CHECK(d.messages[1].used_fact_ids == std::set<std::string>{"12"});
  std::filesystem::remove(path);
}

TEST_CASE("split_dialogs: ratios (1,0,0) put everything in train") {
  std::vector<Dialog> dialogs;
  for (int i = 0; i < 7; ++i) dialogs.push_back(tiny_dialog("d" + std::to_string(i)));
  auto split = data::split_dialogs(dialogs, {1.0, 0.0, 0.0}, 3);
  CHECK(split.train.size() == 7);
  CHECK(split.validation.empty());
  CHECK(split.test.empty());
}

TEST_CASE("split_dialogs: 100 dialogs at 0.8/0.1/0.1 give 80/10/10") {
  std::vector<Dialog> dialogs;
  for (int i = 0; i < 100; ++i) dialogs.push_back(tiny_dialog("d" + std::to_string(i)));
  auto split = data::split_dialogs(dialogs, {0.8, 0.1, 0.1}, 9);
  CHECK(split.train.size() == 80);
  CHECK(split.validation.size() == 10);
  CHECK(split.test.size() == 10);
}

TEST_CASE("split_dialogs is deterministic, disjoint and exhaustive") {
  std::vector<Dialog> dialogs;
  for (int i = 0; i < 53; ++i) dialogs.push_back(tiny_dialog("d" + std::to_string(i)));
  auto a = data::split_dialogs(dialogs, {0.7, 0.2, 0.1}, 11);
  auto b = data::split_dialogs(dialogs, {0.7, 0.2, 0.1}, 11);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);

  std::set<std::string> all;
  for (const auto& s : {a.train, a.validation, a.test})
    for (const auto& id : s) CHECK(all.insert(id).second);  // disjoint
  CHECK(all.size() == 53);                                  // exhaustive

  auto c = data::split_dialogs(dialogs, {0.7, 0.2, 0.1}, 12);
  CHECK(c.train != a.train);  // different permutation almost surely
}

TEST_CASE("split_dialogs: empty input yields an empty split") {
  auto split = data::split_dialogs({}, {0.8, 0.1, 0.1}, 1);
  CHECK(split.train.empty());
  CHECK(split.validation.empty());
  CHECK(split.test.empty());
}

TEST_CASE("split_dialogs validates ratios") {
  std::vector<Dialog> dialogs = {tiny_dialog()};
  CHECK_THROWS_AS(data::split_dialogs(dialogs, {0.5, 0.2, 0.2}, 1), SchemaError);
  CHECK_THROWS_AS(data::split_dialogs(dialogs, {1.2, -0.1, -0.1}, 1), SchemaError);
}

TEST_CASE("label_fact_sources applies the definitions") {
  corpus::Fact f1;
  f1.id = "f1";
  f1.topic = "lesotho";
  f1.aspect = "history";               // assigned aspect
  f1.mentioned_entities = {"africa"};  // known entity
  f1.text = "history fact about africa";
  corpus::Fact f2;
  f2.id = "f2";
  f2.topic = "lesotho";
  f2.aspect = "climate";  // not assigned
  f2.mentioned_entities = {"rain"};
  f2.text = "climate fact";
  auto index = corpus::build_fact_index({f1, f2});

  Dialog d = tiny_dialog();
  corpus::FactBank bank;
  bank.slots.push_back({"f1", corpus::BankGroup::aspect, corpus::FactCategory::aspect, true, 0.5});
  bank.slots.push_back(
      {"f2", corpus::BankGroup::general, corpus::FactCategory::general, false, 0.1});
  d.messages[1].shown_facts = bank;
  d.messages[1].used_fact_ids = {"f1"};

  auto labels = data::label_fact_sources(d, index);
  REQUIRE(labels.size() == 2);
  CHECK(labels.at("f1").category == corpus::FactCategory::aspect);
  CHECK(labels.at("f1").rooted);
  CHECK(labels.at("f2").category == corpus::FactCategory::general);
  CHECK_FALSE(labels.at("f2").rooted);
}

TEST_CASE("label_fact_sources names unknown fact ids") {
  auto index = corpus::build_fact_index({});
  Dialog d = tiny_dialog();
  corpus::FactBank bank;
  bank.slots.push_back(
      {"missing", corpus::BankGroup::general, corpus::FactCategory::general, false, 0.0});
  d.messages[1].shown_facts = bank;
  CHECK_THROWS_WITH(data::label_fact_sources(d, index),
                    Catch::Matchers::ContainsSubstring("missing"));
}
