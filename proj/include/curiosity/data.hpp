#pragma once
// Canonical dialog data model: dialog acts, messages, dialogs, dataset
// splits, ingestion (canonical JSONL + released-dataset adapter) and
// fact-source labeling.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curiosity/common.hpp"
#include "curiosity/corpus.hpp"

namespace curiosity::data {

// The sixteen-label dialog-act schema. Messages carry a possibly empty set.
enum class DialogAct : int {
  request_topic = 0,
  request_aspect,
  request_followup,
  request_other,
  inform_response,
  inform_related,
  inform_unrelated,
  feedback_positive,
  feedback_negative,
  feedback_ask,
  offer_topic,
  offer_aspect,
  offer_followup,
  offer_other,
  offer_accept,
  offer_decline,
};

inline constexpr int kNumDialogActs = 16;

inline const std::array<const char*, kNumDialogActs>& act_names() {
  static const std::array<const char*, kNumDialogActs> names = {
      "request_topic",  "request_aspect",    "request_followup",  "request_other",
      "inform_response", "inform_related",   "inform_unrelated",  "feedback_positive",
      "feedback_negative", "feedback_ask",   "offer_topic",       "offer_aspect",
      "offer_followup", "offer_other",       "offer_accept",      "offer_decline"};
  return names;
}

inline const char* to_string(DialogAct a) { return act_names()[static_cast<std::size_t>(a)]; }

// Accepts both snake_case and space-separated spellings.
inline std::optional<DialogAct> act_from_string(std::string name) {
  for (auto& c : name)
    if (c == ' ') c = '_';
  const auto& names = act_names();
  for (int i = 0; i < kNumDialogActs; ++i)
    if (name == names[static_cast<std::size_t>(i)]) return static_cast<DialogAct>(i);
  return std::nullopt;
}

enum class Sender { user, assistant };

inline const char* to_string(Sender s) { return s == Sender::user ? "user" : "assistant"; }

struct Message {
  Sender sender = Sender::user;
  std::string text;
  std::set<DialogAct> acts;
  bool liked = false;  // meaningful only for assistant messages
  std::optional<corpus::FactBank> shown_facts;
  std::set<std::string> used_fact_ids;
};

struct Dialog {
  std::string id;
  std::string topic;  // Entity id
  std::array<std::string, 2> aspects;
  std::set<std::string> known_entities;
  std::vector<Message> messages;  // alternating, user first

  // Throws SchemaError naming this dialog and the offending field.
  void validate() const {
    auto fail = [&](const std::string& what) {
      throw SchemaError("dialog " + id + ": " + what);
    };
    if (id.empty()) throw SchemaError("dialog with empty id");
    if (topic.empty()) fail("empty topic");
    if (aspects[0].empty() || aspects[1].empty()) fail("dialog must carry exactly 2 aspects");
    if (messages.empty()) fail("empty message list");
    for (std::size_t i = 0; i < messages.size(); ++i) {
      const Message& m = messages[i];
      const Sender expected = (i % 2 == 0) ? Sender::user : Sender::assistant;
      if (m.sender != expected)
        fail("messages must alternate user/assistant starting with user (message " +
             std::to_string(i) + ")");
      if (m.sender == Sender::user) {
        if (m.liked) fail("user message " + std::to_string(i) + " carries a like");
        if (m.shown_facts) fail("user message " + std::to_string(i) + " carries shown_facts");
        if (!m.used_fact_ids.empty())
          fail("user message " + std::to_string(i) + " carries used_fact_ids");
      }
      if (!m.used_fact_ids.empty()) {
        if (!m.shown_facts) fail("message " + std::to_string(i) + " uses facts without shown_facts");
        const auto shown = m.shown_facts->slot_ids();
        for (const auto& fid : m.used_fact_ids)
          if (!shown.count(fid))
            fail("message " + std::to_string(i) + " used fact not among shown: " + fid);
      }
    }
  }
};

struct DatasetSplit {
  std::set<std::string> train, validation, test;
};

// ---------------------------------------------------------------------------
// Canonical JSONL serialization.

using json = nlohmann::json;

inline json bank_to_json(const corpus::FactBank& bank) {
  json slots = json::array();
  for (const auto& s : bank.slots) {
    slots.push_back({{"fact_id", s.fact_id},
                     {"group", corpus::to_string(s.group)},
                     {"category", corpus::to_string(s.category)},
                     {"rooted", s.rooted},
                     {"score", s.score}});
  }
  return json{{"turn_index", bank.turn_index}, {"slots", slots}};
}

inline corpus::FactBank bank_from_json(const json& j) {
  corpus::FactBank bank;
  bank.turn_index = j.at("turn_index").get<int>();
  for (const auto& js : j.at("slots")) {
    corpus::BankSlot s;
    s.fact_id = js.at("fact_id").get<std::string>();
    const std::string group = js.at("group").get<std::string>();
    if (group == "rooted")
      s.group = corpus::BankGroup::rooted;
    else if (group == "aspect")
      s.group = corpus::BankGroup::aspect;
    else if (group == "general")
      s.group = corpus::BankGroup::general;
    else
      throw SchemaError("unknown bank group: " + group);
    const std::string cat = js.at("category").get<std::string>();
    if (cat == "aspect")
      s.category = corpus::FactCategory::aspect;
    else if (cat == "general")
      s.category = corpus::FactCategory::general;
    else
      throw SchemaError("unknown fact category: " + cat);
    s.rooted = js.at("rooted").get<bool>();
    s.score = js.at("score").get<double>();
    bank.slots.push_back(std::move(s));
  }
  return bank;
}

inline json dialog_to_json(const Dialog& d) {
  json messages = json::array();
  for (const auto& m : d.messages) {
    json jm{{"sender", to_string(m.sender)}, {"text", m.text}};
    json acts = json::array();
    for (const auto& a : m.acts) acts.push_back(to_string(a));
    jm["acts"] = acts;
    if (m.sender == Sender::assistant) {
      jm["liked"] = m.liked;
      if (m.shown_facts) jm["shown_facts"] = bank_to_json(*m.shown_facts);
      if (!m.used_fact_ids.empty())
        jm["used_fact_ids"] = std::vector<std::string>(m.used_fact_ids.begin(),
                                                       m.used_fact_ids.end());
    }
    messages.push_back(std::move(jm));
  }
  return json{{"id", d.id},
              {"topic", d.topic},
              {"aspects", {d.aspects[0], d.aspects[1]}},
              {"known_entities",
               std::vector<std::string>(d.known_entities.begin(), d.known_entities.end())},
              {"messages", messages}};
}

inline Dialog dialog_from_json(const json& j) {
  Dialog d;
  d.id = j.at("id").get<std::string>();
  d.topic = j.at("topic").get<std::string>();
  const auto& aspects = j.at("aspects");
  if (!aspects.is_array() || aspects.size() != 2)
    throw SchemaError("dialog " + d.id + ": dialog must carry exactly 2 aspects");
  d.aspects[0] = aspects[0].get<std::string>();
  d.aspects[1] = aspects[1].get<std::string>();
  for (const auto& e : j.value("known_entities", json::array()))
    d.known_entities.insert(e.get<std::string>());
  for (const auto& jm : j.at("messages")) {
    Message m;
    const std::string sender = jm.at("sender").get<std::string>();
    if (sender == "user")
      m.sender = Sender::user;
    else if (sender == "assistant")
      m.sender = Sender::assistant;
    else
      throw SchemaError("dialog " + d.id + ": unknown sender: " + sender);
    m.text = jm.at("text").get<std::string>();
    for (const auto& ja : jm.value("acts", json::array())) {
      auto act = act_from_string(ja.get<std::string>());
      if (!act)
        throw SchemaError("dialog " + d.id + ": unknown dialog act: " + ja.get<std::string>());
      m.acts.insert(*act);
    }
    m.liked = jm.value("liked", false);
    if (jm.contains("shown_facts")) m.shown_facts = bank_from_json(jm.at("shown_facts"));
    for (const auto& f : jm.value("used_fact_ids", json::array()))
      m.used_fact_ids.insert(f.get<std::string>());
    d.messages.push_back(std::move(m));
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Ingestion.

enum class IngestAdapter { canonical, released };

struct IngestResult {
  std::vector<Dialog> dialogs;
  std::vector<std::string> diagnostics;  // one entry per rejected dialog
};

namespace detail {

// Adapter for the released dataset's field names. The released files carry
// one JSON object with a "dialogs" array; fact rows use {fid, used, source}
// with source in {known, section, random}.
inline Dialog released_dialog_from_json(const json& j) {
  Dialog d;
  if (j.contains("dialog_id"))
    d.id = j.at("dialog_id").is_string() ? j.at("dialog_id").get<std::string>()
                                         : std::to_string(j.at("dialog_id").get<long long>());
  else
    d.id = j.at("id").get<std::string>();
  d.topic = j.contains("focus_entity") ? j.at("focus_entity").get<std::string>()
                                       : j.at("topic").get<std::string>();
  if (j.contains("first_aspect") || j.contains("second_aspect")) {
    d.aspects[0] = j.value("first_aspect", "");
    d.aspects[1] = j.value("second_aspect", "");
  } else {
    const auto& aspects = j.at("aspects");
    if (!aspects.is_array() || aspects.size() != 2)
      throw SchemaError("dialog " + d.id + ": dialog must carry exactly 2 aspects");
    d.aspects[0] = aspects[0].get<std::string>();
    d.aspects[1] = aspects[1].get<std::string>();
  }
  for (const auto& e : j.value("known_entities", json::array()))
    d.known_entities.insert(e.get<std::string>());

  int turn = 0;
  for (const auto& jm : j.at("messages")) {
    Message m;
    const std::string sender = jm.at("sender").get<std::string>();
    m.sender = sender == "user" ? Sender::user : Sender::assistant;
    m.text = jm.at("message").get<std::string>();
    for (const auto& ja : jm.value("dialog_acts", json::array())) {
      auto act = act_from_string(ja.get<std::string>());
      if (!act)
        throw SchemaError("dialog " + d.id + ": unknown dialog act: " + ja.get<std::string>());
      m.acts.insert(*act);
    }
    m.liked = jm.value("liked", false);
    if (jm.contains("facts") && jm.at("facts").is_array() && !jm.at("facts").empty()) {
      corpus::FactBank bank;
      bank.turn_index = turn;
      for (const auto& jf : jm.at("facts")) {
        corpus::BankSlot s;
        s.fact_id = jf.at("fid").is_string() ? jf.at("fid").get<std::string>()
                                             : std::to_string(jf.at("fid").get<long long>());
        const std::string source = jf.value("source", "random");
        if (source == "known") {
          s.group = corpus::BankGroup::rooted;
          s.rooted = true;
          s.category = corpus::FactCategory::general;
        } else if (source == "section") {
          s.group = corpus::BankGroup::aspect;
          s.category = corpus::FactCategory::aspect;
        } else {
          s.group = corpus::BankGroup::general;
          s.category = corpus::FactCategory::general;
        }
        if (jf.value("used", false)) m.used_fact_ids.insert(s.fact_id);
        bank.slots.push_back(std::move(s));
      }
      m.shown_facts = std::move(bank);
    }
    d.messages.push_back(std::move(m));
    ++turn;
  }
  d.validate();
  return d;
}

}  // namespace detail

// Reads dialogs from a file. The canonical format is line-delimited JSON,
// one dialog per line; the released adapter also accepts a single JSON
// object with a top-level "dialogs" array. Malformed dialogs are rejected
// with one diagnostic each rather than dropped silently; I/O or top-level
// parse failures throw.
inline IngestResult ingest_dialogs(const std::string& path, IngestAdapter adapter) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open dialog file: " + path);

  IngestResult result;
  auto consume = [&](const json& j, const std::string& where) {
    try {
      result.dialogs.push_back(adapter == IngestAdapter::canonical
                                   ? dialog_from_json(j)
                                   : detail::released_dialog_from_json(j));
    } catch (const std::exception& e) {
      result.diagnostics.push_back(where + ": " + e.what());
    }
  };

  std::string first_line;
  std::getline(in, first_line);
  // A released-format file may be one big JSON document.
  bool whole_file = false;
  if (adapter == IngestAdapter::released) {
    std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string all = first_line + "\n" + rest;
    json j = json::parse(all, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("dialogs")) {
      whole_file = true;
      std::size_t i = 0;
      for (const auto& jd : j.at("dialogs")) consume(jd, "dialogs[" + std::to_string(i++) + "]");
    } else if (!j.is_discarded() && j.is_array()) {
      whole_file = true;
      std::size_t i = 0;
      for (const auto& jd : j) consume(jd, "dialogs[" + std::to_string(i++) + "]");
    } else {
      in.clear();
      in.seekg(0);
      std::getline(in, first_line);
    }
  }
  if (!whole_file) {
    std::size_t line_no = 1;
    std::string line = first_line;
    do {
      if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
          result.diagnostics.push_back("line " + std::to_string(line_no) + ": invalid JSON");
        } else {
          consume(j, "line " + std::to_string(line_no));
        }
      }
      ++line_no;
    } while (std::getline(in, line));
  }
  return result;
}

inline void write_dialogs(const std::string& path, const std::vector<Dialog>& dialogs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dialog file: " + path);
  for (const auto& d : dialogs) out << dialog_to_json(d).dump() << "\n";
}

// ---------------------------------------------------------------------------
// Dialog-level splitting.

// Partitions dialogs (never messages) into train/validation/test.
// Sizes follow largest-remainder rounding of the ratios; the permutation
// is drawn from the seed.
inline DatasetSplit split_dialogs(const std::vector<Dialog>& dialogs,
                                  std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || std::abs(sum - 1.0) > 1e-9)
    throw SchemaError("split ratios must be non-negative and sum to 1");

  std::vector<std::string> ids;
  ids.reserve(dialogs.size());
  for (const auto& d : dialogs) ids.push_back(d.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t n = ids.size();
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    double target = ratios[static_cast<std::size_t>(k)] * static_cast<double>(n);
    sizes[static_cast<std::size_t>(k)] = static_cast<std::size_t>(target);
    frac[static_cast<std::size_t>(k)] = target - static_cast<double>(sizes[static_cast<std::size_t>(k)]);
    assigned += sizes[static_cast<std::size_t>(k)];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (frac[static_cast<std::size_t>(a)] != frac[static_cast<std::size_t>(b)])
      return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)];
    return a < b;
  });
  for (int k = 0; assigned < n; ++k) {
    sizes[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])] += 1;
    ++assigned;
  }

  DatasetSplit split;
  std::size_t at = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) split.train.insert(ids[at++]);
  for (std::size_t i = 0; i < sizes[1]; ++i) split.validation.insert(ids[at++]);
  for (std::size_t i = 0; i < sizes[2]; ++i) split.test.insert(ids[at++]);
  return split;
}

// ---------------------------------------------------------------------------
// Fact-source labeling.

struct FactSource {
  corpus::FactCategory category = corpus::FactCategory::general;
  bool rooted = false;
};

inline bool operator==(const FactSource& a, const FactSource& b) {
  return a.category == b.category && a.rooted == b.rooted;
}

// Labels every fact shown in the dialog: category is "aspect" iff the
// fact's section is one of the dialog's two assigned aspects; rooted iff
// the fact mentions an entity the user marked as known.
inline std::map<std::string, FactSource> label_fact_sources(const Dialog& dialog,
                                                            const corpus::FactIndex& index) {
  std::map<std::string, FactSource> labels;
  for (const auto& m : dialog.messages) {
    if (!m.shown_facts) continue;
    for (const auto& slot : m.shown_facts->slots) {
      if (labels.count(slot.fact_id)) continue;
      const corpus::Fact& f = index.fact(slot.fact_id);  // throws naming the id
      FactSource src;
      src.category = (f.aspect == dialog.aspects[0] || f.aspect == dialog.aspects[1])
                         ? corpus::FactCategory::aspect
                         : corpus::FactCategory::general;
      src.rooted = corpus::detail::mentions_known(f, dialog.known_entities);
      labels.emplace(slot.fact_id, src);
    }
  }
  return labels;
}

}  // namespace curiosity::data
