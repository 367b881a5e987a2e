#pragma once
// File formats: fact corpus and entity catalog (line-delimited JSON),
// serialized fact index, annotation files for agreement analysis, metric
// records and analysis reports. All files are UTF-8.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curiosity/analysis.hpp"
#include "curiosity/common.hpp"
#include "curiosity/corpus.hpp"
#include "curiosity/data.hpp"
#include "curiosity/eval.hpp"

namespace curiosity::io {

using json = nlohmann::json;

inline std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw SchemaError(path + ": invalid JSON on line " + std::to_string(line_no));
    rows.push_back(std::move(j));
  }
  return rows;
}

inline void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << contents;
}

// ---------------------------------------------------------------------------
// Fact corpus and entity catalog.

inline std::vector<corpus::Fact> read_facts(const std::string& path) {
  std::vector<corpus::Fact> facts;
  for (const auto& j : read_jsonl(path)) {
    corpus::Fact f;
    f.id = j.at("id").get<std::string>();
    f.topic = j.at("topic").get<std::string>();
    f.aspect = j.at("aspect").get<std::string>();
    for (const auto& e : j.value("entities", json::array()))
      f.mentioned_entities.insert(e.get<std::string>());
    f.text = j.at("text").get<std::string>();
    facts.push_back(std::move(f));
  }
  return facts;
}

inline void write_facts(const std::string& path, const std::vector<corpus::Fact>& facts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& f : facts) {
    json j{{"id", f.id},
           {"topic", f.topic},
           {"aspect", f.aspect},
           {"entities",
            std::vector<std::string>(f.mentioned_entities.begin(), f.mentioned_entities.end())},
           {"text", f.text}};
    out << j.dump() << "\n";
  }
}

inline std::vector<corpus::Entity> read_entities(const std::string& path) {
  std::vector<corpus::Entity> entities;
  for (const auto& j : read_jsonl(path)) {
    corpus::Entity e;
    e.id = j.at("id").get<std::string>();
    e.canonical_name = j.at("name").get<std::string>();
    e.view_count = j.at("view_count").get<long long>();
    if (e.view_count < 0) throw SchemaError("entity " + e.id + ": negative view_count");
    entities.push_back(std::move(e));
  }
  return entities;
}

inline void write_entities(const std::string& path, const std::vector<corpus::Entity>& entities) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& e : entities) {
    json j{{"id", e.id}, {"name", e.canonical_name}, {"view_count", e.view_count}};
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Fact-index serialization.

inline json index_to_json(const corpus::FactIndex& index) {
  json j;
  json vocab = json::object();
  for (const auto& [term, id] : index.vocabulary) vocab[term] = id;
  j["vocabulary"] = vocab;
  j["idf"] = index.idf;
  json docs = json::object();
  for (const auto& [fid, vec] : index.doc_vectors) {
    json terms = json::array();
    for (const auto& [term, w] : vec) terms.push_back({term, w});
    docs[fid] = terms;
  }
  j["doc_vectors"] = docs;
  json facts = json::array();
  for (const auto& [fid, f] : index.facts)
    facts.push_back({{"id", f.id},
                     {"topic", f.topic},
                     {"aspect", f.aspect},
                     {"entities", std::vector<std::string>(f.mentioned_entities.begin(),
                                                           f.mentioned_entities.end())},
                     {"text", f.text}});
  j["facts"] = facts;
  return j;
}

inline corpus::FactIndex index_from_json(const json& j) {
  // Postings are rebuilt from the stored facts; vectors and idf are loaded
  // verbatim so scores round-trip bit for bit.
  std::vector<corpus::Fact> facts;
  for (const auto& jf : j.at("facts")) {
    corpus::Fact f;
    f.id = jf.at("id").get<std::string>();
    f.topic = jf.at("topic").get<std::string>();
    f.aspect = jf.at("aspect").get<std::string>();
    for (const auto& e : jf.value("entities", json::array()))
      f.mentioned_entities.insert(e.get<std::string>());
    f.text = jf.at("text").get<std::string>();
    facts.push_back(std::move(f));
  }
  corpus::FactIndex index = corpus::build_fact_index(facts);
  index.vocabulary.clear();
  for (const auto& [term, id] : j.at("vocabulary").items())
    index.vocabulary[term] = id.get<int>();
  index.idf = j.at("idf").get<std::vector<double>>();
  index.doc_vectors.clear();
  for (const auto& [fid, terms] : j.at("doc_vectors").items()) {
    corpus::SparseVector vec;
    for (const auto& t : terms) vec.emplace_back(t[0].get<int>(), t[1].get<double>());
    index.doc_vectors[fid] = std::move(vec);
  }
  return index;
}

inline void write_index(const std::string& path, const corpus::FactIndex& index) {
  write_text_file(path, index_to_json(index).dump());
}

inline corpus::FactIndex read_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open index file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("invalid index file: " + path);
  return index_from_json(j);
}

// ---------------------------------------------------------------------------
// Agreement annotations: {"labels": [...], "utterances": [{"annotations":
// [["act", ...] | null, ...]}, ...]} with one inner entry per annotator.

inline analysis::AnnotationSet read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open annotations file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("invalid annotations file: " + path);

  analysis::AnnotationSet set;
  if (j.contains("labels")) {
    set.label_classes.clear();
    for (const auto& l : j.at("labels")) {
      auto act = data::act_from_string(l.get<std::string>());
      if (!act) throw SchemaError("unknown act label in annotations: " + l.get<std::string>());
      set.label_classes.push_back(*act);
    }
  }
  for (const auto& ju : j.at("utterances")) {
    std::vector<std::optional<std::set<data::DialogAct>>> row;
    for (const auto& ja : ju.at("annotations")) {
      if (ja.is_null()) {
        row.push_back(std::nullopt);
        continue;
      }
      std::set<data::DialogAct> acts;
      for (const auto& l : ja) {
        auto act = data::act_from_string(l.get<std::string>());
        if (!act) throw SchemaError("unknown act label in annotations: " + l.get<std::string>());
        acts.insert(*act);
      }
      row.push_back(std::move(acts));
    }
    set.annotations.push_back(std::move(row));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Analysis reports.

inline json preference_table_to_json(const analysis::PreferenceTable& table) {
  json cells = json::array();
  for (corpus::FactCategory cat : {corpus::FactCategory::aspect, corpus::FactCategory::general}) {
    for (bool rooted : {true, false}) {
      const auto& cell = table.cell(cat, rooted);
      json jc{{"category", corpus::to_string(cat)},
              {"rooted", rooted},
              {"n", cell.n},
              {"successes", cell.s}};
      if (cell.defined())
        jc["p"] = cell.p();
      else
        jc["p"] = nullptr;
      cells.push_back(std::move(jc));
    }
  }
  return cells;
}

inline std::string render_preference_table_text(const std::string& title,
                                                const analysis::PreferenceTable& table) {
  std::ostringstream os;
  os << title << "\n";
  os << std::left << std::setw(10) << "category" << std::setw(9) << "rooted" << std::right
     << std::setw(8) << "n" << std::setw(10) << "p" << "  bar\n";
  for (corpus::FactCategory cat : {corpus::FactCategory::aspect, corpus::FactCategory::general}) {
    for (bool rooted : {true, false}) {
      const auto& cell = table.cell(cat, rooted);
      os << std::left << std::setw(10) << corpus::to_string(cat) << std::setw(9)
         << (rooted ? "yes" : "no") << std::right << std::setw(8) << cell.n;
      if (cell.defined()) {
        os << std::setw(10) << std::fixed << std::setprecision(3) << cell.p() << "  ";
        const int bars = static_cast<int>(cell.p() * 40.0 + 0.5);
        for (int b = 0; b < bars; ++b) os << '#';
      } else {
        os << std::setw(10) << "undef" << "  ";
      }
      os << "\n";
    }
  }
  return os.str();
}

inline json metric_record_to_json(const std::string& model_name, const std::string& split,
                                  const eval::MetricRecord& rec) {
  auto opt = [](const std::optional<double>& v) {
    return v.has_value() ? json(*v) : json(nullptr);
  };
  json j{{"model", model_name},
         {"split", split},
         {"fact_mrr", opt(rec.fact_mrr)},
         {"utterance_f1", opt(rec.utterance_f1)},
         {"policy_f1", opt(rec.policy_f1)},
         {"like_accuracy", opt(rec.like_accuracy)}};
  if (rec.losses.has_value()) {
    j["losses"] = {{"fact", rec.losses->fact},
                   {"policy", rec.losses->policy},
                   {"utterance", rec.losses->utterance},
                   {"like", rec.losses->like},
                   {"total", rec.losses->total}};
  }
  return j;
}

}  // namespace curiosity::io
