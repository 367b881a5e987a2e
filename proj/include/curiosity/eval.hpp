#pragma once
// Task metrics (MRR, micro-averaged F1, accuracy), the model/baseline
// evaluation adaptor, and the experiment-table artifact.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curiosity/common.hpp"
#include "curiosity/data.hpp"
#include "curiosity/model.hpp"

namespace curiosity::eval {

// Mean over turns of the reciprocal rank of the highest-ranked relevant
// fact. Rankings are best-first id lists; every turn must have at least
// one relevant id and all relevant ids must appear in the ranking.
inline double mean_reciprocal_rank(const std::vector<std::vector<std::string>>& rankings,
                                   const std::vector<std::set<std::string>>& relevant) {
  if (rankings.size() != relevant.size())
    throw SchemaError("mean_reciprocal_rank: misaligned inputs");
  if (rankings.empty()) throw SchemaError("mean_reciprocal_rank: no scored turns");
  double sum = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (relevant[i].empty())
      throw SchemaError("mean_reciprocal_rank: turn " + std::to_string(i) +
                        " has no relevant ids");
    for (const auto& id : relevant[i])
      if (std::find(rankings[i].begin(), rankings[i].end(), id) == rankings[i].end())
        throw SchemaError("mean_reciprocal_rank: relevant id absent from ranking: " + id);
    for (std::size_t r = 0; r < rankings[i].size(); ++r) {
      if (relevant[i].count(rankings[i][r])) {
        sum += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return sum / static_cast<double>(rankings.size());
}

// Micro-averaged F1 over all (utterance, act) decisions: 2TP/(2TP+FP+FN),
// defined as 0 when the denominator is 0.
template <typename Label>
inline double micro_f1(const std::vector<std::set<Label>>& predicted,
                       const std::vector<std::set<Label>>& gold) {
  if (predicted.size() != gold.size()) throw SchemaError("micro_f1: misaligned inputs");
  long long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (const auto& l : predicted[i]) {
      if (gold[i].count(l))
        ++tp;
      else
        ++fp;
    }
    for (const auto& l : gold[i])
      if (!predicted[i].count(l)) ++fn;
  }
  const long long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline double accuracy(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (predicted.size() != gold.size()) throw SchemaError("accuracy: misaligned inputs");
  if (predicted.empty()) throw SchemaError("accuracy: empty input");
  long long correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == gold[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Model evaluation over a dialog collection.

struct MetricRecord {
  std::optional<double> fact_mrr;
  std::optional<double> utterance_f1;
  std::optional<double> policy_f1;
  std::optional<double> like_accuracy;
  std::optional<model::MultiTaskLosses> losses;
};

inline constexpr double kActThreshold = 0.5;

inline std::set<data::DialogAct> binarize_acts(const autograd::Vec& probs) {
  std::set<data::DialogAct> acts;
  for (Eigen::Index k = 0; k < probs.size(); ++k)
    if (probs[k] > kActThreshold) acts.insert(static_cast<data::DialogAct>(k));
  return acts;
}

// Ranks a fact turn's candidates best-first: descending score, ties by
// ascending fact id.
inline std::vector<std::string> ranking_from_scores(const model::FactTurnValues& fv) {
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(fv.candidate_ids.size());
  for (std::size_t j = 0; j < fv.candidate_ids.size(); ++j)
    scored.emplace_back(fv.candidate_ids[j], fv.scores[static_cast<Eigen::Index>(j)]);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> ranking;
  ranking.reserve(scored.size());
  for (const auto& [id, _] : scored) ranking.push_back(id);
  return ranking;
}

inline MetricRecord evaluate_model(const model::Charm& charm,
                                   const std::vector<data::Dialog>& dialogs,
                                   const corpus::FactIndex& index) {
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::set<std::string>> relevant;
  std::vector<std::set<data::DialogAct>> pred_utt, pred_policy, gold_acts;
  std::vector<bool> pred_like, gold_like;
  std::vector<model::MultiTaskLosses> losses;

  for (const auto& d : dialogs) {
    model::ModelOutput out = charm.predict(d, index);
    model::DialogLabels labels = model::DialogLabels::from_dialog(d);
    losses.push_back(model::compute_losses(out, labels, charm.config()));
    for (int i = 0; i < out.num_turns; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      gold_acts.push_back(labels.acts[idx]);
      pred_policy.push_back(binarize_acts(out.policy_probs[idx]));
      pred_utt.push_back(binarize_acts(out.utterance_probs[idx]));
      if (out.like_prob[idx].has_value() && labels.liked[idx].has_value()) {
        pred_like.push_back(*out.like_prob[idx] > 0.5);
        gold_like.push_back(*labels.liked[idx]);
      }
      if (out.facts[idx].has_value() && labels.used[idx].has_value() &&
          !labels.used[idx]->empty()) {
        rankings.push_back(ranking_from_scores(*out.facts[idx]));
        relevant.push_back(*labels.used[idx]);
      }
    }
  }

  MetricRecord rec;
  if (!rankings.empty()) rec.fact_mrr = mean_reciprocal_rank(rankings, relevant);
  rec.utterance_f1 = micro_f1(pred_utt, gold_acts);
  rec.policy_f1 = micro_f1(pred_policy, gold_acts);
  if (!pred_like.empty()) rec.like_accuracy = accuracy(pred_like, gold_like);
  if (!losses.empty()) {
    model::MultiTaskLosses mean;
    for (const auto& l : losses) {
      mean.fact += l.fact;
      mean.policy += l.policy;
      mean.utterance += l.utterance;
      mean.like += l.like;
    }
    const double n = static_cast<double>(losses.size());
    mean.fact /= n;
    mean.policy /= n;
    mean.utterance /= n;
    mean.like /= n;
    mean.total = ((mean.fact + mean.like) + mean.policy) + mean.utterance;
    rec.losses = mean;
  }
  return rec;
}

inline MetricRecord evaluate_majority(const model::MajorityBaseline& baseline,
                                      const std::vector<data::Dialog>& dialogs) {
  std::vector<std::set<data::DialogAct>> pred, gold;
  std::vector<bool> pred_like, gold_like;
  const auto acts = baseline.predicted_acts();
  for (const auto& d : dialogs) {
    for (const auto& m : d.messages) {
      pred.push_back(acts);
      gold.push_back(m.acts);
      if (m.sender == data::Sender::assistant) {
        pred_like.push_back(baseline.like_value);
        gold_like.push_back(m.liked);
      }
    }
  }
  MetricRecord rec;  // fact_mrr stays empty: the baseline ranks nothing
  rec.utterance_f1 = micro_f1(pred, gold);
  rec.policy_f1 = micro_f1(pred, gold);
  if (!pred_like.empty()) rec.like_accuracy = accuracy(pred_like, gold_like);
  return rec;
}

// ---------------------------------------------------------------------------
// Experiment table: rows are models, column groups are the four metrics
// for validation and test. Missing cells render as n/a.

struct ExperimentTable {
  // model name -> split name ("val"/"test") -> record
  std::map<std::string, std::map<std::string, MetricRecord>> cells;
  std::vector<std::string> row_order;  // insertion order of models

  void set(const std::string& model_name, const std::string& split, MetricRecord rec) {
    if (!cells.count(model_name)) row_order.push_back(model_name);
    cells[model_name][split] = rec;
  }
};

namespace detail {

inline std::string cell_text(const std::optional<double>& v) {
  if (!v.has_value()) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << *v;
  return os.str();
}

inline std::string cell_tsv(const std::optional<double>& v) {
  if (!v.has_value()) return "n/a";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

inline std::optional<double> cell_from_tsv(const std::string& s) {
  if (s == "n/a") return std::nullopt;
  return std::stod(s);
}

}  // namespace detail

inline const std::vector<std::pair<std::string, std::optional<double> MetricRecord::*>>&
table_columns() {
  static const std::vector<std::pair<std::string, std::optional<double> MetricRecord::*>> cols = {
      {"fact_mrr", &MetricRecord::fact_mrr},
      {"utterance_f1", &MetricRecord::utterance_f1},
      {"policy_f1", &MetricRecord::policy_f1},
      {"like_accuracy", &MetricRecord::like_accuracy},
  };
  return cols;
}

// Tab-separated machine-readable rendering; parse_experiment_table
// round-trips it exactly.
inline std::string emit_experiment_table_tsv(const ExperimentTable& table) {
  std::ostringstream os;
  os << "model";
  for (const auto& [name, _] : table_columns())
    for (const char* split : {"val", "test"}) os << "\t" << name << "_" << split;
  os << "\n";
  for (const auto& model_name : table.row_order) {
    os << model_name;
    const auto& row = table.cells.at(model_name);
    for (const auto& [_, member] : table_columns()) {
      for (const char* split : {"val", "test"}) {
        auto it = row.find(split);
        std::optional<double> v =
            it == row.end() ? std::nullopt : (it->second.*member);
        os << "\t" << detail::cell_tsv(v);
      }
    }
    os << "\n";
  }
  return os.str();
}

inline ExperimentTable parse_experiment_table_tsv(const std::string& tsv) {
  std::istringstream in(tsv);
  std::string header;
  if (!std::getline(in, header)) throw SchemaError("experiment table: empty input");
  ExperimentTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) fields.push_back(field);
    if (fields.size() != 1 + table_columns().size() * 2)
      throw SchemaError("experiment table: malformed row: " + line);
    MetricRecord val_rec, test_rec;
    std::size_t at = 1;
    for (const auto& [_, member] : table_columns()) {
      val_rec.*member = detail::cell_from_tsv(fields[at++]);
      test_rec.*member = detail::cell_from_tsv(fields[at++]);
    }
    table.set(fields[0], "val", val_rec);
    table.set(fields[0], "test", test_rec);
  }
  return table;
}

inline std::string render_experiment_table_text(const ExperimentTable& table) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "Model";
  for (const char* group : {"Fact MRR", "Utt F1", "Policy F1", "Like Acc"})
    os << std::right << std::setw(11) << (std::string(group) + " V") << std::setw(11)
       << (std::string(group) + " T");
  os << "\n";
  for (const auto& model_name : table.row_order) {
    os << std::left << std::setw(18) << model_name;
    const auto& row = table.cells.at(model_name);
    for (const auto& [_, member] : table_columns()) {
      for (const char* split : {"val", "test"}) {
        auto it = row.find(split);
        std::optional<double> v = it == row.end() ? std::nullopt : (it->second.*member);
        os << std::right << std::setw(11) << detail::cell_text(v);
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace curiosity::eval
