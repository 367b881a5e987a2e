#pragma once
// Engagement analysis: explicit like preferences, implicit followup
// mining, two-proportion z-tests, multi-label Krippendorff's alpha, and
// the paraphrase-category aggregation.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "curiosity/common.hpp"
#include "curiosity/corpus.hpp"
#include "curiosity/data.hpp"

namespace curiosity::analysis {

// ---------------------------------------------------------------------------
// Preference tables over the four (category, rooted) cells.

struct PreferenceCell {
  long long n = 0;  // units
  long long s = 0;  // successes

  bool defined() const { return n > 0; }
  double p() const { return defined() ? static_cast<double>(s) / static_cast<double>(n) : 0.0; }
};

struct PreferenceTable {
  // indexed [category][rooted] with category 0 = aspect, 1 = general
  PreferenceCell cells[2][2];

  PreferenceCell& cell(corpus::FactCategory c, bool rooted) {
    return cells[c == corpus::FactCategory::aspect ? 0 : 1][rooted ? 1 : 0];
  }
  const PreferenceCell& cell(corpus::FactCategory c, bool rooted) const {
    return cells[c == corpus::FactCategory::aspect ? 0 : 1][rooted ? 1 : 0];
  }
};

namespace detail {

// Distinct source cells of the facts a message used. A message whose used
// facts span several cells contributes one unit to each distinct cell.
inline std::set<std::pair<int, int>> used_cells(
    const data::Message& m, const std::map<std::string, data::FactSource>& sources) {
  std::set<std::pair<int, int>> cells;
  for (const auto& fid : m.used_fact_ids) {
    const data::FactSource& src = sources.at(fid);
    cells.insert({src.category == corpus::FactCategory::aspect ? 0 : 1, src.rooted ? 1 : 0});
  }
  return cells;
}

inline const std::set<data::DialogAct>& inform_family() {
  static const std::set<data::DialogAct> family = {data::DialogAct::inform_response,
                                                   data::DialogAct::inform_related,
                                                   data::DialogAct::inform_unrelated};
  return family;
}

inline bool has_inform_act(const data::Message& m) {
  for (const auto& a : m.acts)
    if (inform_family().count(a)) return true;
  return false;
}

}  // namespace detail

// P(liked | fact source): units are assistant messages that used at least
// one fact; the success signal is the like flag.
inline PreferenceTable explicit_preference(const std::vector<data::Dialog>& dialogs,
                                           const corpus::FactIndex& index) {
  PreferenceTable table;
  for (const auto& d : dialogs) {
    const auto sources = data::label_fact_sources(d, index);
    for (const auto& m : d.messages) {
      if (m.sender != data::Sender::assistant || m.used_fact_ids.empty()) continue;
      for (const auto& [cat, rooted] : detail::used_cells(m, sources)) {
        PreferenceCell& cell = table.cells[cat][rooted];
        cell.n += 1;
        if (m.liked) cell.s += 1;
      }
    }
  }
  return table;
}

// P(request followup | fact source): units are adjacent (assistant, user)
// pairs where the assistant message used a fact and carries an inform-family
// act; success is the user reply carrying "request followup".
inline PreferenceTable implicit_followups(const std::vector<data::Dialog>& dialogs,
                                          const corpus::FactIndex& index) {
  PreferenceTable table;
  for (const auto& d : dialogs) {
    const auto sources = data::label_fact_sources(d, index);
    for (std::size_t i = 0; i + 1 < d.messages.size(); ++i) {
      const data::Message& assistant = d.messages[i];
      const data::Message& user = d.messages[i + 1];
      if (assistant.sender != data::Sender::assistant || user.sender != data::Sender::user)
        continue;
      if (assistant.used_fact_ids.empty() || !detail::has_inform_act(assistant)) continue;
      const bool followup = user.acts.count(data::DialogAct::request_followup) != 0;
      for (const auto& [cat, rooted] : detail::used_cells(assistant, sources)) {
        PreferenceCell& cell = table.cells[cat][rooted];
        cell.n += 1;
        if (followup) cell.s += 1;
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Two-proportion z-test with pooled variance; two-sided p-value from the
// standard normal.

struct ZTestResult {
  double z = 0.0;
  double p_value = 1.0;
};

inline ZTestResult two_proportion_z_test(long long s1, long long n1, long long s2,
                                         long long n2) {
  if (n1 <= 0 || n2 <= 0) throw SchemaError("z-test requires positive sample sizes");
  if (s1 < 0 || s1 > n1 || s2 < 0 || s2 > n2) throw SchemaError("z-test successes out of range");
  const double p1 = static_cast<double>(s1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(s2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(s1 + s2) / static_cast<double>(n1 + n2);
  ZTestResult result;
  if (pooled <= 0.0 || pooled >= 1.0) {
    // Degenerate pooled proportion: no sampling variance.
    if (p1 == p2) {
      result.z = 0.0;
      result.p_value = 1.0;
    } else {
      result.z = p1 > p2 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      result.p_value = 0.0;
    }
    return result;
  }
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  result.z = (p1 - p2) / se;
  result.p_value = std::erfc(std::abs(result.z) * 0.7071067811865475244);
  return result;
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha for multi-label annotations. The multi-label task is
// expanded to one binary row per (utterance, label class); rows with fewer
// than two annotations are excluded; the distance metric is nominal.

struct AnnotationSet {
  // Label classes participating in the expansion (defaults to all 16 acts).
  std::vector<data::DialogAct> label_classes;
  // annotations[u][a]: annotator a's act set for utterance u, or nullopt
  // if that annotator did not annotate the utterance.
  std::vector<std::vector<std::optional<std::set<data::DialogAct>>>> annotations;

  AnnotationSet() {
    for (int k = 0; k < data::kNumDialogActs; ++k)
      label_classes.push_back(static_cast<data::DialogAct>(k));
  }
};

// Annotation quality gate: agreement must clear 0.8.
inline constexpr double kAlphaQualityThreshold = 0.8;
inline bool passes_agreement_gate(double alpha) { return alpha > kAlphaQualityThreshold; }

// Returns nullopt when no row carries two or more annotations. With zero
// observed disagreement the result is exactly 1.
inline std::optional<double> krippendorff_alpha_multilabel(const AnnotationSet& input) {
  // Coincidence matrix over the two values {0 = absent, 1 = present}.
  double coincidence[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (const auto& row : input.annotations) {
    for (const auto& label : input.label_classes) {
      std::vector<int> values;
      for (const auto& annotator : row)
        if (annotator.has_value()) values.push_back(annotator->count(label) ? 1 : 0);
      const std::size_t m = values.size();
      if (m < 2) continue;
      const double w = 1.0 / static_cast<double>(m - 1);
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          if (a != b) coincidence[values[a]][values[b]] += w;
    }
  }
  const double n0 = coincidence[0][0] + coincidence[0][1];
  const double n1 = coincidence[1][0] + coincidence[1][1];
  const double n = n0 + n1;
  if (n <= 0.0) return std::nullopt;
  const double observed_disagreement = coincidence[0][1] + coincidence[1][0];
  if (observed_disagreement == 0.0) return 1.0;
  // alpha = 1 - (n-1) * sum_{c!=k} o_ck / sum_{c!=k} n_c n_k
  return 1.0 - (n - 1.0) * observed_disagreement / (2.0 * n0 * n1);
}

// ---------------------------------------------------------------------------
// Paraphrase-category aggregation (manual labels from the fixed taxonomy).

inline const std::map<std::string, std::string>& paraphrase_taxonomy() {
  static const std::map<std::string, std::string> label_to_group = {
      {"verbatim", "Copy"},           {"cherry-pick", "Copy"},
      {"context", "Copy"},            {"paraphrase-correct", "Paraphrase"},
      {"paraphrase-multiple", "Paraphrase"}, {"paraphrase-error", "Error"},
      {"unrelated", "Unrelated"},
  };
  return label_to_group;
}

struct ParaphraseStats {
  std::map<std::string, long long> label_counts;
  std::map<std::string, long long> group_counts;
  long long total = 0;

  double label_percent(const std::string& label) const {
    auto it = label_counts.find(label);
    if (it == label_counts.end() || total == 0) return 0.0;
    return 100.0 * static_cast<double>(it->second) / static_cast<double>(total);
  }
  double group_percent(const std::string& group) const {
    auto it = group_counts.find(group);
    if (it == group_counts.end() || total == 0) return 0.0;
    return 100.0 * static_cast<double>(it->second) / static_cast<double>(total);
  }
};

inline ParaphraseStats paraphrase_stats(const std::vector<std::string>& labels) {
  ParaphraseStats stats;
  const auto& taxonomy = paraphrase_taxonomy();
  for (const auto& label : labels) {
    auto it = taxonomy.find(label);
    if (it == taxonomy.end()) throw SchemaError("unknown paraphrase label: " + label);
    stats.label_counts[label] += 1;
    stats.group_counts[it->second] += 1;
    stats.total += 1;
  }
  return stats;
}

}  // namespace curiosity::analysis
