#pragma once
// Independent brute-force oracles for the test and acceptance suites.
// These deliberately avoid the library's index/metric code paths: tf-idf
// by dense direct summation, alpha by raw pair enumeration, the normal
// tail by quadrature.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "curiosity/corpus.hpp"
#include "curiosity/data.hpp"
#include "curiosity/text.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// tf-idf cosine by direct summation over dense term maps.

inline std::map<std::string, double> tfidf_cosine_scores(
    const std::vector<curiosity::corpus::Fact>& facts, const std::string& query) {
  using curiosity::text::tokenize;
  const double n_docs = static_cast<double>(facts.size());

  std::map<std::string, std::map<std::string, double>> doc_tf;
  std::map<std::string, double> df;
  for (const auto& f : facts) {
    auto& tf = doc_tf[f.id];
    for (const auto& tok : tokenize(f.text)) tf[tok] += 1.0;
    for (const auto& [tok, _] : tf) df[tok] += 1.0;
  }
  auto idf = [&](const std::string& tok) {
    auto it = df.find(tok);
    if (it == df.end()) return 0.0;
    return std::log((1.0 + n_docs) / (1.0 + it->second)) + 1.0;
  };

  std::map<std::string, double> q_tf;
  for (const auto& tok : tokenize(query)) q_tf[tok] += 1.0;
  std::map<std::string, double> q_vec;
  double q_norm = 0.0;
  for (const auto& [tok, count] : q_tf) {
    if (df.count(tok) == 0) continue;  // outside the indexed vocabulary
    const double w = count * idf(tok);
    q_vec[tok] = w;
    q_norm += w * w;
  }
  q_norm = std::sqrt(q_norm);

  std::map<std::string, double> scores;
  for (const auto& f : facts) {
    const auto& tf = doc_tf[f.id];
    double dot = 0.0, d_norm = 0.0;
    for (const auto& [tok, count] : tf) {
      const double w = count * idf(tok);
      d_norm += w * w;
      auto qit = q_vec.find(tok);
      if (qit != q_vec.end()) dot += w * qit->second;
    }
    d_norm = std::sqrt(d_norm);
    scores[f.id] = (q_norm > 0.0 && d_norm > 0.0) ? dot / (q_norm * d_norm) : 0.0;
  }
  return scores;
}

inline std::vector<std::pair<std::string, double>> tfidf_cosine_ranking(
    const std::vector<curiosity::corpus::Fact>& facts, const std::string& query,
    const std::set<std::string>& candidates) {
  auto scores = tfidf_cosine_scores(facts, query);
  std::vector<std::pair<std::string, double>> ranked;
  for (const auto& id : candidates) ranked.emplace_back(id, scores.at(id));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

// ---------------------------------------------------------------------------
// Reference round-robin sampler: ten rank buckets, one uniform draw per
// non-empty bucket per pass.

inline std::vector<std::string> reference_round_robin(
    std::vector<curiosity::corpus::Entity> related, std::uint64_t seed, int want,
    int n_buckets) {
  std::sort(related.begin(), related.end(), [](const auto& a, const auto& b) {
    if (a.view_count != b.view_count) return a.view_count < b.view_count;
    return a.id < b.id;
  });
  std::vector<std::vector<std::string>> buckets(static_cast<std::size_t>(n_buckets));
  const std::size_t n = related.size();
  std::size_t pos = 0;
  for (int b = 0; b < n_buckets; ++b) {
    std::size_t size = n / static_cast<std::size_t>(n_buckets) +
                       (static_cast<std::size_t>(b) < n % static_cast<std::size_t>(n_buckets) ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k)
      buckets[static_cast<std::size_t>(b)].push_back(related[pos++].id);
  }
  curiosity::Rng rng(seed);
  std::vector<std::string> out;
  bool progressed = true;
  while (static_cast<int>(out.size()) < want && progressed) {
    progressed = false;
    for (auto& bucket : buckets) {
      if (static_cast<int>(out.size()) >= want) break;
      if (bucket.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, bucket.size() - 1);
      std::size_t j = pick(rng);
      out.push_back(bucket[j]);
      bucket.erase(bucket.begin() + static_cast<std::ptrdiff_t>(j));
      if (!bucket.empty()) progressed = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics by exhaustive counting.

inline double brute_mrr(const std::vector<std::vector<std::string>>& rankings,
                        const std::vector<std::set<std::string>>& relevant) {
  double total = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    double rr = 0.0;
    for (std::size_t r = 0; r < rankings[i].size(); ++r) {
      if (relevant[i].count(rankings[i][r])) {
        rr = 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
    total += rr;
  }
  return total / static_cast<double>(rankings.size());
}

template <typename Label>
inline double brute_micro_f1(const std::vector<std::set<Label>>& predicted,
                             const std::vector<std::set<Label>>& gold,
                             const std::vector<Label>& universe) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (const auto& l : universe) {
      const bool p = predicted[i].count(l) != 0;
      const bool g = gold[i].count(l) != 0;
      if (p && g) tp += 1;
      if (p && !g) fp += 1;
      if (!p && g) fn += 1;
    }
  }
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

inline double brute_accuracy(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  double ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == gold[i]) ok += 1;
  return ok / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Two-proportion z-test with the tail probability from Simpson quadrature
// of the normal density (independent of erfc).

inline double normal_upper_tail_quadrature(double z) {
  // integral of phi over [0, z], Simpson with fine resolution
  const int steps = 200000;  // even
  const double h = z / steps;
  auto phi = [](double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); };
  double sum = phi(0.0) + phi(z);
  for (int i = 1; i < steps; ++i) sum += phi(h * i) * (i % 2 == 1 ? 4.0 : 2.0);
  const double integral = sum * h / 3.0;
  return 0.5 - integral;
}

struct BruteZ {
  double z;
  double p_value;
};

inline BruteZ brute_z_test(long long s1, long long n1, long long s2, long long n2) {
  const double p1 = double(s1) / double(n1);
  const double p2 = double(s2) / double(n2);
  const double pooled = double(s1 + s2) / double(n1 + n2);
  const double se = std::sqrt(pooled * (1 - pooled) * (1.0 / double(n1) + 1.0 / double(n2)));
  BruteZ r{};
  r.z = (p1 - p2) / se;
  r.p_value = 2.0 * normal_upper_tail_quadrature(std::abs(r.z));
  return r;
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha by direct enumeration of ordered value pairs within
// units: alpha = 1 - D_o / D_e with
//   D_o = (1/n) sum_u sum_{pairs} delta / (m_u - 1)
//   D_e = sum_{c != k} n_c n_k / (n (n - 1))

inline std::optional<double> brute_alpha_binary(
    const std::vector<std::vector<std::optional<int>>>& rows) {
  double n = 0.0;
  std::map<int, double> marginals;
  double d_o_sum = 0.0;
  for (const auto& row : rows) {
    std::vector<int> vals;
    for (const auto& v : row)
      if (v.has_value()) vals.push_back(*v);
    if (vals.size() < 2) continue;
    const double m = static_cast<double>(vals.size());
    for (int v : vals) {
      marginals[v] += 1.0;
      n += 1.0;
    }
    for (std::size_t a = 0; a < vals.size(); ++a)
      for (std::size_t b = 0; b < vals.size(); ++b)
        if (a != b && vals[a] != vals[b]) d_o_sum += 1.0 / (m - 1.0);
  }
  if (n <= 0.0) return std::nullopt;
  const double d_o = d_o_sum / n;
  double pair_sum = 0.0;
  for (const auto& [c, nc] : marginals)
    for (const auto& [k, nk] : marginals)
      if (c != k) pair_sum += nc * nk;
  const double d_e = pair_sum / (n * (n - 1.0));
  if (d_o == 0.0) return 1.0;
  return 1.0 - d_o / d_e;
}

// Expands multi-label annotations exactly like the library and feeds the
// binary-row oracle.
inline std::optional<double> brute_alpha_multilabel(
    const std::vector<curiosity::data::DialogAct>& label_classes,
    const std::vector<std::vector<std::optional<std::set<curiosity::data::DialogAct>>>>&
        annotations) {
  std::vector<std::vector<std::optional<int>>> rows;
  for (const auto& utterance : annotations) {
    for (const auto& label : label_classes) {
      std::vector<std::optional<int>> row;
      for (const auto& annotator : utterance) {
        if (annotator.has_value())
          row.push_back(annotator->count(label) ? 1 : 0);
        else
          row.push_back(std::nullopt);
      }
      rows.push_back(std::move(row));
    }
  }
  return brute_alpha_binary(rows);
}

}  // namespace oracles
