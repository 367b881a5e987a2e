#pragma once
// Fact database with a tf-idf matcher, the assistant's nine-slot fact-bank
// selection policy, and the pre-dialog knowledge-quiz sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "curiosity/common.hpp"
#include "curiosity/text.hpp"

namespace curiosity::corpus {

struct Entity {
  std::string id;
  std::string canonical_name;
  long long view_count = 0;  // page-view popularity proxy
};

struct Fact {
  std::string id;
  std::string topic;   // Entity id of the source page
  std::string aspect;  // source section label
  std::set<std::string> mentioned_entities;
  std::string text;
};

// Tokenization scheme is fixed (see text.hpp); the struct exists so the
// index construction signature has a seam for future options.
struct TokenizerConfig {};

// One term of an L2-normalized tf-idf vector: (term index, weight).
using SparseVector = std::vector<std::pair<int, double>>;

struct FactIndex {
  std::map<std::string, int> vocabulary;  // term -> index
  std::vector<double> idf;                // by term index
  std::map<std::string, SparseVector> doc_vectors;
  std::map<std::string, std::set<std::string>> entity_postings;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> aspect_postings;
  std::map<std::string, std::set<std::string>> topic_postings;
  std::map<std::string, Fact> facts;

  std::size_t size() const { return facts.size(); }
  bool contains(const std::string& fact_id) const { return facts.count(fact_id) != 0; }

  const Fact& fact(const std::string& fact_id) const {
    auto it = facts.find(fact_id);
    if (it == facts.end()) throw SchemaError("unknown fact id: " + fact_id);
    return it->second;
  }

  // tf-idf vector of arbitrary text against this index's vocabulary,
  // L2-normalized; terms outside the vocabulary are dropped.
  SparseVector vectorize(std::string_view query_text) const {
    std::map<int, double> tf;
    for (const auto& tok : text::tokenize(query_text)) {
      auto it = vocabulary.find(tok);
      if (it != vocabulary.end()) tf[it->second] += 1.0;
    }
    SparseVector v;
    v.reserve(tf.size());
    double norm_sq = 0.0;
    for (const auto& [term, count] : tf) {
      double w = count * idf[static_cast<std::size_t>(term)];
      v.emplace_back(term, w);
      norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
      double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& [term, w] : v) w *= inv;
    }
    return v;
  }
};

inline double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return dot;
}

// Presentation group of a bank slot: which of the three triples it fills.
enum class BankGroup { rooted, aspect, general };

// Exclusive source category of a fact relative to the dialog context.
enum class FactCategory { aspect, general };

inline const char* to_string(BankGroup g) {
  switch (g) {
    case BankGroup::rooted: return "rooted";
    case BankGroup::aspect: return "aspect";
    default: return "general";
  }
}
inline const char* to_string(FactCategory c) {
  return c == FactCategory::aspect ? "aspect" : "general";
}

struct BankSlot {
  std::string fact_id;
  BankGroup group = BankGroup::general;  // which triple the slot fills
  FactCategory category = FactCategory::general;
  bool rooted = false;  // mentions at least one known entity
  double score = 0.0;   // tf-idf similarity to the recent dialog text
};

struct FactBank {
  int turn_index = 0;
  std::vector<BankSlot> slots;  // <= 9, <= 3 per presentation group

  std::set<std::string> slot_ids() const {
    std::set<std::string> ids;
    for (const auto& s : slots) ids.insert(s.fact_id);
    return ids;
  }
  bool empty() const { return slots.empty(); }
};

// Per-dialog retrieval state carried between turns.
struct RetrievalContext {
  std::string topic;
  std::string current_aspect;
  std::vector<std::string> recent_turns;  // oldest first, at most 3
  std::set<std::string> known_entities;
  std::map<std::string, int> exhausted;  // fact id -> consecutive unused showings
  int drop_threshold = 3;

  std::string recent_text() const {
    std::string out;
    for (const auto& t : recent_turns) {
      if (!out.empty()) out.push_back(' ');
      out += t;
    }
    return out;
  }

  void push_turn(std::string turn_text) {
    recent_turns.push_back(std::move(turn_text));
    if (recent_turns.size() > 3) recent_turns.erase(recent_turns.begin());
  }
};

// Builds the tf-idf index over the fact corpus.
// Weighting: raw term frequency, smoothed idf = ln((1+N)/(1+df)) + 1,
// L2-normalized vectors; cosine similarity is then a sparse dot product.
inline FactIndex build_fact_index(const std::vector<Fact>& facts, const TokenizerConfig& = {}) {
  FactIndex index;
  std::vector<std::vector<std::string>> fact_tokens;
  fact_tokens.reserve(facts.size());

  for (const auto& f : facts) {
    if (index.facts.count(f.id)) throw SchemaError("duplicate fact id: " + f.id);
    if (f.text.empty()) throw SchemaError("fact has empty text: " + f.id);
    if (f.aspect.empty()) throw SchemaError("fact has empty aspect: " + f.id);
    index.facts.emplace(f.id, f);
    fact_tokens.push_back(text::tokenize(f.text));
  }

  // Document frequencies over distinct terms per fact.
  std::map<std::string, int> df;
  for (const auto& toks : fact_tokens) {
    std::set<std::string> distinct(toks.begin(), toks.end());
    for (const auto& t : distinct) df[t] += 1;
  }
  for (const auto& [term, _] : df) {
    int id = static_cast<int>(index.vocabulary.size());
    index.vocabulary.emplace(term, id);
  }
  const double n_docs = static_cast<double>(facts.size());
  index.idf.assign(index.vocabulary.size(), 0.0);
  for (const auto& [term, count] : df)
    index.idf[static_cast<std::size_t>(index.vocabulary.at(term))] =
        std::log((1.0 + n_docs) / (1.0 + count)) + 1.0;

  for (std::size_t k = 0; k < facts.size(); ++k) {
    const Fact& f = facts[k];
    std::map<int, double> tf;
    for (const auto& tok : fact_tokens[k]) tf[index.vocabulary.at(tok)] += 1.0;
    SparseVector v;
    v.reserve(tf.size());
    double norm_sq = 0.0;
    for (const auto& [term, count] : tf) {
      double w = count * index.idf[static_cast<std::size_t>(term)];
      v.emplace_back(term, w);
      norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
      double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& [term, w] : v) w *= inv;
    }
    index.doc_vectors.emplace(f.id, std::move(v));

    index.topic_postings[f.topic].insert(f.id);
    index.aspect_postings[{f.topic, f.aspect}].insert(f.id);
    for (const auto& e : f.mentioned_entities) index.entity_postings[e].insert(f.id);
  }
  return index;
}

// Ranks candidate facts by cosine similarity to the query text.
// Descending score, ties broken by ascending fact id.
inline std::vector<std::pair<std::string, double>> rank_facts(
    const FactIndex& index, std::string_view query_text,
    const std::set<std::string>& candidate_ids) {
  SparseVector q = index.vectorize(query_text);
  std::vector<std::pair<std::string, double>> ranked;
  ranked.reserve(candidate_ids.size());
  for (const auto& id : candidate_ids) {
    auto it = index.doc_vectors.find(id);
    if (it == index.doc_vectors.end()) throw SchemaError("unknown candidate fact id: " + id);
    ranked.emplace_back(id, sparse_dot(q, it->second));
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

namespace detail {

inline bool mentions_known(const Fact& f, const std::set<std::string>& known) {
  for (const auto& e : f.mentioned_entities)
    if (known.count(e)) return true;
  return false;
}

}  // namespace detail

// Selects the nine-slot fact bank for one assistant turn.
//
// Each presentation group (rooted / aspect / general) is ranked by tf-idf
// similarity to the recent dialog text and contributes its top three
// eligible facts; facts already picked by an earlier group are skipped, so
// a full bank holds nine distinct facts. Groups short of three are
// backfilled from the general ranking. Facts whose consecutive-unused
// counter reached the drop threshold are ineligible. Slot presentation
// order is shuffled with the seeded generator.
inline FactBank select_fact_bank(const FactIndex& index, const RetrievalContext& ctx,
                                 int turn_index, std::uint64_t seed) {
  FactBank bank;
  bank.turn_index = turn_index;

  auto topic_it = index.topic_postings.find(ctx.topic);
  if (topic_it == index.topic_postings.end()) return bank;
  const std::set<std::string>& topic_facts = topic_it->second;

  auto eligible = [&](const std::string& id) {
    auto it = ctx.exhausted.find(id);
    return it == ctx.exhausted.end() || it->second < ctx.drop_threshold;
  };

  std::set<std::string> rooted_pool;
  for (const auto& e : ctx.known_entities) {
    auto pit = index.entity_postings.find(e);
    if (pit == index.entity_postings.end()) continue;
    for (const auto& id : pit->second)
      if (topic_facts.count(id) && eligible(id)) rooted_pool.insert(id);
  }

  std::set<std::string> aspect_pool;
  auto ait = index.aspect_postings.find({ctx.topic, ctx.current_aspect});
  if (ait != index.aspect_postings.end())
    for (const auto& id : ait->second)
      if (eligible(id)) aspect_pool.insert(id);

  std::set<std::string> general_pool;
  for (const auto& id : topic_facts)
    if (eligible(id)) general_pool.insert(id);

  const std::string query = ctx.recent_text();
  auto rooted_rank = rank_facts(index, query, rooted_pool);
  auto aspect_rank = rank_facts(index, query, aspect_pool);
  auto general_rank = rank_facts(index, query, general_pool);

  std::set<std::string> picked;
  auto make_slot = [&](const std::string& id, BankGroup group, double score) {
    const Fact& f = index.fact(id);
    BankSlot slot;
    slot.fact_id = id;
    slot.group = group;
    slot.category =
        f.aspect == ctx.current_aspect ? FactCategory::aspect : FactCategory::general;
    slot.rooted = detail::mentions_known(f, ctx.known_entities);
    slot.score = score;
    return slot;
  };
  auto take = [&](const std::vector<std::pair<std::string, double>>& ranking, BankGroup group,
                  int want) {
    int taken = 0;
    for (const auto& [id, score] : ranking) {
      if (taken >= want) break;
      if (picked.count(id)) continue;
      picked.insert(id);
      bank.slots.push_back(make_slot(id, group, score));
      ++taken;
    }
    return taken;
  };

  const int per_group = 3;
  int got_rooted = take(rooted_rank, BankGroup::rooted, per_group);
  int got_aspect = take(aspect_rank, BankGroup::aspect, per_group);
  int got_general = take(general_rank, BankGroup::general, per_group);

  // Backfill deficient groups from the general ranking.
  got_rooted += take(general_rank, BankGroup::rooted, per_group - got_rooted);
  got_aspect += take(general_rank, BankGroup::aspect, per_group - got_aspect);
  take(general_rank, BankGroup::general, per_group - got_general);

  Rng rng(seed);
  std::shuffle(bank.slots.begin(), bank.slots.end(), rng);
  return bank;
}

// Records which shown facts were used: used facts get their
// consecutive-unused counter cleared, shown-but-unused facts get it
// incremented. A counter at the drop threshold excludes the fact from
// future banks in this dialog.
inline RetrievalContext mark_bank_outcome(RetrievalContext ctx, const FactBank& bank,
                                          const std::set<std::string>& used_ids) {
  const std::set<std::string> shown = bank.slot_ids();
  for (const auto& id : used_ids)
    if (!shown.count(id)) throw SchemaError("used fact id not in bank: " + id);
  for (const auto& id : shown) {
    if (used_ids.count(id)) {
      ctx.exhausted.erase(id);
    } else {
      ctx.exhausted[id] += 1;
    }
  }
  return ctx;
}

// Aspect switches clear the recent-text window unconditionally; exhausted
// counters survive the switch.
inline RetrievalContext reset_on_aspect_switch(RetrievalContext ctx, std::string new_aspect) {
  ctx.recent_turns.clear();
  ctx.current_aspect = std::move(new_aspect);
  return ctx;
}

inline constexpr int kQuizSampleSize = 15;
inline constexpr int kQuizBuckets = 10;

// Samples up to fifteen related entities spanning the popularity range:
// entities are split into ten near-equal buckets by view-count rank and
// drawn one per bucket in round-robin passes until fifteen are drawn or
// the pool is exhausted.
inline std::vector<std::string> sample_knowledge_quiz(const std::vector<Entity>& related,
                                                      std::uint64_t seed) {
  std::vector<const Entity*> sorted;
  sorted.reserve(related.size());
  for (const auto& e : related) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const Entity* a, const Entity* b) {
    if (a->view_count != b->view_count) return a->view_count < b->view_count;
    return a->id < b->id;
  });

  const std::size_t n = sorted.size();
  std::vector<std::vector<const Entity*>> buckets(kQuizBuckets);
  std::size_t pos = 0;
  for (int b = 0; b < kQuizBuckets; ++b) {
    std::size_t size = n / kQuizBuckets + (static_cast<std::size_t>(b) < n % kQuizBuckets ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) buckets[static_cast<std::size_t>(b)].push_back(sorted[pos++]);
  }

  Rng rng(seed);
  std::vector<std::string> drawn;
  bool any_left = true;
  while (drawn.size() < kQuizSampleSize && any_left) {
    any_left = false;
    for (auto& bucket : buckets) {
      if (drawn.size() >= kQuizSampleSize) break;
      if (bucket.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, bucket.size() - 1);
      std::size_t j = pick(rng);
      drawn.push_back(bucket[j]->id);
      bucket.erase(bucket.begin() + static_cast<std::ptrdiff_t>(j));
      if (!bucket.empty()) any_left = true;
    }
  }
  return drawn;
}

}  // namespace curiosity::corpus
