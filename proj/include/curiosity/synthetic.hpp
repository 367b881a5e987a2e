#pragma once
// Synthetic dialog generator: builds a toy geographic corpus, then
// simulates dialogs whose assistant turns draw fact banks through the real
// retrieval policy. Likes and followup reactions are sampled from planted
// per-cell probabilities so analysis estimators and model training have a
// known ground truth. The act grammar is shaped to the released schema's
// frequency profile, not a fidelity claim.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "curiosity/common.hpp"
#include "curiosity/corpus.hpp"
#include "curiosity/data.hpp"

namespace curiosity::data {

struct CellProbs {
  double aspect_rooted = 0.9;
  double aspect_unrooted = 0.6;
  double general_rooted = 0.55;
  double general_unrooted = 0.3;

  double at(corpus::FactCategory c, bool rooted) const {
    if (c == corpus::FactCategory::aspect) return rooted ? aspect_rooted : aspect_unrooted;
    return rooted ? general_rooted : general_unrooted;
  }

  void validate(const std::string& what) const {
    for (double p : {aspect_rooted, aspect_unrooted, general_rooted, general_unrooted})
      if (p < 0.0 || p > 1.0) throw SchemaError(what + " probabilities must lie in [0,1]");
  }
};

struct SyntheticConfig {
  int num_dialogs = 1000;
  int vocabulary_size = 250;  // filler-word pool
  int facts_per_topic = 60;
  int num_topics = 12;
  int entities_per_topic = 24;
  int num_aspect_labels = 6;  // global pool of section labels
  int min_user_turns = 4;
  int max_user_turns = 7;
  CellProbs like_probs;
  CellProbs followup_probs;
  double ungrounded_like_prob = 0.35;
  double best_slot_prob = 0.7;   // planted-policy pick vs a uniform slot
  double offer_prob = 0.06;      // assistant sends an offer instead of a fact
  double generic_weight = 2.5;   // weight of content-free user requests
  double aspect_weight = 3.0;    // weight of current-aspect requests
  double topic_weight = 0.8;     // weight of topic-level requests
  std::uint64_t seed = 0;

  void validate() const {
    if (num_dialogs < 0) throw SchemaError("num_dialogs must be non-negative");
    if (vocabulary_size <= 0 || facts_per_topic <= 0 || num_topics <= 0 ||
        entities_per_topic <= 0 || num_aspect_labels < 2 || min_user_turns <= 1 ||
        max_user_turns < min_user_turns)
      throw SchemaError("synthetic config counts must be positive");
    like_probs.validate("like");
    followup_probs.validate("followup");
    for (double p : {ungrounded_like_prob, best_slot_prob, offer_prob})
      if (p < 0.0 || p > 1.0) throw SchemaError("synthetic probabilities must lie in [0,1]");
  }
};

// Planted per-message record: which fact each grounded assistant message
// used and its source cell under the dialog's assigned aspects.
struct PlantedUse {
  int message_index = 0;
  std::string fact_id;
  corpus::FactCategory category = corpus::FactCategory::general;
  bool rooted = false;
};

struct GroundTruthRecord {
  SyntheticConfig config;
  std::map<std::string, std::vector<PlantedUse>> uses;  // dialog id -> uses
};

struct SyntheticOutput {
  std::vector<corpus::Entity> entities;
  std::vector<corpus::Fact> facts;
  std::vector<Dialog> dialogs;
  GroundTruthRecord record;
};

namespace detail {

inline bool bernoulli(Rng& rng, double p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p;
}

inline bool has_inform_family(const std::set<DialogAct>& acts) {
  return acts.count(DialogAct::inform_response) != 0 ||
         acts.count(DialogAct::inform_related) != 0 ||
         acts.count(DialogAct::inform_unrelated) != 0;
}

inline std::size_t pick_index(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> u(0, n - 1);
  return u(rng);
}

struct ToyCorpus {
  std::vector<corpus::Entity> entities;  // topic entities first, then related
  std::vector<corpus::Fact> facts;
  std::vector<std::string> topic_ids;
  std::vector<std::string> aspect_labels;
  std::map<std::string, std::vector<corpus::Entity>> topic_entities;
};

inline ToyCorpus build_toy_corpus(const SyntheticConfig& cfg) {
  ToyCorpus toy;
  Rng rng(derive_seed(cfg.seed, 0xC0));
  for (int a = 0; a < cfg.num_aspect_labels; ++a)
    toy.aspect_labels.push_back("aspect" + std::to_string(a));

  std::uniform_int_distribution<int> filler(0, cfg.vocabulary_size - 1);
  for (int t = 0; t < cfg.num_topics; ++t) {
    const std::string topic_id = "topic" + std::to_string(t);
    toy.topic_ids.push_back(topic_id);
    toy.entities.push_back({topic_id, topic_id, 1000000});

    std::vector<corpus::Entity> related;
    for (int j = 0; j < cfg.entities_per_topic; ++j) {
      corpus::Entity e;
      e.id = "ent" + std::to_string(t) + "q" + std::to_string(j);
      e.canonical_name = e.id;
      e.view_count = static_cast<long long>(j + 1) * static_cast<long long>(j + 1) *
                     static_cast<long long>(j + 1);
      related.push_back(e);
      toy.entities.push_back(e);
    }
    toy.topic_entities[topic_id] = related;

    for (int k = 0; k < cfg.facts_per_topic; ++k) {
      corpus::Fact f;
      f.id = "f" + std::to_string(t) + "x" + std::to_string(k);
      f.topic = topic_id;
      f.aspect = toy.aspect_labels[static_cast<std::size_t>(k % cfg.num_aspect_labels)];
      f.text = topic_id + " " + f.aspect;
      const double mention_roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      int mentions = mention_roll < 0.6 ? 1 : (mention_roll < 0.8 ? 2 : 0);
      for (int m = 0; m < mentions; ++m) {
        const corpus::Entity& e = related[pick_index(rng, related.size())];
        if (f.mentioned_entities.insert(e.id).second) f.text += " " + e.canonical_name;
      }
      const int fillers = 3 + static_cast<int>(pick_index(rng, 3));
      for (int w = 0; w < fillers; ++w) f.text += " w" + std::to_string(filler(rng));
      toy.facts.push_back(std::move(f));
    }
  }
  return toy;
}

// The simulated assistant's preferred slot: current-aspect facts first,
// then rooted, then the bank's similarity score, ties by id.
inline const corpus::BankSlot& planted_best_slot(const corpus::FactBank& bank) {
  const corpus::BankSlot* best = &bank.slots.front();
  auto better = [](const corpus::BankSlot& a, const corpus::BankSlot& b) {
    const int a_aspect = a.category == corpus::FactCategory::aspect ? 1 : 0;
    const int b_aspect = b.category == corpus::FactCategory::aspect ? 1 : 0;
    if (a_aspect != b_aspect) return a_aspect > b_aspect;
    if (a.rooted != b.rooted) return a.rooted;
    if (a.score != b.score) return a.score > b.score;
    return a.fact_id < b.fact_id;
  };
  for (const auto& slot : bank.slots)
    if (better(slot, *best)) best = &slot;
  return *best;
}

}  // namespace detail

// Generates (dialogs, ground truth). Dialogs satisfy every Dialog
// invariant; assistant turns draw banks via corpus::select_fact_bank over
// the generated corpus; likes and followups are Bernoulli draws from the
// planted per-cell probabilities. Deterministic per (config, seed).
inline SyntheticOutput generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticOutput out;
  out.record.config = cfg;

  detail::ToyCorpus toy = detail::build_toy_corpus(cfg);
  out.entities = toy.entities;
  out.facts = toy.facts;
  corpus::FactIndex index = corpus::build_fact_index(toy.facts);

  for (int d = 0; d < cfg.num_dialogs; ++d) {
    Rng rng(derive_seed(cfg.seed, 0xD1A0 + static_cast<std::uint64_t>(d)));
    Dialog dialog;
    dialog.id = "syn" + std::to_string(d);
    dialog.topic = toy.topic_ids[static_cast<std::size_t>(d) % toy.topic_ids.size()];

    const auto& related = toy.topic_entities.at(dialog.topic);
    std::size_t a1 = detail::pick_index(rng, toy.aspect_labels.size());
    std::size_t a2 = detail::pick_index(rng, toy.aspect_labels.size() - 1);
    if (a2 >= a1) ++a2;
    dialog.aspects = {toy.aspect_labels[a1], toy.aspect_labels[a2]};

    const auto quiz = corpus::sample_knowledge_quiz(
        related, derive_seed(cfg.seed, 0x9012 + static_cast<std::uint64_t>(d)));
    for (const auto& eid : quiz)
      if (detail::bernoulli(rng, 0.5)) dialog.known_entities.insert(eid);

    corpus::RetrievalContext ctx;
    ctx.topic = dialog.topic;
    ctx.current_aspect = dialog.aspects[0];
    ctx.known_entities = dialog.known_entities;

    auto fact_cell = [&](const corpus::Fact& f) {
      FactSource src;
      src.category = (f.aspect == dialog.aspects[0] || f.aspect == dialog.aspects[1])
                         ? corpus::FactCategory::aspect
                         : corpus::FactCategory::general;
      src.rooted = corpus::detail::mentions_known(f, dialog.known_entities);
      return src;
    };

    std::uniform_int_distribution<int> turns_dist(cfg.min_user_turns, cfg.max_user_turns);
    const int pairs = turns_dist(rng);
    const int switch_at = pairs / 2;
    bool switched = false;
    std::vector<PlantedUse>& uses = out.record.uses[dialog.id];

    for (int k = 0; k < pairs; ++k) {
      const Message* prev = dialog.messages.empty() ? nullptr : &dialog.messages.back();
      const bool last = k == pairs - 1;

      // --- user turn ---
      Message user;
      user.sender = Sender::user;
      bool qualifying = prev != nullptr && !prev->used_fact_ids.empty() &&
                        detail::has_inform_family(prev->acts);
      bool followup = false;
      std::string followup_token;
      if (qualifying) {
        const corpus::Fact& used = index.fact(*prev->used_fact_ids.begin());
        followup = detail::bernoulli(rng, cfg.followup_probs.at(fact_cell(used).category,
                                                                fact_cell(used).rooted));
        if (!used.mentioned_entities.empty())
          followup_token = *used.mentioned_entities.begin();
        else
          followup_token = dialog.topic;
      }

      const bool prev_offered =
          prev != nullptr && prev->acts.count(DialogAct::offer_aspect) != 0;
      if (followup) {
        user.acts = {DialogAct::request_followup};
        user.text = "can you tell me more about " + followup_token;
      } else if (prev_offered) {
        if (detail::bernoulli(rng, 0.75)) {
          user.acts = {DialogAct::offer_accept};
          user.text = "yes please go ahead";
        } else {
          user.acts = {DialogAct::offer_decline, DialogAct::request_other};
          user.text = "no thanks tell me something else";
        }
      } else if (last) {
        user.text = "thanks goodbye that was helpful";  // unannotated farewell
      } else if (!switched && k >= switch_at) {
        switched = true;
        ctx = corpus::reset_on_aspect_switch(std::move(ctx), dialog.aspects[1]);
        user.acts = {DialogAct::request_aspect};
        user.text = "now what about the " + dialog.aspects[1] + " please";
      } else if (k == 0) {
        user.acts = {DialogAct::request_topic};
        user.text = "hi tell me about " + dialog.topic;
      } else {
        const double total = cfg.aspect_weight + cfg.generic_weight + cfg.topic_weight;
        std::uniform_real_distribution<double> u(0.0, total);
        const double roll = u(rng);
        if (roll < cfg.aspect_weight) {
          user.acts = {DialogAct::request_aspect};
          user.text = "tell me more about the " + ctx.current_aspect;
        } else if (roll < cfg.aspect_weight + cfg.generic_weight) {
          user.acts = {DialogAct::request_other};
          user.text = "tell me more please";
        } else {
          user.acts = {DialogAct::request_topic};
          user.text = "what else is there about " + dialog.topic;
        }
      }
      if (prev != nullptr && prev->liked && !user.acts.empty() && detail::bernoulli(rng, 0.5)) {
        user.acts.insert(DialogAct::feedback_positive);
        user.text = "wow interesting " + user.text;
      }
      dialog.messages.push_back(user);
      ctx.push_turn(dialog.messages.back().text);

      // --- assistant turn ---
      Message assistant;
      assistant.sender = Sender::assistant;
      const int msg_index = static_cast<int>(dialog.messages.size());
      if (last && !followup) {
        assistant.text = "you are welcome glad to help";  // farewell, no acts
        assistant.liked = detail::bernoulli(rng, 0.1);
      } else {
        corpus::FactBank bank = corpus::select_fact_bank(
            index, ctx, msg_index,
            derive_seed(cfg.seed, 0xBA00 + static_cast<std::uint64_t>(d) * 1000 +
                                     static_cast<std::uint64_t>(msg_index)));
        if (bank.empty()) {
          assistant.acts = {DialogAct::inform_related};
          assistant.text = "i am afraid i have nothing more on that";
          assistant.liked = detail::bernoulli(rng, cfg.ungrounded_like_prob);
        } else if (!last && detail::bernoulli(rng, cfg.offer_prob)) {
          assistant.acts = {DialogAct::offer_aspect};
          const std::string other =
              ctx.current_aspect == dialog.aspects[0] ? dialog.aspects[1] : dialog.aspects[0];
          assistant.text = "would you like to hear about the " + other;
          assistant.shown_facts = bank;
          assistant.liked = detail::bernoulli(rng, cfg.ungrounded_like_prob);
        } else {
          // Off-policy picks draw a uniform source cell first so every
          // (category, rooted) cell accumulates analysis units.
          auto random_slot = [&]() -> const corpus::BankSlot& {
            std::map<std::pair<int, int>, std::vector<const corpus::BankSlot*>> by_cell;
            for (const auto& s : bank.slots) {
              const FactSource src = fact_cell(index.fact(s.fact_id));
              by_cell[{src.category == corpus::FactCategory::aspect ? 0 : 1,
                       src.rooted ? 1 : 0}]
                  .push_back(&s);
            }
            auto it = by_cell.begin();
            std::advance(it, static_cast<std::ptrdiff_t>(detail::pick_index(rng, by_cell.size())));
            return *it->second[detail::pick_index(rng, it->second.size())];
          };
          const corpus::BankSlot& slot = detail::bernoulli(rng, cfg.best_slot_prob)
                                             ? detail::planted_best_slot(bank)
                                             : random_slot();
          const corpus::Fact& fact = index.fact(slot.fact_id);
          assistant.acts = {detail::bernoulli(rng, 0.9) ? DialogAct::inform_response
                                                        : DialogAct::inform_related};
          assistant.text = "did you know " + fact.text;
          assistant.shown_facts = bank;
          assistant.used_fact_ids = {slot.fact_id};
          const FactSource cell = fact_cell(fact);
          assistant.liked = detail::bernoulli(rng, cfg.like_probs.at(cell.category, cell.rooted));
          uses.push_back({msg_index, slot.fact_id, cell.category, cell.rooted});
        }
        if (assistant.shown_facts)
          ctx = corpus::mark_bank_outcome(std::move(ctx), *assistant.shown_facts,
                                          assistant.used_fact_ids);
      }
      dialog.messages.push_back(assistant);
      ctx.push_turn(dialog.messages.back().text);
    }
    dialog.validate();
    out.dialogs.push_back(std::move(dialog));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground-truth serialization for the synth CLI artifact.

inline nlohmann::json cell_probs_to_json(const CellProbs& p) {
  return {{"aspect_rooted", p.aspect_rooted},
          {"aspect_unrooted", p.aspect_unrooted},
          {"general_rooted", p.general_rooted},
          {"general_unrooted", p.general_unrooted}};
}

inline CellProbs cell_probs_from_json(const nlohmann::json& j) {
  CellProbs p;
  p.aspect_rooted = j.at("aspect_rooted").get<double>();
  p.aspect_unrooted = j.at("aspect_unrooted").get<double>();
  p.general_rooted = j.at("general_rooted").get<double>();
  p.general_unrooted = j.at("general_unrooted").get<double>();
  return p;
}

inline nlohmann::json synthetic_config_to_json(const SyntheticConfig& c) {
  return {{"num_dialogs", c.num_dialogs},
          {"vocabulary_size", c.vocabulary_size},
          {"facts_per_topic", c.facts_per_topic},
          {"num_topics", c.num_topics},
          {"entities_per_topic", c.entities_per_topic},
          {"num_aspect_labels", c.num_aspect_labels},
          {"min_user_turns", c.min_user_turns},
          {"max_user_turns", c.max_user_turns},
          {"like_probs", cell_probs_to_json(c.like_probs)},
          {"followup_probs", cell_probs_to_json(c.followup_probs)},
          {"ungrounded_like_prob", c.ungrounded_like_prob},
          {"best_slot_prob", c.best_slot_prob},
          {"offer_prob", c.offer_prob},
          {"generic_weight", c.generic_weight},
          {"aspect_weight", c.aspect_weight},
          {"topic_weight", c.topic_weight},
          {"seed", c.seed}};
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.num_dialogs = j.value("num_dialogs", c.num_dialogs);
  c.vocabulary_size = j.value("vocabulary_size", c.vocabulary_size);
  c.facts_per_topic = j.value("facts_per_topic", c.facts_per_topic);
  c.num_topics = j.value("num_topics", c.num_topics);
  c.entities_per_topic = j.value("entities_per_topic", c.entities_per_topic);
  c.num_aspect_labels = j.value("num_aspect_labels", c.num_aspect_labels);
  c.min_user_turns = j.value("min_user_turns", c.min_user_turns);
  c.max_user_turns = j.value("max_user_turns", c.max_user_turns);
  if (j.contains("like_probs")) c.like_probs = cell_probs_from_json(j.at("like_probs"));
  if (j.contains("followup_probs"))
    c.followup_probs = cell_probs_from_json(j.at("followup_probs"));
  c.ungrounded_like_prob = j.value("ungrounded_like_prob", c.ungrounded_like_prob);
  c.best_slot_prob = j.value("best_slot_prob", c.best_slot_prob);
  c.offer_prob = j.value("offer_prob", c.offer_prob);
  c.generic_weight = j.value("generic_weight", c.generic_weight);
  c.aspect_weight = j.value("aspect_weight", c.aspect_weight);
  c.topic_weight = j.value("topic_weight", c.topic_weight);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline nlohmann::json ground_truth_to_json(const GroundTruthRecord& r) {
  nlohmann::json uses = nlohmann::json::object();
  for (const auto& [dialog_id, planted] : r.uses) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& u : planted)
      rows.push_back({{"message_index", u.message_index},
                      {"fact_id", u.fact_id},
                      {"category", corpus::to_string(u.category)},
                      {"rooted", u.rooted}});
    uses[dialog_id] = rows;
  }
  return {{"config", synthetic_config_to_json(r.config)}, {"uses", uses}};
}

}  // namespace curiosity::data
