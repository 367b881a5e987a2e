#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "curiosity/model.hpp"
#include "curiosity/synthetic.hpp"

using namespace curiosity;
using autograd::Graph;
using autograd::Vec;
using model::Charm;
using model::CharmConfig;

namespace {

CharmConfig tiny_config() {
  CharmConfig cfg;
  cfg.word_dim = 8;
  cfg.entity_dim = 6;
  cfg.act_dim = 4;
  cfg.speaker_dim = 3;
  cfg.encoder_hidden = 5;
  cfg.context_hidden = 7;
  cfg.fact_head_hidden = 6;
  cfg.act_head_hidden = 6;
  cfg.max_tokens = 16;
  return cfg;
}

model::Vocab tiny_vocab() {
  model::Vocab v;
  for (const auto& t : {"tell", "me", "about", "history", "island", "volcano", "trade",
                        "reef", "the", "known", "fact"})
    v.add(t);
  return v;
}

model::EntityCatalog tiny_entities() {
  model::EntityCatalog c;
  for (const auto& e : {"topicA", "ent1", "ent2", "ent3"}) c.add(e);
  return c;
}

Charm tiny_model(CharmConfig cfg = tiny_config(), std::uint64_t seed = 1) {
  return Charm(cfg, tiny_vocab(), tiny_entities(), seed);
}

// A small grounded dialog over a three-fact corpus.
struct Fixture {
  corpus::FactIndex index;
  data::Dialog dialog;
};

Fixture small_fixture() {
  std::vector<corpus::Fact> facts;
  corpus::Fact f1;
  f1.id = "f1";
  f1.topic = "topicA";
  f1.aspect = "history";
  f1.mentioned_entities = {"ent1"};
  f1.text = "island history fact";
  corpus::Fact f2 = f1;
  f2.id = "f2";
  f2.mentioned_entities = {"ent2"};
  f2.text = "volcano trade fact";
  corpus::Fact f3 = f1;
  f3.id = "f3";
  f3.aspect = "geography";
  f3.mentioned_entities = {};
  f3.text = "reef island fact";
  facts = {f1, f2, f3};

  Fixture fx;
  fx.index = corpus::build_fact_index(facts);

  data::Dialog d;
  d.id = "d1";
  d.topic = "topicA";
  d.aspects = {"history", "geography"};
  d.known_entities = {"ent1"};

  data::Message u1;
  u1.sender = data::Sender::user;
  u1.text = "tell me about history";
  u1.acts = {data::DialogAct::request_topic};

  data::Message a1;
  a1.sender = data::Sender::assistant;
  a1.text = "island history fact";
  a1.acts = {data::DialogAct::inform_response};
  a1.liked = true;
  corpus::FactBank bank;
  bank.turn_index = 1;
  bank.slots.push_back({"f1", corpus::BankGroup::rooted, corpus::FactCategory::aspect, true, 0.9});
  bank.slots.push_back({"f2", corpus::BankGroup::aspect, corpus::FactCategory::aspect, false, 0.5});
  bank.slots.push_back(
      {"f3", corpus::BankGroup::general, corpus::FactCategory::general, false, 0.2});
  a1.shown_facts = bank;
  a1.used_fact_ids = {"f1"};

  data::Message u2;
  u2.sender = data::Sender::user;
  u2.text = "tell me about the volcano";
  u2.acts = {data::DialogAct::request_followup, data::DialogAct::feedback_positive};

  data::Message a2;
  a2.sender = data::Sender::assistant;
  a2.text = "volcano trade fact";
  a2.acts = {data::DialogAct::inform_response};
  a2.liked = false;
  a2.shown_facts = bank;
  a2.used_fact_ids = {"f2"};

  d.messages = {u1, a1, u2, a2};
  d.validate();
  fx.dialog = d;
  return fx;
}

}  // namespace

TEST_CASE("encode_utterance is deterministic and has the configured width") {
  Charm m = tiny_model();
  Graph g;
  auto p = m.bind(g);
  std::vector<std::string> tokens = {"tell", "me", "about", "history"};
  auto* a = m.encode_utterance(g, p, tokens, {});
  auto* b = m.encode_utterance(g, p, tokens, {});
  CHECK(a->value == b->value);
  CHECK(a->value.rows() == m.config().encoder_out());

  auto* empty = m.encode_utterance(g, p, {}, {});
  CHECK(empty->value.rows() == m.config().encoder_out());

  auto* longer =
      m.encode_utterance(g, p, std::vector<std::string>(40, "island"), {"ent1", "ent2"});
  CHECK(longer->value.rows() == m.config().encoder_out());
}

TEST_CASE("encode_utterance is sensitive to token order") {
  Charm m = tiny_model();
  Graph g;
  auto p = m.bind(g);
  auto* ab = m.encode_utterance(g, p, {"island", "volcano", "trade"}, {});
  auto* ba = m.encode_utterance(g, p, {"trade", "volcano", "island"}, {});
  CHECK((ab->value - ba->value).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("build_turn_input follows the empty-mean and singleton conventions") {
  Charm m = tiny_model();
  Graph g;
  auto p = m.bind(g);

  data::Message msg;
  msg.sender = data::Sender::user;
  msg.text = "tell me";

  auto none = m.build_turn_input(g, p, msg, "topicA", {});
  CHECK(none.known->value.isZero(0.0));
  CHECK(none.act_avg->value.isZero(0.0));

  auto single = m.build_turn_input(g, p, msg, "topicA", {"ent2"});
  const int ent2 = m.entities().id("ent2");
  CHECK(single.known->value == m.params().entity_emb.col(ent2));

  msg.acts = {data::DialogAct::request_topic, data::DialogAct::feedback_positive};
  auto two_acts = m.build_turn_input(g, p, msg, "topicA", {});
  Vec expected =
      0.5 * (m.params().act_emb.col(static_cast<int>(data::DialogAct::request_topic)) +
             m.params().act_emb.col(static_cast<int>(data::DialogAct::feedback_positive)));
  CHECK((two_acts.act_avg->value.col(0) - expected).cwiseAbs().maxCoeff() < 1e-12);

  // an unknown topic maps onto the reserved unknown-entity embedding
  auto unk = m.build_turn_input(g, p, msg, "atlantis", {});
  CHECK(unk.topic->value == m.params().entity_emb.col(model::EntityCatalog::kUnk));

  // masking zeroes the act component inside c
  auto masked = m.build_turn_input(g, p, msg, "topicA", {}, true);
  CHECK(masked.act_avg->value.isZero(0.0));
  CHECK(masked.c->value == masked.c_masked->value);
}

TEST_CASE("contextualize: h0 is the zero state and the recurrence is causal") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  Graph g;
  auto p = m.bind(g);
  std::vector<autograd::Node*> cs;
  for (const auto& msg : fx.dialog.messages)
    cs.push_back(m.build_turn_input(g, p, msg, fx.dialog.topic, fx.dialog.known_entities).c);

  auto h_full = m.contextualize(g, p, cs);
  REQUIRE(h_full.size() == cs.size() + 1);
  CHECK(h_full[0]->value.isZero(0.0));

  // prefix property: h_i over the first i turns equals h_i from the full pass
  for (std::size_t i = 1; i <= cs.size(); ++i) {
    std::vector<autograd::Node*> prefix(cs.begin(), cs.begin() + static_cast<std::ptrdiff_t>(i));
    auto h_prefix = m.contextualize(g, p, prefix);
    CHECK((h_prefix[i]->value - h_full[i]->value).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("context-less mode depends only on the current turn input") {
  CharmConfig cfg = tiny_config();
  cfg.use_context = false;
  Charm m = tiny_model(cfg);
  Fixture fx = small_fixture();
  Graph g;
  auto p = m.bind(g);
  std::vector<autograd::Node*> cs;
  for (const auto& msg : fx.dialog.messages)
    cs.push_back(m.build_turn_input(g, p, msg, fx.dialog.topic, fx.dialog.known_entities).c);

  auto h = m.contextualize(g, p, cs);
  // permute earlier turns: h for the last turn is untouched
  std::vector<autograd::Node*> permuted = {cs[2], cs[0], cs[1], cs[3]};
  auto h_perm = m.contextualize(g, p, permuted);
  CHECK((h.back()->value - h_perm.back()->value).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("score_facts: softmax over one candidate is exactly one") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  Graph g;
  auto p = m.bind(g);
  auto* h = g.zeros(m.config().context_hidden);
  auto* enc = m.encode_utterance(g, p, {"island"}, {});
  auto* scores = m.score_facts(g, p, h, {enc});
  auto probs = autograd::softmax_values(scores->value.col(0));
  CHECK(probs[0] == 1.0);
}

TEST_CASE("score_facts: equal scores over nine candidates give 1/9") {
  Charm m = tiny_model();
  Graph g;
  auto p = m.bind(g);
  auto* h = g.zeros(m.config().context_hidden);
  auto* enc = m.encode_utterance(g, p, {"island"}, {});
  std::vector<autograd::Node*> nine(9, enc);
  auto* scores = m.score_facts(g, p, h, nine);
  auto probs = autograd::softmax_values(scores->value.col(0));
  for (int j = 0; j < 9; ++j) CHECK(probs[j] == Catch::Approx(1.0 / 9.0).margin(1e-12));
}

TEST_CASE("score_facts rejects an empty candidate list") {
  Charm m = tiny_model();
  Graph g;
  auto p = m.bind(g);
  auto* h = g.zeros(m.config().context_hidden);
  CHECK_THROWS_AS(m.score_facts(g, p, h, {}), SchemaError);
}

TEST_CASE("softmax probabilities match a direct exp/normalize computation") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  auto out = m.predict(fx.dialog, fx.index);
  REQUIRE(out.facts[1].has_value());
  const Vec& s = out.facts[1]->scores;
  double denom = 0.0;
  for (Eigen::Index j = 0; j < s.size(); ++j) denom += std::exp(s[j]);
  for (Eigen::Index j = 0; j < s.size(); ++j)
    CHECK(out.facts[1]->probs[j] == Catch::Approx(std::exp(s[j]) / denom).margin(1e-9));
  CHECK(out.facts[1]->probs.sum() == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("act head probabilities are independent logistics, not a distribution") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  auto out = m.predict(fx.dialog, fx.index);
  for (int i = 0; i < out.num_turns; ++i) {
    const Vec& logits = out.utterance_logits[static_cast<std::size_t>(i)];
    const Vec& probs = out.utterance_probs[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
      CHECK(probs[k] == Catch::Approx(1.0 / (1.0 + std::exp(-logits[k]))).margin(1e-12));
      CHECK(probs[k] > 0.0);
      CHECK(probs[k] < 1.0);
    }
    // no sum-to-one constraint for multi-label heads
  }
}

TEST_CASE("act heads output 0.5 per act when all parameters are zero") {
  Charm m = tiny_model();
  m.params().policy_out_w.setZero();
  m.params().policy_out_b.setZero();
  m.params().utter_out_w.setZero();
  m.params().utter_out_b.setZero();
  Fixture fx = small_fixture();
  auto out = m.predict(fx.dialog, fx.index);
  for (Eigen::Index k = 0; k < data::kNumDialogActs; ++k) {
    CHECK(out.policy_probs[0][k] == Catch::Approx(0.5).margin(1e-12));
    CHECK(out.utterance_probs[0][k] == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("like head: two-way softmax sums to one; handcrafted logits hit e^2/(e^2+1)") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  auto out = m.predict(fx.dialog, fx.index);
  REQUIRE(out.like_logits[1].has_value());
  auto probs = autograd::softmax_values(*out.like_logits[1]);
  CHECK(probs.sum() == Catch::Approx(1.0).margin(1e-12));

  // symmetric logits
  Vec sym(2);
  sym << 0.7, 0.7;
  CHECK(autograd::softmax_values(sym)[1] == Catch::Approx(0.5).margin(1e-12));

  // (not-liked, liked) = (0, 2)
  Vec handcrafted(2);
  handcrafted << 0.0, 2.0;
  const double expected = std::exp(2.0) / (std::exp(2.0) + 1.0);
  CHECK(autograd::softmax_values(handcrafted)[1] == Catch::Approx(expected).margin(1e-12));
  CHECK(expected == Catch::Approx(0.8808).margin(5e-5));
}

// ---------------------------------------------------------------------------
// Losses.

namespace {

model::ModelOutput one_fact_turn_output(const Vec& scores) {
  model::ModelOutput out;
  out.num_turns = 1;
  out.policy_logits.emplace_back(Vec::Zero(data::kNumDialogActs));
  out.utterance_logits.emplace_back(Vec::Zero(data::kNumDialogActs));
  out.policy_probs.emplace_back(Vec::Constant(data::kNumDialogActs, 0.5));
  out.utterance_probs.emplace_back(Vec::Constant(data::kNumDialogActs, 0.5));
  model::FactTurnValues fv;
  for (Eigen::Index j = 0; j < scores.size(); ++j)
    fv.candidate_ids.push_back("f" + std::to_string(j));
  fv.scores = scores;
  fv.probs = autograd::softmax_values(scores);
  out.facts.emplace_back(std::move(fv));
  Vec like(2);
  like << 0.0, 0.0;
  out.like_logits.emplace_back(like);
  out.like_prob.emplace_back(0.5);
  return out;
}

model::DialogLabels one_fact_turn_labels(const std::set<std::string>& used, bool liked) {
  model::DialogLabels labels;
  labels.acts.push_back({});
  labels.used.push_back(used);
  labels.liked.push_back(liked);
  return labels;
}

}  // namespace

TEST_CASE("fact loss is zero for a perfectly confident correct prediction") {
  Vec scores(3);
  scores << 1000.0, 0.0, 0.0;
  auto out = one_fact_turn_output(scores);
  auto labels = one_fact_turn_labels({"f0"}, true);
  auto losses = model::compute_losses(out, labels, tiny_config());
  CHECK(losses.fact == 0.0);
}

TEST_CASE("uniform fact probabilities over nine candidates cost ln 9") {
  Vec scores = Vec::Zero(9);
  auto out = one_fact_turn_output(scores);
  auto labels = one_fact_turn_labels({"f4"}, true);
  auto losses = model::compute_losses(out, labels, tiny_config());
  // (1/9) * 9 * ln 9
  CHECK(losses.fact == Catch::Approx(std::log(9.0)).margin(1e-12));
  CHECK(losses.fact == Catch::Approx(2.1972).margin(1e-4));
}

TEST_CASE("all-0.5 act probabilities cost 16 ln 2 per turn") {
  Vec scores = Vec::Zero(2);
  auto out = one_fact_turn_output(scores);
  auto labels = one_fact_turn_labels({"f0"}, false);
  labels.acts[0] = {data::DialogAct::request_topic};  // any labels
  auto losses = model::compute_losses(out, labels, tiny_config());
  CHECK(losses.utterance == Catch::Approx(16.0 * std::log(2.0)).margin(1e-12));
  CHECK(losses.policy == Catch::Approx(16.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("total loss is exactly the ordered sum of the four terms") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  auto out = m.predict(fx.dialog, fx.index);
  auto labels = model::DialogLabels::from_dialog(fx.dialog);
  auto losses = model::compute_losses(out, labels, m.config());
  CHECK(losses.total == ((losses.fact + losses.like) + losses.policy) + losses.utterance);
  CHECK(losses.fact >= 0.0);
  CHECK(losses.policy >= 0.0);
  CHECK(losses.utterance >= 0.0);
  CHECK(losses.like >= 0.0);
  CHECK(std::isfinite(losses.total));
}

TEST_CASE("graph-path and value-path losses agree") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  Graph g;
  auto p = m.bind(g);
  auto fwd = m.forward(g, p, fx.dialog, fx.index);
  auto labels = model::DialogLabels::from_dialog(fx.dialog);
  auto graph_losses = model::build_losses(g, fwd, labels, m.config());
  auto value_losses = model::compute_losses(m.output_values(fwd), labels, m.config());
  CHECK(graph_losses.fact->value(0, 0) == value_losses.fact);
  CHECK(graph_losses.policy->value(0, 0) == value_losses.policy);
  CHECK(graph_losses.utterance->value(0, 0) == value_losses.utterance);
  CHECK(graph_losses.like->value(0, 0) == value_losses.like);
  CHECK(graph_losses.total->value(0, 0) == value_losses.total);
}

// ---------------------------------------------------------------------------
// Structural invariants.

TEST_CASE("causality: predictions at turn i ignore utterance i and later turns") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  auto base = m.predict(fx.dialog, fx.index);

  // change the assistant's own message at turn 1 and everything after it
  data::Dialog changed = fx.dialog;
  changed.messages[1].text = "completely different reply about reefs";
  changed.messages[2].text = "another question entirely";
  changed.messages[3].text = "yet another reply";
  auto out = m.predict(changed, fx.index);

  // fact scores and policy logits at turn 1 read h^0 only
  CHECK((base.facts[1]->scores - out.facts[1]->scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.policy_logits[1] - out.policy_logits[1]).cwiseAbs().maxCoeff() == 0.0);

  // changing only the final utterance leaves its own fact/policy outputs alone
  data::Dialog tail = fx.dialog;
  tail.messages[3].text = "reworded final message";
  auto out_tail = m.predict(tail, fx.index);
  CHECK((base.facts[3]->scores - out_tail.facts[3]->scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.policy_logits[3] - out_tail.policy_logits[3]).cwiseAbs().maxCoeff() == 0.0);

  // while the like head at turn 3 legitimately reads the turn itself
  CHECK(*base.like_prob[3] != *out_tail.like_prob[3]);
}

TEST_CASE("leakage guard: with masking on, gold acts of turn i cannot reach its utterance head") {
  Charm m = tiny_model();  // mask_current_acts_for_utterance_head defaults to true
  Fixture fx = small_fixture();
  auto base = m.predict(fx.dialog, fx.index);

  data::Dialog changed = fx.dialog;
  changed.messages[2].acts = {data::DialogAct::offer_decline};
  auto out = m.predict(changed, fx.index);
  CHECK((base.utterance_logits[2] - out.utterance_logits[2]).cwiseAbs().maxCoeff() == 0.0);

  // with masking off the current acts do flow in (the literal-paper path)
  CharmConfig leaky = tiny_config();
  leaky.mask_current_acts_for_utterance_head = false;
  Charm m2 = tiny_model(leaky);
  auto base2 = m2.predict(fx.dialog, fx.index);
  auto out2 = m2.predict(changed, fx.index);
  CHECK((base2.utterance_logits[2] - out2.utterance_logits[2]).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("ablation contract: context-less predictions depend only on adjacent turn inputs") {
  CharmConfig cfg = tiny_config();
  cfg.use_context = false;
  Charm m = tiny_model(cfg);
  Fixture fx = small_fixture();
  auto base = m.predict(fx.dialog, fx.index);

  // swap the first user/assistant pair's texts (turns 0 and 1): predictions
  // at turn 3 read only turns 2 and 3 in ablation mode
  data::Dialog changed = fx.dialog;
  changed.messages[0].text = "reef reef reef";
  changed.messages[1].text = "trade trade trade";
  auto out = m.predict(changed, fx.index);
  CHECK((base.facts[3]->scores - out.facts[3]->scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.policy_logits[3] - out.policy_logits[3]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.utterance_logits[3] - out.utterance_logits[3]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(*base.like_prob[3] == *out.like_prob[3]);

  // the full-context model does depend on those turns
  Charm full = tiny_model();
  auto base_full = full.predict(fx.dialog, fx.index);
  auto out_full = full.predict(changed, fx.index);
  CHECK((base_full.facts[3]->scores - out_full.facts[3]->scores).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("predict is deterministic in eval mode") {
  Charm m = tiny_model();
  Fixture fx = small_fixture();
  auto a = m.predict(fx.dialog, fx.index);
  auto b = m.predict(fx.dialog, fx.index);
  CHECK((a.facts[1]->scores - b.facts[1]->scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK(*a.like_prob[1] == *b.like_prob[1]);
}

// ---------------------------------------------------------------------------
// Majority baseline.

TEST_CASE("majority baseline predicts the majority like value and frequent acts") {
  std::vector<data::Dialog> train;
  for (int i = 0; i < 10; ++i) {
    data::Dialog d;
    d.id = "d" + std::to_string(i);
    d.topic = "t";
    d.aspects = {"a", "b"};
    data::Message u;
    u.sender = data::Sender::user;
    u.text = "q";
    u.acts = {data::DialogAct::request_aspect};
    data::Message a;
    a.sender = data::Sender::assistant;
    a.text = "r";
    a.acts = {data::DialogAct::inform_response};
    a.liked = i < 7;  // 70% liked
    d.messages = {u, a};
    train.push_back(d);
  }
  auto baseline = model::MajorityBaseline::fit(train);
  CHECK(baseline.like_value);
  // both acts appear in exactly half the utterances: ties predict absent
  CHECK(baseline.predicted_acts().empty());

  long long correct = 0, total = 0;
  for (const auto& d : train)
    for (const auto& msg : d.messages)
      if (msg.sender == data::Sender::assistant) {
        ++total;
        if (msg.liked == baseline.like_value) ++correct;
      }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) ==
        Catch::Approx(0.70).margin(1e-12));
}

TEST_CASE("majority baseline requires training data") {
  CHECK_THROWS_AS(model::MajorityBaseline::fit({}), SchemaError);
}
