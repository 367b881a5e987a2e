#pragma once
// The CHARM multi-task model: a shared bi-directional recurrent text
// encoder over word and entity embeddings, a forward-recurrent dialog
// contextualizer (with a per-turn projection ablation), and four heads:
// fact ranking, policy acts, utterance acts and like prediction.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "curiosity/autograd.hpp"
#include "curiosity/common.hpp"
#include "curiosity/corpus.hpp"
#include "curiosity/data.hpp"
#include "curiosity/text.hpp"

namespace curiosity::model {

using autograd::Graph;
using autograd::Mat;
using autograd::Node;
using autograd::Vec;

// ---------------------------------------------------------------------------
// Vocabulary and entity catalog.

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token{"<pad>", "<unk>"};

  int add(const std::string& token) {
    auto it = token_to_id.find(token);
    if (it != token_to_id.end()) return it->second;
    int id = static_cast<int>(id_to_token.size());
    token_to_id.emplace(token, id);
    id_to_token.push_back(token);
    return id;
  }
  int id(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  int size() const { return static_cast<int>(id_to_token.size()); }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& t : id_to_token) {
      h = fnv1a(t, h);
      h = fnv1a("\x1f", h);
    }
    return h;
  }
};

struct EntityCatalog {
  static constexpr int kUnk = 0;

  std::map<std::string, int> entity_to_id;
  std::vector<std::string> id_to_entity{"<unk_entity>"};

  int add(const std::string& entity) {
    auto it = entity_to_id.find(entity);
    if (it != entity_to_id.end()) return it->second;
    int id = static_cast<int>(id_to_entity.size());
    entity_to_id.emplace(entity, id);
    id_to_entity.push_back(entity);
    return id;
  }
  int id(const std::string& entity) const {
    auto it = entity_to_id.find(entity);
    return it == entity_to_id.end() ? kUnk : it->second;
  }
  int size() const { return static_cast<int>(id_to_entity.size()); }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& e : id_to_entity) {
      h = fnv1a(e, h);
      h = fnv1a("\x1f", h);
    }
    return h;
  }
};

// Sorted-token construction keeps ids stable for a given corpus + dialog set.
inline Vocab build_vocabulary(const corpus::FactIndex& index,
                              const std::vector<data::Dialog>& dialogs) {
  std::set<std::string> tokens;
  for (const auto& [id, fact] : index.facts)
    for (const auto& t : text::tokenize(fact.text)) tokens.insert(t);
  for (const auto& d : dialogs)
    for (const auto& m : d.messages)
      for (const auto& t : text::tokenize(m.text)) tokens.insert(t);
  Vocab v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

inline EntityCatalog build_entity_catalog(const corpus::FactIndex& index,
                                          const std::vector<data::Dialog>& dialogs) {
  std::set<std::string> entities;
  for (const auto& [e, _] : index.entity_postings) entities.insert(e);
  for (const auto& [t, _] : index.topic_postings) entities.insert(t);
  for (const auto& d : dialogs) {
    entities.insert(d.topic);
    for (const auto& e : d.known_entities) entities.insert(e);
  }
  EntityCatalog c;
  for (const auto& e : entities) c.add(e);
  return c;
}

// ---------------------------------------------------------------------------
// Configuration and parameters.

struct CharmConfig {
  int word_dim = 300;
  int entity_dim = 100;
  int act_dim = 32;
  int speaker_dim = 16;
  int encoder_hidden = 256;  // per direction
  int context_hidden = 512;
  int fact_head_hidden = 128;
  int act_head_hidden = 64;
  double positive_fact_weight = 9.0;  // scales used-fact terms in the fact loss
  bool use_context = true;            // false = per-turn projection ablation
  bool mask_current_acts_for_utterance_head = true;
  int max_tokens = 64;
  double log_eps = 1e-7;

  int encoder_out() const { return 2 * encoder_hidden; }
  int turn_input_dim() const {
    return encoder_out() + act_dim + entity_dim + entity_dim + speaker_dim;
  }

  void validate() const {
    if (word_dim <= 0 || entity_dim <= 0 || act_dim <= 0 || speaker_dim <= 0 ||
        encoder_hidden <= 0 || context_hidden <= 0 || fact_head_hidden <= 0 ||
        act_head_hidden <= 0 || max_tokens <= 0)
      throw SchemaError("model dimensions must be positive");
    if (positive_fact_weight < 1.0) throw SchemaError("positive fact weight must be >= 1");
  }

  bool operator==(const CharmConfig&) const = default;
};

struct CharmParameters {
  // Embedding tables (dim x count).
  Mat word_emb, entity_emb, act_emb;
  Mat speaker_user, speaker_assistant;
  Mat entity_to_word;  // projects entity embeddings into the encoder input space
  // Shared text encoder, forward and backward directions. Gate packing is
  // [input; forget; cell; output] along the rows.
  Mat enc_fwd_wx, enc_fwd_wh, enc_fwd_b;
  Mat enc_bwd_wx, enc_bwd_wh, enc_bwd_b;
  // Dialog contextualizer (recurrent) and the context-less projection.
  Mat ctx_wx, ctx_wh, ctx_b;
  Mat noctx_w, noctx_b;
  // Heads. The act heads pass a GELU feature layer into a linear logit
  // layer; a single GELU output layer freezes at the activation's
  // stationary minimum under the per-act logistic losses.
  Mat fact_w, fact_b, fact_proj_w, fact_proj_b;
  Mat policy_w, policy_b, policy_out_w, policy_out_b;
  Mat utter_w, utter_b, utter_out_w, utter_out_b;
  Mat like_w, like_b;

  // Stable enumeration used by initialization, the optimizer and
  // checkpoint serialization.
  std::vector<std::pair<std::string, Mat*>> entries() {
    return {
        {"word_emb", &word_emb},
        {"entity_emb", &entity_emb},
        {"act_emb", &act_emb},
        {"speaker_user", &speaker_user},
        {"speaker_assistant", &speaker_assistant},
        {"entity_to_word", &entity_to_word},
        {"enc_fwd_wx", &enc_fwd_wx},
        {"enc_fwd_wh", &enc_fwd_wh},
        {"enc_fwd_b", &enc_fwd_b},
        {"enc_bwd_wx", &enc_bwd_wx},
        {"enc_bwd_wh", &enc_bwd_wh},
        {"enc_bwd_b", &enc_bwd_b},
        {"ctx_wx", &ctx_wx},
        {"ctx_wh", &ctx_wh},
        {"ctx_b", &ctx_b},
        {"noctx_w", &noctx_w},
        {"noctx_b", &noctx_b},
        {"fact_w", &fact_w},
        {"fact_b", &fact_b},
        {"fact_proj_w", &fact_proj_w},
        {"fact_proj_b", &fact_proj_b},
        {"policy_w", &policy_w},
        {"policy_b", &policy_b},
        {"policy_out_w", &policy_out_w},
        {"policy_out_b", &policy_out_b},
        {"utter_w", &utter_w},
        {"utter_b", &utter_b},
        {"utter_out_w", &utter_out_w},
        {"utter_out_b", &utter_out_b},
        {"like_w", &like_w},
        {"like_b", &like_b},
    };
  }

  std::vector<std::pair<std::string, const Mat*>> entries() const {
    auto mutable_entries = const_cast<CharmParameters*>(this)->entries();
    std::vector<std::pair<std::string, const Mat*>> out;
    out.reserve(mutable_entries.size());
    for (auto& [name, m] : mutable_entries) out.emplace_back(name, m);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : entries()) n += static_cast<std::size_t>(m->size());
    return n;
  }
};

namespace detail {

inline Mat lstm_input_weight(Rng& rng, int hidden, int input) {
  double r = std::sqrt(1.0 / static_cast<double>(input));
  std::uniform_real_distribution<double> u(-r, r);
  Mat m(4 * hidden, input);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  return m;
}

inline Mat dense(Rng& rng, int rows, int cols) {
  double r = std::sqrt(1.0 / static_cast<double>(cols));
  std::uniform_real_distribution<double> u(-r, r);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  return m;
}

inline Mat embedding(Rng& rng, int dim, int count) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Mat m(dim, count);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  return m;
}

// Forget-gate bias starts at 1 so early recurrent state survives.
inline Mat lstm_bias(int hidden) {
  Mat b = Mat::Zero(4 * hidden, 1);
  b.middleRows(hidden, hidden).setConstant(1.0);
  return b;
}

}  // namespace detail

inline CharmParameters init_parameters(const CharmConfig& cfg, int vocab_size, int entity_count,
                                       std::uint64_t seed) {
  Rng rng(seed);
  CharmParameters p;
  p.word_emb = detail::embedding(rng, cfg.word_dim, vocab_size);
  p.entity_emb = detail::embedding(rng, cfg.entity_dim, entity_count);
  p.act_emb = detail::embedding(rng, cfg.act_dim, data::kNumDialogActs);
  p.speaker_user = detail::embedding(rng, cfg.speaker_dim, 1);
  p.speaker_assistant = detail::embedding(rng, cfg.speaker_dim, 1);
  p.entity_to_word = detail::dense(rng, cfg.word_dim, cfg.entity_dim);

  p.enc_fwd_wx = detail::lstm_input_weight(rng, cfg.encoder_hidden, cfg.word_dim);
  p.enc_fwd_wh = detail::lstm_input_weight(rng, cfg.encoder_hidden, cfg.encoder_hidden);
  p.enc_fwd_b = detail::lstm_bias(cfg.encoder_hidden);
  p.enc_bwd_wx = detail::lstm_input_weight(rng, cfg.encoder_hidden, cfg.word_dim);
  p.enc_bwd_wh = detail::lstm_input_weight(rng, cfg.encoder_hidden, cfg.encoder_hidden);
  p.enc_bwd_b = detail::lstm_bias(cfg.encoder_hidden);

  p.ctx_wx = detail::lstm_input_weight(rng, cfg.context_hidden, cfg.turn_input_dim());
  p.ctx_wh = detail::lstm_input_weight(rng, cfg.context_hidden, cfg.context_hidden);
  p.ctx_b = detail::lstm_bias(cfg.context_hidden);
  p.noctx_w = detail::dense(rng, cfg.context_hidden, cfg.turn_input_dim());
  p.noctx_b = Mat::Zero(cfg.context_hidden, 1);

  p.fact_w = detail::dense(rng, cfg.fact_head_hidden, cfg.context_hidden + cfg.encoder_out());
  p.fact_b = Mat::Zero(cfg.fact_head_hidden, 1);
  p.fact_proj_w = detail::dense(rng, 1, cfg.fact_head_hidden);
  p.fact_proj_b = Mat::Zero(1, 1);
  p.policy_w = detail::dense(rng, cfg.act_head_hidden, cfg.context_hidden);
  p.policy_b = Mat::Zero(cfg.act_head_hidden, 1);
  p.policy_out_w = detail::dense(rng, data::kNumDialogActs, cfg.act_head_hidden);
  p.policy_out_b = Mat::Zero(data::kNumDialogActs, 1);
  p.utter_w = detail::dense(rng, cfg.act_head_hidden, cfg.context_hidden + cfg.turn_input_dim());
  p.utter_b = Mat::Zero(cfg.act_head_hidden, 1);
  p.utter_out_w = detail::dense(rng, data::kNumDialogActs, cfg.act_head_hidden);
  p.utter_out_b = Mat::Zero(data::kNumDialogActs, 1);
  p.like_w = detail::dense(rng, 2, cfg.context_hidden);
  p.like_b = Mat::Zero(2, 1);
  return p;
}

// Per-graph parameter leaves, in entries() order.
struct BoundParams {
  Node* word_emb;
  Node* entity_emb;
  Node* act_emb;
  Node* speaker_user;
  Node* speaker_assistant;
  Node* entity_to_word;
  Node* enc_fwd_wx;
  Node* enc_fwd_wh;
  Node* enc_fwd_b;
  Node* enc_bwd_wx;
  Node* enc_bwd_wh;
  Node* enc_bwd_b;
  Node* ctx_wx;
  Node* ctx_wh;
  Node* ctx_b;
  Node* noctx_w;
  Node* noctx_b;
  Node* fact_w;
  Node* fact_b;
  Node* fact_proj_w;
  Node* fact_proj_b;
  Node* policy_w;
  Node* policy_b;
  Node* policy_out_w;
  Node* policy_out_b;
  Node* utter_w;
  Node* utter_b;
  Node* utter_out_w;
  Node* utter_out_b;
  Node* like_w;
  Node* like_b;
  std::vector<Node*> all;  // entries() order
};

// ---------------------------------------------------------------------------
// Forward-pass structures.

struct TurnInput {
  Node* text = nullptr;     // shared-encoder output for the message text
  Node* act_avg = nullptr;  // mean of act embeddings, zero vector if no acts
  Node* topic = nullptr;
  Node* known = nullptr;  // mean of known-entity embeddings, zero if none
  Node* speaker = nullptr;
  Node* c = nullptr;         // [text; act_avg; topic; known; speaker]
  Node* c_masked = nullptr;  // same with act_avg zeroed
};

struct TurnForward {
  Node* policy_logits = nullptr;     // 16x1, from the state before this turn
  Node* utterance_logits = nullptr;  // 16x1, from d_i
  Node* like_logits = nullptr;       // 2x1, assistant turns only
  std::vector<std::string> fact_candidates;
  Node* fact_scores = nullptr;  // |candidates| x 1, assistant turns with shown facts
};

struct DialogForward {
  std::vector<TurnInput> inputs;  // one per message
  std::vector<Node*> h;           // h[0] = zero state, h[i] = state through turn i
  std::vector<TurnForward> turns;
};

// Plain-value outputs used by evaluation and the value-path losses.
struct FactTurnValues {
  std::vector<std::string> candidate_ids;
  Vec scores;
  Vec probs;  // softmax over the turn's candidates
};

struct ModelOutput {
  int num_turns = 0;
  std::vector<Vec> policy_logits, utterance_logits;  // 16 per turn
  std::vector<Vec> policy_probs, utterance_probs;    // per-act logistic probabilities
  std::vector<std::optional<FactTurnValues>> facts;  // per turn
  std::vector<std::optional<Vec>> like_logits;       // 2 per assistant turn
  std::vector<std::optional<double>> like_prob;      // "liked" coordinate
};

struct DialogLabels {
  std::vector<std::set<data::DialogAct>> acts;            // per turn
  std::vector<std::optional<std::set<std::string>>> used;  // per turn, assistant w/ facts
  std::vector<std::optional<bool>> liked;                  // per assistant turn

  static DialogLabels from_dialog(const data::Dialog& d) {
    DialogLabels labels;
    for (const auto& m : d.messages) {
      labels.acts.push_back(m.acts);
      if (m.sender == data::Sender::assistant) {
        labels.liked.push_back(m.liked);
        if (m.shown_facts && !m.shown_facts->slots.empty())
          labels.used.push_back(m.used_fact_ids);
        else
          labels.used.push_back(std::nullopt);
      } else {
        labels.liked.push_back(std::nullopt);
        labels.used.push_back(std::nullopt);
      }
    }
    return labels;
  }
};

struct MultiTaskLosses {
  double fact = 0.0;
  double policy = 0.0;
  double utterance = 0.0;
  double like = 0.0;
  double total = 0.0;
};

struct LossNodes {
  Node* fact = nullptr;
  Node* policy = nullptr;
  Node* utterance = nullptr;
  Node* like = nullptr;
  Node* total = nullptr;
};

// ---------------------------------------------------------------------------
// The model.

class Charm {
 public:
  Charm(CharmConfig cfg, Vocab vocab, EntityCatalog entities, std::uint64_t seed)
      : cfg_(cfg), vocab_(std::move(vocab)), entities_(std::move(entities)) {
    cfg_.validate();
    params_ = init_parameters(cfg_, vocab_.size(), entities_.size(), seed);
  }

  Charm(CharmConfig cfg, Vocab vocab, EntityCatalog entities, CharmParameters params)
      : cfg_(cfg), vocab_(std::move(vocab)), entities_(std::move(entities)),
        params_(std::move(params)) {
    cfg_.validate();
  }

  const CharmConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const EntityCatalog& entities() const { return entities_; }
  CharmParameters& params() { return params_; }
  const CharmParameters& params() const { return params_; }

  BoundParams bind(Graph& g) const {
    BoundParams b{};
    auto entries = params_.entries();
    std::vector<Node*> leaves;
    leaves.reserve(entries.size());
    for (const auto& [name, m] : entries) leaves.push_back(g.leaf(*m, true));
    std::size_t k = 0;
    b.word_emb = leaves[k++];
    b.entity_emb = leaves[k++];
    b.act_emb = leaves[k++];
    b.speaker_user = leaves[k++];
    b.speaker_assistant = leaves[k++];
    b.entity_to_word = leaves[k++];
    b.enc_fwd_wx = leaves[k++];
    b.enc_fwd_wh = leaves[k++];
    b.enc_fwd_b = leaves[k++];
    b.enc_bwd_wx = leaves[k++];
    b.enc_bwd_wh = leaves[k++];
    b.enc_bwd_b = leaves[k++];
    b.ctx_wx = leaves[k++];
    b.ctx_wh = leaves[k++];
    b.ctx_b = leaves[k++];
    b.noctx_w = leaves[k++];
    b.noctx_b = leaves[k++];
    b.fact_w = leaves[k++];
    b.fact_b = leaves[k++];
    b.fact_proj_w = leaves[k++];
    b.fact_proj_b = leaves[k++];
    b.policy_w = leaves[k++];
    b.policy_b = leaves[k++];
    b.policy_out_w = leaves[k++];
    b.policy_out_b = leaves[k++];
    b.utter_w = leaves[k++];
    b.utter_b = leaves[k++];
    b.utter_out_w = leaves[k++];
    b.utter_out_b = leaves[k++];
    b.like_w = leaves[k++];
    b.like_b = leaves[k++];
    b.all = std::move(leaves);
    return b;
  }

  // One recurrent step; returns (h', c').
  static std::pair<Node*, Node*> lstm_step(Graph& g, Node* wx, Node* wh, Node* b, Node* x,
                                           Node* h, Node* c) {
    const Eigen::Index hidden = h->value.rows();
    Node* z = g.add(g.add(g.matmul(wx, x), g.matmul(wh, h)), b);
    Node* in_gate = g.sigmoid(g.rows(z, 0, hidden));
    Node* forget_gate = g.sigmoid(g.rows(z, hidden, hidden));
    Node* cell_in = g.tanh(g.rows(z, 2 * hidden, hidden));
    Node* out_gate = g.sigmoid(g.rows(z, 3 * hidden, hidden));
    Node* c_next = g.add(g.hadamard(forget_gate, c), g.hadamard(in_gate, cell_in));
    Node* h_next = g.hadamard(out_gate, g.tanh(c_next));
    return {h_next, c_next};
  }

  // Shared text encoder for utterances and facts. The input sequence is
  // the word embeddings of the (capped) tokens followed by the projected
  // entity embeddings of any linked mentions; an empty sequence encodes
  // the padding symbol. Output is the concatenation of the two final
  // recurrent states.
  Node* encode_utterance(Graph& g, const BoundParams& p, const std::vector<std::string>& tokens,
                         const std::vector<std::string>& entity_mentions) const {
    std::vector<Node*> seq;
    const std::size_t cap = static_cast<std::size_t>(cfg_.max_tokens);
    for (std::size_t i = 0; i < tokens.size() && i < cap; ++i)
      seq.push_back(g.col(p.word_emb, vocab_.id(tokens[i])));
    for (const auto& e : entity_mentions)
      seq.push_back(g.matmul(p.entity_to_word, g.col(p.entity_emb, entities_.id(e))));
    if (seq.empty()) seq.push_back(g.col(p.word_emb, Vocab::kPad));

    auto run = [&](Node* wx, Node* wh, Node* b, bool reverse) {
      Node* h = g.zeros(cfg_.encoder_hidden);
      Node* c = g.zeros(cfg_.encoder_hidden);
      if (!reverse) {
        for (Node* x : seq) std::tie(h, c) = lstm_step(g, wx, wh, b, x, h, c);
      } else {
        for (auto it = seq.rbegin(); it != seq.rend(); ++it)
          std::tie(h, c) = lstm_step(g, wx, wh, b, *it, h, c);
      }
      return h;
    };
    Node* fwd = run(p.enc_fwd_wx, p.enc_fwd_wh, p.enc_fwd_b, false);
    Node* bwd = run(p.enc_bwd_wx, p.enc_bwd_wh, p.enc_bwd_b, true);
    return g.vcat({fwd, bwd});
  }

  // Builds the per-turn input concatenation c = [text; acts; topic; known;
  // speaker]. Empty act or known-entity sets contribute zero vectors;
  // mask_acts forces the act component to zero.
  TurnInput build_turn_input(Graph& g, const BoundParams& p, const data::Message& message,
                             const std::string& topic,
                             const std::set<std::string>& known_entities,
                             bool mask_acts = false) const {
    TurnInput t;
    t.text = encode_utterance(g, p, text::tokenize(message.text), {});

    Node* act_zero = g.zeros(cfg_.act_dim);
    if (message.acts.empty() || mask_acts) {
      t.act_avg = act_zero;
    } else {
      std::vector<Node*> embs;
      for (const auto& a : message.acts)
        embs.push_back(g.col(p.act_emb, static_cast<Eigen::Index>(a)));
      t.act_avg = g.mean(embs);
    }

    t.topic = g.col(p.entity_emb, entities_.id(topic));
    if (known_entities.empty()) {
      t.known = g.zeros(cfg_.entity_dim);
    } else {
      std::vector<Node*> embs;
      for (const auto& e : known_entities) embs.push_back(g.col(p.entity_emb, entities_.id(e)));
      t.known = g.mean(embs);
    }
    t.speaker = message.sender == data::Sender::user ? p.speaker_user : p.speaker_assistant;

    t.c = g.vcat({t.text, t.act_avg, t.topic, t.known, t.speaker});
    t.c_masked = mask_acts || message.acts.empty()
                     ? t.c
                     : g.vcat({t.text, act_zero, t.topic, t.known, t.speaker});
    return t;
  }

  // Dialog contextualizer. Returns h[0..T] where h[0] is the zero state.
  // With use_context the states come from a forward recurrence over the
  // turn inputs; without it each state is an independent projection of
  // that turn's input.
  std::vector<Node*> contextualize(Graph& g, const BoundParams& p,
                                   const std::vector<Node*>& turn_inputs) const {
    std::vector<Node*> h;
    h.reserve(turn_inputs.size() + 1);
    h.push_back(g.zeros(cfg_.context_hidden));
    if (cfg_.use_context) {
      Node* state = h[0];
      Node* cell = g.zeros(cfg_.context_hidden);
      for (Node* c : turn_inputs) {
        std::tie(state, cell) = lstm_step(g, p.ctx_wx, p.ctx_wh, p.ctx_b, c, state, cell);
        h.push_back(state);
      }
    } else {
      for (Node* c : turn_inputs) h.push_back(g.add(g.matmul(p.noctx_w, c), p.noctx_b));
    }
    return h;
  }

  // Salience scores for the turn's candidate facts from the state before
  // the turn; the current utterance never participates. Each candidate's
  // feature is GELU(W_f [h_prev; E(fact)] + b_f) reduced to a scalar by a
  // trained projection.
  Node* score_facts(Graph& g, const BoundParams& p, Node* h_prev,
                    const std::vector<Node*>& fact_encodings) const {
    if (fact_encodings.empty()) throw SchemaError("score_facts: no candidate facts");
    std::vector<Node*> scores;
    scores.reserve(fact_encodings.size());
    for (Node* e : fact_encodings) {
      Node* features = g.gelu(g.add(g.matmul(p.fact_w, g.vcat({h_prev, e})), p.fact_b));
      scores.push_back(g.add(g.matmul(p.fact_proj_w, features), p.fact_proj_b));
    }
    return g.vcat(scores);
  }

  // Per-act logits: policy from the pre-turn state, utterance acts from
  // d_i. Each head is a GELU feature layer followed by a linear logit
  // layer; probabilities are independent logistics of the logits.
  std::pair<Node*, Node*> act_heads(Graph& g, const BoundParams& p, Node* h_prev,
                                    Node* d_i) const {
    Node* policy_features = g.gelu(g.add(g.matmul(p.policy_w, h_prev), p.policy_b));
    Node* policy = g.add(g.matmul(p.policy_out_w, policy_features), p.policy_out_b);
    Node* utter_features = g.gelu(g.add(g.matmul(p.utter_w, d_i), p.utter_b));
    Node* utterance = g.add(g.matmul(p.utter_out_w, utter_features), p.utter_out_b);
    return {policy, utterance};
  }

  // Two-way logits over {not liked, liked} from the state including the
  // assistant's own message.
  Node* like_head(Graph& g, const BoundParams& p, Node* h_i) const {
    return g.gelu(g.add(g.matmul(p.like_w, h_i), p.like_b));
  }

  DialogForward forward(Graph& g, const BoundParams& p, const data::Dialog& dialog,
                        const corpus::FactIndex& index) const {
    DialogForward f;
    const std::size_t T = dialog.messages.size();
    f.inputs.reserve(T);
    for (const auto& m : dialog.messages)
      f.inputs.push_back(build_turn_input(g, p, m, dialog.topic, dialog.known_entities));

    std::vector<Node*> cs;
    cs.reserve(T);
    for (const auto& t : f.inputs) cs.push_back(t.c);
    f.h = contextualize(g, p, cs);

    std::map<std::string, Node*> fact_cache;
    auto encode_fact = [&](const std::string& fact_id) {
      auto it = fact_cache.find(fact_id);
      if (it != fact_cache.end()) return it->second;
      const corpus::Fact& fact = index.fact(fact_id);
      std::vector<std::string> mentions(fact.mentioned_entities.begin(),
                                        fact.mentioned_entities.end());
      Node* enc = encode_utterance(g, p, text::tokenize(fact.text), mentions);
      fact_cache.emplace(fact_id, enc);
      return enc;
    };

    f.turns.resize(T);
    for (std::size_t i = 0; i < T; ++i) {
      const data::Message& m = dialog.messages[i];
      TurnForward& out = f.turns[i];
      Node* h_prev = f.h[i];
      Node* c_for_d = cfg_.mask_current_acts_for_utterance_head ? f.inputs[i].c_masked
                                                                : f.inputs[i].c;
      Node* d_i = g.vcat({h_prev, c_for_d});
      std::tie(out.policy_logits, out.utterance_logits) = act_heads(g, p, h_prev, d_i);
      if (m.sender == data::Sender::assistant) {
        out.like_logits = like_head(g, p, f.h[i + 1]);
        if (m.shown_facts && !m.shown_facts->slots.empty()) {
          std::vector<Node*> encodings;
          for (const auto& slot : m.shown_facts->slots) {
            if (std::find(out.fact_candidates.begin(), out.fact_candidates.end(),
                          slot.fact_id) != out.fact_candidates.end())
              continue;
            out.fact_candidates.push_back(slot.fact_id);
            encodings.push_back(encode_fact(slot.fact_id));
          }
          out.fact_scores = score_facts(g, p, h_prev, encodings);
        }
      }
    }
    return f;
  }

  // Extracts plain values from a forward pass.
  ModelOutput output_values(const DialogForward& f) const {
    ModelOutput out;
    out.num_turns = static_cast<int>(f.turns.size());
    for (const auto& t : f.turns) {
      Vec policy = t.policy_logits->value.col(0);
      Vec utter = t.utterance_logits->value.col(0);
      out.policy_logits.push_back(policy);
      out.utterance_logits.push_back(utter);
      out.policy_probs.push_back(
          policy.unaryExpr([](double s) { return 1.0 / (1.0 + std::exp(-s)); }));
      out.utterance_probs.push_back(
          utter.unaryExpr([](double s) { return 1.0 / (1.0 + std::exp(-s)); }));
      if (t.fact_scores != nullptr) {
        FactTurnValues fv;
        fv.candidate_ids = t.fact_candidates;
        fv.scores = t.fact_scores->value.col(0);
        fv.probs = autograd::softmax_values(fv.scores);
        out.facts.emplace_back(std::move(fv));
      } else {
        out.facts.emplace_back(std::nullopt);
      }
      if (t.like_logits != nullptr) {
        Vec logits = t.like_logits->value.col(0);
        out.like_logits.emplace_back(logits);
        out.like_prob.emplace_back(autograd::softmax_values(logits)[1]);
      } else {
        out.like_logits.emplace_back(std::nullopt);
        out.like_prob.emplace_back(std::nullopt);
      }
    }
    return out;
  }

  // Evaluation-mode forward: builds a scratch graph and returns values.
  ModelOutput predict(const data::Dialog& dialog, const corpus::FactIndex& index) const {
    Graph g;
    BoundParams p = bind(g);
    return output_values(forward(g, p, dialog, index));
  }

 private:
  CharmConfig cfg_;
  Vocab vocab_;
  EntityCatalog entities_;
  CharmParameters params_;
};

// ---------------------------------------------------------------------------
// Losses. The graph path and the value path accumulate in the same order,
// so their results agree bit for bit.

namespace detail {

inline Vec act_label_vector(const std::set<data::DialogAct>& acts) {
  Vec y = Vec::Zero(data::kNumDialogActs);
  for (const auto& a : acts) y[static_cast<Eigen::Index>(a)] = 1.0;
  return y;
}

// Weight/label vectors for one fact turn in candidate order.
inline std::pair<Vec, Vec> fact_weights_labels(const std::vector<std::string>& candidates,
                                               const std::set<std::string>& used,
                                               double positive_weight) {
  Vec w = Vec::Ones(static_cast<Eigen::Index>(candidates.size()));
  Vec y = Vec::Zero(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (used.count(candidates[j])) {
      y[static_cast<Eigen::Index>(j)] = 1.0;
      w[static_cast<Eigen::Index>(j)] = positive_weight;
    }
  }
  return {w, y};
}

}  // namespace detail

// Builds the four loss terms on the graph. Fact turns participate when at
// least one shown candidate is labeled used; per-turn fact losses are
// normalized by candidate count before averaging over turns. Act losses
// are per-act binary cross-entropies summed over the sixteen acts and
// averaged over turns; the like loss is a two-class cross-entropy averaged
// over assistant turns. Total = fact + like + policy + utterance.
inline LossNodes build_losses(Graph& g, const DialogForward& f, const DialogLabels& labels,
                              const CharmConfig& cfg) {
  std::vector<Node*> fact_terms, policy_terms, utter_terms, like_terms;
  for (std::size_t i = 0; i < f.turns.size(); ++i) {
    const TurnForward& t = f.turns[i];
    policy_terms.push_back(g.binary_cross_entropy_with_logits(
        t.policy_logits, detail::act_label_vector(labels.acts[i]), cfg.log_eps));
    utter_terms.push_back(g.binary_cross_entropy_with_logits(
        t.utterance_logits, detail::act_label_vector(labels.acts[i]), cfg.log_eps));
    if (t.like_logits != nullptr && labels.liked[i].has_value())
      like_terms.push_back(
          g.pick_negative_log_softmax(t.like_logits, *labels.liked[i] ? 1 : 0, cfg.log_eps));
    if (t.fact_scores != nullptr && labels.used[i].has_value() && !labels.used[i]->empty()) {
      auto [w, y] =
          detail::fact_weights_labels(t.fact_candidates, *labels.used[i], cfg.positive_fact_weight);
      Node* ce = g.weighted_softmax_cross_entropy(t.fact_scores, w, y, cfg.log_eps);
      fact_terms.push_back(g.scale(ce, 1.0 / static_cast<double>(t.fact_candidates.size())));
    }
  }
  auto mean_or_zero = [&](std::vector<Node*>& terms) {
    if (terms.empty()) return g.zeros(1, 1);
    return g.scale(g.add_many(terms), 1.0 / static_cast<double>(terms.size()));
  };
  LossNodes out;
  out.fact = mean_or_zero(fact_terms);
  out.policy = mean_or_zero(policy_terms);
  out.utterance = mean_or_zero(utter_terms);
  out.like = mean_or_zero(like_terms);
  out.total = g.add(g.add(g.add(out.fact, out.like), out.policy), out.utterance);
  return out;
}

// Value-path losses over a ModelOutput; mirrors build_losses exactly.
inline MultiTaskLosses compute_losses(const ModelOutput& out, const DialogLabels& labels,
                                      const CharmConfig& cfg) {
  const double log_eps = std::log(cfg.log_eps);
  std::vector<double> fact_terms, policy_terms, utter_terms, like_terms;

  auto bce = [&](const Vec& logits, const Vec& y) {
    double loss = 0.0;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
      double p = 1.0 / (1.0 + std::exp(-logits[k]));
      double pc = std::min(std::max(p, cfg.log_eps), 1.0 - cfg.log_eps);
      loss -= y[k] * std::log(pc) + (1.0 - y[k]) * std::log(1.0 - pc);
    }
    return loss;
  };

  for (int i = 0; i < out.num_turns; ++i) {
    const Vec y_acts = detail::act_label_vector(labels.acts[static_cast<std::size_t>(i)]);
    policy_terms.push_back(bce(out.policy_logits[static_cast<std::size_t>(i)], y_acts));
    utter_terms.push_back(bce(out.utterance_logits[static_cast<std::size_t>(i)], y_acts));
    const auto& liked = labels.liked[static_cast<std::size_t>(i)];
    if (out.like_logits[static_cast<std::size_t>(i)].has_value() && liked.has_value()) {
      const Vec& s = *out.like_logits[static_cast<std::size_t>(i)];
      double lp = s[*liked ? 1 : 0] - autograd::log_sum_exp(s);
      like_terms.push_back(-std::max(lp, log_eps));
    }
    const auto& fact = out.facts[static_cast<std::size_t>(i)];
    const auto& used = labels.used[static_cast<std::size_t>(i)];
    if (fact.has_value() && used.has_value() && !used->empty()) {
      auto [w, y] = detail::fact_weights_labels(fact->candidate_ids, *used,
                                                cfg.positive_fact_weight);
      const double lse = autograd::log_sum_exp(fact->scores);
      double loss = 0.0;
      for (Eigen::Index j = 0; j < fact->scores.size(); ++j)
        loss -= w[j] * y[j] * std::max(fact->scores[j] - lse, log_eps);
      fact_terms.push_back(loss / static_cast<double>(fact->candidate_ids.size()));
    }
  }

  auto mean_or_zero = [](const std::vector<double>& terms) {
    if (terms.empty()) return 0.0;
    double s = 0.0;
    for (double t : terms) s += t;
    return s * (1.0 / static_cast<double>(terms.size()));
  };
  MultiTaskLosses losses;
  losses.fact = mean_or_zero(fact_terms);
  losses.policy = mean_or_zero(policy_terms);
  losses.utterance = mean_or_zero(utter_terms);
  losses.like = mean_or_zero(like_terms);
  losses.total = ((losses.fact + losses.like) + losses.policy) + losses.utterance;
  return losses;
}

// ---------------------------------------------------------------------------
// Majority-class baseline: per act, predict "present" iff the act occurs in
// more than half of the training utterances (ties predict absent); likes
// take the majority value over assistant messages. No fact predictions.

struct MajorityBaseline {
  std::array<bool, data::kNumDialogActs> act_present{};
  bool like_value = false;

  static MajorityBaseline fit(const std::vector<data::Dialog>& train) {
    if (train.empty()) throw SchemaError("majority baseline requires training dialogs");
    std::array<long long, data::kNumDialogActs> counts{};
    long long utterances = 0, assistant_msgs = 0, likes = 0;
    for (const auto& d : train) {
      for (const auto& m : d.messages) {
        ++utterances;
        for (const auto& a : m.acts) counts[static_cast<std::size_t>(a)] += 1;
        if (m.sender == data::Sender::assistant) {
          ++assistant_msgs;
          if (m.liked) ++likes;
        }
      }
    }
    MajorityBaseline b;
    for (int k = 0; k < data::kNumDialogActs; ++k)
      b.act_present[static_cast<std::size_t>(k)] = counts[static_cast<std::size_t>(k)] * 2 > utterances;
    b.like_value = likes * 2 > assistant_msgs;
    return b;
  }

  std::set<data::DialogAct> predicted_acts() const {
    std::set<data::DialogAct> acts;
    for (int k = 0; k < data::kNumDialogActs; ++k)
      if (act_present[static_cast<std::size_t>(k)]) acts.insert(static_cast<data::DialogAct>(k));
    return acts;
  }
};

}  // namespace curiosity::model
