#pragma once
// Named desk-scale configurations shared by the CLI defaults and the
// verification suites. The released-data configuration keeps the larger
// documented defaults; the synthetic reference keeps training on a laptop
// CPU in minutes.

#include "curiosity/model.hpp"
#include "curiosity/synthetic.hpp"
#include "curiosity/training.hpp"

namespace curiosity {

// Reference corpus + dialog generator settings for desk-scale runs.
inline data::SyntheticConfig reference_synthetic_config() {
  data::SyntheticConfig cfg;
  cfg.num_dialogs = 1000;
  cfg.num_topics = 12;
  cfg.facts_per_topic = 60;
  cfg.entities_per_topic = 24;
  cfg.num_aspect_labels = 6;
  cfg.seed = 13;
  return cfg;
}

// Model dimensions small enough to train the reference corpus on a CPU.
inline model::CharmConfig desk_scale_model_config() {
  model::CharmConfig cfg;
  cfg.word_dim = 16;
  cfg.entity_dim = 12;
  cfg.act_dim = 8;
  cfg.speaker_dim = 4;
  cfg.encoder_hidden = 16;
  cfg.context_hidden = 48;
  cfg.fact_head_hidden = 24;
  cfg.act_head_hidden = 24;
  cfg.max_tokens = 24;
  return cfg;
}

inline train::TrainConfig desk_scale_train_config() {
  train::TrainConfig cfg;  // lr .001, max 40 epochs, patience 3
  cfg.batch_size = 16;     // desk-scale corpora need more updates per epoch
  cfg.threads = 2;
  return cfg;
}

}  // namespace curiosity
