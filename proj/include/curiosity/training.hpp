#pragma once
// Joint optimization of the four-task loss: Adam on the summed loss,
// early stopping on the summed validation losses, checkpointing.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "curiosity/common.hpp"
#include "curiosity/eval.hpp"
#include "curiosity/model.hpp"

namespace curiosity::train {

using autograd::Mat;

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 64;  // dialogs per update
  int max_epochs = 40;
  int patience = 3;        // epochs without validation improvement
  double grad_clip = 5.0;  // global gradient norm
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // empty = keep everything in memory
  int threads = 1;

  void validate() const {
    if (learning_rate <= 0 || batch_size <= 0 || max_epochs <= 0 || patience <= 0 ||
        grad_clip <= 0 || threads <= 0)
      throw SchemaError("train config values must be positive");
  }
};

// Minimum-validation-loss tracker with patience.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Records one epoch's validation loss; returns true when training
  // should stop after this epoch.
  bool record(int epoch, double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch;
      since_best_ = 0;
    } else {
      ++since_best_;
    }
    return since_best_ >= patience_;
  }

  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int since_best_ = 0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, const std::vector<std::pair<std::string, Mat*>>& params)
      : lr_(lr) {
    for (const auto& [name, m] : params) {
      m_.push_back(Mat::Zero(m->rows(), m->cols()));
      v_.push_back(Mat::Zero(m->rows(), m->cols()));
    }
  }

  // In-place update; gradients are clipped to a global L2 norm first.
  void step(const std::vector<std::pair<std::string, Mat*>>& params, std::vector<Mat>& grads,
            double clip_norm) {
    double norm_sq = 0.0;
    for (const auto& g : grads) norm_sq += g.squaredNorm();
    const double norm = std::sqrt(norm_sq);
    if (clip_norm > 0 && norm > clip_norm) {
      const double scale = clip_norm / norm;
      for (auto& g : grads) g *= scale;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      Mat m_hat = m_[i] / bc1;
      Mat v_hat = v_[i] / bc2;
      *params[i].second -= lr_ * m_hat.cwiseQuotient((v_hat.array().sqrt() + eps_).matrix());
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Mat> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean dialog total over the epoch
  model::MultiTaskLosses validation;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int best_epoch = -1;
  double best_val_total = std::numeric_limits<double>::infinity();
  bool diverged = false;
  model::CharmParameters best_params;
};

namespace detail {

// Gradient of the mean dialog loss over [lo, hi); grads are in
// parameter-entries order. Also returns the summed dialog totals.
inline double accumulate_batch_gradients(const model::Charm& charm,
                                         const std::vector<const data::Dialog*>& dialogs,
                                         std::size_t lo, std::size_t hi,
                                         const corpus::FactIndex& index,
                                         std::vector<Mat>& grads) {
  double loss_sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    autograd::Graph g;
    model::BoundParams p = charm.bind(g);
    model::DialogForward f = charm.forward(g, p, *dialogs[i], index);
    model::DialogLabels labels = model::DialogLabels::from_dialog(*dialogs[i]);
    model::LossNodes losses = model::build_losses(g, f, labels, charm.config());
    loss_sum += losses.total->value(0, 0);
    g.backward(losses.total);
    for (std::size_t k = 0; k < p.all.size(); ++k) grads[k] += p.all[k]->grad;
  }
  return loss_sum;
}

inline model::MultiTaskLosses mean_validation_losses(const model::Charm& charm,
                                                     const std::vector<const data::Dialog*>& val,
                                                     const corpus::FactIndex& index) {
  model::MultiTaskLosses mean;
  for (const data::Dialog* d : val) {
    model::ModelOutput out = charm.predict(*d, index);
    model::DialogLabels labels = model::DialogLabels::from_dialog(*d);
    model::MultiTaskLosses l = model::compute_losses(out, labels, charm.config());
    mean.fact += l.fact;
    mean.policy += l.policy;
    mean.utterance += l.utterance;
    mean.like += l.like;
  }
  const double n = static_cast<double>(val.size());
  mean.fact /= n;
  mean.policy /= n;
  mean.utterance /= n;
  mean.like /= n;
  mean.total = ((mean.fact + mean.like) + mean.policy) + mean.utterance;
  return mean;
}

}  // namespace detail

// Trains in place; the returned best_params snapshot is the checkpoint
// with the minimum summed validation loss. Divergence (non-finite batch
// loss) aborts the run and keeps the last finite checkpoint.
inline TrainResult train(model::Charm& charm, const std::vector<data::Dialog>& train_dialogs,
                         const std::vector<data::Dialog>& val_dialogs,
                         const corpus::FactIndex& index, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = nullptr) {
  cfg.validate();
  if (train_dialogs.empty() || val_dialogs.empty())
    throw SchemaError("train requires non-empty train and validation splits");

  std::vector<const data::Dialog*> train_ptrs, val_ptrs;
  for (const auto& d : train_dialogs) train_ptrs.push_back(&d);
  for (const auto& d : val_dialogs) val_ptrs.push_back(&d);

  auto entries = charm.params().entries();
  AdamOptimizer opt(cfg.learning_rate, entries);
  EarlyStopper stopper(cfg.patience);

  TrainResult result;
  result.best_params = charm.params();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<const data::Dialog*> order = train_ptrs;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t count = end - start;

      std::vector<Mat> grads;
      grads.reserve(entries.size());
      for (const auto& [name, m] : entries) grads.push_back(Mat::Zero(m->rows(), m->cols()));

      double batch_loss_sum = 0.0;
      const int workers = std::min<int>(cfg.threads, static_cast<int>(count));
      if (workers <= 1) {
        batch_loss_sum =
            detail::accumulate_batch_gradients(charm, order, start, end, index, grads);
      } else {
        std::vector<std::vector<Mat>> worker_grads(static_cast<std::size_t>(workers), grads);
        std::vector<double> worker_loss(static_cast<std::size_t>(workers), 0.0);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
          const std::size_t lo = start + (count * static_cast<std::size_t>(w)) /
                                             static_cast<std::size_t>(workers);
          const std::size_t hi = start + (count * static_cast<std::size_t>(w + 1)) /
                                             static_cast<std::size_t>(workers);
          pool.emplace_back([&, w, lo, hi] {
            worker_loss[static_cast<std::size_t>(w)] = detail::accumulate_batch_gradients(
                charm, order, lo, hi, index, worker_grads[static_cast<std::size_t>(w)]);
          });
        }
        for (auto& t : pool) t.join();
        for (int w = 0; w < workers; ++w) {
          batch_loss_sum += worker_loss[static_cast<std::size_t>(w)];
          for (std::size_t k = 0; k < grads.size(); ++k)
            grads[k] += worker_grads[static_cast<std::size_t>(w)][k];
        }
      }

      if (!std::isfinite(batch_loss_sum)) {
        result.diverged = true;
        if (on_epoch) {
          EpochRecord rec;
          rec.epoch = epoch;
          rec.train_loss = batch_loss_sum;
          on_epoch(rec);
        }
        return result;
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& g : grads) g *= inv;
      opt.step(entries, grads, cfg.grad_clip);
      epoch_loss_sum += batch_loss_sum;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss_sum / static_cast<double>(order.size());
    rec.validation = detail::mean_validation_losses(charm, val_ptrs, index);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.record(epoch, rec.validation.total);
    if (stopper.best_epoch() == epoch) {
      result.best_params = charm.params();
      result.best_epoch = epoch;
      result.best_val_total = rec.validation.total;
    }
    if (stop) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary file holding the config, the vocabulary,
// the entity catalog and every parameter tensor. Loading verifies the
// magic, the fingerprints and all tensor shapes.

inline constexpr char kCheckpointMagic[] = "CURIOSITYCKPT1\n";

inline nlohmann::json config_to_json(const model::CharmConfig& c) {
  return nlohmann::json{{"word_dim", c.word_dim},
                        {"entity_dim", c.entity_dim},
                        {"act_dim", c.act_dim},
                        {"speaker_dim", c.speaker_dim},
                        {"encoder_hidden", c.encoder_hidden},
                        {"context_hidden", c.context_hidden},
                        {"fact_head_hidden", c.fact_head_hidden},
                        {"act_head_hidden", c.act_head_hidden},
                        {"positive_fact_weight", c.positive_fact_weight},
                        {"use_context", c.use_context},
                        {"mask_current_acts_for_utterance_head",
                         c.mask_current_acts_for_utterance_head},
                        {"max_tokens", c.max_tokens},
                        {"log_eps", c.log_eps}};
}

inline model::CharmConfig config_from_json(const nlohmann::json& j) {
  model::CharmConfig c;
  c.word_dim = j.at("word_dim").get<int>();
  c.entity_dim = j.at("entity_dim").get<int>();
  c.act_dim = j.at("act_dim").get<int>();
  c.speaker_dim = j.at("speaker_dim").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.context_hidden = j.at("context_hidden").get<int>();
  c.fact_head_hidden = j.at("fact_head_hidden").get<int>();
  c.act_head_hidden = j.at("act_head_hidden").get<int>();
  c.positive_fact_weight = j.at("positive_fact_weight").get<double>();
  c.use_context = j.at("use_context").get<bool>();
  c.mask_current_acts_for_utterance_head =
      j.at("mask_current_acts_for_utterance_head").get<bool>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.log_eps = j.at("log_eps").get<double>();
  return c;
}

inline void save_checkpoint(const std::string& path, const model::Charm& charm) {
  nlohmann::json header;
  header["config"] = config_to_json(charm.config());
  header["vocab"] = charm.vocab().id_to_token;
  header["entities"] = charm.entities().id_to_entity;
  header["vocab_fingerprint"] = charm.vocab().fingerprint();
  header["entity_fingerprint"] = charm.entities().fingerprint();
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, m] : charm.params().entries())
    manifest.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["manifest"] = manifest;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, static_cast<std::streamsize>(sizeof(kCheckpointMagic) - 1));
  const std::string hs = header.dump();
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : charm.params().entries())
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(static_cast<std::size_t>(m->size()) * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline model::Charm load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != std::string(kCheckpointMagic))
    throw SchemaError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw SchemaError("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  model::CharmConfig cfg = config_from_json(header.at("config"));
  model::Vocab vocab;
  vocab.id_to_token.clear();
  vocab.token_to_id.clear();
  for (const auto& t : header.at("vocab")) {
    vocab.token_to_id.emplace(t.get<std::string>(), static_cast<int>(vocab.id_to_token.size()));
    vocab.id_to_token.push_back(t.get<std::string>());
  }
  model::EntityCatalog entities;
  entities.id_to_entity.clear();
  entities.entity_to_id.clear();
  for (const auto& e : header.at("entities")) {
    entities.entity_to_id.emplace(e.get<std::string>(),
                                  static_cast<int>(entities.id_to_entity.size()));
    entities.id_to_entity.push_back(e.get<std::string>());
  }
  if (vocab.fingerprint() != header.at("vocab_fingerprint").get<std::uint64_t>())
    throw SchemaError("checkpoint vocabulary fingerprint mismatch: " + path);
  if (entities.fingerprint() != header.at("entity_fingerprint").get<std::uint64_t>())
    throw SchemaError("checkpoint entity-catalog fingerprint mismatch: " + path);

  model::CharmParameters params =
      model::init_parameters(cfg, vocab.size(), entities.size(), 0);
  auto entries = params.entries();
  const auto& manifest = header.at("manifest");
  if (manifest.size() != entries.size())
    throw SchemaError("checkpoint manifest mismatch: " + path);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& item = manifest[k];
    Mat* m = entries[k].second;
    if (item.at("name").get<std::string>() != entries[k].first ||
        item.at("rows").get<Eigen::Index>() != m->rows() ||
        item.at("cols").get<Eigen::Index>() != m->cols())
      throw SchemaError("checkpoint tensor mismatch for " + entries[k].first + ": " + path);
    in.read(reinterpret_cast<char*>(m->data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(m->size()) * sizeof(double)));
  }
  if (!in) throw SchemaError("truncated checkpoint tensors: " + path);
  return model::Charm(cfg, std::move(vocab), std::move(entities), std::move(params));
}

// Refuses evaluation under a mismatched configuration or corpus pairing.
inline void verify_compatible(const model::Charm& charm, const model::CharmConfig& expected_cfg,
                              std::uint64_t expected_vocab_fp, std::uint64_t expected_entity_fp) {
  if (!(charm.config() == expected_cfg)) throw SchemaError("checkpoint config mismatch");
  if (charm.vocab().fingerprint() != expected_vocab_fp)
    throw SchemaError("checkpoint vocabulary mismatch");
  if (charm.entities().fingerprint() != expected_entity_fp)
    throw SchemaError("checkpoint entity-catalog mismatch");
}

// Metrics for all four tasks on a dialog collection (delegates to eval).
inline eval::MetricRecord evaluate_checkpoint(const model::Charm& charm,
                                              const std::vector<data::Dialog>& dialogs,
                                              const corpus::FactIndex& index) {
  return eval::evaluate_model(charm, dialogs, index);
}

}  // namespace curiosity::train
