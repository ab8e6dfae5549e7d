// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <random>
#include <sstream>

#include "cxrgaze/errors.hpp"
#include "cxrgaze/log.hpp"
#include "cxrgaze/losses.hpp"

namespace cxrgaze {
namespace {

using Indices = std::vector<std::int64_t>;

torch::Tensor grid_tensor(const GridF& grid) {
  return torch::from_blob(const_cast<float*>(grid.raw().data()), {grid.height(), grid.width()},
                          torch::kFloat)
      .clone();
}

torch::Tensor take(const torch::Tensor& t, const Indices& idx) {
  if (!t.defined()) return t;
  return t.index_select(0, torch::tensor(idx, torch::kLong));
}

std::vector<Indices> batches(Indices order, int batch_size) {
  std::vector<Indices> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    out.emplace_back(order.begin() + i,
                     order.begin() + std::min(order.size(), i + static_cast<std::size_t>(batch_size)));
  return out;
}

Indices iota(std::int64_t n) {
  Indices v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

int distinct_labels(const TensorDataset& d) {
  std::set<Label> seen;
  for (const auto& r : d.records) seen.insert(r.label);
  return static_cast<int>(seen.size());
}

void require_saliency(const TensorDataset& d, const char* which) {
  if (d.empty() || d.saliency.defined()) return;
  for (const auto& r : d.records)
    if (!r.saliency_path)
      throw ValidationError(std::string("stage S2 needs a saliency_path for every ") + which +
                            " record; missing for " + r.image_path.string());
}

std::string lineage_of(const std::optional<Checkpoint>& init, Stage stage) {
  const std::string self(to_string(stage));
  return init ? init->meta.lineage + ">" + self : self;
}

bool lineage_has(const Checkpoint& ck, Stage stage) {
  std::stringstream ss(ck.meta.lineage);
  std::string part;
  while (std::getline(ss, part, '>'))
    if (part == to_string(stage)) return true;
  return false;
}

// Features of the frozen backbone computed once per stage (eval mode).
torch::Tensor backbone_features(CxrGazeModel& model, const torch::Tensor& images, int batch_size) {
  torch::NoGradGuard guard;
  model->backbone->eval();
  std::vector<torch::Tensor> out;
  for (std::int64_t i = 0; i < images.size(0); i += batch_size)
    out.push_back(model->forward_features(images.narrow(0, i, std::min<std::int64_t>(batch_size, images.size(0) - i))));
  return torch::cat(out);
}

struct Pooled {
  torch::Tensor backbone;
  torch::Tensor decoder;
};

Pooled pooled_features(CxrGazeModel& model, const torch::Tensor& images, int batch_size) {
  torch::NoGradGuard guard;
  model->backbone->eval();
  model->salnet->eval();
  std::vector<torch::Tensor> b, d;
  for (std::int64_t i = 0; i < images.size(0); i += batch_size) {
    auto x = images.narrow(0, i, std::min<std::int64_t>(batch_size, images.size(0) - i));
    auto f = model->forward_features(x);
    auto s = model->forward_saliency(x, f);
    b.push_back(f.mean({2, 3}));
    d.push_back(s.decoder_features.mean({2, 3}));
  }
  return {torch::cat(b), torch::cat(d)};
}

// Stage-specific loss over one batch of dataset indices.
class StageObjective {
 public:
  StageObjective(const StageConfig& cfg, CxrGazeModel& model, const StageData& data)
      : cfg_(cfg), model_(model), data_(data) {
    switch (cfg.stage) {
      case Stage::S1a:
        if (distinct_labels(data.train) < 2)
          throw ValidationError("stage S1a needs at least two classes in the training data");
        if (distinct_labels(data.val) >= 2)
          val_triplets_ = sample_triplet_indices(data.val.records, cfg.seed + 7);
        // Validation classes with a single image cannot anchor a triplet.
        has_val_ = !val_triplets_.empty();
        break;
      case Stage::S1b:
        has_val_ = !data.val.empty();
        break;
      case Stage::S2:
        require_saliency(data.train, "training");
        require_saliency(data.val, "validation");
        if (data.train.empty()) throw ValidationError("stage S2 has no training records");
        if (model->config().salnet.use_backbone_fusion) {
          train_features_ = backbone_features(model, data.train.images, cfg.batch_size);
          if (!data.val.empty())
            val_features_ = backbone_features(model, data.val.images, cfg.batch_size);
        }
        has_val_ = !data.val.empty();
        break;
      case Stage::S3:
        train_pooled_ = pooled_features(model, data.train.images, cfg.batch_size);
        if (!data.val.empty()) val_pooled_ = pooled_features(model, data.val.images, cfg.batch_size);
        has_val_ = !data.val.empty();
        break;
    }
  }

  bool has_val() const { return has_val_; }

  // Work units for one training epoch, in seeded order.
  std::vector<Indices> epoch_batches(int epoch, std::mt19937_64& rng) {
    Indices order;
    if (cfg_.stage == Stage::S1a) {
      train_triplets_ = sample_triplet_indices(data_.train.records, rng());
      order = iota(static_cast<std::int64_t>(train_triplets_.size()));
    } else {
      order = iota(data_.train.size());
    }
    std::shuffle(order.begin(), order.end(), rng);
    (void)epoch;
    return batches(std::move(order), cfg_.batch_size);
  }

  torch::Tensor train_loss(const Indices& batch) { return loss(batch, false); }

  double val_loss() {
    torch::NoGradGuard guard;
    const auto n = cfg_.stage == Stage::S1a ? static_cast<std::int64_t>(val_triplets_.size())
                                            : data_.val.size();
    double total = 0;
    for (const auto& b : batches(iota(n), cfg_.batch_size))
      total += loss(b, true).item<double>() * static_cast<double>(b.size());
    return total / static_cast<double>(n);
  }

 private:
  torch::Tensor loss(const Indices& batch, bool val) {
    const TensorDataset& d = val ? data_.val : data_.train;
    switch (cfg_.stage) {
      case Stage::S1a: {
        const auto& triplets = val ? val_triplets_ : train_triplets_;
        Indices a, p, n;
        for (auto i : batch) {
          a.push_back(static_cast<std::int64_t>(triplets[i].anchor));
          p.push_back(static_cast<std::int64_t>(triplets[i].positive));
          n.push_back(static_cast<std::int64_t>(triplets[i].negative));
        }
        const auto b = static_cast<std::int64_t>(batch.size());
        auto e = model_->forward_embedding(
            torch::cat({take(d.images, a), take(d.images, p), take(d.images, n)}));
        return losses::triplet_loss(e.narrow(0, 0, b), e.narrow(0, b, b), e.narrow(0, 2 * b, b),
                                    cfg_.triplet_margin);
      }
      case Stage::S1b:
        return losses::cross_entropy(model_->forward_class_logits(take(d.images, batch)),
                                     take(d.labels, batch));
      case Stage::S2: {
        const auto& feats = val ? val_features_ : train_features_;
        auto out = model_->forward_saliency(take(d.images, batch), take(feats, batch));
        return losses::kl_saliency_loss(out.probabilities, take(d.saliency, batch));
      }
      case Stage::S3: {
        const auto& pooled = val ? val_pooled_ : train_pooled_;
        auto logits = model_->fusion_head->forward_pooled(take(pooled.backbone, batch),
                                                          take(pooled.decoder, batch));
        return losses::cross_entropy(logits, take(d.labels, batch));
      }
    }
    throw ValidationError("unknown stage");
  }

  const StageConfig& cfg_;
  CxrGazeModel& model_;
  const StageData& data_;
  bool has_val_ = false;
  std::vector<Triplet> train_triplets_, val_triplets_;
  torch::Tensor train_features_, val_features_;
  Pooled train_pooled_, val_pooled_;
};

std::vector<std::string> restored_namespaces(Stage stage) {
  switch (stage) {
    case Stage::S1a: return {};
    case Stage::S1b: return {"backbone", "embed_head"};
    case Stage::S2: return {"backbone", "embed_head", "cls_head"};
    case Stage::S3: return {"backbone", "embed_head", "cls_head", "salnet"};
  }
  return {};
}

bool needs_upstream(const StageConfig& stage, const ModelConfig& model) {
  switch (stage.stage) {
    case Stage::S1a: return false;
    case Stage::S1b: return !stage.from_scratch;
    case Stage::S2: return model.salnet.use_backbone_fusion;
    case Stage::S3: return true;
  }
  return true;
}

Stage upstream_stage(Stage stage) {
  switch (stage) {
    case Stage::S1b: return Stage::S1a;
    case Stage::S2: return Stage::S1b;
    default: return Stage::S2;
  }
}

}  // namespace

TensorDataset TensorDataset::subset(const std::vector<std::int64_t>& indices) const {
  TensorDataset out;
  for (auto i : indices) out.records.push_back(records.at(static_cast<std::size_t>(i)));
  out.images = take(images, indices);
  out.saliency = take(saliency, indices);
  out.labels = take(labels, indices);
  return out;
}

TensorDataset load_tensor_dataset(const std::vector<ImageRecord>& records, int height, int width) {
  TensorDataset d;
  d.records = records;
  const auto n = static_cast<std::int64_t>(records.size());
  d.images = torch::zeros({n, 1, height, width});
  d.labels = torch::zeros({n}, torch::kLong);
  const bool all_saliency =
      n > 0 && std::all_of(records.begin(), records.end(), [](const auto& r) { return r.saliency_path.has_value(); });
  if (all_saliency) d.saliency = torch::zeros({n, height, width});
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    d.images[i][0].copy_(grid_tensor(load_canonical_image(r.image_path, height, width).pixels));
    d.labels[i] = index_of(r.label);
    if (all_saliency)
      d.saliency[i].copy_(grid_tensor(load_saliency_map(*r.saliency_path, height, width).weights()));
  }
  return d;
}

StageData prepare_stage_data(const std::vector<ImageRecord>& manifest, const StageConfig& stage,
                             const ModelConfig& model) {
  auto train = select_split(manifest, Split::train);
  auto val = select_split(manifest, Split::val);
  if (train.empty()) throw ValidationError("manifest has no train records");
  if (val.empty() && stage.val_fraction > 0) {
    std::mt19937_64 rng(stage.seed);
    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < train.size(); ++i) by_class[train[i].label].push_back(i);
    std::vector<bool> to_val(train.size(), false);
    for (auto& [label, idx] : by_class) {
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto k = static_cast<std::size_t>(std::floor(stage.val_fraction * static_cast<double>(idx.size())));
      for (std::size_t j = 0; j < k; ++j) to_val[idx[j]] = true;
    }
    std::vector<ImageRecord> kept;
    for (std::size_t i = 0; i < train.size(); ++i) (to_val[i] ? val : kept).push_back(train[i]);
    train = std::move(kept);
  }
  return {load_tensor_dataset(train, model.image_height, model.image_width),
          load_tensor_dataset(val, model.image_height, model.image_width)};
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  char line[256], val[64] = "";
  for (const auto& e : log) {
    val[0] = '\0';
    if (e.val_loss) std::snprintf(val, sizeof val, "%.10g", *e.val_loss);
    std::snprintf(line, sizeof line, "%d,%.10g,%s,%.6g,%.3f\n", e.epoch, e.train_loss, val, e.lr,
                  e.seconds);
    out << line;
  }
}

EarlyStopDecision early_stopping_update(const std::vector<double>& history, int patience,
                                        double min_delta) {
  if (history.empty()) throw ValidationError("early stopping needs a nonempty history");
  EarlyStopDecision d;
  d.best = static_cast<std::size_t>(std::min_element(history.begin(), history.end()) - history.begin());
  double reference = history.front();
  std::size_t last_improvement = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const double gain = reference - history[i];
    if (gain > 0 && gain >= min_delta) {
      reference = history[i];
      last_improvement = i;
    }
  }
  d.stop = patience > 0 &&
           (history.size() - 1 - last_improvement) >= static_cast<std::size_t>(patience);
  return d;
}

std::set<std::string> trainable_namespaces(const StageConfig& stage) {
  switch (stage.stage) {
    case Stage::S1a: return {"backbone", "embed_head"};
    case Stage::S1b:
      if (stage.finetune_all) return {"backbone", "cls_head"};
      return {"cls_head"};
    case Stage::S2: return {"salnet"};
    case Stage::S3: return {"fusion_head"};
  }
  return {};
}

void check_upstream(const StageConfig& stage, const ModelConfig& model,
                    const std::optional<Checkpoint>& init) {
  const std::string name(to_string(stage.stage));
  if (stage.stage == Stage::S1a) {
    if (init) throw ValidationError("stage S1a starts from fresh weights; no upstream checkpoint is accepted");
    return;
  }
  if (!init) {
    if (needs_upstream(stage, model))
      throw DependencyError("stage " + name + " needs a stage " +
                            std::string(to_string(upstream_stage(stage.stage))) + " checkpoint");
    return;
  }
  if (stage.stage == Stage::S1b && stage.from_scratch)
    throw ValidationError("stage S1b with from_scratch=true takes no upstream checkpoint");
  const Stage want = upstream_stage(stage.stage);
  if (init->meta.stage != want)
    throw ValidationError("stage " + name + " expects a stage " + std::string(to_string(want)) +
                          " checkpoint, got stage " + std::string(to_string(init->meta.stage)));
  if (stage.stage == Stage::S3 && !lineage_has(*init, Stage::S1b))
    throw ValidationError("stage S3 needs an S2 checkpoint trained on an S1b backbone (lineage " +
                          init->meta.lineage + ")");
  const auto upstream = ModelConfig::from_text(init->meta.model_config);
  if (upstream.backbone_digest() != model.backbone_digest())
    throw ValidationError("stage " + name +
                          ": backbone settings or image size differ from the upstream checkpoint");
  if (stage.stage == Stage::S3 && upstream.salnet_digest() != model.salnet_digest())
    throw ValidationError("stage S3: saliency network settings differ from the upstream checkpoint");
}

StageResult run_stage(const StageConfig& cfg, const ModelConfig& model_config,
                      const StageData& data, const std::optional<Checkpoint>& init,
                      const StageHooks& hooks) {
  check_upstream(cfg, model_config, init);
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (data.train.empty()) throw ValidationError("no training records");

  if (cfg.reproducible) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, true);
  }
  torch::manual_seed(cfg.seed);
  CxrGazeModel model(model_config);
  if (init) load_namespaces(model, *init, restored_namespaces(cfg.stage));

  const auto trainable = trainable_namespaces(cfg);
  std::map<std::string, std::string> frozen_digests;
  for (const auto& ns : model_namespaces())
    if (!trainable.count(ns)) frozen_digests[ns] = parameter_digest(*model, ns + ".");

  set_trainable_namespaces(model, trainable);
  StageObjective objective(cfg, model, data);

  std::vector<torch::Tensor> params;
  for (auto& p : model->parameters())
    if (p.requires_grad()) params.push_back(p);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.lr)
                                           .betas({cfg.beta1, cfg.beta2})
                                           .eps(cfg.adam_eps));

  std::mt19937_64 rng(cfg.seed);
  StageResult result;
  std::vector<double> monitored;
  std::map<std::string, torch::Tensor> best_state;
  std::string best_rng;
  const std::string stage_name(to_string(cfg.stage));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    set_trainable_namespaces(model, trainable);
    double total = 0;
    std::size_t count = 0;
    int bi = 0;
    for (const auto& batch : objective.epoch_batches(epoch, rng)) {
      optimizer.zero_grad();
      auto loss = objective.train_loss(batch);
      loss.backward();
      optimizer.step();
      const double v = loss.item<double>();
      if (!std::isfinite(v))
        throw ValidationError("stage " + stage_name + ": non-finite training loss at epoch " +
                              std::to_string(epoch));
      if (hooks.on_batch) hooks.on_batch(epoch, bi, v);
      total += v * static_cast<double>(batch.size());
      count += batch.size();
      ++bi;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = total / static_cast<double>(count);
    entry.lr = cfg.lr;
    if (objective.has_val()) {
      model->eval();
      entry.val_loss = objective.val_loss();
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    monitored.push_back(entry.val_loss.value_or(entry.train_loss));

    {
      std::ostringstream msg;
      msg << stage_name << " epoch " << epoch << " train_loss " << entry.train_loss;
      if (entry.val_loss) msg << " val_loss " << *entry.val_loss;
      msg << " (" << entry.seconds << " s)";
      log::info(msg.str());
    }

    const auto decision = early_stopping_update(monitored, cfg.patience, cfg.min_delta);
    if (decision.best + 1 == monitored.size()) {
      best_state = snapshot_state(*model);
      std::ostringstream rs;
      rs << rng;
      best_rng = rs.str();
    }
    bool stop = decision.stop;
    if (hooks.on_epoch_end && hooks.on_epoch_end(entry, model)) stop = true;
    if (stop) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }

  result.best_index = early_stopping_update(monitored, 0, cfg.min_delta).best;
  restore_state(*model, best_state);
  freeze(*model);

  for (const auto& [ns, digest] : frozen_digests)
    if (parameter_digest(*model, ns + ".") != digest)
      throw IntegrityError("stage " + stage_name + " modified frozen namespace " + ns);

  CheckpointMeta meta;
  meta.stage = cfg.stage;
  meta.epoch = static_cast<int>(result.best_index) + 1;
  meta.best_val_metric = monitored[result.best_index];
  meta.monitored = objective.has_val() ? "val_loss" : "train_loss";
  meta.stage_config = stage_config_text(cfg);
  meta.seed = cfg.seed;
  meta.rng_state = best_rng;
  meta.lineage = lineage_of(init, cfg.stage);
  result.checkpoint = make_checkpoint(model, std::move(meta));
  result.model = model;
  return result;
}

torch::Tensor predict_backbone_probabilities(CxrGazeModel& model, const torch::Tensor& images,
                                             int batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<torch::Tensor> out;
  for (std::int64_t i = 0; i < images.size(0); i += batch_size)
    out.push_back(torch::softmax(
        model->forward_class_logits(images.narrow(0, i, std::min<std::int64_t>(batch_size, images.size(0) - i))), 1));
  return torch::cat(out);
}

FullPrediction predict_full(CxrGazeModel& model, const torch::Tensor& images, int batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<torch::Tensor> probs, maps;
  for (std::int64_t i = 0; i < images.size(0); i += batch_size) {
    auto x = images.narrow(0, i, std::min<std::int64_t>(batch_size, images.size(0) - i));
    auto f = model->forward_features(x);
    auto s = model->forward_saliency(x, f);
    probs.push_back(torch::softmax(model->fusion_head(f, s.decoder_features), 1));
    maps.push_back(s.probabilities);
  }
  return {torch::cat(probs), torch::cat(maps)};
}

torch::Tensor predict_saliency(CxrGazeModel& model, const torch::Tensor& images, int batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  const bool fusion = model->config().salnet.use_backbone_fusion;
  std::vector<torch::Tensor> maps;
  for (std::int64_t i = 0; i < images.size(0); i += batch_size) {
    auto x = images.narrow(0, i, std::min<std::int64_t>(batch_size, images.size(0) - i));
    maps.push_back(model->forward_saliency(x, fusion ? model->forward_features(x) : torch::Tensor())
                       .probabilities);
  }
  return torch::cat(maps);
}

}  // namespace cxrgaze
