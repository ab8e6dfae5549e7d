// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "cxrgaze/checkpoint.hpp"
#include "cxrgaze/errors.hpp"
#include "cxrgaze/trainer.hpp"
#include "test_support.hpp"

namespace cxrgaze {
namespace {

using testing::quick_stage;
using testing::TempDir;
using testing::tiny_model_config;

TEST(EarlyStopping, MonotoneImprovementContinues) {
  const auto d = early_stopping_update({1.0, 0.9, 0.8}, 10);
  EXPECT_FALSE(d.stop);
  EXPECT_EQ(d.best, 2u);
}

TEST(EarlyStopping, PatienceExhaustion) {
  std::vector<double> h = {1.0};
  for (int i = 0; i < 10; ++i) h.push_back(1.0 + 0.01 * (i % 3));
  const auto d = early_stopping_update(h, 10);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best, 0u);
  h.pop_back();
  EXPECT_FALSE(early_stopping_update(h, 10).stop);
}

TEST(EarlyStopping, SubThresholdGainDoesNotResetPatience) {
  std::vector<double> h = {0.5, 0.4, 0.4 + 1e-9};
  for (int i = 0; i < 9; ++i) h.push_back(0.45);
  const auto d = early_stopping_update(h, 10, 1e-6);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best, 1u);
  // A tiny improvement below min_delta still does not count.
  std::vector<double> g = {0.5, 0.4};
  for (int i = 0; i < 10; ++i) g.push_back(0.4 - 1e-8 * (i + 1));
  EXPECT_TRUE(early_stopping_update(g, 10, 1e-6).stop);
  EXPECT_EQ(early_stopping_update(g, 10, 1e-6).best, g.size() - 1);
}

TEST(EarlyStopping, EarliestMinimumOnTies) {
  EXPECT_EQ(early_stopping_update({0.3, 0.2, 0.2, 0.25}, 10).best, 1u);
}

TEST(EarlyStopping, ZeroPatienceNeverStops) {
  std::vector<double> h(50, 1.0);
  EXPECT_FALSE(early_stopping_update(h, 0).stop);
  EXPECT_THROW(early_stopping_update({}, 3), ValidationError);
}

TEST(Stages, TrainableSets) {
  using Set = std::set<std::string>;
  EXPECT_EQ(trainable_namespaces(quick_stage(Stage::S1a, 1)), (Set{"backbone", "embed_head"}));
  EXPECT_EQ(trainable_namespaces(quick_stage(Stage::S1b, 1)), (Set{"backbone", "cls_head"}));
  auto head_only = quick_stage(Stage::S1b, 1);
  head_only.finetune_all = false;
  EXPECT_EQ(trainable_namespaces(head_only), (Set{"cls_head"}));
  EXPECT_EQ(trainable_namespaces(quick_stage(Stage::S2, 1)), (Set{"salnet"}));
  EXPECT_EQ(trainable_namespaces(quick_stage(Stage::S3, 1)), (Set{"fusion_head"}));
}

// One small synthetic dataset shared by the training tests.
class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    const auto manifest = generate_synthetic_dataset(16, 0, dir_->path());
    records_ = new std::vector<ImageRecord>(load_manifest(manifest));
    auto cfg = quick_stage(Stage::S1a, 1);
    cfg.val_fraction = 0;
    data_ = new StageData(prepare_stage_data(*records_, cfg, tiny_model_config()));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete records_;
    delete dir_;
  }
  static TempDir* dir_;
  static std::vector<ImageRecord>* records_;
  static StageData* data_;
};
TempDir* TrainerTest::dir_ = nullptr;
std::vector<ImageRecord>* TrainerTest::records_ = nullptr;
StageData* TrainerTest::data_ = nullptr;

TEST_F(TrainerTest, DatasetTensors) {
  EXPECT_EQ(data_->train.size(), 16);
  EXPECT_TRUE(data_->val.empty());
  EXPECT_EQ(data_->train.images.sizes(), (std::vector<std::int64_t>{16, 1, 64, 64}));
  EXPECT_EQ(data_->train.saliency.sizes(), (std::vector<std::int64_t>{16, 64, 64}));
  EXPECT_LT((data_->train.saliency.to(torch::kDouble).sum({1, 2}) - 1).abs().max().item<double>(), 1e-5);
}

TEST_F(TrainerTest, StratifiedValidationCarve) {
  auto cfg = quick_stage(Stage::S1b, 1);
  cfg.val_fraction = 0.25;
  const auto split = prepare_stage_data(*records_, cfg, tiny_model_config());
  EXPECT_EQ(split.train.size() + split.val.size(), 16);
  std::map<Label, int> per_class;
  for (const auto& r : split.val.records) ++per_class[r.label];
  EXPECT_EQ(per_class.size(), 3u);  // floor(0.25 * 5 or 6) = 1 per class
}

TEST_F(TrainerTest, DependencyContract) {
  const auto m = tiny_model_config();
  EXPECT_THROW(check_upstream(quick_stage(Stage::S1b, 1), m, std::nullopt), DependencyError);
  EXPECT_THROW(check_upstream(quick_stage(Stage::S2, 1), m, std::nullopt), DependencyError);
  EXPECT_THROW(check_upstream(quick_stage(Stage::S3, 1), m, std::nullopt), DependencyError);
  auto scratch = quick_stage(Stage::S1b, 1);
  scratch.from_scratch = true;
  EXPECT_NO_THROW(check_upstream(scratch, m, std::nullopt));
  auto alone = m;
  alone.salnet.use_backbone_fusion = false;
  EXPECT_NO_THROW(check_upstream(quick_stage(Stage::S2, 1), alone, std::nullopt));

  const auto s1a = run_stage(quick_stage(Stage::S1a, 1), m, *data_, std::nullopt);
  EXPECT_THROW(check_upstream(quick_stage(Stage::S2, 1), m, s1a.checkpoint), ValidationError);
  EXPECT_THROW(check_upstream(quick_stage(Stage::S1a, 1), m, s1a.checkpoint), ValidationError);
  auto other = m;
  other.backbone.growth_rate = 4;
  EXPECT_THROW(check_upstream(quick_stage(Stage::S1b, 1), other, s1a.checkpoint), ValidationError);
  EXPECT_NO_THROW(check_upstream(quick_stage(Stage::S1b, 1), m, s1a.checkpoint));

  // An S2 run that never saw an S1b backbone cannot feed S3.
  const auto s2 = run_stage(quick_stage(Stage::S2, 1), alone, *data_, std::nullopt);
  EXPECT_THROW(check_upstream(quick_stage(Stage::S3, 1), alone, s2.checkpoint), ValidationError);
}

TEST_F(TrainerTest, FullChainKeepsFrozenNamespacesIntact) {
  const auto m = tiny_model_config();
  const auto s1a = run_stage(quick_stage(Stage::S1a, 2), m, *data_, std::nullopt);
  const auto s1b = run_stage(quick_stage(Stage::S1b, 2), m, *data_, s1a.checkpoint);
  EXPECT_EQ(state_digest(s1b.checkpoint.state, "embed_head."),
            state_digest(s1a.checkpoint.state, "embed_head."));
  const auto s2 = run_stage(quick_stage(Stage::S2, 2), m, *data_, s1b.checkpoint);
  EXPECT_EQ(state_digest(s2.checkpoint.state, "backbone."), state_digest(s1b.checkpoint.state, "backbone."));
  EXPECT_EQ(state_digest(s2.checkpoint.state, "cls_head."), state_digest(s1b.checkpoint.state, "cls_head."));
  EXPECT_NE(state_digest(s2.checkpoint.state, "salnet."), parameter_digest(*CxrGazeModel(m), "salnet."));
  const auto s3 = run_stage(quick_stage(Stage::S3, 2), m, *data_, s2.checkpoint);
  EXPECT_EQ(state_digest(s3.checkpoint.state, "backbone."), state_digest(s1b.checkpoint.state, "backbone."));
  EXPECT_EQ(state_digest(s3.checkpoint.state, "salnet."), state_digest(s2.checkpoint.state, "salnet."));
  EXPECT_EQ(s3.checkpoint.meta.lineage, "S1a>S1b>S2>S3");
  EXPECT_EQ(s3.log.size(), 2u);
}

TEST_F(TrainerTest, BestCheckpointMatchesLoggedMinimum) {
  auto cfg = quick_stage(Stage::S1b, 4);
  cfg.from_scratch = true;
  cfg.val_fraction = 0.25;
  const auto data = prepare_stage_data(*records_, cfg, tiny_model_config());
  const auto r = run_stage(cfg, tiny_model_config(), data, std::nullopt);
  ASSERT_EQ(r.log.size(), 4u);
  double best = r.log[0].val_loss.value();
  for (const auto& e : r.log) best = std::min(best, e.val_loss.value());
  EXPECT_EQ(r.checkpoint.meta.best_val_metric, best);
  EXPECT_EQ(r.checkpoint.meta.monitored, "val_loss");
  EXPECT_EQ(r.log[r.best_index].val_loss.value(), best);
  EXPECT_EQ(r.checkpoint.meta.epoch, static_cast<int>(r.best_index) + 1);

  TempDir dir;
  write_training_log(dir.path() / "log.csv", r.log);
  std::ifstream in(dir.path() / "log.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,train_loss,val_loss,lr,seconds");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST_F(TrainerTest, HookCanStopTraining) {
  auto cfg = quick_stage(Stage::S1b, 10);
  cfg.from_scratch = true;
  StageHooks hooks;
  hooks.on_epoch_end = [](const EpochLog& e, CxrGazeModel&) { return e.epoch == 2; };
  const auto r = run_stage(cfg, tiny_model_config(), *data_, std::nullopt, hooks);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_TRUE(r.stopped_early);
}

TEST_F(TrainerTest, ReproducibleRunsMatch) {
  auto cfg = quick_stage(Stage::S1b, 1);
  cfg.from_scratch = true;
  cfg.seed = 17;
  const auto a = run_stage(cfg, tiny_model_config(), *data_, std::nullopt);
  const auto b = run_stage(cfg, tiny_model_config(), *data_, std::nullopt);
  EXPECT_EQ(a.log[0].train_loss, b.log[0].train_loss);
  EXPECT_EQ(state_digest(a.checkpoint.state), state_digest(b.checkpoint.state));
}

TEST_F(TrainerTest, OverfitsSixteenImages) {
  auto cfg = quick_stage(Stage::S1b, 200);
  cfg.from_scratch = true;
  const auto r = run_stage(cfg, tiny_model_config(), *data_, std::nullopt);
  EXPECT_LT(r.log.back().train_loss, 0.1 * r.log.front().train_loss);
}

TEST_F(TrainerTest, CheckpointRoundTrip) {
  auto cfg = quick_stage(Stage::S1b, 1);
  cfg.from_scratch = true;
  const auto r = run_stage(cfg, tiny_model_config(), *data_, std::nullopt);
  TempDir dir;
  const auto path = dir.path() / "ck" / "s1b.ckpt";
  save_checkpoint(path, r.checkpoint);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  const auto back = load_checkpoint(path);
  EXPECT_EQ(state_digest(back.state), state_digest(r.checkpoint.state));
  EXPECT_EQ(back.meta.lineage, r.checkpoint.meta.lineage);
  EXPECT_EQ(back.meta.best_val_metric, r.checkpoint.meta.best_val_metric);
  EXPECT_EQ(back.meta.config_digest, tiny_model_config().digest());

  auto a = model_from_checkpoint(r.checkpoint);
  auto b = model_from_checkpoint(back);
  EXPECT_EQ(parameter_digest(*a), parameter_digest(*b));
  a->eval();
  b->eval();
  torch::NoGradGuard guard;
  auto probe = data_->train.images.narrow(0, 0, 4);
  EXPECT_EQ((a->forward_class_logits(probe) - b->forward_class_logits(probe)).abs().max().item<double>(), 0.0);
}

TEST_F(TrainerTest, CorruptArchivesAreRejected) {
  auto cfg = quick_stage(Stage::S1b, 1);
  cfg.from_scratch = true;
  const auto r = run_stage(cfg, tiny_model_config(), *data_, std::nullopt);
  TempDir dir;
  const auto path = dir.path() / "a.ckpt";
  save_checkpoint(path, r.checkpoint);
  const auto size = std::filesystem::file_size(path);

  std::filesystem::copy_file(path, dir.path() / "t.ckpt");
  std::filesystem::resize_file(dir.path() / "t.ckpt", size / 2);
  EXPECT_THROW(load_checkpoint(dir.path() / "t.ckpt"), IntegrityError);

  std::filesystem::copy_file(path, dir.path() / "c.ckpt");
  {
    std::fstream f(dir.path() / "c.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    char c = 0;
    f.read(&c, 1);
    f.seekp(static_cast<std::streamoff>(size / 2));
    c = static_cast<char>(c ^ 0x5a);
    f.write(&c, 1);
  }
  try {
    load_checkpoint(dir.path() / "c.ckpt");
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("digest mismatch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), DependencyError);
}

}  // namespace
}  // namespace cxrgaze
