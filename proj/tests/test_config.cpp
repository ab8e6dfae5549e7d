// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "cxrgaze/config.hpp"
#include "cxrgaze/errors.hpp"
#include "test_support.hpp"

namespace cxrgaze {
namespace {

TEST(Config, DefaultsMatchTheTrainingRecipe) {
  StageConfig s;
  EXPECT_EQ(s.epochs, 50);
  EXPECT_DOUBLE_EQ(s.lr, 1e-4);
  EXPECT_DOUBLE_EQ(s.beta1, 0.9);
  EXPECT_DOUBLE_EQ(s.beta2, 0.999);
  EXPECT_DOUBLE_EQ(s.adam_eps, 1e-8);
  EXPECT_EQ(s.batch_size, 8);
  EXPECT_EQ(s.patience, 10);
  EXPECT_DOUBLE_EQ(s.val_fraction, 0.1);
  ModelConfig m;
  EXPECT_EQ(m.image_height, 640);
  EXPECT_EQ(m.image_width, 512);
  EXPECT_EQ(m.backbone.feature_channels(), 896);
  EXPECT_EQ(m.backbone.final_channels(), 1920);
  EXPECT_EQ(m.backbone.feature_stride(), 32);
}

TEST(Config, ParsesKeyValuesWithComments) {
  const auto kv = parse_key_values("# header\n epochs = 3 \n\nlr=0.01 # trailing\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0].first, "epochs");
  EXPECT_EQ(kv[0].second, "3");
  EXPECT_EQ(kv[1].first, "lr");
  EXPECT_EQ(kv[1].second, "0.01");
}

TEST(Config, MalformedLineReportsLineNumber) {
  try {
    parse_key_values("epochs = 3\nthis line has no equals\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeyNamesTheKey) {
  ModelConfig m;
  StageConfig s;
  try {
    apply_setting(m, s, "learning_rate", "0.1");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
}

TEST(Config, BadValueNamesTheKey) {
  ModelConfig m;
  StageConfig s;
  try {
    apply_setting(m, s, "epochs", "many");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
  }
  EXPECT_THROW(apply_setting(m, s, "use_res_se", "maybe"), ConfigError);
  EXPECT_THROW(apply_setting(m, s, "unet_channels", "1,2,3"), ConfigError);
}

TEST(Config, EveryDocumentedKeyIsAccepted) {
  const std::map<std::string, std::string> sample = {
      {"image_height", "320"}, {"image_width", "256"}, {"growth_rate", "32"},
      {"block_config", "6,12,48,32"}, {"init_features", "64"}, {"bn_size", "4"},
      {"embedding_dim", "128"}, {"include_transition3", "true"},
      {"unet_channels", "32,64,128,256,512"}, {"fused_channels", "1024"},
      {"se_reduction", "16"}, {"use_res_se", "true"}, {"use_backbone_fusion", "false"},
      {"norm_groups", "8"}, {"fusion_hidden", "256"}, {"fusion_dropout", "0.3"},
      {"epochs", "7"}, {"lr", "0.001"}, {"beta1", "0.8"}, {"beta2", "0.99"},
      {"adam_eps", "1e-7"}, {"batch_size", "4"}, {"patience", "0"}, {"min_delta", "0"},
      {"val_fraction", "0.2"}, {"seed", "12"}, {"triplet_margin", "0.3"},
      {"finetune_all", "false"}, {"from_scratch", "true"}, {"reproducible", "false"}};
  ModelConfig m;
  StageConfig s;
  for (const auto& key : config_keys()) {
    auto it = sample.find(std::string(key.name));
    ASSERT_NE(it, sample.end()) << "no sample value for key " << key.name;
    EXPECT_NO_THROW(apply_setting(m, s, key.name, it->second)) << key.name;
    EXPECT_NE(config_keys_help().find(std::string(key.name)), std::string::npos);
  }
  EXPECT_EQ(m.image_height, 320);
  EXPECT_FALSE(m.salnet.use_backbone_fusion);
  EXPECT_EQ(s.epochs, 7);
  EXPECT_EQ(s.seed, 12u);
  EXPECT_FALSE(s.reproducible);
}

TEST(Config, FileOverridesDefaults) {
  testing::TempDir dir;
  const auto path = dir.path() / "c.cfg";
  std::ofstream(path) << "epochs = 2\nunet_channels = 16,32,64,128,256\n";
  ModelConfig m;
  StageConfig s;
  load_config_file(path, m, s);
  EXPECT_EQ(s.epochs, 2);
  EXPECT_EQ(m.salnet.channels[0], 16);
  EXPECT_THROW(load_config_file(dir.path() / "missing.cfg", m, s), DependencyError);
}

TEST(Config, ModelTextRoundTripAndDigests) {
  auto m = testing::tiny_model_config();
  const auto back = ModelConfig::from_text(m.to_text());
  EXPECT_EQ(back.to_text(), m.to_text());
  EXPECT_EQ(back.digest(), m.digest());
  auto changed = m;
  changed.fusion.hidden_dim = 64;
  EXPECT_NE(changed.digest(), m.digest());
  EXPECT_EQ(changed.backbone_digest(), m.backbone_digest());
  EXPECT_EQ(changed.salnet_digest(), m.salnet_digest());
  changed.salnet.se_reduction = 2;
  EXPECT_NE(changed.salnet_digest(), m.salnet_digest());
  EXPECT_EQ(changed.backbone_digest(), m.backbone_digest());
}

TEST(Config, ValidationCatchesIncompatibleWidths) {
  ModelConfig m;
  m.image_height = 100;
  EXPECT_THROW(m.validate(), ConfigError);
  ModelConfig se;
  se.salnet.channels = {24, 64, 128, 256, 512};
  EXPECT_THROW(se.validate(), ConfigError);
  se.salnet.use_res_se = false;
  EXPECT_NO_THROW(se.validate());
}

TEST(Config, StageNames) {
  EXPECT_EQ(parse_stage("S2"), Stage::S2);
  EXPECT_EQ(parse_stage("stage1b"), Stage::S1b);
  EXPECT_THROW(parse_stage("S4"), ValidationError);
}

}  // namespace
}  // namespace cxrgaze
