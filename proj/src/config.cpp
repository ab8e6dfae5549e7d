// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cxrgaze/digest.hpp"
#include "cxrgaze/errors.hpp"

namespace cxrgaze {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::S1a: return "S1a";
    case Stage::S1b: return "S1b";
    case Stage::S2: return "S2";
    case Stage::S3: return "S3";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  if (text == "S1a" || text == "stage1a") return Stage::S1a;
  if (text == "S1b" || text == "stage1b") return Stage::S1b;
  if (text == "S2" || text == "stage2") return Stage::S2;
  if (text == "S3" || text == "stage3") return Stage::S3;
  throw ValidationError("unknown stage '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw ConfigError("config key '" + std::string(key) + "': invalid value '" + std::string(value) +
                    "' (" + std::string(why) + ")");
}

long long to_int(std::string_view key, std::string_view v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, v, "expected an integer");
  return out;
}

int to_positive_int(std::string_view key, std::string_view v) {
  const auto x = to_int(key, v);
  if (x < 1 || x > 1'000'000'000) bad_value(key, v, "expected a positive integer");
  return static_cast<int>(x);
}

double to_double(std::string_view key, std::string_view v) {
  std::string s(v);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "expected a number");
  }
  if (used != s.size() || !std::isfinite(out)) bad_value(key, v, "expected a number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "expected true/false");
}

std::vector<int> to_int_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  std::string item;
  std::istringstream in{std::string(v)};
  while (std::getline(in, item, ',')) out.push_back(to_positive_int(key, trim(item)));
  if (out.empty()) bad_value(key, v, "expected a comma-separated list");
  return out;
}

template <typename Seq>
std::string join(const Seq& xs) {
  std::string s;
  for (auto x : xs) {
    if (!s.empty()) s += ',';
    s += std::to_string(x);
  }
  return s;
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

const std::vector<KeySpec> kKeys = {
    {"image_height", "model", "canonical image height in pixels (multiple of 32)"},
    {"image_width", "model", "canonical image width in pixels (multiple of 32)"},
    {"growth_rate", "model", "DenseNet growth rate"},
    {"block_config", "model", "DenseNet layers per dense block, e.g. 6,12,48,32"},
    {"init_features", "model", "DenseNet stem channels"},
    {"bn_size", "model", "DenseNet bottleneck multiplier"},
    {"embedding_dim", "model", "contrastive embedding width"},
    {"include_transition3", "model", "truncate after transition 3 (stride 32) instead of block 3"},
    {"unet_channels", "model", "five encoder widths of the saliency UNet"},
    {"fused_channels", "model", "bottleneck width after backbone fusion"},
    {"se_reduction", "model", "squeeze-and-excitation reduction ratio"},
    {"use_res_se", "model", "residual + SE encoder blocks (false: plain UNet)"},
    {"use_backbone_fusion", "model", "feed backbone features at the UNet bottleneck"},
    {"norm_groups", "model", "group-norm groups in the saliency UNet"},
    {"fusion_hidden", "model", "hidden width of the fusion classifier"},
    {"fusion_dropout", "model", "dropout rate of the fusion classifier"},
    {"epochs", "train", "maximum epochs per stage"},
    {"lr", "train", "Adam learning rate"},
    {"beta1", "train", "Adam beta1"},
    {"beta2", "train", "Adam beta2"},
    {"adam_eps", "train", "Adam epsilon"},
    {"batch_size", "train", "mini-batch size"},
    {"patience", "train", "early-stopping patience in epochs (0 disables)"},
    {"min_delta", "train", "minimum validation improvement that resets patience"},
    {"val_fraction", "train", "fraction of train carved out for validation when the manifest has none"},
    {"seed", "train", "random seed"},
    {"triplet_margin", "train", "triplet loss margin on unit embeddings"},
    {"finetune_all", "train", "S1b: finetune every backbone layer (false: head only)"},
    {"from_scratch", "train", "S1b: start from random weights instead of an S1a checkpoint"},
    {"reproducible", "train", "single-threaded deterministic execution"},
};

}  // namespace

const std::vector<KeySpec>& config_keys() { return kKeys; }

void apply_setting(ModelConfig& m, StageConfig& s, std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  const std::string_view v = value;
  auto& b = m.backbone;
  auto& u = m.salnet;
  if (key == "image_height") m.image_height = to_positive_int(key, v);
  else if (key == "image_width") m.image_width = to_positive_int(key, v);
  else if (key == "growth_rate") b.growth_rate = to_positive_int(key, v);
  else if (key == "block_config") {
    b.block_config = to_int_list(key, v);
    if (b.block_config.size() != 4) bad_value(key, v, "expected four blocks");
  } else if (key == "init_features") b.init_features = to_positive_int(key, v);
  else if (key == "bn_size") b.bn_size = to_positive_int(key, v);
  else if (key == "embedding_dim") b.embedding_dim = to_positive_int(key, v);
  else if (key == "include_transition3") b.include_transition3 = to_bool(key, v);
  else if (key == "unet_channels") {
    const auto xs = to_int_list(key, v);
    if (xs.size() != 5) bad_value(key, v, "expected five widths");
    std::copy(xs.begin(), xs.end(), u.channels.begin());
  } else if (key == "fused_channels") u.fused_channels = to_positive_int(key, v);
  else if (key == "se_reduction") u.se_reduction = to_positive_int(key, v);
  else if (key == "use_res_se") u.use_res_se = to_bool(key, v);
  else if (key == "use_backbone_fusion") u.use_backbone_fusion = to_bool(key, v);
  else if (key == "norm_groups") u.norm_groups = to_positive_int(key, v);
  else if (key == "fusion_hidden") m.fusion.hidden_dim = to_positive_int(key, v);
  else if (key == "fusion_dropout") {
    m.fusion.dropout = to_double(key, v);
    if (m.fusion.dropout < 0 || m.fusion.dropout >= 1) bad_value(key, v, "expected [0,1)");
  } else if (key == "epochs") s.epochs = to_positive_int(key, v);
  else if (key == "lr") {
    s.lr = to_double(key, v);
    if (!(s.lr > 0)) bad_value(key, v, "must be positive");
  } else if (key == "beta1") s.beta1 = to_double(key, v);
  else if (key == "beta2") s.beta2 = to_double(key, v);
  else if (key == "adam_eps") s.adam_eps = to_double(key, v);
  else if (key == "batch_size") s.batch_size = to_positive_int(key, v);
  else if (key == "patience") {
    const auto p = to_int(key, v);
    if (p < 0) bad_value(key, v, "must be >= 0");
    s.patience = static_cast<int>(p);
  } else if (key == "min_delta") s.min_delta = to_double(key, v);
  else if (key == "val_fraction") {
    s.val_fraction = to_double(key, v);
    if (s.val_fraction < 0 || s.val_fraction >= 1) bad_value(key, v, "expected [0,1)");
  } else if (key == "seed") {
    const auto x = to_int(key, v);
    if (x < 0) bad_value(key, v, "must be >= 0");
    s.seed = static_cast<std::uint64_t>(x);
  } else if (key == "triplet_margin") {
    s.triplet_margin = to_double(key, v);
    if (!(s.triplet_margin > 0)) bad_value(key, v, "must be positive");
  } else if (key == "finetune_all") s.finetune_all = to_bool(key, v);
  else if (key == "from_scratch") s.from_scratch = to_bool(key, v);
  else if (key == "reproducible") s.reproducible = to_bool(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

void load_config_file(const std::filesystem::path& path, ModelConfig& model, StageConfig& stage) {
  std::ifstream in(path);
  if (!in) throw DependencyError("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& [k, v] : parse_key_values(ss.str())) apply_setting(model, stage, k, v);
}

std::string stage_config_text(const StageConfig& s) {
  std::ostringstream o;
  o << "stage=" << to_string(s.stage) << '\n'
    << "epochs=" << s.epochs << '\n'
    << "lr=" << fmt_double(s.lr) << '\n'
    << "beta1=" << fmt_double(s.beta1) << '\n'
    << "beta2=" << fmt_double(s.beta2) << '\n'
    << "adam_eps=" << fmt_double(s.adam_eps) << '\n'
    << "batch_size=" << s.batch_size << '\n'
    << "patience=" << s.patience << '\n'
    << "min_delta=" << fmt_double(s.min_delta) << '\n'
    << "val_fraction=" << fmt_double(s.val_fraction) << '\n'
    << "seed=" << s.seed << '\n'
    << "triplet_margin=" << fmt_double(s.triplet_margin) << '\n'
    << "finetune_all=" << (s.finetune_all ? "true" : "false") << '\n'
    << "from_scratch=" << (s.from_scratch ? "true" : "false") << '\n'
    << "reproducible=" << (s.reproducible ? "true" : "false") << '\n';
  return o.str();
}

std::string config_keys_help() {
  std::ostringstream o;
  o << "Config keys (file 'key = value' lines or --set key=value):\n";
  for (const auto& k : kKeys) {
    o << "  " << k.name;
    for (std::size_t i = k.name.size(); i < 22; ++i) o << ' ';
    o << '[' << k.section << "] " << k.help << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// ModelConfig

int BackboneConfig::feature_channels() const {
  int c = init_features;
  for (int i = 0; i < 3; ++i) {
    c += block_config[i] * growth_rate;
    if (i < 2 || include_transition3) c /= 2;
  }
  return c;
}

int BackboneConfig::final_channels() const {
  int c = init_features;
  for (int i = 0; i < 4; ++i) {
    c += block_config[i] * growth_rate;
    if (i < 3) c /= 2;
  }
  return c;
}

namespace {

std::string frame_text(const ModelConfig& m) {
  std::ostringstream o;
  o << "image_height=" << m.image_height << '\n' << "image_width=" << m.image_width << '\n';
  return o.str();
}

std::string backbone_text(const BackboneConfig& b) {
  std::ostringstream o;
  o << "growth_rate=" << b.growth_rate << '\n'
    << "block_config=" << join(b.block_config) << '\n'
    << "init_features=" << b.init_features << '\n'
    << "bn_size=" << b.bn_size << '\n'
    << "embedding_dim=" << b.embedding_dim << '\n'
    << "include_transition3=" << (b.include_transition3 ? "true" : "false") << '\n';
  return o.str();
}

std::string salnet_text(const SaliencyNetConfig& u) {
  std::ostringstream o;
  o << "unet_channels=" << join(u.channels) << '\n'
    << "fused_channels=" << u.fused_channels << '\n'
    << "se_reduction=" << u.se_reduction << '\n'
    << "use_res_se=" << (u.use_res_se ? "true" : "false") << '\n'
    << "use_backbone_fusion=" << (u.use_backbone_fusion ? "true" : "false") << '\n'
    << "norm_groups=" << u.norm_groups << '\n';
  return o.str();
}

std::string fusion_text(const FusionConfig& f) {
  std::ostringstream o;
  o << "fusion_hidden=" << f.hidden_dim << '\n' << "fusion_dropout=" << fmt_double(f.dropout) << '\n';
  return o.str();
}

}  // namespace

std::string ModelConfig::to_text() const {
  return frame_text(*this) + backbone_text(backbone) + salnet_text(salnet) + fusion_text(fusion);
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig m;
  StageConfig ignored;
  for (const auto& [k, v] : parse_key_values(text)) apply_setting(m, ignored, k, v);
  m.validate();
  return m;
}

std::string ModelConfig::digest() const { return sha256_hex(to_text()); }

std::string ModelConfig::backbone_digest() const {
  return sha256_hex(frame_text(*this) + backbone_text(backbone));
}

std::string ModelConfig::salnet_digest() const {
  return sha256_hex(frame_text(*this) + backbone_text(backbone) + salnet_text(salnet));
}

void ModelConfig::validate() const {
  if (image_height % 32 != 0 || image_width % 32 != 0)
    throw ConfigError("image_height and image_width must be multiples of 32");
  if (backbone.block_config.size() != 4) throw ConfigError("block_config needs four blocks");
  for (int c : salnet.channels) {
    if (c % salnet.se_reduction != 0 && salnet.use_res_se)
      throw ConfigError("unet channel width " + std::to_string(c) +
                        " is not divisible by se_reduction " +
                        std::to_string(salnet.se_reduction));
    if (c % salnet.norm_groups != 0)
      throw ConfigError("unet channel width " + std::to_string(c) +
                        " is not divisible by norm_groups");
  }
  if (salnet.fused_channels % salnet.norm_groups != 0)
    throw ConfigError("fused_channels is not divisible by norm_groups");
}

}  // namespace cxrgaze
