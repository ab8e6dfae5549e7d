// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "cxrgaze/digest.hpp"
#include "cxrgaze/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxrgaze {
namespace {

constexpr char kMagic[8] = {'C', 'X', 'R', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size, const fs::path& path)
      : p_(data), end_(data + size), path_(path) {}
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p_, n);
    p_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n)
      throw IntegrityError("checkpoint " + path_.string() + " ends unexpectedly");
  }
  const char* p_;
  const char* end_;
  fs::path path_;
};

json meta_to_json(const CheckpointMeta& m) {
  return json{{"stage", std::string(to_string(m.stage))},
              {"epoch", m.epoch},
              {"best_val_metric", m.best_val_metric},
              {"monitored", m.monitored},
              {"config_digest", m.config_digest},
              {"model_config", m.model_config},
              {"stage_config", m.stage_config},
              {"seed", m.seed},
              {"rng_state", m.rng_state},
              {"lineage", m.lineage}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.stage = parse_stage(j.at("stage").get<std::string>());
  m.epoch = j.at("epoch").get<int>();
  m.best_val_metric = j.at("best_val_metric").get<double>();
  m.monitored = j.at("monitored").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.model_config = j.at("model_config").get<std::string>();
  m.stage_config = j.at("stage_config").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.rng_state = j.at("rng_state").get<std::string>();
  m.lineage = j.at("lineage").get<std::string>();
  return m;
}

}  // namespace

Checkpoint make_checkpoint(const CxrGazeModel& model, CheckpointMeta meta) {
  meta.model_config = model->config().to_text();
  meta.config_digest = model->config().digest();
  return Checkpoint{std::move(meta), snapshot_state(*model)};
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod(kVersion);
  const std::string meta = meta_to_json(checkpoint.meta).dump();
  w.pod<std::uint64_t>(meta.size());
  w.bytes(meta.data(), meta.size());
  w.pod<std::uint64_t>(checkpoint.state.size());
  for (const auto& [name, tensor] : checkpoint.state) {
    auto t = tensor.detach().contiguous().cpu();
    std::uint8_t dtype = 0;
    if (t.scalar_type() == torch::kFloat) dtype = 0;
    else if (t.scalar_type() == torch::kLong) dtype = 1;
    else throw ValidationError("checkpoint: unsupported dtype for '" + name + "'");
    w.str(name);
    w.pod(dtype);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.pod<std::int64_t>(d);
    w.pod<std::uint64_t>(t.nbytes());
    w.bytes(t.data_ptr(), t.nbytes());
  }
  Sha256 h;
  h.update(std::as_bytes(std::span(w.buffer().data(), w.buffer().size())));
  const auto digest = h.finish();
  w.bytes(digest.data(), digest.size());

  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DependencyError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t kDigest = 32;
  if (data.size() < sizeof kMagic + kDigest || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    throw IntegrityError("checkpoint " + path.string() + " is not a cxrgaze archive or is truncated");
  const std::size_t body = data.size() - kDigest;
  Sha256 h;
  h.update(std::as_bytes(std::span(data.data(), body)));
  const auto expected = h.finish();
  if (std::memcmp(expected.data(), data.data() + body, kDigest) != 0) {
    Sha256Bytes stored{};
    std::memcpy(stored.data(), data.data() + body, kDigest);
    throw IntegrityError("checkpoint " + path.string() + " digest mismatch (stored " +
                         to_hex(stored) + ", computed " + to_hex(expected) + ")");
  }

  Reader r(data.data(), body, path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (r.pod<std::uint32_t>() != kVersion)
    throw IntegrityError("checkpoint " + path.string() + " has an unsupported version");
  Checkpoint ck;
  try {
    ck.meta = meta_from_json(json::parse(r.str(r.pod<std::uint64_t>())));
  } catch (const json::exception& e) {
    throw IntegrityError("checkpoint " + path.string() + " metadata: " + e.what());
  }
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.pod<std::uint32_t>());
    const auto dtype = r.pod<std::uint8_t>();
    if (dtype > 1) throw IntegrityError("checkpoint tensor '" + name + "' has an unknown dtype");
    const auto rank = r.pod<std::uint32_t>();
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = r.pod<std::int64_t>();
    const auto nbytes = r.pod<std::uint64_t>();
    auto t = torch::empty(dims, dtype == 0 ? torch::kFloat : torch::kLong);
    if (t.nbytes() != nbytes)
      throw IntegrityError("checkpoint tensor '" + name + "' byte count does not match its shape");
    r.bytes(t.data_ptr(), nbytes);
    ck.state.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw IntegrityError("checkpoint " + path.string() + " has trailing bytes");
  return ck;
}

CxrGazeModel model_from_checkpoint(const Checkpoint& checkpoint) {
  CxrGazeModel model(ModelConfig::from_text(checkpoint.meta.model_config));
  restore_state(*model, checkpoint.state);
  return model;
}

void load_namespaces(CxrGazeModel& model, const Checkpoint& checkpoint,
                     const std::vector<std::string>& namespaces) {
  auto wanted = [&](const std::string& name) {
    const auto top = name.substr(0, name.find('.'));
    return std::find(namespaces.begin(), namespaces.end(), top) != namespaces.end();
  };
  torch::NoGradGuard guard;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    if (!wanted(name)) return;
    auto it = checkpoint.state.find(name);
    if (it == checkpoint.state.end())
      throw IntegrityError("checkpoint is missing tensor '" + name + "'");
    if (it->second.sizes() != dst.sizes() || it->second.scalar_type() != dst.scalar_type())
      throw ValidationError("checkpoint tensor '" + name + "' does not match the model architecture");
    dst.copy_(it->second);
  };
  for (auto& item : model->named_parameters()) copy(item.key(), item.value());
  for (auto& item : model->named_buffers()) copy(item.key(), item.value());
}

}  // namespace cxrgaze
