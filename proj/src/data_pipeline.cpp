// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "json.hpp"

#include "cxrgaze/digest.hpp"
#include "cxrgaze/log.hpp"
#include "cxrgaze/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxrgaze {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::normal: return "normal";
    case Label::heart_failure: return "heart_failure";
    case Label::pneumonia: return "pneumonia";
  }
  return "?";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::normal;
  if (text == "heart_failure" || text == "chf") return Label::heart_failure;
  if (text == "pneumonia") return Label::pneumonia;
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

Label label_from_index(int index) {
  if (index < 0 || index >= kNumClasses)
    throw ValidationError("label index out of range: " + std::to_string(index));
  return static_cast<Label>(index);
}

// ---------------------------------------------------------------------------
// SaliencyMap

SaliencyMap SaliencyMap::normalized(const GridD& weights) {
  double total = 0.0;
  for (double v : weights.values()) {
    if (!std::isfinite(v)) throw ValidationError("saliency map has a non-finite entry");
    if (v < 0) throw ValidationError("saliency map has a negative entry");
    total += v;
  }
  if (!(total > 0)) throw ValidationError("saliency map has zero mass");
  GridF out(weights.height(), weights.width());
  auto dst = out.values();
  auto src = weights.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i] / total);
  SaliencyMap map;
  map.weights_ = std::move(out);
  return map;
}

SaliencyMap SaliencyMap::from_distribution(GridF weights) {
  double total = 0.0;
  for (float v : weights.values()) {
    if (!std::isfinite(v) || v < 0) throw ValidationError("saliency map entries must be >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-4)
    throw ValidationError("saliency map does not sum to 1 (sum=" + std::to_string(total) + ")");
  SaliencyMap map;
  map.weights_ = std::move(weights);
  return map;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ImageRecord> load_manifest(const fs::path& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw DependencyError("manifest not found: " + manifest_file.string());
  const fs::path base = manifest_file.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  std::vector<ImageRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!row.is_object()) throw ParseError("record is not a JSON object", lineno);
    auto get_string = [&](const char* key) -> std::string {
      auto it = row.find(key);
      if (it == row.end() || !it->is_string())
        throw ParseError(std::string("missing or non-string key '") + key + "'", lineno);
      return it->get<std::string>();
    };

    ImageRecord rec;
    const std::string image = get_string("image_path");
    rec.image_path = resolve(image);
    try {
      rec.label = parse_label(get_string("label"));
      rec.split = parse_split(get_string("split"));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (auto it = row.find("saliency_path"); it != row.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError("saliency_path must be a string or null", lineno);
      rec.saliency_path = resolve(it->get<std::string>());
    }
    if (!seen.insert(image).second)
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate image_path '" +
                            image + "'");
    records.push_back(std::move(rec));
  }
  const auto counts = count_splits(records);
  log::info("manifest " + manifest_file.string() + ": train=" + std::to_string(counts.train) +
            " val=" + std::to_string(counts.val) + " test=" + std::to_string(counts.test));
  return records;
}

void write_manifest(const fs::path& manifest_file, const std::vector<ImageRecord>& records) {
  std::ofstream out(manifest_file, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + manifest_file.string());
  // Paths under the manifest's directory are stored relative so the dataset can be moved.
  const fs::path base = fs::absolute(manifest_file).parent_path().lexically_normal();
  auto rel = [&](const fs::path& p) {
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path r = abs.lexically_relative(base);
    if (r.empty() || *r.begin() == "..") return abs.generic_string();
    return r.generic_string();
  };
  for (const auto& r : records) {
    json row;
    row["image_path"] = rel(r.image_path);
    row["label"] = std::string(to_string(r.label));
    row["saliency_path"] = r.saliency_path ? json(rel(*r.saliency_path)) : json(nullptr);
    row["split"] = std::string(to_string(r.split));
    out << row.dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + manifest_file.string());
}

SplitCounts count_splits(const std::vector<ImageRecord>& records) {
  SplitCounts c;
  for (const auto& r : records) {
    switch (r.split) {
      case Split::train: ++c.train; break;
      case Split::val: ++c.val; break;
      case Split::test: ++c.test; break;
    }
  }
  return c;
}

std::vector<ImageRecord> select_split(const std::vector<ImageRecord>& records, Split split) {
  std::vector<ImageRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const ImageRecord& r) { return r.split == split; });
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

PadAmounts aspect_padding(int height, int width, int target_height, int target_width) {
  if (height < 1 || width < 1) throw ShapeError("image must be at least 1x1");
  PadAmounts pad;
  const long long h = height, w = width, th = target_height, tw = target_width;
  if (h * tw < w * th) {
    const long long padded = (w * th + tw - 1) / tw;
    const int extra = static_cast<int>(padded - h);
    pad.top = extra / 2;
    pad.bottom = extra - pad.top;
  } else if (h * tw > w * th) {
    const long long padded = (h * tw + th - 1) / th;
    const int extra = static_cast<int>(padded - w);
    pad.left = extra / 2;
    pad.right = extra - pad.left;
  }
  return pad;
}

template <typename T>
static Grid<T> pad_zero_impl(const Grid<T>& raw, const PadAmounts& pad) {
  Grid<T> out(raw.height() + pad.top + pad.bottom, raw.width() + pad.left + pad.right, T{0});
  for (int r = 0; r < raw.height(); ++r)
    std::copy_n(&raw(r, 0), raw.width(), &out(r + pad.top, pad.left));
  return out;
}

GridF pad_zero(const GridF& raw, const PadAmounts& pad) { return pad_zero_impl(raw, pad); }

template <typename T>
static Grid<T> resize_bilinear_impl(const Grid<T>& src, int height, int width) {
  if (src.empty()) throw ShapeError("cannot resize an empty grid");
  if (height < 1 || width < 1) throw ShapeError("resize target must be at least 1x1");
  if (src.height() == height && src.width() == width) return src;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int src_n, int dst_n) {
    std::vector<Tap> t(static_cast<std::size_t>(dst_n));
    const double scale = static_cast<double>(src_n) / dst_n;
    for (int i = 0; i < dst_n; ++i) {
      double s = (i + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
      const int i0 = static_cast<int>(std::floor(s));
      t[i] = {i0, std::min(i0 + 1, src_n - 1), s - i0};
    }
    return t;
  };
  const auto ty = taps(src.height(), height);
  const auto tx = taps(src.width(), width);

  Grid<T> out(height, width);
  for (int r = 0; r < height; ++r) {
    const auto& y = ty[r];
    for (int c = 0; c < width; ++c) {
      const auto& x = tx[c];
      const double top = src(y.i0, x.i0) * (1 - x.f) + src(y.i0, x.i1) * x.f;
      const double bot = src(y.i1, x.i0) * (1 - x.f) + src(y.i1, x.i1) * x.f;
      out(r, c) = static_cast<T>(top * (1 - y.f) + bot * y.f);
    }
  }
  return out;
}

GridF resize_bilinear(const GridF& src, int height, int width) {
  return resize_bilinear_impl(src, height, width);
}
GridD resize_bilinear(const GridD& src, int height, int width) {
  return resize_bilinear_impl(src, height, width);
}

CanonicalImage preprocess_image(const GridF& raw, int height, int width) {
  if (raw.height() < 1 || raw.width() < 1) throw ShapeError("image must be at least 1x1");
  for (float v : raw.values())
    if (!std::isfinite(v)) throw ValidationError("image contains a non-finite value");

  const auto [raw_lo, raw_hi] = std::minmax_element(raw.raw().begin(), raw.raw().end());
  if (*raw_lo == *raw_hi) return CanonicalImage{GridF(height, width)};

  GridF resized =
      resize_bilinear(pad_zero(raw, aspect_padding(raw.height(), raw.width(), height, width)),
                      height, width);
  const auto [lo_it, hi_it] = std::minmax_element(resized.raw().begin(), resized.raw().end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(resized.raw().begin(), resized.raw().end(), 0.0f);
  } else {
    for (float& v : resized.raw())
      v = std::clamp(static_cast<float>((v - lo) / (hi - lo)), 0.0f, 1.0f);
  }
  return CanonicalImage{std::move(resized)};
}

SaliencyMap preprocess_saliency(const GridD& raw, int height, int width) {
  const auto pad = aspect_padding(raw.height(), raw.width(), height, width);
  GridD padded = pad_zero_impl(raw, pad);
  GridD resized = resize_bilinear(padded, height, width);
  for (double& v : resized.raw()) v = std::max(v, 0.0);
  return SaliencyMap::normalized(resized);
}

// ---------------------------------------------------------------------------
// Fixations

SaliencyMap rasterize_fixations(const std::vector<Fixation>& fixations, double sigma, int height,
                                int width) {
  if (fixations.empty()) throw ValidationError("fixation list is empty");
  if (!(sigma > 0)) throw ValidationError("fixation sigma must be positive");
  for (const auto& f : fixations) {
    if (!(f.duration > 0)) throw ValidationError("fixation duration must be positive");
    if (!(f.x >= 0 && f.x < width && f.y >= 0 && f.y < height))
      throw ValidationError("fixation outside the canonical frame");
  }
  // Canonical accumulation order makes the result independent of input order.
  auto sorted = fixations;
  std::sort(sorted.begin(), sorted.end(), [](const Fixation& a, const Fixation& b) {
    return std::tie(a.y, a.x, a.duration) < std::tie(b.y, b.x, b.duration);
  });

  GridD acc(height, width, 0.0);
  std::vector<double> gy(static_cast<std::size_t>(height)), gx(static_cast<std::size_t>(width));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const auto& f : sorted) {
    for (int r = 0; r < height; ++r) gy[r] = std::exp(-(r - f.y) * (r - f.y) * inv);
    for (int c = 0; c < width; ++c) gx[c] = std::exp(-(c - f.x) * (c - f.x) * inv);
    for (int r = 0; r < height; ++r) {
      const double wr = f.duration * gy[r];
      double* row = &acc(r, 0);
      for (int c = 0; c < width; ++c) row[c] += wr * gx[c];
    }
  }
  return SaliencyMap::normalized(acc);
}

// ---------------------------------------------------------------------------
// Triplets

std::vector<Triplet> sample_triplet_indices(const std::vector<ImageRecord>& records,
                                            std::uint64_t rng_seed) {
  std::array<std::vector<std::size_t>, kNumClasses> members;
  for (std::size_t i = 0; i < records.size(); ++i)
    members[index_of(records[i].label)].push_back(i);
  const auto present = std::count_if(members.begin(), members.end(),
                                     [](const auto& m) { return !m.empty(); });
  if (present < 2) throw ValidationError("triplet sampling needs at least two classes");

  std::array<std::vector<std::size_t>, kNumClasses> others;
  for (int c = 0; c < kNumClasses; ++c)
    for (int d = 0; d < kNumClasses; ++d)
      if (d != c) others[c].insert(others[c].end(), members[d].begin(), members[d].end());
  for (auto& o : others) std::sort(o.begin(), o.end());

  std::mt19937_64 rng(rng_seed);
  std::vector<Triplet> out;
  out.reserve(records.size());
  std::array<bool, kNumClasses> warned{};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int c = index_of(records[i].label);
    const auto& same = members[c];
    if (same.size() < 2) {
      if (!warned[c]) {
        log::warn("class '" + std::string(to_string(records[i].label)) +
                  "' has a single member; skipping it as anchor");
        warned[c] = true;
      }
      continue;
    }
    const auto self = static_cast<std::size_t>(
        std::lower_bound(same.begin(), same.end(), i) - same.begin());
    std::uniform_int_distribution<std::size_t> pick_pos(0, same.size() - 2);
    std::size_t k = pick_pos(rng);
    if (k >= self) ++k;
    std::uniform_int_distribution<std::size_t> pick_neg(0, others[c].size() - 1);
    out.push_back({i, same[k], others[c][pick_neg(rng)]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Soft indicator of the ellipse interior (1 inside, 0 outside).
double ellipse(double r, double c, double cr, double cc, double rr, double rc) {
  const double d = std::sqrt(((r - cr) / rr) * ((r - cr) / rr) + ((c - cc) / rc) * ((c - cc) / rc));
  return 1.0 - smoothstep(0.9, 1.1, d);
}

constexpr std::array<std::array<double, 2>, 4> kLungRegions = {{
    {190.0, 160.0}, {360.0, 160.0}, {190.0, 352.0}, {360.0, 352.0}}};

}  // namespace

SyntheticSample render_synthetic_sample(std::size_t index, std::uint64_t rng_seed) {
  const int H = kCanonicalHeight, W = kCanonicalWidth;
  std::mt19937_64 rng(rng_seed * 0x9E3779B97F4A7C15ULL + index * 0xBF58476D1CE4E5B9ULL + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SyntheticSample s;
  s.label = label_from_index(static_cast<int>(index % kNumClasses));

  const double gain = 1.0 + 0.05 * gauss(rng);
  struct Wave {
    double fr, fc, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves)
    w = {unif(rng) * 3.0 / H, unif(rng) * 3.0 / W, unif(rng) * 2 * std::numbers::pi, 0.02};

  GridD img(H, W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double v = 0.1 + 0.45 * ellipse(r, c, 320, 256, 300, 235);
      v -= 0.28 * ellipse(r, c, 270, 160, 190, 85);
      v -= 0.28 * ellipse(r, c, 270, 352, 190, 85);
      for (const auto& w : waves)
        v += w.amp * std::sin(2 * std::numbers::pi * (w.fr * r + w.fc * c) + w.phase);
      img(r, c) = v * gain;
    }
  }

  double sal_sigma = 40.0;
  switch (s.label) {
    case Label::normal:
      s.region = {320.0, 256.0, 140.0};
      sal_sigma = 140.0;
      break;
    case Label::heart_failure: {
      s.region = {430.0 + 12.0 * gauss(rng), 256.0 + 15.0 * gauss(rng), 55.0};
      const double sd = s.region.radius / 2.0;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          const double d2 = (r - s.region.row) * (r - s.region.row) +
                            (c - s.region.col) * (c - s.region.col);
          img(r, c) += 0.30 * std::exp(-d2 / (2 * sd * sd));
        }
      break;
    }
    case Label::pneumonia: {
      const auto& base = kLungRegions[static_cast<std::size_t>(unif(rng) * 4) % 4];
      s.region = {base[0] + 10.0 * gauss(rng), base[1] + 10.0 * gauss(rng), 50.0};
      const double period = 24.0;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          const double d = std::hypot(r - s.region.row, c - s.region.col) / s.region.radius;
          const double mask = std::exp(-d * d * d * d);
          img(r, c) += 0.18 * mask * std::sin(2 * std::numbers::pi * r / period) *
                       std::sin(2 * std::numbers::pi * c / period);
        }
      break;
    }
  }

  s.image = GridF(H, W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      s.image(r, c) = static_cast<float>(std::clamp(img(r, c) + 0.01 * gauss(rng), 0.0, 1.0));

  s.saliency = rasterize_fixations({{s.region.col, s.region.row, 1.0}}, sal_sigma, H, W);
  return s;
}

fs::path generate_synthetic_dataset(std::size_t n, std::uint64_t rng_seed, const fs::path& out_dir) {
  if (n < 3) throw ValidationError("synthetic dataset needs n >= 3");
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "saliency", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  std::vector<ImageRecord> records(n);
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticSample s = render_synthetic_sample(i, rng_seed);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu.png", i);
    const fs::path image_path = out_dir / "images" / (std::string("img_") + stem);
    const fs::path sal_path = out_dir / "saliency" / (std::string("sal_") + stem);

    Grid<std::uint16_t> q(s.image.height(), s.image.width());
    for (std::size_t k = 0; k < q.size(); ++k)
      q.raw()[k] = static_cast<std::uint16_t>(std::lround(s.image.raw()[k] * 65535.0));
    png::write_gray16(image_path, q);
    write_map_png(sal_path, s.saliency.weights());

    records[i] = {image_path, s.label, sal_path, Split::train};
    by_class[index_of(s.label)].push_back(i);
  }

  std::mt19937_64 rng(rng_seed ^ 0x5B1175ULL);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t count = members.size();
    const std::size_t n_test =
        n >= 30 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * count))) : 0;
    const std::size_t n_val = (count - n_test) / 10;
    for (std::size_t k = 0; k < count; ++k) {
      auto& rec = records[members[k]];
      rec.split = k < n_test ? Split::test : (k < n_test + n_val ? Split::val : Split::train);
    }
  }

  const fs::path manifest = out_dir / "manifest.jsonl";
  write_manifest(manifest, records);
  return manifest;
}

// ---------------------------------------------------------------------------
// File loading

namespace {

std::optional<fs::path> cache_entry(const fs::path& source, int height, int width,
                                    std::string_view kind) {
  const char* dir = std::getenv("CXRGAZE_CACHE");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  std::error_code ec;
  const auto abs = fs::absolute(source, ec);
  const auto size = fs::file_size(source, ec);
  if (ec) return std::nullopt;
  const auto mtime = fs::last_write_time(source, ec).time_since_epoch().count();
  std::ostringstream key;
  key << kind << '|' << abs.string() << '|' << size << '|' << mtime << '|' << height << 'x'
      << width;
  return fs::path(dir) / (sha256_hex(key.str()) + ".f32");
}

std::optional<GridF> cache_read(const std::optional<fs::path>& entry, int height, int width) {
  if (!entry) return std::nullopt;
  std::ifstream in(*entry, std::ios::binary);
  if (!in) return std::nullopt;
  GridF g(height, width);
  in.read(reinterpret_cast<char*>(g.raw().data()),
          static_cast<std::streamsize>(g.size() * sizeof(float)));
  if (!in || in.peek() != std::char_traits<char>::eof()) return std::nullopt;
  return g;
}

void cache_write(const std::optional<fs::path>& entry, const GridF& g) {
  if (!entry) return;
  std::error_code ec;
  fs::create_directories(entry->parent_path(), ec);
  const fs::path tmp = entry->string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return;
    out.write(reinterpret_cast<const char*>(g.raw().data()),
              static_cast<std::streamsize>(g.size() * sizeof(float)));
    if (!out) return;
  }
  fs::rename(tmp, *entry, ec);
}

}  // namespace

CanonicalImage load_canonical_image(const fs::path& path, int height, int width) {
  const auto entry = cache_entry(path, height, width, "image");
  if (auto hit = cache_read(entry, height, width)) return CanonicalImage{std::move(*hit)};

  const auto raw = png::read_gray(path);
  GridF g(raw.pixels.height(), raw.pixels.width());
  const float scale = raw.bit_depth == 8 ? 255.0f : 65535.0f;
  for (std::size_t k = 0; k < g.size(); ++k) g.raw()[k] = raw.pixels.raw()[k] / scale;
  CanonicalImage img = preprocess_image(g, height, width);
  cache_write(entry, img.pixels);
  return img;
}

SaliencyMap load_saliency_map(const fs::path& path, int height, int width) {
  const auto entry = cache_entry(path, height, width, "saliency");
  if (auto hit = cache_read(entry, height, width)) return SaliencyMap::from_distribution(*hit);
  SaliencyMap map = preprocess_saliency(read_map_png(path), height, width);
  cache_write(entry, map.weights());
  return map;
}

void write_map_png(const fs::path& path, const GridF& map) {
  double peak = 0.0;
  for (float v : map.values()) {
    if (!std::isfinite(v) || v < 0) throw ValidationError("map entries must be finite and >= 0");
    peak = std::max(peak, static_cast<double>(v));
  }
  Grid<std::uint16_t> q(map.height(), map.width(), 0);
  if (peak > 0)
    for (std::size_t k = 0; k < q.size(); ++k)
      q.raw()[k] = static_cast<std::uint16_t>(std::lround(map.raw()[k] / peak * 65535.0));
  png::write_gray16(path, q);

  std::ofstream side(path.string() + ".scale", std::ios::trunc);
  if (!side) throw IoError("cannot write scale sidecar for " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g\n", peak);
  side << buf;
}

GridD read_map_png(const fs::path& path) {
  const auto raw = png::read_gray(path);
  const double full = raw.bit_depth == 8 ? 255.0 : 65535.0;
  double scale = 1.0;
  if (std::ifstream side(path.string() + ".scale"); side) {
    if (!(side >> scale) || !std::isfinite(scale) || scale < 0)
      throw ValidationError("bad scale sidecar for " + path.string());
  }
  GridD g(raw.pixels.height(), raw.pixels.width());
  for (std::size_t k = 0; k < g.size(); ++k) g.raw()[k] = raw.pixels.raw()[k] / full * scale;
  return g;
}

}  // namespace cxrgaze
