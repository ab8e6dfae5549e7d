// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Dataset ingestion: manifests, canonical image/saliency preprocessing,
// fixation rasterization, triplet sampling, and the synthetic generator.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cxrgaze/grid.hpp"

namespace cxrgaze {

inline constexpr int kCanonicalHeight = 640;
inline constexpr int kCanonicalWidth = 512;
inline constexpr int kNumClasses = 3;

enum class Label : int { normal = 0, heart_failure = 1, pneumonia = 2 };
enum class Split { train, val, test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);  // ValidationError on unknown names
Split parse_split(std::string_view text);

inline int index_of(Label label) { return static_cast<int>(label); }
Label label_from_index(int index);

struct ImageRecord {
  std::filesystem::path image_path;
  Label label = Label::normal;
  std::optional<std::filesystem::path> saliency_path;
  Split split = Split::train;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

// Single-channel image resampled to the canonical frame with intensities in [0,1].
struct CanonicalImage {
  GridF pixels;
};

// Nonnegative weights summing to one.
class SaliencyMap {
 public:
  SaliencyMap() = default;
  // Clamps nothing: throws ValidationError on negative/non-finite entries or zero mass.
  static SaliencyMap normalized(const GridD& weights);
  // Wraps weights that already form a distribution (checked to 1e-4).
  static SaliencyMap from_distribution(GridF weights);

  const GridF& weights() const { return weights_; }
  int height() const { return weights_.height(); }
  int width() const { return weights_.width(); }

 private:
  GridF weights_;
};

struct Fixation {
  double x = 0;         // column in the canonical frame
  double y = 0;         // row in the canonical frame
  double duration = 0;  // seconds
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

inline constexpr double kDefaultFixationSigma = 32.0;

// Reads a JSON-Lines manifest. Relative paths resolve against the manifest's directory.
std::vector<ImageRecord> load_manifest(const std::filesystem::path& manifest_file);
void write_manifest(const std::filesystem::path& manifest_file,
                    const std::vector<ImageRecord>& records);
SplitCounts count_splits(const std::vector<ImageRecord>& records);
std::vector<ImageRecord> select_split(const std::vector<ImageRecord>& records, Split split);

// Zero-pads symmetrically to the target aspect ratio (extra row/column at the
// bottom/right), resizes bilinearly, then min-max normalizes. Constant inputs map to zeros.
CanonicalImage preprocess_image(const GridF& raw, int height = kCanonicalHeight,
                                int width = kCanonicalWidth);

// Same geometry as preprocess_image, but renormalizes to unit mass instead of [0,1].
SaliencyMap preprocess_saliency(const GridD& raw, int height = kCanonicalHeight,
                                int width = kCanonicalWidth);

struct PadAmounts {
  int top = 0, bottom = 0, left = 0, right = 0;
};
PadAmounts aspect_padding(int height, int width, int target_height, int target_width);
GridF pad_zero(const GridF& raw, const PadAmounts& pad);

// Half-pixel-centre bilinear resampling with edge clamping.
GridF resize_bilinear(const GridF& src, int height, int width);
GridD resize_bilinear(const GridD& src, int height, int width);

SaliencyMap rasterize_fixations(const std::vector<Fixation>& fixations,
                                double sigma = kDefaultFixationSigma,
                                int height = kCanonicalHeight, int width = kCanonicalWidth);

std::vector<Triplet> sample_triplet_indices(const std::vector<ImageRecord>& records,
                                            std::uint64_t rng_seed);

// Writes images/, saliency/ and manifest.jsonl under out_dir; returns the manifest path.
std::filesystem::path generate_synthetic_dataset(std::size_t n, std::uint64_t rng_seed,
                                                 const std::filesystem::path& out_dir);

// Region carrying the class evidence in a synthetic image (canonical 640x512 frame).
struct SyntheticRegion {
  double row = 0;
  double col = 0;
  double radius = 0;
};
struct SyntheticSample {
  GridF image;  // values in [0,1]
  SaliencyMap saliency;
  Label label = Label::normal;
  SyntheticRegion region;
};
SyntheticSample render_synthetic_sample(std::size_t index, std::uint64_t rng_seed);

// Loads a PNG and applies preprocess_image / preprocess_saliency. Honors the
// CXRGAZE_CACHE directory when set.
CanonicalImage load_canonical_image(const std::filesystem::path& path, int height, int width);
SaliencyMap load_saliency_map(const std::filesystem::path& path, int height, int width);

// Writes a map as 16-bit PNG scaled so its maximum maps to 65535, plus
// "<png>.scale" holding the factor that reconstructs the original values.
void write_map_png(const std::filesystem::path& path, const GridF& map);
GridD read_map_png(const std::filesystem::path& path);

}  // namespace cxrgaze
