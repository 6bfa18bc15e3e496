#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gsnet/tensor.hpp"

namespace gsnet {

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major, values in [0,1]

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const Image&) const = default;
};

struct LabeledImage {
  Image image;
  std::size_t label = 0;
  std::uint64_t id = 0;
};

struct GrainGenConfig {
  std::size_t image_size = 32;
  std::size_t num_levels = 4;
  std::vector<std::size_t> seeds_per_level{8, 16, 32, 64};
  double boundary_width = 0.5;  // pixels from a cell edge painted dark
  double noise_std = 0.03;
  double gray_min = 0.35;
  double gray_max = 1.0;
  std::uint64_t rng_seed = 7;

  // Throws ConfigError on the first violated constraint.
  void validate() const;
};

// Voronoi metallograph: per-cell gray, dark boundaries, additive Gaussian noise.
LabeledImage generate_image(const GrainGenConfig& cfg, std::size_t level, std::uint64_t instance_seed);

// Top-left, top-right, bottom-left, bottom-right.
std::array<Image, 4> corner_crop(const Image& img, std::size_t crop);

// Odd id flips left-right, even id flips top-bottom.
LabeledImage parity_flip(const LabeledImage& img);

Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

// FNV-1a over the raw pixel bytes.
std::uint64_t content_hash(const Image& img);

// Keeps the first occurrence of every exact pixel buffer; returns the number removed.
std::size_t remove_duplicates(std::vector<LabeledImage>& items);

struct Dataset {
  std::vector<LabeledImage> items;

  std::size_t size() const { return items.size(); }
  std::vector<std::size_t> level_counts(std::size_t num_levels) const;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  std::size_t duplicates_removed = 0;
};

struct BuildOptions {
  std::size_t n_per_level = 10;
  double split = 0.8;        // training fraction, per level
  std::size_t crop_size = 0; // 0 means image_size
  bool augment = true;       // add parity-flipped copies to the training split
};

// Pipeline: generate -> stratified split -> corner crops -> parity flips
// (training only, added as new ids) -> exact-duplicate removal.
DatasetSplit build_dataset(const GrainGenConfig& cfg, const BuildOptions& opts);

inline constexpr const char* kManifestName = "manifest.csv";

// Writes images/<id>.pgm (16-bit) and manifest.csv under dir. Returns the manifest path.
std::filesystem::path write_dataset(const DatasetSplit& data, const std::filesystem::path& dir);

// Reads a dataset written by write_dataset. Pixels come back 16-bit quantized.
DatasetSplit load_dataset(const std::filesystem::path& dir);

// Quantizes pixels to the 16-bit grid used on disk so in-memory and loaded data agree.
void quantize_in_place(Dataset& data);

// Stacks the selected items into [B,1,H,W].
Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices);
std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace gsnet
