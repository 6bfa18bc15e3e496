#include "gsnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "gsnet/checkpoint.hpp"
#include "gsnet/error.hpp"
#include "gsnet/pgm.hpp"
#include "gsnet/random.hpp"

namespace gsnet {

void GrainGenConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("grain generator config: " + what); };
  if (image_size == 0) fail("image_size must be positive");
  if (num_levels == 0) fail("num_levels must be positive");
  if (seeds_per_level.size() != num_levels) {
    fail("seeds_per_level has " + std::to_string(seeds_per_level.size()) + " entries for " +
         std::to_string(num_levels) + " levels");
  }
  for (std::size_t i = 0; i < seeds_per_level.size(); ++i) {
    if (seeds_per_level[i] == 0) fail("seeds_per_level[" + std::to_string(i) + "] must be positive");
    if (i > 0 && seeds_per_level[i] <= seeds_per_level[i - 1]) fail("seeds_per_level must be strictly increasing");
  }
  if (!(boundary_width >= 0.0)) fail("boundary_width must be >= 0");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(gray_min >= 0.0 && gray_min <= gray_max && gray_max <= 1.0)) fail("need 0 <= gray_min <= gray_max <= 1");
}

LabeledImage generate_image(const GrainGenConfig& cfg, std::size_t level, std::uint64_t instance_seed) {
  cfg.validate();
  if (level >= cfg.num_levels) {
    throw InputError("generate_image: level " + std::to_string(level) + " out of range [0," +
                     std::to_string(cfg.num_levels) + ")");
  }
  Rng rng(mix_seed(mix_seed(cfg.rng_seed, level), instance_seed));
  const std::size_t n = cfg.seeds_per_level[level];
  const double side = static_cast<double>(cfg.image_size);
  std::vector<double> sx(n), sy(n), gray(n);
  for (std::size_t i = 0; i < n; ++i) {
    sx[i] = rng.uniform(0.0, side);
    sy[i] = rng.uniform(0.0, side);
    gray[i] = rng.uniform(cfg.gray_min, cfg.gray_max);
  }

  LabeledImage out;
  out.label = level;
  out.id = instance_seed;
  Image& img = out.image;
  img.height = img.width = cfg.image_size;
  img.pixels.resize(cfg.image_size * cfg.image_size);
  for (std::size_t r = 0; r < cfg.image_size; ++r) {
    for (std::size_t c = 0; c < cfg.image_size; ++c) {
      const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
      std::size_t a = 0, b = 0;
      double da = std::numeric_limits<double>::infinity(), db = da;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (px - sx[i]) * (px - sx[i]) + (py - sy[i]) * (py - sy[i]);
        if (d < da) {
          db = da;
          b = a;
          da = d;
          a = i;
        } else if (d < db) {
          db = d;
          b = i;
        }
      }
      double v = gray[a];
      if (n > 1) {
        // distance from the pixel centre to the bisector of seeds a and b
        const double sep = std::hypot(sx[a] - sx[b], sy[a] - sy[b]);
        if (sep > 0.0 && (db - da) / (2.0 * sep) < cfg.boundary_width) v = 0.0;
      }
      img.pixels[r * cfg.image_size + c] = v;
    }
  }
  if (cfg.noise_std > 0.0) {
    for (auto& p : img.pixels) p = std::clamp(p + cfg.noise_std * rng.normal(), 0.0, 1.0);
  }
  return out;
}

std::array<Image, 4> corner_crop(const Image& img, std::size_t crop) {
  if (crop == 0 || crop > std::min(img.height, img.width)) {
    throw InputError("corner_crop: crop " + std::to_string(crop) + " does not fit " + std::to_string(img.height) +
                     "x" + std::to_string(img.width));
  }
  auto take = [&](std::size_t r0, std::size_t c0) {
    Image out{crop, crop, {}};
    out.pixels.reserve(crop * crop);
    for (std::size_t r = 0; r < crop; ++r) {
      const auto* row = img.pixels.data() + (r0 + r) * img.width + c0;
      out.pixels.insert(out.pixels.end(), row, row + crop);
    }
    return out;
  };
  const std::size_t br = img.height - crop, bc = img.width - crop;
  return {take(0, 0), take(0, bc), take(br, 0), take(br, bc)};
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (std::size_t r = 0; r < img.height; ++r) {
    auto* row = out.pixels.data() + r * img.width;
    std::reverse(row, row + img.width);
  }
  return out;
}

Image flip_vertical(const Image& img) {
  Image out = img;
  for (std::size_t r = 0; r < img.height; ++r) {
    std::copy_n(img.pixels.data() + (img.height - 1 - r) * img.width, img.width, out.pixels.data() + r * img.width);
  }
  return out;
}

LabeledImage parity_flip(const LabeledImage& img) {
  LabeledImage out = img;
  out.image = img.id % 2 == 1 ? flip_horizontal(img.image) : flip_vertical(img.image);
  return out;
}

std::uint64_t content_hash(const Image& img) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t dims[2] = {img.height, img.width};
  feed(dims, sizeof dims);
  feed(img.pixels.data(), img.pixels.size() * sizeof(double));
  return h;
}

std::size_t remove_duplicates(std::vector<LabeledImage>& items) {
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;
  std::vector<LabeledImage> kept;
  kept.reserve(items.size());
  for (auto& item : items) {
    auto& bucket = seen[content_hash(item.image)];
    // hash collisions are resolved by exact comparison
    const bool dup = std::any_of(bucket.begin(), bucket.end(), [&](std::size_t k) { return kept[k].image == item.image; });
    if (dup) continue;
    bucket.push_back(kept.size());
    kept.push_back(std::move(item));
  }
  const std::size_t removed = items.size() - kept.size();
  items = std::move(kept);
  return removed;
}

std::vector<std::size_t> Dataset::level_counts(std::size_t num_levels) const {
  std::vector<std::size_t> counts(num_levels, 0);
  for (const auto& it : items) {
    if (it.label < num_levels) ++counts[it.label];
  }
  return counts;
}

DatasetSplit build_dataset(const GrainGenConfig& cfg, const BuildOptions& opts) {
  cfg.validate();
  if (!(opts.split > 0.0 && opts.split < 1.0)) throw ConfigError("build_dataset: split must lie in (0,1)");
  if (opts.n_per_level == 0) throw ConfigError("build_dataset: n_per_level must be positive");
  const std::size_t crop = opts.crop_size == 0 ? cfg.image_size : opts.crop_size;
  if (crop > cfg.image_size) throw ConfigError("build_dataset: crop_size exceeds image_size");

  std::vector<LabeledImage> train_base, val_base;
  for (std::size_t level = 0; level < cfg.num_levels; ++level) {
    std::vector<std::size_t> order(opts.n_per_level);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(cfg.rng_seed ^ 0x5A17ULL, level));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(opts.split * static_cast<double>(opts.n_per_level)));
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto img = generate_image(cfg, level, order[k]);
      (k < n_train ? train_base : val_base).push_back(std::move(img));
    }
  }

  std::uint64_t next_id = 0;
  auto crop_all = [&](const std::vector<LabeledImage>& base) {
    std::vector<LabeledImage> out;
    for (const auto& b : base) {
      for (auto& piece : corner_crop(b.image, crop)) out.push_back({std::move(piece), b.label, next_id++});
    }
    return out;
  };

  DatasetSplit result;
  result.train.items = crop_all(train_base);
  if (opts.augment) {
    const std::size_t n = result.train.items.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto flipped = parity_flip(result.train.items[i]);
      flipped.id = next_id++;
      result.train.items.push_back(std::move(flipped));
    }
  }
  result.val.items = crop_all(val_base);

  // one pass over both splits so a validation copy of a training image is also dropped
  std::vector<LabeledImage> all = std::move(result.train.items);
  const std::size_t n_train_items = all.size();
  all.insert(all.end(), std::make_move_iterator(result.val.items.begin()), std::make_move_iterator(result.val.items.end()));
  std::vector<bool> is_train(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) is_train[i] = i < n_train_items;
  std::unordered_map<std::uint64_t, bool> split_of;
  for (std::size_t i = 0; i < all.size(); ++i) split_of[all[i].id] = is_train[i];
  result.duplicates_removed = remove_duplicates(all);
  result.train.items.clear();
  result.val.items.clear();
  for (auto& it : all) (split_of[it.id] ? result.train.items : result.val.items).push_back(std::move(it));
  return result;
}

namespace {

std::string image_name(std::uint64_t id) {
  std::string digits = std::to_string(id);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "images/" + digits + ".pgm";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::filesystem::path write_dataset(const DatasetSplit& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  std::string manifest = "id,path,label,split\n";
  auto emit = [&](const Dataset& d, const char* split) {
    for (const auto& it : d.items) {
      const std::string rel = image_name(it.id);
      write_pgm(dir / rel, quantize16(it.image.height, it.image.width, it.image.pixels));
      manifest += std::to_string(it.id) + "," + rel + "," + std::to_string(it.label) + "," + split + "\n";
    }
  };
  emit(data.train, "train");
  emit(data.val, "val");
  const auto path = dir / kManifestName;
  write_file_atomic(path, manifest);
  return path;
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "id,path,label,split") {
    throw IoError(path.string() + ": unexpected manifest header");
  }
  DatasetSplit out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4 || (f[3] != "train" && f[3] != "val")) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    LabeledImage item;
    try {
      item.id = std::stoull(f[0]);
      item.label = std::stoull(f[2]);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad integer field");
    }
    const auto img = read_pgm(dir / f[1]);
    item.image = {img.height, img.width, dequantize(img)};
    (f[3] == "train" ? out.train : out.val).items.push_back(std::move(item));
  }
  return out;
}

void quantize_in_place(Dataset& data) {
  for (auto& it : data.items) {
    it.image.pixels = dequantize(quantize16(it.image.height, it.image.width, it.image.pixels));
  }
}

Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("make_batch: empty index list");
  const auto& first = data.items.at(indices[0]).image;
  const std::size_t h = first.height, w = first.width;
  std::vector<double> buf;
  buf.reserve(indices.size() * h * w);
  for (auto i : indices) {
    const auto& img = data.items.at(i).image;
    if (img.height != h || img.width != w) throw DimensionError("make_batch: images of different sizes");
    buf.insert(buf.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor::from_data({indices.size(), 1, h, w}, std::move(buf));
}

std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(data.items.at(i).label);
  return out;
}

}  // namespace gsnet
