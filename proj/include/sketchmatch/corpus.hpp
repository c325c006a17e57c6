#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sketchmatch/image.hpp"
#include "sketchmatch/rng.hpp"

namespace sketchmatch {

struct SampleRecord {
  std::string path;  // relative to the manifest directory
  Modality modality = Modality::sketch;
  int category_id = 0;
  int instance_id = 0;  // globally unique; a sketch and its photo share one
  std::string split;    // "train" or "test"
};

// The manifest is the single source of truth; modules consume it rather than
// scanning directories.
struct Corpus {
  std::string root;
  std::vector<SampleRecord> records;

  // Rejects broken pairing: every sketch instance needs a paired photo and
  // every category holding sketches needs at least one photo.
  void validate() const;

  std::vector<SampleRecord> select(Modality m, const std::string& split) const;
  std::vector<int> categories(const std::string& split) const;
  const SampleRecord* find_photo(int instance_id) const;
  Image load_image(const SampleRecord& rec) const;  // grayscale -> 3 channels
};

Corpus load_manifest(const std::string& manifest_path);
void write_manifest(const Corpus& corpus, const std::string& manifest_path);

// Category-level partition; no category straddles the splits. Fractions that
// would empty either side are rejected.
std::pair<std::vector<int>, std::vector<int>> split_zero_shot(
    std::vector<int> categories, double train_fraction, std::uint64_t seed);

// Parametric outline family with per-instance jitter; one family per
// category (cycled), giving category-level structure plus instance-level
// variation.
struct ShapeSpec {
  int family = 0;
  double p1 = 0.3, p2 = 0.2, p3 = 0.1;
  double rotation = 0.0, cx = 0.5, cy = 0.5, scale = 1.0;
};

bool shape_inside(const ShapeSpec& s, double x, double y);
ShapeSpec category_shape(std::uint64_t seed, int category_id);
ShapeSpec jitter_shape(const ShapeSpec& base, Rng& rng);

Image render_photo(const ShapeSpec& shape, std::size_t size, Rng& rng);
Image render_sketch(const ShapeSpec& shape, std::size_t size, Rng& rng);

struct GenParams {
  std::size_t n_categories = 12;
  std::size_t pairs_per_category = 10;
  std::size_t image_size = 64;
  std::uint64_t seed = 7;
  double train_fraction = 2.0 / 3.0;
};

// Renders the corpus under out_dir (photos/, sketches/) and writes
// out_dir/manifest.tsv. Fully determined by (params, seed).
Corpus generate_corpus(const GenParams& params, const std::string& out_dir);

}  // namespace sketchmatch
