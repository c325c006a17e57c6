#include "sketchmatch/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace sketchmatch {

namespace fs = std::filesystem;

void Corpus::validate() const {
  require(!records.empty(), "corpus: no records");
  std::set<int> photo_instances;
  std::set<int> photo_categories;
  for (const auto& r : records) {
    require(r.split == "train" || r.split == "test",
            "corpus: record '" + r.path + "' has unknown split '" + r.split + "'");
    if (r.modality == Modality::photo) {
      photo_instances.insert(r.instance_id);
      photo_categories.insert(r.category_id);
    }
  }
  for (const auto& r : records) {
    if (r.modality != Modality::sketch) continue;
    require(photo_instances.count(r.instance_id) > 0,
            "corpus: sketch instance " + std::to_string(r.instance_id) +
                " has no paired photo");
    require(photo_categories.count(r.category_id) > 0,
            "corpus: category " + std::to_string(r.category_id) + " has no photos");
  }
}

std::vector<SampleRecord> Corpus::select(Modality m, const std::string& split) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (r.modality == m && r.split == split) out.push_back(r);
  return out;
}

std::vector<int> Corpus::categories(const std::string& split) const {
  std::set<int> cats;
  for (const auto& r : records)
    if (r.split == split) cats.insert(r.category_id);
  return {cats.begin(), cats.end()};
}

const SampleRecord* Corpus::find_photo(int instance_id) const {
  for (const auto& r : records)
    if (r.modality == Modality::photo && r.instance_id == instance_id) return &r;
  return nullptr;
}

Image Corpus::load_image(const SampleRecord& rec) const {
  return with_channels(read_pnm((fs::path(root) / rec.path).string()), 3);
}

Corpus load_manifest(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  require(is.good(), "manifest: cannot open '" + manifest_path + "'");
  Corpus corpus;
  corpus.root = fs::path(manifest_path).parent_path().string();
  if (corpus.root.empty()) corpus.root = ".";
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!header_seen) {  // column header
      require(line == "path\tmodality\tcategory_id\tinstance_id\tsplit",
              "manifest: unexpected header in '" + manifest_path + "'");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string path, modality, cat, inst, split;
    require(std::getline(ss, path, '\t') && std::getline(ss, modality, '\t') &&
                std::getline(ss, cat, '\t') && std::getline(ss, inst, '\t') &&
                std::getline(ss, split, '\t'),
            "manifest: line " + std::to_string(lineno) + " is not 5 tab-separated fields");
    SampleRecord rec;
    rec.path = path;
    rec.modality = modality_from_name(modality);
    rec.category_id = std::stoi(cat);
    rec.instance_id = std::stoi(inst);
    rec.split = split;
    corpus.records.push_back(std::move(rec));
  }
  corpus.validate();
  return corpus;
}

void write_manifest(const Corpus& corpus, const std::string& manifest_path) {
  std::ofstream os(manifest_path);
  require(os.good(), "manifest: cannot open '" + manifest_path + "' for writing");
  os << "# sketchmatch-manifest v1\n";
  os << "path\tmodality\tcategory_id\tinstance_id\tsplit\n";
  for (const auto& r : corpus.records)
    os << r.path << "\t" << modality_name(r.modality) << "\t" << r.category_id << "\t"
       << r.instance_id << "\t" << r.split << "\n";
  require(os.good(), "manifest: write failed for '" + manifest_path + "'");
}

std::pair<std::vector<int>, std::vector<int>> split_zero_shot(
    std::vector<int> categories, double train_fraction, std::uint64_t seed) {
  require(categories.size() >= 2, "split: need at least 2 categories");
  const auto count = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(categories.size())));
  require(count >= 1 && count < categories.size(),
          "split: train fraction " + std::to_string(train_fraction) +
              " leaves one side empty for " + std::to_string(categories.size()) +
              " categories");
  std::sort(categories.begin(), categories.end());
  Rng rng(Rng::derive(seed, 0x5EED5ULL));
  rng.shuffle(categories);
  std::vector<int> train(categories.begin(), categories.begin() + count);
  std::vector<int> test(categories.begin() + count, categories.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

// ---------------------------------------------------------------------------
// Shape families
// ---------------------------------------------------------------------------

namespace {

constexpr int kFamilyCount = 12;

bool half_plane(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0;
}

}  // namespace

bool shape_inside(const ShapeSpec& s, double x, double y) {
  // Canvas -> canonical frame: translate, rotate, scale.
  const double tx = x - s.cx, ty = y - s.cy;
  const double c = std::cos(-s.rotation), sn = std::sin(-s.rotation);
  const double u = (tx * c - ty * sn) / s.scale;
  const double v = (tx * sn + ty * c) / s.scale;
  const double rho = std::sqrt(u * u + v * v);
  const double phi = std::atan2(v, u);
  switch (s.family) {
    case 0:  // ellipse
      return (u * u) / (s.p1 * s.p1) + (v * v) / (s.p2 * s.p2) <= 1.0;
    case 1:  // rectangle
      return std::fabs(u) <= s.p1 && std::fabs(v) <= s.p2;
    case 2: {  // isoceles triangle
      const double ax = 0, ay = s.p2, bx = -s.p1, by = -s.p2, cx = s.p1, cy = -s.p2;
      return half_plane(ax, ay, bx, by, u, v) && half_plane(bx, by, cx, cy, u, v) &&
             half_plane(cx, cy, ax, ay, u, v);
    }
    case 3:  // five-spike star
      return rho <= s.p2 + (s.p1 - s.p2) * (0.5 + 0.5 * std::cos(5.0 * phi));
    case 4:  // plus
      return (std::fabs(u) <= s.p2 && std::fabs(v) <= s.p1) ||
             (std::fabs(u) <= s.p1 && std::fabs(v) <= s.p2);
    case 5:  // annulus
      return rho <= s.p1 && rho >= s.p2;
    case 6:  // rhombus
      return std::fabs(u) / s.p1 + std::fabs(v) / s.p2 <= 1.0;
    case 7:  // seven-spike star
      return rho <= s.p2 + (s.p1 - s.p2) * (0.5 + 0.5 * std::cos(7.0 * phi));
    case 8: {  // capsule along the u axis
      const double cu = std::clamp(u, -s.p1, s.p1);
      const double du = u - cu;
      return du * du + v * v <= s.p2 * s.p2;
    }
    case 9: {  // crescent: disc minus an offset disc
      if (rho > s.p1) return false;
      const double du = u - s.p3, dv = v;
      return du * du + dv * dv >= s.p2 * s.p2;
    }
    case 10:  // T shape
      return (std::fabs(u) <= s.p1 && v >= 0.35 * s.p2 && v <= s.p2) ||
             (std::fabs(u) <= 0.3 * s.p1 && v >= -s.p2 && v <= 0.35 * s.p2);
    case 11:  // bowtie
      return std::fabs(u) <= s.p1 && std::fabs(v) <= std::fabs(u) * s.p2 / s.p1;
    default:
      fail("shape: unknown family " + std::to_string(s.family));
  }
}

ShapeSpec category_shape(std::uint64_t seed, int category_id) {
  Rng rng(Rng::derive(seed, 1000003ULL + static_cast<std::uint64_t>(category_id)));
  ShapeSpec s;
  s.family = category_id % kFamilyCount;
  switch (s.family) {
    case 0: s.p1 = rng.uniform(0.30, 0.36); s.p2 = rng.uniform(0.15, 0.21); break;
    case 1: s.p1 = rng.uniform(0.26, 0.34); s.p2 = rng.uniform(0.14, 0.20); break;
    case 2: s.p1 = rng.uniform(0.28, 0.36); s.p2 = rng.uniform(0.24, 0.32); break;
    case 3: s.p1 = rng.uniform(0.32, 0.38); s.p2 = rng.uniform(0.12, 0.16); break;
    case 4: s.p1 = rng.uniform(0.30, 0.36); s.p2 = rng.uniform(0.08, 0.12); break;
    case 5: s.p1 = rng.uniform(0.28, 0.34); s.p2 = rng.uniform(0.14, 0.18); break;
    case 6: s.p1 = rng.uniform(0.30, 0.36); s.p2 = rng.uniform(0.16, 0.22); break;
    case 7: s.p1 = rng.uniform(0.32, 0.38); s.p2 = rng.uniform(0.16, 0.20); break;
    case 8: s.p1 = rng.uniform(0.20, 0.26); s.p2 = rng.uniform(0.10, 0.14); break;
    case 9: s.p1 = rng.uniform(0.28, 0.34); s.p2 = rng.uniform(0.20, 0.26);
            s.p3 = rng.uniform(0.10, 0.16); break;
    case 10: s.p1 = rng.uniform(0.26, 0.32); s.p2 = rng.uniform(0.26, 0.34); break;
    case 11: s.p1 = rng.uniform(0.28, 0.34); s.p2 = rng.uniform(0.18, 0.26); break;
    default: break;
  }
  s.rotation = rng.uniform(-0.3, 0.3);
  return s;
}

ShapeSpec jitter_shape(const ShapeSpec& base, Rng& rng) {
  ShapeSpec s = base;
  s.p1 *= rng.uniform(0.92, 1.08);
  s.p2 *= rng.uniform(0.92, 1.08);
  s.p3 *= rng.uniform(0.92, 1.08);
  s.rotation += rng.uniform(-0.18, 0.18);
  s.scale = rng.uniform(0.85, 1.08);
  s.cx = 0.5 + rng.uniform(-0.05, 0.05);
  s.cy = 0.5 + rng.uniform(-0.05, 0.05);
  return s;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double c = v * s;
  const double hp = 6.0 * (h - std::floor(h));
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  rgb[0] = r + (v - c);
  rgb[1] = g + (v - c);
  rgb[2] = b + (v - c);
}

}  // namespace

Image render_photo(const ShapeSpec& shape, std::size_t size, Rng& rng) {
  Image img = Image::filled(size, size, 3, 0);
  // Shaded background gradient plus mild pixel noise.
  const double g0 = rng.uniform(0.62, 0.80);
  const double gx = rng.uniform(-0.15, 0.15);
  const double gy = rng.uniform(-0.15, 0.15);
  // Instance fill: hue from a fixed wheel, textured by a sine pattern.
  double fill[3];
  hsv_to_rgb(rng.uniform(0.0, 1.0), rng.uniform(0.55, 0.9), rng.uniform(0.22, 0.50), fill);
  const double tex_fx = rng.uniform(2.0, 6.0), tex_fy = rng.uniform(2.0, 6.0);
  const double tex_phase = rng.uniform(0.0, 6.28318);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
      const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
      const double noise = rng.uniform(-0.015, 0.015);
      if (shape_inside(shape, ux, uy)) {
        const double tex =
            1.0 + 0.10 * std::sin(6.28318 * (tex_fx * ux + tex_fy * uy) + tex_phase);
        for (std::size_t c = 0; c < 3; ++c)
          img.at(c, y, x) = static_cast<real>(
              std::clamp(fill[c] * tex + noise, 0.0, 1.0));
      } else {
        const double bg = std::clamp(g0 + gx * ux + gy * uy + noise, 0.0, 1.0);
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<real>(bg);
      }
    }
  }
  return img;
}

Image render_sketch(const ShapeSpec& shape, std::size_t size, Rng& rng) {
  Image img = Image::filled(size, size, 1, real(1));  // white paper
  // Hand-wobble: a smooth displacement field applied to the inside test; a
  // pixel is stroked when the displaced test flips within the pen radius.
  const double amp = rng.uniform(0.8, 1.8) / static_cast<double>(size);
  const double f1 = rng.uniform(2.0, 5.0), f2 = rng.uniform(3.0, 7.0);
  const double ph1 = rng.uniform(0.0, 6.28318), ph2 = rng.uniform(0.0, 6.28318);
  const double pen = rng.uniform(0.9, 1.4) / static_cast<double>(size);
  const double ink = rng.uniform(0.05, 0.20);
  auto displaced_inside = [&](double x, double y) {
    const double dx = amp * (std::sin(6.28318 * f1 * y + ph1) +
                             0.5 * std::sin(6.28318 * f2 * x + ph2));
    const double dy = amp * (std::cos(6.28318 * f2 * y + ph2) +
                             0.5 * std::cos(6.28318 * f1 * x + ph1));
    return shape_inside(shape, x + dx, y + dy);
  };
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
      const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
      const bool center = displaced_inside(ux, uy);
      bool boundary = false;
      for (int k = 0; k < 8 && !boundary; ++k) {
        const double a = 0.785398 * k;
        if (displaced_inside(ux + pen * std::cos(a), uy + pen * std::sin(a)) != center)
          boundary = true;
      }
      if (boundary)
        img.at(0, y, x) = static_cast<real>(std::clamp(ink + rng.uniform(-0.03, 0.1), 0.0, 1.0));
      else
        rng.uniform();  // keep the stream position independent of content
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

Corpus generate_corpus(const GenParams& params, const std::string& out_dir) {
  require(params.n_categories >= 3, "gen: need at least 3 categories");
  require(params.pairs_per_category >= 1, "gen: need at least 1 pair per category");
  require(params.image_size >= 16 && params.image_size % 16 == 0,
          "gen: image_size must be a positive multiple of 16, got " +
              std::to_string(params.image_size));

  fs::create_directories(fs::path(out_dir) / "photos");
  fs::create_directories(fs::path(out_dir) / "sketches");

  std::vector<int> cats(params.n_categories);
  for (std::size_t c = 0; c < params.n_categories; ++c) cats[c] = static_cast<int>(c);
  auto [train_cats, test_cats] = split_zero_shot(cats, params.train_fraction, params.seed);
  std::set<int> train_set(train_cats.begin(), train_cats.end());

  Corpus corpus;
  corpus.root = out_dir;
  for (std::size_t c = 0; c < params.n_categories; ++c) {
    const ShapeSpec base = category_shape(params.seed, static_cast<int>(c));
    const std::string split = train_set.count(static_cast<int>(c)) ? "train" : "test";
    for (std::size_t i = 0; i < params.pairs_per_category; ++i) {
      const int inst = static_cast<int>(c * params.pairs_per_category + i);
      const std::uint64_t inst_tag = 2000000ULL + static_cast<std::uint64_t>(inst) * 4ULL;
      Rng jitter_rng(Rng::derive(params.seed, inst_tag));
      const ShapeSpec spec = jitter_shape(base, jitter_rng);

      Rng photo_rng(Rng::derive(params.seed, inst_tag + 1));
      Image photo = render_photo(spec, params.image_size, photo_rng);
      Rng sketch_rng(Rng::derive(params.seed, inst_tag + 2));
      Image sketch = render_sketch(spec, params.image_size, sketch_rng);

      char name[64];
      std::snprintf(name, sizeof(name), "c%02zu_i%04d", c, inst);
      const std::string photo_rel = "photos/" + std::string(name) + ".ppm";
      const std::string sketch_rel = "sketches/" + std::string(name) + ".pgm";
      write_pnm(photo, (fs::path(out_dir) / photo_rel).string());
      write_pnm(sketch, (fs::path(out_dir) / sketch_rel).string());

      corpus.records.push_back(
          {sketch_rel, Modality::sketch, static_cast<int>(c), inst, split});
      corpus.records.push_back(
          {photo_rel, Modality::photo, static_cast<int>(c), inst, split});
    }
  }
  corpus.validate();
  write_manifest(corpus, (fs::path(out_dir) / "manifest.tsv").string());
  return corpus;
}

}  // namespace sketchmatch
