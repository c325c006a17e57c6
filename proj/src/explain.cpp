#include "sketchmatch/explain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sketchmatch/retrieval.hpp"

namespace sketchmatch {

namespace fs = std::filesystem;

std::size_t attention_head_count(const Pipeline& pipeline) {
  return pipeline.config().model.heads;
}

AttentionMap self_attention_map(const Pipeline& pipeline, const Image& image,
                                std::size_t layer, std::size_t head) {
  const ModelConfig& mc = pipeline.config().model;
  require(layer >= 1 && layer <= mc.layers,
          "attn-map: layer " + std::to_string(layer) + " outside [1, " +
              std::to_string(mc.layers) + "]");
  require(head < mc.heads, "attn-map: head " + std::to_string(head) +
                               " outside [0, " + std::to_string(mc.heads) + ")");
  const Encoder& enc = pipeline.encoder(Modality::sketch);
  TokenSequence tokens = pipeline.tokenizer().tokenize(image);
  auto trace = enc.encode_trace(tokens, /*is_sketch=*/true,
                                pipeline.tokenizer().ret_position());
  const TokenSequence& state = trace.block_inputs.at(layer - 1);
  const auto products = enc.ret_head_products(state, layer);

  AttentionMap map;
  map.rows = image.height / ModelConfig::patch_side;
  map.cols = image.width / ModelConfig::patch_side;
  const std::vector<double>& head_vals = products.at(head);

  double lo = 1e300, hi = -1e300;
  for (double v : head_vals) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  map.values.assign(map.rows * map.cols, 0.0);  // removed patches sit at the minimum
  if (hi - lo < 1e-15) {
    // Constant raw map renders flat mid-gray.
    map.values.assign(map.rows * map.cols, 0.5);
    return map;
  }
  for (auto& v : map.values) v = 0.0;
  for (std::size_t r = 0; r < state.alive_count(); ++r)
    map.values[state.origin[r]] = (head_vals[r] - lo) / (hi - lo);
  return map;
}

Image attention_map_image(const AttentionMap& map, std::size_t scale) {
  require(scale >= 1, "attn-map: scale must be >= 1");
  Image img = Image::filled(map.rows * scale, map.cols * scale, 1, 0);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      img.at(0, y, x) = static_cast<real>(map.values[(y / scale) * map.cols + x / scale]);
  return img;
}

CorrespondenceSet correspondences(const KernelMatrix& kernel, std::size_t top_k,
                                  const std::string& provenance) {
  require(top_k >= 1, "correspond: top_k must be >= 1");
  CorrespondenceSet set;
  set.provenance = provenance;
  std::vector<std::size_t> alive_cols;
  for (std::size_t j = 0; j < kernel.n; ++j)
    if (kernel.col_alive[j]) alive_cols.push_back(j);
  set.truncated = top_k > alive_cols.size();
  const std::size_t k = std::min(top_k, alive_cols.size());
  for (std::size_t i = 0; i < kernel.n; ++i) {
    if (!kernel.row_alive[i]) continue;
    std::vector<CorrespondenceSet::Entry> entries;
    entries.reserve(alive_cols.size());
    for (std::size_t j : alive_cols)
      entries.push_back({j, static_cast<double>(kernel.values.at(i, j))});
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.value != b.value) return a.value > b.value;
      return a.photo_patch < b.photo_patch;
    });
    entries.resize(k);
    set.sketch_patches.push_back(i);
    set.matches.push_back(std::move(entries));
  }
  return set;
}

void write_correspondences(const CorrespondenceSet& set, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "correspond: cannot open '" + path + "' for writing");
  os.precision(17);
  os << "# sketchmatch-correspondences v1\n";
  if (!set.provenance.empty()) os << "# gallery: " << set.provenance << "\n";
  os << "sketch_patch\tphoto_patch\tcosine\trank\n";
  for (std::size_t i = 0; i < set.sketch_patches.size(); ++i)
    for (std::size_t r = 0; r < set.matches[i].size(); ++r)
      os << set.sketch_patches[i] << "\t" << set.matches[i][r].photo_patch << "\t"
         << set.matches[i][r].value << "\t" << (r + 1) << "\n";
  require(os.good(), "correspond: write failed for '" + path + "'");
}

namespace {

struct PatchRef {
  double value;
  std::size_t gallery_index;
  std::size_t photo_patch;
};

void paste_patch_mean(Image& out, std::size_t patch_idx,
                      const std::vector<const Image*>& sources,
                      const std::vector<std::size_t>& patches) {
  const std::size_t p = ModelConfig::patch_side;
  const std::size_t grid_cols = out.width / p;
  const std::size_t py = patch_idx / grid_cols, px = patch_idx % grid_cols;
  for (std::size_t c = 0; c < out.channels; ++c)
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x) {
        double acc = 0;
        for (std::size_t s = 0; s < sources.size(); ++s) {
          const Image& src = *sources[s];
          const std::size_t sc = src.channels == 1 ? 0 : c;
          const std::size_t s_cols = src.width / p;
          const std::size_t sy = (patches[s] / s_cols) * p + y;
          const std::size_t sx = (patches[s] % s_cols) * p + x;
          acc += static_cast<double>(src.at(sc, sy, sx));
        }
        out.at(c, py * p + y, px * p + x) =
            static_cast<real>(acc / static_cast<double>(sources.size()));
      }
}

}  // namespace

SynthResult patch_replace_synthesis(const Pipeline& pipeline, const Image& sketch,
                                    const Corpus& corpus, SynthSource source,
                                    std::size_t k, RankMode rank_mode) {
  require(k >= 1, "synth: k must be >= 1");
  const auto photos = corpus.select(Modality::photo, "test");
  require(!photos.empty(), "synth: empty gallery");
  const std::size_t p = ModelConfig::patch_side;
  const std::size_t grid_rows = sketch.height / p, grid_cols = sketch.width / p;
  const std::size_t n = grid_rows * grid_cols;

  Pipeline::Encoded enc_sketch = pipeline.encode_image(sketch, Modality::sketch);

  // Load + encode the gallery once.
  std::vector<Image> gallery_images;
  std::vector<GalleryItem> gallery;
  gallery_images.reserve(photos.size());
  for (const auto& rec : photos) {
    gallery_images.push_back(corpus.load_image(rec));
    GalleryItem item;
    item.id = rec.instance_id;
    item.category_id = rec.category_id;
    item.encoded = pipeline.encode_image(gallery_images.back(), Modality::photo);
    gallery.push_back(std::move(item));
  }

  std::vector<std::size_t> use_indices;  // indices into photos/gallery
  SynthResult result;
  if (source == SynthSource::retrieved) {
    RankingResult ranking = rank_mode == RankMode::ret
                                ? rank_ret(pipeline, 0, enc_sketch, gallery)
                                : rank_rn(pipeline, 0, enc_sketch, gallery);
    const int best = ranking.gallery_ids.front();
    for (std::size_t g = 0; g < photos.size(); ++g)
      if (photos[g].instance_id == best) use_indices.push_back(g);
    result.retrieved_id = best;
  } else {
    use_indices.resize(photos.size());
    for (std::size_t g = 0; g < photos.size(); ++g) use_indices[g] = g;
  }

  // Candidate patches per sketch patch, from the pairwise kernels.
  std::vector<std::vector<PatchRef>> candidates(n);
  for (std::size_t g : use_indices) {
    auto ps = pipeline.score_pair(enc_sketch, gallery[g].encoded, false, nullptr);
    const KernelMatrix& m = ps.kernel;
    for (std::size_t i = 0; i < m.n; ++i) {
      if (!m.row_alive[i]) continue;
      for (std::size_t j = 0; j < m.n; ++j) {
        if (!m.col_alive[j]) continue;
        candidates[i].push_back({static_cast<double>(m.values.at(i, j)), g, j});
      }
    }
  }

  result.image = Image::filled(sketch.height, sketch.width, 3, 0);
  result.provenance.grid_rows = grid_rows;
  result.provenance.grid_cols = grid_cols;
  result.provenance.per_patch.resize(n);
  const std::size_t kk = source == SynthSource::retrieved ? 1 : k;
  for (std::size_t i = 0; i < n; ++i) {
    auto& cand = candidates[i];
    if (cand.empty()) {
      // Token removed by selection: keep the sketch's own pixels.
      paste_patch_mean(result.image, i, {&sketch}, {i});
      result.provenance.per_patch[i].push_back({"", i});
      continue;
    }
    std::sort(cand.begin(), cand.end(), [](const PatchRef& a, const PatchRef& b) {
      if (a.value != b.value) return a.value > b.value;
      if (a.gallery_index != b.gallery_index) return a.gallery_index < b.gallery_index;
      return a.photo_patch < b.photo_patch;
    });
    const std::size_t take = std::min(kk, cand.size());
    std::vector<const Image*> sources;
    std::vector<std::size_t> patches;
    for (std::size_t s = 0; s < take; ++s) {
      sources.push_back(&gallery_images[cand[s].gallery_index]);
      patches.push_back(cand[s].photo_patch);
      result.provenance.per_patch[i].push_back(
          {photos[cand[s].gallery_index].path, cand[s].photo_patch});
    }
    paste_patch_mean(result.image, i, sources, patches);
  }
  return result;
}

void write_provenance(const SynthProvenance& p, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "synth: cannot open '" + path + "' for writing");
  os << "# sketchmatch-synth-provenance v1\n";
  os << p.grid_rows << "\t" << p.grid_cols << "\t" << p.patch_side << "\n";
  for (std::size_t i = 0; i < p.per_patch.size(); ++i) {
    os << i;
    for (const auto& src : p.per_patch[i])
      os << "\t" << (src.photo_path.empty() ? "<sketch>" : src.photo_path) << ":"
         << src.photo_patch;
    os << "\n";
  }
  require(os.good(), "synth: write failed for '" + path + "'");
}

SynthProvenance read_provenance(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "synth: cannot open '" + path + "'");
  std::string line;
  std::getline(is, line);
  require(line == "# sketchmatch-synth-provenance v1",
          "synth: '" + path + "' is not a provenance file");
  SynthProvenance p;
  {
    std::getline(is, line);
    std::stringstream ss(line);
    ss >> p.grid_rows >> p.grid_cols >> p.patch_side;
  }
  p.per_patch.resize(p.grid_rows * p.grid_cols);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    require(static_cast<bool>(std::getline(ss, field, '\t')), "synth: bad provenance row");
    const std::size_t idx = static_cast<std::size_t>(std::stoul(field));
    require(idx < p.per_patch.size(), "synth: provenance patch index out of range");
    while (std::getline(ss, field, '\t')) {
      const std::size_t colon = field.rfind(':');
      require(colon != std::string::npos, "synth: bad provenance source '" + field + "'");
      SynthProvenance::PatchSource src;
      src.photo_path = field.substr(0, colon);
      if (src.photo_path == "<sketch>") src.photo_path.clear();
      src.photo_patch = static_cast<std::size_t>(std::stoul(field.substr(colon + 1)));
      p.per_patch[idx].push_back(std::move(src));
    }
  }
  return p;
}

Image replay_synthesis(const SynthProvenance& p, const Image& sketch,
                       const std::string& corpus_root) {
  Image out = Image::filled(p.grid_rows * p.patch_side, p.grid_cols * p.patch_side, 3, 0);
  for (std::size_t i = 0; i < p.per_patch.size(); ++i) {
    require(!p.per_patch[i].empty(), "synth: patch " + std::to_string(i) +
                                         " has no provenance sources");
    std::vector<Image> loaded;
    loaded.reserve(p.per_patch[i].size());
    std::vector<const Image*> sources;
    std::vector<std::size_t> patches;
    for (const auto& src : p.per_patch[i]) {
      if (src.photo_path.empty()) {
        sources.push_back(&sketch);
      } else {
        loaded.push_back(
            with_channels(read_pnm((fs::path(corpus_root) / src.photo_path).string()), 3));
        sources.push_back(&loaded.back());
      }
      patches.push_back(src.photo_patch);
    }
    paste_patch_mean(out, i, sources, patches);
  }
  return out;
}

InfluenceResult most_influential_pair(const Pipeline& pipeline,
                                      const KernelMatrix& kernel, bool whole_token) {
  const RelationNet& rn = pipeline.relation();
  InfluenceResult result;
  result.full_score = static_cast<double>(rn.relation_score(kernel).item());
  result.score_drop = -1e300;
  for (std::size_t i = 0; i < kernel.n; ++i) {
    if (!kernel.row_alive[i]) continue;
    for (std::size_t j = 0; j < kernel.n; ++j) {
      if (!kernel.col_alive[j]) continue;
      Tensor ablated = Tensor::from(kernel.values.shape(), kernel.values.value());
      if (whole_token) {
        for (std::size_t c = 0; c < kernel.n; ++c) ablated.raw_value()[i * kernel.n + c] = 0;
        for (std::size_t r = 0; r < kernel.n; ++r) ablated.raw_value()[r * kernel.n + j] = 0;
      } else {
        ablated.raw_value()[i * kernel.n + j] = 0;
      }
      const double drop =
          result.full_score - static_cast<double>(rn.score_values(ablated).item());
      if (drop > result.score_drop) {  // strict: lexicographic (i, j) tie rule
        result.score_drop = drop;
        result.sketch_patch = i;
        result.photo_patch = j;
      }
    }
  }
  require(result.score_drop > -1e299, "influence: no alive kernel entries");
  return result;
}

}  // namespace sketchmatch
