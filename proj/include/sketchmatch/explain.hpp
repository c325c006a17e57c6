#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sketchmatch/corpus.hpp"
#include "sketchmatch/pipeline.hpp"
#include "sketchmatch/relation.hpp"

namespace sketchmatch {

// Per-patch grid of retrieval-query / key dot products, min-max normalized to
// [0, 1] (0.5 everywhere when the raw map is constant). Patches removed by
// selection render as the minimum.
struct AttentionMap {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
};

AttentionMap self_attention_map(const Pipeline& pipeline, const Image& image,
                                std::size_t layer, std::size_t head);
std::size_t attention_head_count(const Pipeline& pipeline);
Image attention_map_image(const AttentionMap& map, std::size_t scale = 1);

// For each alive sketch patch: photo patches ranked by kernel value
// (non-increasing, ties by lower index). Requests beyond the alive column
// count are truncated.
struct CorrespondenceSet {
  struct Entry {
    std::size_t photo_patch;
    double value;
  };
  std::vector<std::size_t> sketch_patches;     // alive sketch patch ids
  std::vector<std::vector<Entry>> matches;     // parallel to sketch_patches
  std::string provenance;                      // which gallery image
  bool truncated = false;
};

CorrespondenceSet correspondences(const KernelMatrix& kernel, std::size_t top_k,
                                  const std::string& provenance = "");
void write_correspondences(const CorrespondenceSet& set, const std::string& path);

// Sketch-to-photo synthesis by patch replacement. Every output patch's pixel
// source is recorded; replaying the provenance rebuilds the image bit-exactly.
enum class SynthSource { retrieved, gallery };

struct SynthProvenance {
  struct PatchSource {
    std::string photo_path;    // empty = sketch's own pixels
    std::size_t photo_patch = 0;
  };
  std::size_t grid_rows = 0, grid_cols = 0, patch_side = 16;
  std::vector<std::vector<PatchSource>> per_patch;  // k sources -> pixel mean
};

struct SynthResult {
  Image image;
  SynthProvenance provenance;
  int retrieved_id = -1;  // gallery id backing retrieved mode
};

SynthResult patch_replace_synthesis(const Pipeline& pipeline, const Image& sketch,
                                    const Corpus& corpus, SynthSource source,
                                    std::size_t k, RankMode rank_mode = RankMode::rn);

void write_provenance(const SynthProvenance& p, const std::string& path);
SynthProvenance read_provenance(const std::string& path);
// Rebuilds the synthesized image from provenance + source files alone.
Image replay_synthesis(const SynthProvenance& p, const Image& sketch,
                       const std::string& corpus_root);

// Leave-one-out influence: zero one kernel entry (or, with whole_token, the
// entire row+column) and measure the relation-score drop; returns the argmax
// with lexicographic (i, j) tie-breaking.
struct InfluenceResult {
  std::size_t sketch_patch = 0, photo_patch = 0;
  double score_drop = 0.0;
  double full_score = 0.0;
};

InfluenceResult most_influential_pair(const Pipeline& pipeline,
                                      const KernelMatrix& kernel,
                                      bool whole_token = false);

}  // namespace sketchmatch
