#pragma once

#include <string>

#include "sketchmatch/config.hpp"
#include "sketchmatch/params.hpp"
#include "sketchmatch/token_sequence.hpp"

namespace sketchmatch {

// Full n x n cosine-similarity matrix between sketch and photo tokens at
// their original patch positions; rows/columns of removed tokens are exactly
// zero, so the relation network's input width never varies with keep rates.
struct KernelMatrix {
  Tensor values;  // [n, n]
  std::vector<bool> row_alive, col_alive;
  std::size_t n = 0;

  void validate() const;
};

void write_kernel_text(const KernelMatrix& m, const std::string& path);

// Two affine layers with ReLU and dropout between, then a sigmoid: a match
// probability strictly in (0, 1). Hidden width defaults to 4n.
class RelationNet {
 public:
  RelationNet(const ModelConfig& cfg, ParamStore& params, Rng& init_rng);

  KernelMatrix cosine_kernel(const TokenSequence& sketch,
                             const TokenSequence& photo) const;

  // Ablation path (no cosine kernel): pairwise learned distance
  // u . [x_i ; y_j] + b in the same full-layout matrix.
  KernelMatrix learned_distance_matrix(const TokenSequence& sketch,
                                       const TokenSequence& photo) const;

  // Scalar tensor in (0, 1). Dropout only when training (rng required then).
  Tensor relation_score(const KernelMatrix& m, bool training = false,
                        Rng* rng = nullptr) const;

  // Same network on raw matrix values (for leave-one-out re-scoring).
  Tensor score_values(const Tensor& values, bool training = false,
                      Rng* rng = nullptr) const;

 private:
  ModelConfig cfg_;
  Tensor fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  Tensor dist_w_, dist_b_;  // only created for the learned-distance ablation
};

}  // namespace sketchmatch
