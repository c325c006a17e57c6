#pragma once

#include <utility>

#include "sketchmatch/config.hpp"
#include "sketchmatch/params.hpp"
#include "sketchmatch/token_sequence.hpp"

namespace sketchmatch {

// One swapped-query multi-head attention layer coupling the two modalities:
// the sketch branch is updated from (Q_sketch, K_photo, V_photo) and the
// photo branch from (Q_photo, K_sketch, V_sketch). The projections are shared
// between the two directions; retrieval tokens ride along as ordinary rows.
// Block structure mirrors the encoder (pre-norm, residual, optional MLP).
class CrossAttention {
 public:
  CrossAttention(const ModelConfig& cfg, ParamStore& params, Rng& init_rng);

  std::pair<TokenSequence, TokenSequence> cross_attend(const TokenSequence& sketch,
                                                       const TokenSequence& photo) const;

  // Importance of each alive photo token for the sketch retrieval token,
  // from this layer's query/key projections (per-head softmax, head average).
  std::vector<double> select_scores(const TokenSequence& sketch,
                                    const TokenSequence& photo) const;

  // Reduces the photo alive set to the top ceil(keep_rate_ca * alive) tokens
  // by select_scores; identity at rate 1.0.
  TokenSequence ca_select(const TokenSequence& sketch, const TokenSequence& photo,
                          double keep_rate_ca) const;

 private:
  Tensor attend(const Tensor& q_side, const Tensor& kv_side) const;

  ModelConfig cfg_;
  Tensor ln1_g_, ln1_b_, wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  Tensor ln2_g_, ln2_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace sketchmatch
