#pragma once

#include "sketchmatch/config.hpp"
#include "sketchmatch/image.hpp"
#include "sketchmatch/params.hpp"
#include "sketchmatch/token_sequence.hpp"

namespace sketchmatch {

// Turns an image into n visual tokens: a four-stage strided convolution
// branch (kernels 7/3/3/3, stride 2 each, ReLU between) summed with a
// vanilla non-overlapping 16x16 patch embedding, then learned positional
// embeddings. Channel counts ramp d/8 -> d/4 -> d/2 -> d.
class Tokenizer {
 public:
  Tokenizer(const ModelConfig& cfg, ParamStore& params, Rng& init_rng);

  // [n, d]; row i is the linear projection of patch i in raster order.
  Tensor vanilla_patch_embed(const Image& img) const;

  // [n, d]; conv branch flattened in raster order, token i covers the same
  // 16x16 region as patch i.
  Tensor conv_tokenize(const Image& img) const;

  // conv + vanilla residual sum (vanilla only when the learnable branch is
  // disabled), positions added after the sum. No retrieval token here; the
  // encoder prepends it.
  TokenSequence tokenize(const Image& img) const;

  // Positional row for the retrieval slot, [1, d]; undefined tensor when
  // positional embeddings are disabled.
  Tensor ret_position() const;

  std::size_t token_count(const Image& img) const;

 private:
  void check_image(const Image& img) const;

  ModelConfig cfg_;
  std::vector<Tensor> conv_w_, conv_b_;
  Tensor patch_w_, patch_b_;
  Tensor pos_;  // [(n+1), d], row 0 = retrieval slot
};

}  // namespace sketchmatch
