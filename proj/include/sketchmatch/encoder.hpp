#pragma once

#include "sketchmatch/config.hpp"
#include "sketchmatch/params.hpp"
#include "sketchmatch/token_sequence.hpp"

namespace sketchmatch {

// Pre-norm transformer stack with a trainable retrieval token and
// retrieval-token-driven token selection after the configured layers.
// One instance serves both modalities when encoders are shared.
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, ParamStore& params, Rng& init_rng,
          const std::string& prefix = "encoder");

  // Prepends the retrieval token (plus its positional row when defined) and
  // runs the full stack. `is_sketch` picks the modality's keep rate.
  TokenSequence encode(const TokenSequence& in, bool is_sketch,
                       const Tensor& ret_pos = Tensor()) const;

  struct Trace {
    std::vector<TokenSequence> block_inputs;  // state entering block l (1-based l-1)
    TokenSequence output;
  };
  Trace encode_trace(const TokenSequence& in, bool is_sketch,
                     const Tensor& ret_pos = Tensor()) const;

  // Token importance of the (1-based) layer for the state entering it:
  // per-head softmax of the retrieval-token query against alive visual keys,
  // averaged across heads. Selection indices are not differentiated through,
  // so plain doubles.
  std::vector<double> ret_attention_scores(const TokenSequence& state,
                                           std::size_t layer) const;

  // Raw per-head retrieval-query / key dot products (no softmax), for
  // attention maps. [heads][alive].
  std::vector<std::vector<double>> ret_head_products(const TokenSequence& state,
                                                     std::size_t layer) const;

  // Keeps ceil(keep_rate * alive) tokens with the best scores; ties go to the
  // lower patch index; raster order is preserved; ret passes through.
  static TokenSequence select_tokens(const TokenSequence& seq,
                                     const std::vector<double>& scores,
                                     double keep_rate);

  std::size_t layer_count() const { return blocks_.size(); }

 private:
  struct Block {
    Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  TokenSequence prepend_ret(const TokenSequence& in, const Tensor& ret_pos) const;
  Tensor run_block(const Block& blk, const Tensor& x, bool has_ret,
                   std::vector<double>* sel_scores) const;
  std::vector<double> scores_from_state(const Block& blk, const TokenSequence& state) const;

  ModelConfig cfg_;
  Tensor ret_token_;  // [1, d] when the retrieval token is enabled
  std::vector<Block> blocks_;
};

}  // namespace sketchmatch
