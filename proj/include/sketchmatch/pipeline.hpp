#pragma once

#include <memory>
#include <optional>

#include "sketchmatch/checkpoint.hpp"
#include "sketchmatch/config.hpp"
#include "sketchmatch/cross_attention.hpp"
#include "sketchmatch/encoder.hpp"
#include "sketchmatch/image.hpp"
#include "sketchmatch/relation.hpp"
#include "sketchmatch/tokenizer.hpp"

namespace sketchmatch {

// The full network: tokenizer -> self-attention encoder(s) -> swapped-query
// cross attention -> cosine kernel -> relation score. Construction creates
// every parameter in a deterministic order; load() restores a checkpoint.
class Pipeline {
 public:
  Pipeline(const Config& cfg, std::uint64_t init_seed);

  static Pipeline from_checkpoint(const Config& cfg, const std::string& path);

  struct Encoded {
    TokenSequence seq;  // encoder output, post selection
    Tensor ret;         // encoder-output retrieval token (pre cross-attention)
  };
  Encoded encode_image(const Image& img, Modality modality) const;

  struct PairScore {
    Tensor score;  // scalar in (0, 1)
    KernelMatrix kernel;
    TokenSequence sketch_tokens, photo_tokens;  // sequences feeding the kernel
  };
  PairScore score_pair(const Encoded& sketch, const Encoded& photo,
                       bool training = false, Rng* rng = nullptr) const;

  const Config& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  const Encoder& encoder(Modality m) const;
  const CrossAttention& cross() const;
  const RelationNet& relation() const { return *relation_; }

  std::size_t param_count() const { return params_.total_elements(); }

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  Config cfg_;
  ParamStore params_;
  std::unique_ptr<Tokenizer> tokenizer_;
  std::unique_ptr<Encoder> encoder_shared_, encoder_sketch_, encoder_photo_;
  std::unique_ptr<CrossAttention> cross_;
  std::unique_ptr<RelationNet> relation_;
};

}  // namespace sketchmatch
