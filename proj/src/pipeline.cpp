#include "sketchmatch/pipeline.hpp"

namespace sketchmatch {

Pipeline::Pipeline(const Config& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng init_rng(init_seed);
  tokenizer_ = std::make_unique<Tokenizer>(cfg_.model, params_, init_rng);
  if (cfg_.model.share_encoders) {
    encoder_shared_ = std::make_unique<Encoder>(cfg_.model, params_, init_rng, "encoder");
  } else {
    encoder_sketch_ =
        std::make_unique<Encoder>(cfg_.model, params_, init_rng, "encoder_sketch");
    encoder_photo_ =
        std::make_unique<Encoder>(cfg_.model, params_, init_rng, "encoder_photo");
  }
  if (cfg_.model.use_cross_attention)
    cross_ = std::make_unique<CrossAttention>(cfg_.model, params_, init_rng);
  relation_ = std::make_unique<RelationNet>(cfg_.model, params_, init_rng);
}

Pipeline Pipeline::from_checkpoint(const Config& cfg, const std::string& path) {
  Pipeline p(cfg, /*init_seed=*/0);
  p.load(path);
  return p;
}

const Encoder& Pipeline::encoder(Modality m) const {
  if (cfg_.model.share_encoders) return *encoder_shared_;
  return m == Modality::sketch ? *encoder_sketch_ : *encoder_photo_;
}

const CrossAttention& Pipeline::cross() const {
  require(cross_ != nullptr, "pipeline: cross-attention is disabled in this config");
  return *cross_;
}

Pipeline::Encoded Pipeline::encode_image(const Image& img, Modality modality) const {
  TokenSequence tokens = tokenizer_->tokenize(img);
  TokenSequence out = encoder(modality).encode(tokens, modality == Modality::sketch,
                                               tokenizer_->ret_position());
  Encoded enc;
  enc.ret = out.ret;
  enc.seq = out;
  return enc;
}

Pipeline::PairScore Pipeline::score_pair(const Encoded& sketch, const Encoded& photo,
                                         bool training, Rng* rng) const {
  TokenSequence s = sketch.seq;
  TokenSequence p = photo.seq;
  if (cfg_.model.use_cross_attention) {
    // Selection first, so the attention and the kernel see the reduced set.
    if (cfg_.model.keep_rate_ca < 1.0)
      p = cross_->ca_select(s, p, cfg_.model.keep_rate_ca);
    std::tie(s, p) = cross_->cross_attend(s, p);
  }
  PairScore out;
  out.kernel = cfg_.model.use_cosine_kernel
                   ? relation_->cosine_kernel(s, p)
                   : relation_->learned_distance_matrix(s, p);
  out.score = relation_->relation_score(out.kernel, training, rng);
  out.sketch_tokens = std::move(s);
  out.photo_tokens = std::move(p);
  return out;
}

void Pipeline::save(const std::string& path) const { save_checkpoint(params_, path); }

void Pipeline::load(const std::string& path) { load_checkpoint(params_, path); }

}  // namespace sketchmatch
