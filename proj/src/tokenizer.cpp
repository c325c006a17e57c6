#include "sketchmatch/tokenizer.hpp"

#include <cmath>

#include "sketchmatch/ops.hpp"

namespace sketchmatch {

namespace {

// Kernel sizes of the four conv stages; stride 2 everywhere, padding
// (k - 1) / 2 so each stage halves the spatial extent exactly.
constexpr std::size_t kKernels[4] = {7, 3, 3, 3};

std::size_t stage_channels(const ModelConfig& cfg, std::size_t stage) {
  // d/8 -> d/4 -> d/2 -> d
  return cfg.embed_dim >> (3 - stage);
}

}  // namespace

Tokenizer::Tokenizer(const ModelConfig& cfg, ParamStore& params, Rng& init_rng)
    : cfg_(cfg) {
  const std::size_t d = cfg_.embed_dim;
  if (cfg_.use_conv_tokenizer) {
    std::size_t in_ch = cfg_.channels;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t out_ch = stage_channels(cfg_, s);
      const std::size_t k = kKernels[s];
      const real stddev =
          static_cast<real>(std::sqrt(2.0 / static_cast<double>(in_ch * k * k)));
      conv_w_.push_back(params.create_normal(
          "tokenizer.conv" + std::to_string(s + 1) + ".weight",
          {out_ch, in_ch, k, k}, init_rng, stddev));
      conv_b_.push_back(params.create_zeros(
          "tokenizer.conv" + std::to_string(s + 1) + ".bias", {out_ch}));
      in_ch = out_ch;
    }
  }
  const std::size_t patch_len =
      ModelConfig::patch_side * ModelConfig::patch_side * cfg_.channels;
  patch_w_ = params.create_normal("tokenizer.patch.weight", {patch_len, d}, init_rng,
                                  real(0.02));
  patch_b_ = params.create_zeros("tokenizer.patch.bias", {d});
  if (cfg_.use_positional_embeddings) {
    pos_ = params.create_normal("tokenizer.pos_embed", {cfg_.n_tokens() + 1, d},
                                init_rng, real(0.02));
  }
}

void Tokenizer::check_image(const Image& img) const {
  require(img.height % ModelConfig::patch_side == 0 &&
              img.width % ModelConfig::patch_side == 0,
          "tokenizer: image " + std::to_string(img.height) + "x" +
              std::to_string(img.width) + " is not a multiple of " +
              std::to_string(ModelConfig::patch_side));
  require(img.height == cfg_.height() && img.width == cfg_.width(),
          "tokenizer: image " + std::to_string(img.height) + "x" +
              std::to_string(img.width) + " does not match the configured " +
              std::to_string(cfg_.height()) + "x" + std::to_string(cfg_.width()));
  require(img.channels == cfg_.channels,
          "tokenizer: image has " + std::to_string(img.channels) +
              " channels, expected " + std::to_string(cfg_.channels));
}

std::size_t Tokenizer::token_count(const Image& img) const {
  return (img.height / ModelConfig::patch_side) * (img.width / ModelConfig::patch_side);
}

Tensor Tokenizer::vanilla_patch_embed(const Image& img) const {
  check_image(img);
  const std::size_t p = ModelConfig::patch_side;
  const std::size_t gy = img.height / p, gx = img.width / p;
  const std::size_t patch_len = p * p * img.channels;
  // Patch rows in raster order; within a patch: channel-major, then y, x.
  std::vector<real> rows(gy * gx * patch_len);
  std::size_t r = 0;
  for (std::size_t py = 0; py < gy; ++py)
    for (std::size_t px = 0; px < gx; ++px, ++r) {
      std::size_t w = 0;
      for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x, ++w)
            rows[r * patch_len + w] = img.at(c, py * p + y, px * p + x);
    }
  Tensor patches = Tensor::from({gy * gx, patch_len}, std::move(rows));
  return ops::affine(patches, patch_w_, patch_b_);
}

Tensor Tokenizer::conv_tokenize(const Image& img) const {
  check_image(img);
  require(cfg_.use_conv_tokenizer, "tokenizer: learnable conv branch is disabled");
  Tensor x = Tensor::from({img.channels, img.height, img.width}, img.pixels);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t pad = (kKernels[s] - 1) / 2;
    x = ops::relu(ops::conv2d(x, conv_w_[s], conv_b_[s], /*stride=*/2, pad));
  }
  // [d, gy, gx] -> [n, d] in raster order.
  const std::size_t d = cfg_.embed_dim;
  const std::size_t n = x.shape()[1] * x.shape()[2];
  return ops::transpose(ops::reshape(x, {d, n}));
}

TokenSequence Tokenizer::tokenize(const Image& img) const {
  Tensor x = vanilla_patch_embed(img);
  if (cfg_.use_conv_tokenizer) x = ops::add(conv_tokenize(img), x);
  const std::size_t n = token_count(img);
  if (cfg_.use_positional_embeddings) {
    std::vector<std::size_t> visual_rows(n);
    for (std::size_t i = 0; i < n; ++i) visual_rows[i] = i + 1;
    x = ops::add(x, ops::take_rows(pos_, visual_rows));
  }
  TokenSequence seq;
  seq.tokens = x;
  seq.full_count = n;
  seq.origin.resize(n);
  for (std::size_t i = 0; i < n; ++i) seq.origin[i] = i;
  return seq;
}

Tensor Tokenizer::ret_position() const {
  if (!cfg_.use_positional_embeddings) return Tensor();
  return ops::take_rows(pos_, {0});
}

}  // namespace sketchmatch
