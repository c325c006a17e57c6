#include "sketchmatch/cross_attention.hpp"

#include <cmath>

#include "sketchmatch/encoder.hpp"
#include "sketchmatch/ops.hpp"

namespace sketchmatch {

namespace {

Tensor combine(const TokenSequence& seq) {
  if (seq.has_ret()) return ops::concat_rows({seq.ret, seq.tokens});
  return seq.tokens;
}

TokenSequence split(const Tensor& x, const TokenSequence& like) {
  TokenSequence out;
  out.full_count = like.full_count;
  out.origin = like.origin;
  if (like.has_ret()) {
    out.ret = ops::take_rows(x, {0});
    std::vector<std::size_t> rest(like.alive_count());
    for (std::size_t i = 0; i < rest.size(); ++i) rest[i] = i + 1;
    out.tokens = ops::take_rows(x, rest);
  } else {
    out.tokens = x;
  }
  return out;
}

}  // namespace

CrossAttention::CrossAttention(const ModelConfig& cfg, ParamStore& params, Rng& init_rng)
    : cfg_(cfg) {
  const std::size_t d = cfg_.embed_dim;
  const std::size_t hidden = cfg_.mlp_ratio * d;
  ln1_g_ = params.create_full("cross.ln1.gain", {d}, real(1));
  ln1_b_ = params.create_zeros("cross.ln1.bias", {d});
  wq_ = params.create_normal("cross.attn.wq", {d, d}, init_rng, real(0.02));
  bq_ = params.create_zeros("cross.attn.bq", {d});
  wk_ = params.create_normal("cross.attn.wk", {d, d}, init_rng, real(0.02));
  bk_ = params.create_zeros("cross.attn.bk", {d});
  wv_ = params.create_normal("cross.attn.wv", {d, d}, init_rng, real(0.02));
  bv_ = params.create_zeros("cross.attn.bv", {d});
  wo_ = params.create_normal("cross.attn.wo", {d, d}, init_rng, real(0.02));
  bo_ = params.create_zeros("cross.attn.bo", {d});
  if (cfg_.ca_feed_forward) {
    ln2_g_ = params.create_full("cross.ln2.gain", {d}, real(1));
    ln2_b_ = params.create_zeros("cross.ln2.bias", {d});
    fc1_w_ = params.create_normal("cross.mlp.fc1.weight", {d, hidden}, init_rng,
                                  real(0.02));
    fc1_b_ = params.create_zeros("cross.mlp.fc1.bias", {hidden});
    fc2_w_ = params.create_normal("cross.mlp.fc2.weight", {hidden, d}, init_rng,
                                  real(0.02));
    fc2_b_ = params.create_zeros("cross.mlp.fc2.bias", {d});
  }
}

// Multi-head attention with queries from one branch and keys/values from the
// other; output has one row per query-side token.
Tensor CrossAttention::attend(const Tensor& q_side, const Tensor& kv_side) const {
  const std::size_t d = cfg_.embed_dim, heads = cfg_.ca_heads, dh = d / heads;
  const real att_scale = real(1) / static_cast<real>(std::sqrt(static_cast<double>(dh)));
  Tensor q = ops::affine(q_side, wq_, bq_);
  Tensor k = ops::affine(kv_side, wk_, bk_);
  Tensor v = ops::affine(kv_side, wv_, bv_);
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (std::size_t head = 0; head < heads; ++head) {
    Tensor qh = ops::slice_cols(q, head * dh, dh);
    Tensor kh = ops::slice_cols(k, head * dh, dh);
    Tensor vh = ops::slice_cols(v, head * dh, dh);
    Tensor att = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), att_scale));
    head_outs.push_back(ops::matmul(att, vh));
  }
  return ops::affine(ops::concat_cols(head_outs), wo_, bo_);
}

std::pair<TokenSequence, TokenSequence> CrossAttention::cross_attend(
    const TokenSequence& sketch, const TokenSequence& photo) const {
  require(sketch.width() == cfg_.embed_dim && photo.width() == cfg_.embed_dim,
          "cross_attend: token widths " + std::to_string(sketch.width()) + "/" +
              std::to_string(photo.width()) + " do not match embed_dim " +
              std::to_string(cfg_.embed_dim));
  Tensor xs = combine(sketch);
  Tensor xp = combine(photo);
  Tensor hs = ops::layer_norm_rows(xs, ln1_g_, ln1_b_);
  Tensor hp = ops::layer_norm_rows(xp, ln1_g_, ln1_b_);
  // Swapped tuples: sketch rows attend photo keys/values and vice versa.
  Tensor xs1 = ops::add(xs, attend(hs, hp));
  Tensor xp1 = ops::add(xp, attend(hp, hs));
  if (cfg_.ca_feed_forward) {
    Tensor ms = ops::layer_norm_rows(xs1, ln2_g_, ln2_b_);
    Tensor mp = ops::layer_norm_rows(xp1, ln2_g_, ln2_b_);
    xs1 = ops::add(xs1, ops::affine(ops::relu(ops::affine(ms, fc1_w_, fc1_b_)), fc2_w_,
                                    fc2_b_));
    xp1 = ops::add(xp1, ops::affine(ops::relu(ops::affine(mp, fc1_w_, fc1_b_)), fc2_w_,
                                    fc2_b_));
  }
  return {split(xs1, sketch), split(xp1, photo)};
}

std::vector<double> CrossAttention::select_scores(const TokenSequence& sketch,
                                                  const TokenSequence& photo) const {
  require(sketch.has_ret(), "ca_select: sketch retrieval token required");
  const std::size_t d = cfg_.embed_dim, heads = cfg_.ca_heads, dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor hs = ops::layer_norm_rows(combine(sketch), ln1_g_, ln1_b_);
  Tensor hp = ops::layer_norm_rows(photo.tokens, ln1_g_, ln1_b_);
  Tensor q = ops::affine(hs, wq_, bq_);   // row 0 = sketch ret
  Tensor k = ops::affine(hp, wk_, bk_);   // photo visual tokens only
  const std::size_t visual = photo.alive_count();
  std::vector<double> scores(visual, 0.0), logits(visual);
  for (std::size_t head = 0; head < heads; ++head) {
    const std::size_t off = head * dh;
    double mx = -1e300;
    for (std::size_t r = 0; r < visual; ++r) {
      double dot = 0;
      for (std::size_t c = 0; c < dh; ++c)
        dot += static_cast<double>(q.at(0, off + c)) * static_cast<double>(k.at(r, off + c));
      logits[r] = dot * att_scale;
      mx = std::max(mx, logits[r]);
    }
    double sum = 0;
    for (std::size_t r = 0; r < visual; ++r) {
      logits[r] = std::exp(logits[r] - mx);
      sum += logits[r];
    }
    for (std::size_t r = 0; r < visual; ++r)
      scores[r] += logits[r] / sum / static_cast<double>(heads);
  }
  return scores;
}

TokenSequence CrossAttention::ca_select(const TokenSequence& sketch,
                                        const TokenSequence& photo,
                                        double keep_rate_ca) const {
  require(keep_rate_ca > 0.0 && keep_rate_ca <= 1.0,
          "ca_select: keep rate must lie in (0, 1]");
  if (keep_rate_ca >= 1.0) return photo;
  return Encoder::select_tokens(photo, select_scores(sketch, photo), keep_rate_ca);
}

}  // namespace sketchmatch
