#include "sketchmatch/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sketchmatch/ops.hpp"

namespace sketchmatch {

namespace {

// Combined working matrix: row 0 is the retrieval token when present,
// remaining rows are the alive visual tokens.
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
    std::iota(rest.begin(), rest.end(), 1);
    out.tokens = ops::take_rows(x, rest);
  } else {
    out.tokens = x;
  }
  return out;
}

}  // namespace

Encoder::Encoder(const ModelConfig& cfg, ParamStore& params, Rng& init_rng,
                 const std::string& prefix)
    : cfg_(cfg) {
  const std::size_t d = cfg_.embed_dim;
  const std::size_t hidden = cfg_.mlp_ratio * d;
  if (cfg_.use_ret_token)
    ret_token_ = params.create_normal(prefix + ".ret_token", {1, d}, init_rng, real(0.02));
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    const std::string base = prefix + ".block" + std::to_string(l);
    Block blk;
    blk.ln1_g = params.create_full(base + ".ln1.gain", {d}, real(1));
    blk.ln1_b = params.create_zeros(base + ".ln1.bias", {d});
    blk.wq = params.create_normal(base + ".attn.wq", {d, d}, init_rng, real(0.02));
    blk.bq = params.create_zeros(base + ".attn.bq", {d});
    blk.wk = params.create_normal(base + ".attn.wk", {d, d}, init_rng, real(0.02));
    blk.bk = params.create_zeros(base + ".attn.bk", {d});
    blk.wv = params.create_normal(base + ".attn.wv", {d, d}, init_rng, real(0.02));
    blk.bv = params.create_zeros(base + ".attn.bv", {d});
    blk.wo = params.create_normal(base + ".attn.wo", {d, d}, init_rng, real(0.02));
    blk.bo = params.create_zeros(base + ".attn.bo", {d});
    blk.ln2_g = params.create_full(base + ".ln2.gain", {d}, real(1));
    blk.ln2_b = params.create_zeros(base + ".ln2.bias", {d});
    blk.fc1_w = params.create_normal(base + ".mlp.fc1.weight", {d, hidden}, init_rng,
                                     real(0.02));
    blk.fc1_b = params.create_zeros(base + ".mlp.fc1.bias", {hidden});
    blk.fc2_w = params.create_normal(base + ".mlp.fc2.weight", {hidden, d}, init_rng,
                                     real(0.02));
    blk.fc2_b = params.create_zeros(base + ".mlp.fc2.bias", {d});
    blocks_.push_back(std::move(blk));
  }
}

TokenSequence Encoder::prepend_ret(const TokenSequence& in, const Tensor& ret_pos) const {
  TokenSequence seq = in;
  if (cfg_.use_ret_token) {
    seq.ret = ret_pos.defined() ? ops::add(ret_token_, ret_pos) : ret_token_;
  }
  return seq;
}

Tensor Encoder::run_block(const Block& blk, const Tensor& x, bool has_ret,
                          std::vector<double>* sel_scores) const {
  const std::size_t d = cfg_.embed_dim;
  const std::size_t heads = cfg_.heads;
  const std::size_t dh = d / heads;
  const real att_scale = real(1) / static_cast<real>(std::sqrt(static_cast<double>(dh)));

  Tensor h = ops::layer_norm_rows(x, blk.ln1_g, blk.ln1_b);
  Tensor q = ops::affine(h, blk.wq, blk.bq);
  Tensor k = ops::affine(h, blk.wk, blk.bk);
  Tensor v = ops::affine(h, blk.wv, blk.bv);

  if (sel_scores != nullptr) {
    // Importance of each visual token for the retrieval token, from this
    // block's own queries/keys: per-head softmax over visual keys, averaged.
    require(has_ret, "encoder: selection scores need the retrieval token");
    const std::size_t rows = x.rows();
    const std::size_t visual = rows - 1;
    sel_scores->assign(visual, 0.0);
    std::vector<double> logits(visual);
    for (std::size_t head = 0; head < heads; ++head) {
      const std::size_t off = head * dh;
      double mx = -1e300;
      for (std::size_t r = 0; r < visual; ++r) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c)
          dot += static_cast<double>(q.at(0, off + c)) *
                 static_cast<double>(k.at(r + 1, off + c));
        logits[r] = dot * static_cast<double>(att_scale);
        mx = std::max(mx, logits[r]);
      }
      double sum = 0;
      for (std::size_t r = 0; r < visual; ++r) {
        logits[r] = std::exp(logits[r] - mx);
        sum += logits[r];
      }
      for (std::size_t r = 0; r < visual; ++r)
        (*sel_scores)[r] += logits[r] / sum / static_cast<double>(heads);
    }
  }

  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (std::size_t head = 0; head < heads; ++head) {
    Tensor qh = ops::slice_cols(q, head * dh, dh);
    Tensor kh = ops::slice_cols(k, head * dh, dh);
    Tensor vh = ops::slice_cols(v, head * dh, dh);
    Tensor att = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), att_scale));
    head_outs.push_back(ops::matmul(att, vh));
  }
  Tensor attn = ops::affine(ops::concat_cols(head_outs), blk.wo, blk.bo);
  Tensor x1 = ops::add(x, attn);

  Tensor m = ops::layer_norm_rows(x1, blk.ln2_g, blk.ln2_b);
  Tensor mlp = ops::affine(ops::relu(ops::affine(m, blk.fc1_w, blk.fc1_b)), blk.fc2_w,
                           blk.fc2_b);
  return ops::add(x1, mlp);
}

Encoder::Trace Encoder::encode_trace(const TokenSequence& in, bool is_sketch,
                                     const Tensor& ret_pos) const {
  require(in.width() == cfg_.embed_dim,
          "encoder: token width " + std::to_string(in.width()) +
              " does not match embed_dim " + std::to_string(cfg_.embed_dim));
  Trace trace;
  TokenSequence seq = prepend_ret(in, ret_pos);
  const double rate = cfg_.keep_rate_sa(is_sketch);
  for (std::size_t l = 1; l <= blocks_.size(); ++l) {
    trace.block_inputs.push_back(seq);
    const bool select_here =
        cfg_.use_ret_token && rate < 1.0 &&
        std::find(cfg_.selection_layers.begin(), cfg_.selection_layers.end(), l) !=
            cfg_.selection_layers.end();
    std::vector<double> scores;
    Tensor x = run_block(blocks_[l - 1], combine(seq), seq.has_ret(),
                         select_here ? &scores : nullptr);
    seq = split(x, seq);
    if (select_here) seq = select_tokens(seq, scores, rate);
  }
  trace.output = seq;
  return trace;
}

TokenSequence Encoder::encode(const TokenSequence& in, bool is_sketch,
                              const Tensor& ret_pos) const {
  if (blocks_.empty()) return prepend_ret(in, ret_pos);  // L = 0: identity
  return encode_trace(in, is_sketch, ret_pos).output;
}

std::vector<double> Encoder::scores_from_state(const Block& blk,
                                               const TokenSequence& state) const {
  std::vector<double> scores;
  run_block(blk, combine(state), state.has_ret(), &scores);
  return scores;
}

std::vector<double> Encoder::ret_attention_scores(const TokenSequence& state,
                                                  std::size_t layer) const {
  require(layer >= 1 && layer <= blocks_.size(),
          "encoder: layer " + std::to_string(layer) + " outside [1, " +
              std::to_string(blocks_.size()) + "]");
  require(state.has_ret(), "encoder: scores need a retrieval token");
  return scores_from_state(blocks_[layer - 1], state);
}

std::vector<std::vector<double>> Encoder::ret_head_products(const TokenSequence& state,
                                                            std::size_t layer) const {
  require(layer >= 1 && layer <= blocks_.size(),
          "encoder: layer " + std::to_string(layer) + " outside [1, " +
              std::to_string(blocks_.size()) + "]");
  require(state.has_ret(), "encoder: attention products need a retrieval token");
  const Block& blk = blocks_[layer - 1];
  const std::size_t d = cfg_.embed_dim, heads = cfg_.heads, dh = d / heads;
  Tensor h = ops::layer_norm_rows(combine(state), blk.ln1_g, blk.ln1_b);
  Tensor q = ops::affine(h, blk.wq, blk.bq);
  Tensor k = ops::affine(h, blk.wk, blk.bk);
  const std::size_t visual = state.alive_count();
  std::vector<std::vector<double>> out(heads, std::vector<double>(visual, 0.0));
  for (std::size_t head = 0; head < heads; ++head) {
    const std::size_t off = head * dh;
    for (std::size_t r = 0; r < visual; ++r) {
      double dot = 0;
      for (std::size_t c = 0; c < dh; ++c)
        dot += static_cast<double>(q.at(0, off + c)) *
               static_cast<double>(k.at(r + 1, off + c));
      out[head][r] = dot;
    }
  }
  return out;
}

TokenSequence Encoder::select_tokens(const TokenSequence& seq,
                                     const std::vector<double>& scores,
                                     double keep_rate) {
  require(keep_rate > 0.0 && keep_rate <= 1.0,
          "select_tokens: keep_rate must lie in (0, 1]");
  require(scores.size() == seq.alive_count(),
          "select_tokens: got " + std::to_string(scores.size()) + " scores for " +
              std::to_string(seq.alive_count()) + " alive tokens");
  const std::size_t alive = seq.alive_count();
  // Small slack keeps mathematically-integer products exact under FP.
  std::size_t k = static_cast<std::size_t>(
      std::ceil(keep_rate * static_cast<double>(alive) - 1e-9));
  k = std::max<std::size_t>(1, std::min(k, alive));
  if (k == alive) return seq;

  std::vector<std::size_t> order(alive);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return seq.origin[a] < seq.origin[b];  // tie: lower patch index wins
  });
  order.resize(k);
  std::sort(order.begin(), order.end());  // restore raster order

  TokenSequence out;
  out.ret = seq.ret;
  out.full_count = seq.full_count;
  out.tokens = ops::take_rows(seq.tokens, order);
  out.origin.reserve(k);
  for (std::size_t r : order) out.origin.push_back(seq.origin[r]);
  return out;
}

}  // namespace sketchmatch
