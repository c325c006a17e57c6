#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sketchmatch/common.hpp"

namespace sketchmatch {

// Network architecture. Desk-scale defaults; the paper-scale constants
// (224x224, d=768, 12 blocks, selection after layers 4/7/10, 8-head cross
// attention) are reachable through the same fields.
struct ModelConfig {
  std::size_t image_size = 64;   // multiple of 16
  std::size_t image_height = 0;  // 0 = follow image_size
  std::size_t image_width = 0;   // 0 = follow image_size
  std::size_t channels = 3;
  std::size_t embed_dim = 64;    // divisible by 8 (conv channel ramp) and by heads
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t ca_heads = 4;
  std::vector<std::size_t> selection_layers = {2};  // 1-based, selection after the block
  double keep_rate_sketch = 1.0;
  double keep_rate_photo = 1.0;
  double keep_rate_ca = 1.0;
  bool use_cross_attention = true;
  bool use_cosine_kernel = true;    // off = concat + learned distance (ablation)
  bool use_ret_token = true;
  bool use_conv_tokenizer = true;
  bool use_positional_embeddings = true;
  bool share_encoders = true;       // siamese sketch/photo encoder
  bool ca_feed_forward = true;      // MLP block after the cross-attention layer
  bool triplet_uses_pre_ca_ret = true;
  double dropout_rate = 0.5;        // relation network, training mode only
  std::size_t relation_hidden = 0;  // 0 -> 4 * n_tokens
  std::string eval_distance = "euclidean";  // retrieval-token ranking; or "cosine"

  static constexpr std::size_t patch_side = 16;  // product of tokenizer strides

  std::size_t height() const { return image_height ? image_height : image_size; }
  std::size_t width() const { return image_width ? image_width : image_size; }
  std::size_t grid_rows() const { return height() / patch_side; }
  std::size_t grid_cols() const { return width() / patch_side; }
  std::size_t n_tokens() const { return grid_rows() * grid_cols(); }
  std::size_t relation_hidden_size() const {
    return relation_hidden ? relation_hidden : 4 * n_tokens();
  }
  double keep_rate_sa(bool is_sketch) const {
    return is_sketch ? keep_rate_sketch : keep_rate_photo;
  }

  void validate() const;

  static ModelConfig paper_scale();
};

struct TrainConfig {
  double margin = 0.2;
  std::size_t batch_size = 8;
  std::size_t epochs = 15;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 7;
  std::string label_granularity = "category";  // or "instance" (fine-grained)

  void validate() const;
};

// Flat `key = value` configuration. Every hyperparameter above is a key;
// unknown keys are rejected. Files start with a version header line.
struct Config {
  ModelConfig model;
  TrainConfig train;

  static Config defaults() { return Config{}; }
  static Config load(const std::string& path);

  // Applies a single `key = value` override; throws on unknown key or bad value.
  void set(const std::string& key, const std::string& value);

  void save(const std::string& path) const;
  std::vector<std::pair<std::string, std::string>> to_pairs() const;

  void validate() const {
    model.validate();
    train.validate();
  }
};

}  // namespace sketchmatch
