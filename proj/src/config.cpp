#include "sketchmatch/config.hpp"

#include <fstream>
#include <sstream>

namespace sketchmatch {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config: key '" + key + "' expects a bool, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    const long long n = std::stoll(v);
    require(n >= 0, "config: key '" + key + "' expects a non-negative integer");
    return static_cast<std::size_t>(n);
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (...) {
    fail("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(parse_size(key, part));
  }
  return out;
}

std::string size_list_str(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string real_str(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

void ModelConfig::validate() const {
  require(image_size > 0 && image_size % patch_side == 0,
          "config: image_size must be a positive multiple of " +
              std::to_string(patch_side) + ", got " + std::to_string(image_size));
  require(height() % patch_side == 0 && width() % patch_side == 0,
          "config: image dimensions must be multiples of " + std::to_string(patch_side));
  require(channels == 3, "config: channels must be 3");
  require(embed_dim % 8 == 0 && embed_dim > 0,
          "config: embed_dim must be a positive multiple of 8 (conv channel ramp)");
  require(heads > 0 && embed_dim % heads == 0,
          "config: embed_dim must divide evenly into heads");
  require(ca_heads > 0 && embed_dim % ca_heads == 0,
          "config: embed_dim must divide evenly into ca_heads");
  require(mlp_ratio >= 1, "config: mlp_ratio must be >= 1");
  for (std::size_t l : selection_layers)
    require(l >= 1 && l <= layers,
            "config: selection layer " + std::to_string(l) + " outside [1, " +
                std::to_string(layers) + "]");
  for (double r : {keep_rate_sketch, keep_rate_photo, keep_rate_ca})
    require(r > 0.0 && r <= 1.0, "config: keep rates must lie in (0, 1]");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0,
          "config: dropout_rate must lie in [0, 1)");
  require(eval_distance == "euclidean" || eval_distance == "cosine",
          "config: eval_distance must be 'euclidean' or 'cosine'");
  if (!use_ret_token) {
    require(keep_rate_sketch == 1.0 && keep_rate_photo == 1.0 && keep_rate_ca == 1.0,
            "config: token selection needs the retrieval token; set keep rates to 1.0");
  }
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.image_size = 224;
  c.embed_dim = 768;
  c.layers = 12;
  c.heads = 12;
  c.ca_heads = 8;
  c.selection_layers = {4, 7, 10};
  return c;
}

void TrainConfig::validate() const {
  require(margin >= 0.0, "config: margin must be >= 0");
  require(batch_size >= 2, "config: batch_size must be >= 2");
  require(epochs >= 1, "config: epochs must be >= 1");
  require(label_granularity == "category" || label_granularity == "instance",
          "config: label_granularity must be 'category' or 'instance'");
}

void Config::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "image_size") model.image_size = parse_size(key, v);
  else if (key == "image_height") model.image_height = parse_size(key, v);
  else if (key == "image_width") model.image_width = parse_size(key, v);
  else if (key == "embed_dim") model.embed_dim = parse_size(key, v);
  else if (key == "layers") model.layers = parse_size(key, v);
  else if (key == "heads") model.heads = parse_size(key, v);
  else if (key == "mlp_ratio") model.mlp_ratio = parse_size(key, v);
  else if (key == "ca_heads") model.ca_heads = parse_size(key, v);
  else if (key == "selection_layers") model.selection_layers = parse_size_list(key, v);
  else if (key == "keep_rate_sketch") model.keep_rate_sketch = parse_real(key, v);
  else if (key == "keep_rate_photo") model.keep_rate_photo = parse_real(key, v);
  else if (key == "keep_rate_ca") model.keep_rate_ca = parse_real(key, v);
  else if (key == "use_cross_attention") model.use_cross_attention = parse_bool(key, v);
  else if (key == "use_cosine_kernel") model.use_cosine_kernel = parse_bool(key, v);
  else if (key == "use_ret_token") model.use_ret_token = parse_bool(key, v);
  else if (key == "use_conv_tokenizer") model.use_conv_tokenizer = parse_bool(key, v);
  else if (key == "use_positional_embeddings")
    model.use_positional_embeddings = parse_bool(key, v);
  else if (key == "share_encoders") model.share_encoders = parse_bool(key, v);
  else if (key == "ca_feed_forward") model.ca_feed_forward = parse_bool(key, v);
  else if (key == "triplet_uses_pre_ca_ret")
    model.triplet_uses_pre_ca_ret = parse_bool(key, v);
  else if (key == "dropout_rate") model.dropout_rate = parse_real(key, v);
  else if (key == "relation_hidden") model.relation_hidden = parse_size(key, v);
  else if (key == "eval_distance") model.eval_distance = v;
  else if (key == "margin") train.margin = parse_real(key, v);
  else if (key == "batch_size") train.batch_size = parse_size(key, v);
  else if (key == "epochs") train.epochs = parse_size(key, v);
  else if (key == "lr") train.lr = parse_real(key, v);
  else if (key == "weight_decay") train.weight_decay = parse_real(key, v);
  else if (key == "adam_beta1") train.adam_beta1 = parse_real(key, v);
  else if (key == "adam_beta2") train.adam_beta2 = parse_real(key, v);
  else if (key == "adam_eps") train.adam_eps = parse_real(key, v);
  else if (key == "seed") train.seed = static_cast<std::uint64_t>(std::stoull(v));
  else if (key == "label_granularity") train.label_granularity = v;
  else fail("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> Config::to_pairs() const {
  return {
      {"image_size", std::to_string(model.image_size)},
      {"image_height", std::to_string(model.image_height)},
      {"image_width", std::to_string(model.image_width)},
      {"embed_dim", std::to_string(model.embed_dim)},
      {"layers", std::to_string(model.layers)},
      {"heads", std::to_string(model.heads)},
      {"mlp_ratio", std::to_string(model.mlp_ratio)},
      {"ca_heads", std::to_string(model.ca_heads)},
      {"selection_layers", size_list_str(model.selection_layers)},
      {"keep_rate_sketch", real_str(model.keep_rate_sketch)},
      {"keep_rate_photo", real_str(model.keep_rate_photo)},
      {"keep_rate_ca", real_str(model.keep_rate_ca)},
      {"use_cross_attention", model.use_cross_attention ? "true" : "false"},
      {"use_cosine_kernel", model.use_cosine_kernel ? "true" : "false"},
      {"use_ret_token", model.use_ret_token ? "true" : "false"},
      {"use_conv_tokenizer", model.use_conv_tokenizer ? "true" : "false"},
      {"use_positional_embeddings", model.use_positional_embeddings ? "true" : "false"},
      {"share_encoders", model.share_encoders ? "true" : "false"},
      {"ca_feed_forward", model.ca_feed_forward ? "true" : "false"},
      {"triplet_uses_pre_ca_ret", model.triplet_uses_pre_ca_ret ? "true" : "false"},
      {"dropout_rate", real_str(model.dropout_rate)},
      {"relation_hidden", std::to_string(model.relation_hidden)},
      {"eval_distance", model.eval_distance},
      {"margin", real_str(train.margin)},
      {"batch_size", std::to_string(train.batch_size)},
      {"epochs", std::to_string(train.epochs)},
      {"lr", real_str(train.lr)},
      {"weight_decay", real_str(train.weight_decay)},
      {"adam_beta1", real_str(train.adam_beta1)},
      {"adam_beta2", real_str(train.adam_beta2)},
      {"adam_eps", real_str(train.adam_eps)},
      {"seed", std::to_string(train.seed)},
      {"label_granularity", train.label_granularity},
  };
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "config: cannot open '" + path + "'");
  Config cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    require(eq != std::string::npos, "config: '" + path + "' line " +
                                         std::to_string(lineno) + " is not key = value");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void Config::save(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), "config: cannot open '" + path + "' for writing");
  os << "# sketchmatch-config v1\n";
  for (const auto& [k, v] : to_pairs()) os << k << " = " << v << "\n";
  require(os.good(), "config: write failed for '" + path + "'");
}

}  // namespace sketchmatch
