#include "sketchmatch/training.hpp"

#include <fstream>

#include "sketchmatch/ops.hpp"
#include "sketchmatch/optimizer.hpp"

namespace sketchmatch {

Tensor triplet_loss(const std::vector<TripletRets>& triplets, double margin) {
  require(!triplets.empty(), "triplet_loss: empty batch");
  require(margin >= 0.0, "triplet_loss: margin must be >= 0");
  std::vector<Tensor> terms;
  terms.reserve(triplets.size());
  const Tensor m = Tensor::scalar(static_cast<real>(margin));
  for (const auto& t : triplets) {
    Tensor d_pos = ops::euclidean_norm(ops::sub(t.anchor, t.positive));
    Tensor d_neg = ops::euclidean_norm(ops::sub(t.anchor, t.negative));
    terms.push_back(ops::relu(ops::add(ops::sub(d_pos, d_neg), m)));
  }
  return ops::mean_all(ops::stack_scalars(terms));
}

Tensor relation_loss(const std::vector<Tensor>& scores, const std::vector<int>& match) {
  require(!scores.empty(), "relation_loss: no pairs");
  require(scores.size() == match.size(),
          "relation_loss: " + std::to_string(scores.size()) + " scores vs " +
              std::to_string(match.size()) + " labels");
  std::vector<Tensor> residuals;
  residuals.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Tensor target = Tensor::scalar(match[i] ? real(1) : real(0));
    residuals.push_back(ops::sub(scores[i], target));
  }
  // mean of squared residuals
  return ops::mean_square(ops::stack_scalars(residuals));
}

Tensor total_loss(const Tensor& l_tri, const Tensor& l_re) {
  return ops::add(l_tri, l_re);
}

namespace {

struct PairedInstance {
  SampleRecord sketch;
  SampleRecord photo;
};

std::vector<PairedInstance> training_pairs(const Corpus& corpus) {
  std::vector<PairedInstance> pairs;
  for (const auto& rec : corpus.select(Modality::sketch, "train")) {
    const SampleRecord* photo = corpus.find_photo(rec.instance_id);
    require(photo != nullptr, "train: sketch instance " +
                                  std::to_string(rec.instance_id) + " has no photo");
    pairs.push_back({rec, *photo});
  }
  return pairs;
}

}  // namespace

TrainResult train_model(Pipeline& pipeline, const Corpus& corpus) {
  const Config& cfg = pipeline.config();
  const TrainConfig& tc = cfg.train;
  const bool use_triplet = cfg.model.use_ret_token;
  const bool instance_labels = tc.label_granularity == "instance";

  corpus.validate();
  std::vector<PairedInstance> pairs = training_pairs(corpus);
  require(corpus.categories("train").size() >= 2,
          "train: need at least 2 training categories");
  require(pairs.size() >= tc.batch_size,
          "train: fewer training pairs (" + std::to_string(pairs.size()) +
              ") than one batch (" + std::to_string(tc.batch_size) + ")");

  AdamWConfig acfg;
  acfg.beta1 = static_cast<real>(tc.adam_beta1);
  acfg.beta2 = static_cast<real>(tc.adam_beta2);
  acfg.eps = static_cast<real>(tc.adam_eps);
  acfg.weight_decay = static_cast<real>(tc.weight_decay);
  AdamW optimizer(pipeline.params().items(), acfg);

  Rng order_rng(Rng::derive(tc.seed, 101));
  Rng dropout_rng(Rng::derive(tc.seed, 202));
  Rng negative_rng(Rng::derive(tc.seed, 303));

  // Images are small; keep them decoded for the whole run.
  std::vector<Image> sketch_imgs, photo_imgs;
  sketch_imgs.reserve(pairs.size());
  photo_imgs.reserve(pairs.size());
  for (const auto& p : pairs) {
    sketch_imgs.push_back(corpus.load_image(p.sketch));
    photo_imgs.push_back(corpus.load_image(p.photo));
  }

  TrainResult result;
  const std::size_t B = tc.batch_size;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochLoss epoch_loss;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + B <= order.size(); start += B) {
      Tape tape;
      std::vector<Pipeline::Encoded> enc_s(B), enc_p(B);
      std::vector<int> cat(B), inst(B);
      for (std::size_t i = 0; i < B; ++i) {
        const std::size_t idx = order[start + i];
        enc_s[i] = pipeline.encode_image(sketch_imgs[idx], Modality::sketch);
        enc_p[i] = pipeline.encode_image(photo_imgs[idx], Modality::photo);
        cat[i] = pairs[idx].sketch.category_id;
        inst[i] = pairs[idx].sketch.instance_id;
      }

      Tensor l_tri = Tensor::scalar(0);
      if (use_triplet) {
        std::vector<TripletRets> triplets;
        for (std::size_t i = 0; i < B; ++i) {
          std::vector<std::size_t> candidates;
          for (std::size_t j = 0; j < B; ++j)
            if (cat[j] != cat[i]) candidates.push_back(j);
          if (candidates.empty()) continue;  // single-category batch tail
          const std::size_t pick = candidates[static_cast<std::size_t>(
              negative_rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
          triplets.push_back({enc_s[i].ret, enc_p[i].ret, enc_p[pick].ret});
        }
        if (!triplets.empty()) l_tri = triplet_loss(triplets, tc.margin);
      }

      std::vector<Tensor> scores;
      std::vector<int> match;
      scores.reserve(B * B);
      match.reserve(B * B);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
          auto ps = pipeline.score_pair(enc_s[i], enc_p[j], /*training=*/true,
                                        &dropout_rng);
          scores.push_back(ps.score);
          match.push_back(instance_labels ? (inst[i] == inst[j]) : (cat[i] == cat[j]));
        }
      Tensor l_re = relation_loss(scores, match);
      Tensor loss = total_loss(l_tri, l_re);

      pipeline.params().zero_grads();
      tape.backward(loss);
      optimizer.step(static_cast<real>(tc.lr));
      ++result.steps;

      epoch_loss.l_tri += l_tri.item();
      epoch_loss.l_re += l_re.item();
      epoch_loss.l_total += loss.item();
      ++batches;
    }
    require(batches > 0, "train: no full batch fits the training set");
    epoch_loss.l_tri /= static_cast<double>(batches);
    epoch_loss.l_re /= static_cast<double>(batches);
    epoch_loss.l_total /= static_cast<double>(batches);
    result.trace.push_back(epoch_loss);
  }
  return result;
}

void write_loss_trace(const std::vector<EpochLoss>& trace, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "loss trace: cannot open '" + path + "' for writing");
  os << "# sketchmatch-loss-trace v1\n";
  os << "epoch,l_tri,l_re,l_total\n";
  os.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i)
    os << (i + 1) << "," << trace[i].l_tri << "," << trace[i].l_re << ","
       << trace[i].l_total << "\n";
  require(os.good(), "loss trace: write failed for '" + path + "'");
}

TrainResult train_and_save(const Config& cfg, const Corpus& corpus,
                           const std::string& checkpoint_path) {
  Pipeline pipeline(cfg, Rng::derive(cfg.train.seed, 1));
  TrainResult result = train_model(pipeline, corpus);
  pipeline.save(checkpoint_path);
  cfg.save(checkpoint_path + ".config");
  write_loss_trace(result.trace, checkpoint_path + ".loss.csv");
  return result;
}

}  // namespace sketchmatch
