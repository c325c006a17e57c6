#pragma once

#include <array>
#include <string>
#include <vector>

#include "sketchmatch/corpus.hpp"
#include "sketchmatch/pipeline.hpp"

namespace sketchmatch {

// One triplet's retrieval tokens: anchor sketch, matching photo, non-matching
// photo (each [1, d]).
struct TripletRets {
  Tensor anchor, positive, negative;
};

// Mean over triplets of max(||a - p|| - ||a - n|| + margin, 0), euclidean.
Tensor triplet_loss(const std::vector<TripletRets>& triplets, double margin);

// Mean over pairs of (r - 1[match])^2; the mean (rather than the paper's raw
// double sum) keeps the magnitude comparable to the triplet term without
// moving the argmin.
Tensor relation_loss(const std::vector<Tensor>& scores, const std::vector<int>& match);

// L = L_tri + L_re, unweighted.
Tensor total_loss(const Tensor& l_tri, const Tensor& l_re);

struct EpochLoss {
  double l_tri = 0, l_re = 0, l_total = 0;
};

struct TrainResult {
  std::vector<EpochLoss> trace;  // one entry per epoch (batch means)
  std::size_t steps = 0;
};

// Full training loop: in-batch pairing with B sketches and their B paired
// photos, triplets with in-batch random negatives from other categories,
// relation loss over all B^2 pairs. Fully seeded; single worker.
TrainResult train_model(Pipeline& pipeline, const Corpus& corpus);

// `epoch,l_tri,l_re,l_total` lines under a version header.
void write_loss_trace(const std::vector<EpochLoss>& trace, const std::string& path);

// Convenience used by the CLI: train, then write checkpoint, resolved config
// copy (<ckpt>.config) and loss trace (<ckpt>.loss.csv).
TrainResult train_and_save(const Config& cfg, const Corpus& corpus,
                           const std::string& checkpoint_path);

}  // namespace sketchmatch
