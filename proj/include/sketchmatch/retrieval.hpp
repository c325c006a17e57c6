#pragma once

#include <map>
#include <string>
#include <vector>

#include "sketchmatch/corpus.hpp"
#include "sketchmatch/pipeline.hpp"

namespace sketchmatch {

enum class RankMode { ret, rn };

RankMode rank_mode_from_name(const std::string& name);
const char* rank_mode_name(RankMode m);

// Ordered gallery for one query. Scores are non-increasing in rank order
// (mode ret stores negated retrieval-token distance); ties resolved by
// ascending gallery id everywhere.
struct RankingResult {
  int query_id = 0;
  RankMode mode = RankMode::ret;
  std::vector<int> gallery_ids;
  std::vector<double> scores;
};

struct MetricReport {
  RankMode mode = RankMode::ret;
  std::size_t query_count = 0, gallery_count = 0;
  double map = 0.0;
  double map_random_expected = 0.0;  // analytic expectation for random ranking
  std::map<std::size_t, double> prec_at;
  std::map<std::size_t, double> acc_at;
  std::vector<std::pair<int, double>> per_query_ap;
};

// --- metric primitives (pure; relevance given in rank order) ---------------

// AP truncated at `cutoff` ranks (0 = none): mean over counted relevant items
// of precision at their rank, normalized by min(R, cutoff).
double average_precision(const std::vector<bool>& relevance_in_rank_order,
                         std::size_t cutoff = 0);
double mean_average_precision(const std::vector<std::vector<bool>>& per_query,
                              std::size_t cutoff = 0);
// Mean fraction of relevant items in the top K (K truncated to gallery size).
double precision_at_k(const std::vector<std::vector<bool>>& per_query, std::size_t k);
// Fraction of queries whose true match appears in the top K.
double accuracy_at_k(const std::vector<std::vector<bool>>& true_match_in_rank_order,
                     std::size_t k);

// Exact E[AP] under a uniformly random ranking with R relevant of N:
// H_N/N + (R-1)(N - H_N)/(N(N-1)).
double expected_random_ap(std::size_t relevant, std::size_t gallery);

// --- ranking ----------------------------------------------------------------

struct GalleryItem {
  int id = 0;
  int category_id = 0;
  Pipeline::Encoded encoded;
};

RankingResult rank_ret(const Pipeline& pipeline, int query_id,
                       const Pipeline::Encoded& query,
                       const std::vector<GalleryItem>& gallery);
RankingResult rank_rn(const Pipeline& pipeline, int query_id,
                      const Pipeline::Encoded& query,
                      const std::vector<GalleryItem>& gallery);

// --- protocol ---------------------------------------------------------------

// Refuses to run when any test category also appears among training records.
void check_zero_shot(const Corpus& corpus);

struct EvalOptions {
  RankMode mode = RankMode::rn;
  std::vector<std::size_t> ks = {1, 5, 10};
  std::size_t map_cutoff = 0;
  // category-level relevance for mAP/Prec@K; acc@K always uses the paired
  // instance (fine-grained protocol)
};

struct EvalOutput {
  MetricReport report;
  std::vector<RankingResult> rankings;
};

EvalOutput evaluate(const Pipeline& pipeline, const Corpus& corpus,
                    const EvalOptions& options);

void write_metric_report(const MetricReport& report, const std::string& path);
void write_rankings(const std::vector<RankingResult>& rankings, const std::string& path);

}  // namespace sketchmatch
