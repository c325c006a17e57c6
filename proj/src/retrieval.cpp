#include "sketchmatch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace sketchmatch {

RankMode rank_mode_from_name(const std::string& name) {
  if (name == "ret") return RankMode::ret;
  if (name == "rn") return RankMode::rn;
  fail("mode: expected 'ret' or 'rn', got '" + name + "'");
}

const char* rank_mode_name(RankMode m) { return m == RankMode::ret ? "ret" : "rn"; }

double average_precision(const std::vector<bool>& rel, std::size_t cutoff) {
  std::size_t total_relevant = 0;
  for (bool b : rel) total_relevant += b ? 1 : 0;
  require(total_relevant > 0, "average_precision: no relevant items");
  const std::size_t limit = cutoff == 0 ? rel.size() : std::min(cutoff, rel.size());
  double sum = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < limit; ++k) {
    if (!rel[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  const std::size_t denom = std::min(total_relevant, limit);
  return sum / static_cast<double>(denom);
}

double mean_average_precision(const std::vector<std::vector<bool>>& per_query,
                              std::size_t cutoff) {
  require(!per_query.empty(), "mean_average_precision: no queries");
  double sum = 0;
  for (std::size_t q = 0; q < per_query.size(); ++q) {
    std::size_t relevant = 0;
    for (bool b : per_query[q]) relevant += b ? 1 : 0;
    require(relevant > 0, "mean_average_precision: query " + std::to_string(q) +
                              " has no relevant gallery items");
    sum += average_precision(per_query[q], cutoff);
  }
  return sum / static_cast<double>(per_query.size());
}

double precision_at_k(const std::vector<std::vector<bool>>& per_query, std::size_t k) {
  require(k >= 1, "precision_at_k: K must be >= 1");
  require(!per_query.empty(), "precision_at_k: no queries");
  double sum = 0;
  for (const auto& rel : per_query) {
    const std::size_t limit = std::min(k, rel.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < limit; ++i) hits += rel[i] ? 1 : 0;
    sum += limit ? static_cast<double>(hits) / static_cast<double>(limit) : 0.0;
  }
  return sum / static_cast<double>(per_query.size());
}

double accuracy_at_k(const std::vector<std::vector<bool>>& true_match, std::size_t k) {
  require(k >= 1, "accuracy_at_k: K must be >= 1");
  require(!true_match.empty(), "accuracy_at_k: no queries");
  double hits = 0;
  for (const auto& rel : true_match) {
    const std::size_t limit = std::min(k, rel.size());
    for (std::size_t i = 0; i < limit; ++i)
      if (rel[i]) {
        hits += 1;
        break;
      }
  }
  return hits / static_cast<double>(true_match.size());
}

double expected_random_ap(std::size_t relevant, std::size_t gallery) {
  require(relevant >= 1 && relevant <= gallery, "expected_random_ap: bad counts");
  const double n = static_cast<double>(gallery);
  const double r = static_cast<double>(relevant);
  double harmonic = 0;
  for (std::size_t k = 1; k <= gallery; ++k) harmonic += 1.0 / static_cast<double>(k);
  if (gallery == 1) return 1.0;
  return harmonic / n + (r - 1.0) * (n - harmonic) / (n * (n - 1.0));
}

namespace {

RankingResult order_gallery(int query_id, RankMode mode,
                            std::vector<std::pair<int, double>> scored) {
  // Descending score; ascending id on ties, so reruns and reimplementations
  // agree bit-exactly.
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RankingResult out;
  out.query_id = query_id;
  out.mode = mode;
  out.gallery_ids.reserve(scored.size());
  out.scores.reserve(scored.size());
  for (const auto& [id, s] : scored) {
    out.gallery_ids.push_back(id);
    out.scores.push_back(s);
  }
  return out;
}

}  // namespace

RankingResult rank_ret(const Pipeline& pipeline, int query_id,
                       const Pipeline::Encoded& query,
                       const std::vector<GalleryItem>& gallery) {
  require(!gallery.empty(), "rank_ret: empty gallery");
  require(query.ret.defined(),
          "rank_ret: the checkpoint was trained without a retrieval token");
  const bool cosine = pipeline.config().model.eval_distance == "cosine";
  std::vector<std::pair<int, double>> scored;
  scored.reserve(gallery.size());
  for (const auto& item : gallery) {
    const auto& a = query.ret.value();
    const auto& b = item.encoded.ret.value();
    double dist = 0;
    if (cosine) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
      }
      const double denom = std::sqrt(na) * std::sqrt(nb);
      dist = denom > 0 ? 1.0 - dot / denom : 1.0;
    } else {
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        dist += d * d;
      }
      dist = std::sqrt(dist);
    }
    scored.emplace_back(item.id, -dist);  // ascending distance
  }
  return order_gallery(query_id, RankMode::ret, std::move(scored));
}

RankingResult rank_rn(const Pipeline& pipeline, int query_id,
                      const Pipeline::Encoded& query,
                      const std::vector<GalleryItem>& gallery) {
  require(!gallery.empty(), "rank_rn: empty gallery");
  std::vector<std::pair<int, double>> scored;
  scored.reserve(gallery.size());
  for (const auto& item : gallery) {
    auto ps = pipeline.score_pair(query, item.encoded, /*training=*/false, nullptr);
    scored.emplace_back(item.id, static_cast<double>(ps.score.item()));
  }
  return order_gallery(query_id, RankMode::rn, std::move(scored));
}

void check_zero_shot(const Corpus& corpus) {
  std::set<int> train_cats;
  for (const auto& r : corpus.records)
    if (r.split == "train") train_cats.insert(r.category_id);
  for (const auto& r : corpus.records)
    if (r.split == "test")
      require(train_cats.count(r.category_id) == 0,
              "zero-shot violation: test category " + std::to_string(r.category_id) +
                  " appears among training records");
}

EvalOutput evaluate(const Pipeline& pipeline, const Corpus& corpus,
                    const EvalOptions& options) {
  corpus.validate();
  check_zero_shot(corpus);
  const auto queries = corpus.select(Modality::sketch, "test");
  const auto photos = corpus.select(Modality::photo, "test");
  require(!queries.empty(), "eval: no test sketches");
  require(!photos.empty(), "eval: empty test gallery");

  std::vector<GalleryItem> gallery;
  gallery.reserve(photos.size());
  std::map<int, int> gallery_category;  // id -> category
  for (const auto& p : photos) {
    GalleryItem item;
    item.id = p.instance_id;
    item.category_id = p.category_id;
    item.encoded = pipeline.encode_image(corpus.load_image(p), Modality::photo);
    gallery.push_back(std::move(item));
    gallery_category[p.instance_id] = p.category_id;
  }

  EvalOutput out;
  out.report.mode = options.mode;
  out.report.query_count = queries.size();
  out.report.gallery_count = gallery.size();

  std::vector<std::vector<bool>> category_rel, instance_rel;
  double random_sum = 0;
  for (const auto& q : queries) {
    Pipeline::Encoded enc = pipeline.encode_image(corpus.load_image(q), Modality::sketch);
    RankingResult ranking = options.mode == RankMode::ret
                                ? rank_ret(pipeline, q.instance_id, enc, gallery)
                                : rank_rn(pipeline, q.instance_id, enc, gallery);
    std::vector<bool> cat_rel(ranking.gallery_ids.size());
    std::vector<bool> inst_rel(ranking.gallery_ids.size());
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < ranking.gallery_ids.size(); ++i) {
      const int gid = ranking.gallery_ids[i];
      cat_rel[i] = gallery_category.at(gid) == q.category_id;
      inst_rel[i] = gid == q.instance_id;
      relevant += cat_rel[i] ? 1 : 0;
    }
    require(relevant > 0, "eval: query " + std::to_string(q.instance_id) +
                              " has no relevant gallery items");
    random_sum += expected_random_ap(relevant, ranking.gallery_ids.size());
    out.report.per_query_ap.emplace_back(q.instance_id,
                                         average_precision(cat_rel, options.map_cutoff));
    category_rel.push_back(std::move(cat_rel));
    instance_rel.push_back(std::move(inst_rel));
    out.rankings.push_back(std::move(ranking));
  }

  out.report.map = mean_average_precision(category_rel, options.map_cutoff);
  out.report.map_random_expected = random_sum / static_cast<double>(queries.size());
  for (std::size_t k : options.ks) {
    out.report.prec_at[k] = precision_at_k(category_rel, k);
    out.report.acc_at[k] = accuracy_at_k(instance_rel, k);
  }
  return out;
}

void write_metric_report(const MetricReport& report, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "metrics: cannot open '" + path + "' for writing");
  os.precision(17);
  os << "# sketchmatch-metrics v1\n";
  os << "mode = " << rank_mode_name(report.mode) << "\n";
  os << "queries = " << report.query_count << "\n";
  os << "gallery = " << report.gallery_count << "\n";
  os << "map = " << report.map << "\n";
  os << "map_random_expected = " << report.map_random_expected << "\n";
  for (const auto& [k, v] : report.prec_at) os << "prec@" << k << " = " << v << "\n";
  for (const auto& [k, v] : report.acc_at) os << "acc@" << k << " = " << v << "\n";
  for (const auto& [q, ap] : report.per_query_ap) os << "ap " << q << " " << ap << "\n";
  require(os.good(), "metrics: write failed for '" + path + "'");
}

void write_rankings(const std::vector<RankingResult>& rankings, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "rankings: cannot open '" + path + "' for writing");
  os.precision(17);
  os << "# sketchmatch-rankings v1\n";
  for (const auto& r : rankings) {
    os << r.query_id;
    for (std::size_t i = 0; i < r.gallery_ids.size(); ++i)
      os << (i == 0 ? '\t' : ' ') << r.gallery_ids[i] << ':' << r.scores[i];
    os << "\n";
  }
  require(os.good(), "rankings: write failed for '" + path + "'");
}

}  // namespace sketchmatch
