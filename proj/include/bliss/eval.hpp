#pragma once

// Ranking metrics, similarity-bias diagnostics and the lambda sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bliss/core_math.hpp"
#include "bliss/error.hpp"
#include "bliss/memory_bank.hpp"
#include "bliss/scoring.hpp"

namespace bliss {

/// Scores with binary labels, 1 = anomaly.
struct LabeledScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  std::size_t n_anomaly() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  }
  std::size_t n_normal() const noexcept { return labels.size() - n_anomaly(); }

  void validate() const {
    if (scores.size() != labels.size()) {
      throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
    }
    for (auto l : labels) {
      if (l > 1) throw Error(ErrorCode::InvalidConfig, "labels must be 0 or 1");
    }
    for (double s : scores) {
      if (std::isnan(s)) throw Error(ErrorCode::NonFinite, "score is NaN");
    }
  }

  void require_both_classes() const {
    validate();
    if (n_anomaly() == 0 || n_normal() == 0) {
      throw Error(ErrorCode::OneClassOnly, "need at least one normal and one anomaly sample");
    }
  }
};

inline LabeledScores labeled_scores(std::span<const ScoreRecord> records,
                                    std::span<const std::uint8_t> labels) {
  if (records.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "records and labels differ in length");
  }
  LabeledScores ls;
  ls.scores.reserve(records.size());
  for (const auto& r : records) ls.scores.push_back(r.score);
  ls.labels.assign(labels.begin(), labels.end());
  return ls;
}

namespace detail {

/// Midranks (1-based, ties averaged) of values.
inline std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Mann-Whitney statistic: P(anomaly score > normal score), ties count 1/2.
inline double auroc(const LabeledScores& ls) {
  ls.require_both_classes();
  const auto ranks = detail::midranks(ls.scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ls.labels[i] == 1) rank_sum += ranks[i];
  }
  const double na = static_cast<double>(ls.n_anomaly());
  const double nn = static_cast<double>(ls.n_normal());
  return (rank_sum - na * (na + 1.0) / 2.0) / (na * nn);
}

/// Smallest false positive rate over thresholds tau (flag score >= tau) whose
/// true positive rate reaches tpr_target. Thresholds are the distinct scores.
inline double fpr_at_tpr(const LabeledScores& ls, double tpr_target = 0.95) {
  ls.require_both_classes();
  std::vector<std::size_t> order(ls.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ls.scores[a] > ls.scores[b]; });
  const double na = static_cast<double>(ls.n_anomaly());
  const double nn = static_cast<double>(ls.n_normal());
  std::size_t tp = 0;
  std::size_t fp = 0;
  double best = 1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double tau = ls.scores[order[i]];
    while (i < order.size() && ls.scores[order[i]] == tau) {
      (ls.labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    if (static_cast<double>(tp) / na >= tpr_target) {
      best = std::min(best, static_cast<double>(fp) / nn);
      break;  // fp only grows as tau decreases
    }
  }
  return best;
}

struct EvalReport {
  double auroc = 0.0;
  double fpr95 = 0.0;
  std::size_t n_normal = 0;
  std::size_t n_anomaly = 0;
};

inline EvalReport evaluate(const LabeledScores& ls) {
  return {auroc(ls), fpr_at_tpr(ls, 0.95), ls.n_normal(), ls.n_anomaly()};
}

/// Mean similarity of z to every dictionary entry.
inline double avg_dict_similarity(std::span<const float> z, const Dictionary& dict) {
  const auto sims = sims_to_rows(z, dict.embs());
  double acc = 0.0;
  for (double s : sims) acc += s;
  return acc / static_cast<double>(sims.size());
}

inline std::vector<double> avg_dict_similarities(const EmbeddingMatrix& images, const Dictionary& dict,
                                                 unsigned threads = 1) {
  std::vector<double> out(images.size());
  parallel_for(images.size(), threads,
               [&](std::size_t i) { out[i] = avg_dict_similarity(images.row(i), dict); });
  return out;
}

struct ThresholdRule {
  enum class Kind { prevalence, fixed };
  Kind kind = Kind::prevalence;
  double tau = 0.0;

  static ThresholdRule prevalence() { return {Kind::prevalence, 0.0}; }
  static ThresholdRule fixed(double tau) { return {Kind::fixed, tau}; }
};

struct QuantileErrorProfile {
  std::size_t n_quantiles = 0;
  double threshold = 0.0;
  std::vector<std::size_t> bucket_size;
  std::vector<double> mean_dict_sim;
  std::vector<std::size_t> fn_count;
  std::vector<std::size_t> fp_count;
  std::vector<double> fn_proportion;
  std::vector<double> fp_proportion;
};

/// Sorts samples by dict_sims ascending, splits them into equal-count
/// buckets and reports per-bucket false negative / false positive shares
/// of a thresholded scorer.
///
/// prevalence: the n_anomaly highest scores are flagged (stable on ties),
/// the reported threshold is the lowest flagged score.
/// fixed: score >= tau is flagged.
inline QuantileErrorProfile error_quantile_profile(const LabeledScores& ls,
                                                   std::span<const double> dict_sims,
                                                   std::size_t n_quantiles,
                                                   ThresholdRule rule = ThresholdRule::prevalence()) {
  ls.validate();
  const std::size_t n = ls.scores.size();
  if (dict_sims.size() != n) throw Error(ErrorCode::LengthMismatch, "dict_sims and scores differ in length");
  if (n_quantiles < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 quantiles");
  if (n_quantiles > n) {
    throw Error(ErrorCode::DegenerateBucket, std::to_string(n_quantiles) + " quantiles for " +
                                                 std::to_string(n) + " samples");
  }

  std::vector<std::uint8_t> flagged(n, 0);
  QuantileErrorProfile prof;
  prof.n_quantiles = n_quantiles;
  if (rule.kind == ThresholdRule::Kind::fixed) {
    prof.threshold = rule.tau;
    for (std::size_t i = 0; i < n; ++i) flagged[i] = ls.scores[i] >= rule.tau ? 1 : 0;
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ls.scores[a] > ls.scores[b]; });
    const std::size_t n_flag = ls.n_anomaly();
    prof.threshold = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < n_flag; ++r) {
      flagged[order[r]] = 1;
      prof.threshold = ls.scores[order[r]];
    }
  }

  std::vector<std::size_t> by_sim(n);
  std::iota(by_sim.begin(), by_sim.end(), std::size_t{0});
  std::stable_sort(by_sim.begin(), by_sim.end(),
                   [&](std::size_t a, std::size_t b) { return dict_sims[a] < dict_sims[b]; });

  const std::size_t base = n / n_quantiles;
  const std::size_t extra = n % n_quantiles;
  std::size_t pos = 0;
  for (std::size_t q = 0; q < n_quantiles; ++q) {
    const std::size_t size = base + (q < extra ? 1 : 0);
    std::size_t fn = 0;
    std::size_t fp = 0;
    double sim_acc = 0.0;
    for (std::size_t t = pos; t < pos + size; ++t) {
      const std::size_t i = by_sim[t];
      sim_acc += dict_sims[i];
      if (ls.labels[i] == 1 && flagged[i] == 0) ++fn;
      if (ls.labels[i] == 0 && flagged[i] == 1) ++fp;
    }
    pos += size;
    prof.bucket_size.push_back(size);
    prof.mean_dict_sim.push_back(sim_acc / static_cast<double>(size));
    prof.fn_count.push_back(fn);
    prof.fp_count.push_back(fp);
    prof.fn_proportion.push_back(static_cast<double>(fn) / static_cast<double>(size));
    prof.fp_proportion.push_back(static_cast<double>(fp) / static_cast<double>(size));
  }
  return prof;
}

struct DistributionSummary {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolated quantile (the "type 7" definition) of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of an empty sequence");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline DistributionSummary summarize(std::span<const double> values) {
  const MomentStats m = moments(values);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {m.mean,
          m.std,
          sorted.front(),
          quantile_sorted(sorted, 0.25),
          quantile_sorted(sorted, 0.5),
          quantile_sorted(sorted, 0.75),
          sorted.back()};
}

/// (a) similarity of each image to its own class label, and (b) per class
/// label, the mean similarity of that label to the dictionary.
struct ClusteringReport {
  std::vector<std::string> image_ids;
  std::vector<double> image_to_label;
  std::vector<std::string> label_names;
  std::vector<double> label_to_dict;
  DistributionSummary image_to_label_summary;
  DistributionSummary label_to_dict_summary;
};

inline ClusteringReport text_clustering_report(const EmbeddingMatrix& class_text_embs,
                                               const EmbeddingMatrix& image_embs,
                                               std::span<const std::string> image_labels,
                                               const Dictionary& dict) {
  if (image_labels.size() != image_embs.size()) {
    throw Error(ErrorCode::LengthMismatch, "image labels and embeddings differ in count");
  }
  if (image_embs.empty()) throw Error(ErrorCode::EmptyInput, "no images given");
  if (class_text_embs.dim() != image_embs.dim() || class_text_embs.dim() != dict.dim()) {
    throw Error(ErrorCode::DimMismatch, "class text, image and dictionary dims disagree");
  }
  ClusteringReport rep;
  std::vector<std::uint8_t> used(class_text_embs.size(), 0);
  for (std::size_t i = 0; i < image_embs.size(); ++i) {
    const std::size_t c = class_text_embs.find(image_labels[i]);
    if (c == class_text_embs.size()) {
      throw Error(ErrorCode::UnknownLabel, "image label '" + image_labels[i] + "' has no class embedding");
    }
    used[c] = 1;
    rep.image_ids.push_back(image_embs.ids()[i]);
    rep.image_to_label.push_back(cosine_sim(image_embs.row(i), class_text_embs.row(c)));
  }
  for (std::size_t c = 0; c < class_text_embs.size(); ++c) {
    if (!used[c]) continue;
    rep.label_names.push_back(class_text_embs.ids()[c]);
    rep.label_to_dict.push_back(avg_dict_similarity(class_text_embs.row(c), dict));
  }
  rep.image_to_label_summary = summarize(rep.image_to_label);
  rep.label_to_dict_summary = summarize(rep.label_to_dict);
  return rep;
}

struct SweepRow {
  double lambda = 0.0;
  EvalReport report;
};

/// Scores once with the full IC/ET decomposition and re-evaluates the final
/// combination for each lambda.
inline std::vector<SweepRow> lambda_sweep(const EmbeddingMatrix& test, std::span<const std::uint8_t> labels,
                                          const NormalMemoryBank& bank, const Dictionary& dict,
                                          const ScoringConfig& cfg_base, std::span<const double> lambdas,
                                          unsigned threads = 1) {
  for (double l : lambdas) {
    ScoringConfig c = cfg_base;
    c.lambda = l;
    c.validate();
  }
  const auto records = score_batch(test, bank, &dict, cfg_base, {Method::bliss, kDefaultKnn, threads});
  LabeledScores ls;
  ls.labels.assign(labels.begin(), labels.end());
  ls.scores.resize(records.size());
  std::vector<SweepRow> rows;
  rows.reserve(lambdas.size());
  for (double l : lambdas) {
    for (std::size_t i = 0; i < records.size(); ++i) ls.scores[i] = recombine(records[i], l);
    rows.push_back({l, evaluate(ls)});
  }
  return rows;
}

/// Pearson correlation; 0 when either side has zero variance.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "correlation inputs differ in length");
  if (x.empty()) throw Error(ErrorCode::EmptyInput, "correlation of empty inputs");
  const double mx = moments(x).mean;
  const double my = moments(y).mean;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation (Pearson over midranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "correlation inputs differ in length");
  const auto rx = detail::midranks(x);
  const auto ry = detail::midranks(y);
  return pearson(rx, ry);
}

}  // namespace bliss
