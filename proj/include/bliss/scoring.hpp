#pragma once

// Anomaly scores over a memory bank. Higher always means more anomalous.
//
//   IC(z, i) = -(sim(z, C_i) - mu_i) / (sigma_i + eps)
//   ET(z, i) = mean over d in topK(z, D) of (sim(z, d) - mu_i(d)) / (sigma_i(d) + eps)
//   s(z)     = min_i IC(z, i) + lambda * ET(z, i)
//
// The top-K dictionary set depends only on z and the dictionary, so it is
// selected once per sample and shared by every class.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bliss/core_math.hpp"
#include "bliss/error.hpp"
#include "bliss/memory_bank.hpp"
#include "bliss/parallel.hpp"

namespace bliss {

struct ScoringConfig {
  double lambda = 0.5;
  std::size_t k = 10;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw Error(ErrorCode::InvalidConfig, "lambda must be a finite value >= 0");
    }
    if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
    if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
      throw Error(ErrorCode::InvalidConfig, "epsilon must lie in (0, 1e-2]");
    }
  }
};

inline constexpr std::size_t kDefaultKnn = 5;

enum class Method { bliss, biased, knn };

constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::bliss: return "bliss";
    case Method::biased: return "biased";
    case Method::knn: return "knn";
  }
  return "bliss";
}

inline Method parse_method(std::string_view s) {
  if (s == "bliss") return Method::bliss;
  if (s == "biased") return Method::biased;
  if (s == "knn") return Method::knn;
  throw Error(ErrorCode::InvalidConfig, "unknown method '" + std::string(s) + "'");
}

/// Per-sample result. Per-class vectors are indexed like bank.class_names().
/// For the biased method et_per_class is all zero and topk_dict_ids empty;
/// for knn the per-class vectors are empty and argmin_class names the class
/// of the nearest train sample.
struct ScoreRecord {
  std::string sample_id;
  std::vector<double> ic_per_class;
  std::vector<double> et_per_class;
  std::vector<double> combined_per_class;
  double score = 0.0;
  std::size_t argmin = 0;
  std::string argmin_class;
  std::vector<std::string> topk_dict_ids;
};

struct ExternalTextScore {
  double value = 0.0;
  std::vector<std::size_t> topk;  // indices into the dictionary, best first
};

namespace detail {

inline void require_dim(std::span<const float> z, std::size_t dim) {
  if (z.size() != dim) {
    throw Error(ErrorCode::DimMismatch,
                "sample dim " + std::to_string(z.size()) + " vs bank dim " + std::to_string(dim));
  }
}

inline double internal_class_score_at(std::span<const float> z, const NormalMemoryBank& bank,
                                      std::size_t cls, double epsilon) {
  const MomentStats& st = bank.class_stats(cls);
  const double sim = cosine_sim(z, bank.class_text_embs().row(cls));
  return -(sim - st.mean) / (st.std + epsilon);
}

inline double external_text_score_at(std::span<const double> dict_sims,
                                      std::span<const std::size_t> topk, const DictStats& stats,
                                      std::size_t cls, double epsilon) {
  double acc = 0.0;
  for (std::size_t j : topk) {
    const MomentStats& st = stats.at(cls, j);
    acc += (dict_sims[j] - st.mean) / (st.std + epsilon);
  }
  return acc / static_cast<double>(topk.size());
}

inline const DictStats& require_dict_stats(const NormalMemoryBank& bank, const Dictionary& dict) {
  if (!bank.has_stats_for(dict)) {
    throw Error(ErrorCode::MissingDictStats, "bank has no statistics for this dictionary");
  }
  return *bank.dict_stats();
}

inline void require_k(const ScoringConfig& cfg, const Dictionary& dict) {
  if (cfg.k > dict.size()) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(cfg.k) + " exceeds dictionary size " +
                                          std::to_string(dict.size()));
  }
}

inline void finish_min(ScoreRecord& rec, const NormalMemoryBank& bank) {
  const auto& c = rec.combined_per_class;
  const auto it = std::min_element(c.begin(), c.end());  // first minimum on ties
  rec.argmin = static_cast<std::size_t>(it - c.begin());
  rec.score = *it;
  rec.argmin_class = bank.class_names()[rec.argmin];
}

}  // namespace detail

inline double internal_class_score(std::span<const float> z, const NormalMemoryBank& bank,
                                   const std::string& cls, const ScoringConfig& cfg = {}) {
  const std::size_t i = bank.class_index(cls);
  detail::require_dim(z, bank.dim());
  return detail::internal_class_score_at(z, bank, i, cfg.epsilon);
}

inline ExternalTextScore external_text_score(std::span<const float> z, const NormalMemoryBank& bank,
                                             const std::string& cls, const Dictionary& dict,
                                             const ScoringConfig& cfg = {}) {
  const std::size_t i = bank.class_index(cls);
  detail::require_dim(z, bank.dim());
  const DictStats& stats = detail::require_dict_stats(bank, dict);
  detail::require_k(cfg, dict);
  const auto sims = sims_to_rows(z, dict.embs());
  ExternalTextScore out;
  out.topk = topk_indices(sims, cfg.k);
  out.value = detail::external_text_score_at(sims, out.topk, stats, i, cfg.epsilon);
  return out;
}

inline ScoreRecord bliss_score(std::span<const float> z, const NormalMemoryBank& bank,
                               const Dictionary& dict, const ScoringConfig& cfg = {}) {
  detail::require_dim(z, bank.dim());
  const DictStats& stats = detail::require_dict_stats(bank, dict);
  detail::require_k(cfg, dict);

  const auto sims = sims_to_rows(z, dict.embs());
  const auto topk = topk_indices(sims, cfg.k);

  ScoreRecord rec;
  const std::size_t n = bank.n_classes();
  rec.ic_per_class.resize(n);
  rec.et_per_class.resize(n);
  rec.combined_per_class.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.ic_per_class[i] = detail::internal_class_score_at(z, bank, i, cfg.epsilon);
    rec.et_per_class[i] = detail::external_text_score_at(sims, topk, stats, i, cfg.epsilon);
    rec.combined_per_class[i] = rec.ic_per_class[i] + cfg.lambda * rec.et_per_class[i];
  }
  detail::finish_min(rec, bank);
  rec.topk_dict_ids.reserve(topk.size());
  for (std::size_t j : topk) rec.topk_dict_ids.push_back(dict.ids()[j]);
  return rec;
}

/// Internal class score alone, minimized over classes.
inline ScoreRecord biased_record(std::span<const float> z, const NormalMemoryBank& bank,
                                 const ScoringConfig& cfg = {}) {
  detail::require_dim(z, bank.dim());
  ScoreRecord rec;
  const std::size_t n = bank.n_classes();
  rec.ic_per_class.resize(n);
  rec.et_per_class.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rec.ic_per_class[i] = detail::internal_class_score_at(z, bank, i, cfg.epsilon);
  }
  rec.combined_per_class = rec.ic_per_class;
  detail::finish_min(rec, bank);
  return rec;
}

inline double biased_score(std::span<const float> z, const NormalMemoryBank& bank,
                           const ScoringConfig& cfg = {}) {
  return biased_record(z, bank, cfg).score;
}

/// Mean cosine distance to the k_nn nearest train samples, pooled over all
/// classes.
inline ScoreRecord knn_record(std::span<const float> z, const NormalMemoryBank& bank,
                              std::size_t k_nn = kDefaultKnn) {
  detail::require_dim(z, bank.dim());
  const std::size_t total = bank.total_train();
  if (k_nn < 1 || k_nn > total) {
    throw Error(ErrorCode::KTooLarge, "k_nn = " + std::to_string(k_nn) + " with " +
                                          std::to_string(total) + " train samples");
  }
  struct Neighbor {
    double dist;
    std::size_t cls;
  };
  std::vector<Neighbor> all;
  all.reserve(total);
  for (std::size_t c = 0; c < bank.n_classes(); ++c) {
    const auto& m = bank.train(c);
    for (std::size_t r = 0; r < m.size(); ++r) all.push_back({1.0 - cosine_sim(z, m.row(r)), c});
  }
  const auto closer = [](const Neighbor& a, const Neighbor& b) { return a.dist < b.dist; };
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k_nn - 1), all.end(), closer);
  std::sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k_nn), closer);
  double acc = 0.0;
  for (std::size_t i = 0; i < k_nn; ++i) acc += all[i].dist;

  ScoreRecord rec;
  rec.score = acc / static_cast<double>(k_nn);
  rec.argmin = all.front().cls;
  rec.argmin_class = bank.class_names()[rec.argmin];
  return rec;
}

inline double knn_score(std::span<const float> z, const NormalMemoryBank& bank,
                        std::size_t k_nn = kDefaultKnn) {
  return knn_record(z, bank, k_nn).score;
}

struct BatchOptions {
  Method method = Method::bliss;
  std::size_t k_nn = kDefaultKnn;
  unsigned threads = 1;
};

/// One record per test row, in row order. dict may be null unless the
/// method is bliss.
inline std::vector<ScoreRecord> score_batch(const EmbeddingMatrix& test, const NormalMemoryBank& bank,
                                            const Dictionary* dict, const ScoringConfig& cfg,
                                            const BatchOptions& opts = {}) {
  cfg.validate();
  if (test.dim() != bank.dim() && !test.empty()) {
    throw Error(ErrorCode::DimMismatch, "test dim " + std::to_string(test.dim()) + " vs bank dim " +
                                            std::to_string(bank.dim()));
  }
  if (opts.method == Method::bliss) {
    if (dict == nullptr) throw Error(ErrorCode::MissingDictStats, "bliss scoring requires a dictionary");
    detail::require_dict_stats(bank, *dict);
    detail::require_k(cfg, *dict);
  }
  std::vector<ScoreRecord> out(test.size());
  parallel_for(test.size(), opts.threads, [&](std::size_t r) {
    const auto z = test.row(r);
    switch (opts.method) {
      case Method::bliss: out[r] = bliss_score(z, bank, *dict, cfg); break;
      case Method::biased: out[r] = biased_record(z, bank, cfg); break;
      case Method::knn: out[r] = knn_record(z, bank, opts.k_nn); break;
    }
    out[r].sample_id = test.ids()[r];
  });
  return out;
}

/// Recombines the stored IC/ET decomposition at a different lambda.
inline double recombine(const ScoreRecord& rec, double lambda) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rec.ic_per_class.size(); ++i) {
    best = std::min(best, rec.ic_per_class[i] + lambda * rec.et_per_class[i]);
  }
  return best;
}

}  // namespace bliss
