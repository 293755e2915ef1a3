#pragma once

// Deterministic synthetic embedding worlds that reproduce the text
// clustering effect and inject a controllable similarity bias.
//
// Geometry (all directions drawn from one orthonormal frame):
//   t0        shared text anchor
//   v_k       image-cluster direction of class k
//   u_k       label-specific direction of class k
//   r_j       dictionary directions, orthogonal to the whole frame
//
//   label_k   = sqrt(c) t0 + sqrt(1 - c) u_k          c = text_concentration
//   dict_j    = sqrt(c) t0 + sqrt(1 - c) r_j
//   image     = normalize(w_v v_k + w_l u_k + w_t (m + b_s) t0 + w_n g)
//
// with b_s ~ bias_amplitude * N(0, 1) per sample and g an isotropic noise
// vector orthogonal to t0 (E|g|^2 = 1). b_s moves an image towards or away
// from every text embedding at once. Anomalies use held-out classes.
//
// PRNG: std::mt19937_64 seeded with cfg.seed, std::normal_distribution
// (libstdc++); worlds are reproducible for one standard library build.
// Draw order: frame, dictionary, train (class-major), test, test shuffle.
//
// Defaults were calibrated with tools/calibrate_synth so that the mean
// image-to-own-label similarity is ~0.23 and mean label-to-dictionary
// similarity is ~0.75.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bliss/core_math.hpp"
#include "bliss/error.hpp"
#include "bliss/eval.hpp"
#include "bliss/memory_bank.hpp"
#include "bliss/scoring.hpp"

namespace bliss::synth {

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t n_classes = 4;  // normal classes
  std::size_t n_anomaly_classes = 4;
  std::size_t n_train_per_class = 100;
  std::size_t n_test_normal = 500;
  std::size_t n_test_anomaly = 500;
  std::size_t n_dict = 500;
  double text_concentration = 0.75;
  double image_alignment = 0.5;  // w_l
  double bias_amplitude = 0.5;
  double class_weight = 1.0;    // w_v
  double anchor_weight = 0.5;   // w_t
  double anchor_offset = 0.3;   // m
  double noise = 1.2;           // w_n
  std::uint64_t seed = 0;

  static SynthConfig biased(std::uint64_t seed = 0) {
    SynthConfig c;
    c.seed = seed;
    return c;
  }

  static SynthConfig unbiased(std::uint64_t seed = 0) {
    SynthConfig c;
    c.bias_amplitude = 0.0;
    c.seed = seed;
    return c;
  }

  std::size_t frame_size() const noexcept { return 1 + 2 * (n_classes + n_anomaly_classes); }

  void validate() const {
    const auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (n_classes < 1) fail("n_classes must be >= 1");
    if (n_train_per_class < 1) fail("n_train_per_class must be >= 1");
    if (n_dict < 1) fail("n_dict must be >= 1");
    if (n_test_normal + n_test_anomaly < 1) fail("need at least one test sample");
    if (n_test_anomaly > 0 && n_anomaly_classes < 1) fail("anomalies requested without anomaly classes");
    if (dim < frame_size() + 1) {
      fail("dim " + std::to_string(dim) + " too small for " + std::to_string(frame_size()) +
           " frame directions plus noise");
    }
    if (!(text_concentration > 0.0 && text_concentration < 1.0)) fail("text_concentration must be in (0, 1)");
    for (double w : {image_alignment, class_weight, anchor_weight, noise}) {
      if (!(w >= 0.0) || !std::isfinite(w)) fail("weights must be finite and >= 0");
    }
    if (!(bias_amplitude >= 0.0) || !std::isfinite(bias_amplitude)) fail("bias_amplitude must be >= 0");
    if (!std::isfinite(anchor_offset)) fail("anchor_offset must be finite");
  }
};

struct SynthWorld {
  explicit SynthWorld(Dictionary dict) : dictionary(std::move(dict)) {}

  std::vector<std::string> normal_classes;
  std::vector<std::string> anomaly_classes;
  EmbeddingMatrix class_text_embs;  // normal classes first, then anomaly classes
  EmbeddingMatrix train;
  std::vector<std::string> train_labels;
  EmbeddingMatrix test;
  std::vector<std::string> test_labels;
  std::vector<std::uint8_t> test_is_anomaly;
  std::vector<double> test_bias;
  Dictionary dictionary;

  /// Bank over the normal classes with the dictionary attached.
  NormalMemoryBank bank(unsigned threads = 1) const {
    std::vector<std::size_t> idx(normal_classes.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const EmbeddingMatrix normal_text = class_text_embs.select(idx);
    return attach_dictionary(build_bank(train, train_labels, normal_text, normal_classes), dictionary, threads);
  }
};

namespace detail {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale_to_unit(Vec& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

inline void project_out(Vec& v, const std::vector<Vec>& frame, std::size_t count) {
  for (std::size_t f = 0; f < count; ++f) axpy(-dot(v, frame[f]), frame[f], v);
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double normal() { return dist_(rng_); }

  Vec gaussian(std::size_t dim, double sd = 1.0) {
    Vec v(dim);
    for (auto& x : v) x = sd * normal();
    return v;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Gram-Schmidt on Gaussian draws; redraws on (practically impossible)
/// near-dependence.
inline std::vector<Vec> orthonormal_frame(Sampler& s, std::size_t dim, std::size_t count) {
  std::vector<Vec> frame;
  frame.reserve(count);
  while (frame.size() < count) {
    Vec v = s.gaussian(dim);
    project_out(v, frame, frame.size());
    project_out(v, frame, frame.size());  // second pass for numerical orthogonality
    if (std::sqrt(dot(v, v)) < 1e-6) continue;
    scale_to_unit(v);
    frame.push_back(std::move(v));
  }
  return frame;
}

inline std::vector<float> to_unit_floats(Vec v) {
  std::vector<float> f(v.begin(), v.end());
  const Embedding e = l2_normalize(f);
  return {e.values().begin(), e.values().end()};
}

}  // namespace detail

inline SynthWorld generate(const SynthConfig& cfg) {
  cfg.validate();
  using detail::Vec;
  detail::Sampler s(cfg.seed);
  const std::size_t d = cfg.dim;
  const std::size_t n_all = cfg.n_classes + cfg.n_anomaly_classes;

  const auto frame = detail::orthonormal_frame(s, d, cfg.frame_size());
  const Vec& anchor = frame[0];
  const auto image_dir = [&](std::size_t k) -> const Vec& { return frame[1 + k]; };
  const auto label_dir = [&](std::size_t k) -> const Vec& { return frame[1 + n_all + k]; };

  const double text_a = std::sqrt(cfg.text_concentration);
  const double text_b = std::sqrt(1.0 - cfg.text_concentration);

  std::vector<std::string> dict_ids;
  std::vector<float> dict_data;
  for (std::size_t j = 0; j < cfg.n_dict; ++j) {
    Vec r = s.gaussian(d);
    detail::project_out(r, frame, frame.size());
    detail::scale_to_unit(r);
    Vec t(d, 0.0);
    detail::axpy(text_a, anchor, t);
    detail::axpy(text_b, r, t);
    const auto f = detail::to_unit_floats(std::move(t));
    dict_data.insert(dict_data.end(), f.begin(), f.end());
    dict_ids.push_back("entry_" + std::to_string(j));
  }

  SynthWorld w(Dictionary(EmbeddingMatrix(std::move(dict_ids), d, std::move(dict_data))));
  std::vector<std::string> class_ids;
  std::vector<float> class_data;
  for (std::size_t k = 0; k < n_all; ++k) {
    const bool normal = k < cfg.n_classes;
    std::string name = normal ? "normal_" + std::to_string(k) : "anomaly_" + std::to_string(k - cfg.n_classes);
    (normal ? w.normal_classes : w.anomaly_classes).push_back(name);
    class_ids.push_back(std::move(name));
    Vec t(d, 0.0);
    detail::axpy(text_a, anchor, t);
    detail::axpy(text_b, label_dir(k), t);
    const auto f = detail::to_unit_floats(std::move(t));
    class_data.insert(class_data.end(), f.begin(), f.end());
  }
  w.class_text_embs = EmbeddingMatrix(std::move(class_ids), d, std::move(class_data));

  const double noise_sd = 1.0 / std::sqrt(static_cast<double>(d - 1));
  const auto draw_image = [&](std::size_t k, double& bias) {
    bias = cfg.bias_amplitude * s.normal();
    Vec g = s.gaussian(d, noise_sd);
    detail::axpy(-detail::dot(g, anchor), anchor, g);
    Vec z(d, 0.0);
    detail::axpy(cfg.class_weight, image_dir(k), z);
    detail::axpy(cfg.image_alignment, label_dir(k), z);
    detail::axpy(cfg.anchor_weight * (cfg.anchor_offset + bias), anchor, z);
    detail::axpy(cfg.noise, g, z);
    return detail::to_unit_floats(std::move(z));
  };

  {
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t k = 0; k < cfg.n_classes; ++k) {
      for (std::size_t i = 0; i < cfg.n_train_per_class; ++i) {
        double bias = 0.0;
        const auto f = draw_image(k, bias);
        data.insert(data.end(), f.begin(), f.end());
        ids.push_back("train_" + std::to_string(ids.size()));
        w.train_labels.push_back(w.normal_classes[k]);
      }
    }
    w.train = EmbeddingMatrix(std::move(ids), d, std::move(data));
  }

  struct TestRow {
    std::vector<float> values;
    std::string label;
    std::uint8_t anomaly;
    double bias;
  };
  std::vector<TestRow> rows;
  for (std::size_t i = 0; i < cfg.n_test_normal; ++i) {
    const std::size_t k = i % cfg.n_classes;
    double bias = 0.0;
    auto f = draw_image(k, bias);
    rows.push_back({std::move(f), w.normal_classes[k], 0, bias});
  }
  for (std::size_t i = 0; i < cfg.n_test_anomaly; ++i) {
    const std::size_t a = i % cfg.n_anomaly_classes;
    double bias = 0.0;
    auto f = draw_image(cfg.n_classes + a, bias);
    rows.push_back({std::move(f), w.anomaly_classes[a], 1, bias});
  }
  std::shuffle(rows.begin(), rows.end(), s.engine());

  std::vector<std::string> ids;
  std::vector<float> data;
  for (auto& r : rows) {
    ids.push_back("test_" + std::to_string(ids.size()));
    data.insert(data.end(), r.values.begin(), r.values.end());
    w.test_labels.push_back(std::move(r.label));
    w.test_is_anomaly.push_back(r.anomaly);
    w.test_bias.push_back(r.bias);
  }
  w.test = EmbeddingMatrix(std::move(ids), d, std::move(data));
  return w;
}

struct BenchmarkResult {
  double auroc_bliss = 0.0;
  double auroc_biased = 0.0;
  double auroc_knn = 0.0;
};

/// Generates a world and scores its test set with all three methods.
inline BenchmarkResult bias_benchmark(const SynthConfig& cfg, const ScoringConfig& scoring = {},
                                      std::size_t k_nn = kDefaultKnn, unsigned threads = 1) {
  const SynthWorld w = generate(cfg);
  const NormalMemoryBank bank = w.bank(threads);
  const auto run = [&](Method m) {
    const auto recs = score_batch(w.test, bank, &w.dictionary, scoring, {m, k_nn, threads});
    return auroc(labeled_scores(recs, w.test_is_anomaly));
  };
  return {run(Method::bliss), run(Method::biased), run(Method::knn)};
}

}  // namespace bliss::synth
