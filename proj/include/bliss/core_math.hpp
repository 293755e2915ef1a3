#pragma once

// Numerical substrate: unit-norm embeddings, cosine similarity, top-K
// selection and moment statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bliss/error.hpp"
#include "bliss/parallel.hpp"

namespace bliss {

inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-4;

namespace detail {

inline double squared_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return acc;
}

inline void require_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "vector has a non-finite entry");
  }
}

}  // namespace detail

/// A unit-L2-norm vector. Only constructible through l2_normalize or
/// Embedding::from_unit, which checks the norm.
class Embedding {
 public:
  static Embedding from_unit(std::vector<float> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "embedding has dimension 0");
    detail::require_finite(values);
    const double norm = std::sqrt(detail::squared_norm(values));
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::NotNormalized, "embedding norm " + std::to_string(norm) + " is not 1");
    }
    return Embedding(std::move(values));
  }

  std::span<const float> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  operator std::span<const float>() const noexcept { return values_; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  explicit Embedding(std::vector<float> values) : values_(std::move(values)) {}
  friend Embedding l2_normalize(std::span<const float> v);

  std::vector<float> values_;
};

/// Scales v to unit L2 norm. The norm is accumulated in double.
inline Embedding l2_normalize(std::span<const float> v) {
  if (v.empty()) throw Error(ErrorCode::EmptyInput, "cannot normalize an empty vector");
  detail::require_finite(v);
  const double norm = std::sqrt(detail::squared_norm(v));
  if (norm <= kZeroNormThreshold) throw Error(ErrorCode::ZeroVector, "vector norm is zero");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  }
  return Embedding(std::move(out));
}

/// Dot product of two unit vectors, accumulated sequentially in double and
/// clamped to [-1, 1].
inline double cosine_sim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimMismatch,
                "dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return std::clamp(acc, -1.0, 1.0);
}

/// Row-major n x dim matrix of unit-norm rows with unique string ids.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  /// Takes rows that are already unit-norm (within 1e-4); throws otherwise.
  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data)
      : ids_(std::move(ids)), dim_(dim), data_(std::move(data)) {
    validate_shape();
    for (std::size_t i = 0; i < size(); ++i) {
      auto r = row(i);
      detail::require_finite(r);
      const double norm = std::sqrt(detail::squared_norm(r));
      if (std::abs(norm - 1.0) > kUnitNormTolerance) {
        throw Error(ErrorCode::NotNormalized,
                    "row '" + ids_[i] + "' has norm " + std::to_string(norm));
      }
    }
  }

  /// Normalizes every row of raw data on the way in.
  static EmbeddingMatrix normalize_rows(std::vector<std::string> ids, std::size_t dim,
                                        std::span<const float> raw) {
    if (dim == 0) throw Error(ErrorCode::EmptyInput, "matrix dimension must be positive");
    if (raw.size() != ids.size() * dim) {
      throw Error(ErrorCode::LengthMismatch, "data size does not match ids x dim");
    }
    std::vector<float> data;
    data.reserve(raw.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Embedding e = l2_normalize(raw.subspan(i * dim, dim));
      data.insert(data.end(), e.values().begin(), e.values().end());
    }
    return EmbeddingMatrix(std::move(ids), dim, std::move(data));
  }

  static EmbeddingMatrix from_embeddings(std::vector<std::string> ids,
                                         std::span<const Embedding> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no rows given");
    const std::size_t dim = rows.front().dim();
    std::vector<float> data;
    data.reserve(rows.size() * dim);
    for (const auto& r : rows) {
      if (r.dim() != dim) throw Error(ErrorCode::DimMismatch, "rows disagree on dimension");
      data.insert(data.end(), r.values().begin(), r.values().end());
    }
    return EmbeddingMatrix(std::move(ids), dim, std::move(data));
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

  /// Index of the row with the given id, or size() when absent.
  std::size_t find(const std::string& id) const noexcept {
    const auto it = std::find(ids_.begin(), ids_.end(), id);
    return static_cast<std::size_t>(it - ids_.begin());
  }

  /// Sub-matrix of the given row indices, in the given order.
  EmbeddingMatrix select(std::span<const std::size_t> indices) const {
    std::vector<std::string> ids;
    std::vector<float> data;
    ids.reserve(indices.size());
    data.reserve(indices.size() * dim_);
    for (std::size_t i : indices) {
      ids.push_back(ids_.at(i));
      auto r = row(i);
      data.insert(data.end(), r.begin(), r.end());
    }
    EmbeddingMatrix out;
    out.ids_ = std::move(ids);
    out.dim_ = dim_;
    out.data_ = std::move(data);
    return out;
  }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  void validate_shape() const {
    if (dim_ == 0) throw Error(ErrorCode::EmptyInput, "matrix dimension must be positive");
    if (data_.size() != ids_.size() * dim_) {
      throw Error(ErrorCode::LengthMismatch, "data size does not match ids x dim");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : ids_) {
      if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate id '" + id + "'");
    }
  }

  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// Dense row-major matrix of doubles.
struct SimMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const noexcept { return values[i * cols + j]; }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(values).subspan(i * cols, cols);
  }
};

/// All pairwise cosine similarities between rows of a and rows of b.
inline SimMatrix sim_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                            unsigned threads = 1) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch,
                "dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  SimMatrix out{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  parallel_for(a.size(), threads, [&](std::size_t i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < b.size(); ++j) out.values[i * out.cols + j] = cosine_sim(ai, b.row(j));
  });
  return out;
}

/// Similarities of one vector against every row of m.
inline std::vector<double> sims_to_rows(std::span<const float> z, const EmbeddingMatrix& m) {
  if (z.size() != m.dim()) {
    throw Error(ErrorCode::DimMismatch,
                "dims " + std::to_string(z.size()) + " and " + std::to_string(m.dim()));
  }
  std::vector<double> out(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) out[j] = cosine_sim(z, m.row(j));
  return out;
}

/// Indices of the k largest values, by descending value then ascending index.
inline std::vector<std::size_t> topk_indices(std::span<const double> sims, std::size_t k) {
  if (k > sims.size()) {
    throw Error(ErrorCode::KTooLarge,
                "k = " + std::to_string(k) + " exceeds " + std::to_string(sims.size()) + " values");
  }
  std::vector<std::size_t> idx(sims.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto by_value = [&](std::size_t l, std::size_t r) {
    return sims[l] > sims[r] || (sims[l] == sims[r] && l < r);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), by_value);
  idx.resize(k);
  return idx;
}

struct MomentStats {
  double mean = 0.0;
  double std = 0.0;  // population (divisor n)

  friend bool operator==(const MomentStats&, const MomentStats&) = default;
};

/// Mean and population standard deviation (Welford update).
inline MomentStats moments(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "moments of an empty sequence");
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double x : values) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  return {mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(n)))};
}

}  // namespace bliss
