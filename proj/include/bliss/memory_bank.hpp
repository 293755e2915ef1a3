#pragma once

// Labelled-normal memory bank: per-class train partitions, class-label
// embeddings and the similarity statistics the scores standardize against.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bliss/core_math.hpp"
#include "bliss/error.hpp"
#include "bliss/parallel.hpp"

namespace bliss {

/// External text entries and their embeddings. Row j of embs() is entry j.
class Dictionary {
 public:
  Dictionary(std::vector<std::string> entries, EmbeddingMatrix embs)
      : entries_(std::move(entries)), embs_(std::move(embs)) {
    if (embs_.empty()) throw Error(ErrorCode::EmptyDictionary, "dictionary has no entries");
    if (entries_.size() != embs_.size()) {
      throw Error(ErrorCode::LengthMismatch, "dictionary entries and embeddings differ in count");
    }
    fingerprint_ = compute_fingerprint();
  }

  /// Uses the matrix ids as entry strings.
  explicit Dictionary(EmbeddingMatrix embs) : Dictionary(embs.ids(), embs) {}

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return embs_.dim(); }
  const std::vector<std::string>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& ids() const noexcept { return embs_.ids(); }
  const EmbeddingMatrix& embs() const noexcept { return embs_; }

  /// FNV-1a over ids and payload; identifies the dictionary a bank was
  /// attached to.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

 private:
  std::uint64_t compute_fingerprint() const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    const auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
      }
    };
    for (const auto& id : embs_.ids()) {
      mix(id.data(), id.size());
      mix("\0", 1);
    }
    const auto data = embs_.data();
    mix(data.data(), data.size_bytes());
    return h;
  }

  std::vector<std::string> entries_;
  EmbeddingMatrix embs_;
  std::uint64_t fingerprint_ = 0;
};

/// Class x dictionary-entry table of similarity moments.
struct DictStats {
  std::uint64_t dictionary_fingerprint = 0;
  std::size_t n_classes = 0;
  std::size_t n_entries = 0;
  std::vector<MomentStats> cells;  // row-major, class-major

  const MomentStats& at(std::size_t cls, std::size_t entry) const noexcept {
    return cells[cls * n_entries + entry];
  }
};

class NormalMemoryBank {
 public:
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t n_classes() const noexcept { return class_names_.size(); }
  std::size_t dim() const noexcept { return class_text_embs_.dim(); }
  const EmbeddingMatrix& class_text_embs() const noexcept { return class_text_embs_; }
  const EmbeddingMatrix& train(std::size_t cls) const { return train_by_class_.at(cls); }
  const MomentStats& class_stats(std::size_t cls) const { return class_stats_.at(cls); }
  const std::optional<DictStats>& dict_stats() const noexcept { return dict_stats_; }

  std::size_t total_train() const noexcept {
    std::size_t n = 0;
    for (const auto& m : train_by_class_) n += m.size();
    return n;
  }

  /// Index of a class name; throws UnknownClass.
  std::size_t class_index(const std::string& name) const {
    const auto it = class_index_.find(name);
    if (it == class_index_.end()) throw Error(ErrorCode::UnknownClass, "class '" + name + "' not in bank");
    return it->second;
  }

  bool has_stats_for(const Dictionary& dict) const noexcept {
    return dict_stats_.has_value() && dict_stats_->dictionary_fingerprint == dict.fingerprint() &&
           dict_stats_->n_entries == dict.size();
  }

 private:
  friend NormalMemoryBank build_bank(const EmbeddingMatrix&, std::span<const std::string>,
                                     const EmbeddingMatrix&, std::span<const std::string>);
  friend NormalMemoryBank attach_dictionary(const NormalMemoryBank&, const Dictionary&, unsigned);

  std::vector<std::string> class_names_;
  std::unordered_map<std::string, std::size_t> class_index_;
  EmbeddingMatrix class_text_embs_;
  std::vector<EmbeddingMatrix> train_by_class_;
  std::vector<MomentStats> class_stats_;
  std::optional<DictStats> dict_stats_;
};

/// Partitions the train embeddings by label and computes, per class, the
/// moments of similarity between that class's samples and its label
/// embedding. Row i of class_text_embs is the label of class_names[i].
inline NormalMemoryBank build_bank(const EmbeddingMatrix& train_embs,
                                   std::span<const std::string> train_labels,
                                   const EmbeddingMatrix& class_text_embs,
                                   std::span<const std::string> class_names) {
  if (class_names.empty()) throw Error(ErrorCode::EmptyClass, "no normal classes given");
  if (train_labels.size() != train_embs.size()) {
    throw Error(ErrorCode::LengthMismatch, "train labels and embeddings differ in count");
  }
  if (class_text_embs.size() != class_names.size()) {
    throw Error(ErrorCode::LengthMismatch, "class text embeddings and class names differ in count");
  }
  if (train_embs.dim() != class_text_embs.dim()) {
    throw Error(ErrorCode::DimMismatch, "train dim " + std::to_string(train_embs.dim()) +
                                            " vs class text dim " + std::to_string(class_text_embs.dim()));
  }

  NormalMemoryBank bank;
  bank.class_names_.assign(class_names.begin(), class_names.end());
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (!bank.class_index_.emplace(class_names[i], i).second) {
      throw Error(ErrorCode::DuplicateId, "class '" + class_names[i] + "' listed twice");
    }
  }
  bank.class_text_embs_ = class_text_embs;

  std::vector<std::vector<std::size_t>> members(class_names.size());
  for (std::size_t r = 0; r < train_labels.size(); ++r) {
    const auto it = bank.class_index_.find(train_labels[r]);
    if (it == bank.class_index_.end()) {
      throw Error(ErrorCode::UnknownLabel, "train label '" + train_labels[r] + "' is not a normal class");
    }
    members[it->second].push_back(r);
  }

  for (std::size_t c = 0; c < class_names.size(); ++c) {
    if (members[c].empty()) {
      throw Error(ErrorCode::EmptyClass, "class '" + class_names[c] + "' has no train samples");
    }
    bank.train_by_class_.push_back(train_embs.select(members[c]));
    const auto sims = sims_to_rows(class_text_embs.row(c), bank.train_by_class_.back());
    bank.class_stats_.push_back(moments(sims));
  }
  return bank;
}

/// Returns a copy of the bank with the full class x entry moments table for
/// this dictionary. Columns may be filled in parallel.
inline NormalMemoryBank attach_dictionary(const NormalMemoryBank& bank, const Dictionary& dict,
                                          unsigned threads = 1) {
  if (dict.dim() != bank.dim()) {
    throw Error(ErrorCode::DimMismatch, "dictionary dim " + std::to_string(dict.dim()) +
                                            " vs bank dim " + std::to_string(bank.dim()));
  }
  DictStats stats;
  stats.dictionary_fingerprint = dict.fingerprint();
  stats.n_classes = bank.n_classes();
  stats.n_entries = dict.size();
  stats.cells.resize(stats.n_classes * stats.n_entries);

  parallel_for(dict.size(), threads, [&](std::size_t j) {
    const auto entry = dict.embs().row(j);
    std::vector<double> sims;
    for (std::size_t c = 0; c < bank.n_classes(); ++c) {
      const auto& members = bank.train(c);
      sims.resize(members.size());
      for (std::size_t r = 0; r < members.size(); ++r) sims[r] = cosine_sim(members.row(r), entry);
      stats.cells[c * stats.n_entries + j] = moments(sims);
    }
  });

  NormalMemoryBank out = bank;
  out.dict_stats_ = std::move(stats);
  return out;
}

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace detail

/// Drops entries whose source string equals a blocked string, ignoring
/// ASCII case. Exact match only, no substring matching.
inline Dictionary exclude_entries(const Dictionary& dict, std::span<const std::string> blocked) {
  std::unordered_set<std::string> block;
  for (const auto& b : blocked) block.insert(detail::ascii_lower(b));

  std::vector<std::size_t> keep;
  std::vector<std::string> entries;
  for (std::size_t j = 0; j < dict.size(); ++j) {
    if (block.count(detail::ascii_lower(dict.entries()[j])) == 0) {
      keep.push_back(j);
      entries.push_back(dict.entries()[j]);
    }
  }
  if (keep.empty()) throw Error(ErrorCode::EmptyDictionary, "every dictionary entry was excluded");
  return Dictionary(std::move(entries), dict.embs().select(keep));
}

}  // namespace bliss
