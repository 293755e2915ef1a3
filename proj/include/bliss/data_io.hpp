#pragma once

// Embedding files, manifests, experiment configs and class-split plans.
//
// Binary layout (all integers little-endian, 15-byte header):
//
//   offset  size  field
//   0       4     magic "BEB1"
//   4       2     version (u16) = 1
//   6       4     count (u32)
//   10      4     dim (u32)
//   14      1     normalized_flag (u8, 1 = rows are unit-norm)
//   15      4*count*dim   IEEE-754 binary32 payload, row-major
//
// Each file has a sibling "<path>.manifest.json" holding ids, optional
// labels, free-form source metadata and the SHA-256 of the payload bytes.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bliss/core_math.hpp"
#include "bliss/error.hpp"
#include "bliss/scoring.hpp"

namespace bliss {

static_assert(std::numeric_limits<float>::is_iec559, "payload format requires IEEE-754 floats");

inline constexpr std::array<char, 4> kEmbeddingMagic{'B', 'E', 'B', '1'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;
inline constexpr std::size_t kHeaderSize = 15;

struct EmbeddingFileHeader {
  std::uint16_t version = kEmbeddingVersion;
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::uint8_t normalized_flag = 1;

  std::size_t payload_bytes() const noexcept {
    return static_cast<std::size_t>(count) * static_cast<std::size_t>(dim) * 4;
  }
};

struct Manifest {
  std::vector<std::string> ids;
  std::optional<std::vector<std::string>> labels;
  nlohmann::json source = nlohmann::json::object();
  std::string sha256;  // lowercase hex of the payload

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["ids"] = ids;
    j["labels"] = labels ? nlohmann::json(*labels) : nlohmann::json(nullptr);
    j["source"] = source;
    j["sha256"] = sha256;
    return j;
  }

  static Manifest from_json(const nlohmann::json& j) {
    try {
      Manifest m;
      m.ids = j.at("ids").get<std::vector<std::string>>();
      if (j.contains("labels") && !j.at("labels").is_null()) {
        m.labels = j.at("labels").get<std::vector<std::string>>();
      }
      if (j.contains("source")) m.source = j.at("source");
      m.sha256 = j.at("sha256").get<std::string>();
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ManifestInvalid, e.what());
    }
  }
};

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string manifest_path(const std::filesystem::path& path) {
  return path.string() + ".manifest.json";
}

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

}  // namespace detail

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_bytes(
      path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, "'" + path.string() + "': " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

/// Serializes header and float payload into one buffer.
inline std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFileHeader& header,
                                                       std::span<const float> payload) {
  if (payload.size() != static_cast<std::size_t>(header.count) * header.dim) {
    throw Error(ErrorCode::LengthMismatch, "payload size does not match count x dim");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + payload.size() * 4);
  out.insert(out.end(), kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  detail::put_le(out, header.version);
  detail::put_le(out, header.count);
  detail::put_le(out, header.dim);
  detail::put_le(out, header.normalized_flag);
  for (float f : payload) detail::put_le(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

struct RawEmbeddingFile {
  EmbeddingFileHeader header;
  std::vector<float> payload;
  std::string payload_sha256;
};

/// Parses header and payload without consulting the manifest.
inline RawEmbeddingFile decode_embedding_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::TruncatedPayload,
                "file is " + std::to_string(bytes.size()) + " bytes, shorter than the 15-byte header");
  }
  if (!std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "magic is not BEB1");
  }
  RawEmbeddingFile raw;
  raw.header.version = detail::get_le<std::uint16_t>(bytes, 4);
  if (raw.header.version != kEmbeddingVersion) {
    throw Error(ErrorCode::VersionUnsupported, "version " + std::to_string(raw.header.version));
  }
  raw.header.count = detail::get_le<std::uint32_t>(bytes, 6);
  raw.header.dim = detail::get_le<std::uint32_t>(bytes, 10);
  raw.header.normalized_flag = bytes[14];
  const std::size_t expected = raw.header.payload_bytes();
  if (bytes.size() - kHeaderSize != expected) {
    throw Error(ErrorCode::TruncatedPayload, "payload is " + std::to_string(bytes.size() - kHeaderSize) +
                                                 " bytes, header implies " + std::to_string(expected));
  }
  const auto payload = bytes.subspan(kHeaderSize);
  raw.payload_sha256 = sha256_hex(payload);
  raw.payload.resize(expected / 4);
  for (std::size_t i = 0; i < raw.payload.size(); ++i) {
    raw.payload[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(payload, i * 4));
  }
  return raw;
}

/// Builds a manifest for matrix; the hash is filled in by write_embeddings.
inline Manifest make_manifest(const EmbeddingMatrix& matrix,
                              std::optional<std::vector<std::string>> labels = std::nullopt,
                              nlohmann::json source = nlohmann::json::object()) {
  return Manifest{matrix.ids(), std::move(labels), std::move(source), {}};
}

/// Writes the binary file and its manifest. The manifest's sha256 field is
/// recomputed from the payload; the returned manifest is what was written.
inline Manifest write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix,
                                 Manifest manifest) {
  if (matrix.empty()) throw Error(ErrorCode::EmptyMatrix, "refusing to write a matrix with 0 rows");
  if (manifest.ids != matrix.ids()) throw Error(ErrorCode::ManifestInvalid, "manifest ids differ from matrix ids");
  if (manifest.labels && manifest.labels->size() != matrix.size()) {
    throw Error(ErrorCode::ManifestInvalid, "manifest labels differ in count from matrix rows");
  }
  EmbeddingFileHeader header;
  header.count = static_cast<std::uint32_t>(matrix.size());
  header.dim = static_cast<std::uint32_t>(matrix.dim());
  header.normalized_flag = 1;
  const auto bytes = encode_embedding_file(header, matrix.data());
  manifest.sha256 = sha256_hex(std::span(bytes).subspan(kHeaderSize));
  detail::write_file_bytes(path, bytes);
  write_json_file(manifest_path(path), manifest.to_json());
  return manifest;
}

struct LoadedEmbeddings {
  EmbeddingMatrix matrix;
  Manifest manifest;
  EmbeddingFileHeader header;
  std::vector<std::string> warnings;

  /// Manifest labels; throws ManifestInvalid when the file has none.
  const std::vector<std::string>& labels() const {
    if (!manifest.labels) throw Error(ErrorCode::ManifestInvalid, "manifest has no labels");
    return *manifest.labels;
  }
};

/// Reads and validates an embedding file and its manifest. Rows of files
/// with normalized_flag = 0 are normalized on load, with a warning.
inline LoadedEmbeddings read_embeddings(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  RawEmbeddingFile raw = decode_embedding_file(bytes);

  const std::string mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) throw Error(ErrorCode::IoError, "missing manifest '" + mpath + "'");
  Manifest manifest = Manifest::from_json(read_json_file(mpath));

  if (manifest.sha256 != raw.payload_sha256) {
    throw Error(ErrorCode::HashMismatch, "payload sha256 " + raw.payload_sha256 + " but manifest records " +
                                             manifest.sha256);
  }
  if (manifest.ids.size() != raw.header.count) {
    throw Error(ErrorCode::ManifestInvalid, "manifest has " + std::to_string(manifest.ids.size()) +
                                                " ids, header count is " + std::to_string(raw.header.count));
  }
  if (manifest.labels && manifest.labels->size() != raw.header.count) {
    throw Error(ErrorCode::ManifestInvalid, "manifest labels differ in count from header");
  }
  if (raw.header.dim == 0) throw Error(ErrorCode::ManifestInvalid, "dim is 0");

  LoadedEmbeddings out;
  out.header = raw.header;
  try {
    if (raw.header.normalized_flag == 0) {
      out.warnings.push_back("'" + path.string() + "' has normalized_flag = 0; rows were normalized on load");
      out.matrix = EmbeddingMatrix::normalize_rows(manifest.ids, raw.header.dim, raw.payload);
    } else {
      out.matrix = EmbeddingMatrix(manifest.ids, raw.header.dim, std::move(raw.payload));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DuplicateId) throw Error(ErrorCode::ManifestInvalid, e.what());
    throw;
  }
  out.manifest = std::move(manifest);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::string train;
  std::string test;
  std::string class_text;
  std::string dictionary;  // empty when unused
  std::vector<std::string> normal_classes;  // empty = every labelled class
  std::vector<std::string> exclude_dictionary_entries;
  Method method = Method::bliss;
  ScoringConfig scoring;
  std::size_t k_nn = kDefaultKnn;
  std::uint64_t seed = 0;
  std::string scores_out;
  std::string labels_out;
  std::string report_out;
  std::string sweep_out;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["paths"] = {{"train", train}, {"test", test}, {"class_text", class_text}, {"dictionary", dictionary}};
    j["normal_classes"] = normal_classes;
    j["exclude_dictionary_entries"] = exclude_dictionary_entries;
    j["method"] = std::string(to_string(method));
    j["lambda"] = scoring.lambda;
    j["k"] = scoring.k;
    j["epsilon"] = scoring.epsilon;
    j["k_nn"] = k_nn;
    j["seed"] = seed;
    j["outputs"] = {{"scores", scores_out}, {"labels", labels_out}, {"report", report_out}, {"sweep", sweep_out}};
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> kTop{"paths", "normal_classes", "exclude_dictionary_entries",
                                            "method", "lambda", "k", "epsilon", "k_nn", "seed", "outputs"};
    static const std::set<std::string> kPaths{"train", "test", "class_text", "dictionary"};
    static const std::set<std::string> kOutputs{"scores", "labels", "report", "sweep"};
    const auto check_keys = [](const nlohmann::json& obj, const std::set<std::string>& allowed,
                               const std::string& where) {
      if (!obj.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
      for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
      }
    };
    try {
      check_keys(j, kTop, "config");
      ExperimentConfig c;
      const auto& p = j.at("paths");
      check_keys(p, kPaths, "paths");
      c.train = p.at("train").get<std::string>();
      c.test = p.at("test").get<std::string>();
      c.class_text = p.at("class_text").get<std::string>();
      c.dictionary = p.value("dictionary", std::string{});
      c.normal_classes = j.value("normal_classes", std::vector<std::string>{});
      c.exclude_dictionary_entries = j.value("exclude_dictionary_entries", std::vector<std::string>{});
      c.method = parse_method(j.value("method", std::string("bliss")));
      c.scoring.lambda = j.value("lambda", 0.5);
      c.scoring.k = j.value("k", std::size_t{10});
      c.scoring.epsilon = j.value("epsilon", 1e-8);
      c.k_nn = j.value("k_nn", kDefaultKnn);
      c.seed = j.value("seed", std::uint64_t{0});
      if (j.contains("outputs")) {
        const auto& o = j.at("outputs");
        check_keys(o, kOutputs, "outputs");
        c.scores_out = o.value("scores", std::string{});
        c.labels_out = o.value("labels", std::string{});
        c.report_out = o.value("report", std::string{});
        c.sweep_out = o.value("sweep", std::string{});
      }
      c.scoring.validate();
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, e.what());
    }
  }
};

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return ExperimentConfig::from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Class splits

struct Trial {
  std::size_t trial_id = 0;
  std::vector<std::string> normal_classes;
  std::vector<std::string> anomaly_classes;
};

struct SplitPlan {
  std::string dataset;
  std::vector<Trial> trials;

  nlohmann::json to_json() const {
    nlohmann::json trials_json = nlohmann::json::array();
    for (const auto& t : trials) {
      trials_json.push_back(
          {{"trial_id", t.trial_id}, {"normal_classes", t.normal_classes}, {"anomaly_classes", t.anomaly_classes}});
    }
    return {{"dataset", dataset}, {"trials", trials_json}};
  }
};

struct SplitMode {
  enum class Kind { one_class, leave_one_out, fixed };
  Kind kind = Kind::one_class;
  /// For fixed mode: the normal classes of each trial. An empty anomaly
  /// list means "every remaining class".
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> fixed_splits;

  static SplitMode one_class() { return {Kind::one_class, {}}; }
  static SplitMode leave_one_out() { return {Kind::leave_one_out, {}}; }

  /// Reads {"splits": [{"normal": [...], "anomaly": [...]}, ...]}.
  static SplitMode fixed_from_json(const nlohmann::json& j) {
    SplitMode m{Kind::fixed, {}};
    try {
      for (const auto& s : j.at("splits")) {
        m.fixed_splits.emplace_back(s.at("normal").get<std::vector<std::string>>(),
                                    s.value("anomaly", std::vector<std::string>{}));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidSplit, e.what());
    }
    return m;
  }
};

inline SplitPlan enumerate_splits(std::span<const std::string> classes, const SplitMode& mode,
                                  std::string dataset = "custom") {
  if (classes.empty()) throw Error(ErrorCode::InvalidSplit, "dataset has no classes");
  std::unordered_set<std::string> all(classes.begin(), classes.end());
  if (all.size() != classes.size()) throw Error(ErrorCode::InvalidSplit, "dataset classes contain duplicates");

  SplitPlan plan;
  plan.dataset = std::move(dataset);
  const auto others = [&](std::size_t skip) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (i != skip) out.push_back(classes[i]);
    }
    return out;
  };
  switch (mode.kind) {
    case SplitMode::Kind::one_class:
      for (std::size_t i = 0; i < classes.size(); ++i) plan.trials.push_back({i, {classes[i]}, others(i)});
      break;
    case SplitMode::Kind::leave_one_out:
      for (std::size_t i = 0; i < classes.size(); ++i) plan.trials.push_back({i, others(i), {classes[i]}});
      break;
    case SplitMode::Kind::fixed: {
      if (mode.fixed_splits.empty()) throw Error(ErrorCode::InvalidSplit, "no fixed splits given");
      for (std::size_t t = 0; t < mode.fixed_splits.size(); ++t) {
        const auto& [normal, anomaly_in] = mode.fixed_splits[t];
        std::vector<std::string> anomaly = anomaly_in;
        std::unordered_set<std::string> seen;
        for (const auto& c : normal) {
          if (!all.count(c)) throw Error(ErrorCode::InvalidSplit, "unknown class '" + c + "'");
          if (!seen.insert(c).second) throw Error(ErrorCode::InvalidSplit, "class '" + c + "' repeated");
        }
        if (anomaly.empty()) {
          for (const auto& c : classes) {
            if (!seen.count(c)) anomaly.push_back(c);
          }
        } else {
          for (const auto& c : anomaly) {
            if (!all.count(c)) throw Error(ErrorCode::InvalidSplit, "unknown class '" + c + "'");
            if (!seen.insert(c).second) {
              throw Error(ErrorCode::InvalidSplit, "class '" + c + "' is in both normal and anomaly sets");
            }
          }
        }
        if (normal.empty() || anomaly.empty() || normal.size() + anomaly.size() != classes.size()) {
          throw Error(ErrorCode::InvalidSplit, "split " + std::to_string(t) + " is not a partition of the classes");
        }
        plan.trials.push_back({t, normal, anomaly});
      }
      break;
    }
  }
  return plan;
}

}  // namespace bliss
