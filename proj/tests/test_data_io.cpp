#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "bliss/data_io.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace bliss {
namespace {

using testing::expect_error;
using testing::rows2;
using testing::slurp;
using testing::spit;
using testing::TempDir;

// Reference bytes for the 2x2 identity, hashed with an independent tool.
constexpr char kIdentityHex[] = "4245423101000200000002000000010000803f00000000000000000000803f";
constexpr char kIdentitySha[] = "a666c95f0822c64e01580063e9bb27c629d4d0534e3163a9611738599f97df2a";

std::string hex(const std::string& bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out += kHex[c >> 4];
    out += kHex[c & 0xF];
  }
  return out;
}

TEST(EmbeddingFile, KnownBytesAndHash) {
  TempDir dir("io");
  const auto m = rows2({"a", "b"}, {{1, 0}, {0, 1}});
  const auto manifest = write_embeddings(dir / "id.beb", m, make_manifest(m));
  EXPECT_EQ(hex(slurp(dir / "id.beb")), kIdentityHex);
  EXPECT_EQ(manifest.sha256, kIdentitySha);
  const auto j = read_json_file(manifest_path(dir / "id.beb"));
  EXPECT_EQ(j.at("sha256"), kIdentitySha);
  EXPECT_TRUE(j.at("labels").is_null());
  EXPECT_EQ(j.at("ids"), nlohmann::json({"a", "b"}));
}

TEST(EmbeddingFile, RoundTripIsBitwise) {
  TempDir dir("io");
  std::mt19937_64 rng(61);
  for (std::size_t dim : {1u, 7u, 512u}) {
    const auto m = testing::random_matrix(rng, 33, dim);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < m.size(); ++i) labels.push_back(i % 2 ? "cat" : "dog");
    write_embeddings(dir / "m.beb", m, make_manifest(m, labels, {{"model", "test"}}));
    const auto back = read_embeddings(dir / "m.beb");
    EXPECT_EQ(back.matrix.ids(), m.ids());
    ASSERT_EQ(back.matrix.data().size(), m.data().size());
    EXPECT_EQ(std::memcmp(back.matrix.data().data(), m.data().data(), m.data().size() * 4), 0);
    EXPECT_EQ(back.labels(), labels);
    EXPECT_EQ(back.manifest.source.at("model"), "test");
    EXPECT_TRUE(back.warnings.empty());
  }
}

TEST(EmbeddingFile, WritesAreDeterministic) {
  TempDir dir("io");
  std::mt19937_64 rng(62);
  const auto m = testing::random_matrix(rng, 10, 16);
  write_embeddings(dir / "a.beb", m, make_manifest(m));
  write_embeddings(dir / "b.beb", m, make_manifest(m));
  EXPECT_EQ(slurp(dir / "a.beb"), slurp(dir / "b.beb"));
  EXPECT_EQ(slurp(dir / "a.beb.manifest.json"), slurp(dir / "b.beb.manifest.json"));
}

TEST(EmbeddingFile, EmptyMatrixRejected) {
  TempDir dir("io");
  const EmbeddingMatrix empty({}, 4, {});
  expect_error(ErrorCode::EmptyMatrix, [&] { write_embeddings(dir / "e.beb", empty, make_manifest(empty)); });
}

struct CorruptFixture : ::testing::Test {
  TempDir dir{"io"};
  std::filesystem::path file = dir / "m.beb";
  std::string bytes;
  void SetUp() override {
    std::mt19937_64 rng(63);
    const auto m = testing::random_matrix(rng, 4, 3);
    write_embeddings(file, m, make_manifest(m));
    bytes = slurp(file);
  }
};

TEST_F(CorruptFixture, FlippedPayloadByteFailsHash) {
  bytes[20] ^= 0x01;
  spit(file, bytes);
  expect_error(ErrorCode::HashMismatch, [&] { read_embeddings(file); });
}

TEST_F(CorruptFixture, HeaderChecks) {
  auto magic = bytes;
  magic[0] = 'X';
  spit(file, magic);
  expect_error(ErrorCode::BadMagic, [&] { read_embeddings(file); });

  auto version = bytes;
  version[4] = 2;
  spit(file, version);
  expect_error(ErrorCode::VersionUnsupported, [&] { read_embeddings(file); });

  spit(file, bytes.substr(0, 10));
  expect_error(ErrorCode::TruncatedPayload, [&] { read_embeddings(file); });

  spit(file, bytes.substr(0, bytes.size() - 4));
  expect_error(ErrorCode::TruncatedPayload, [&] { read_embeddings(file); });

  spit(file, bytes + "x");
  expect_error(ErrorCode::TruncatedPayload, [&] { read_embeddings(file); });
}

TEST_F(CorruptFixture, ManifestProblems) {
  std::filesystem::remove(manifest_path(file));
  expect_error(ErrorCode::IoError, [&] { read_embeddings(file); });
  spit(manifest_path(file), R"({"labels": null})");
  expect_error(ErrorCode::ManifestInvalid, [&] { read_embeddings(file); });
  expect_error(ErrorCode::IoError, [&] { read_embeddings(dir / "absent.beb"); });
}

TEST(EmbeddingFile, UnnormalizedFlagIsNormalizedOnLoad) {
  TempDir dir("io");
  const std::vector<float> payload{3, 4, 0, 2};
  EmbeddingFileHeader h;
  h.count = 2;
  h.dim = 2;
  h.normalized_flag = 0;
  const auto bytes = encode_embedding_file(h, payload);
  const auto path = dir / "raw.beb";
  spit(path, std::string(bytes.begin(), bytes.end()));
  Manifest man{{"p", "q"}, std::nullopt, nlohmann::json::object(),
               sha256_hex(std::span(bytes).subspan(kHeaderSize))};
  write_json_file(manifest_path(path), man.to_json());
  const auto back = read_embeddings(path);
  ASSERT_EQ(back.warnings.size(), 1u);
  EXPECT_NEAR(back.matrix.row(0)[0], 0.6f, 1e-7);
  EXPECT_NEAR(back.matrix.row(1)[1], 1.0f, 1e-7);

  // the same payload claiming to be unit-norm is refused
  h.normalized_flag = 1;
  const auto flagged = encode_embedding_file(h, payload);
  spit(path, std::string(flagged.begin(), flagged.end()));
  expect_error(ErrorCode::NotNormalized, [&] { read_embeddings(path); });
}

// A file as the Python extractor writes it: 512-d, labels, model metadata.
TEST(EmbeddingFile, ExtractorShapedFileLoads) {
  TempDir dir("io");
  std::mt19937_64 rng(64);
  const auto m = testing::random_matrix(rng, 12, 512, "img_");
  std::vector<std::string> labels(12, "airplane");
  const nlohmann::json source{{"model", "ViT-B/16"}, {"dataset", "cifar10"}, {"split", "train"}};
  write_embeddings(dir / "train.beb", m, make_manifest(m, labels, source));
  const auto back = read_embeddings(dir / "train.beb");
  EXPECT_EQ(back.header.dim, 512u);
  EXPECT_EQ(back.header.count, 12u);
  EXPECT_EQ(back.manifest.source, source);
}

TEST(ExperimentConfig, ParsesAndRoundTrips) {
  const auto j = nlohmann::json::parse(R"({
    "paths": {"train": "tr.beb", "test": "te.beb", "class_text": "c.beb", "dictionary": "d.beb"},
    "normal_classes": ["cat"],
    "method": "bliss", "lambda": 0.25, "k": 5,
    "outputs": {"scores": "s.csv"}
  })");
  const auto c = ExperimentConfig::from_json(j);
  EXPECT_EQ(c.train, "tr.beb");
  EXPECT_EQ(c.scoring.lambda, 0.25);
  EXPECT_EQ(c.scoring.k, 5u);
  EXPECT_EQ(c.scoring.epsilon, 1e-8);
  EXPECT_EQ(c.k_nn, kDefaultKnn);
  EXPECT_EQ(c.scores_out, "s.csv");
  const auto again = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
}

TEST(ExperimentConfig, Rejections) {
  const auto parse = [](const char* text) { return ExperimentConfig::from_json(nlohmann::json::parse(text)); };
  expect_error(ErrorCode::InvalidConfig, [&] {
    parse(R"({"paths": {"train": "a", "test": "b", "class_text": "c"}, "lamda": 0.5})");
  });
  expect_error(ErrorCode::InvalidConfig, [&] {
    parse(R"({"paths": {"train": "a", "test": "b", "class_text": "c", "dict": "d"}})");
  });
  expect_error(ErrorCode::InvalidConfig, [&] { parse(R"({"paths": {"train": "a"}})"); });
  expect_error(ErrorCode::InvalidConfig, [&] {
    parse(R"({"paths": {"train": "a", "test": "b", "class_text": "c"}, "k": 0})");
  });
  expect_error(ErrorCode::InvalidConfig, [&] {
    parse(R"({"paths": {"train": "a", "test": "b", "class_text": "c"}, "method": "dn3"})");
  });
  TempDir dir("io");
  spit(dir / "bad.json", "{not json");
  expect_error(ErrorCode::InvalidConfig, [&] { load_experiment_config(dir / "bad.json"); });
}

const std::vector<std::string> kCifar10{"airplane", "automobile", "bird", "cat", "deer",
                                        "dog",      "frog",       "horse", "ship", "truck"};

TEST(Splits, OneClassAndLeaveOneOut) {
  const auto plan = enumerate_splits(kCifar10, SplitMode::one_class(), "cifar10");
  ASSERT_EQ(plan.trials.size(), 10u);
  EXPECT_EQ(plan.trials[3].normal_classes, (std::vector<std::string>{"cat"}));
  EXPECT_EQ(plan.trials[3].anomaly_classes.size(), 9u);
  const std::vector<std::string> two{"a", "b"};
  const auto loo = enumerate_splits(two, SplitMode::leave_one_out());
  ASSERT_EQ(loo.trials.size(), 2u);
  EXPECT_EQ(loo.trials[0].normal_classes, (std::vector<std::string>{"b"}));
  EXPECT_EQ(loo.trials[0].anomaly_classes, (std::vector<std::string>{"a"}));
  EXPECT_EQ(loo.to_json().at("trials").size(), 2u);
}

TEST(Splits, EveryTrialPartitionsTheClassSet) {
  for (const auto& mode : {SplitMode::one_class(), SplitMode::leave_one_out()}) {
    for (const auto& t : enumerate_splits(kCifar10, mode).trials) {
      std::vector<std::string> all = t.normal_classes;
      all.insert(all.end(), t.anomaly_classes.begin(), t.anomaly_classes.end());
      std::sort(all.begin(), all.end());
      auto expect = kCifar10;
      std::sort(expect.begin(), expect.end());
      EXPECT_EQ(all, expect);
    }
  }
}

TEST(Splits, FixedFromJson) {
  const auto mode = SplitMode::fixed_from_json(nlohmann::json::parse(
      R"({"splits": [{"normal": ["cat", "dog"]},
                     {"normal": ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship"],
                      "anomaly": ["truck"]}]})"));
  const auto plan = enumerate_splits(kCifar10, mode);
  ASSERT_EQ(plan.trials.size(), 2u);
  EXPECT_EQ(plan.trials[0].anomaly_classes.size(), 8u);
  EXPECT_EQ(plan.trials[1].anomaly_classes, (std::vector<std::string>{"truck"}));

  // an explicit anomaly list must cover every remaining class
  const auto partial = SplitMode::fixed_from_json(
      nlohmann::json::parse(R"({"splits": [{"normal": ["ship"], "anomaly": ["truck"]}]})"));
  expect_error(ErrorCode::InvalidSplit, [&] { enumerate_splits(kCifar10, partial); });

  const auto overlap = SplitMode::fixed_from_json(
      nlohmann::json::parse(R"({"splits": [{"normal": ["cat"], "anomaly": ["cat", "dog"]}]})"));
  expect_error(ErrorCode::InvalidSplit, [&] { enumerate_splits(kCifar10, overlap); });
  const auto unknown = SplitMode::fixed_from_json(nlohmann::json::parse(R"({"splits": [{"normal": ["emu"]}]})"));
  expect_error(ErrorCode::InvalidSplit, [&] { enumerate_splits(kCifar10, unknown); });
  expect_error(ErrorCode::InvalidSplit, [] { SplitMode::fixed_from_json(nlohmann::json::parse("{}")); });
  const std::vector<std::string> dup{"a", "a"};
  expect_error(ErrorCode::InvalidSplit, [&] { enumerate_splits(dup, SplitMode::one_class()); });
}

}  // namespace
}  // namespace bliss
