#include "cfedavg/dataset.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>

namespace cfedavg {
namespace {

// --- IDX parsing ------------------------------------------------------------

std::vector<std::uint8_t> image_file_bytes(std::uint32_t n, std::uint32_t rows,
                                           std::uint32_t cols) {
  IdxTensor t;
  t.magic = kIdxMagicImages;
  t.dims = {n, rows, cols};
  t.data.resize(static_cast<std::size_t>(n) * rows * cols);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<std::uint8_t>(i * 37);
  return serialize_idx(t);
}

TEST(Idx, ParsesImageTensor) {
  auto bytes = image_file_bytes(3, 4, 5);
  auto t = parse_idx(bytes);
  EXPECT_EQ(t.magic, kIdxMagicImages);
  EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{3, 4, 5}));
  EXPECT_EQ(t.data.size(), 60u);
}

TEST(Idx, ZeroLengthPayloadIsValid) {
  auto bytes = image_file_bytes(0, 28, 28);
  ASSERT_EQ(bytes.size(), 16u);
  auto t = parse_idx(bytes);
  EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{0, 28, 28}));
  EXPECT_TRUE(t.data.empty());
}

TEST(Idx, WrongMagicNamesTheMagicFound) {
  auto bytes = image_file_bytes(1, 2, 2);
  bytes[3] = 0x07;
  try {
    parse_idx(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000807"), std::string::npos) << e.what();
  }
}

TEST(Idx, TruncationReportsExpectedVsActual) {
  auto bytes = image_file_bytes(2, 3, 3);
  bytes.pop_back();
  try {
    parse_idx(bytes);
    FAIL() << "expected LengthError";
  } catch (const LengthError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("34"), std::string::npos) << msg;  // expected total
    EXPECT_NE(msg.find("33"), std::string::npos) << msg;  // actual
  }
  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0}), LengthError);
  // Trailing garbage is a length violation too.
  auto padded = image_file_bytes(1, 2, 2);
  padded.push_back(0);
  EXPECT_THROW(parse_idx(padded), LengthError);
}

TEST(Idx, RoundTripIsBitExact) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    IdxTensor t;
    if (trial % 2 == 0) {
      t.magic = kIdxMagicImages;
      t.dims = {static_cast<std::uint32_t>(rng.uniform_below(6)),
                static_cast<std::uint32_t>(1 + rng.uniform_below(9)),
                static_cast<std::uint32_t>(1 + rng.uniform_below(9))};
    } else {
      t.magic = kIdxMagicLabels;
      t.dims = {static_cast<std::uint32_t>(rng.uniform_below(64))};
    }
    t.data.resize(t.element_count());
    for (auto& b : t.data) b = static_cast<std::uint8_t>(rng.next_u64());
    auto bytes = serialize_idx(t);
    EXPECT_EQ(serialize_idx(parse_idx(bytes)), bytes);
  }
}

TEST(Idx, LoadMnistPairFromDisk) {
  // Small files in the wire format; pixels divide by 255 on load.
  IdxTensor images;
  images.magic = kIdxMagicImages;
  images.dims = {4, 2, 3};
  images.data = {0,  51, 102, 153, 204, 255, 10, 20, 30, 40, 50,  60,
                 70, 80, 90,  100, 110, 120, 5,  15, 25, 35, 255, 45};
  IdxTensor labels;
  labels.magic = kIdxMagicLabels;
  labels.dims = {4};
  labels.data = {3, 0, 9, 7};

  auto dir = std::filesystem::temp_directory_path() / "cfedavg_idx_test";
  std::filesystem::create_directories(dir);
  for (auto [name, tensor] : {std::pair{"train-images-idx3-ubyte", &images},
                              std::pair{"train-labels-idx1-ubyte", &labels}}) {
    auto bytes = serialize_idx(*tensor);
    std::ofstream out(dir / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }

  auto ds = load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.num_features, 6u);
  EXPECT_EQ(ds.num_classes, 10u);
  EXPECT_DOUBLE_EQ(ds.features[1], 51.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.features[5], 1.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 0, 9, 7}));

  auto limited = load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", 2);
  EXPECT_EQ(limited.size(), 2u);

  // Mismatched counts are a format error.
  labels.dims = {3};
  labels.data.resize(3);
  auto bytes = serialize_idx(labels);
  std::ofstream bad(dir / "short-labels", std::ios::binary);
  bad.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  bad.close();
  EXPECT_THROW(load_mnist(dir / "train-images-idx3-ubyte", dir / "short-labels"), FormatError);
}

TEST(Idx, RealMnistFilesWhenPresent) {
  const char* dir = std::getenv("CFEDAVG_MNIST_DIR");
  if (dir == nullptr) GTEST_SKIP() << "CFEDAVG_MNIST_DIR not set";
  auto images = load_idx_file(std::filesystem::path(dir) / "train-images-idx3-ubyte");
  auto labels = load_idx_file(std::filesystem::path(dir) / "train-labels-idx1-ubyte");
  EXPECT_EQ(images.dims, (std::vector<std::uint32_t>{60000, 28, 28}));
  EXPECT_EQ(labels.dims, (std::vector<std::uint32_t>{60000}));
  for (auto y : labels.data) EXPECT_LE(y, 9);
}

// --- class-based partitioning ----------------------------------------------

LabeledDataset ten_class_set(std::size_t n, std::uint64_t seed = 5) {
  return generate_synthetic_classes(n, 4, 10, 3.0, seed);
}

TEST(Partition, IidCaseGivesEveryWorkerAllClasses) {
  auto ds = ten_class_set(2000);
  auto shards = partition_by_class(ds, {.workers = 10, .classes_per_worker = 10, .seed = 1});
  ASSERT_EQ(shards.size(), 10u);
  for (const auto& s : shards) EXPECT_EQ(distinct_labels(s), 10u);
}

TEST(Partition, SingleClassPerWorker) {
  auto ds = ten_class_set(2000);
  auto shards = partition_by_class(ds, {.workers = 10, .classes_per_worker = 1, .seed = 2});
  for (const auto& s : shards) EXPECT_EQ(distinct_labels(s), 1u);
}

TEST(Partition, SingleWorkerGetsExactlyPClasses) {
  auto ds = ten_class_set(500);
  for (std::size_t p : {1u, 3u, 10u}) {
    auto shards = partition_by_class(ds, {.workers = 1, .classes_per_worker = p, .seed = 3});
    ASSERT_EQ(shards.size(), 1u);
    EXPECT_EQ(distinct_labels(shards[0]), p);
  }
}

TEST(Partition, ClassCountHoldsAcrossGrid) {
  auto ds = ten_class_set(30000);
  for (std::size_t p : {1u, 2u, 5u, 10u}) {
    for (std::size_t m : {4u, 10u, 100u}) {
      auto shards = partition_by_class(ds, {.workers = m, .classes_per_worker = p, .seed = 4});
      ASSERT_EQ(shards.size(), m);
      for (const auto& s : shards) {
        EXPECT_EQ(distinct_labels(s), p) << "p=" << p << " m=" << m;
      }
    }
  }
}

TEST(Partition, ShardsAreDisjoint) {
  auto ds = ten_class_set(2000);
  auto shards = partition_by_class(ds, {.workers = 7, .classes_per_worker = 3, .seed = 6});
  std::set<std::size_t> seen;
  for (const auto& s : shards) {
    for (std::size_t i : s.indices) {
      EXPECT_TRUE(seen.insert(i).second) << "index " << i << " in two shards";
      EXPECT_LT(i, ds.size());
    }
  }
}

TEST(Partition, DeterministicGivenSeed) {
  auto ds = ten_class_set(2000);
  PartitionSpec spec{.workers = 10, .classes_per_worker = 2, .seed = 9};
  auto a = partition_by_class(ds, spec);
  auto b = partition_by_class(ds, spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t w = 0; w < a.size(); ++w) EXPECT_EQ(a[w].indices, b[w].indices);
  auto c = partition_by_class(ds, {.workers = 10, .classes_per_worker = 2, .seed = 10});
  EXPECT_NE(a[0].indices, c[0].indices);
}

TEST(Partition, TooManyClassesPerWorkerRejected) {
  auto ds = ten_class_set(500);
  EXPECT_THROW(partition_by_class(ds, {.workers = 2, .classes_per_worker = 11, .seed = 0}),
               ConfigError);
}

TEST(SyntheticClasses, BalancedLabelsAndShapes) {
  auto ds = generate_synthetic_classes(1000, 8, 10, 5.0, 77);
  ds.validate();
  EXPECT_EQ(ds.size(), 1000u);
  std::vector<int> counts(10, 0);
  for (int y : ds.labels) counts[static_cast<std::size_t>(y)]++;
  for (int c : counts) EXPECT_EQ(c, 100);
}

}  // namespace
}  // namespace cfedavg
