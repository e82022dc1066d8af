#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cfedavg/errors.hpp"
#include "cfedavg/idx.hpp"
#include "cfedavg/rng.hpp"
#include "cfedavg/vec.hpp"

namespace cfedavg {

struct LabeledDataset {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() == n * num_features
  std::vector<int> labels;       // size n, each in [0, num_classes)

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * num_features, num_features};
  }

  void validate() const {
    if (labels.empty()) throw DataError("dataset: empty");
    if (features.size() != labels.size() * num_features) {
      throw DataError("dataset: feature matrix shape mismatch");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw DataError("dataset: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
      }
    }
  }
};

struct PartitionSpec {
  std::size_t workers = 1;
  std::size_t classes_per_worker = 1;  // the non-i.i.d. level p
  std::uint64_t seed = 0;
};

// Read-only view a single worker owns. For label datasets `indices` point
// into `data`; the synthetic quadratic objective uses dataset-free shards
// whose indices address the worker's own rows.
struct DataShard {
  const LabeledDataset* data = nullptr;
  std::size_t worker = 0;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

inline std::size_t distinct_labels(const DataShard& shard) {
  std::vector<int> seen;
  for (std::size_t i : shard.indices) {
    int y = shard.data->labels[i];
    if (std::find(seen.begin(), seen.end(), y) == seen.end()) seen.push_back(y);
  }
  return seen.size();
}

// Class-based non-i.i.d. split: after a seeded shuffle of the class list,
// workers take blocks of p classes round-robin off the cycled list, and each
// class pool is shuffled and divided evenly among the workers assigned to it.
// Leftover samples are dropped, never duplicated.
inline std::vector<DataShard> partition_by_class(const LabeledDataset& ds,
                                                 const PartitionSpec& spec) {
  ds.validate();
  const std::size_t c = ds.num_classes;
  const std::size_t m = spec.workers;
  const std::size_t p = spec.classes_per_worker;
  if (m < 1) throw ConfigError("partition.m: need at least one worker");
  if (p < 1 || p > c) {
    throw ConfigError("partition.p: need 1 <= p <= num_classes, got p=" + std::to_string(p) +
                      " with " + std::to_string(c) + " classes");
  }

  std::vector<std::size_t> class_order(c);
  std::iota(class_order.begin(), class_order.end(), 0);
  Rng order_rng(derive_stream(spec.seed, StreamUse::kPartition, 0));
  order_rng.shuffle(class_order);

  // Worker w owns slots [w*p, w*p + p) of the cycled class list; p <= c keeps
  // the classes within one block distinct.
  std::vector<std::vector<std::size_t>> workers_of_class(c);
  std::vector<std::vector<std::size_t>> classes_of_worker(m);
  for (std::size_t w = 0; w < m; ++w) {
    for (std::size_t j = 0; j < p; ++j) {
      const std::size_t cls = class_order[(w * p + j) % c];
      workers_of_class[cls].push_back(w);
      classes_of_worker[w].push_back(cls);
    }
  }

  std::vector<std::vector<std::size_t>> pool(c);
  for (std::size_t i = 0; i < ds.size(); ++i) pool[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<DataShard> shards(m);
  for (std::size_t w = 0; w < m; ++w) shards[w] = DataShard{&ds, w, {}};

  for (std::size_t cls = 0; cls < c; ++cls) {
    const auto& takers = workers_of_class[cls];
    if (takers.empty()) continue;
    const std::size_t chunk = pool[cls].size() / takers.size();
    if (chunk == 0) {
      throw ConfigError("partition: class " + std::to_string(cls) + " has only " +
                        std::to_string(pool[cls].size()) + " samples for " +
                        std::to_string(takers.size()) + " workers");
    }
    Rng pool_rng(derive_stream(spec.seed, StreamUse::kPartition, 1, cls));
    pool_rng.shuffle(pool[cls]);
    for (std::size_t j = 0; j < takers.size(); ++j) {
      auto& dst = shards[takers[j]].indices;
      dst.insert(dst.end(), pool[cls].begin() + static_cast<std::ptrdiff_t>(j * chunk),
                 pool[cls].begin() + static_cast<std::ptrdiff_t>((j + 1) * chunk));
    }
  }

  for (auto& s : shards) std::sort(s.indices.begin(), s.indices.end());
  return shards;
}

// MNIST pair loader; raw pixel bytes are divided by 255 so features live in [0,1].
inline LabeledDataset load_mnist(const std::filesystem::path& images_path,
                                 const std::filesystem::path& labels_path,
                                 std::size_t limit = 0) {
  IdxTensor images = load_idx_file(images_path);
  IdxTensor labels = load_idx_file(labels_path);
  if (images.magic != kIdxMagicImages) {
    throw FormatError("mnist: " + images_path.string() + " is not an image tensor");
  }
  if (labels.magic != kIdxMagicLabels) {
    throw FormatError("mnist: " + labels_path.string() + " is not a label vector");
  }
  if (images.dims[0] != labels.dims[0]) {
    throw FormatError("mnist: image/label counts disagree (" + std::to_string(images.dims[0]) +
                      " vs " + std::to_string(labels.dims[0]) + ")");
  }

  std::size_t n = images.dims[0];
  if (limit > 0 && limit < n) n = limit;
  const std::size_t f = static_cast<std::size_t>(images.dims[1]) * images.dims[2];

  LabeledDataset ds;
  ds.num_features = f;
  ds.num_classes = 10;
  ds.features.resize(n * f);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n * f; ++i) ds.features[i] = images.data[i] / 255.0;
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(labels.data[i]);
  ds.validate();
  return ds;
}

// Gaussian blobs, one mean per class at distance `separation` from the
// origin; labels cycle so classes stay balanced.
inline LabeledDataset generate_synthetic_classes(std::size_t n, std::size_t num_features,
                                                 std::size_t num_classes, double separation,
                                                 std::uint64_t seed) {
  if (n == 0 || num_features == 0 || num_classes == 0) {
    throw ConfigError("synthetic_classes: sizes must be positive");
  }
  Rng rng(derive_stream(seed, StreamUse::kData, 0));
  std::vector<double> means(num_classes * num_features);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double* mu = means.data() + c * num_features;
    double s = 0.0;
    for (std::size_t j = 0; j < num_features; ++j) {
      mu[j] = rng.normal();
      s += mu[j] * mu[j];
    }
    const double inv = separation / std::sqrt(s);
    for (std::size_t j = 0; j < num_features; ++j) mu[j] *= inv;
  }

  LabeledDataset ds;
  ds.num_features = num_features;
  ds.num_classes = num_classes;
  ds.features.resize(n * num_features);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % num_classes;
    ds.labels[i] = static_cast<int>(c);
    const double* mu = means.data() + c * num_features;
    double* x = ds.features.data() + i * num_features;
    for (std::size_t j = 0; j < num_features; ++j) x[j] = mu[j] + rng.normal();
  }
  return ds;
}

}  // namespace cfedavg
