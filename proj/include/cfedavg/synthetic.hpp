#pragma once

#include <cstddef>
#include <vector>

#include "cfedavg/dataset.hpp"
#include "cfedavg/objective.hpp"
#include "cfedavg/rng.hpp"

namespace cfedavg {

struct SyntheticQuadratic {
  ObjectiveSpec objective;        // Quadratic with one (A_i, b_i) per worker
  std::vector<DataShard> shards;  // dataset-free; indices address each worker's rows
  Vector x_star;                  // shared component of the per-worker minimizers
};

// Desk-scale quadratic testbed. A_i has standard normal entries scaled by
// 1/sqrt(d); b_i = A_i (x_star + hetero * u_i) with u_i unit-norm, so
// hetero = 0 gives every worker the same minimizer and zero gradient gap
// there.
inline SyntheticQuadratic generate_synthetic_quadratic(std::size_t m, std::size_t d,
                                                       std::size_t n_per_worker, double hetero,
                                                       std::uint64_t seed) {
  if (m == 0 || d == 0 || n_per_worker == 0) {
    throw ConfigError("synthetic_quadratic: sizes must be positive");
  }
  if (hetero < 0.0) throw ConfigError("synthetic_quadratic: hetero must be non-negative");

  SyntheticQuadratic out;
  Rng star_rng(derive_stream(seed, StreamUse::kData, 0));
  out.x_star.resize(d);
  for (double& v : out.x_star) v = star_rng.normal();

  Quadratic quad;
  quad.dim = d;
  quad.workers.resize(m);
  const double col_scale = 1.0 / std::sqrt(static_cast<double>(d));

  for (std::size_t i = 0; i < m; ++i) {
    Rng rng(derive_stream(seed, StreamUse::kData, 1, i));
    Vector u(d);
    double un = 0.0;
    for (double& v : u) {
      v = rng.normal();
      un += v * v;
    }
    un = std::sqrt(un);

    Vector target = out.x_star;
    for (std::size_t j = 0; j < d; ++j) target[j] += hetero * u[j] / un;

    auto& wq = quad.workers[i];
    wq.rows = n_per_worker;
    wq.a.resize(n_per_worker * d);
    for (double& v : wq.a) v = rng.normal() * col_scale;
    wq.b.resize(n_per_worker);
    for (std::size_t r = 0; r < n_per_worker; ++r) {
      wq.b[r] = dot({wq.a.data() + r * d, d}, target);
    }

    DataShard shard;
    shard.worker = i;
    shard.indices.resize(n_per_worker);
    for (std::size_t r = 0; r < n_per_worker; ++r) shard.indices[r] = r;
    out.shards.push_back(std::move(shard));
  }

  out.objective = std::move(quad);
  return out;
}

}  // namespace cfedavg
