#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cfedavg/errors.hpp"
#include "cfedavg/rng.hpp"
#include "cfedavg/vec.hpp"

namespace cfedavg {

// Lossy operators C with a worst-case signal-to-noise guarantee gamma:
// E||C(x) - x||^2 <= (1/gamma) ||x||^2. gamma = inf means no information loss.

enum class CompressorKind { kIdentity, kTopK, kRandomDrop };

struct CompressorSpec {
  CompressorKind kind = CompressorKind::kIdentity;
  std::size_t dim = 0;
  std::size_t k = 0;         // TopK only
  double drop_prob = 0.0;    // RandomDrop only
  bool rescale = false;      // RandomDrop only; survivors divided by (1 - drop_prob)

  static CompressorSpec identity(std::size_t dim) {
    return {CompressorKind::kIdentity, dim, 0, 0.0, false};
  }

  static CompressorSpec top_k(std::size_t dim, std::size_t k) {
    CompressorSpec s{CompressorKind::kTopK, dim, k, 0.0, false};
    s.validate();
    return s;
  }

  static CompressorSpec random_drop(std::size_t dim, double drop_prob, bool rescale = false) {
    CompressorSpec s{CompressorKind::kRandomDrop, dim, 0, drop_prob, rescale};
    s.validate();
    return s;
  }

  // comp is the dropped fraction: TopK keeps round((1-comp)*d) coordinates
  // (at least one), RandomDrop drops each with probability comp.
  static CompressorSpec from_comp(CompressorKind kind, std::size_t dim, double comp,
                                  bool rescale = false) {
    if (comp < 0.0 || comp >= 1.0) {
      throw ConfigError("compressor: comp must lie in [0, 1), got " + std::to_string(comp));
    }
    switch (kind) {
      case CompressorKind::kIdentity:
        return identity(dim);
      case CompressorKind::kTopK: {
        auto k = static_cast<std::size_t>(std::llround((1.0 - comp) * static_cast<double>(dim)));
        k = std::clamp<std::size_t>(k, 1, dim);
        return top_k(dim, k);
      }
      case CompressorKind::kRandomDrop:
        return random_drop(dim, comp, rescale);
    }
    throw ConfigError("compressor: unknown kind");
  }

  void validate() const {
    if (dim == 0) throw ConfigError("compressor: dimension must be positive");
    if (kind == CompressorKind::kTopK && (k < 1 || k > dim)) {
      throw ConfigError("compressor: TopK requires 1 <= k <= d, got k=" + std::to_string(k) +
                        ", d=" + std::to_string(dim));
    }
    if (kind == CompressorKind::kRandomDrop && (drop_prob < 0.0 || drop_prob >= 1.0)) {
      throw ConfigError("compressor: RandomDrop requires 0 <= q < 1, got q=" +
                        std::to_string(drop_prob));
    }
  }
};

// What goes over the wire. Identity sends the full coordinate list and pays
// no index overhead; sparse kinds carry strictly increasing indices.
struct SparsePayload {
  std::size_t dim = 0;
  bool dense_kind = false;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
};

inline Vector densify(const SparsePayload& p) {
  if (p.dense_kind) return Vector(p.values.begin(), p.values.end());
  Vector out(p.dim, 0.0);
  for (std::size_t i = 0; i < p.indices.size(); ++i) out[p.indices[i]] = p.values[i];
  return out;
}

// 8 bytes per value, 4 bytes per index; Identity carries no index list.
inline std::size_t payload_bytes(const SparsePayload& p) {
  if (p.dense_kind) return 8 * p.dim;
  return 8 * p.values.size() + 4 * p.indices.size();
}

struct CompressResult {
  SparsePayload payload;
  Vector dense;  // densify(payload), returned so callers never recompute it
};

namespace detail {

inline CompressResult compress_identity(const CompressorSpec& spec, const Vector& x) {
  CompressResult r;
  r.payload.dim = spec.dim;
  r.payload.dense_kind = true;
  r.payload.values.assign(x.begin(), x.end());
  r.dense = x;
  return r;
}

inline CompressResult compress_top_k(const CompressorSpec& spec, const Vector& x) {
  std::vector<std::uint32_t> order(spec.dim);
  std::iota(order.begin(), order.end(), 0u);
  // Larger magnitude first; ties go to the lower index so runs are
  // bitwise-reproducible.
  auto cmp = [&x](std::uint32_t a, std::uint32_t b) {
    const double fa = std::fabs(x[a]);
    const double fb = std::fabs(x[b]);
    if (fa != fb) return fa > fb;
    return a < b;
  };
  if (spec.k < spec.dim) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.k) - 1,
                     order.end(), cmp);
  }
  order.resize(spec.k);
  std::sort(order.begin(), order.end());

  CompressResult r;
  r.payload.dim = spec.dim;
  r.payload.indices = std::move(order);
  r.payload.values.reserve(spec.k);
  for (std::uint32_t idx : r.payload.indices) r.payload.values.push_back(x[idx]);
  r.dense = densify(r.payload);
  return r;
}

inline CompressResult compress_random_drop(const CompressorSpec& spec, const Vector& x,
                                           Rng& rng) {
  CompressResult r;
  r.payload.dim = spec.dim;
  const double keep_scale = spec.rescale ? 1.0 / (1.0 - spec.drop_prob) : 1.0;
  for (std::uint32_t i = 0; i < spec.dim; ++i) {
    if (!rng.bernoulli(spec.drop_prob)) {
      r.payload.indices.push_back(i);
      r.payload.values.push_back(x[i] * keep_scale);
    }
  }
  r.dense = densify(r.payload);
  return r;
}

}  // namespace detail

// rng is consumed only by RandomDrop.
inline CompressResult compress(const CompressorSpec& spec, const Vector& x, Rng& rng) {
  spec.validate();
  require_dim(x, spec.dim, "compress");
  switch (spec.kind) {
    case CompressorKind::kIdentity:
      return detail::compress_identity(spec, x);
    case CompressorKind::kTopK:
      return detail::compress_top_k(spec, x);
    case CompressorKind::kRandomDrop:
      return detail::compress_random_drop(spec, x, rng);
  }
  throw ConfigError("compress: unknown kind");
}

// Lowest SNR guarantee gamma of the operator.
//   Identity          -> inf
//   TopK{k}           -> d / (d - k), inf when k = d
//   RandomDrop        -> 1/q unrescaled, (1-q)/q rescaled (both are
//                        expectation bounds; q = 0 is identity-equivalent)
inline double snr_threshold(const CompressorSpec& spec) {
  spec.validate();
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (spec.kind) {
    case CompressorKind::kIdentity:
      return inf;
    case CompressorKind::kTopK:
      if (spec.k == spec.dim) return inf;
      return static_cast<double>(spec.dim) / static_cast<double>(spec.dim - spec.k);
    case CompressorKind::kRandomDrop:
      if (spec.drop_prob == 0.0) return inf;
      if (spec.rescale) return (1.0 - spec.drop_prob) / spec.drop_prob;
      return 1.0 / spec.drop_prob;
  }
  throw ConfigError("snr_threshold: unknown kind");
}

inline const char* kind_name(CompressorKind k) {
  switch (k) {
    case CompressorKind::kIdentity:
      return "identity";
    case CompressorKind::kTopK:
      return "topk";
    case CompressorKind::kRandomDrop:
      return "random_drop";
  }
  return "?";
}

}  // namespace cfedavg
