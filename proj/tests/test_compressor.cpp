#include "cfedavg/compressor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace cfedavg {
namespace {

Vector random_vec(Rng& rng, std::size_t d) {
  Vector x(d);
  for (double& v : x) v = rng.normal();
  return x;
}

TEST(Compressor, TopKHandExample) {
  // k=1 on (3,-1,2): keeps the 3, residual norm 5 against ||x||^2 = 14,
  // bound (1 - k/d) * 14 = 2/3 * 14.
  auto spec = CompressorSpec::top_k(3, 1);
  Rng rng(1);
  auto r = compress(spec, {3.0, -1.0, 2.0}, rng);
  EXPECT_EQ(r.dense, (Vector{3.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(norm_sq(sub(r.dense, {3.0, -1.0, 2.0})), 5.0);
  EXPECT_LE(5.0, (2.0 / 3.0) * 14.0);
}

TEST(Compressor, TopKFullKeepIsIdentity) {
  Rng rng(2);
  auto x = random_vec(rng, 17);
  auto r = compress(CompressorSpec::top_k(17, 17), x, rng);
  EXPECT_EQ(r.dense, x);
}

TEST(Compressor, ZeroVectorMapsToZero) {
  Rng rng(3);
  Vector zero(8, 0.0);
  for (auto spec : {CompressorSpec::identity(8), CompressorSpec::top_k(8, 3),
                    CompressorSpec::random_drop(8, 0.5)}) {
    auto r = compress(spec, zero, rng);
    EXPECT_EQ(r.dense, zero);
  }
}

TEST(Compressor, TopKTieBreakLowerIndexWins) {
  Rng rng(0);
  auto r = compress(CompressorSpec::top_k(4, 2), {1.0, -2.0, 2.0, 1.0}, rng);
  EXPECT_EQ(r.payload.indices, (std::vector<std::uint32_t>{1, 2}));
  auto tie = compress(CompressorSpec::top_k(3, 1), {5.0, -5.0, 0.0}, rng);
  EXPECT_EQ(tie.dense, (Vector{5.0, 0.0, 0.0}));
}

TEST(Compressor, SnrThresholds) {
  EXPECT_EQ(snr_threshold(CompressorSpec::identity(10)),
            std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(snr_threshold(CompressorSpec::top_k(10, 1)), 10.0 / 9.0);
  EXPECT_EQ(snr_threshold(CompressorSpec::top_k(10, 10)),
            std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(snr_threshold(CompressorSpec::random_drop(10, 0.9)), 1.0 / 0.9);
  EXPECT_DOUBLE_EQ(snr_threshold(CompressorSpec::random_drop(10, 0.9, true)), 0.1 / 0.9);
  EXPECT_EQ(snr_threshold(CompressorSpec::random_drop(10, 0.0)),
            std::numeric_limits<double>::infinity());
}

TEST(Compressor, PayloadBytes) {
  Rng rng(4);
  auto id = compress(CompressorSpec::identity(100), Vector(100, 1.0), rng);
  EXPECT_EQ(payload_bytes(id.payload), 800u);
  auto tk = compress(CompressorSpec::top_k(100, 10), random_vec(rng, 100), rng);
  EXPECT_EQ(payload_bytes(tk.payload), 120u);
  EXPECT_EQ(payload_bytes(SparsePayload{100, false, {}, {}}), 0u);
}

TEST(Compressor, DimensionMismatchIsConfigError) {
  Rng rng(5);
  EXPECT_THROW(compress(CompressorSpec::top_k(4, 2), Vector(5, 1.0), rng), ConfigError);
}

TEST(Compressor, InvalidSpecsRejected) {
  EXPECT_THROW(CompressorSpec::top_k(4, 0), ConfigError);
  EXPECT_THROW(CompressorSpec::top_k(4, 5), ConfigError);
  EXPECT_THROW(CompressorSpec::random_drop(4, 1.0), ConfigError);
  EXPECT_THROW(CompressorSpec::random_drop(4, -0.1), ConfigError);
}

TEST(Compressor, CompMapsToDroppedFraction) {
  // comp = 0.99 on d = 100 keeps one coordinate.
  auto tk = CompressorSpec::from_comp(CompressorKind::kTopK, 100, 0.99);
  EXPECT_EQ(tk.k, 1u);
  auto tk0 = CompressorSpec::from_comp(CompressorKind::kTopK, 100, 0.0);
  EXPECT_EQ(tk0.k, 100u);
  auto rd = CompressorSpec::from_comp(CompressorKind::kRandomDrop, 100, 0.9);
  EXPECT_DOUBLE_EQ(rd.drop_prob, 0.9);
  EXPECT_THROW(CompressorSpec::from_comp(CompressorKind::kTopK, 100, 1.0), ConfigError);
}

// --- SNR contract ---------------------------------------------------------

TEST(Compressor, SnrContractDeterministicKinds) {
  Rng rng(42);
  const std::size_t d = 1000;
  auto id = CompressorSpec::identity(d);
  auto tk = CompressorSpec::top_k(d, 100);
  const double inv_gamma = 1.0 / snr_threshold(tk);
  for (int trial = 0; trial < 1000; ++trial) {
    auto x = random_vec(rng, d);
    auto ri = compress(id, x, rng);
    EXPECT_EQ(ri.dense, x);
    auto rt = compress(tk, x, rng);
    EXPECT_LE(norm_sq(sub(rt.dense, x)), inv_gamma * norm_sq(x));
  }
}

// Monte-Carlo oracle for the stochastic kind: mean residual power over many
// draws must sit within a few standard errors of the analytic value.
void check_random_drop_mc(double q, bool rescale, double analytic_factor,
                          double se_multiplier = 4.0) {
  const std::size_t d = 200;
  Rng data_rng(7);
  auto x = random_vec(data_rng, d);
  const double target = analytic_factor * norm_sq(x);

  const int n = 10000;
  Rng rng(99);
  double sum = 0.0, sum_sq = 0.0;
  auto spec = CompressorSpec::random_drop(d, q, rescale);
  for (int i = 0; i < n; ++i) {
    auto r = compress(spec, x, rng);
    const double e = norm_sq(sub(r.dense, x));
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / n;
  const double var = (sum_sq / n - mean * mean) * n / (n - 1.0);
  const double se = std::sqrt(var / n);
  EXPECT_NEAR(mean, target, se_multiplier * se) << "q=" << q << " rescale=" << rescale;
}

TEST(Compressor, RandomDropMonteCarloUnrescaled) {
  // E||C(x)-x||^2 = q ||x||^2.
  check_random_drop_mc(0.9, false, 0.9);
  check_random_drop_mc(0.5, false, 0.5);
}

TEST(Compressor, RandomDropMonteCarloRescaled) {
  // E||C(x)-x||^2 = q/(1-q) ||x||^2, i.e. gamma = (1-q)/q.
  check_random_drop_mc(0.5, true, 1.0);
  check_random_drop_mc(0.2, true, 0.25);
}

TEST(Compressor, RandomDropNearTotalLossKeepsAlmostNothing) {
  const std::size_t d = 100;
  Rng data_rng(11);
  auto x = random_vec(data_rng, d);
  Rng rng(12);
  auto spec = CompressorSpec::random_drop(d, 0.999);
  double kept = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) kept += norm_sq(compress(spec, x, rng).dense);
  EXPECT_LT(kept / n, 0.01 * norm_sq(x));
  check_random_drop_mc(0.999, false, 0.999, 3.0);
}

// --- algebraic properties -------------------------------------------------

TEST(Compressor, PositiveScaleCovariance) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_vec(rng, 64);
    const double c = std::exp(rng.normal());
    Vector cx(64);
    for (std::size_t i = 0; i < 64; ++i) cx[i] = c * x[i];

    auto tk = CompressorSpec::top_k(64, 9);
    auto a = compress(tk, x, rng);
    auto b = compress(tk, cx, rng);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(b.dense[i], c * a.dense[i]);

    // RandomDrop is covariant only under a replayed stream.
    auto rd = CompressorSpec::random_drop(64, 0.5);
    const std::uint64_t s = derive_stream(7, StreamUse::kCompress, trial);
    Rng r1(s), r2(s);
    auto pa = compress(rd, x, r1);
    auto pb = compress(rd, cx, r2);
    EXPECT_EQ(pa.payload.indices, pb.payload.indices);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(pb.dense[i], c * pa.dense[i]);
  }
}

TEST(Compressor, TopKIdempotent) {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_vec(rng, 32);
    auto spec = CompressorSpec::top_k(32, 5);
    auto once = compress(spec, x, rng);
    auto twice = compress(spec, once.dense, rng);
    EXPECT_EQ(twice.dense, once.dense);
  }
}

TEST(Compressor, DensifyReproducesCompressorOutput) {
  Rng rng(15);
  for (auto spec : {CompressorSpec::identity(40), CompressorSpec::top_k(40, 7),
                    CompressorSpec::random_drop(40, 0.3)}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto x = random_vec(rng, 40);
      auto r = compress(spec, x, rng);
      EXPECT_EQ(densify(r.payload), r.dense);
      // Indices strictly increasing, within range.
      for (std::size_t i = 1; i < r.payload.indices.size(); ++i) {
        EXPECT_LT(r.payload.indices[i - 1], r.payload.indices[i]);
      }
      if (!r.payload.indices.empty()) EXPECT_LT(r.payload.indices.back(), 40u);
    }
  }
}

}  // namespace
}  // namespace cfedavg
