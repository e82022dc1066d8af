#include "cfedavg/objective.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cfedavg/synthetic.hpp"

namespace cfedavg {
namespace {

Vector random_vec(Rng& rng, std::size_t d, double s = 1.0) {
  Vector x(d);
  for (double& v : x) v = s * rng.normal();
  return x;
}

// Quadratic fixture with distinct scaled basis rows so a draw is identifiable
// from the gradient's support.
struct DiagonalQuad {
  ObjectiveSpec obj;
  DataShard shard;
  Vector coeff, rhs;

  explicit DiagonalQuad(std::size_t n) {
    Quadratic q;
    q.dim = n;
    WorkerQuadratic wq;
    wq.rows = n;
    wq.a.assign(n * n, 0.0);
    coeff.resize(n);
    rhs.resize(n);
    Rng rng(321);
    for (std::size_t j = 0; j < n; ++j) {
      coeff[j] = 1.0 + 0.25 * static_cast<double>(j);
      rhs[j] = rng.normal();
      wq.a[j * n + j] = coeff[j];
      wq.b.push_back(rhs[j]);
    }
    q.workers.push_back(std::move(wq));
    obj = std::move(q);
    shard.worker = 0;
    shard.indices.resize(n);
    std::iota(shard.indices.begin(), shard.indices.end(), 0u);
  }

  // per-row gradient contribution at x
  Vector row_grad(const Vector& x, std::size_t j) const {
    Vector g(coeff.size(), 0.0);
    g[j] = coeff[j] * (coeff[j] * x[j] - rhs[j]);
    return g;
  }
};

LabeledDataset binary_set(std::size_t n, std::size_t f, std::uint64_t seed) {
  return generate_synthetic_classes(n, f, 2, 2.0, seed);
}

DataShard whole(const LabeledDataset& ds) {
  DataShard s;
  s.data = &ds;
  s.indices.resize(ds.size());
  std::iota(s.indices.begin(), s.indices.end(), 0u);
  return s;
}

// --- loss -------------------------------------------------------------------

TEST(Objective, QuadraticLossVanishesAtExactFit) {
  auto syn = generate_synthetic_quadratic(3, 10, 6, 0.0, 17);
  for (const auto& shard : syn.shards) {
    EXPECT_DOUBLE_EQ(loss(syn.objective, syn.x_star, shard), 0.0);
  }
}

TEST(Objective, LogisticLossAtZeroIsLogTwoPerSample) {
  auto ds = binary_set(40, 6, 3);
  Logistic lr{.num_features = 6, .num_classes = 2, .l2 = 0.0};
  Vector x(lr.dim(), 0.0);
  EXPECT_NEAR(loss(ObjectiveSpec{lr}, x, whole(ds)), std::log(2.0), 1e-12);
}

TEST(Objective, MlpLossNonNegative) {
  auto ds = generate_synthetic_classes(30, 5, 3, 2.0, 4);
  Mlp net{.layers = {5, 7, 3}};
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    auto x = random_vec(rng, net.dim(), 0.5);
    EXPECT_GE(loss(ObjectiveSpec{net}, x, whole(ds)), 0.0);
  }
}

TEST(Objective, EmptyShardIsDataError) {
  DiagonalQuad fix(4);
  DataShard empty;
  empty.worker = 0;
  Vector x(4, 0.0);
  EXPECT_THROW(loss(fix.obj, x, empty), DataError);
  EXPECT_THROW(full_gradient(fix.obj, x, empty), DataError);
}

// --- full gradient ----------------------------------------------------------

TEST(Objective, QuadraticGradientMatchesNormalEquations) {
  auto syn = generate_synthetic_quadratic(2, 7, 5, 0.3, 23);
  const auto& q = std::get<Quadratic>(syn.objective);
  Rng rng(5);
  auto x = random_vec(rng, 7);
  for (std::size_t i = 0; i < 2; ++i) {
    // direct A^T (A x - b)
    const auto& wq = q.workers[i];
    Vector expect(7, 0.0);
    for (std::size_t r = 0; r < wq.rows; ++r) {
      const double res = dot({wq.a.data() + r * 7, 7}, x) - wq.b[r];
      for (std::size_t j = 0; j < 7; ++j) expect[j] += wq.a[r * 7 + j] * res;
    }
    auto got = full_gradient(syn.objective, x, syn.shards[i]);
    for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR(got[j], expect[j], 1e-12);
  }
}

TEST(Objective, QuadraticGradientZeroAtMinimizer) {
  auto syn = generate_synthetic_quadratic(4, 9, 9, 0.0, 29);
  for (const auto& shard : syn.shards) {
    EXPECT_DOUBLE_EQ(norm(full_gradient(syn.objective, syn.x_star, shard)), 0.0);
  }
}

// Central-difference oracle: each probed coordinate within 1e-5 relative,
// step 1e-6 * (1 + |x_j|).
void check_fd(const ObjectiveSpec& obj, const DataShard& shard, Rng& rng, double x_scale) {
  const std::size_t d = dimension(obj);
  for (int probe = 0; probe < 20; ++probe) {
    auto x = random_vec(rng, d, x_scale);
    auto g = full_gradient(obj, x, shard);
    const std::size_t j = static_cast<std::size_t>(rng.uniform_below(d));
    const double h = 1e-6 * (1.0 + std::fabs(x[j]));
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const double fd = (loss(obj, xp, shard) - loss(obj, xm, shard)) / (2.0 * h);
    EXPECT_NEAR(g[j], fd, 1e-5 * (1.0 + std::fabs(fd))) << "probe " << probe << " coord " << j;
  }
}

TEST(Objective, FiniteDifferenceQuadratic) {
  auto syn = generate_synthetic_quadratic(1, 8, 12, 0.4, 31);
  Rng rng(100);
  check_fd(syn.objective, syn.shards[0], rng, 1.0);
}

TEST(Objective, FiniteDifferenceLogistic) {
  auto ds = generate_synthetic_classes(25, 5, 3, 2.0, 7);
  Logistic lr{.num_features = 5, .num_classes = 3, .l2 = 0.01};
  Rng rng(101);
  check_fd(ObjectiveSpec{lr}, whole(ds), rng, 0.5);
}

TEST(Objective, FiniteDifferenceMlp) {
  auto ds = generate_synthetic_classes(20, 4, 3, 2.0, 9);
  Mlp net{.layers = {4, 6, 3}};
  Rng rng(102);
  check_fd(ObjectiveSpec{net}, whole(ds), rng, 0.5);
}

// --- stochastic gradient ----------------------------------------------------

TEST(Objective, FullBatchEqualsFullGradientExactly) {
  auto syn = generate_synthetic_quadratic(1, 6, 9, 0.2, 37);
  Rng rng(200);
  auto x = random_vec(rng, 6);
  auto full = full_gradient(syn.objective, x, syn.shards[0]);
  auto stoch = stochastic_gradient(syn.objective, x, syn.shards[0], 9, rng);
  EXPECT_EQ(stoch, full);

  auto ds = generate_synthetic_classes(12, 4, 3, 2.0, 11);
  Logistic lr{.num_features = 4, .num_classes = 3, .l2 = 0.0};
  auto xl = random_vec(rng, lr.dim(), 0.3);
  auto s = whole(ds);
  EXPECT_EQ(stochastic_gradient(ObjectiveSpec{lr}, xl, s, 12, rng),
            full_gradient(ObjectiveSpec{lr}, xl, s));
}

TEST(Objective, SingleSampleShardGradientAtZero) {
  // One-row shard: gradient at x = 0 is -A^T b.
  Quadratic q;
  q.dim = 3;
  WorkerQuadratic wq;
  wq.rows = 1;
  wq.a = {2.0, -1.0, 0.5};
  wq.b = {3.0};
  q.workers.push_back(wq);
  DataShard shard;
  shard.worker = 0;
  shard.indices = {0};
  Rng rng(7);
  auto g = stochastic_gradient(ObjectiveSpec{q}, Vector(3, 0.0), shard, 1, rng);
  EXPECT_EQ(g, (Vector{-6.0, 3.0, -1.5}));
}

TEST(Objective, BatchLargerThanShardRejected) {
  DiagonalQuad fix(4);
  Rng rng(1);
  Vector x(4, 0.0);
  EXPECT_THROW(stochastic_gradient(fix.obj, x, fix.shard, 5, rng), ConfigError);
  EXPECT_THROW(stochastic_gradient(fix.obj, x, fix.shard, 0, rng), ConfigError);
}

TEST(Objective, DrawnBatchMatchesReconstructedEstimator) {
  // Rows are identifiable from the gradient support, so every draw can be
  // checked against the (n/B) * sum-over-batch form.
  const std::size_t n = 8, B = 3;
  DiagonalQuad fix(n);
  Rng rng(55);
  auto x = random_vec(rng, n);
  for (int t = 0; t < 200; ++t) {
    auto g = stochastic_gradient(fix.obj, x, fix.shard, B, rng);
    std::size_t support = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (g[j] == 0.0) continue;
      ++support;
      const double per_row = fix.coeff[j] * (fix.coeff[j] * x[j] - fix.rhs[j]);
      EXPECT_DOUBLE_EQ(g[j], (static_cast<double>(n) / B) * per_row);
    }
    EXPECT_EQ(support, B);
  }
}

TEST(Objective, ExhaustiveUnbiasednessQuadratic) {
  // Enumerate all C(8,3) batches, average the estimator, compare to the full
  // gradient.
  const std::size_t n = 8, B = 3;
  auto syn = generate_synthetic_quadratic(1, 5, n, 0.3, 41);
  Rng rng(60);
  auto x = random_vec(rng, 5);
  auto full = full_gradient(syn.objective, x, syn.shards[0]);

  Vector mean(5, 0.0);
  std::size_t count = 0;
  std::vector<std::size_t> pick(B);
  for (pick[0] = 0; pick[0] < n; ++pick[0]) {
    for (pick[1] = pick[0] + 1; pick[1] < n; ++pick[1]) {
      for (pick[2] = pick[1] + 1; pick[2] < n; ++pick[2]) {
        DataShard sub;
        sub.worker = 0;
        sub.indices = pick;
        // Restricted-shard full gradient is the batch sum; rescale by n/B to
        // reconstruct the estimator the full shard would produce.
        auto g = full_gradient(syn.objective, x, sub);
        axpy(static_cast<double>(n) / B, g, mean);
        ++count;
      }
    }
  }
  scale(mean, 1.0 / static_cast<double>(count));
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(mean[j], full[j], 1e-10);
}

TEST(Objective, ExhaustiveUnbiasednessLogistic) {
  const std::size_t n = 6, B = 2;
  auto ds = generate_synthetic_classes(n, 3, 2, 2.0, 13);
  Logistic lr{.num_features = 3, .num_classes = 2, .l2 = 0.05};
  ObjectiveSpec obj{lr};
  Rng rng(61);
  auto x = random_vec(rng, lr.dim(), 0.4);
  auto s = whole(ds);
  auto full = full_gradient(obj, x, s);

  Vector mean(lr.dim(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      DataShard sub;
      sub.data = &ds;
      sub.indices = {i, j};
      axpy(1.0, full_gradient(obj, x, sub), mean);
      ++count;
    }
  }
  scale(mean, 1.0 / static_cast<double>(count));
  for (std::size_t j = 0; j < lr.dim(); ++j) EXPECT_NEAR(mean[j], full[j], 1e-10);
}

TEST(Objective, SingletonAveragesRecoverFullGradient) {
  const std::size_t n = 7;
  auto syn = generate_synthetic_quadratic(1, 4, n, 0.5, 43);
  Rng rng(62);
  auto x = random_vec(rng, 4);
  auto full = full_gradient(syn.objective, x, syn.shards[0]);
  Vector mean(4, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    DataShard sub;
    sub.worker = 0;
    sub.indices = {j};
    axpy(static_cast<double>(n), full_gradient(syn.objective, x, sub), mean);
  }
  scale(mean, 1.0 / static_cast<double>(n));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(mean[j], full[j], 1e-12);
}

// --- descent ----------------------------------------------------------------

TEST(Objective, FullGradientStepNeverIncreasesQuadraticLoss) {
  auto syn = generate_synthetic_quadratic(1, 10, 15, 0.5, 47);
  auto sm = estimate_smoothness(syn.objective);
  Rng rng(70);
  for (int t = 0; t < 20; ++t) {
    auto x = random_vec(rng, 10, 2.0);
    const double before = loss(syn.objective, x, syn.shards[0]);
    auto g = full_gradient(syn.objective, x, syn.shards[0]);
    axpy(-1.0 / sm.l, g, x);
    EXPECT_LE(loss(syn.objective, x, syn.shards[0]), before * (1.0 + 1e-12));
  }
}

// --- variance estimates -----------------------------------------------------

TEST(Objective, IdenticalShardsGiveZeroGlobalVariance) {
  auto ds = generate_synthetic_classes(30, 4, 3, 2.0, 15);
  Logistic lr{.num_features = 4, .num_classes = 3, .l2 = 0.0};
  auto base = whole(ds);
  std::vector<DataShard> shards(4, base);
  for (std::size_t w = 0; w < shards.size(); ++w) shards[w].worker = w;
  Rng rng(80);
  auto est = estimate_variances(ObjectiveSpec{lr}, shards, {random_vec(rng, lr.dim(), 0.3)});
  EXPECT_DOUBLE_EQ(est.sigma_g_sq, 0.0);
}

TEST(Objective, SingleSampleShardsGiveZeroLocalVariance) {
  auto syn = generate_synthetic_quadratic(3, 5, 1, 0.7, 53);
  Rng rng(81);
  auto est = estimate_variances(syn.objective, syn.shards, {random_vec(rng, 5)});
  EXPECT_DOUBLE_EQ(est.sigma_l_sq, 0.0);
  EXPECT_GT(est.sigma_g_sq, 0.0);
}

TEST(Objective, GlobalVarianceGrowsWithHeterogeneity) {
  double prev = -1.0;
  for (double hetero : {0.0, 0.5, 1.0}) {
    auto syn = generate_synthetic_quadratic(5, 8, 10, hetero, 59);
    auto est = estimate_variances(syn.objective, syn.shards, {syn.x_star});
    EXPECT_GT(est.sigma_g_sq, prev) << "hetero=" << hetero;
    prev = est.sigma_g_sq;
  }
}

TEST(Objective, VarianceNeedsProbes) {
  auto syn = generate_synthetic_quadratic(2, 4, 3, 0.0, 61);
  EXPECT_THROW(estimate_variances(syn.objective, syn.shards, {}), ConfigError);
}

// --- smoothness -------------------------------------------------------------

TEST(Objective, SmoothnessOfIdentityIsOne) {
  Quadratic q;
  q.dim = 4;
  WorkerQuadratic wq;
  wq.rows = 4;
  wq.a.assign(16, 0.0);
  for (int j = 0; j < 4; ++j) wq.a[static_cast<std::size_t>(j * 4 + j)] = 1.0;
  wq.b.assign(4, 0.0);
  q.workers.push_back(wq);
  auto est = estimate_smoothness(ObjectiveSpec{q});
  EXPECT_NEAR(est.l, 1.0, 1e-8);
  EXPECT_EQ(est.method, SmoothnessEstimate::Method::kPowerIteration);
}

TEST(Objective, SmoothnessOfScaledDiagonal) {
  Quadratic q;
  q.dim = 3;
  WorkerQuadratic wq;
  wq.rows = 3;
  wq.a.assign(9, 0.0);
  for (int j = 0; j < 3; ++j) wq.a[static_cast<std::size_t>(j * 3 + j)] = 3.0;
  wq.b.assign(3, 0.0);
  q.workers.push_back(wq);
  EXPECT_NEAR(estimate_smoothness(ObjectiveSpec{q}).l, 9.0, 1e-7);
}

TEST(Objective, NonQuadraticWithoutConfigLIsError) {
  Mlp net{.layers = {4, 5, 2}};
  EXPECT_THROW(estimate_smoothness(ObjectiveSpec{net}), ConfigError);
  auto est = estimate_smoothness(ObjectiveSpec{net}, 2.5);
  EXPECT_DOUBLE_EQ(est.l, 2.5);
  EXPECT_EQ(est.method, SmoothnessEstimate::Method::kConfigProvided);
}

}  // namespace
}  // namespace cfedavg
