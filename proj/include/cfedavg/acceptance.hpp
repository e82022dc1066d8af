#pragma once

#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cfedavg/experiment.hpp"

namespace cfedavg {

// Canned verification experiments: exact algebraic invariants plus
// scaled-down directional reproductions of the reference behavior. Each
// criterion reports one pass/fail line; MNIST-dependent parts skip when the
// files are absent.

struct CriterionResult {
  int id = 0;
  std::string name;
  enum class Status { kPass, kFail, kSkip } status = Status::kPass;
  std::string detail;
};

struct AcceptanceOptions {
  std::filesystem::path mnist_dir;  // empty: use CFEDAVG_MNIST_DIR, else synthetic fallback
};

namespace acceptance {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

inline CriterionResult make_result(int id, std::string name) {
  CriterionResult res;
  res.id = id;
  res.name = std::move(name);
  return res;
}

// --- shared suite for criteria 1, 3, 4 ---------------------------------------

struct SuiteRun {
  std::size_t m = 0;
  std::size_t k = 0;
  CompressorKind kind = CompressorKind::kIdentity;
  double comp = 0.0;
  double gamma = 0.0;
  RunResult run;
};

inline TrainOptions suite_options(std::size_t d, std::size_t m, std::size_t k,
                                  const CompressorSpec& spec, std::uint64_t seed) {
  TrainOptions opt;
  opt.compressor = spec;
  opt.schedule = LrSchedule::constant(0.005);
  opt.eta = 1.0;
  opt.batch = 5;
  opt.local_steps.assign(m, k);
  opt.rounds = 50;
  opt.seed = seed;
  opt.eval_every = 50;  // only algebraic diagnostics are needed here
  opt.x0 = Vector(d, 0.0);
  return opt;
}

inline const std::vector<SuiteRun>& invariant_suite() {
  static const std::vector<SuiteRun> runs = [] {
    std::vector<SuiteRun> out;
    const std::size_t d = 50;
    for (std::size_t m : {1u, 4u, 16u}) {
      auto syn = generate_synthetic_quadratic(m, d, 60, 0.5, 4242);
      for (std::size_t k : {1u, 5u}) {
        struct Cell {
          CompressorKind kind;
          double comp;
        };
        for (Cell cell : {Cell{CompressorKind::kTopK, 0.0}, Cell{CompressorKind::kTopK, 0.9},
                          Cell{CompressorKind::kTopK, 0.99},
                          Cell{CompressorKind::kRandomDrop, 0.9}}) {
          SuiteRun sr;
          sr.m = m;
          sr.k = k;
          sr.kind = cell.kind;
          sr.comp = cell.comp;
          auto spec = CompressorSpec::from_comp(cell.kind, d, cell.comp);
          sr.gamma = snr_threshold(spec);
          sr.run = run_training(suite_options(d, m, k, spec, 1000 + m * 10 + k),
                                syn.objective, syn.shards);
          out.push_back(std::move(sr));
        }
      }
    }
    return out;
  }();
  return runs;
}

// --- criteria -----------------------------------------------------------------

inline CriterionResult criterion_iterate_recursion() {
  CriterionResult res = make_result(1, "virtual-iterate recursion (x_hat_{t+1} = x_hat_t + eta Delta_t)");
  double worst = 0.0;
  std::size_t diverged = 0;
  for (const auto& sr : invariant_suite()) {
    if (sr.run.diverged) {
      ++diverged;
      continue;
    }
    worst = std::max(worst, check_iterate_recursion(sr.run.trajectory));
  }
  res.detail = "max relative residual " + fmt(worst) + " over " +
               std::to_string(invariant_suite().size()) + " runs";
  if (diverged > 0) res.detail += " (" + std::to_string(diverged) + " diverged)";
  if (worst > 1e-9 || diverged > 0) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_snr_contract() {
  CriterionResult res = make_result(2, "SNR contract for Identity, TopK and RandomDrop");
  const std::size_t d = 1000;
  Rng data_rng(99);
  auto id = CompressorSpec::identity(d);
  auto tk = CompressorSpec::from_comp(CompressorKind::kTopK, d, 0.9);
  const double inv_gamma = 1.0 / snr_threshold(tk);
  Rng rng(7);

  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vector x(d);
    for (double& v : x) v = data_rng.normal();
    auto ri = compress(id, x, rng);
    if (ri.dense != x) ++violations;
    auto rt = compress(tk, x, rng);
    if (norm_sq(sub(rt.dense, x)) > inv_gamma * norm_sq(x)) ++violations;
  }

  // Monte-Carlo mean for the stochastic kind, 4 standard errors.
  Vector x(d);
  for (double& v : x) v = data_rng.normal();
  const double q = 0.9;
  auto rd = CompressorSpec::random_drop(d, q);
  const int n = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = norm_sq(sub(compress(rd, x, rng).dense, x));
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / n;
  const double var = (sum_sq / n - mean * mean) * n / (n - 1.0);
  const double se = std::sqrt(var / n);
  const double target = q * norm_sq(x);
  const double dev = std::fabs(mean - target) / se;

  res.detail = std::to_string(violations) + " deterministic violations; RandomDrop mean within " +
               fmt(dev) + " standard errors";
  if (violations > 0 || dev > 4.0) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_per_round_bound() {
  CriterionResult res = make_result(3, "per-round error bound for deterministic compressors");
  std::size_t violations = 0, rounds = 0;
  for (const auto& sr : invariant_suite()) {
    if (sr.kind == CompressorKind::kRandomDrop || sr.run.diverged) continue;
    auto bound = check_per_round_error_bound(sr.run.trajectory, sr.gamma);
    violations += bound.violations;
    rounds += sr.run.trajectory.rounds();
  }
  res.detail = std::to_string(violations) + " violations over " + std::to_string(rounds) +
               " rounds";
  if (violations > 0) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_summed_bound() {
  CriterionResult res = make_result(4, "summed error bound with grid-optimized (eps, a, b)");
  std::size_t checked = 0, failed = 0;
  double worst_margin = 1.0;
  for (const auto& sr : invariant_suite()) {
    if (sr.kind != CompressorKind::kTopK || sr.run.diverged) continue;
    auto sb = summed_error_bound_check(sr.run.trajectory, optimal_h_params(sr.gamma));
    ++checked;
    if (!sb.holds()) ++failed;
    if (sb.rhs > 0.0 && !sb.unbounded) worst_margin = std::min(worst_margin, 1.0 - sb.lhs / sb.rhs);
  }
  res.detail = std::to_string(checked - failed) + "/" + std::to_string(checked) +
               " TopK runs hold, tightest margin " + fmt(worst_margin);
  if (failed > 0 || checked == 0) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_mode_equivalence() {
  CriterionResult res = make_result(5, "homogeneous/heterogeneous equivalence (eta_het = K eta_hom)");
  const std::size_t d = 50, m = 4, k = 5;
  auto syn = generate_synthetic_quadratic(m, d, 60, 0.5, 777);
  auto spec = CompressorSpec::from_comp(CompressorKind::kTopK, d, 0.9);

  auto opt = suite_options(d, m, k, spec, 31);
  opt.eta = 0.8;
  auto homo = run_training(opt, syn.objective, syn.shards);
  opt.mode = DeltaMode::kHeterogeneous;
  opt.eta = 0.8 * static_cast<double>(k);
  auto het = run_training(opt, syn.objective, syn.shards);

  if (homo.diverged || het.diverged) {
    res.status = CriterionResult::Status::kFail;
    res.detail = "diverged";
    return res;
  }
  double worst = 0.0;
  for (std::size_t t = 0; t < homo.trajectory.x.size(); ++t) {
    worst = std::max(worst, norm(sub(homo.trajectory.x[t], het.trajectory.x[t])) /
                                (1.0 + norm(homo.trajectory.x[t])));
  }
  res.detail = "max relative gap " + fmt(worst) + " over 50 rounds";
  if (worst > 1e-7) res.status = CriterionResult::Status::kFail;
  return res;
}

// Plain generalized FedAvg (no compression, no error memory), written as its
// own loops so the engine is checked against an independent path.
inline std::vector<Vector> reference_uncompressed_fedavg(const ObjectiveSpec& obj,
                                                         const std::vector<DataShard>& shards,
                                                         Vector x, double eta_l, double eta,
                                                         std::size_t k, std::size_t batch,
                                                         std::uint64_t seed,
                                                         std::size_t rounds) {
  const std::size_t m = shards.size();
  const std::size_t d = x.size();
  std::vector<Vector> states{x};
  for (std::size_t t = 0; t < rounds; ++t) {
    Vector sum(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      Vector xi = x;
      for (std::size_t step = 0; step < k; ++step) {
        Rng rng(derive_stream(seed, StreamUse::kBatch, i, t, step));
        Vector g = stochastic_gradient(obj, xi, shards[i], batch, rng);
        for (std::size_t j = 0; j < d; ++j) xi[j] -= eta_l * g[j];
      }
      for (std::size_t j = 0; j < d; ++j) sum[j] += xi[j] - x[j];
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < d; ++j) x[j] += eta * (sum[j] * inv_m);
    states.push_back(x);
  }
  return states;
}

inline CriterionResult criterion_identity_reduction() {
  CriterionResult res = make_result(6, "identity compressor reduces to uncompressed FedAvg");
  const std::size_t d = 50, m = 4, k = 5;
  auto syn = generate_synthetic_quadratic(m, d, 60, 0.5, 888);
  auto opt = suite_options(d, m, k, CompressorSpec::identity(d), 77);
  auto result = run_training(opt, syn.objective, syn.shards);
  if (result.diverged) {
    res.status = CriterionResult::Status::kFail;
    res.detail = "diverged";
    return res;
  }

  double max_err = 0.0;
  for (const auto& rec : result.trajectory.records) {
    max_err = std::max(max_err, rec.mean_error_sq);
  }
  max_err = std::max(max_err, result.trajectory.final_mean_error_sq);

  auto oracle = reference_uncompressed_fedavg(syn.objective, syn.shards, opt.x0, 0.005, opt.eta,
                                              k, opt.batch, opt.seed, opt.rounds);
  double worst = 0.0;
  for (std::size_t t = 0; t < oracle.size(); ++t) {
    worst = std::max(worst, norm(sub(result.trajectory.x[t], oracle[t])) /
                                (1.0 + norm(oracle[t])));
  }
  res.detail = "errors stay at " + fmt(max_err) + ", oracle gap " + fmt(worst);
  if (max_err != 0.0 || worst > 1e-12) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_gradient_correctness() {
  CriterionResult res = make_result(7, "finite-difference gradient agreement for all objectives");
  double worst = 0.0;
  std::string worst_kind = "none";

  auto probe = [&](const ObjectiveSpec& obj, const DataShard& shard, double x_scale,
                   const char* label, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = dimension(obj);
    for (int p = 0; p < 20; ++p) {
      Vector x(d);
      for (double& v : x) v = x_scale * rng.normal();
      auto g = full_gradient(obj, x, shard);
      const std::size_t j = static_cast<std::size_t>(rng.uniform_below(d));
      const double h = 1e-6 * (1.0 + std::fabs(x[j]));
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (loss(obj, xp, shard) - loss(obj, xm, shard)) / (2.0 * h);
      const double rel = std::fabs(g[j] - fd) / (1.0 + std::fabs(fd));
      if (rel > worst) {
        worst = rel;
        worst_kind = label;
      }
    }
  };

  auto syn = generate_synthetic_quadratic(1, 10, 14, 0.4, 91);
  probe(syn.objective, syn.shards[0], 1.0, "quadratic", 500);

  auto ds = generate_synthetic_classes(40, 8, 4, 2.5, 92);
  DataShard shard;
  shard.data = &ds;
  shard.indices.resize(ds.size());
  std::iota(shard.indices.begin(), shard.indices.end(), 0u);
  Logistic lr{.num_features = 8, .num_classes = 4, .l2 = 0.01};
  probe(ObjectiveSpec{lr}, shard, 0.5, "logistic", 501);
  Mlp net{.layers = {8, 10, 4}};
  probe(ObjectiveSpec{net}, shard, 0.5, "mlp", 502);

  res.detail = "worst relative deviation " + fmt(worst) + " (" + worst_kind + ")";
  if (worst > 1e-5) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_linear_speedup() {
  CriterionResult res = make_result(8, "linear-speedup trend of the gradient-norm plateau in m");
  const std::size_t d = 50, k = 5, rounds = 200;
  const std::vector<std::uint64_t> seeds{11, 22, 33, 44, 55};

  std::vector<double> plateau;
  for (std::size_t m : {1u, 4u, 16u}) {
    double seed_mean = 0.0;
    for (std::uint64_t seed : seeds) {
      auto syn = generate_synthetic_quadratic(m, d, 60, 0.5, 9000 + seed);
      auto sm = estimate_smoothness(syn.objective);
      TrainOptions opt;
      opt.compressor = CompressorSpec::from_comp(CompressorKind::kTopK, d, 0.9);
      // Linear-speedup rate choice: eta_L = 1/(sqrt(T) K L), eta = sqrt(K m).
      opt.schedule = LrSchedule::constant(
          1.0 / (std::sqrt(static_cast<double>(rounds)) * static_cast<double>(k) * sm.l));
      opt.eta = std::sqrt(static_cast<double>(k * m));
      opt.batch = 1;  // keeps sigma_L > 0
      opt.local_steps.assign(m, k);
      opt.rounds = rounds;
      opt.seed = seed;
      opt.x0 = Vector(d, 0.0);
      opt.l_smooth = sm.l;
      auto run = run_training(opt, syn.objective, syn.shards);
      if (run.diverged) {
        res.status = CriterionResult::Status::kFail;
        res.detail = "diverged at m=" + std::to_string(m);
        return res;
      }
      double mean = 0.0;
      std::size_t used = 0;
      for (const auto& rec : run.trajectory.records) {
        if (rec.t >= rounds - 50 && rec.evaluated) {
          mean += rec.grad_norm_sq;
          ++used;
        }
      }
      seed_mean += mean / static_cast<double>(used);
    }
    plateau.push_back(seed_mean / static_cast<double>(seeds.size()));
  }

  res.detail = "plateau means m={1,4,16}: " + fmt(plateau[0]) + " > " + fmt(plateau[1]) +
               " > " + fmt(plateau[2]);
  if (!(plateau[0] > plateau[1] && plateau[1] > plateau[2])) {
    res.status = CriterionResult::Status::kFail;
  }
  return res;
}

// --- label-data experiments (criteria 9-11) -----------------------------------

struct LabeledBench {
  std::shared_ptr<LabeledDataset> data;
  Logistic objective;
  bool from_mnist = false;
};

inline LabeledBench make_labeled_bench(const AcceptanceOptions& ao) {
  LabeledBench bench;
  std::filesystem::path dir = ao.mnist_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("CFEDAVG_MNIST_DIR")) dir = env;
  }
  if (!dir.empty()) {
    const auto images = dir / "train-images-idx3-ubyte";
    const auto labels = dir / "train-labels-idx1-ubyte";
    if (std::filesystem::exists(images) && std::filesystem::exists(labels)) {
      bench.data = std::make_shared<LabeledDataset>(load_mnist(images, labels, 2000));
      bench.from_mnist = true;
    }
  }
  if (!bench.data) {
    bench.data = std::make_shared<LabeledDataset>(
        generate_synthetic_classes(2000, 50, 10, 3.0, 2024));
  }
  bench.objective = Logistic{.num_features = bench.data->num_features,
                             .num_classes = bench.data->num_classes,
                             .l2 = 0.0};
  return bench;
}

struct LabeledRun {
  double final_loss = 0.0;
  std::size_t total_bytes = 0;
  RunResult run;
};

inline LabeledRun run_labeled(const LabeledBench& bench, std::size_t m, std::size_t p,
                              const CompressorSpec& spec, bool error_feedback,
                              std::size_t batch, std::size_t k, std::size_t rounds,
                              double eta_l, std::uint64_t seed) {
  auto shards = partition_by_class(*bench.data,
                                   {.workers = m, .classes_per_worker = p, .seed = seed});
  ObjectiveSpec obj{bench.objective};
  TrainOptions opt;
  opt.compressor = spec;
  opt.schedule = LrSchedule::constant(eta_l);
  opt.eta = 1.0;
  opt.batch = batch == 0 ? detail::min_shard_size(shards) : batch;
  opt.local_steps.assign(m, k);
  opt.error_feedback = error_feedback;
  opt.rounds = rounds;
  opt.seed = seed;
  opt.eval_every = rounds;  // final loss is enough
  opt.x0 = Vector(dimension(obj), 0.0);

  LabeledRun out;
  out.run = run_training(opt, obj, shards);
  out.final_loss = out.run.final_loss;
  for (const auto& rec : out.run.trajectory.records) out.total_bytes += rec.bytes;
  return out;
}

inline CriterionResult criterion_topk_budget_reproduction(const AcceptanceOptions& ao) {
  CriterionResult res = make_result(9, "99% compression keeps training loss within 10% at <=2% of the bytes");
  auto bench = make_labeled_bench(ao);
  const std::size_t d = bench.objective.dim();
  const std::vector<std::uint64_t> seeds{101, 102, 103, 104, 105};

  double base_loss = 0.0, topk_loss = 0.0;
  std::size_t base_bytes = 0, topk_bytes = 0;
  for (std::uint64_t seed : seeds) {
    auto base = run_labeled(bench, 10, 5, CompressorSpec::identity(d), true, 64, 5, 50, 0.1,
                            seed);
    auto topk = run_labeled(bench, 10, 5, CompressorSpec::from_comp(CompressorKind::kTopK, d, 0.99),
                            true, 64, 5, 50, 0.1, seed);
    if (base.run.diverged || topk.run.diverged) {
      res.status = CriterionResult::Status::kFail;
      res.detail = "diverged";
      return res;
    }
    base_loss += base.final_loss;
    topk_loss += topk.final_loss;
    base_bytes += base.total_bytes;
    topk_bytes += topk.total_bytes;
  }
  base_loss /= static_cast<double>(seeds.size());
  topk_loss /= static_cast<double>(seeds.size());

  const double rel_gap = (topk_loss - base_loss) / base_loss;
  const double byte_ratio = static_cast<double>(topk_bytes) / static_cast<double>(base_bytes);
  res.detail = std::string(bench.from_mnist ? "mnist" : "synthetic") + ": loss gap " +
               fmt(rel_gap * 100.0) + "%, bytes ratio " + fmt(byte_ratio * 100.0) + "%";
  if (rel_gap > 0.10 || byte_ratio > 0.02) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_error_feedback_ablation(const AcceptanceOptions& ao) {
  CriterionResult res = make_result(10, "error feedback closes the gap under random dropping");
  auto bench = make_labeled_bench(ao);
  const std::size_t d = bench.objective.dim();
  const std::vector<std::uint64_t> seeds{201, 202, 203, 204, 205};
  auto spec = CompressorSpec::from_comp(CompressorKind::kRandomDrop, d, 0.9);

  double with_ef = 0.0, without_ef = 0.0;
  for (std::uint64_t seed : seeds) {
    auto on = run_labeled(bench, 10, 1, spec, true, 64, 5, 50, 0.1, seed);
    auto off = run_labeled(bench, 10, 1, spec, false, 64, 5, 50, 0.1, seed);
    if (on.run.diverged || off.run.diverged) {
      res.status = CriterionResult::Status::kFail;
      res.detail = "diverged";
      return res;
    }
    with_ef += on.final_loss;
    without_ef += off.final_loss;
  }
  with_ef /= static_cast<double>(seeds.size());
  without_ef /= static_cast<double>(seeds.size());
  res.detail = "mean final loss with EF " + fmt(with_ef) + ", without " + fmt(without_ef);
  if (!(without_ef >= with_ef)) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_error_growth(const AcceptanceOptions& ao) {
  CriterionResult res = make_result(11, "error norms grow under comp=0.99 and settle under comp=0.9");
  auto bench = make_labeled_bench(ao);
  const std::size_t d = bench.objective.dim();
  const std::vector<std::uint64_t> seeds{301, 302, 303, 304, 305};
  const std::size_t rounds = 100;

  auto mean_series = [&](double comp) {
    std::vector<double> series(rounds, 0.0);
    for (std::uint64_t seed : seeds) {
      auto spec = CompressorSpec::from_comp(CompressorKind::kRandomDrop, d, comp);
      auto run = run_labeled(bench, 10, 1, spec, true, 0, 5, rounds, 0.05, seed);
      for (const auto& rec : run.run.trajectory.records) {
        series[rec.t] += rec.mean_error_sq / static_cast<double>(seeds.size());
      }
    }
    return series;
  };

  auto heavy = mean_series(0.99);
  auto light = mean_series(0.9);
  const std::size_t tail = rounds / 4;
  const double slope_heavy =
      series_slope(std::span<const double>(heavy).subspan(rounds - tail));
  const double slope_light =
      series_slope(std::span<const double>(light).subspan(rounds - tail));

  res.detail = "tail slope at comp=0.99: " + fmt(slope_heavy) + ", at comp=0.9: " +
               fmt(slope_light);
  if (!(slope_heavy > 0.0 && slope_light <= 0.0)) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_decaying_schedule() {
  CriterionResult res = make_result(12, "decaying schedule matches 1/(sqrt(t+a) K L)");
  struct Triple {
    double a;
    std::size_t k;
    double l;
  };
  double worst = 0.0;
  bool monotone = true;
  for (Triple tr : {Triple{1.0, 1, 1.0}, Triple{4.0, 10, 0.5}, Triple{0.3, 3, 7.0}}) {
    auto sched = LrSchedule::decaying(tr.a, tr.k, tr.l);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t <= 1000; ++t) {
      const double expect = 1.0 / (std::sqrt(static_cast<double>(t) + tr.a) *
                                   static_cast<double>(tr.k) * tr.l);
      const double got = lr_at(sched, t);
      worst = std::max(worst, std::fabs(got - expect));
      if (got > prev) monotone = false;
      prev = got;
    }
  }
  res.detail = "max absolute deviation " + fmt(worst) + (monotone ? ", non-increasing" : "");
  if (worst > 1e-15 || !monotone) res.status = CriterionResult::Status::kFail;
  return res;
}

inline CriterionResult criterion_idx_parser(const AcceptanceOptions& ao) {
  CriterionResult res = make_result(13, "IDX parser shapes and error paths");

  // Error paths never need real files.
  bool ok = true;
  std::string why;
  IdxTensor t;
  t.magic = kIdxMagicImages;
  t.dims = {2, 3, 3};
  t.data.assign(18, 7);
  auto bytes = serialize_idx(t);
  auto bad_magic = bytes;
  bad_magic[3] = 0x55;
  try {
    parse_idx(bad_magic);
    ok = false;
    why = "bad magic accepted";
  } catch (const FormatError&) {
  }
  auto truncated = bytes;
  truncated.pop_back();
  try {
    parse_idx(truncated);
    ok = false;
    why = "truncation accepted";
  } catch (const LengthError&) {
  }
  if (serialize_idx(parse_idx(bytes)) != bytes) {
    ok = false;
    why = "round trip changed bytes";
  }

  std::filesystem::path dir = ao.mnist_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("CFEDAVG_MNIST_DIR")) dir = env;
  }
  const auto images_path = dir / "train-images-idx3-ubyte";
  const auto labels_path = dir / "train-labels-idx1-ubyte";
  if (dir.empty() || !std::filesystem::exists(images_path) ||
      !std::filesystem::exists(labels_path)) {
    if (!ok) {
      res.status = CriterionResult::Status::kFail;
      res.detail = why;
    } else {
      res.status = CriterionResult::Status::kSkip;
      res.detail = "error paths ok; MNIST files absent (set CFEDAVG_MNIST_DIR)";
    }
    return res;
  }

  auto images = load_idx_file(images_path);
  auto labels = load_idx_file(labels_path);
  const bool shapes_ok = images.dims == std::vector<std::uint32_t>{60000, 28, 28} &&
                         labels.dims == std::vector<std::uint32_t>{60000};
  bool labels_ok = true;
  for (auto y : labels.data) labels_ok = labels_ok && y <= 9;
  res.detail = "error paths ok; train files parsed";
  if (!ok || !shapes_ok || !labels_ok) {
    res.status = CriterionResult::Status::kFail;
    res.detail = !ok ? why : "unexpected shapes or labels";
  }
  return res;
}

}  // namespace acceptance

inline std::vector<CriterionResult> run_acceptance_suite(const AcceptanceOptions& ao = {}) {
  using namespace acceptance;
  std::vector<CriterionResult> results;
  // A criterion that throws is a failure of that criterion, not of the suite.
  auto guarded = [&results](auto&& fn) {
    try {
      results.push_back(fn());
    } catch (const std::exception& e) {
      CriterionResult res;
      res.id = static_cast<int>(results.size()) + 1;
      res.name = "criterion aborted";
      res.status = CriterionResult::Status::kFail;
      res.detail = e.what();
      results.push_back(res);
    }
  };
  guarded([] { return criterion_iterate_recursion(); });
  guarded([] { return criterion_snr_contract(); });
  guarded([] { return criterion_per_round_bound(); });
  guarded([] { return criterion_summed_bound(); });
  guarded([] { return criterion_mode_equivalence(); });
  guarded([] { return criterion_identity_reduction(); });
  guarded([] { return criterion_gradient_correctness(); });
  guarded([] { return criterion_linear_speedup(); });
  guarded([&] { return criterion_topk_budget_reproduction(ao); });
  guarded([&] { return criterion_error_feedback_ablation(ao); });
  guarded([&] { return criterion_error_growth(ao); });
  guarded([] { return criterion_decaying_schedule(); });
  guarded([&] { return criterion_idx_parser(ao); });
  return results;
}

inline bool print_acceptance_report(const std::vector<CriterionResult>& results,
                                    std::ostream& out) {
  bool all_ok = true;
  for (const auto& r : results) {
    const char* tag = r.status == CriterionResult::Status::kPass   ? "PASS"
                      : r.status == CriterionResult::Status::kSkip ? "SKIP"
                                                                   : "FAIL";
    out << "[" << tag << "] " << r.id << ". " << r.name << " -- " << r.detail << "\n";
    if (r.status == CriterionResult::Status::kFail) all_ok = false;
  }
  out << (all_ok ? "acceptance: all criteria passed\n" : "acceptance: criteria FAILED\n");
  return all_ok;
}

}  // namespace cfedavg
