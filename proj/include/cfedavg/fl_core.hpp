#pragma once

#include <cmath>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cfedavg/compressor.hpp"
#include "cfedavg/dataset.hpp"
#include "cfedavg/diagnostics.hpp"
#include "cfedavg/errors.hpp"
#include "cfedavg/objective.hpp"
#include "cfedavg/rng.hpp"
#include "cfedavg/vec.hpp"

namespace cfedavg {

// eta_{L,t}: either a constant or the decaying 1/(sqrt(t+a) K L) rule.
struct LrSchedule {
  enum class Kind { kConstant, kDecaying } kind = Kind::kConstant;
  double eta_l = 0.1;     // constant
  double a = 1.0;         // decaying shift
  std::size_t k = 1;      // decaying: local steps
  double l_smooth = 1.0;  // decaying: smoothness constant

  static LrSchedule constant(double eta_l) {
    LrSchedule s;
    s.kind = Kind::kConstant;
    s.eta_l = eta_l;
    s.validate();
    return s;
  }

  static LrSchedule decaying(double a, std::size_t k, double l_smooth) {
    LrSchedule s;
    s.kind = Kind::kDecaying;
    s.a = a;
    s.k = k;
    s.l_smooth = l_smooth;
    s.validate();
    return s;
  }

  void validate() const {
    if (kind == Kind::kConstant) {
      if (!(eta_l > 0.0)) throw ConfigError("schedule.eta_l must be positive");
    } else {
      if (!(a > 0.0)) throw ConfigError("schedule.a must be positive");
      if (k < 1) throw ConfigError("schedule.k must be positive");
      if (!(l_smooth > 0.0)) throw ConfigError("schedule.l must be positive");
    }
  }
};

inline double lr_at(const LrSchedule& sched, std::size_t t) {
  if (sched.kind == LrSchedule::Kind::kConstant) return sched.eta_l;
  return 1.0 / (std::sqrt(static_cast<double>(t) + sched.a) * static_cast<double>(sched.k) *
                sched.l_smooth);
}

// Homogeneous sends the raw model change, heterogeneous scales it by 1/K_i.
enum class DeltaMode { kHomogeneous, kHeterogeneous };

struct WorkerState {
  std::size_t id = 0;
  std::size_t local_steps = 1;  // K_i
  Vector error;                 // e_t^i, zero at t = 0
};

struct ServerState {
  Vector x;
  double eta = 1.0;
  std::size_t round = 0;
};

struct LocalUpdateResult {
  Vector x_final;
  double drift_sq_sum = 0.0;  // sum over steps of ||x_{t,k} - x_t||^2
};

// K_i SGD steps from x_t with one freshly derived batch stream per step, so
// trajectories do not depend on worker scheduling.
inline LocalUpdateResult local_update(const ObjectiveSpec& obj, const DataShard& shard,
                                      const Vector& x_start, double eta_l,
                                      std::size_t local_steps, std::size_t batch,
                                      std::uint64_t seed, std::size_t round,
                                      std::size_t worker_id) {
  LocalUpdateResult out;
  out.x_final = x_start;
  for (std::size_t k = 0; k < local_steps; ++k) {
    Rng rng(derive_stream(seed, StreamUse::kBatch, worker_id, round, k));
    Vector g = stochastic_gradient(obj, out.x_final, shard, batch, rng);
    axpy(-eta_l, g, out.x_final);
    if (!all_finite(out.x_final)) {
      throw DivergenceError("non-finite parameters after local step " + std::to_string(k) +
                                " of worker " + std::to_string(worker_id) + " in round " +
                                std::to_string(round),
                            round, worker_id, k);
    }
    out.drift_sq_sum += norm_sq(sub(out.x_final, x_start));
  }
  return out;
}

inline Vector compute_delta(DeltaMode mode, const Vector& x_final, const Vector& x_start,
                            std::size_t local_steps) {
  require_dim(x_final, x_start.size(), "compute_delta");
  Vector g = sub(x_final, x_start);
  if (mode == DeltaMode::kHeterogeneous) {
    if (local_steps == 0) throw ConfigError("heterogeneous delta requires K_i >= 1");
    scale(g, 1.0 / static_cast<double>(local_steps));
  }
  return g;
}

inline Vector compensate(const Vector& g, const Vector& e) {
  require_dim(e, g.size(), "compensate");
  return add(g, e);
}

struct TransmitResult {
  SparsePayload payload;
  Vector dense;       // densify(payload)
  Vector next_error;  // p - dense, elementwise
};

inline TransmitResult transmit(const CompressorSpec& spec, const Vector& p, Rng& rng) {
  auto c = compress(spec, p, rng);
  TransmitResult out;
  out.next_error = sub(p, c.dense);
  out.payload = std::move(c.payload);
  out.dense = std::move(c.dense);
  return out;
}

// x_{t+1} = x_t + eta * (1/m) sum_i densify(payload_i), summed in ascending
// worker order. Advances the round counter.
inline Vector aggregate_and_step(ServerState& server, const std::vector<SparsePayload>& payloads,
                                 std::size_t expected_workers) {
  if (payloads.size() != expected_workers || payloads.empty()) {
    throw ProtocolError("aggregate: expected " + std::to_string(expected_workers) +
                        " payloads, got " + std::to_string(payloads.size()));
  }
  const std::size_t d = server.x.size();
  Vector sum(d, 0.0);
  for (const auto& p : payloads) {
    if (p.dim != d) throw ProtocolError("aggregate: payload dimension mismatch");
    axpy(1.0, densify(p), sum);
  }
  const double inv_m = 1.0 / static_cast<double>(payloads.size());
  for (std::size_t j = 0; j < d; ++j) server.x[j] += server.eta * (sum[j] * inv_m);
  server.round += 1;
  return server.x;
}

struct TrainOptions {
  CompressorSpec compressor;
  DeltaMode mode = DeltaMode::kHomogeneous;
  LrSchedule schedule;
  double eta = 1.0;
  std::size_t batch = 1;
  std::vector<std::size_t> local_steps;  // one K_i per worker
  bool error_feedback = true;
  std::size_t rounds = 0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t threads = 1;
  Vector x0;
  std::optional<double> l_smooth;  // for the learning-rate condition checks
};

struct RoundOutput {
  std::vector<Vector> raw_deltas;       // g_t^i
  std::vector<Vector> compensated;      // p_t^i
  std::vector<SparsePayload> payloads;  // C(p_t^i)
  std::vector<Vector> new_errors;       // e_{t+1}^i (zero under the EF ablation)
  std::vector<double> drift_sq;         // per worker, sum over local steps
  Vector new_x;
  std::size_t bytes = 0;
};

namespace detail {

inline void validate_workers(const TrainOptions& opt, std::size_t m) {
  if (opt.local_steps.size() != m) {
    throw ConfigError("local_steps: expected one entry per worker");
  }
  if (opt.mode == DeltaMode::kHomogeneous) {
    for (std::size_t k : opt.local_steps) {
      if (k != opt.local_steps.front()) {
        throw ConfigError("homogeneous mode requires equal local steps across workers");
      }
    }
  } else {
    for (std::size_t k : opt.local_steps) {
      if (k == 0) throw ConfigError("heterogeneous mode requires K_i >= 1");
    }
  }
}

template <typename Fn>
inline void parallel_for_workers(std::size_t m, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, m));
  if (threads == 1) {
    for (std::size_t i = 0; i < m; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t tid = 0; tid < threads; ++tid) {
    pool.emplace_back([&, tid] {
      try {
        for (std::size_t i = tid; i < m; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// One communication round: local steps, delta, error compensation,
// compression, error feedback, then the ordered server update. Worker bodies
// may run concurrently; every worker owns a private derived stream.
inline RoundOutput run_round(const TrainOptions& opt, const ObjectiveSpec& obj,
                             const std::vector<DataShard>& shards, ServerState& server,
                             std::vector<WorkerState>& workers) {
  const std::size_t m = workers.size();
  detail::validate_workers(opt, m);
  const std::size_t t = server.round;
  const double eta_l = lr_at(opt.schedule, t);

  RoundOutput out;
  out.raw_deltas.resize(m);
  out.compensated.resize(m);
  out.payloads.resize(m);
  out.new_errors.resize(m);
  out.drift_sq.resize(m);

  detail::parallel_for_workers(m, opt.threads, [&](std::size_t i) {
    auto local = local_update(obj, shards[i], server.x, eta_l, workers[i].local_steps,
                              opt.batch, opt.seed, t, i);
    Vector g = compute_delta(opt.mode, local.x_final, server.x, workers[i].local_steps);
    Vector p = compensate(g, workers[i].error);
    if (!all_finite(p)) {
      throw DivergenceError("non-finite compensated delta for worker " + std::to_string(i) +
                                " in round " + std::to_string(t),
                            t, i, workers[i].local_steps);
    }
    Rng crng(derive_stream(opt.seed, StreamUse::kCompress, i, t, 0));
    auto tr = transmit(opt.compressor, p, crng);
    out.raw_deltas[i] = std::move(g);
    out.compensated[i] = std::move(p);
    out.payloads[i] = std::move(tr.payload);
    out.new_errors[i] =
        opt.error_feedback ? std::move(tr.next_error) : Vector(server.x.size(), 0.0);
    out.drift_sq[i] = local.drift_sq_sum;
  });

  for (std::size_t i = 0; i < m; ++i) {
    workers[i].error = out.new_errors[i];
    out.bytes += payload_bytes(out.payloads[i]);
  }
  out.new_x = aggregate_and_step(server, out.payloads, m);
  if (!all_finite(out.new_x)) {
    throw DivergenceError("non-finite model after server update in round " + std::to_string(t),
                          t, 0, 0);
  }
  return out;
}

struct RunResult {
  Trajectory trajectory;
  Vector final_x;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::size_t divergence_round = 0;
  std::string divergence_what;
  std::vector<std::string> warnings;
};

namespace detail {

inline void lr_condition_warnings(const TrainOptions& opt, RunResult& result) {
  if (!opt.l_smooth.has_value() || opt.local_steps.empty()) return;
  const double l = *opt.l_smooth;
  std::size_t k_max = 0;
  for (std::size_t k : opt.local_steps) k_max = std::max(k_max, k);
  if (k_max == 0) return;
  const double eta_l0 = lr_at(opt.schedule, 0);
  const double kl = static_cast<double>(k_max) * l;
  if (eta_l0 > 1.0 / (8.0 * kl)) {
    result.warnings.push_back("eta_L=" + std::to_string(eta_l0) +
                              " violates eta_L <= 1/(8LK) = " + std::to_string(1.0 / (8.0 * kl)));
  }
  if (opt.eta * eta_l0 >= 1.0 / kl) {
    result.warnings.push_back("eta*eta_L=" + std::to_string(opt.eta * eta_l0) +
                              " violates eta*eta_L < 1/(KL) = " + std::to_string(1.0 / kl));
  }
}

}  // namespace detail

// Full training loop. One record per round; loss and gradient norms are
// computed every eval_every rounds (and always at t = 0). Divergence stops
// the loop and leaves the partial trajectory in place.
inline RunResult run_training(const TrainOptions& opt, const ObjectiveSpec& obj,
                              const std::vector<DataShard>& shards) {
  const std::size_t m = shards.size();
  const std::size_t d = dimension(obj);
  if (m == 0) throw ConfigError("run_training: need at least one worker shard");
  detail::validate_workers(opt, m);
  opt.schedule.validate();
  opt.compressor.validate();
  if (opt.compressor.dim != d) throw ConfigError("compressor dimension must match the model");
  require_dim(opt.x0, d, "x0");
  const std::size_t eval_every = std::max<std::size_t>(1, opt.eval_every);

  RunResult result;
  detail::lr_condition_warnings(opt, result);

  ServerState server{opt.x0, opt.eta, 0};
  std::vector<WorkerState> workers(m);
  for (std::size_t i = 0; i < m; ++i) {
    workers[i] = WorkerState{i, opt.local_steps[i], Vector(d, 0.0)};
  }

  Trajectory& traj = result.trajectory;
  traj.eta = opt.eta;
  traj.x.push_back(server.x);
  traj.mean_error.push_back(Vector(d, 0.0));

  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t t = 0; t < opt.rounds; ++t) {
    RoundRecord rec;
    rec.t = t;
    rec.eta_l = lr_at(opt.schedule, t);
    rec.evaluated = (t % eval_every == 0);
    if (rec.evaluated) {
      rec.train_loss = global_loss(obj, server.x, shards);
      rec.grad_norm_sq = norm_sq(global_gradient(obj, server.x, shards));
    }
    // Entering-round error stats.
    {
      Vector mean_err(d, 0.0);
      double err_sq = 0.0;
      for (const auto& w : workers) {
        axpy(inv_m, w.error, mean_err);
        err_sq += norm_sq(w.error);
      }
      rec.mean_error_sq = err_sq * inv_m;
      rec.err_mean_norm_sq = norm_sq(mean_err);
    }

    RoundOutput round;
    try {
      round = run_round(opt, obj, shards, server, workers);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_round = t;
      result.divergence_what = e.what();
      break;
    }

    Vector mean_delta(d, 0.0);
    double worker_delta_sq = 0.0, p_sq = 0.0, drift = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      axpy(inv_m, round.raw_deltas[i], mean_delta);
      worker_delta_sq += norm_sq(round.raw_deltas[i]);
      p_sq += norm_sq(round.compensated[i]);
      if (workers[i].local_steps > 0) {
        drift += round.drift_sq[i] / static_cast<double>(workers[i].local_steps);
      }
    }
    rec.delta_norm_sq = norm_sq(mean_delta);
    rec.mean_worker_delta_sq = worker_delta_sq * inv_m;
    rec.mean_p_sq = p_sq * inv_m;
    rec.drift_mean = drift * inv_m;
    rec.alpha = rec.delta_norm_sq > 0.0
                    ? rec.mean_worker_delta_sq / rec.delta_norm_sq
                    : (rec.mean_worker_delta_sq > 0.0 ? std::numeric_limits<double>::infinity()
                                                      : 1.0);
    rec.bytes = round.bytes;

    traj.records.push_back(rec);
    traj.mean_delta.push_back(std::move(mean_delta));
    traj.x.push_back(server.x);
    {
      Vector mean_err(d, 0.0);
      double err_sq = 0.0;
      for (const auto& w : workers) {
        axpy(inv_m, w.error, mean_err);
        err_sq += norm_sq(w.error);
      }
      traj.mean_error.push_back(std::move(mean_err));
      traj.final_mean_error_sq = err_sq * inv_m;
    }
  }

  result.final_x = server.x;
  if (!result.diverged) result.final_loss = global_loss(obj, result.final_x, shards);
  return result;
}

}  // namespace cfedavg
