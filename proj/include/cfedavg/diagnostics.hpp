#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "cfedavg/errors.hpp"
#include "cfedavg/objective.hpp"
#include "cfedavg/vec.hpp"

namespace cfedavg {

// Per-round measurements of the quantities the convergence analysis talks
// about. Norm conventions: delta_norm_sq is the squared norm of the mean
// delta, mean_worker_delta_sq is the mean of squared per-worker norms, and
// likewise for the error fields.
struct RoundRecord {
  std::size_t t = 0;
  bool evaluated = true;  // loss/gradient fields computed this round
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double delta_norm_sq = 0.0;         // ||Delta_t||^2, Delta_t = (1/m) sum g_t^i
  double mean_worker_delta_sq = 0.0;  // (1/m) sum ||g_t^i||^2
  double mean_error_sq = 0.0;         // (1/m) sum ||e_t^i||^2, entering the round
  double err_mean_norm_sq = 0.0;      // ||(1/m) sum e_t^i||^2, entering the round
  double mean_p_sq = 0.0;             // (1/m) sum ||p_t^i||^2
  double alpha = 1.0;                 // mean_worker_delta_sq / delta_norm_sq
  double drift_mean = 0.0;            // (1/m) sum_i (1/K_i) sum_k ||x_{t,k}^i - x_t||^2
  std::size_t bytes = 0;              // payload bytes transmitted this round
  double eta_l = 0.0;
};

struct Trajectory {
  double eta = 1.0;  // global rate, fixed across rounds
  std::vector<RoundRecord> records;
  // Vector series for the exact identities: T+1 states and mean errors,
  // T mean raw deltas.
  std::vector<Vector> x;
  std::vector<Vector> mean_error;
  std::vector<Vector> mean_delta;
  double final_mean_error_sq = 0.0;  // (1/m) sum ||e_T^i||^2

  std::size_t rounds() const { return records.size(); }

  // (1/m) sum ||e_{t+1}^i||^2 after round t, pulled from the next record or
  // the stored final value.
  double mean_error_sq_after(std::size_t t) const {
    return t + 1 < records.size() ? records[t + 1].mean_error_sq : final_mean_error_sq;
  }
};

// x_hat_t = x_t + eta * (1/m) sum_i e_t^i
inline Vector virtual_iterate(const Vector& x, const std::vector<Vector>& errors, double eta) {
  Vector xhat = x;
  if (errors.empty()) return xhat;
  const double w = eta / static_cast<double>(errors.size());
  for (const auto& e : errors) {
    require_dim(e, x.size(), "virtual_iterate");
    axpy(w, e, xhat);
  }
  return xhat;
}

// The virtual iterate obeys x_hat_{t+1} = x_hat_t + eta * Delta_t as an exact
// algebraic identity; the returned residual is pure rounding and must stay
// below 1e-9 for any run in 64-bit arithmetic.
inline double check_iterate_recursion(const Trajectory& traj) {
  double worst = 0.0;
  for (std::size_t t = 0; t < traj.rounds(); ++t) {
    const Vector& x0 = traj.x[t];
    const Vector& x1 = traj.x[t + 1];
    const Vector& e0 = traj.mean_error[t];
    const Vector& e1 = traj.mean_error[t + 1];
    const Vector& d = traj.mean_delta[t];
    double num = 0.0, xhat_sq = 0.0;
    for (std::size_t j = 0; j < x0.size(); ++j) {
      const double xhat0 = x0[j] + traj.eta * e0[j];
      const double xhat1 = x1[j] + traj.eta * e1[j];
      const double r = xhat1 - xhat0 - traj.eta * d[j];
      num += r * r;
      xhat_sq += xhat0 * xhat0;
    }
    worst = std::max(worst, std::sqrt(num) / (1.0 + std::sqrt(xhat_sq)));
  }
  return worst;
}

// Error-amplification constants: gamma from the compressor, eps in (0,1) with
// gamma*eps - 1 >= a > 0 and 1/(1-eps) <= b. `unbounded` marks gamma <= 1,
// where no feasible eps exists and the summed bound is vacuous.
struct HParams {
  double gamma = std::numeric_limits<double>::infinity();
  double eps = 0.5;
  double a = 1.0;
  double b = 2.0;
  bool unbounded = false;

  void validate() const {
    if (unbounded || std::isinf(gamma)) return;
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("h-params: eps must lie in (0,1)");
    if (!(a > 0.0) || gamma * eps - 1.0 < a) {
      throw ConfigError("h-params: need 0 < a <= gamma*eps - 1");
    }
    if (!(b > 0.0) || 1.0 / (1.0 - eps) > b) {
      throw ConfigError("h-params: need b >= 1/(1-eps)");
    }
  }
};

// h(gamma, alpha) = (1/gamma) (1 + 1/a) b alpha
inline double h_value(const HParams& hp, double alpha) {
  if (hp.unbounded) return std::numeric_limits<double>::infinity();
  if (std::isinf(hp.gamma)) return 0.0;
  hp.validate();
  return (1.0 / hp.gamma) * (1.0 + 1.0 / hp.a) * hp.b * alpha;
}

// Tightest (eps, a, b): minimize (1 + 1/(gamma*eps - 1)) / (1 - eps) over a
// 10^4-point grid on eps in (1/gamma, 1), with a and b at their binding
// values.
inline HParams optimal_h_params(double gamma) {
  HParams hp;
  hp.gamma = gamma;
  if (std::isinf(gamma)) return hp;
  if (gamma <= 1.0) {
    hp.unbounded = true;
    return hp;
  }
  const double lo = 1.0 / gamma;
  const int grid = 10000;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double eps = lo + (1.0 - lo) * (i + 0.5) / grid;
    const double a = gamma * eps - 1.0;
    if (a <= 0.0) continue;
    const double b = 1.0 / (1.0 - eps);
    const double val = (1.0 + 1.0 / a) * b;
    if (val < best) {
      best = val;
      hp.eps = eps;
      hp.a = a;
      hp.b = b;
    }
  }
  hp.validate();
  return hp;
}

// Per-round compressor bound: (1/m) sum ||e_{t+1}^i||^2 <= (1/gamma) *
// (1/m) sum ||p_t^i||^2. Exact for deterministic kinds; for stochastic kinds
// the ratios are reported, not asserted.
struct PerRoundErrorBound {
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::size_t violations = 0;

  bool holds() const { return violations == 0; }
};

inline PerRoundErrorBound check_per_round_error_bound(const Trajectory& traj, double gamma) {
  PerRoundErrorBound out;
  const double inv_gamma = std::isinf(gamma) ? 0.0 : 1.0 / gamma;
  for (std::size_t t = 0; t < traj.rounds(); ++t) {
    const double lhs = traj.mean_error_sq_after(t);
    const double rhs = inv_gamma * traj.records[t].mean_p_sq;
    out.lhs.push_back(lhs);
    out.rhs.push_back(rhs);
    if (lhs > rhs) ++out.violations;
  }
  return out;
}

// Summed bound: sum_t ||e_t||^2 <= sum_t h(gamma, alpha_t) ||Delta_t||^2,
// with e_t the mean error vector. The right side uses
// alpha_t ||Delta_t||^2 = (1/m) sum ||g_t^i||^2 directly, which also covers
// rounds whose mean delta cancels to zero.
struct SummedErrorBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool unbounded = false;

  bool holds() const { return unbounded || lhs <= rhs; }
};

inline SummedErrorBound summed_error_bound_check(const Trajectory& traj, const HParams& hp) {
  SummedErrorBound out;
  if (hp.unbounded) {
    out.unbounded = true;
    out.rhs = std::numeric_limits<double>::infinity();
  }
  const double factor =
      std::isinf(hp.gamma) ? 0.0 : (1.0 / hp.gamma) * (1.0 + 1.0 / hp.a) * hp.b;
  for (std::size_t t = 0; t < traj.rounds(); ++t) {
    out.lhs += traj.records[t].err_mean_norm_sq;
    if (!out.unbounded) out.rhs += factor * traj.records[t].mean_worker_delta_sq;
  }
  return out;
}

struct GradSummary {
  double min_grad_norm_sq = std::numeric_limits<double>::infinity();
  double f0 = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> f_star;  // analytic optimum, quadratic only
};

namespace detail {

// Solve H y = c for symmetric positive definite H (in place Cholesky);
// nullopt when H is not PD.
inline std::optional<Vector> spd_solve(std::vector<double> h, Vector c) {
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = h[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= h[i * n + k] * h[j * n + k];
      if (i == j) {
        if (s <= 0.0) return std::nullopt;
        h[i * n + i] = std::sqrt(s);
      } else {
        h[i * n + j] = s / h[j * n + j];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) c[i] -= h[i * n + k] * c[k];
    c[i] /= h[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) c[i] -= h[k * n + i] * c[k];
    c[i] /= h[i * n + i];
  }
  return c;
}

// Analytic minimum of f(x) = (1/m) sum_i 1/2 ||A_i x - b_i||^2 over the
// shard rows, via the normal equations.
inline std::optional<double> quadratic_f_star(const Quadratic& q,
                                              const std::vector<DataShard>& shards) {
  const std::size_t d = q.dim;
  std::vector<double> h(d * d, 0.0);
  Vector c(d, 0.0);
  for (const auto& shard : shards) {
    const auto& wq = quad_of(q, shard);
    for (std::size_t r : shard.indices) {
      const double* row = wq.a.data() + r * d;
      for (std::size_t i = 0; i < d; ++i) {
        c[i] += row[i] * wq.b[r];
        for (std::size_t j = 0; j <= i; ++j) h[i * d + j] += row[i] * row[j];
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) h[i * d + j] = h[j * d + i];
  }
  auto x = spd_solve(std::move(h), c);
  if (!x.has_value()) return std::nullopt;
  double f = 0.0;
  for (const auto& shard : shards) {
    const auto& wq = quad_of(q, shard);
    for (std::size_t r : shard.indices) {
      const double res = dot({wq.a.data() + r * d, d}, *x) - wq.b[r];
      f += 0.5 * res * res;
    }
  }
  return f / static_cast<double>(shards.size());
}

}  // namespace detail

// Smallest recorded ||grad f(x_t)||^2 plus the starting value f(x_hat_0)
// (= f(x_0), errors start at zero) and, for quadratic objectives, the
// analytic optimum.
inline GradSummary min_grad_norm(const Trajectory& traj, const ObjectiveSpec& obj,
                                 const std::vector<DataShard>& shards) {
  GradSummary out;
  for (const auto& rec : traj.records) {
    if (rec.evaluated && rec.grad_norm_sq < out.min_grad_norm_sq) {
      out.min_grad_norm_sq = rec.grad_norm_sq;
    }
  }
  if (!traj.records.empty() && traj.records.front().evaluated) {
    out.f0 = traj.records.front().train_loss;
  }
  if (const auto* q = std::get_if<Quadratic>(&obj)) {
    out.f_star = detail::quadratic_f_star(*q, shards);
  }
  return out;
}

// Least-squares slope of y over equally spaced points; used for the
// error-growth diagnostic.
inline double series_slope(std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  const double tbar = (n - 1) / 2.0;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tbar;
    num += dt * (y[i] - ybar);
    den += dt * dt;
  }
  return num / den;
}

}  // namespace cfedavg
