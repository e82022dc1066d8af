#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cfedavg/dataset.hpp"
#include "cfedavg/errors.hpp"
#include "cfedavg/rng.hpp"
#include "cfedavg/vec.hpp"

namespace cfedavg {

// Per-worker least-squares term F_i(x) = 1/2 ||A_i x - b_i||^2 over the
// shard's rows; rows act as samples for the stochastic oracle.
struct WorkerQuadratic {
  std::size_t rows = 0;
  std::vector<double> a;  // rows x dim, row-major
  std::vector<double> b;  // rows
};

struct Quadratic {
  std::size_t dim = 0;
  std::vector<WorkerQuadratic> workers;
};

// Multinomial logistic regression on a shared dataset; parameters are
// [W (classes x features) row-major | bias (classes)]. Loss is the mean
// cross-entropy over the shard plus (l2/2)||x||^2.
struct Logistic {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  double l2 = 0.0;

  std::size_t dim() const { return num_classes * (num_features + 1); }
};

// Fully connected net, tanh hidden layers, softmax cross-entropy output,
// mean over the shard. Parameters per layer: W (out x in) row-major, then
// bias (out).
struct Mlp {
  std::vector<std::size_t> layers;  // {features, hidden..., classes}

  std::size_t dim() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      d += layers[l] * layers[l + 1] + layers[l + 1];
    }
    return d;
  }
};

using ObjectiveSpec = std::variant<Quadratic, Logistic, Mlp>;

inline std::size_t dimension(const ObjectiveSpec& obj) {
  return std::visit(
      [](const auto& o) -> std::size_t {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          return o.dim;
        } else {
          return o.dim();
        }
      },
      obj);
}

struct SmoothnessEstimate {
  double l = 0.0;
  enum class Method { kConfigProvided, kPowerIteration } method = Method::kConfigProvided;
};

struct VarianceEstimate {
  double sigma_l_sq = 0.0;  // worst observed per-sample gradient scatter
  double sigma_g_sq = 0.0;  // worst observed worker-vs-global gradient gap
};

namespace detail {

inline void check_shard(const DataShard& shard) {
  if (shard.indices.empty()) {
    throw DataError("shard: empty for worker " + std::to_string(shard.worker));
  }
}

inline const WorkerQuadratic& quad_of(const Quadratic& q, const DataShard& shard) {
  if (shard.worker >= q.workers.size()) {
    throw ConfigError("quadratic: shard worker " + std::to_string(shard.worker) + " out of range");
  }
  return q.workers[shard.worker];
}

inline double quad_residual(const WorkerQuadratic& wq, std::size_t dim, const Vector& x,
                            std::size_t j) {
  return dot({wq.a.data() + j * dim, dim}, x) - wq.b[j];
}

// Stable softmax; logits become probabilities, return value is the sample's
// cross-entropy.
inline double softmax_cross_entropy(std::vector<double>& logits, int label) {
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - zmax);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return -std::log(std::max(logits[static_cast<std::size_t>(label)], 1e-300));
}

// One logistic sample; accumulates grad_weight * per-sample gradient when
// grad is non-null.
inline double logistic_sample(const Logistic& lr, const Vector& x, const LabeledDataset& data,
                              std::size_t i, std::vector<double>& probs, Vector* grad,
                              double grad_weight) {
  const std::size_t f = lr.num_features;
  const std::size_t c = lr.num_classes;
  const auto row = data.row(i);
  probs.resize(c);
  for (std::size_t cls = 0; cls < c; ++cls) {
    probs[cls] = dot({x.data() + cls * f, f}, row) + x[c * f + cls];
  }
  const double ell = softmax_cross_entropy(probs, data.labels[i]);
  if (grad != nullptr) {
    for (std::size_t cls = 0; cls < c; ++cls) {
      const double g =
          grad_weight * (probs[cls] - (static_cast<int>(cls) == data.labels[i] ? 1.0 : 0.0));
      double* wrow = grad->data() + cls * f;
      for (std::size_t j = 0; j < f; ++j) wrow[j] += g * row[j];
      (*grad)[c * f + cls] += g;
    }
  }
  return ell;
}

// Scratch for one MLP pass; reused across samples.
struct MlpWork {
  std::vector<std::vector<double>> act;    // act[l]: layer l activations
  std::vector<std::vector<double>> delta;  // delta[l]: dLoss/dz at layer l (post-input)
};

inline void mlp_check(const Mlp& net, const Vector& x) {
  if (net.layers.size() < 2) throw ConfigError("mlp: need at least input and output layers");
  require_dim(x, net.dim(), "mlp parameters");
}

// One MLP sample; accumulates grad_weight * per-sample gradient when grad is
// non-null. Layer l weights start at offset[l].
inline double mlp_sample(const Mlp& net, const Vector& x, const std::vector<std::size_t>& offset,
                         const LabeledDataset& data, std::size_t i, MlpWork& w, Vector* grad,
                         double grad_weight) {
  const std::size_t nl = net.layers.size();
  w.act.resize(nl);
  w.delta.resize(nl);
  w.act[0].assign(data.row(i).begin(), data.row(i).end());

  for (std::size_t l = 0; l + 1 < nl; ++l) {
    const std::size_t in = net.layers[l];
    const std::size_t out = net.layers[l + 1];
    const double* wmat = x.data() + offset[l];
    const double* bias = wmat + in * out;
    auto& a = w.act[l + 1];
    a.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      a[o] = bias[o] + dot({wmat + o * in, in}, w.act[l]);
    }
    if (l + 2 < nl) {
      for (double& v : a) v = std::tanh(v);
    }
  }

  const double ell = softmax_cross_entropy(w.act[nl - 1], data.labels[i]);
  if (grad == nullptr) return ell;

  // Output delta: probs - onehot.
  auto& dl = w.delta[nl - 1];
  dl = w.act[nl - 1];
  dl[static_cast<std::size_t>(data.labels[i])] -= 1.0;

  for (std::size_t l = nl - 1; l-- > 0;) {
    const std::size_t in = net.layers[l];
    const std::size_t out = net.layers[l + 1];
    const double* wmat = x.data() + offset[l];
    double* gw = grad->data() + offset[l];
    double* gb = gw + in * out;
    const auto& d = w.delta[l + 1];
    for (std::size_t o = 0; o < out; ++o) {
      const double go = grad_weight * d[o];
      double* grow = gw + o * in;
      for (std::size_t j = 0; j < in; ++j) grow[j] += go * w.act[l][j];
      gb[o] += go;
    }
    if (l > 0) {
      auto& dprev = w.delta[l];
      dprev.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double dout = d[o];
        const double* wrow = wmat + o * in;
        for (std::size_t j = 0; j < in; ++j) dprev[j] += wrow[j] * dout;
      }
      // through tanh
      for (std::size_t j = 0; j < in; ++j) dprev[j] *= 1.0 - w.act[l][j] * w.act[l][j];
    }
  }
  return ell;
}

inline std::vector<std::size_t> mlp_offsets(const Mlp& net) {
  std::vector<std::size_t> offset(net.layers.size() - 1, 0);
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    offset[l] = at;
    at += net.layers[l] * net.layers[l + 1] + net.layers[l + 1];
  }
  return offset;
}

inline void check_labeled(const DataShard& shard, std::size_t features, std::size_t classes,
                          const char* what) {
  if (shard.data == nullptr) throw ConfigError(std::string(what) + ": shard carries no dataset");
  if (shard.data->num_features != features || shard.data->num_classes > classes) {
    throw ConfigError(std::string(what) + ": dataset shape does not match objective");
  }
}

}  // namespace detail

inline double loss(const ObjectiveSpec& obj, const Vector& x, const DataShard& shard) {
  detail::check_shard(shard);
  require_dim(x, dimension(obj), "loss");
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          const auto& wq = detail::quad_of(o, shard);
          double s = 0.0;
          for (std::size_t j : shard.indices) {
            const double r = detail::quad_residual(wq, o.dim, x, j);
            s += r * r;
          }
          return 0.5 * s;
        } else if constexpr (std::is_same_v<T, Logistic>) {
          detail::check_labeled(shard, o.num_features, o.num_classes, "logistic");
          std::vector<double> probs;
          double s = 0.0;
          for (std::size_t i : shard.indices) {
            s += detail::logistic_sample(o, x, *shard.data, i, probs, nullptr, 0.0);
          }
          return s / static_cast<double>(shard.size()) + 0.5 * o.l2 * norm_sq(x);
        } else {
          detail::mlp_check(o, x);
          detail::check_labeled(shard, o.layers.front(), o.layers.back(), "mlp");
          const auto offset = detail::mlp_offsets(o);
          detail::MlpWork w;
          double s = 0.0;
          for (std::size_t i : shard.indices) {
            s += detail::mlp_sample(o, x, offset, *shard.data, i, w, nullptr, 0.0);
          }
          return s / static_cast<double>(shard.size());
        }
      },
      obj);
}

namespace detail {

// Gradient over the given rows: the quadratic form sums per-row terms, the
// mean-form objectives weight each sample by 1/|rows|.
inline Vector gradient_over(const ObjectiveSpec& obj, const Vector& x, const DataShard& shard,
                            std::span<const std::size_t> rows) {
  Vector grad(dimension(obj), 0.0);
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          const auto& wq = quad_of(o, shard);
          for (std::size_t j : rows) {
            const double r = quad_residual(wq, o.dim, x, j);
            axpy(r, {wq.a.data() + j * o.dim, o.dim}, grad);
          }
        } else if constexpr (std::is_same_v<T, Logistic>) {
          check_labeled(shard, o.num_features, o.num_classes, "logistic");
          std::vector<double> probs;
          const double w = 1.0 / static_cast<double>(rows.size());
          for (std::size_t i : rows) logistic_sample(o, x, *shard.data, i, probs, &grad, w);
          axpy(o.l2, x, grad);
        } else {
          mlp_check(o, x);
          check_labeled(shard, o.layers.front(), o.layers.back(), "mlp");
          const auto offset = mlp_offsets(o);
          MlpWork work;
          const double w = 1.0 / static_cast<double>(rows.size());
          for (std::size_t i : rows) mlp_sample(o, x, offset, *shard.data, i, work, &grad, w);
        }
      },
      obj);
  return grad;
}

}  // namespace detail

inline Vector full_gradient(const ObjectiveSpec& obj, const Vector& x, const DataShard& shard) {
  detail::check_shard(shard);
  require_dim(x, dimension(obj), "full_gradient");
  return detail::gradient_over(obj, x, shard, shard.indices);
}

// Mini-batch gradient estimate: `batch` samples drawn uniformly without
// replacement, unbiased for full_gradient. Quadratic shards use the sum
// form, so the batch mean is scaled back by |shard|.
inline Vector stochastic_gradient(const ObjectiveSpec& obj, const Vector& x,
                                  const DataShard& shard, std::size_t batch, Rng& rng) {
  detail::check_shard(shard);
  require_dim(x, dimension(obj), "stochastic_gradient");
  if (batch < 1 || batch > shard.size()) {
    throw ConfigError("batch: need 1 <= B <= |shard|, got B=" + std::to_string(batch) +
                      ", |shard|=" + std::to_string(shard.size()));
  }

  std::vector<std::size_t> rows;
  if (batch == shard.size()) {
    rows = shard.indices;
  } else {
    std::vector<std::size_t> scratch = shard.indices;
    rng.partial_shuffle(scratch, batch);
    rows.assign(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(batch));
    std::sort(rows.begin(), rows.end());
  }

  Vector grad = detail::gradient_over(obj, x, shard, rows);
  if (std::holds_alternative<Quadratic>(obj)) {
    // E over sampling of (n/B) * sum_batch equals the full sum.
    scale(grad, static_cast<double>(shard.size()) / static_cast<double>(batch));
  }
  return grad;
}

// Empirical proxies for the variance bounds: worst per-sample scatter around
// each worker's gradient, and worst worker-vs-global gap, over the probe
// points. Diagnostics, not certified bounds.
inline VarianceEstimate estimate_variances(const ObjectiveSpec& obj,
                                           const std::vector<DataShard>& shards,
                                           const std::vector<Vector>& probes) {
  if (probes.empty()) throw ConfigError("estimate_variances: need at least one probe point");
  VarianceEstimate est;
  const std::size_t m = shards.size();
  for (const Vector& x : probes) {
    Vector global(dimension(obj), 0.0);
    std::vector<Vector> worker_grads;
    worker_grads.reserve(m);
    for (const auto& shard : shards) {
      worker_grads.push_back(full_gradient(obj, x, shard));
      axpy(1.0, worker_grads.back(), global);
    }
    scale(global, 1.0 / static_cast<double>(m));

    for (std::size_t i = 0; i < m; ++i) {
      est.sigma_g_sq = std::max(est.sigma_g_sq, norm_sq(sub(worker_grads[i], global)));
      double scatter = 0.0;
      for (std::size_t j : shards[i].indices) {
        const std::size_t row[] = {j};
        Vector g = detail::gradient_over(obj, x, shards[i], row);
        if (std::holds_alternative<Quadratic>(obj)) {
          scale(g, static_cast<double>(shards[i].size()));
        }
        scatter += norm_sq(sub(g, worker_grads[i]));
      }
      scatter /= static_cast<double>(shards[i].size());
      est.sigma_l_sq = std::max(est.sigma_l_sq, scatter);
    }
  }
  return est;
}

namespace detail {

// Largest eigenvalue of A^T A by power iteration.
inline double spectral_norm_sq(const WorkerQuadratic& wq, std::size_t dim, int iters,
                               double tol) {
  Vector v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  Vector av(wq.rows), w(dim);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t r = 0; r < wq.rows; ++r) av[r] = dot({wq.a.data() + r * dim, dim}, v);
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t r = 0; r < wq.rows; ++r) axpy(av[r], {wq.a.data() + r * dim, dim}, w);
    const double next = dot(w, v);
    const double wn = norm(w);
    if (wn == 0.0) return 0.0;
    for (std::size_t j = 0; j < dim; ++j) v[j] = w[j] / wn;
    if (it > 0 && std::fabs(next - lambda) <= tol * std::max(1.0, std::fabs(next))) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace detail

// Quadratic objectives get L from power iteration (100 iterations, 1e-8
// tolerance) on the worst worker; everything else must supply L in config.
inline SmoothnessEstimate estimate_smoothness(const ObjectiveSpec& obj,
                                              std::optional<double> config_l = std::nullopt) {
  if (const auto* q = std::get_if<Quadratic>(&obj)) {
    double l = 0.0;
    for (const auto& wq : q->workers) {
      l = std::max(l, detail::spectral_norm_sq(wq, q->dim, 100, 1e-8));
    }
    if (l <= 0.0) throw ConfigError("smoothness: quadratic has zero curvature");
    return {l, SmoothnessEstimate::Method::kPowerIteration};
  }
  if (!config_l.has_value() || *config_l <= 0.0) {
    throw ConfigError("smoothness: objective.l must be provided (positive) for this objective");
  }
  return {*config_l, SmoothnessEstimate::Method::kConfigProvided};
}

// f(x) = (1/m) sum_i F_i(x)
inline double global_loss(const ObjectiveSpec& obj, const Vector& x,
                          const std::vector<DataShard>& shards) {
  double s = 0.0;
  for (const auto& shard : shards) s += loss(obj, x, shard);
  return s / static_cast<double>(shards.size());
}

inline Vector global_gradient(const ObjectiveSpec& obj, const Vector& x,
                              const std::vector<DataShard>& shards) {
  Vector g(dimension(obj), 0.0);
  for (const auto& shard : shards) axpy(1.0, full_gradient(obj, x, shard), g);
  scale(g, 1.0 / static_cast<double>(shards.size()));
  return g;
}

}  // namespace cfedavg
