#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cfedavg/errors.hpp"

namespace cfedavg {

// Model parameters, gradients, deltas and error memories all share this shape:
// a flat array of 64-bit floats.
using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

// y += c * x
inline void axpy(double c, std::span<const double> x, Vector& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline void scale(Vector& x, double c) {
  for (double& v : x) v *= c;
}

inline Vector add(const Vector& a, const Vector& b) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vector sub(const Vector& a, const Vector& b) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void require_dim(std::span<const double> a, std::size_t d, const char* what) {
  if (a.size() != d) {
    throw ConfigError(std::string(what) + ": dimension mismatch, got " +
                      std::to_string(a.size()) + ", expected " + std::to_string(d));
  }
}

}  // namespace cfedavg
