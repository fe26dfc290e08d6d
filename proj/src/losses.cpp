#include "zayan/losses.hpp"

#include <cmath>
#include <limits>

namespace zayan::cl {

namespace {

double column_dot(const FeatureEmbeddingMatrix& a, std::size_t i,
                  const FeatureEmbeddingMatrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.d; ++r) s += a.at(r, i) * b.at(r, j);
  return s;
}

}  // namespace

double infonce_feature_loss(const FeatureEmbeddingMatrix& z1,
                            const FeatureEmbeddingMatrix& z2, double tau,
                            bool include_positive) {
  if (z1.d != z2.d || z1.m != z2.m)
    throw DataError("infonce: view matrices must have equal shape");
  if (z1.m < 2) throw DataError("infonce: at least 2 features required");
  if (!(tau > 0.0)) throw ConfigError("infonce: tau must be > 0");
  const std::size_t m = z1.m;
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      if (!include_positive && k == j) continue;
      mx = std::max(mx, column_dot(z1, j, z2, k) / tau);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (!include_positive && k == j) continue;
      z += std::exp(column_dot(z1, j, z2, k) / tau - mx);
    }
    total += (mx + std::log(z)) - column_dot(z1, j, z2, j) / tau;
  }
  return total;
}

double redundancy_penalty(const FeatureEmbeddingMatrix& z) {
  z.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < z.m; ++i) {
    for (std::size_t j = 0; j < z.m; ++j) {
      const double g = column_dot(z, i, z, j) - (i == j ? 1.0 : 0.0);
      total += g * g;
    }
  }
  return total;
}

double mi_lower_bound(double loss, std::size_t m) {
  if (m < 2) throw DataError("mi_lower_bound: m must be >= 2");
  return std::log(static_cast<double>(m)) - loss;
}

GramStats gram_offdiagonal_stats(const FeatureEmbeddingMatrix& z) {
  GramStats stats;
  if (z.m < 2) return stats;
  double sum = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < z.m; ++i) {
    for (std::size_t j = 0; j < z.m; ++j) {
      if (i == j) continue;
      const double g = column_dot(z, i, z, j);
      sum += g;
      abs_sum += std::abs(g);
    }
  }
  const double pairs = static_cast<double>(z.m * (z.m - 1));
  stats.offdiag_mean = sum / pairs;
  stats.offdiag_abs_mean = abs_sum / pairs;
  return stats;
}

}  // namespace zayan::cl
