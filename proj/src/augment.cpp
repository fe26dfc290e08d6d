#include "zayan/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zayan::aug {

std::vector<double> gaussian_noise(const std::vector<double>& col, double sigma,
                                   RngStream& rng) {
  if (sigma < 0.0) throw ConfigError("gaussian_noise: sigma must be >= 0");
  std::vector<double> out(col.size());
  for (std::size_t i = 0; i < col.size(); ++i)
    out[i] = col[i] + sigma * rng.normal();
  return out;
}

std::vector<double> quantile_warp(const std::vector<double>& col, double jitter,
                                  RngStream& rng) {
  const std::size_t n = col.size();
  if (n < 2) throw DataError("quantile_warp: need at least 2 values");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = col[order[i]];

  // average rank over tie runs, normalized to [0, 1]
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    const double avg_pos = 0.5 * (static_cast<double>(i) + static_cast<double>(j));
    for (std::size_t t = i; t <= j; ++t)
      rank[order[t]] = avg_pos / static_cast<double>(n - 1);
    i = j + 1;
  }

  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    double q = rank[r];
    if (jitter > 0.0) q += rng.uniform(-jitter, jitter);
    q = std::clamp(q, 0.0, 1.0);
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    out[r] = sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  }
  return out;
}

FeatureColumnView random_mask(const std::vector<double>& col, double p,
                              RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("random_mask: p must be in [0, 1)");
  FeatureColumnView view;
  view.values = col;
  view.mask_indicator.assign(col.size(), false);
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (rng.uniform01() < p) {
      view.values[i] = 0.0;
      view.mask_indicator[i] = true;
    }
  }
  return view;
}

FeatureColumnView augment_one_view(const std::vector<double>& col,
                                   const AugmentConfig& cfg, RngStream& rng) {
  cfg.validate();
  std::vector<double> values = col;
  if (cfg.noise_enabled && cfg.sigma > 0.0)
    values = gaussian_noise(values, cfg.sigma, rng);
  if (cfg.warp_enabled && values.size() >= 2)
    values = quantile_warp(values, cfg.warp_jitter, rng);
  if (cfg.mask_enabled && cfg.mask_prob > 0.0)
    return random_mask(values, cfg.mask_prob, rng);
  FeatureColumnView view;
  view.values = std::move(values);
  view.mask_indicator.assign(col.size(), false);
  return view;
}

std::pair<FeatureColumnView, FeatureColumnView> augment_views(
    const std::vector<double>& col, const AugmentConfig& cfg, RngStream& rng) {
  RngStream rng_a = rng.child(1);
  RngStream rng_b = rng.child(2);
  return {augment_one_view(col, cfg, rng_a), augment_one_view(col, cfg, rng_b)};
}

}  // namespace zayan::aug
