#pragma once

#include <vector>

#include "zayan/common.hpp"

namespace zayan::aug {

struct AugmentConfig {
  double sigma = 0.1;        // Gaussian noise scale, standardized units
  double mask_prob = 0.15;   // per-position zeroing probability
  double warp_jitter = 0.1;  // quantile-rank jitter magnitude
  bool noise_enabled = true;
  bool warp_enabled = true;
  bool mask_enabled = true;

  void validate() const {
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    if (mask_prob < 0.0 || mask_prob >= 1.0)
      throw ConfigError("mask_prob must be in [0, 1)");
    if (warp_jitter < 0.0) throw ConfigError("warp_jitter must be >= 0");
  }
};

// One augmented view of a feature column; masked positions hold value 0.
struct FeatureColumnView {
  std::vector<double> values;
  std::vector<bool> mask_indicator;
};

std::vector<double> gaussian_noise(const std::vector<double>& col, double sigma,
                                   RngStream& rng);

// Maps values to empirical quantile ranks in [0,1] (average ranks on ties),
// jitters the ranks with Uniform(-jitter, +jitter) clamped to [0,1], then
// maps back through the empirical inverse CDF with linear interpolation.
std::vector<double> quantile_warp(const std::vector<double>& col, double jitter,
                                  RngStream& rng);

FeatureColumnView random_mask(const std::vector<double>& col, double p,
                              RngStream& rng);

// Composition fixed as noise -> quantile warp -> mask so masked entries
// are exactly zero in the emitted view. The two views draw independent
// randomness from child streams of `rng`.
std::pair<FeatureColumnView, FeatureColumnView> augment_views(
    const std::vector<double>& col, const AugmentConfig& cfg, RngStream& rng);

FeatureColumnView augment_one_view(const std::vector<double>& col,
                                   const AugmentConfig& cfg, RngStream& rng);

}  // namespace zayan::aug
