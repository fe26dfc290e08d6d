#pragma once

#include "zayan/encoder.hpp"
#include "zayan/losses.hpp"
#include "zayan/optim.hpp"

namespace zayan::cl {

struct PretrainConfig {
  std::size_t epochs = 100;
  double tau = 0.1;
  double lambda = 1.0;  // redundancy weight
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;  // row subsample per epoch
  aug::AugmentConfig augment;
  EncoderConfig encoder;
  std::uint64_t seed = 42;
  // Eq-literal denominator excludes the positive pair; this flag restores
  // the standard InfoNCE denominator that includes it.
  bool include_positive_in_denominator = false;
  // Ablation switch: when false the contrastive term is dropped and only
  // lambda * redundancy is optimized.
  bool use_contrastive = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("cl_epochs must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("cl_lr must be > 0");
    if (weight_decay < 0.0) throw ConfigError("cl_weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    augment.validate();
    encoder.validate();
  }
};

struct PretrainEpochRecord {
  std::size_t epoch = 0;
  double infonce = 0.0;
  double redundancy = 0.0;
  double mi_bound = 0.0;
  double gram_offdiag_mean = 0.0;
  double gram_offdiag_abs_mean = 0.0;
};

struct PretrainHistory {
  // Gram statistics of the clean-column embeddings at initialization,
  // before any optimizer step.
  double initial_gram_offdiag_mean = 0.0;
  double initial_gram_offdiag_abs_mean = 0.0;
  std::vector<PretrainEpochRecord> epochs;
};

struct PretrainResult {
  EncoderState encoder;
  FeatureEmbeddingMatrix z;
  PretrainHistory history;
};

// ZAYAN-CL loop: each epoch draws a row subsample, builds two augmented
// views per feature, encodes them, and takes one optimizer step on
// infonce + lambda * redundancy (redundancy on view-1 embeddings). The
// exported Z is recomputed from clean full columns with dropout off.
PretrainResult pretrain(const tab::Dataset& d, const PretrainConfig& cfg);

void save_history(const PretrainHistory& h, const std::string& path);

}  // namespace zayan::cl
