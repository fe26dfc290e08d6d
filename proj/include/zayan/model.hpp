#pragma once

#include <string>
#include <vector>

#include "zayan/data.hpp"
#include "zayan/encoder.hpp"
#include "zayan/graph.hpp"
#include "zayan/losses.hpp"

namespace zayan::zt {

// Feature rows without labels, the inference-side input type.
struct RowMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> x;  // row-major

  static RowMatrix from_dataset(const tab::Dataset& d) {
    return RowMatrix{d.n_rows, d.n_features, d.x};
  }
  double at(std::size_t r, std::size_t c) const { return x[r * m + c]; }
  double& at(std::size_t r, std::size_t c) { return x[r * m + c]; }
  std::vector<double> row(std::size_t r) const {
    return std::vector<double>(x.begin() + static_cast<long>(r * m),
                               x.begin() + static_cast<long>((r + 1) * m));
  }
};

struct ZayanTConfig {
  std::size_t num_layers = 2;
  std::size_t nhead = 4;
  std::size_t ffn_dim = 128;  // transformer feed-forward and head hidden width
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double dropout = 0.1;
  double gamma = 0.5;  // preservation weight
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  bool finetune_encoder = false;
  // Initialize positional vectors from the frozen feature embeddings
  // instead of N(0, 0.02^2).
  bool positional_from_z = false;
  // Pseudocode-literal token mode: every sample is fed the same frozen
  // per-feature embeddings z_j instead of its own per-sample z_ij.
  bool literal_frozen_tokens = false;
  nn::Reduction ce_reduction = nn::Reduction::Mean;
  std::size_t patience = 0;  // early stop on training loss; 0 disables
  std::uint64_t seed = 42;

  void validate(std::size_t d) const {
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (nhead < 1 || d % nhead != 0)
      throw ConfigError("nhead must divide the embedding dimension");
    if (ffn_dim < 1) throw ConfigError("t_ffn_dim must be >= 1");
    if (epochs < 1) throw ConfigError("t_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("t_dropout must be in [0, 1)");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("t_lr must be > 0");
    if (weight_decay < 0.0) throw ConfigError("t_weight_decay must be >= 0");
  }
};

// Transformer classifier state: learned per-feature positional vectors, a
// pre-LN encoder stack, a two-layer head, plus the (possibly frozen)
// feature encoder and the frozen feature-embedding matrix.
struct ZayanTState {
  ZayanTConfig cfg;
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t n_classes = 0;
  nn::ParameterSet params;
  cl::EncoderState encoder;
  cl::FeatureEmbeddingMatrix z;
};

struct Prediction {
  std::vector<double> probabilities;  // length C, sums to 1
  std::vector<double> logits;         // length C
  int predicted_class = 0;            // argmax, lowest index wins ties
  std::vector<double> tokens;         // m*d transformer outputs h_ij
  std::vector<double> pooled;         // length d, mean over the m tokens
};

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  double p99_ms = 0.0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
};

struct BatchPredictions {
  std::vector<Prediction> items;
  LatencyStats latency;
};

struct FinetuneEpochRecord {
  std::size_t epoch = 0;
  double cross_entropy = 0.0;       // per-sample mean
  double preservation = 0.0;        // per-sample mean of sum_j ||z - h||^2
  double train_accuracy = 0.0;
};

struct FinetuneHistory {
  std::vector<FinetuneEpochRecord> epochs;
};

ZayanTState init_zayan_t(const ZayanTConfig& cfg, cl::EncoderState encoder,
                         cl::FeatureEmbeddingMatrix z, std::size_t n_classes);

Prediction forward(const std::vector<double>& row, ZayanTState& state);

// Deterministic eval-mode inference in chunks of cfg.batch_size, with
// wall-clock per chunk recorded for the latency report.
BatchPredictions predict_batch(const RowMatrix& rows, ZayanTState& state);

// Eq-style structure term: sum over samples and features of
// ||z_ij - h_ij||^2, from retained token outputs.
double preservation_loss(const std::vector<Prediction>& predictions,
                         const std::vector<std::vector<double>>& zrefs);

// Cross-entropy (mean per batch by default; `sum` reproduces the raw
// summed form) plus gamma times the preservation term under the same
// reduction.
double total_loss(const std::vector<Prediction>& predictions,
                  const std::vector<int>& labels,
                  const std::vector<std::vector<double>>& zrefs, double gamma,
                  nn::Reduction reduction = nn::Reduction::Mean);

std::pair<ZayanTState, FinetuneHistory> finetune(const tab::Dataset& d,
                                                 cl::EncoderState encoder,
                                                 cl::FeatureEmbeddingMatrix z,
                                                 const ZayanTConfig& cfg);

// Full training objective (cross-entropy plus gamma-weighted preservation,
// mean reduction) as one graph over a flat [batch, m] block, with gradients
// reaching the transformer and the encoder. Dropout is off so the loss is
// deterministic; used by the gradient-verification suites.
nn::Graph::Id build_training_loss(nn::Graph& g, ZayanTState& state,
                                  const std::vector<double>& rows,
                                  std::size_t batch,
                                  const std::vector<int>& labels);

// Trained artifact: transformer + encoder + Z + the scaler and naming
// needed to serve raw CSV rows.
struct ModelBundle {
  ZayanTState state;
  tab::ScalerStats scaler;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::string config_hash;
  std::string tool_version;
};

void save_model(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model(const std::string& path);

}  // namespace zayan::zt
