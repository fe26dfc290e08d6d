#pragma once

#include <vector>

#include "zayan/augment.hpp"
#include "zayan/data.hpp"
#include "zayan/graph.hpp"

namespace zayan::cl {

struct EncoderConfig {
  std::size_t emb_dim = 32;
  std::size_t hidden_dim = 128;
  double dropout = 0.1;

  void validate() const {
    if (emb_dim < 2) throw ConfigError("emb_dim must be >= 2");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("cl_dropout must be in [0, 1)");
  }
};

// Shared value network over (scalar value, feature-identity embedding):
// a two-layer MLP on [x_ij ; e_j] producing a d-dimensional vector. Column
// embeddings are the L2-normalized mean of per-scalar embeddings, so the
// column and single-scalar pathways share one parameter set.
struct EncoderState {
  EncoderConfig cfg;
  std::size_t n_features = 0;
  nn::ParameterSet params;

  std::size_t emb_dim() const { return cfg.emb_dim; }
};

EncoderState init_encoder(const EncoderConfig& cfg, std::size_t n_features,
                          std::uint64_t seed);

// Graph fragment: per-scalar embeddings for `values` [R,1] whose rows are
// tagged with identity-embedding rows `id_rows` [R,d].
nn::Graph::Id encode_scalars(nn::Graph& g, EncoderState& enc,
                             nn::Graph::Id values, nn::Graph::Id id_rows,
                             bool train, RngStream* dropout_rng);

// Unit-norm embedding of one feature column view (mean-pooled per-scalar
// embeddings, then normalized). Deterministic: dropout disabled.
std::vector<double> encode_column(const aug::FeatureColumnView& view,
                                  std::size_t feature_index,
                                  EncoderState& enc);

// Eq-style per-sample encoding: one unit vector per feature, row-major
// [m, d]. Deterministic: dropout disabled.
std::vector<double> embed_sample(const std::vector<double>& row,
                                 EncoderState& enc);

// Per-sample embeddings for a whole dataset, row-major [n*m, d] blocks in
// sample-major order. Chunked so large datasets do not build giant graphs.
std::vector<double> embed_dataset(const tab::Dataset& d, EncoderState& enc);

// d x m matrix of unit-norm feature-column embeddings, column-major.
struct FeatureEmbeddingMatrix {
  std::size_t d = 0;
  std::size_t m = 0;
  std::vector<double> colmajor;

  double at(std::size_t row, std::size_t col) const {
    return colmajor[col * d + row];
  }
  std::vector<double> column(std::size_t col) const {
    return std::vector<double>(colmajor.begin() + static_cast<long>(col * d),
                               colmajor.begin() + static_cast<long>((col + 1) * d));
  }
  void validate() const;
};

// Embeds every full (clean) column of a standardized dataset; dropout off.
FeatureEmbeddingMatrix compute_feature_embeddings(const tab::Dataset& d,
                                                  EncoderState& enc);

}  // namespace zayan::cl
