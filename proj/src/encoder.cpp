#include "zayan/encoder.hpp"

#include <cmath>

namespace zayan::cl {

namespace {

nn::Tensor xavier(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  nn::Tensor t({fan_in, fan_out});
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}

}  // namespace

EncoderState init_encoder(const EncoderConfig& cfg, std::size_t n_features,
                          std::uint64_t seed) {
  cfg.validate();
  if (n_features < 1) throw ConfigError("encoder needs at least one feature");
  EncoderState enc;
  enc.cfg = cfg;
  enc.n_features = n_features;
  RngStream rng = derive_stream(seed, 0x656e63ull /* "enc" */);
  const std::size_t in_dim = 1 + cfg.emb_dim;
  enc.params.add("enc.w1", xavier(in_dim, cfg.hidden_dim, rng));
  enc.params.add("enc.b1", nn::Tensor({1, cfg.hidden_dim}));
  enc.params.add("enc.w2", xavier(cfg.hidden_dim, cfg.emb_dim, rng));
  enc.params.add("enc.b2", nn::Tensor({1, cfg.emb_dim}));
  nn::Tensor ids({n_features, cfg.emb_dim});
  const double id_scale = 1.0 / std::sqrt(static_cast<double>(cfg.emb_dim));
  for (auto& v : ids.v) v = id_scale * rng.normal();
  enc.params.add("enc.feature_embed", std::move(ids));
  return enc;
}

nn::Graph::Id encode_scalars(nn::Graph& g, EncoderState& enc,
                             nn::Graph::Id values, nn::Graph::Id id_rows,
                             bool train, RngStream* dropout_rng) {
  auto& params = enc.params;
  const auto w1 = g.param(params.get("enc.w1"));
  const auto b1 = g.param(params.get("enc.b1"));
  const auto w2 = g.param(params.get("enc.w2"));
  const auto b2 = g.param(params.get("enc.b2"));
  const auto x = g.concat_cols(values, id_rows);
  auto h = g.gelu(g.linear(x, w1, b1));
  if (train && dropout_rng != nullptr)
    h = g.dropout(h, enc.cfg.dropout, *dropout_rng, true);
  return g.linear(h, w2, b2);
}

std::vector<double> encode_column(const aug::FeatureColumnView& view,
                                  std::size_t feature_index, EncoderState& enc) {
  if (feature_index >= enc.n_features)
    throw DataError("encode_column: feature index out of range");
  if (view.values.empty()) throw DataError("encode_column: empty view");
  nn::Graph g;
  const auto values = g.constant(nn::Tensor::column(view.values));
  const auto id_row =
      g.select_row(g.param(enc.params.get("enc.feature_embed")), feature_index);
  const auto id_rows = g.tile_matrix(id_row, view.values.size());
  const auto per_scalar = encode_scalars(g, enc, values, id_rows, false, nullptr);
  const auto z = g.l2_normalize_rows(g.mean_rows(per_scalar));
  return g.val(z).v;
}

std::vector<double> embed_sample(const std::vector<double>& row,
                                 EncoderState& enc) {
  if (row.size() != enc.n_features)
    throw DataError("embed_sample: row length does not match feature count");
  nn::Graph g;
  const auto values = g.constant(nn::Tensor::column(row));
  const auto id_rows = g.param(enc.params.get("enc.feature_embed"));
  const auto per_scalar = encode_scalars(g, enc, values, id_rows, false, nullptr);
  const auto z = g.l2_normalize_rows(per_scalar);
  return g.val(z).v;
}

std::vector<double> embed_dataset(const tab::Dataset& d, EncoderState& enc) {
  if (d.n_features != enc.n_features)
    throw DataError("embed_dataset: dataset width does not match encoder");
  const std::size_t m = d.n_features;
  const std::size_t dd = enc.emb_dim();
  std::vector<double> out(d.n_rows * m * dd);
  const std::size_t chunk = std::max<std::size_t>(1, 8192 / std::max<std::size_t>(m, 1));
  for (std::size_t start = 0; start < d.n_rows; start += chunk) {
    const std::size_t rows = std::min(chunk, d.n_rows - start);
    nn::Graph g;
    nn::Tensor values({rows * m, 1});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < m; ++j)
        values.v[r * m + j] = d.at(start + r, j);
    const auto ids = g.tile_matrix(g.param(enc.params.get("enc.feature_embed")), rows);
    const auto per_scalar =
        encode_scalars(g, enc, g.constant(std::move(values)), ids, false, nullptr);
    const auto z = g.l2_normalize_rows(per_scalar);
    std::copy(g.val(z).v.begin(), g.val(z).v.end(),
              out.begin() + static_cast<long>(start * m * dd));
  }
  return out;
}

void FeatureEmbeddingMatrix::validate() const {
  if (d < 2) throw DataError("embedding matrix: d must be >= 2");
  if (m < 1) throw DataError("embedding matrix: no columns");
  if (colmajor.size() != d * m) throw DataError("embedding matrix: size mismatch");
  for (std::size_t j = 0; j < m; ++j) {
    double q = 0.0;
    for (std::size_t r = 0; r < d; ++r) q += at(r, j) * at(r, j);
    if (std::abs(std::sqrt(q) - 1.0) > 1e-6)
      throw DataError("embedding matrix: column " + std::to_string(j) +
                      " is not unit norm");
  }
}

FeatureEmbeddingMatrix compute_feature_embeddings(const tab::Dataset& d,
                                                  EncoderState& enc) {
  if (d.n_features != enc.n_features)
    throw DataError("dataset width does not match encoder");
  FeatureEmbeddingMatrix z;
  z.d = enc.emb_dim();
  z.m = d.n_features;
  z.colmajor.resize(z.d * z.m);

  // Mean per-scalar embedding over the full column, accumulated in chunks,
  // then normalized. Matches encode_column on the whole column.
  const std::size_t chunk = 8192;
  for (std::size_t j = 0; j < d.n_features; ++j) {
    std::vector<double> acc(z.d, 0.0);
    for (std::size_t start = 0; start < d.n_rows; start += chunk) {
      const std::size_t rows = std::min(chunk, d.n_rows - start);
      nn::Graph g;
      nn::Tensor values({rows, 1});
      for (std::size_t r = 0; r < rows; ++r) values.v[r] = d.at(start + r, j);
      const auto id_row =
          g.select_row(g.param(enc.params.get("enc.feature_embed")), j);
      const auto id_rows = g.tile_matrix(id_row, rows);
      const auto per_scalar =
          encode_scalars(g, enc, g.constant(std::move(values)), id_rows, false, nullptr);
      const auto& vals = g.val(per_scalar);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < z.d; ++c) acc[c] += vals.at(r, c);
    }
    double norm_sq = 1e-24;
    for (std::size_t c = 0; c < z.d; ++c) {
      acc[c] /= static_cast<double>(d.n_rows);
      norm_sq += acc[c] * acc[c];
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t c = 0; c < z.d; ++c) z.colmajor[j * z.d + c] = acc[c] * inv;
  }
  return z;
}

}  // namespace zayan::cl
