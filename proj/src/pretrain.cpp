#include "zayan/pretrain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace zayan::cl {

namespace {

constexpr std::uint64_t kRowTag = 0x726f7773ull;   // row subsample stream
constexpr std::uint64_t kAugTag = 0x617567ull;     // per-feature augmentation
constexpr std::uint64_t kDropTag = 0x64726f70ull;  // dropout stream

GramStats gram_stats_from_tensor(const nn::Tensor& gram) {
  GramStats stats;
  const std::size_t m = gram.rows();
  if (m < 2) return stats;
  double sum = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const double g = gram.at(i, j);
      sum += g;
      abs_sum += std::abs(g);
    }
  }
  const double pairs = static_cast<double>(m * (m - 1));
  stats.offdiag_mean = sum / pairs;
  stats.offdiag_abs_mean = abs_sum / pairs;
  return stats;
}

}  // namespace

PretrainResult pretrain(const tab::Dataset& d, const PretrainConfig& cfg) {
  cfg.validate();
  d.validate();
  const std::size_t m = d.n_features;
  if (m < 2) throw DataError("pretrain: at least 2 features required");

  PretrainResult result;
  result.encoder = init_encoder(cfg.encoder, m, cfg.seed);
  EncoderState& enc = result.encoder;

  {
    const auto z0 = compute_feature_embeddings(d, enc);
    const auto stats = gram_offdiagonal_stats(z0);
    result.history.initial_gram_offdiag_mean = stats.offdiag_mean;
    result.history.initial_gram_offdiag_abs_mean = stats.offdiag_abs_mean;
  }

  nn::OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;

  const std::size_t batch = std::min(cfg.batch_size, d.n_rows);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      RngStream row_rng = derive_stream(cfg.seed, kRowTag, epoch);
      const auto rows = row_rng.sample_without_replacement(d.n_rows, batch);

      // Per-feature augmented view pairs on the subsample. Row layout is
      // view-major then feature-major, `batch` consecutive rows per feature.
      nn::Tensor values({2 * m * batch, 1});
      for (std::size_t j = 0; j < m; ++j) {
        std::vector<double> col(batch);
        for (std::size_t r = 0; r < batch; ++r) col[r] = d.at(rows[r], j);
        RngStream aug_rng = derive_stream(cfg.seed, kAugTag, epoch, j);
        const auto [v1, v2] = aug::augment_views(col, cfg.augment, aug_rng);
        for (std::size_t r = 0; r < batch; ++r) {
          values.v[j * batch + r] = v1.values[r];
          values.v[(m + j) * batch + r] = v2.values[r];
        }
      }

      nn::Graph g;
      RngStream drop_rng = derive_stream(cfg.seed, kDropTag, epoch);
      const auto id_rep =
          g.repeat_rows(g.param(enc.params.get("enc.feature_embed")), batch);
      const auto id_rows = g.concat_rows({id_rep, id_rep});
      const auto per_scalar = encode_scalars(g, enc, g.constant(std::move(values)),
                                             id_rows, true, &drop_rng);
      const auto pooled = g.group_mean_rows(per_scalar, batch);  // [2m, d]
      const auto zn = g.l2_normalize_rows(pooled);
      const auto z1 = g.slice_rows(zn, 0, m);
      const auto z2 = g.slice_rows(zn, m, m);

      const auto gram = g.matmul(z1, z1, false, true);
      const auto redundancy = g.sum_sq(g.add_diag(gram, -1.0));

      nn::Graph::Id loss;
      double infonce_value = 0.0;
      if (cfg.use_contrastive) {
        const auto sims = g.matmul(z1, z2, false, true);
        const auto contrastive =
            g.infonce_from_sims(sims, cfg.tau, cfg.include_positive_in_denominator);
        infonce_value = g.val(contrastive).v[0];
        loss = cfg.lambda > 0.0 ? g.add(contrastive, g.scale(redundancy, cfg.lambda))
                                : contrastive;
      } else {
        loss = g.scale(redundancy, cfg.lambda);
      }

      const double loss_value = g.val(loss).v[0];
      if (!std::isfinite(loss_value))
        throw NumericError("non-finite loss");
      g.backward(loss);
      adamw_step(enc.params, opt);

      PretrainEpochRecord rec;
      rec.epoch = epoch + 1;
      rec.infonce = infonce_value;
      rec.redundancy = g.val(redundancy).v[0];
      rec.mi_bound = cfg.use_contrastive
                         ? mi_lower_bound(infonce_value, m)
                         : 0.0;
      const auto stats = gram_stats_from_tensor(g.val(gram));
      rec.gram_offdiag_mean = stats.offdiag_mean;
      rec.gram_offdiag_abs_mean = stats.offdiag_abs_mean;
      result.history.epochs.push_back(rec);
    } catch (const NumericError& e) {
      throw NumericError("pretrain epoch " + std::to_string(epoch + 1) + ": " +
                         e.what());
    }
  }

  result.z = compute_feature_embeddings(d, enc);
  result.z.validate();
  return result;
}

void save_history(const PretrainHistory& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "epoch=0 infonce=nan redundancy=nan mi_bound=nan "
                "gram_offdiag_mean=%.17g gram_offdiag_abs_mean=%.17g\n",
                h.initial_gram_offdiag_mean, h.initial_gram_offdiag_abs_mean);
  out << buf;
  for (const auto& r : h.epochs) {
    std::snprintf(buf, sizeof(buf),
                  "epoch=%zu infonce=%.17g redundancy=%.17g mi_bound=%.17g "
                  "gram_offdiag_mean=%.17g gram_offdiag_abs_mean=%.17g\n",
                  r.epoch, r.infonce, r.redundancy, r.mi_bound,
                  r.gram_offdiag_mean, r.gram_offdiag_abs_mean);
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace zayan::cl
