#include "zayan/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "zayan/optim.hpp"
#include "zayan/serialize.hpp"

namespace zayan::zt {

namespace {

constexpr std::uint64_t kInitTag = 0x7a74ull;      // parameter init stream
constexpr std::uint64_t kOrderTag = 0x6f726465ull; // epoch shuffling
constexpr std::uint64_t kDropTag = 0x7464726full;  // dropout stream

nn::Tensor xavier(std::size_t fan_in, std::size_t fan_out, RngStream& rng,
                  double gain = 1.0) {
  nn::Tensor t({fan_in, fan_out});
  const double scale =
      gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}

// Residual output projections start small so the stack is near-identity at
// initialization: token outputs then begin close to z_ij + p_j, the
// preservation term starts near its floor instead of dominating the
// objective, and the classification gradient is useful from the first step.
constexpr double kResidualInitGain = 0.1;

std::string layer_key(std::size_t layer, const char* suffix) {
  return "t.L" + std::to_string(layer) + "." + suffix;
}

struct ForwardNodes {
  nn::Graph::Id ztokens = -1;  // [B*m, d] encoder embeddings (preservation target)
  nn::Graph::Id tokens = -1;   // [B*m, d] transformer outputs
  nn::Graph::Id pooled = -1;   // [B, d]
  nn::Graph::Id logits = -1;   // [B, C]
};

// Assembles the classifier graph for a flat [batch, m] block. When
// `precomputed` is given it is used as the (constant) token input;
// otherwise tokens come from the encoder, with gradients flowing into it
// only in joint fine-tuning mode.
ForwardNodes build_forward(nn::Graph& g, ZayanTState& st, const double* rows,
                           std::size_t batch, bool train, RngStream* drop_rng,
                           const double* precomputed) {
  const std::size_t m = st.m;
  const std::size_t d = st.d;
  ForwardNodes out;

  if (st.cfg.literal_frozen_tokens) {
    nn::Tensor zrow({m, d});
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < d; ++c) zrow.at(j, c) = st.z.at(c, j);
    out.ztokens = g.tile_matrix(g.constant(std::move(zrow)), batch);
  } else if (precomputed != nullptr) {
    nn::Tensor zt({batch * m, d});
    std::copy_n(precomputed, zt.size(), zt.v.data());
    out.ztokens = g.constant(std::move(zt));
  } else {
    nn::Tensor values({batch * m, 1});
    for (std::size_t i = 0; i < batch * m; ++i) values.v[i] = rows[i];
    const bool enc_grads = train && st.cfg.finetune_encoder;
    nn::Graph::Id id_rows;
    if (enc_grads) {
      id_rows = g.tile_matrix(g.param(st.encoder.params.get("enc.feature_embed")), batch);
    } else {
      id_rows = g.tile_matrix(g.constant(st.encoder.params.get("enc.feature_embed").value), batch);
    }
    const auto per_scalar =
        cl::encode_scalars(g, st.encoder, g.constant(std::move(values)), id_rows,
                           enc_grads, enc_grads ? drop_rng : nullptr);
    out.ztokens = g.l2_normalize_rows(per_scalar);
    if (!enc_grads) {
      // freeze: cut the graph so no gradient reaches encoder parameters
      out.ztokens = g.constant(g.val(out.ztokens));
    }
  }

  const auto pos = g.param(st.params.get("t.pos"));
  auto x = g.add(out.ztokens, g.tile_matrix(pos, batch));
  const double p = st.cfg.dropout;
  for (std::size_t layer = 0; layer < st.cfg.num_layers; ++layer) {
    const auto ln1 = g.layer_norm(x, g.param(st.params.get(layer_key(layer, "ln1.g"))),
                                  g.param(st.params.get(layer_key(layer, "ln1.b"))));
    const auto q = g.linear(ln1, g.param(st.params.get(layer_key(layer, "wq"))),
                            g.param(st.params.get(layer_key(layer, "bq"))));
    // no key bias: a constant shift of every key cancels in the softmax
    const auto k = g.matmul(ln1, g.param(st.params.get(layer_key(layer, "wk"))));
    const auto v = g.linear(ln1, g.param(st.params.get(layer_key(layer, "wv"))),
                            g.param(st.params.get(layer_key(layer, "bv"))));
    auto attn = g.multihead_attention(q, k, v, batch, m, st.cfg.nhead);
    attn = g.linear(attn, g.param(st.params.get(layer_key(layer, "wo"))),
                    g.param(st.params.get(layer_key(layer, "bo"))));
    if (train && drop_rng) attn = g.dropout(attn, p, *drop_rng, true);
    x = g.add(x, attn);

    const auto ln2 = g.layer_norm(x, g.param(st.params.get(layer_key(layer, "ln2.g"))),
                                  g.param(st.params.get(layer_key(layer, "ln2.b"))));
    auto ff = g.gelu(g.linear(ln2, g.param(st.params.get(layer_key(layer, "ffn.w1"))),
                              g.param(st.params.get(layer_key(layer, "ffn.b1")))));
    if (train && drop_rng) ff = g.dropout(ff, p, *drop_rng, true);
    ff = g.linear(ff, g.param(st.params.get(layer_key(layer, "ffn.w2"))),
                  g.param(st.params.get(layer_key(layer, "ffn.b2"))));
    if (train && drop_rng) ff = g.dropout(ff, p, *drop_rng, true);
    x = g.add(x, ff);
  }
  out.tokens = x;
  out.pooled = g.group_mean_rows(out.tokens, m);
  auto head = g.gelu(g.linear(out.pooled, g.param(st.params.get("t.head.w1")),
                              g.param(st.params.get("t.head.b1"))));
  if (train && drop_rng) head = g.dropout(head, p, *drop_rng, true);
  out.logits = g.linear(head, g.param(st.params.get("t.head.w2")),
                        g.param(st.params.get("t.head.b2")));
  return out;
}

int argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

std::vector<Prediction> extract_predictions(const nn::Graph& g,
                                            const ForwardNodes& nodes,
                                            std::size_t batch, std::size_t m,
                                            std::size_t d) {
  const auto& logits = g.val(nodes.logits);
  const auto& tokens = g.val(nodes.tokens);
  const auto& pooled = g.val(nodes.pooled);
  const std::size_t c = logits.cols();
  std::vector<Prediction> out(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    Prediction& pred = out[i];
    pred.logits.assign(&logits.v[i * c], &logits.v[(i + 1) * c]);
    pred.probabilities = softmax(pred.logits);
    pred.predicted_class = argmax_lowest(pred.probabilities);
    pred.tokens.assign(&tokens.v[i * m * d], &tokens.v[(i + 1) * m * d]);
    pred.pooled.assign(&pooled.v[i * d], &pooled.v[(i + 1) * d]);
  }
  return out;
}

double percentile_nearest_rank(std::vector<double> v, double pct) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, std::max<std::size_t>(rank, 1) - 1)];
}

}  // namespace

ZayanTState init_zayan_t(const ZayanTConfig& cfg, cl::EncoderState encoder,
                         cl::FeatureEmbeddingMatrix z, std::size_t n_classes) {
  z.validate();
  if (encoder.emb_dim() != z.d)
    throw ConfigError("encoder width and embedding matrix width disagree");
  if (encoder.n_features != z.m)
    throw ConfigError("encoder feature count and embedding matrix disagree");
  if (n_classes < 2) throw ConfigError("classifier needs at least 2 classes");
  cfg.validate(z.d);

  ZayanTState st;
  st.cfg = cfg;
  st.d = z.d;
  st.m = z.m;
  st.n_classes = n_classes;
  st.encoder = std::move(encoder);
  st.z = std::move(z);

  RngStream rng = derive_stream(cfg.seed, kInitTag);
  nn::Tensor pos({st.m, st.d});
  if (cfg.positional_from_z) {
    for (std::size_t j = 0; j < st.m; ++j)
      for (std::size_t c = 0; c < st.d; ++c) pos.at(j, c) = st.z.at(c, j);
  } else {
    for (auto& v : pos.v) v = 0.02 * rng.normal();
  }
  st.params.add("t.pos", std::move(pos));
  for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
    nn::Tensor g1({1, st.d});
    g1.fill(1.0);
    st.params.add(layer_key(layer, "ln1.g"), g1);
    st.params.add(layer_key(layer, "ln1.b"), nn::Tensor({1, st.d}));
    st.params.add(layer_key(layer, "wq"), xavier(st.d, st.d, rng));
    st.params.add(layer_key(layer, "bq"), nn::Tensor({1, st.d}));
    st.params.add(layer_key(layer, "wk"), xavier(st.d, st.d, rng));
    st.params.add(layer_key(layer, "wv"), xavier(st.d, st.d, rng));
    st.params.add(layer_key(layer, "bv"), nn::Tensor({1, st.d}));
    st.params.add(layer_key(layer, "wo"),
                  xavier(st.d, st.d, rng, kResidualInitGain));
    st.params.add(layer_key(layer, "bo"), nn::Tensor({1, st.d}));
    nn::Tensor g2({1, st.d});
    g2.fill(1.0);
    st.params.add(layer_key(layer, "ln2.g"), g2);
    st.params.add(layer_key(layer, "ln2.b"), nn::Tensor({1, st.d}));
    st.params.add(layer_key(layer, "ffn.w1"), xavier(st.d, cfg.ffn_dim, rng));
    st.params.add(layer_key(layer, "ffn.b1"), nn::Tensor({1, cfg.ffn_dim}));
    st.params.add(layer_key(layer, "ffn.w2"),
                  xavier(cfg.ffn_dim, st.d, rng, kResidualInitGain));
    st.params.add(layer_key(layer, "ffn.b2"), nn::Tensor({1, st.d}));
  }
  st.params.add("t.head.w1", xavier(st.d, cfg.ffn_dim, rng));
  st.params.add("t.head.b1", nn::Tensor({1, cfg.ffn_dim}));
  st.params.add("t.head.w2", xavier(cfg.ffn_dim, n_classes, rng));
  st.params.add("t.head.b2", nn::Tensor({1, n_classes}));
  return st;
}

Prediction forward(const std::vector<double>& row, ZayanTState& state) {
  if (row.size() != state.m)
    throw DataError("forward: row length does not match feature count");
  nn::Graph g;
  const auto nodes = build_forward(g, state, row.data(), 1, false, nullptr, nullptr);
  return extract_predictions(g, nodes, 1, state.m, state.d)[0];
}

BatchPredictions predict_batch(const RowMatrix& rows, ZayanTState& state) {
  if (rows.m != state.m)
    throw DataError("predict_batch: row width does not match feature count");
  BatchPredictions out;
  out.items.reserve(rows.n);
  std::vector<double> batch_ms;
  const std::size_t chunk = std::max<std::size_t>(1, state.cfg.batch_size);
  for (std::size_t start = 0; start < rows.n; start += chunk) {
    const std::size_t b = std::min(chunk, rows.n - start);
    Stopwatch watch;
    nn::Graph g;
    const auto nodes = build_forward(g, state, rows.x.data() + start * rows.m, b,
                                     false, nullptr, nullptr);
    auto preds = extract_predictions(g, nodes, b, state.m, state.d);
    batch_ms.push_back(watch.millis());
    for (auto& p : preds) out.items.push_back(std::move(p));
  }
  out.latency.batches = batch_ms.size();
  out.latency.batch_size = chunk;
  double total = 0.0;
  for (double t : batch_ms) total += t;
  out.latency.mean_ms = batch_ms.empty() ? 0.0 : total / static_cast<double>(batch_ms.size());
  out.latency.p50_ms = percentile_nearest_rank(batch_ms, 50.0);
  out.latency.p90_ms = percentile_nearest_rank(batch_ms, 90.0);
  out.latency.p99_ms = percentile_nearest_rank(batch_ms, 99.0);
  return out;
}

double preservation_loss(const std::vector<Prediction>& predictions,
                         const std::vector<std::vector<double>>& zrefs) {
  if (predictions.size() != zrefs.size())
    throw DataError("preservation_loss: batch sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].tokens.size() != zrefs[i].size())
      throw DataError("preservation_loss: token shapes differ");
    for (std::size_t j = 0; j < zrefs[i].size(); ++j) {
      const double diff = zrefs[i][j] - predictions[i].tokens[j];
      total += diff * diff;
    }
  }
  return total;
}

double total_loss(const std::vector<Prediction>& predictions,
                  const std::vector<int>& labels,
                  const std::vector<std::vector<double>>& zrefs, double gamma,
                  nn::Reduction reduction) {
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  if (predictions.size() != labels.size())
    throw DataError("total_loss: one label per prediction required");
  double ce = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i].probabilities;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= p.size())
      throw DataError("total_loss: label out of range [0, C)");
    ce += -std::log(std::max(p[static_cast<std::size_t>(labels[i])], 1e-300));
  }
  double preserve = gamma > 0.0 ? preservation_loss(predictions, zrefs) : 0.0;
  if (reduction == nn::Reduction::Mean) {
    const double n = static_cast<double>(predictions.size());
    ce /= n;
    preserve /= n;
  }
  return ce + gamma * preserve;
}

nn::Graph::Id build_training_loss(nn::Graph& g, ZayanTState& state,
                                  const std::vector<double>& rows,
                                  std::size_t batch,
                                  const std::vector<int>& labels) {
  if (rows.size() != batch * state.m)
    throw DataError("build_training_loss: row block size mismatch");
  ZayanTConfig saved = state.cfg;
  state.cfg.finetune_encoder = true;  // gradients flow into the encoder
  const auto nodes =
      build_forward(g, state, rows.data(), batch, true, nullptr, nullptr);
  state.cfg = saved;
  auto loss = g.cross_entropy_logits(nodes.logits, labels, nn::Reduction::Mean);
  if (state.cfg.gamma > 0.0) {
    const auto preserve = g.sum_sq(g.sub(nodes.tokens, nodes.ztokens));
    loss = g.add(loss, g.scale(preserve, state.cfg.gamma / static_cast<double>(batch)));
  }
  return loss;
}

std::pair<ZayanTState, FinetuneHistory> finetune(const tab::Dataset& d,
                                                 cl::EncoderState encoder,
                                                 cl::FeatureEmbeddingMatrix z,
                                                 const ZayanTConfig& cfg) {
  d.validate();
  if (d.n_features != z.m)
    throw DataError("finetune: dataset width does not match embeddings");
  ZayanTState st = init_zayan_t(cfg, std::move(encoder), std::move(z), d.n_classes());
  FinetuneHistory history;

  // frozen-encoder path: per-sample embeddings are fixed, compute them once
  std::vector<double> cache;
  if (!cfg.finetune_encoder && !cfg.literal_frozen_tokens)
    cache = cl::embed_dataset(d, st.encoder);

  nn::OptimizerState opt_t;
  opt_t.learning_rate = cfg.learning_rate;
  opt_t.weight_decay = cfg.weight_decay;
  nn::OptimizerState opt_enc = opt_t;

  const std::size_t batch = std::min(cfg.batch_size, d.n_rows);
  std::vector<std::size_t> order(d.n_rows);
  for (std::size_t i = 0; i < d.n_rows; ++i) order[i] = i;

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream order_rng = derive_stream(cfg.seed, kOrderTag, epoch);
    order_rng.shuffle(order);
    RngStream drop_rng = derive_stream(cfg.seed, kDropTag, epoch);

    double epoch_ce = 0.0, epoch_preserve = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < d.n_rows; start += batch) {
      const std::size_t b = std::min(batch, d.n_rows - start);
      std::vector<double> rows(b * st.m);
      std::vector<double> ztoks(b * st.m * st.d);
      std::vector<int> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t r = order[start + i];
        std::copy_n(&d.x[r * st.m], st.m, &rows[i * st.m]);
        labels[i] = d.labels[r];
        if (!cache.empty())
          std::copy_n(&cache[r * st.m * st.d], st.m * st.d, &ztoks[i * st.m * st.d]);
      }
      try {
        nn::Graph g;
        const auto nodes =
            build_forward(g, st, rows.data(), b, true, &drop_rng,
                          cache.empty() ? nullptr : ztoks.data());
        const auto ce = g.cross_entropy_logits(nodes.logits, labels, cfg.ce_reduction);
        nn::Graph::Id loss = ce;
        nn::Graph::Id preserve = -1;
        if (cfg.gamma > 0.0) {
          preserve = g.sum_sq(g.sub(nodes.tokens, nodes.ztokens));
          const double scale = cfg.ce_reduction == nn::Reduction::Mean
                                   ? cfg.gamma / static_cast<double>(b)
                                   : cfg.gamma;
          loss = g.add(ce, g.scale(preserve, scale));
        }
        if (!std::isfinite(g.val(loss).v[0])) throw NumericError("non-finite loss");
        g.backward(loss);
        adamw_step(st.params, opt_t);
        if (cfg.finetune_encoder) adamw_step(st.encoder.params, opt_enc);

        const double ce_val = g.val(ce).v[0];
        epoch_ce += (cfg.ce_reduction == nn::Reduction::Mean ? ce_val * static_cast<double>(b)
                                                             : ce_val);
        if (preserve >= 0) epoch_preserve += g.val(preserve).v[0];
        const auto& logits = g.val(nodes.logits);
        for (std::size_t i = 0; i < b; ++i) {
          std::vector<double> lrow(&logits.v[i * st.n_classes],
                                   &logits.v[(i + 1) * st.n_classes]);
          if (argmax_lowest(lrow) == labels[i]) ++correct;
        }
      } catch (const NumericError& e) {
        throw NumericError("finetune epoch " + std::to_string(epoch + 1) + ": " +
                           e.what());
      }
    }

    FinetuneEpochRecord rec;
    rec.epoch = epoch + 1;
    rec.cross_entropy = epoch_ce / static_cast<double>(d.n_rows);
    rec.preservation = epoch_preserve / static_cast<double>(d.n_rows);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(d.n_rows);
    history.epochs.push_back(rec);

    if (cfg.patience > 0) {
      const double total = rec.cross_entropy + cfg.gamma * rec.preservation;
      if (total < best_loss - 1e-12) {
        best_loss = total;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return {std::move(st), std::move(history)};
}

namespace {

constexpr char kModelMagic[4] = {'Z', 'M', 'D', '1'};

nlohmann::json scaler_to_json(const tab::ScalerStats& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  j["stddev"] = s.stddev;
  j["zero_variance"] = std::vector<int>(s.zero_variance.begin(), s.zero_variance.end());
  return j;
}

tab::ScalerStats scaler_from_json(const nlohmann::json& j) {
  tab::ScalerStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  const auto zv = j.at("zero_variance").get<std::vector<int>>();
  s.zero_variance.assign(zv.begin(), zv.end());
  return s;
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& path) {
  const ZayanTState& st = bundle.state;
  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["tool_version"] = bundle.tool_version;
  meta["config_hash"] = bundle.config_hash;
  meta["d"] = st.d;
  meta["m"] = st.m;
  meta["n_classes"] = st.n_classes;
  meta["class_names"] = bundle.class_names;
  meta["feature_names"] = bundle.feature_names;
  meta["scaler"] = scaler_to_json(bundle.scaler);
  meta["encoder"] = {{"emb_dim", st.encoder.cfg.emb_dim},
                     {"hidden_dim", st.encoder.cfg.hidden_dim},
                     {"dropout", st.encoder.cfg.dropout}};
  meta["transformer"] = {{"num_layers", st.cfg.num_layers},
                         {"nhead", st.cfg.nhead},
                         {"ffn_dim", st.cfg.ffn_dim},
                         {"dropout", st.cfg.dropout},
                         {"gamma", st.cfg.gamma},
                         {"batch_size", st.cfg.batch_size},
                         {"literal_frozen_tokens", st.cfg.literal_frozen_tokens}};
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kModelMagic, 4);
  const auto meta_len = static_cast<std::uint64_t>(meta_str.size());
  out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  nn::save_parameters(st.encoder.params, out);
  nn::save_parameters(st.params, out);
  // frozen Z stored as one row per feature
  nn::ParameterSet zset;
  nn::Tensor zt({st.m, st.d});
  for (std::size_t j = 0; j < st.m; ++j)
    for (std::size_t c = 0; c < st.d; ++c) zt.at(j, c) = st.z.at(c, j);
  zset.add("frozen_z", std::move(zt));
  nn::save_parameters(zset, out);
  if (!out) throw DataError("write failed: " + path);
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw DataError("model bundle: bad magic");
  std::uint64_t meta_len = 0;
  in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw DataError("model bundle: truncated metadata");
  const auto meta = nlohmann::json::parse(meta_str);

  ModelBundle bundle;
  bundle.tool_version = meta.at("tool_version").get<std::string>();
  bundle.config_hash = meta.at("config_hash").get<std::string>();
  bundle.class_names = meta.at("class_names").get<std::vector<std::string>>();
  bundle.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
  bundle.scaler = scaler_from_json(meta.at("scaler"));

  ZayanTState& st = bundle.state;
  st.d = meta.at("d").get<std::size_t>();
  st.m = meta.at("m").get<std::size_t>();
  st.n_classes = meta.at("n_classes").get<std::size_t>();
  st.cfg.num_layers = meta.at("transformer").at("num_layers").get<std::size_t>();
  st.cfg.nhead = meta.at("transformer").at("nhead").get<std::size_t>();
  st.cfg.ffn_dim = meta.at("transformer").at("ffn_dim").get<std::size_t>();
  st.cfg.dropout = meta.at("transformer").at("dropout").get<double>();
  st.cfg.gamma = meta.at("transformer").at("gamma").get<double>();
  st.cfg.batch_size = meta.at("transformer").at("batch_size").get<std::size_t>();
  st.cfg.literal_frozen_tokens =
      meta.at("transformer").at("literal_frozen_tokens").get<bool>();

  st.encoder.cfg.emb_dim = meta.at("encoder").at("emb_dim").get<std::size_t>();
  st.encoder.cfg.hidden_dim = meta.at("encoder").at("hidden_dim").get<std::size_t>();
  st.encoder.cfg.dropout = meta.at("encoder").at("dropout").get<double>();
  st.encoder.n_features = st.m;
  st.encoder.params = nn::load_parameters(in);

  st.params = nn::load_parameters(in);
  auto zset = nn::load_parameters(in);
  const auto& zt = zset.get("frozen_z").value;
  st.z.d = st.d;
  st.z.m = st.m;
  st.z.colmajor.resize(st.d * st.m);
  for (std::size_t j = 0; j < st.m; ++j)
    for (std::size_t c = 0; c < st.d; ++c)
      st.z.colmajor[j * st.d + c] = zt.at(j, c);
  return bundle;
}

}  // namespace zayan::zt
