#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "zayan/gradcheck.hpp"
#include "zayan/model.hpp"
#include "zayan/pretrain.hpp"

using namespace zayan;
using namespace zayan::zt;
using test_support::TempDir;

namespace {

// tiny pretrained pipeline shared by the tests below
struct Fixture {
  tab::Dataset data;
  tab::ScalerStats scaler;
  cl::PretrainResult pre;

  explicit Fixture(std::size_t n = 64, std::size_t m = 5, std::size_t classes = 2,
                   std::uint64_t seed = 7, std::size_t emb_dim = 8) {
    auto raw = tab::make_synthetic(n, m, classes, std::max<std::size_t>(m / 2, 1),
                                   0.2, seed);
    auto [std_d, stats] = tab::standardize(raw);
    data = std::move(std_d);
    scaler = std::move(stats);
    cl::PretrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.encoder.emb_dim = emb_dim;
    cfg.encoder.hidden_dim = 16;
    cfg.encoder.dropout = 0.0;
    cfg.seed = seed;
    pre = cl::pretrain(data, cfg);
  }

  ZayanTConfig tiny_config() const {
    ZayanTConfig cfg;
    cfg.num_layers = 1;
    cfg.nhead = 2;
    cfg.ffn_dim = 16;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.dropout = 0.0;
    cfg.gamma = 0.3;
    cfg.learning_rate = 3e-3;
    cfg.seed = 3;
    return cfg;
  }
};

}  // namespace

TEST_CASE("forward emits a probability simplex and retained tokens") {
  Fixture fx;
  auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, fx.tiny_config());
  const auto pred = forward(fx.data.row(0), st);
  REQUIRE(pred.probabilities.size() == fx.data.n_classes());
  double sum = 0.0;
  for (double p : pred.probabilities) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(pred.tokens.size() == st.m * st.d);
  CHECK(pred.predicted_class ==
        static_cast<int>(std::max_element(pred.probabilities.begin(),
                                          pred.probabilities.end()) -
                         pred.probabilities.begin()));
  CHECK_THROWS_AS(forward({1.0, 2.0}, st), DataError);
}

TEST_CASE("mean pooling of retained tokens reproduces the pooled representation") {
  Fixture fx;
  auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, fx.tiny_config());
  const auto a = forward(fx.data.row(3), st);
  const auto b = forward(fx.data.row(3), st);
  CHECK(a.logits == b.logits);
  REQUIRE(a.pooled.size() == st.d);
  for (std::size_t c = 0; c < st.d; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < st.m; ++j) mean += a.tokens[j * st.d + c];
    mean /= static_cast<double>(st.m);
    CHECK(a.pooled[c] == doctest::Approx(mean).epsilon(1e-9));
  }
}

TEST_CASE("single-feature input pools to the lone token") {
  // m = 1 degenerates mean pooling to the identity over one token.
  cl::EncoderConfig ecfg;
  ecfg.emb_dim = 8;
  ecfg.hidden_dim = 16;
  auto enc = cl::init_encoder(ecfg, 1, 5);
  cl::FeatureEmbeddingMatrix z;
  z.d = 8;
  z.m = 1;
  z.colmajor.assign(8, 0.0);
  z.colmajor[0] = 1.0;
  ZayanTConfig cfg;
  cfg.num_layers = 1;
  cfg.nhead = 2;
  cfg.ffn_dim = 8;
  cfg.dropout = 0.0;
  auto st = init_zayan_t(cfg, std::move(enc), std::move(z), 2);
  const auto pred = forward({0.5}, st);
  REQUIRE(pred.tokens.size() == 8);
  CHECK(pred.pooled == pred.tokens);  // pooling over one token is the identity
  CHECK(pred.logits.size() == 2);
}

TEST_CASE("permuting features with their embeddings leaves outputs unchanged") {
  Fixture fx(48, 6, 2, 11);
  auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, fx.tiny_config());

  RngStream perm_rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> perm(st.m);
    std::iota(perm.begin(), perm.end(), 0);
    perm_rng.shuffle(perm);

    ZayanTState permuted = st;
    auto& id = permuted.encoder.params.get("enc.feature_embed").value;
    auto& pos = permuted.params.get("t.pos").value;
    const auto& id0 = st.encoder.params.get("enc.feature_embed").value;
    const auto& pos0 = st.params.get("t.pos").value;
    for (std::size_t slot = 0; slot < st.m; ++slot) {
      for (std::size_t c = 0; c < st.d; ++c) {
        id.at(slot, c) = id0.at(perm[slot], c);
        pos.at(slot, c) = pos0.at(perm[slot], c);
        permuted.z.colmajor[slot * st.d + c] = st.z.at(c, perm[slot]);
      }
    }

    const auto row = fx.data.row(trial + 2);
    std::vector<double> prow(st.m);
    for (std::size_t slot = 0; slot < st.m; ++slot) prow[slot] = row[perm[slot]];

    const auto base = forward(row, st);
    const auto perm_pred = forward(prow, permuted);
    for (std::size_t c = 0; c < base.logits.size(); ++c)
      CHECK(perm_pred.logits[c] == doctest::Approx(base.logits[c]).epsilon(1e-9));
    // tokens permute along with the features
    for (std::size_t slot = 0; slot < st.m; ++slot)
      for (std::size_t c = 0; c < st.d; ++c)
        CHECK(perm_pred.tokens[slot * st.d + c] ==
              doctest::Approx(base.tokens[perm[slot] * st.d + c]).epsilon(1e-9));
  }
}

TEST_CASE("preservation loss closed forms and brute-force agreement") {
  SUBCASE("identical tokens give zero") {
    Prediction p;
    p.tokens = {0.25, -1.0, 3.0};
    CHECK(preservation_loss({p}, {{0.25, -1.0, 3.0}}) == doctest::Approx(0.0));
  }
  SUBCASE("orthogonal unit pair gives 2") {
    Prediction p;
    p.tokens = {0.0, 1.0};
    CHECK(preservation_loss({p}, {{1.0, 0.0}}) == doctest::Approx(2.0));
  }
  SUBCASE("random batch matches the triple loop") {
    RngStream rng(31);
    std::vector<Prediction> preds(4);
    std::vector<std::vector<double>> zrefs(4);
    double expected = 0.0;
    for (auto i = 0; i < 4; ++i) {
      preds[i].tokens = test_support::random_vector(3 * 5, rng);
      zrefs[i] = test_support::random_vector(3 * 5, rng);
      for (std::size_t j = 0; j < 15; ++j) {
        const double diff = zrefs[i][j] - preds[i].tokens[j];
        expected += diff * diff;
      }
    }
    CHECK(preservation_loss(preds, zrefs) == doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("shape mismatch is rejected") {
    Prediction p;
    p.tokens = {1.0, 2.0};
    CHECK_THROWS_AS(preservation_loss({p}, {{1.0}}), DataError);
  }
}

TEST_CASE("total loss closed forms") {
  Prediction perfect;
  perfect.probabilities = {1.0, 0.0, 0.0};
  perfect.tokens = {};
  CHECK(total_loss({perfect}, {0}, {{}}, 0.0) == doctest::Approx(0.0).epsilon(1e-9));

  Prediction uniform;
  uniform.probabilities = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  uniform.tokens = {};
  CHECK(total_loss({uniform}, {1}, {{}}, 0.0) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-9));

  CHECK_THROWS_AS(total_loss({uniform}, {5}, {{}}, 0.0), DataError);
  CHECK_THROWS_AS(total_loss({uniform}, {0}, {{}}, -1.0), ConfigError);

  // gamma combines the terms under the same reduction
  Prediction p;
  p.probabilities = {0.5, 0.5};
  p.tokens = {0.0, 1.0};
  const double combo = total_loss({p}, {0}, {{1.0, 0.0}}, 0.226);
  CHECK(combo == doctest::Approx(std::log(2.0) + 0.226 * 2.0).epsilon(1e-9));
}

TEST_CASE("gradient check of the full objective on tiny shapes") {
  Fixture fx(12, 4, 3, 19, 8);
  for (double gamma : {0.0, 0.5, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ZayanTConfig cfg;
      cfg.num_layers = 1;
      cfg.nhead = 2;
      cfg.ffn_dim = 8;
      cfg.dropout = 0.0;
      cfg.gamma = gamma;
      cfg.seed = seed;
      auto st = init_zayan_t(cfg, fx.pre.encoder, fx.pre.z, fx.data.n_classes());
      const std::size_t b = 3;
      std::vector<double> rows(b * st.m);
      std::vector<int> labels;
      for (std::size_t i = 0; i < b; ++i) {
        const auto r = fx.data.row(i);
        std::copy(r.begin(), r.end(), rows.begin() + static_cast<long>(i * st.m));
        labels.push_back(fx.data.labels[i]);
      }
      const auto cache = cl::embed_dataset(fx.data, st.encoder);

      auto eval = [&](bool grad) {
        nn::Graph g;
        nn::Tensor ztok({b * st.m, st.d});
        std::copy_n(cache.data(), ztok.size(), ztok.v.data());
        const auto zc = g.constant(std::move(ztok));
        const auto pos = g.param(st.params.get("t.pos"));
        auto x = g.add(zc, g.tile_matrix(pos, b));
        for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
          const std::string lk = "t.L" + std::to_string(layer) + ".";
          const auto ln1 = g.layer_norm(x, g.param(st.params.get(lk + "ln1.g")),
                                        g.param(st.params.get(lk + "ln1.b")));
          const auto q = g.linear(ln1, g.param(st.params.get(lk + "wq")),
                                  g.param(st.params.get(lk + "bq")));
          const auto k = g.matmul(ln1, g.param(st.params.get(lk + "wk")));
          const auto v = g.linear(ln1, g.param(st.params.get(lk + "wv")),
                                  g.param(st.params.get(lk + "bv")));
          auto attn = g.multihead_attention(q, k, v, b, st.m, cfg.nhead);
          attn = g.linear(attn, g.param(st.params.get(lk + "wo")),
                          g.param(st.params.get(lk + "bo")));
          x = g.add(x, attn);
          const auto ln2 = g.layer_norm(x, g.param(st.params.get(lk + "ln2.g")),
                                        g.param(st.params.get(lk + "ln2.b")));
          auto ff = g.gelu(g.linear(ln2, g.param(st.params.get(lk + "ffn.w1")),
                                    g.param(st.params.get(lk + "ffn.b1"))));
          ff = g.linear(ff, g.param(st.params.get(lk + "ffn.w2")),
                        g.param(st.params.get(lk + "ffn.b2")));
          x = g.add(x, ff);
        }
        const auto pooled = g.group_mean_rows(x, st.m);
        auto head = g.gelu(g.linear(pooled, g.param(st.params.get("t.head.w1")),
                                    g.param(st.params.get("t.head.b1"))));
        const auto logits = g.linear(head, g.param(st.params.get("t.head.w2")),
                                     g.param(st.params.get("t.head.b2")));
        auto loss = g.cross_entropy_logits(logits, labels, nn::Reduction::Mean);
        if (gamma > 0.0) {
          const auto preserve = g.sum_sq(g.sub(x, zc));
          loss = g.add(loss, g.scale(preserve, gamma / static_cast<double>(b)));
        }
        if (grad) g.backward(loss);
        return g.val(loss).v[0];
      };
      const auto report = nn::check_gradients(eval, st.params, 1e-4, 1e-3);
      INFO("gamma " << gamma << " seed " << seed << " worst " << report.worst_rel_err);
      CHECK(report.all_pass);
    }
  }
}

TEST_CASE("finetune overfits a tiny separable dataset with gamma 0") {
  auto raw = tab::make_synthetic(32, 4, 2, 2, 0.05, 29);
  auto [std_d, scaler] = tab::standardize(raw);
  cl::PretrainConfig pcfg;
  pcfg.epochs = 15;
  pcfg.encoder.emb_dim = 8;
  pcfg.encoder.hidden_dim = 16;
  pcfg.encoder.dropout = 0.0;
  pcfg.seed = 2;
  const auto pre = cl::pretrain(std_d, pcfg);

  ZayanTConfig cfg;
  cfg.num_layers = 1;
  cfg.nhead = 2;
  cfg.ffn_dim = 16;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.dropout = 0.0;
  cfg.gamma = 0.0;
  cfg.learning_rate = 3e-3;
  cfg.seed = 5;
  auto [st, hist] = finetune(std_d, pre.encoder, pre.z, cfg);
  bool reached = false;
  for (const auto& rec : hist.epochs) reached = reached || rec.train_accuracy == 1.0;
  CHECK(reached);
}

TEST_CASE("frozen encoder parameters are bit-identical after finetuning") {
  Fixture fx;
  ZayanTConfig cfg = fx.tiny_config();
  cfg.finetune_encoder = false;
  const auto before = fx.pre.encoder.params.items();
  auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, cfg);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(st.encoder.params.items()[i].value.v == before[i].value.v);

  SUBCASE("joint fine-tuning does update the encoder") {
    ZayanTConfig joint = fx.tiny_config();
    joint.finetune_encoder = true;
    auto [st2, hist2] = finetune(fx.data, fx.pre.encoder, fx.pre.z, joint);
    bool changed = false;
    for (std::size_t i = 0; i < before.size(); ++i)
      changed = changed || st2.encoder.params.items()[i].value.v != before[i].value.v;
    CHECK(changed);
  }
}

TEST_CASE("a published transformer configuration is accepted") {
  ZayanTConfig cfg;
  cfg.num_layers = 4;
  cfg.nhead = 8;
  cfg.ffn_dim = 512;
  cfg.batch_size = 32;
  cfg.dropout = 0.397;
  cfg.gamma = 0.226;
  CHECK_NOTHROW(cfg.validate(128));
  // heads must divide the width
  CHECK_THROWS_AS(cfg.validate(130), ConfigError);
}

TEST_CASE("predict_batch is deterministic and records latency") {
  Fixture fx;
  auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, fx.tiny_config());
  const auto rows = RowMatrix::from_dataset(fx.data);
  const auto a = predict_batch(rows, st);
  const auto b = predict_batch(rows, st);
  REQUIRE(a.items.size() == fx.data.n_rows);
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    CHECK(a.items[i].probabilities == b.items[i].probabilities);
    CHECK(a.items[i].predicted_class ==
          static_cast<int>(std::max_element(a.items[i].probabilities.begin(),
                                            a.items[i].probabilities.end()) -
                           a.items[i].probabilities.begin()));
  }
  CHECK(a.latency.batches == (fx.data.n_rows + 15) / 16);
  CHECK(a.latency.p50_ms > 0.0);
  CHECK(a.latency.p99_ms >= a.latency.p50_ms);
}

TEST_CASE("large gamma pulls tokens toward the frozen embeddings") {
  Fixture fx(48, 5, 2, 13);
  auto displacement = [&](double gamma) {
    ZayanTConfig cfg = fx.tiny_config();
    cfg.gamma = gamma;
    cfg.epochs = 40;
    auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, cfg);
    const auto cache = cl::embed_dataset(fx.data, st.encoder);
    const auto preds = predict_batch(RowMatrix::from_dataset(fx.data), st);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < preds.items.size(); ++i) {
      for (std::size_t j = 0; j < st.m; ++j) {
        double sq = 0.0;
        for (std::size_t c = 0; c < st.d; ++c) {
          const double diff = preds.items[i].tokens[j * st.d + c] -
                              cache[(i * st.m + j) * st.d + c];
          sq += diff * diff;
        }
        total += std::sqrt(sq);
        ++count;
      }
    }
    return total / static_cast<double>(count);
  };
  CHECK(displacement(1e4) < displacement(0.0));
}

TEST_CASE("model bundles round-trip through disk") {
  TempDir tmp("model");
  Fixture fx;
  auto [st, hist] = finetune(fx.data, fx.pre.encoder, fx.pre.z, fx.tiny_config());
  ModelBundle bundle;
  bundle.state = std::move(st);
  bundle.scaler = fx.scaler;
  bundle.feature_names = fx.data.feature_names;
  bundle.class_names = fx.data.class_names;
  bundle.config_hash = "deadbeefdeadbeef";
  bundle.tool_version = "test";
  const auto path = tmp.file("model.zmdl");
  save_model(bundle, path);
  auto loaded = load_model(path);
  CHECK(loaded.config_hash == bundle.config_hash);
  CHECK(loaded.class_names == bundle.class_names);
  CHECK(loaded.state.z.colmajor == bundle.state.z.colmajor);
  const auto p1 = forward(fx.data.row(1), bundle.state);
  const auto p2 = forward(fx.data.row(1), loaded.state);
  CHECK(p1.probabilities == p2.probabilities);
}
