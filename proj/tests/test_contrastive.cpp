#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "zayan/gradcheck.hpp"
#include "zayan/losses.hpp"
#include "zayan/pretrain.hpp"

using namespace zayan;
using namespace zayan::cl;

namespace {

FeatureEmbeddingMatrix matrix_from_columns(
    const std::vector<std::vector<double>>& cols) {
  FeatureEmbeddingMatrix z;
  z.m = cols.size();
  z.d = cols[0].size();
  for (const auto& c : cols)
    z.colmajor.insert(z.colmajor.end(), c.begin(), c.end());
  return z;
}

FeatureEmbeddingMatrix random_unit_columns(std::size_t d, std::size_t m,
                                           RngStream& rng) {
  FeatureEmbeddingMatrix z;
  z.d = d;
  z.m = m;
  z.colmajor.resize(d * m);
  for (std::size_t j = 0; j < m; ++j) {
    double q = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      const double v = rng.normal();
      z.colmajor[j * d + r] = v;
      q += v * v;
    }
    const double inv = 1.0 / std::sqrt(q);
    for (std::size_t r = 0; r < d; ++r) z.colmajor[j * d + r] *= inv;
  }
  return z;
}

// Literal double-loop evaluation of the contrastive objective, used as the
// oracle for the optimized implementation.
double infonce_bruteforce(const FeatureEmbeddingMatrix& z1,
                          const FeatureEmbeddingMatrix& z2, double tau) {
  const std::size_t m = z1.m;
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double pos = 0.0;
    for (std::size_t r = 0; r < z1.d; ++r) pos += z1.at(r, j) * z2.at(r, j);
    double denom = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == j) continue;
      double s = 0.0;
      for (std::size_t r = 0; r < z1.d; ++r) s += z1.at(r, j) * z2.at(r, k);
      denom += std::exp(s / tau);
    }
    total += -std::log(std::exp(pos / tau) / denom);
  }
  return total;
}

// Pairwise squared-cosine sum over distinct columns.
double redundancy_pairwise(const FeatureEmbeddingMatrix& z) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.m; ++i) {
    for (std::size_t j = 0; j < z.m; ++j) {
      if (i == j) continue;
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t r = 0; r < z.d; ++r) {
        dot += z.at(r, i) * z.at(r, j);
        ni += z.at(r, i) * z.at(r, i);
        nj += z.at(r, j) * z.at(r, j);
      }
      const double c = dot / std::sqrt(ni * nj);
      total += c * c;
    }
  }
  return total;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("infonce on orthonormal two-feature views equals -2") {
  const auto z = matrix_from_columns({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(infonce_feature_loss(z, z, 1.0) == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("infonce with three identical columns equals 3 log 2") {
  const double inv = 1.0 / std::sqrt(3.0);
  const auto z = matrix_from_columns(
      {{inv, inv, inv}, {inv, inv, inv}, {inv, inv, inv}});
  CHECK(infonce_feature_loss(z, z, 1.0) ==
        doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("infonce matches the double-loop oracle on random views") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RngStream rng(seed * 131);
    const auto z1 = random_unit_columns(8, 5, rng);
    const auto z2 = random_unit_columns(8, 5, rng);
    for (double tau : {0.05, 0.16, 1.0}) {
      const double fast = infonce_feature_loss(z1, z2, tau);
      const double slow = infonce_bruteforce(z1, z2, tau);
      CHECK(fast == doctest::Approx(slow).epsilon(1e-10));
    }
  }
}

TEST_CASE("infonce rejects degenerate inputs") {
  RngStream rng(3);
  const auto z1 = random_unit_columns(4, 1, rng);
  CHECK_THROWS_AS(infonce_feature_loss(z1, z1, 1.0), DataError);
  const auto z2 = random_unit_columns(4, 3, rng);
  CHECK_THROWS_AS(infonce_feature_loss(z2, z2, 0.0), ConfigError);
}

TEST_CASE("redundancy penalty closed forms") {
  SUBCASE("orthonormal columns give zero") {
    const auto z = matrix_from_columns({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}});
    CHECK(redundancy_penalty(z) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("two identical unit columns give 2") {
    const auto z = matrix_from_columns({{1.0, 0.0}, {1.0, 0.0}});
    CHECK(redundancy_penalty(z) == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("Frobenius form equals the pairwise cosine sum for unit columns") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RngStream rng(seed * 37);
    const std::size_t m = 2 + rng.uniform_index(19);
    const std::size_t d = 2 + rng.uniform_index(31);
    const auto z = random_unit_columns(d, m, rng);
    CHECK(redundancy_penalty(z) ==
          doctest::Approx(redundancy_pairwise(z)).epsilon(1e-9));
  }
  RngStream rng(99);
  const auto z6 = random_unit_columns(8, 6, rng);
  CHECK(redundancy_penalty(z6) ==
        doctest::Approx(redundancy_pairwise(z6)).epsilon(1e-10));
}

TEST_CASE("mi lower bound formula") {
  CHECK(mi_lower_bound(-2.0, 2) == doctest::Approx(std::log(2.0) + 2.0));
  CHECK(mi_lower_bound(std::log(5.0), 5) == doctest::Approx(0.0));
}

TEST_CASE("infonce gradients through normalization pass the checker") {
  for (double tau : {0.05, 0.16, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      nn::ParameterSet ps;
      RngStream rng(seed * 17 + static_cast<std::uint64_t>(tau * 100));
      ps.add("z1", test_support::random_tensor(5, 8, rng));
      ps.add("z2", test_support::random_tensor(5, 8, rng));
      auto eval = [&](bool grad) {
        nn::Graph g;
        const auto z1 = g.l2_normalize_rows(g.param(ps.get("z1")));
        const auto z2 = g.l2_normalize_rows(g.param(ps.get("z2")));
        const auto loss =
            g.infonce_from_sims(g.matmul(z1, z2, false, true), tau, false);
        if (grad) g.backward(loss);
        return g.val(loss).v[0];
      };
      const auto report = nn::check_gradients(eval, ps, 1e-4, 1e-3);
      INFO("tau " << tau << " seed " << seed << " worst " << report.worst_rel_err);
      CHECK(report.all_pass);
    }
  }
}

TEST_CASE("graph infonce agrees with the direct implementation") {
  RngStream rng(7);
  const auto z1 = random_unit_columns(6, 4, rng);
  const auto z2 = random_unit_columns(6, 4, rng);
  nn::Graph g;
  nn::Tensor t1({4, 6}), t2({4, 6});  // row-per-feature layout
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t r = 0; r < 6; ++r) {
      t1.at(j, r) = z1.at(r, j);
      t2.at(j, r) = z2.at(r, j);
    }
  const auto sims = g.matmul(g.constant(t1), g.constant(t2), false, true);
  const auto loss = g.infonce_from_sims(sims, 0.16, false);
  CHECK(g.val(loss).v[0] ==
        doctest::Approx(infonce_feature_loss(z1, z2, 0.16)).epsilon(1e-10));
}

TEST_CASE("encode_column returns unit vectors deterministically") {
  EncoderConfig cfg;
  cfg.emb_dim = 16;
  cfg.hidden_dim = 32;
  auto enc = init_encoder(cfg, 5, 11);
  aug::FeatureColumnView view;
  RngStream rng(5);
  view.values = test_support::random_vector(40, rng);
  view.mask_indicator.assign(40, false);

  const auto z = encode_column(view, 2, enc);
  REQUIRE(z.size() == 16);
  double norm = 0.0;
  for (double v : z) norm += v * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
  CHECK(encode_column(view, 2, enc) == z);
  CHECK_THROWS_AS(encode_column(view, 9, enc), DataError);
}

TEST_CASE("value network separates constant-zero and constant-one views") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    EncoderConfig cfg;
    cfg.emb_dim = 8;
    cfg.hidden_dim = 16;
    auto enc = init_encoder(cfg, 3, seed);
    aug::FeatureColumnView zeros, ones;
    zeros.values.assign(16, 0.0);
    zeros.mask_indicator.assign(16, false);
    ones.values.assign(16, 1.0);
    ones.mask_indicator.assign(16, false);
    const auto za = encode_column(zeros, 0, enc);
    const auto zb = encode_column(ones, 0, enc);
    CHECK(cosine(za, zb) < 1.0 - 1e-7);
  }
}

TEST_CASE("embed_sample yields one unit vector per feature") {
  EncoderConfig cfg;
  cfg.emb_dim = 12;
  cfg.hidden_dim = 24;
  auto enc = init_encoder(cfg, 6, 3);
  RngStream rng(9);
  const auto row = test_support::random_vector(6, rng);
  const auto z = embed_sample(row, enc);
  REQUIRE(z.size() == 6 * 12);
  for (std::size_t j = 0; j < 6; ++j) {
    double norm = 0.0;
    for (std::size_t c = 0; c < 12; ++c) norm += z[j * 12 + c] * z[j * 12 + c];
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
  }
  CHECK(embed_sample(row, enc) == z);
  CHECK_THROWS_AS(embed_sample({1.0, 2.0}, enc), DataError);
}

TEST_CASE("embed_sample agrees with encode_column on single-element views") {
  EncoderConfig cfg;
  cfg.emb_dim = 10;
  cfg.hidden_dim = 20;
  auto enc = init_encoder(cfg, 4, 21);
  const std::vector<double> row{0.3, -1.2, 0.0, 2.5};
  const auto z = embed_sample(row, enc);
  for (std::size_t j = 0; j < 4; ++j) {
    aug::FeatureColumnView view;
    view.values = {row[j]};
    view.mask_indicator = {false};
    const auto zj = encode_column(view, j, enc);
    for (std::size_t c = 0; c < 10; ++c)
      CHECK(zj[c] == doctest::Approx(z[j * 10 + c]).epsilon(1e-12));
  }
}

TEST_CASE("permuting features permutes Z and leaves the losses unchanged") {
  // Feature identity (not column position) must drive both the identity
  // embedding and the per-feature view randomness.
  const auto d = tab::make_synthetic(60, 6, 2, 3, 0.1, 5);
  const auto [std_d, stats] = tab::standardize(d);
  EncoderConfig ecfg;
  ecfg.emb_dim = 8;
  ecfg.hidden_dim = 16;
  auto enc = init_encoder(ecfg, 6, 77);

  aug::AugmentConfig acfg;
  acfg.sigma = 0.1;
  acfg.mask_prob = 0.1;
  std::vector<aug::FeatureColumnView> v1(6), v2(6);
  for (std::size_t j = 0; j < 6; ++j) {
    RngStream rng = derive_stream(123, 0xA, j);
    std::tie(v1[j], v2[j]) = aug::augment_views(std_d.column(j), acfg, rng);
  }
  auto encode_all = [&](const std::vector<std::size_t>& order) {
    std::vector<std::vector<double>> c1, c2;
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      c1.push_back(encode_column(v1[order[slot]], order[slot], enc));
      c2.push_back(encode_column(v2[order[slot]], order[slot], enc));
    }
    return std::make_pair(matrix_from_columns(c1), matrix_from_columns(c2));
  };

  const std::vector<std::size_t> identity{0, 1, 2, 3, 4, 5};
  const std::vector<std::size_t> perm{4, 2, 5, 0, 3, 1};
  const auto [z1, z2] = encode_all(identity);
  const auto [p1, p2] = encode_all(perm);

  for (std::size_t slot = 0; slot < perm.size(); ++slot)
    for (std::size_t r = 0; r < z1.d; ++r)
      CHECK(p1.at(r, slot) == doctest::Approx(z1.at(r, perm[slot])).epsilon(1e-12));

  CHECK(infonce_feature_loss(p1, p2, 0.2) ==
        doctest::Approx(infonce_feature_loss(z1, z2, 0.2)).epsilon(1e-9));
  CHECK(redundancy_penalty(p1) ==
        doctest::Approx(redundancy_penalty(z1)).epsilon(1e-9));
}

TEST_CASE("pretrain validates its configuration") {
  PretrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.epochs = 10;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.tau = 0.160;  // published Urban values transcribe directly
  cfg.lambda = 0.304;
  cfg.encoder.emb_dim = 128;
  cfg.encoder.hidden_dim = 512;
  cfg.augment.sigma = 0.0866;
  cfg.augment.mask_prob = 0.215;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("pretrain is deterministic and its loss decreases on synthetic data") {
  const auto d = tab::make_synthetic(160, 8, 2, 4, 0.05, 13);
  const auto [std_d, stats] = tab::standardize(d);
  PretrainConfig cfg;
  cfg.epochs = 60;
  cfg.tau = 0.2;
  cfg.lambda = 1.0;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 64;
  cfg.encoder.emb_dim = 16;
  cfg.encoder.hidden_dim = 32;
  cfg.encoder.dropout = 0.05;
  cfg.seed = 5;

  const auto run1 = pretrain(std_d, cfg);
  const auto run2 = pretrain(std_d, cfg);
  CHECK(run1.z.colmajor == run2.z.colmajor);
  REQUIRE(run1.history.epochs.size() == 60);

  const auto& first = run1.history.epochs.front();
  const auto& last = run1.history.epochs.back();
  const double first_total = first.infonce + cfg.lambda * first.redundancy;
  const double last_total = last.infonce + cfg.lambda * last.redundancy;
  CHECK(last_total < first_total);
}

TEST_CASE("MI lower bound trends upward over training (5-seed median)") {
  std::vector<double> gains;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = tab::make_synthetic(160, 8, 2, 4, 0.05, seed + 40);
    const auto [std_d, stats] = tab::standardize(d);
    PretrainConfig cfg;
    cfg.epochs = 60;
    cfg.tau = 0.2;
    cfg.lambda = 1.0;
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 64;
    cfg.encoder.emb_dim = 16;
    cfg.encoder.hidden_dim = 32;
    cfg.encoder.dropout = 0.05;
    cfg.seed = seed * 7;
    const auto run = pretrain(std_d, cfg);
    gains.push_back(run.history.epochs.back().mi_bound -
                    run.history.epochs.front().mi_bound);
  }
  std::sort(gains.begin(), gains.end());
  CHECK(gains[2] > 0.0);
}

TEST_CASE("penalty-only optimization drives the Gram off-diagonal below 0.05") {
  const auto d = tab::make_synthetic(200, 8, 2, 4, 0.1, 23);
  const auto [std_d, stats] = tab::standardize(d);
  PretrainConfig cfg;
  cfg.epochs = 500;
  cfg.use_contrastive = false;
  cfg.lambda = 1.0;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 64;
  cfg.encoder.emb_dim = 16;  // m <= d
  cfg.encoder.hidden_dim = 32;
  cfg.encoder.dropout = 0.0;
  cfg.seed = 31;
  const auto run = pretrain(std_d, cfg);
  const auto stats_final = gram_offdiagonal_stats(run.z);
  CHECK(stats_final.offdiag_abs_mean < 0.05);
}

TEST_CASE("redundancy drops by half on grouped synthetic data (5-seed median)") {
  std::vector<double> reductions;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = tab::make_synthetic(200, 12, 2, 3, 0.05, seed);
    const auto [std_d, stats] = tab::standardize(d);
    PretrainConfig cfg;
    cfg.epochs = 150;
    cfg.tau = 0.2;
    cfg.lambda = 1.0;
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 64;
    cfg.encoder.emb_dim = 16;
    cfg.encoder.hidden_dim = 32;
    cfg.encoder.dropout = 0.05;
    cfg.seed = seed * 101;
    const auto run = pretrain(std_d, cfg);
    const double before = run.history.initial_gram_offdiag_abs_mean;
    const double after = gram_offdiagonal_stats(run.z).offdiag_abs_mean;
    reductions.push_back((before - after) / before);
  }
  std::sort(reductions.begin(), reductions.end());
  CHECK(reductions[2] >= 0.5);
}
