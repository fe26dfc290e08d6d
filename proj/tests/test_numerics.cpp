#include "doctest.h"

#include <cmath>
#include <sstream>

#include "test_support.hpp"
#include "zayan/gradcheck.hpp"
#include "zayan/graph.hpp"
#include "zayan/optim.hpp"
#include "zayan/serialize.hpp"

using namespace zayan;
using namespace zayan::nn;
using test_support::random_tensor;

TEST_CASE("backward of sum of squares yields 2w") {
  ParameterSet ps;
  ps.add("w", Tensor::row({1.0, 2.0, 3.0}));
  Graph g;
  const auto w = g.param(ps.get("w"));
  const auto loss = g.sum_sq(w);
  g.backward(loss);
  CHECK(ps.get("w").grad.v[0] == doctest::Approx(2.0));
  CHECK(ps.get("w").grad.v[1] == doctest::Approx(4.0));
  CHECK(ps.get("w").grad.v[2] == doctest::Approx(6.0));
}

TEST_CASE("parameter not reaching the loss gets zero gradient") {
  ParameterSet ps;
  ps.add("used", Tensor::row({1.5, -0.5}));
  ps.add("unused", Tensor::row({3.0, 4.0}));
  Graph g;
  const auto w = g.param(ps.get("used"));
  g.param(ps.get("unused"));
  g.backward(g.sum_sq(w));
  CHECK(ps.get("unused").grad.v[0] == 0.0);
  CHECK(ps.get("unused").grad.v[1] == 0.0);
  CHECK(ps.get("used").grad.v[0] == doctest::Approx(3.0));
}

TEST_CASE("backward rejects non-scalar losses") {
  ParameterSet ps;
  ps.add("w", Tensor::row({1.0, 2.0}));
  Graph g;
  const auto w = g.param(ps.get("w"));
  CHECK_THROWS_AS(g.backward(g.scale(w, 2.0)), NumericError);
}

TEST_CASE("softmax rows sum to one") {
  RngStream rng(7);
  Graph g;
  const auto x = g.constant(random_tensor(6, 9, rng, 3.0));
  const auto p = g.softmax_rows(x);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) s += g.val(p).at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer norm output has per-row mean 0 and variance 1") {
  RngStream rng(11);
  Graph g;
  const auto x = g.constant(random_tensor(5, 16, rng, 2.5));
  Tensor gain({1, 16});
  gain.fill(1.0);
  Tensor bias({1, 16});
  const auto y = g.layer_norm(x, g.constant(gain), g.constant(bias));
  for (std::size_t r = 0; r < 5; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mu += g.val(y).at(r, c);
    mu /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) {
      const double d = g.val(y).at(r, c) - mu;
      var += d * d;
    }
    var /= 16.0;
    CHECK(std::abs(mu) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("forward is deterministic for identical inputs") {
  auto run = [] {
    RngStream rng(5);
    Graph g;
    const auto x = g.constant(random_tensor(4, 8, rng));
    const auto w = g.constant(random_tensor(8, 3, rng));
    const auto y = g.softmax_rows(g.matmul(g.gelu(x), w));
    return g.val(y).v;
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite forward values raise a numeric error naming the op") {
  Graph g;
  const auto x = g.constant(Tensor::row({1e200, -1e200}));
  CHECK_THROWS_WITH_AS(g.mul(x, x), doctest::Contains("mul"), NumericError);
}

namespace {

double eval_loss(ParameterSet& ps,
                 const std::function<Graph::Id(Graph&, std::vector<Graph::Id>&)>& build,
                 bool compute_grad) {
  Graph g;
  std::vector<Graph::Id> ids;
  ids.reserve(ps.size());
  for (auto& p : ps.items()) ids.push_back(g.param(p));
  const auto loss = build(g, ids);
  if (compute_grad) g.backward(loss);
  return g.val(loss).v[0];
}

// Reduce an op output to a scalar against fixed random weights so the
// incoming gradient is non-uniform.
Graph::Id weighted_sum(Graph& g, Graph::Id out, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor w(g.val(out).dims);
  for (auto& x : w.v) x = rng.normal();
  return g.sum(g.mul(out, g.constant(w)));
}

void check_op(const char* name,
              const std::function<void(RngStream&, ParameterSet&)>& make_params,
              const std::function<Graph::Id(Graph&, std::vector<Graph::Id>&)>& build) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RngStream rng(seed * 977 + 13);
    ParameterSet ps;
    make_params(rng, ps);
    auto eval = [&](bool grad) { return eval_loss(ps, build, grad); };
    const auto report = check_gradients(eval, ps, 1e-4, 1e-3);
    INFO("op " << name << " seed " << seed << " worst " << report.worst_rel_err);
    CHECK(report.all_pass);
  }
}

}  // namespace

TEST_CASE("gradient check passes for a quadratic loss with tight error") {
  ParameterSet ps;
  RngStream rng(3);
  ps.add("w", random_tensor(3, 4, rng));
  auto eval = [&](bool grad) {
    return eval_loss(
        ps, [](Graph& g, std::vector<Graph::Id>& ids) { return g.sum_sq(ids[0]); },
        grad);
  };
  const auto report = check_gradients(eval, ps, 1e-4, 1e-4);
  CHECK(report.all_pass);
  CHECK(report.worst_rel_err < 1e-6);
}

TEST_CASE("gradient check flags a discontinuous loss (known limitation)") {
  // A hard step cannot be matched by central differences; the checker must
  // report the mismatch rather than silently pass. Losses like this are
  // excluded from the library surface.
  ParameterSet ps;
  ps.add("w", Tensor::row({5e-5}));
  auto eval = [&](bool grad) {
    auto& p = ps.get("w");
    if (grad) p.grad.fill(0.0);  // subgradient away from the jump
    return p.value.v[0] > 0.0 ? 1.0 : 0.0;
  };
  const auto report = check_gradients(eval, ps, 1e-4, 1e-3);
  CHECK_FALSE(report.all_pass);
}

TEST_CASE("every differentiable op matches central differences") {
  check_op(
      "add",
      [](RngStream& rng, ParameterSet& ps) {
        ps.add("a", random_tensor(4, 5, rng));
        ps.add("b", random_tensor(4, 5, rng));
      },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.add(ids[0], ids[1]), 1);
      });
  check_op(
      "sub_mul",
      [](RngStream& rng, ParameterSet& ps) {
        ps.add("a", random_tensor(3, 6, rng));
        ps.add("b", random_tensor(3, 6, rng));
      },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.mul(g.sub(ids[0], ids[1]), ids[1]), 2);
      });
  check_op(
      "scale_add_rowvec",
      [](RngStream& rng, ParameterSet& ps) {
        ps.add("a", random_tensor(4, 3, rng));
        ps.add("b", random_tensor(1, 3, rng));
      },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.add_rowvec(g.scale(ids[0], -1.7), ids[1]), 3);
      });
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      check_op(
          "matmul",
          [ta, tb](RngStream& rng, ParameterSet& ps) {
            ps.add("a", ta ? random_tensor(4, 3, rng) : random_tensor(3, 4, rng));
            ps.add("b", tb ? random_tensor(5, 4, rng) : random_tensor(4, 5, rng));
          },
          [ta, tb](Graph& g, std::vector<Graph::Id>& ids) {
            return weighted_sum(g, g.matmul(ids[0], ids[1], ta, tb), 4);
          });
    }
  }
  check_op(
      "gelu",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(4, 7, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.gelu(ids[0]), 5);
      });
  check_op(
      "log_of_softmax",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(3, 5, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.log(g.softmax_rows(ids[0])), 14);
      });
  check_op(
      "dropout",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(5, 6, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        RngStream mask_rng(99);  // same mask on every evaluation
        return weighted_sum(g, g.dropout(ids[0], 0.3, mask_rng, true), 6);
      });
  check_op(
      "layer_norm",
      [](RngStream& rng, ParameterSet& ps) {
        ps.add("a", random_tensor(4, 8, rng));
        ps.add("gain", random_tensor(1, 8, rng));
        ps.add("bias", random_tensor(1, 8, rng));
      },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.layer_norm(ids[0], ids[1], ids[2]), 7);
      });
  check_op(
      "softmax_rows",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(5, 4, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.softmax_rows(ids[0]), 8);
      });
  for (const auto red : {Reduction::Mean, Reduction::Sum}) {
    check_op(
        "cross_entropy",
        [](RngStream& rng, ParameterSet& ps) { ps.add("l", random_tensor(6, 4, rng)); },
        [red](Graph& g, std::vector<Graph::Id>& ids) {
          return g.cross_entropy_logits(ids[0], {0, 1, 2, 3, 1, 2}, red);
        });
  }
  check_op(
      "attention",
      [](RngStream& rng, ParameterSet& ps) {
        ps.add("q", random_tensor(6, 8, rng));
        ps.add("k", random_tensor(6, 8, rng));
        ps.add("v", random_tensor(6, 8, rng));
      },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.multihead_attention(ids[0], ids[1], ids[2], 2, 3, 2), 9);
      });
  check_op(
      "group_mean_rows",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(6, 5, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.group_mean_rows(ids[0], 3), 10);
      });
  check_op(
      "mean_rows_l2norm",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(5, 4, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return weighted_sum(g, g.l2_normalize_rows(g.mean_rows(ids[0])), 11);
      });
  check_op(
      "tile_repeat_slice",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(3, 4, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        const auto t = g.tile_matrix(ids[0], 2);
        const auto r = g.repeat_rows(ids[0], 2);
        return weighted_sum(g, g.concat_rows({g.slice_rows(t, 1, 4), r}), 12);
      });
  check_op(
      "concat_cols_select_row",
      [](RngStream& rng, ParameterSet& ps) {
        ps.add("a", random_tensor(4, 3, rng));
        ps.add("b", random_tensor(4, 2, rng));
      },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        const auto cc = g.concat_cols(ids[0], ids[1]);
        return weighted_sum(g, g.select_row(cc, 2), 13);
      });
  check_op(
      "add_diag_sum_sq",
      [](RngStream& rng, ParameterSet& ps) { ps.add("a", random_tensor(5, 5, rng)); },
      [](Graph& g, std::vector<Graph::Id>& ids) {
        return g.sum_sq(g.add_diag(ids[0], -1.0));
      });
  for (const bool include_pos : {false, true}) {
    check_op(
        "infonce",
        [](RngStream& rng, ParameterSet& ps) { ps.add("s", random_tensor(5, 5, rng)); },
        [include_pos](Graph& g, std::vector<Graph::Id>& ids) {
          return g.infonce_from_sims(ids[0], 0.3, include_pos);
        });
  }
}

TEST_CASE("composite loss through softmax and log matches finite differences") {
  ParameterSet ps;
  RngStream rng(21);
  ps.add("w", random_tensor(4, 3, rng));
  const std::vector<int> labels{0, 2, 1, 0};
  auto build = [&labels](Graph& g, std::vector<Graph::Id>& ids) {
    // negative log-likelihood assembled from explicit softmax + log ops
    const auto logp = g.log(g.softmax_rows(ids[0]));
    Tensor pick(g.val(logp).dims);
    for (std::size_t r = 0; r < labels.size(); ++r)
      pick.at(r, static_cast<std::size_t>(labels[r])) = -1.0;
    return g.sum(g.mul(logp, g.constant(pick)));
  };
  auto eval = [&](bool grad) { return eval_loss(ps, build, grad); };
  const auto report = check_gradients(eval, ps, 1e-4, 1e-3);
  CHECK(report.all_pass);

  // the explicit composition agrees with the fused cross-entropy op
  Graph g;
  const auto w = g.param(ps.get("w"));
  const auto fused = g.cross_entropy_logits(w, labels, Reduction::Sum);
  std::vector<Graph::Id> ids{w};
  Graph g2;
  std::vector<Graph::Id> ids2{g2.param(ps.get("w"))};
  const auto composed = build(g2, ids2);
  CHECK(g.val(fused).v[0] == doctest::Approx(g2.val(composed).v[0]).epsilon(1e-12));
}

TEST_CASE("adamw: zero gradient and zero decay is a fixed point") {
  ParameterSet ps;
  ps.add("w", Tensor::row({1.0, -2.0}));
  OptimizerState opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.0;
  adamw_step(ps, opt);
  CHECK(ps.get("w").value.v[0] == doctest::Approx(1.0));
  CHECK(ps.get("w").value.v[1] == doctest::Approx(-2.0));
}

TEST_CASE("adamw descends on w^2 from w=1") {
  ParameterSet ps;
  ps.add("w", Tensor::row({1.0}));
  OptimizerState opt;
  opt.learning_rate = 0.1;
  Graph g;
  const auto w = g.param(ps.get("w"));
  g.backward(g.sum_sq(w));
  adamw_step(ps, opt);
  CHECK(std::abs(ps.get("w").value.v[0]) < 1.0);
}

TEST_CASE("adamw is deterministic from identical state") {
  auto run = [] {
    ParameterSet ps;
    RngStream rng(17);
    ps.add("w", random_tensor(3, 3, rng));
    OptimizerState opt;
    opt.learning_rate = 0.05;
    opt.weight_decay = 0.01;
    for (int step = 0; step < 5; ++step) {
      Graph g;
      const auto w = g.param(ps.get("w"));
      g.backward(g.sum_sq(g.gelu(w)));
      adamw_step(ps, opt);
    }
    return ps.get("w").value.v;
  };
  CHECK(run() == run());
}

TEST_CASE("parameter checkpoints round-trip exactly") {
  ParameterSet ps;
  RngStream rng(23);
  ps.add("layer.weight", random_tensor(4, 6, rng));
  ps.add("layer.bias", random_tensor(1, 6, rng));
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  save_parameters(ps, buf);
  const auto loaded = load_parameters(buf);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.items()[0].name == "layer.weight");
  CHECK(loaded.items()[0].value.v == ps.items()[0].value.v);
  CHECK(loaded.items()[1].value.dims == ps.items()[1].value.dims);
  CHECK(loaded.items()[1].value.v == ps.items()[1].value.v);
}
