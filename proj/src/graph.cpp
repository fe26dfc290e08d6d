#include "zayan/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace zayan::nn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;
using StrideMap = Eigen::Map<EMat, 0, Eigen::OuterStride<>>;
using CStrideMap = Eigen::Map<const EMat, 0, Eigen::OuterStride<>>;

CMap cmap(const Tensor& t) { return CMap(t.v.data(), t.rows(), t.cols()); }
MMap mmap(Tensor& t) { return MMap(t.v.data(), t.rows(), t.cols()); }

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw NumericError(std::string(op) + ": " + what);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Graph::Id Graph::push(Tensor val, std::vector<Id> parents, const char* op,
                      std::function<void(Graph&, Node&)> back) {
  check_finite(val, op);
  Node n;
  n.val = std::move(val);
  n.parents = std::move(parents);
  n.op = op;
  for (Id p : n.parents) {
    if (nodes_[p].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

void Graph::check_finite(const Tensor& t, const char* op) const {
  if (!t.all_finite())
    throw NumericError(std::string("op ") + op + " produced non-finite values");
}

Tensor& Graph::grad_buf(Id id) { return nodes_[id].grad; }

Graph::Id Graph::constant(Tensor t) {
  return push(std::move(t), {}, "constant", nullptr);
}

Graph::Id Graph::param(Parameter& p) {
  check_finite(p.value, "param");
  Node n;
  n.val = p.value;
  n.op = "param";
  n.needs_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  bound_params_.push_back(&p);
  return static_cast<Id>(nodes_.size()) - 1;
}

Graph::Id Graph::add(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.same_shape(tb), "add", "shape mismatch");
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = ta.v[i] + tb.v[i];
  return push(std::move(out), {a, b}, "add", [a, b](Graph& g, Node& n) {
    for (Id p : {a, b}) {
      if (!g.nodes_[p].needs_grad) continue;
      Tensor& gp = g.grad_buf(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp.v[i] += n.grad.v[i];
    }
  });
}

Graph::Id Graph::sub(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.same_shape(tb), "sub", "shape mismatch");
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = ta.v[i] - tb.v[i];
  return push(std::move(out), {a, b}, "sub", [a, b](Graph& g, Node& n) {
    if (g.nodes_[a].needs_grad) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i];
    }
    if (g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb.v[i] -= n.grad.v[i];
    }
  });
}

Graph::Id Graph::mul(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.same_shape(tb), "mul", "shape mismatch");
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = ta.v[i] * tb.v[i];
  return push(std::move(out), {a, b}, "mul", [a, b](Graph& g, Node& n) {
    const Tensor& va = g.val(a);
    const Tensor& vb = g.val(b);
    if (g.nodes_[a].needs_grad) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i] * vb.v[i];
    }
    if (g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb.v[i] += n.grad.v[i] * va.v[i];
    }
  });
}

Graph::Id Graph::scale(Id a, double c) {
  const Tensor& ta = val(a);
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = ta.v[i] * c;
  return push(std::move(out), {a}, "scale", [a, c](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i] * c;
  });
}

Graph::Id Graph::add_rowvec(Id a, Id rowvec) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(rowvec);
  require(tb.rows() == 1 && tb.cols() == ta.cols(), "add_rowvec",
          "bias must be [1, cols]");
  Tensor out(ta.dims);
  const std::size_t p = ta.cols();
  for (std::size_t r = 0; r < ta.rows(); ++r)
    for (std::size_t c = 0; c < p; ++c)
      out.v[r * p + c] = ta.v[r * p + c] + tb.v[c];
  return push(std::move(out), {a, rowvec}, "add_rowvec",
              [a, rowvec](Graph& g, Node& n) {
                const std::size_t p = n.val.cols();
                const std::size_t rows = n.val.rows();
                if (g.nodes_[a].needs_grad) {
                  Tensor& ga = g.grad_buf(a);
                  for (std::size_t i = 0; i < ga.size(); ++i)
                    ga.v[i] += n.grad.v[i];
                }
                if (g.nodes_[rowvec].needs_grad) {
                  Tensor& gb = g.grad_buf(rowvec);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < p; ++c)
                      gb.v[c] += n.grad.v[r * p + c];
                }
              });
}

Graph::Id Graph::matmul(Id a, Id b, bool trans_a, bool trans_b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  const std::size_t ar = trans_a ? ta.cols() : ta.rows();
  const std::size_t ak = trans_a ? ta.rows() : ta.cols();
  const std::size_t bk = trans_b ? tb.cols() : tb.rows();
  const std::size_t bc = trans_b ? tb.rows() : tb.cols();
  require(ak == bk, "matmul", "inner dimensions disagree");
  Tensor out({ar, bc});
  {
    auto A = cmap(ta);
    auto B = cmap(tb);
    auto C = mmap(out);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return push(std::move(out), {a, b}, "matmul",
              [a, b, trans_a, trans_b](Graph& g, Node& n) {
                auto GC = cmap(n.grad);
                auto A = cmap(g.val(a));
                auto B = cmap(g.val(b));
                if (g.nodes_[a].needs_grad) {
                  auto GA = mmap(g.grad_buf(a));
                  if (!trans_a && !trans_b) GA.noalias() += GC * B.transpose();
                  else if (trans_a && !trans_b) GA.noalias() += B * GC.transpose();
                  else if (!trans_a && trans_b) GA.noalias() += GC * B;
                  else GA.noalias() += B.transpose() * GC.transpose();
                }
                if (g.nodes_[b].needs_grad) {
                  auto GB = mmap(g.grad_buf(b));
                  if (!trans_a && !trans_b) GB.noalias() += A.transpose() * GC;
                  else if (trans_a && !trans_b) GB.noalias() += A * GC;
                  else if (!trans_a && trans_b) GB.noalias() += GC.transpose() * A;
                  else GB.noalias() += GC.transpose() * A.transpose();
                }
              });
}

Graph::Id Graph::gelu(Id a) {
  const Tensor& ta = val(a);
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = ta.v[i];
    out.v[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return push(std::move(out), {a}, "gelu", [a](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const Tensor& va = g.val(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double x = va.v[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      ga.v[i] += n.grad.v[i] * (cdf + x * pdf);
    }
  });
}

Graph::Id Graph::log(Id a) {
  const Tensor& ta = val(a);
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = std::log(ta.v[i]);
  return push(std::move(out), {a}, "log", [a](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const Tensor& va = g.val(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga.v[i] += n.grad.v[i] / va.v[i];
  });
}

Graph::Id Graph::dropout(Id a, double p, RngStream& rng, bool train) {
  if (!train || p <= 0.0) return a;
  require(p < 1.0, "dropout", "p must be < 1");
  const Tensor& ta = val(a);
  const double keep = 1.0 - p;
  auto mask = std::make_shared<std::vector<double>>(ta.size());
  Tensor out(ta.dims);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform01() < keep ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out.v[i] = ta.v[i] * m;
  }
  return push(std::move(out), {a}, "dropout", [a, mask](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga.v[i] += n.grad.v[i] * (*mask)[i];
  });
}

Graph::Id Graph::layer_norm(Id a, Id gain, Id bias, double eps) {
  const Tensor& ta = val(a);
  const Tensor& tg = val(gain);
  const Tensor& tb = val(bias);
  const std::size_t p = ta.cols();
  require(tg.rows() == 1 && tg.cols() == p, "layer_norm", "gain must be [1, cols]");
  require(tb.rows() == 1 && tb.cols() == p, "layer_norm", "bias must be [1, cols]");
  Tensor out(ta.dims);
  auto yhat = std::make_shared<Tensor>(ta.dims);
  auto inv_s = std::make_shared<std::vector<double>>(ta.rows());
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    const double* x = &ta.v[r * p];
    double mu = 0.0;
    for (std::size_t c = 0; c < p; ++c) mu += x[c];
    mu /= static_cast<double>(p);
    double var = 0.0;
    for (std::size_t c = 0; c < p; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(p);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_s)[r] = is;
    for (std::size_t c = 0; c < p; ++c) {
      const double yh = (x[c] - mu) * is;
      yhat->v[r * p + c] = yh;
      out.v[r * p + c] = yh * tg.v[c] + tb.v[c];
    }
  }
  return push(std::move(out), {a, gain, bias}, "layer_norm",
              [a, gain, bias, yhat, inv_s](Graph& g, Node& n) {
                const std::size_t p = n.val.cols();
                const std::size_t rows = n.val.rows();
                const Tensor& tg = g.val(gain);
                const bool need_a = g.nodes_[a].needs_grad;
                const bool need_g = g.nodes_[gain].needs_grad;
                const bool need_b = g.nodes_[bias].needs_grad;
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* go = &n.grad.v[r * p];
                  const double* yh = &yhat->v[r * p];
                  if (need_g || need_b) {
                    Tensor* gg = need_g ? &g.grad_buf(gain) : nullptr;
                    Tensor* gb = need_b ? &g.grad_buf(bias) : nullptr;
                    for (std::size_t c = 0; c < p; ++c) {
                      if (gg) gg->v[c] += go[c] * yh[c];
                      if (gb) gb->v[c] += go[c];
                    }
                  }
                  if (need_a) {
                    double mean_dy = 0.0, mean_dyyh = 0.0;
                    for (std::size_t c = 0; c < p; ++c) {
                      const double dy = go[c] * tg.v[c];
                      mean_dy += dy;
                      mean_dyyh += dy * yh[c];
                    }
                    mean_dy /= static_cast<double>(p);
                    mean_dyyh /= static_cast<double>(p);
                    double* ga = &g.grad_buf(a).v[r * p];
                    const double is = (*inv_s)[r];
                    for (std::size_t c = 0; c < p; ++c) {
                      const double dy = go[c] * tg.v[c];
                      ga[c] += is * (dy - mean_dy - yh[c] * mean_dyyh);
                    }
                  }
                }
              });
}

Graph::Id Graph::softmax_rows(Id a) {
  const Tensor& ta = val(a);
  const std::size_t p = ta.cols();
  Tensor out(ta.dims);
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    const double* x = &ta.v[r * p];
    double mx = x[0];
    for (std::size_t c = 1; c < p; ++c) mx = std::max(mx, x[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < p; ++c) z += std::exp(x[c] - mx);
    for (std::size_t c = 0; c < p; ++c) out.v[r * p + c] = std::exp(x[c] - mx) / z;
  }
  return push(std::move(out), {a}, "softmax_rows", [a](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const std::size_t p = n.val.cols();
    Tensor& ga = g.grad_buf(a);
    for (std::size_t r = 0; r < n.val.rows(); ++r) {
      const double* y = &n.val.v[r * p];
      const double* gy = &n.grad.v[r * p];
      double dot = 0.0;
      for (std::size_t c = 0; c < p; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < p; ++c)
        ga.v[r * p + c] += y[c] * (gy[c] - dot);
    }
  });
}

Graph::Id Graph::cross_entropy_logits(Id logits, const std::vector<int>& labels,
                                      Reduction reduction) {
  const Tensor& tl = val(logits);
  const std::size_t n = tl.rows();
  const std::size_t c = tl.cols();
  require(labels.size() == n, "cross_entropy", "one label per row required");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw DataError("cross_entropy: label out of range [0, C)");
  }
  auto probs = std::make_shared<Tensor>(tl.dims);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = &tl.v[r * c];
    double mx = x[0];
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, x[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(x[k] - mx);
    const double lse = mx + std::log(z);
    total += lse - x[labels[r]];
    for (std::size_t k = 0; k < c; ++k)
      probs->v[r * c + k] = std::exp(x[k] - lse);
  }
  const double red_scale =
      reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
  Tensor out = Tensor::scalar(total * red_scale);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return push(std::move(out), {logits}, "cross_entropy",
              [logits, probs, labels_copy, red_scale](Graph& g, Node& n) {
                if (!g.nodes_[logits].needs_grad) return;
                const double gl = n.grad.v[0] * red_scale;
                const std::size_t c = probs->cols();
                Tensor& gx = g.grad_buf(logits);
                for (std::size_t r = 0; r < probs->rows(); ++r) {
                  for (std::size_t k = 0; k < c; ++k)
                    gx.v[r * c + k] += gl * probs->v[r * c + k];
                  gx.v[r * c + (*labels_copy)[r]] -= gl;
                }
              });
}

Graph::Id Graph::multihead_attention(Id q, Id k, Id v, std::size_t batch,
                                     std::size_t tokens, std::size_t heads) {
  const Tensor& tq = val(q);
  const Tensor& tk = val(k);
  const Tensor& tv = val(v);
  const std::size_t d = tq.cols();
  require(tq.same_shape(tk) && tq.same_shape(tv), "attention", "q/k/v shapes differ");
  require(tq.rows() == batch * tokens, "attention", "rows must equal batch*tokens");
  require(heads >= 1 && d % heads == 0, "attention", "heads must divide width");
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({batch * tokens, d});
  auto attn = std::make_shared<std::vector<double>>(batch * heads * tokens * tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const double* qp = tq.v.data() + b * tokens * d + h * dh;
      const double* kp = tk.v.data() + b * tokens * d + h * dh;
      const double* vp = tv.v.data() + b * tokens * d + h * dh;
      CStrideMap Q(qp, tokens, dh, Eigen::OuterStride<>(static_cast<long>(d)));
      CStrideMap K(kp, tokens, dh, Eigen::OuterStride<>(static_cast<long>(d)));
      CStrideMap V(vp, tokens, dh, Eigen::OuterStride<>(static_cast<long>(d)));
      EMat S = sc * (Q * K.transpose());
      // rowwise softmax
      for (long r = 0; r < S.rows(); ++r) {
        const double mx = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - mx).exp();
        S.row(r) /= S.row(r).sum();
      }
      double* pp = attn->data() + (b * heads + h) * tokens * tokens;
      MMap P(pp, tokens, tokens);
      P = S;
      StrideMap O(out.v.data() + b * tokens * d + h * dh, tokens, dh,
                  Eigen::OuterStride<>(static_cast<long>(d)));
      O.noalias() = S * V;
    }
  }
  return push(std::move(out), {q, k, v}, "attention",
              [q, k, v, batch, tokens, heads, dh, sc, attn](Graph& g, Node& n) {
                const std::size_t d = n.val.cols();
                const bool nq = g.nodes_[q].needs_grad;
                const bool nk = g.nodes_[k].needs_grad;
                const bool nv = g.nodes_[v].needs_grad;
                for (std::size_t b = 0; b < batch; ++b) {
                  for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t base = b * tokens * d + h * dh;
                    const Eigen::OuterStride<> os(static_cast<long>(d));
                    CStrideMap Q(g.val(q).v.data() + base, tokens, dh, os);
                    CStrideMap K(g.val(k).v.data() + base, tokens, dh, os);
                    CStrideMap V(g.val(v).v.data() + base, tokens, dh, os);
                    CStrideMap GO(n.grad.v.data() + base, tokens, dh, os);
                    CMap P(attn->data() + (b * heads + h) * tokens * tokens,
                           tokens, tokens);
                    if (nv) {
                      StrideMap GV(g.grad_buf(v).v.data() + base, tokens, dh, os);
                      GV.noalias() += P.transpose() * GO;
                    }
                    if (nq || nk) {
                      EMat dP = GO * V.transpose();
                      EMat dS(tokens, tokens);
                      for (std::size_t r = 0; r < tokens; ++r) {
                        const double rowdot = (dP.row(r).array() * P.row(r).array()).sum();
                        dS.row(r) = P.row(r).array() * (dP.row(r).array() - rowdot);
                      }
                      if (nq) {
                        StrideMap GQ(g.grad_buf(q).v.data() + base, tokens, dh, os);
                        GQ.noalias() += sc * (dS * K);
                      }
                      if (nk) {
                        StrideMap GK(g.grad_buf(k).v.data() + base, tokens, dh, os);
                        GK.noalias() += sc * (dS.transpose() * Q);
                      }
                    }
                  }
                }
              });
}

Graph::Id Graph::mean_rows(Id a) { return group_mean_rows(a, val(a).rows()); }

Graph::Id Graph::group_mean_rows(Id a, std::size_t group) {
  const Tensor& ta = val(a);
  require(group >= 1 && ta.rows() % group == 0, "group_mean_rows",
          "rows must be a multiple of the group size");
  const std::size_t groups = ta.rows() / group;
  const std::size_t p = ta.cols();
  Tensor out({groups, p});
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t r = 0; r < group; ++r) {
      const double* x = &ta.v[(gi * group + r) * p];
      for (std::size_t c = 0; c < p; ++c) out.v[gi * p + c] += x[c];
    }
    for (std::size_t c = 0; c < p; ++c)
      out.v[gi * p + c] /= static_cast<double>(group);
  }
  return push(std::move(out), {a}, "group_mean_rows",
              [a, group](Graph& g, Node& n) {
                if (!g.nodes_[a].needs_grad) return;
                const std::size_t p = n.val.cols();
                const double inv = 1.0 / static_cast<double>(group);
                Tensor& ga = g.grad_buf(a);
                for (std::size_t r = 0; r < ga.rows(); ++r) {
                  const double* go = &n.grad.v[(r / group) * p];
                  for (std::size_t c = 0; c < p; ++c)
                    ga.v[r * p + c] += go[c] * inv;
                }
              });
}

Graph::Id Graph::l2_normalize_rows(Id a, double eps) {
  const Tensor& ta = val(a);
  const std::size_t p = ta.cols();
  Tensor out(ta.dims);
  auto inv_norm = std::make_shared<std::vector<double>>(ta.rows());
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    const double* x = &ta.v[r * p];
    double q = eps * eps;
    for (std::size_t c = 0; c < p; ++c) q += x[c] * x[c];
    const double inv = 1.0 / std::sqrt(q);
    (*inv_norm)[r] = inv;
    for (std::size_t c = 0; c < p; ++c) out.v[r * p + c] = x[c] * inv;
  }
  return push(std::move(out), {a}, "l2_normalize_rows",
              [a, inv_norm](Graph& g, Node& n) {
                if (!g.nodes_[a].needs_grad) return;
                const std::size_t p = n.val.cols();
                Tensor& ga = g.grad_buf(a);
                for (std::size_t r = 0; r < n.val.rows(); ++r) {
                  const double* y = &n.val.v[r * p];
                  const double* gy = &n.grad.v[r * p];
                  double dot = 0.0;
                  for (std::size_t c = 0; c < p; ++c) dot += y[c] * gy[c];
                  const double inv = (*inv_norm)[r];
                  for (std::size_t c = 0; c < p; ++c)
                    ga.v[r * p + c] += inv * (gy[c] - y[c] * dot);
                }
              });
}

Graph::Id Graph::tile_matrix(Id a, std::size_t reps) {
  const Tensor& ta = val(a);
  const std::size_t m = ta.rows();
  const std::size_t p = ta.cols();
  Tensor out({m * reps, p});
  for (std::size_t r = 0; r < m * reps; ++r)
    std::copy_n(&ta.v[(r % m) * p], p, &out.v[r * p]);
  return push(std::move(out), {a}, "tile_matrix", [a, m](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const std::size_t p = n.val.cols();
    Tensor& ga = g.grad_buf(a);
    for (std::size_t r = 0; r < n.val.rows(); ++r) {
      double* dst = &ga.v[(r % m) * p];
      const double* src = &n.grad.v[r * p];
      for (std::size_t c = 0; c < p; ++c) dst[c] += src[c];
    }
  });
}

Graph::Id Graph::repeat_rows(Id a, std::size_t reps) {
  const Tensor& ta = val(a);
  const std::size_t m = ta.rows();
  const std::size_t p = ta.cols();
  Tensor out({m * reps, p});
  for (std::size_t r = 0; r < m * reps; ++r)
    std::copy_n(&ta.v[(r / reps) * p], p, &out.v[r * p]);
  return push(std::move(out), {a}, "repeat_rows", [a, reps](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const std::size_t p = n.val.cols();
    Tensor& ga = g.grad_buf(a);
    for (std::size_t r = 0; r < n.val.rows(); ++r) {
      double* dst = &ga.v[(r / reps) * p];
      const double* src = &n.grad.v[r * p];
      for (std::size_t c = 0; c < p; ++c) dst[c] += src[c];
    }
  });
}

Graph::Id Graph::slice_rows(Id a, std::size_t offset, std::size_t len) {
  const Tensor& ta = val(a);
  require(offset + len <= ta.rows(), "slice_rows", "slice out of range");
  const std::size_t p = ta.cols();
  Tensor out({len, p});
  std::copy_n(&ta.v[offset * p], len * p, out.v.data());
  return push(std::move(out), {a}, "slice_rows",
              [a, offset](Graph& g, Node& n) {
                if (!g.nodes_[a].needs_grad) return;
                const std::size_t p = n.val.cols();
                Tensor& ga = g.grad_buf(a);
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                  ga.v[offset * p + i] += n.grad.v[i];
              });
}

Graph::Id Graph::concat_rows(const std::vector<Id>& parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t p = val(parts[0]).cols();
  std::size_t rows = 0;
  for (Id id : parts) {
    require(val(id).cols() == p, "concat_rows", "column counts differ");
    rows += val(id).rows();
  }
  Tensor out({rows, p});
  std::size_t off = 0;
  for (Id id : parts) {
    const Tensor& t = val(id);
    std::copy_n(t.v.data(), t.size(), &out.v[off]);
    off += t.size();
  }
  auto parts_copy = std::make_shared<std::vector<Id>>(parts);
  return push(std::move(out), parts, "concat_rows",
              [parts_copy](Graph& g, Node& n) {
                std::size_t off = 0;
                for (Id id : *parts_copy) {
                  const std::size_t sz = g.val(id).size();
                  if (g.nodes_[id].needs_grad) {
                    Tensor& gp = g.grad_buf(id);
                    for (std::size_t i = 0; i < sz; ++i)
                      gp.v[i] += n.grad.v[off + i];
                  }
                  off += sz;
                }
              });
}

Graph::Id Graph::concat_cols(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.rows() == tb.rows(), "concat_cols", "row counts differ");
  const std::size_t pa = ta.cols();
  const std::size_t pb = tb.cols();
  Tensor out({ta.rows(), pa + pb});
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    std::copy_n(&ta.v[r * pa], pa, &out.v[r * (pa + pb)]);
    std::copy_n(&tb.v[r * pb], pb, &out.v[r * (pa + pb) + pa]);
  }
  return push(std::move(out), {a, b}, "concat_cols",
              [a, b, pa, pb](Graph& g, Node& n) {
                const std::size_t p = pa + pb;
                if (g.nodes_[a].needs_grad) {
                  Tensor& ga = g.grad_buf(a);
                  for (std::size_t r = 0; r < ga.rows(); ++r)
                    for (std::size_t c = 0; c < pa; ++c)
                      ga.v[r * pa + c] += n.grad.v[r * p + c];
                }
                if (g.nodes_[b].needs_grad) {
                  Tensor& gb = g.grad_buf(b);
                  for (std::size_t r = 0; r < gb.rows(); ++r)
                    for (std::size_t c = 0; c < pb; ++c)
                      gb.v[r * pb + c] += n.grad.v[r * p + pa + c];
                }
              });
}

Graph::Id Graph::select_row(Id a, std::size_t r) {
  const Tensor& ta = val(a);
  require(r < ta.rows(), "select_row", "row out of range");
  const std::size_t p = ta.cols();
  Tensor out({1, p});
  std::copy_n(&ta.v[r * p], p, out.v.data());
  return push(std::move(out), {a}, "select_row", [a, r](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const std::size_t p = n.val.cols();
    Tensor& ga = g.grad_buf(a);
    for (std::size_t c = 0; c < p; ++c) ga.v[r * p + c] += n.grad.v[c];
  });
}

Graph::Id Graph::add_diag(Id a, double c) {
  const Tensor& ta = val(a);
  require(ta.rows() == ta.cols(), "add_diag", "matrix must be square");
  Tensor out = ta;
  for (std::size_t i = 0; i < ta.rows(); ++i) out.v[i * ta.cols() + i] += c;
  return push(std::move(out), {a}, "add_diag", [a](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i];
  });
}

Graph::Id Graph::sum(Id a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double x : ta.v) s += x;
  return push(Tensor::scalar(s), {a}, "sum", [a](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const double gl = n.grad.v[0];
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += gl;
  });
}

Graph::Id Graph::sum_sq(Id a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double x : ta.v) s += x * x;
  return push(Tensor::scalar(s), {a}, "sum_sq", [a](Graph& g, Node& n) {
    if (!g.nodes_[a].needs_grad) return;
    const double gl = n.grad.v[0];
    const Tensor& va = g.val(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga.v[i] += 2.0 * va.v[i] * gl;
  });
}

Graph::Id Graph::infonce_from_sims(Id sims, double tau, bool include_positive) {
  const Tensor& ts = val(sims);
  const std::size_t m = ts.rows();
  if (m < 2) throw DataError("infonce: at least 2 features required");
  require(ts.cols() == m, "infonce", "similarity matrix must be square");
  if (!(tau > 0.0)) throw ConfigError("infonce: tau must be > 0");
  auto weights = std::make_shared<Tensor>(ts.dims);  // softmax over denominator set
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double* s = &ts.v[j * m];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      if (!include_positive && k == j) continue;
      mx = std::max(mx, s[k] / tau);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (!include_positive && k == j) continue;
      z += std::exp(s[k] / tau - mx);
    }
    const double lse = mx + std::log(z);
    total += lse - s[j] / tau;
    for (std::size_t k = 0; k < m; ++k) {
      if (!include_positive && k == j) {
        weights->v[j * m + k] = 0.0;
        continue;
      }
      weights->v[j * m + k] = std::exp(s[k] / tau - lse);
    }
  }
  return push(Tensor::scalar(total), {sims}, "infonce",
              [sims, tau, weights](Graph& g, Node& n) {
                if (!g.nodes_[sims].needs_grad) return;
                const double gl = n.grad.v[0] / tau;
                const std::size_t m = weights->rows();
                Tensor& gs = g.grad_buf(sims);
                for (std::size_t j = 0; j < m; ++j) {
                  for (std::size_t k = 0; k < m; ++k)
                    gs.v[j * m + k] += gl * weights->v[j * m + k];
                  gs.v[j * m + j] -= gl;
                }
              });
}

void Graph::backward(Id loss) {
  if (!val(loss).is_scalar())
    throw NumericError("backward: loss must be a scalar");
  for (Parameter* p : bound_params_) p->grad.fill(0.0);
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor(n.val.dims);
  }
  if (!nodes_[loss].needs_grad) return;  // loss does not depend on parameters
  nodes_[loss].grad.v[0] = 1.0;
  for (Id i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (!n.grad.all_finite())
      throw NumericError(std::string("non-finite gradient at op ") + n.op);
    if (n.back) n.back(*this, n);
    if (n.bound) {
      for (std::size_t j = 0; j < n.grad.size(); ++j)
        n.bound->grad.v[j] += n.grad.v[j];
    }
  }
}

}  // namespace zayan::nn
