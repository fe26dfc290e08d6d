#pragma once

#include <functional>
#include <vector>

#include "zayan/params.hpp"
#include "zayan/tensor.hpp"

namespace zayan::nn {

enum class Reduction { Mean, Sum };

// Reverse-mode autodiff tape. Node ids are indices into the tape; parents
// always precede children, so the reverse sweep walks the tape backwards.
// Every op validates that its output is finite and throws NumericError
// naming the op otherwise.
class Graph {
 public:
  using Id = int;

  Id constant(Tensor t);
  // Leaf bound to an external parameter; backward() accumulates into p.grad.
  Id param(Parameter& p);

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id add_rowvec(Id a, Id rowvec);  // [n,p] + [1,p]
  Id matmul(Id a, Id b, bool trans_a = false, bool trans_b = false);
  Id linear(Id x, Id w, Id b) { return add_rowvec(matmul(x, w), b); }
  Id gelu(Id a);
  Id log(Id a);
  Id dropout(Id a, double p, RngStream& rng, bool train);
  Id layer_norm(Id a, Id gain, Id bias, double eps = 1e-5);
  Id softmax_rows(Id a);
  Id cross_entropy_logits(Id logits, const std::vector<int>& labels,
                          Reduction reduction);
  // q,k,v: [batch*tokens, width] in sample-major row order.
  Id multihead_attention(Id q, Id k, Id v, std::size_t batch,
                         std::size_t tokens, std::size_t heads);
  Id mean_rows(Id a);                              // [n,p] -> [1,p]
  Id group_mean_rows(Id a, std::size_t group);     // [(G*g),p] -> [G,p]
  Id l2_normalize_rows(Id a, double eps = 1e-12);
  Id tile_matrix(Id a, std::size_t reps);   // row r of out = a[r % m]
  Id repeat_rows(Id a, std::size_t reps);   // row r of out = a[r / reps]
  Id slice_rows(Id a, std::size_t offset, std::size_t len);
  Id concat_rows(const std::vector<Id>& parts);
  Id concat_cols(Id a, Id b);
  Id select_row(Id a, std::size_t r);
  Id add_diag(Id a, double c);  // square matrix + c*I
  Id sum(Id a);                 // -> scalar
  Id sum_sq(Id a);              // sum of squares -> scalar
  // Contrastive loss over a similarity matrix S[m,m] of unit-norm view
  // embeddings: -sum_j log( exp(S_jj/tau) / sum_{k in D_j} exp(S_jk/tau) )
  // where D_j excludes j unless include_positive is set.
  Id infonce_from_sims(Id sims, double tau, bool include_positive = false);

  const Tensor& val(Id id) const { return nodes_[id].val; }
  const Tensor& grad(Id id) const { return nodes_[id].grad; }

  // Reverse sweep from a scalar loss. Zeroes the grads of every parameter
  // bound to this graph first, so unreachable bound parameters end at zero.
  void backward(Id loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::vector<Id> parents;
    std::function<void(Graph&, Node&)> back;
    Parameter* bound = nullptr;
    const char* op = "";
    bool needs_grad = false;
  };

  Id push(Tensor val, std::vector<Id> parents, const char* op,
          std::function<void(Graph&, Node&)> back);
  void check_finite(const Tensor& t, const char* op) const;
  Tensor& grad_buf(Id id);

  std::vector<Node> nodes_;
  std::vector<Parameter*> bound_params_;
};

}  // namespace zayan::nn
