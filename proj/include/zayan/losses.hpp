#pragma once

#include "zayan/encoder.hpp"

namespace zayan::cl {

// Feature-level contrastive loss between two view embedding matrices
// (d x m, unit-norm columns):
//   -sum_j log( exp(s_jj/tau) / sum_{k != j} exp(s_jk/tau) )
// where s_jk is the cosine similarity of z_j^(1) and z_k^(2). The
// denominator excludes the positive term unless include_positive is set.
double infonce_feature_loss(const FeatureEmbeddingMatrix& z1,
                            const FeatureEmbeddingMatrix& z2, double tau,
                            bool include_positive = false);

// ||Z^T Z - I||_F^2; with unit-norm columns this equals the pairwise sum
// of squared cosine similarities over all distinct column pairs.
double redundancy_penalty(const FeatureEmbeddingMatrix& z);

// Mutual-information lower bound between the two views: log(m) - loss.
double mi_lower_bound(double loss, std::size_t m);

struct GramStats {
  double offdiag_mean = 0.0;      // mean of off-diagonal Gram entries
  double offdiag_abs_mean = 0.0;  // mean of |off-diagonal| Gram entries
};
GramStats gram_offdiagonal_stats(const FeatureEmbeddingMatrix& z);

}  // namespace zayan::cl
