#pragma once

#include <string>
#include <unordered_map>

#include "zayan/params.hpp"

namespace zayan::nn {

// Adam with decoupled weight decay. Moments are keyed by parameter name and
// created lazily on the first step.
struct OptimizerState {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;

  struct Moments {
    Tensor first;
    Tensor second;
  };
  std::unordered_map<std::string, Moments> moments;
};

// One update from the gradients currently stored in `params`.
void adamw_step(ParameterSet& params, OptimizerState& opt);

}  // namespace zayan::nn
