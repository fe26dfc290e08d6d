#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zayan/params.hpp"

namespace zayan::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst_rel_err = 0.0;
  bool all_pass = true;
};

// eval(compute_grad): returns the scalar loss at the current parameter
// values; when compute_grad is true it must also leave d(loss)/d(param) in
// each parameter's grad slot (typically by running Graph::backward).
// Analytic gradients are compared elementwise against central differences
// (f(x+eps) - f(x-eps)) / (2 eps) with relative error
// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport check_gradients(
    const std::function<double(bool compute_grad)>& eval, ParameterSet& params,
    double eps, double rtol);

}  // namespace zayan::nn
