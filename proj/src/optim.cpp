#include "zayan/optim.hpp"

#include <cmath>

namespace zayan::nn {

void adamw_step(ParameterSet& params, OptimizerState& opt) {
  opt.step_count += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
  for (auto& p : params.items()) {
    auto it = opt.moments.find(p.name);
    if (it == opt.moments.end()) {
      OptimizerState::Moments m;
      m.first = Tensor(p.value.dims);
      m.second = Tensor(p.value.dims);
      it = opt.moments.emplace(p.name, std::move(m)).first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    if (!m.same_shape(p.value))
      throw NumericError("optimizer moments shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.v[i];
      m.v[i] = opt.beta1 * m.v[i] + (1.0 - opt.beta1) * g;
      v.v[i] = opt.beta2 * v.v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.value.v[i] -= opt.learning_rate *
                      (mhat / (std::sqrt(vhat) + opt.eps) +
                       opt.weight_decay * p.value.v[i]);
    }
  }
}

}  // namespace zayan::nn
