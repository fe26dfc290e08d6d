#include "zayan/gradcheck.hpp"

#include <cmath>

namespace zayan::nn {

GradCheckReport check_gradients(
    const std::function<double(bool compute_grad)>& eval, ParameterSet& params,
    double eps, double rtol) {
  if (!(eps > 0.0)) throw ConfigError("check_gradients: eps must be > 0");
  GradCheckReport report;
  eval(true);
  // Snapshot analytic gradients; the perturbed evaluations below may or may
  // not overwrite the grad slots.
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params.items()) analytic.push_back(p.grad);

  for (std::size_t pi = 0; pi < params.items().size(); ++pi) {
    auto& p = params.items()[pi];
    GradCheckEntry entry;
    entry.name = p.name;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.v[i];
      p.value.v[i] = saved + eps;
      const double f_plus = eval(false);
      p.value.v[i] = saved - eps;
      const double f_minus = eval(false);
      p.value.v[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[pi].v[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err <= rtol;
    report.worst_rel_err = std::max(report.worst_rel_err, entry.max_rel_err);
    report.all_pass = report.all_pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  // Restore analytic gradients for callers that inspect them afterwards.
  for (std::size_t pi = 0; pi < params.items().size(); ++pi)
    params.items()[pi].grad = analytic[pi];
  return report;
}

}  // namespace zayan::nn
