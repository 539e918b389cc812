#include "reid/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace reid {

std::map<std::string, Tensor> finite_diff_grad(const LossFn& loss_fn, const ParamStore& params,
                                               double eps) {
  if (eps <= 0.0) throw ContractError("finite_diff_grad: eps must be positive");
  std::map<std::string, Tensor> grads;
  ParamStore work = params;
  for (const auto& [path, tensor] : params) {
    Tensor g(tensor.shape());
    Tensor& wt = work.at(path);
    for (int i = 0; i < tensor.size(); ++i) {
      const double orig = wt[i];
      wt[i] = orig + eps;
      const double fp = loss_fn(work);
      wt[i] = orig - eps;
      const double fm = loss_fn(work);
      wt[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_diff_grad: non-finite loss at " + path + "[" +
                           std::to_string(i) + "]");
      g[i] = (fp - fm) / (2.0 * eps);
    }
    grads.emplace(path, std::move(g));
  }
  return grads;
}

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
  return std::fabs(analytic - numeric) / denom;
}

std::vector<GradCheckReport> check_gradients(const LossFn& loss_fn,
                                             const std::map<std::string, Tensor>& analytic,
                                             const ParamStore& params, double eps, double tol) {
  auto numeric = finite_diff_grad(loss_fn, params, eps);
  std::vector<GradCheckReport> reports;
  for (const auto& [path, num] : numeric) {
    GradCheckReport r;
    r.path = path;
    auto it = analytic.find(path);
    if (it == analytic.end()) {
      // Absent analytic gradient means "zero"; the numeric one must agree.
      for (int i = 0; i < num.size(); ++i)
        r.max_rel_error = std::max(r.max_rel_error, grad_rel_error(0.0, num[i]));
    } else {
      const Tensor& an = it->second;
      if (!an.same_shape(num)) throw ShapeError("check_gradients: grad shape mismatch at " + path);
      for (int i = 0; i < num.size(); ++i)
        r.max_rel_error = std::max(r.max_rel_error, grad_rel_error(an[i], num[i]));
    }
    r.pass = r.max_rel_error < tol;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace reid
