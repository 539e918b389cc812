#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "reid/params.hpp"
#include "reid/tensor.hpp"

namespace reid {

using LossFn = std::function<double(const ParamStore&)>;

// Central finite differences (f(p+eps) - f(p-eps)) / (2 eps) per element of
// every parameter. loss_fn must be pure; non-finite loss values throw
// NumericError.
std::map<std::string, Tensor> finite_diff_grad(const LossFn& loss_fn, const ParamStore& params,
                                               double eps);

struct GradCheckReport {
  std::string path;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Relative error with a magnitude floor so true-zero gradients compare clean.
double grad_rel_error(double analytic, double numeric);

// Compares analytic gradients against finite differences for each parameter.
std::vector<GradCheckReport> check_gradients(
    const LossFn& loss_fn, const std::map<std::string, Tensor>& analytic,
    const ParamStore& params, double eps = 1e-5, double tol = 1e-4);

}  // namespace reid
