#pragma once

#include <functional>
#include <string>

#include "reid/gradcheck.hpp"
#include "reid/graph_ctx.hpp"
#include "reid/params.hpp"
#include "reid/tensor.hpp"

namespace reid::testing {

inline Tensor random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Moves every parameter (biases included) off its init point so gradient
// checks run at a generic location, away from relu kinks that zero-init
// biases would otherwise pin to exactly zero.
inline void randomize_params(ParamStore& params, uint64_t seed, double amp = 0.2) {
  Rng rng(seed);
  for (auto& [path, t] : params)
    for (int i = 0; i < t.size(); ++i) t[i] += amp * rng.uniform(-1.0, 1.0);
}

// Max relative error between backward() gradients and central differences
// for a scalar-valued graph over the given parameters.
inline double max_gradcheck_error(const std::function<Var(GraphCtx&)>& fwd,
                                  const ParamStore& params, double eps = 1e-6) {
  GraphCtx g(params);
  Var loss = fwd(g);
  loss.backward();
  auto analytic = g.grads();
  auto reports = check_gradients(
      [&](const ParamStore& p) {
        GraphCtx g2(p);
        return fwd(g2).value().item();
      },
      analytic, params, eps);
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.max_rel_error);
  return worst;
}

// Contracts a non-scalar output against fixed random weights so every output
// element participates in the checked scalar.
inline Var contract_with(const Var& out, uint64_t seed) {
  return sum_all(mul(out, Var::constant(random_tensor(out.value().shape(), seed))));
}

}  // namespace reid::testing
